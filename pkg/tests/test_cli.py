import subprocess
import sys

import numpy as np
import pytest

from minimax_descent.cli import (
    ConfigError,
    SchemaError,
    load_config,
    load_dataset,
    main,
    parse_config_text,
    write_dataset,
)
from minimax_descent.problems import GroupedDataset, synthetic_groups
from minimax_descent.solver import read_trace

SABOTAGED = '''
import numpy as np
from minimax_descent.objective import ObjectiveFamily


def build():
    # component 1 reports twice its true gradient
    return ObjectiveFamily.from_components(
        [lambda x: float(x @ x), lambda x: float(x[0] - x[1])],
        [lambda x: 2 * x, lambda x: np.array([2.0, -2.0])], n=2)
'''


def write(path, text):
    path.write_text(text)
    return path


def read_result(path):
    out = {}
    for line in path.read_text().splitlines():
        k, v = line.split(" = ", 1)
        out[k] = v
    return out


class TestSolveCommand:
    def test_demyanov_malozemov(self, tmp_path):
        cfg = write(tmp_path / "dm.cfg", "problem.name = demyanov_malozemov\nsolver.x0 = 1, 1\n")
        assert main(["solve", str(cfg)]) == 0
        res = read_result(tmp_path / "dm.result.txt")
        assert res["status"] == "Converged"
        assert abs(float(res["phi"]) + 3.0) <= 1e-6
        x = np.array([float(v) for v in res["x"].split(",")])
        np.testing.assert_allclose(x, [0.0, -3.0], atol=1e-4)
        trace = read_trace(tmp_path / "dm.trace.csv")
        assert len(trace) == int(res["iterations"])

    def test_invalid_parameter(self, tmp_path, capsys):
        cfg = write(tmp_path / "bad.cfg", "problem.name = square\nsolver.c = 1.5\n")
        assert main(["solve", str(cfg)]) == 1
        err = capsys.readouterr().err
        assert "solver.c" in err and "(0, 1)" in err
        assert not (tmp_path / "bad.trace.csv").exists()

    def test_max_iterations(self, tmp_path):
        cfg = write(tmp_path / "sq.cfg",
                    "problem.name = square\nsolver.k_max = 1\nsolver.x0 = 3\n")
        assert main(["solve", str(cfg)]) == 2
        trace = read_trace(tmp_path / "sq.trace.csv")
        assert len(trace) == 1
        assert read_result(tmp_path / "sq.result.txt")["x"] == "2"

    def test_dataset_problem(self, tmp_path):
        write_dataset(synthetic_groups(4, N=3, m=2, sizes=[8, 9, 10]), tmp_path / "d.csv")
        cfg = write(tmp_path / "mm.cfg", "problem.dataset = d.csv\n")
        assert main(["solve", str(cfg)]) == 0

    def test_output_overrides(self, tmp_path):
        cfg = write(tmp_path / "a.cfg", "problem.name = square\nsolver.x0 = 1\n")
        t, r = tmp_path / "sub_t.csv", tmp_path / "sub_r.txt"
        assert main(["solve", str(cfg), "--trace", str(t), "--result", str(r)]) == 0
        assert t.exists() and r.exists()
        assert not (tmp_path / "a.trace.csv").exists()

    def test_trace_bytes_reproducible(self, tmp_path):
        cfg = write(tmp_path / "q.cfg", "problem.name = quadratic\nproblem.seed = 3\n"
                    "problem.N = 4\nproblem.n = 3\n")
        outs = []
        for i in range(2):
            t = tmp_path / f"t{i}.csv"
            assert main(["solve", str(cfg), "--trace", str(t)]) == 0
            outs.append(t.read_bytes())
        assert outs[0] == outs[1]

    def test_module_entry_point(self, tmp_path):
        cfg = write(tmp_path / "m.cfg", "problem.name = two_parabolas\nsolver.x0 = 5\n")
        proc = subprocess.run([sys.executable, "-m", "minimax_descent", "solve", str(cfg)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.startswith("Converged")


class TestCheckCommand:
    def test_correct_gradients(self, tmp_path, capsys):
        cfg = write(tmp_path / "dm.cfg", "problem.name = demyanov_malozemov\n")
        assert main(["check", str(cfg)]) == 0
        assert capsys.readouterr().out.count(" ok") == 3

    def test_sabotaged_component_named(self, tmp_path, capsys):
        write(tmp_path / "sabotage.py", SABOTAGED)
        cfg = write(tmp_path / "s.cfg", "problem.factory = sabotage:build\n")
        assert main(["check", str(cfg)]) == 2
        out = capsys.readouterr().out
        assert "component 1" in out and "FAIL" in out
        assert "[1]" in out

    def test_missing_dataset(self, tmp_path, capsys):
        cfg = write(tmp_path / "m.cfg", "problem.dataset = nowhere.csv\n")
        assert main(["check", str(cfg)]) == 1
        assert "nowhere.csv" in capsys.readouterr().err


class TestConfigParsing:
    def test_comments_and_blanks(self):
        raw = parse_config_text("# header\n\nproblem.name = square  # inline\n")
        assert raw == {"problem.name": "square"}

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("problem.name = square\nsolver.bogus = 1\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("problem.name = square\nproblem.name = square\n")

    def test_exactly_one_source(self, tmp_path):
        cfg = write(tmp_path / "c.cfg", "problem.name = square\nproblem.dataset = d.csv\n")
        with pytest.raises(ConfigError):
            load_config(cfg)
        with pytest.raises(ConfigError):
            load_config(write(tmp_path / "e.cfg", "solver.c = 0.3\n"))

    def test_unknown_problem(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown problem"):
            load_config(write(tmp_path / "u.cfg", "problem.name = rosenbrock\n"))

    @pytest.mark.parametrize("line,key", [
        ("solver.sigma = 1", "solver.sigma"), ("solver.epsilon = 0", "solver.epsilon"),
        ("solver.j_max = 0", "solver.j_max"), ("solver.k_max = x", "solver.k_max"),
        ("solver.roundoff_stop = maybe", "solver.roundoff_stop"),
    ])
    def test_bad_solver_values_name_key(self, tmp_path, line, key):
        cfg = write(tmp_path / "b.cfg", f"problem.name = square\n{line}\n")
        with pytest.raises(ConfigError, match=key):
            load_config(cfg)

    def test_default_paths_beside_config(self, tmp_path):
        cfg = load_config(write(tmp_path / "run.cfg", "problem.name = square\n"))
        assert cfg.trace_path == tmp_path / "run.trace.csv"
        assert cfg.result_path == tmp_path / "run.result.txt"


class TestDataset:
    def test_two_by_two(self, tmp_path):
        p = write(tmp_path / "d.csv", "group,x1,y\n0,1,2\n0,2,3\n1,3,4\n1,4,5\n")
        ds = load_dataset(p)
        assert ds.N == 2 and ds.m == 1 and ds.sizes == (2, 2)
        assert ds.features[1].tolist() == [[3.0], [4.0]]
        assert ds.targets[0].tolist() == [2.0, 3.0]

    def test_single_row(self, tmp_path):
        ds = load_dataset(write(tmp_path / "d.csv", "group,x1,x2,y\n7,1,2,3\n"))
        assert ds.N == 1 and ds.m == 2

    def test_interleaved_labels_keep_first_appearance(self, tmp_path):
        ds = load_dataset(write(tmp_path / "d.csv", "group,x1,y\n5,1,1\n2,2,2\n5,3,3\n"))
        assert ds.targets[0].tolist() == [1.0, 3.0]
        assert ds.targets[1].tolist() == [2.0]

    @pytest.mark.parametrize("text,line", [
        ("grp,x1,y\n0,1,2\n", 1),
        ("group,x1,y\n0,1,2\n0,1\n", 3),
        ("group,x1,y\n0,1,2\n0,abc,2\n", 3),
        ("group,x1,y\n-1,1,2\n", 2),
        ("group,x1,y\n0,nan,2\n", 2),
    ])
    def test_schema_errors_report_line(self, tmp_path, text, line):
        with pytest.raises(SchemaError) as info:
            load_dataset(write(tmp_path / "d.csv", text))
        assert info.value.line == line

    def test_no_rows(self, tmp_path):
        with pytest.raises(SchemaError):
            load_dataset(write(tmp_path / "d.csv", "group,x1,y\n"))

    def test_round_trip(self, tmp_path):
        ds = synthetic_groups(8, N=4, m=3, sizes=[3, 4, 5, 6])
        write_dataset(ds, tmp_path / "d.csv")
        back = load_dataset(tmp_path / "d.csv")
        for a, b in zip(ds.features + ds.targets, back.features + back.targets):
            assert a.tobytes() == b.tobytes()

    def test_from_arrays_matches(self, tmp_path):
        ds = GroupedDataset.from_arrays([([[1.0]], [2.0])])
        write_dataset(ds, tmp_path / "d.csv")
        assert (tmp_path / "d.csv").read_text() == "group,x1,y\n0,1,2\n"
