"""Command-line front end.

    minimax-descent solve CONFIG [--trace PATH] [--result PATH]
    minimax-descent check CONFIG

Configs are flat ``key = value`` files; ``#`` starts a comment. Example::

    problem.name = demyanov_malozemov
    solver.x0 = 1, 1
    output.trace = dm.trace.csv
"""

from __future__ import annotations

import argparse
import csv
import importlib
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .objective import NonFiniteEvaluation, ObjectiveFamily, check_gradients
from .problems import BUILTIN, GroupedDataset, RegressionModel, maxmean_objective
from .solver import SolverConfig, Status, format_float, solve, write_trace

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_QP_FAILURE = 3

EXIT_FOR_STATUS = {
    Status.CONVERGED: EXIT_OK,
    Status.MAX_ITERATIONS: EXIT_NOT_CONVERGED,
    Status.LINE_SEARCH_STALLED: EXIT_NOT_CONVERGED,
    Status.QP_FAILURE: EXIT_QP_FAILURE,
}

PROBLEM_KEYS = {"problem.name", "problem.seed", "problem.N", "problem.n", "problem.shift",
                "problem.dataset", "problem.model", "problem.degree", "problem.factory"}
SOLVER_KEYS = {"solver.epsilon", "solver.delta", "solver.c", "solver.sigma", "solver.j_max",
               "solver.k_max", "solver.active_tol", "solver.x0", "solver.roundoff_stop"}
OUTPUT_KEYS = {"output.trace", "output.result"}
CHECK_KEYS = {"check.points", "check.seed", "check.radius", "check.step", "check.tol"}
KNOWN_KEYS = PROBLEM_KEYS | SOLVER_KEYS | OUTPUT_KEYS | CHECK_KEYS


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass
class RunConfig:
    problem: dict
    solver: SolverConfig
    trace_path: Path
    result_path: Path
    check: dict = field(default_factory=dict)
    base_dir: Path = Path(".")


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a dict of raw strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _number(raw: dict, key: str, kind=float):
    try:
        v = kind(raw[key])
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw[key]!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(v):
        raise ConfigError(f"{key}: must be finite, got {raw[key]!r}")
    return v


def _vector(raw: dict, key: str) -> np.ndarray:
    try:
        return np.array([float(s) for s in raw[key].split(",") if s.strip()])
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {raw[key]!r}") from None


def _bool(raw: dict, key: str) -> bool:
    v = raw[key].lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw[key]!r}")


_SOLVER_FIELD_RULES = {
    "epsilon": "must be > 0",
    "delta": "must be > 0",
    "c": "valid range is (0, 1)",
    "sigma": "valid range is (0, 1)",
    "j_max": "must be an integer >= 1",
    "k_max": "must be an integer >= 1",
    "active_tol": "must be >= 0",
}


def build_solver_config(raw: dict) -> SolverConfig:
    kwargs = {}
    for name in ("epsilon", "delta", "c", "sigma", "active_tol"):
        key = f"solver.{name}"
        if key in raw:
            kwargs[name] = _number(raw, key)
    for name in ("j_max", "k_max"):
        key = f"solver.{name}"
        if key in raw:
            kwargs[name] = _number(raw, key, int)
    if "solver.x0" in raw:
        kwargs["x0"] = _vector(raw, "solver.x0")
    if "solver.roundoff_stop" in raw:
        kwargs["roundoff_stop"] = _bool(raw, "solver.roundoff_stop")

    # validate field by field so the message names the offending key
    defaults = SolverConfig()
    for name, value in kwargs.items():
        if name in ("x0", "roundoff_stop"):
            continue
        trial = SolverConfig.__new__(SolverConfig)
        trial.__dict__.update(defaults.__dict__)
        setattr(trial, name, value)
        try:
            trial.validate()
        except ValueError:
            raise ConfigError(
                f"solver.{name} = {value!r} is invalid: {_SOLVER_FIELD_RULES[name]}") from None
    return SolverConfig(**kwargs)


def load_config(path, trace: Optional[str] = None, result: Optional[str] = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    raw = parse_config_text(text)
    base = path.parent

    sources = [k for k in ("problem.name", "problem.dataset", "problem.factory") if k in raw]
    if len(sources) != 1:
        raise ConfigError("exactly one of problem.name, problem.dataset, problem.factory "
                          f"is required, got {sources or 'none'}")
    problem = {k.split(".", 1)[1]: v for k, v in raw.items() if k in PROBLEM_KEYS}
    if "problem.name" in raw and raw["problem.name"] not in BUILTIN:
        raise ConfigError(f"problem.name: unknown problem {raw['problem.name']!r}; "
                          f"choose from {sorted(BUILTIN)}")
    for key in ("problem.seed", "problem.N", "problem.n", "problem.degree"):
        if key in raw:
            problem[key.split(".", 1)[1]] = _number(raw, key, int)
    if "problem.shift" in raw:
        problem["shift"] = _number(raw, "problem.shift")

    solver = build_solver_config(raw)

    stem = path.name[:-len(path.suffix)] if path.suffix else path.name
    trace_path = Path(trace) if trace else base / raw.get("output.trace", f"{stem}.trace.csv")
    result_path = Path(result) if result else base / raw.get("output.result", f"{stem}.result.txt")

    check = {"points": 20, "seed": 0, "radius": 2.0, "step": None, "tol": 1e-6}
    for name, kind in (("points", int), ("seed", int), ("radius", float), ("step", float),
                       ("tol", float)):
        key = f"check.{name}"
        if key in raw:
            check[name] = _number(raw, key, kind)
    if check["points"] < 1:
        raise ConfigError("check.points must be >= 1")
    return RunConfig(problem=problem, solver=solver, trace_path=trace_path,
                     result_path=result_path, check=check, base_dir=base)


def load_dataset(path) -> GroupedDataset:
    """Read a grouped dataset with header ``group,x1,...,xm,y``.

    Groups are numbered in order of first appearance; rows keep file order
    within each group.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty file", line=1) from None
        m = len(header) - 2
        expected = ["group"] + [f"x{i}" for i in range(1, m + 1)] + ["y"]
        if m < 1 or header != expected:
            raise SchemaError(f"header must be group,x1,...,xm,y; got {','.join(header)}", line=1)
        order = {}
        feats, targs = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != m + 2:
                raise SchemaError(f"expected {m + 2} columns, got {len(row)}", line=lineno)
            label = row[0].strip()
            if not label.isdigit():
                raise SchemaError(f"group label must be a non-negative integer, got {label!r}",
                                  line=lineno)
            try:
                values = [float(c) for c in row[1:]]
            except ValueError:
                raise SchemaError(f"non-numeric cell in {row!r}", line=lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise SchemaError("non-finite value", line=lineno)
            g = order.setdefault(int(label), len(order))
            if g == len(feats):
                feats.append([])
                targs.append([])
            feats[g].append(values[:-1])
            targs[g].append(values[-1])
    if not feats:
        raise SchemaError("no data rows")
    return GroupedDataset.from_arrays([(np.array(X), np.array(y)) for X, y in zip(feats, targs)])


def write_dataset(dataset: GroupedDataset, path, labels=None):
    """Write ``dataset`` in the CSV schema read by :func:`load_dataset`."""
    labels = list(range(dataset.N)) if labels is None else list(labels)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["group"] + [f"x{i}" for i in range(1, dataset.m + 1)] + ["y"]) + "\n")
        for lab, X, y in zip(labels, dataset.features, dataset.targets):
            for xi, yi in zip(X, y):
                fh.write(",".join([str(lab)] + [format_float(v) for v in xi]
                                  + [format_float(yi)]) + "\n")


def build_family(cfg: RunConfig) -> ObjectiveFamily:
    prob = cfg.problem
    if "name" in prob:
        return BUILTIN[prob["name"]](**prob)
    if "dataset" in prob:
        path = Path(prob["dataset"])
        if not path.is_absolute():
            path = cfg.base_dir / path
        try:
            dataset = load_dataset(path)
        except OSError as exc:
            raise ConfigError(f"problem.dataset: cannot read {path}: {exc.strerror}") from None
        try:
            model = RegressionModel(prob.get("model", "linear"), prob.get("degree", 1))
        except ValueError as exc:
            raise ConfigError(f"problem.model: {exc}") from None
        return maxmean_objective(dataset, model)

    target = prob["factory"]
    if ":" not in target:
        raise ConfigError(f"problem.factory must look like 'module:function', got {target!r}")
    mod_name, func_name = target.split(":", 1)
    sys.path.insert(0, str(cfg.base_dir.resolve()))
    try:
        module = importlib.import_module(mod_name)
        factory = getattr(module, func_name)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"problem.factory: cannot load {target!r}: {exc}") from None
    finally:
        sys.path.pop(0)
    family = factory()
    if not isinstance(family, ObjectiveFamily):
        raise ConfigError(f"problem.factory: {target!r} did not return an ObjectiveFamily")
    return family


def write_result(path, items: dict):
    with open(path, "w") as fh:
        for key, value in items.items():
            fh.write(f"{key} = {value}\n")


def run(config_path, trace: Optional[str] = None, result: Optional[str] = None) -> int:
    try:
        cfg = load_config(config_path, trace, result)
        family = build_family(cfg)
        cfg.solver.start(family.n)
    except (ConfigError, SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    t0 = time.perf_counter()
    res = solve(family, cfg.solver)
    wall = time.perf_counter() - t0

    summary = {
        "problem": family.name,
        "status": res.status.value,
        "iterations": res.iterations,
        "phi": format_float(res.phi_final),
        "stationarity": format_float(res.stationarity),
        "tolerance": format_float(res.tolerance),
        "x": ",".join(format_float(v) for v in res.x_final),
        "wall_time": f"{wall:.6f}",
        "message": res.message,
    }
    try:
        write_trace(res.trace, cfg.trace_path)
        write_result(cfg.result_path, summary)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{res.status.value}: phi = {summary['phi']} after {res.iterations} iterations")
    if res.message:
        print(res.message)
    return EXIT_FOR_STATUS[res.status]


def check(config_path) -> int:
    try:
        cfg = load_config(config_path)
        family = build_family(cfg)
        center = cfg.solver.start(family.n)
    except (ConfigError, SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    opts = cfg.check
    rng = np.random.default_rng(opts["seed"])
    points = center + rng.uniform(-opts["radius"], opts["radius"], size=(opts["points"], family.n))
    try:
        report = check_gradients(family, points, step=opts["step"], tol=opts["tol"])
    except NonFiniteEvaluation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    for j, err in enumerate(report.errors):
        flag = "ok" if err <= opts["tol"] else "FAIL"
        print(f"component {j}: max relative error {err:.3e} {flag}")
    if not report.passed:
        print(f"gradient check failed for components {report.failing()}")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="minimax-descent",
                                     description="QP-direction descent for min_x max_j f_j(x)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", help="run the solver on a config")
    p_solve.add_argument("config")
    p_solve.add_argument("--trace", help="trace CSV path (overrides output.trace)")
    p_solve.add_argument("--result", help="result summary path (overrides output.result)")
    p_check = sub.add_parser("check", help="compare gradients with finite differences")
    p_check.add_argument("config")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "solve":
        return run(args.config, args.trace, args.result)
    return check(args.config)


if __name__ == "__main__":
    sys.exit(main())
