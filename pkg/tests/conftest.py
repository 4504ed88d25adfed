import numpy as np
import pytest

ACCEPTANCE_LINES = []


def record_criterion(number, description, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {description}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def max_of(family, x):
    """Independent max evaluation, used to re-check solver claims."""
    x = np.asarray(x, dtype=float)
    return max(family.value(j, x) for j in range(family.N))


def grid_minimax_2d(family, lo, hi, step):
    """Best grid point of max_j f_j over a box in R^2."""
    xs = np.arange(lo[0], hi[0] + 0.5 * step, step)
    ys = np.arange(lo[1], hi[1] + 0.5 * step, step)
    best, best_x = np.inf, None
    for a in xs:
        for b in ys:
            v = max_of(family, (a, b))
            if v < best:
                best, best_x = v, np.array([a, b])
    return best_x, best


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
