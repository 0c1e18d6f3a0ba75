import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spline(rng, n_pieces=None, degree=5, t_start=None, scale=1.0):
    """Spline with random control points and durations (not continuous across knots)."""
    from sogmplan.bezier import BezierPiece, BezierSpline

    n_pieces = n_pieces or int(rng.integers(1, 5))
    t_start = float(rng.uniform(-1, 1)) if t_start is None else t_start
    pieces = [BezierPiece(scale * rng.normal(size=(degree + 1, 3)), float(rng.uniform(0.1, 1.0)))
              for _ in range(n_pieces)]
    return BezierSpline(pieces, t_start)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str) -> str:
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
