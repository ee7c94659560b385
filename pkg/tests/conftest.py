import numpy as np
import pytest

from aadmm.lure import AlgorithmParams, ProblemClass, QuadraticFunction


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def random_instance(rng, pc: ProblemClass, p: int = 3):
    """Quadratic f with spectrum in the sector, PSD quadratic g, offset c."""
    from aadmm.soundness import random_quadratic_instance

    return random_quadratic_instance(pc, rng, p)


def random_params(rng, pc: ProblemClass) -> AlgorithmParams:
    from aadmm.tuning import PRESETS

    name = list(PRESETS)[rng.integers(len(PRESETS))]
    return PRESETS[name](pc)


__all__ = ["random_instance", "random_params", "record", "QuadraticFunction"]


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
