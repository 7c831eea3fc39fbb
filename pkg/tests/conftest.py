import numpy as np
import pytest

from cvarvi import UncertainCostModel, ViProblem, PolyhedralSet

ACCEPTANCE_LINES = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def deterministic_affine(A, h_star, set_, alpha=0.2):
    """Noise-free model with F(h) = A (h - h_star) and an exact map."""
    A = np.asarray(A, dtype=float)
    h_star = np.asarray(h_star, dtype=float)
    w = -A @ h_star
    n = A.shape[0]
    model = UncertainCostModel(
        n=n, m=1,
        sample_u=lambda rng, size: rng.random((size, 1)),
        cost=lambda h, U: np.broadcast_to(A @ h + w, (U.shape[0], n)).copy(),
        exact_cvar_map=lambda h, alpha: A @ h + w,
        affine=(A, w),
    )
    return ViProblem(model, alpha, set_)


@pytest.fixture
def big_box():
    def make(n, r=1e6):
        return PolyhedralSet.box(-r * np.ones(n), r * np.ones(n))
    return make
