"""Variational inequalities whose map is the CVaR of an uncertain cost.

A :class:`UncertainCostModel` is a sampling oracle for the random cost
vector C(h, u). Sampling is vectorised: ``sample_u(rng, N)`` returns an
``(N, m)`` array of uncertainty events and ``cost(h, U)`` the matching
``(N, n)`` array of cost vectors, row j evaluated at event j for every
component (the shared-event contract).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cvar import _cvar_columns, check_alpha, exact_cvar_affine_uniform
from .errors import CostBoundsError, InvalidInputError, UnsupportedOperationError
from .feasible import PolyhedralSet

__all__ = [
    "AffineUniformModel",
    "MonotonicityReport",
    "UncertainCostModel",
    "ViProblem",
    "empirical_map",
    "exact_map",
    "monotonicity_report",
    "solution_error",
]


@dataclass(frozen=True)
class UncertainCostModel:
    """Sampling oracle for C(h, u).

    ``exact_cvar_map(h, alpha)``, when given, returns the exact CVaR map.
    ``affine`` optionally declares the separable structure
    C(h, u) = A h + w + g(u) as the pair ``(A, w)``; it is taken on trust.
    ``cost_bounds = (z1, z2)`` is checked against every sampled cost.
    """

    n: int
    m: int
    sample_u: Callable[[np.random.Generator, int], np.ndarray]
    cost: Callable[[np.ndarray, np.ndarray], np.ndarray]
    exact_cvar_map: Callable[[np.ndarray, float], np.ndarray] | None = None
    affine: tuple[np.ndarray, np.ndarray] | None = None
    cost_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.cost_bounds is not None:
            z1, z2 = self.cost_bounds
            if z1 > z2:
                raise InvalidInputError("cost_bounds needs z1 <= z2")


def AffineUniformModel(A, w, gains, noise_index, m: int | None = None,
                       cost_bounds=None) -> UncertainCostModel:
    """C_i(h, u) = (A h + w)_i + gains_i * u[noise_index_i], u ~ U(0,1)^m.

    A component with ``noise_index < 0`` (or zero gain) is deterministic.
    Because every component depends on at most one uniform with a
    nonnegative gain, the exact CVaR map is available in closed form.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    w = np.asarray(w, dtype=float).reshape(-1)
    gains = np.asarray(gains, dtype=float).reshape(-1)
    idx = np.asarray(noise_index, dtype=int).reshape(-1)
    n = A.shape[0]
    if A.shape != (n, n) or w.size != n or gains.size != n or idx.size != n:
        raise InvalidInputError("A must be n x n and w, gains, noise_index length n")
    if np.any(gains < 0):
        raise InvalidInputError("noise gains must be nonnegative")
    if m is None:
        m = int(idx.max()) + 1 if np.any(idx >= 0) else 0
    if np.any(idx >= m):
        raise InvalidInputError("noise_index out of range for m uncertainties")
    # dense (m, n) noise loading so that C = U @ G + (A h + w)
    G = np.zeros((m, n))
    for i in np.nonzero(idx >= 0)[0]:
        G[idx[i], i] = gains[i]

    def sample_u(rng, size):
        return rng.random((size, m))

    def cost(h, U):
        return U @ G + (A @ h + w)

    def exact(h, alpha):
        base = A @ h + w
        return np.array([exact_cvar_affine_uniform(b, g if i >= 0 else 0.0, alpha)
                         for b, g, i in zip(base, gains, idx)])

    return UncertainCostModel(n, m, sample_u, cost, exact, affine=(A, w), cost_bounds=cost_bounds)


@dataclass(frozen=True)
class ViProblem:
    model: UncertainCostModel
    alpha: float
    set: PolyhedralSet

    def __post_init__(self):
        object.__setattr__(self, "alpha", check_alpha(self.alpha))
        if self.model.n != self.set.n:
            raise InvalidInputError(
                f"model dimension {self.model.n} does not match set dimension {self.set.n}"
            )

    @property
    def n(self) -> int:
        return self.model.n


def _sample_costs(problem: ViProblem, h: np.ndarray, N: int, rng) -> np.ndarray:
    model = problem.model
    U = model.sample_u(rng, N)
    C = np.asarray(model.cost(h, U), dtype=float)
    if C.shape != (N, model.n):
        raise InvalidInputError(f"cost oracle returned shape {C.shape}, expected {(N, model.n)}")
    if not np.isfinite(C).all():
        raise InvalidInputError("cost oracle produced non-finite values")
    if model.cost_bounds is not None:
        z1, z2 = model.cost_bounds
        lo, hi = C.min(), C.max()
        if lo < z1 or hi > z2:
            raise CostBoundsError(f"sampled cost range [{lo}, {hi}] leaves declared bounds [{z1}, {z2}]")
    return C


def empirical_map(problem: ViProblem, h, N: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CVaR map at ``h`` from ``N`` fresh shared events.

    Returns ``(F_hat, batch)`` where ``batch`` is the ``(N, n)`` cost sample.
    Consumes exactly N events from ``rng``.
    """
    if N < 1:
        raise InvalidInputError("sample size N must be at least 1")
    h = np.asarray(h, dtype=float)
    C = _sample_costs(problem, h, int(N), rng)
    return _cvar_columns(C, problem.alpha)[0], C


def exact_map(problem: ViProblem, h) -> np.ndarray:
    if problem.model.exact_cvar_map is None:
        raise UnsupportedOperationError("this cost model has no exact CVaR map")
    return np.asarray(problem.model.exact_cvar_map(np.asarray(h, dtype=float), problem.alpha),
                      dtype=float)


NOT_DETECTED = "not_detected"
MONOTONE = "monotone"
STRICTLY_MONOTONE = "strictly_monotone"
STRONGLY_MONOTONE = "strongly_monotone"


@dataclass(frozen=True)
class MonotonicityReport:
    kind: str
    c_F: float
    method: str


def monotonicity_report(problem: ViProblem, rng=None, n_pairs: int = 1000,
                        center=None, radius: float = 1.0) -> MonotonicityReport:
    """Classify the monotonicity of the exact CVaR map.

    For a declared separable affine model the answer is exact: c_F is the
    smallest eigenvalue of the symmetric part of A. Otherwise random pairs
    from the ball around ``center`` are probed with the exact map; the
    minimum observed ratio is then only an upper estimate of c_F.
    """
    affine = problem.model.affine
    if affine is not None:
        A = np.asarray(affine[0], dtype=float)
        c = float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])
        tol = 1e-10 * max(np.linalg.norm(A, 2), 1.0)
        if c > tol:
            return MonotonicityReport(STRONGLY_MONOTONE, c, "affine_exact")
        if c >= -tol:
            # a linear map with singular PSD symmetric part is never strictly monotone
            return MonotonicityReport(MONOTONE, 0.0, "affine_exact")
        return MonotonicityReport(NOT_DETECTED, 0.0, "affine_exact")

    if problem.model.exact_cvar_map is None:
        raise UnsupportedOperationError("sampled monotonicity check needs an exact CVaR map")
    rng = np.random.default_rng(0) if rng is None else rng
    n = problem.n
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    worst = np.inf
    for _ in range(n_pairs):
        x = center + radius * rng.uniform(-1.0, 1.0, n)
        y = center + radius * rng.uniform(-1.0, 1.0, n)
        d = x - y
        dd = float(d @ d)
        if dd == 0.0:
            continue
        worst = min(worst, float((exact_map(problem, x) - exact_map(problem, y)) @ d) / dd)
    if worst < 0:
        return MonotonicityReport(NOT_DETECTED, 0.0, "sampled_pairs")
    if worst > 0:
        return MonotonicityReport(STRONGLY_MONOTONE, worst, "sampled_pairs")
    return MonotonicityReport(MONOTONE, 0.0, "sampled_pairs")


def solution_error(h, reference) -> float:
    h = np.asarray(h, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if h.shape != reference.shape:
        raise InvalidInputError(f"shape mismatch {h.shape} vs {reference.shape}")
    return float(np.linalg.norm(h - reference))
