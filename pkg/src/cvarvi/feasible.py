"""Polyhedral feasible sets, Euclidean projections and KKT diagnostics.

A set is stored in the form

    H = { h : A_ineq h - b_ineq <= 0,  A_eq h - b_eq = 0 },

so q(h) = A_ineq h - b_ineq and l(h) = A_eq h - b_eq. Two special shapes
get exact closed-form projections: boxes and products of scaled simplices
(the path-flow polytope of a routing game).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, lsq_linear

from .errors import InfeasibleSetError, InvalidInputError

__all__ = [
    "Box",
    "KktPoint",
    "PolyhedralSet",
    "clipped_max",
    "kkt_residuals",
    "licq_check",
    "project",
    "project_simplex",
    "project_polyhedron",
    "recover_multipliers",
]

GENERAL = "general"
PRODUCT_OF_SIMPLICES = "product_of_simplices"
BOX = "box"


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise InvalidInputError("box bounds must have equal length")
        if np.any(lower > upper):
            raise InvalidInputError("box needs lower <= upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def uniform(cls, n: int, lo: float, hi: float) -> "Box":
        return cls(np.full(n, lo), np.full(n, hi))

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lower), self.upper)


def _matrix(a, cols: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((0, cols))
    return np.atleast_2d(a)


@dataclass(frozen=True)
class PolyhedralSet:
    """Affine inequality/equality description of a convex polyhedron.

    Use :meth:`product_of_simplices` and :meth:`box` for the structured
    shapes; the constructor alone produces a ``general`` set.
    """

    A_ineq: np.ndarray
    b_ineq: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    structure: str = GENERAL
    groups: tuple = field(default=(), compare=False)
    demands: np.ndarray | None = field(default=None, compare=False)
    bounds: Box | None = field(default=None, compare=False)

    def __post_init__(self):
        A_ineq = np.asarray(self.A_ineq, dtype=float)
        A_eq = np.asarray(self.A_eq, dtype=float)
        n = max(A_ineq.shape[-1] if A_ineq.ndim == 2 else 0,
                A_eq.shape[-1] if A_eq.ndim == 2 else 0)
        if n == 0:
            raise InvalidInputError("cannot infer the dimension of an empty constraint set")
        A_ineq = _matrix(A_ineq, n)
        A_eq = _matrix(A_eq, n)
        b_ineq = np.asarray(self.b_ineq, dtype=float).reshape(-1)
        b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        if A_ineq.shape != (b_ineq.size, n) or A_eq.shape != (b_eq.size, n):
            raise InvalidInputError(
                f"inconsistent constraint shapes: A_ineq {A_ineq.shape}, b_ineq {b_ineq.shape}, "
                f"A_eq {A_eq.shape}, b_eq {b_eq.shape}"
            )
        if self.structure not in (GENERAL, PRODUCT_OF_SIMPLICES, BOX):
            raise InvalidInputError(f"unknown structure tag {self.structure!r}")
        object.__setattr__(self, "A_ineq", A_ineq)
        object.__setattr__(self, "b_ineq", b_ineq)
        object.__setattr__(self, "A_eq", A_eq)
        object.__setattr__(self, "b_eq", b_eq)

    @classmethod
    def product_of_simplices(cls, groups, demands, n: int | None = None) -> "PolyhedralSet":
        """{h >= 0 : sum_{i in group g} h_i = demand_g for every g}."""
        groups = tuple(np.asarray(g, dtype=int) for g in groups)
        demands = np.asarray(demands, dtype=float).reshape(-1)
        if len(groups) != demands.size:
            raise InvalidInputError("need exactly one demand per group")
        if np.any(demands <= 0):
            raise InvalidInputError("simplex demands must be positive")
        members = np.concatenate(groups) if groups else np.array([], dtype=int)
        if n is None:
            n = members.size
        if sorted(members.tolist()) != list(range(n)):
            raise InvalidInputError("groups must partition {0, ..., n-1}")
        A_eq = np.zeros((len(groups), n))
        for row, g in enumerate(groups):
            A_eq[row, g] = 1.0
        return cls(-np.eye(n), np.zeros(n), A_eq, demands,
                   structure=PRODUCT_OF_SIMPLICES, groups=groups, demands=demands)

    @classmethod
    def box(cls, lower, upper) -> "PolyhedralSet":
        b = Box(lower, upper)
        n = b.lower.size
        A = np.vstack([np.eye(n), -np.eye(n)])
        rhs = np.concatenate([b.upper, -b.lower])
        return cls(A, rhs, np.zeros((0, n)), np.zeros(0), structure=BOX, bounds=b)

    @property
    def n(self) -> int:
        return self.A_ineq.shape[1]

    @property
    def s(self) -> int:
        return self.A_ineq.shape[0]

    @property
    def t(self) -> int:
        return self.A_eq.shape[0]

    def q(self, h) -> np.ndarray:
        return self.A_ineq @ h - self.b_ineq

    def l(self, h) -> np.ndarray:  # noqa: E743
        return self.A_eq @ h - self.b_eq

    def violation(self, h) -> float:
        """Largest constraint violation (0 for points of the set)."""
        h = np.asarray(h, dtype=float)
        worst = 0.0
        if self.s:
            worst = max(worst, float(np.max(self.q(h))))
        if self.t:
            worst = max(worst, float(np.max(np.abs(self.l(h)))))
        return max(worst, 0.0)

    def contains(self, h, tol: float = 1e-9) -> bool:
        return self.violation(h) <= tol

    def project(self, x) -> np.ndarray:
        return project(self, x)


def project_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Project ``v`` onto {y >= 0 : sum(y) = total} by sort-and-threshold."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u * ks > css)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project(set_: PolyhedralSet, x) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``set_``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != set_.n:
        raise InvalidInputError(f"point has dimension {x.size}, set has {set_.n}")
    if set_.structure == PRODUCT_OF_SIMPLICES:
        y = np.empty_like(x)
        for g, d in zip(set_.groups, set_.demands):
            y[g] = project_simplex(x[g], d)
        return y
    if set_.structure == BOX:
        return set_.bounds.clamp(x)
    return project_polyhedron(set_, x)


def _feasible_point(set_: PolyhedralSet) -> np.ndarray:
    n = set_.n
    res = linprog(
        np.zeros(n),
        A_ub=set_.A_ineq if set_.s else None,
        b_ub=set_.b_ineq if set_.s else None,
        A_eq=set_.A_eq if set_.t else None,
        b_eq=set_.b_eq if set_.t else None,
        bounds=[(None, None)] * n,
        method="highs",
    )
    if res.status == 2:
        raise InfeasibleSetError("the constraint system has no feasible point")
    if res.status != 0:
        raise InfeasibleSetError(f"feasibility LP failed: {res.message}")
    return res.x


def project_polyhedron(set_: PolyhedralSet, x, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Projection onto a general polyhedron by a primal active-set method.

    Solves min 0.5*||y - x||^2 over the set. A feasible start comes from an
    LP; each step solves the equality-constrained subproblem on the current
    working set, then either adds the first blocking inequality or drops the
    inequality with the most negative multiplier.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    A_in, b_in, A_eq = set_.A_ineq, set_.b_ineq, set_.A_eq
    scale = 1.0 + np.max(np.abs(x)) + (np.max(np.abs(b_in)) if set_.s else 0.0)
    if set_.s == 0 and set_.t == 0:
        return x.copy()
    if set_.s == 0:
        # affine subspace: closed form via least squares
        r = A_eq @ x - set_.b_eq
        corr = np.linalg.lstsq(A_eq, r, rcond=None)[0]
        y = x - corr
        if np.linalg.norm(A_eq @ y - set_.b_eq) > 1e-8 * scale:
            raise InfeasibleSetError("equality constraints are inconsistent")
        return y

    y = _feasible_point(set_)
    # snap the LP start onto the equalities
    if set_.t:
        y = y - np.linalg.lstsq(A_eq, A_eq @ y - set_.b_eq, rcond=None)[0]
    feas_tol = 1e-9 * scale
    work: list[int] = []
    for _ in range(max_iter):
        rows = np.vstack([A_eq, A_in[work]]) if work else A_eq
        g = y - x
        if rows.shape[0]:
            # p = -(I - P_rows) g, with P_rows the projector onto row space
            coef = np.linalg.lstsq(rows.T, g, rcond=None)[0]
            p = -(g - rows.T @ coef)
        else:
            p = -g
        if np.linalg.norm(p) <= tol * scale:
            if not work:
                return y
            # multipliers of y - x + rows^T nu = 0
            nu = np.linalg.lstsq(rows.T, -(y + p - x), rcond=None)[0]
            lam = nu[set_.t:]
            j = int(np.argmin(lam))
            if lam[j] >= -tol * scale:
                return y + p
            work.pop(j)
            continue
        Ap = A_in @ p
        slack = b_in - A_in @ y
        step = 1.0
        block = -1
        for i in np.nonzero(Ap > 1e-14 * scale)[0]:
            if i in work:
                continue
            ratio = max(slack[i], 0.0) / Ap[i]
            if ratio < step:
                step, block = ratio, int(i)
        y = y + step * p
        if block >= 0:
            work.append(block)
    if set_.violation(y) > feas_tol:
        raise InfeasibleSetError("active-set projection did not converge")
    return y


def clipped_max(x, y) -> np.ndarray:
    """Componentwise [x]_y^+: x_i where y_i > 0, max(0, x_i) where y_i = 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise InvalidInputError("clipped_max requires y >= 0")
    x, y = np.broadcast_arrays(x, y)
    return np.where(y > 0, x, np.maximum(x, 0.0))


@dataclass(frozen=True)
class KktPoint:
    h: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    stationarity_residual: float
    primal_residual: float
    complementarity_residual: float


def kkt_residuals(set_: PolyhedralSet, F_value, h, lam, mu) -> KktPoint:
    """Residuals of the VI's KKT system at ``(h, lam, mu)``."""
    F_value = np.asarray(F_value, dtype=float).reshape(-1)
    h = np.asarray(h, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if lam.size != set_.s or mu.size != set_.t:
        raise InvalidInputError(f"expected {set_.s} inequality and {set_.t} equality multipliers")
    if np.any(lam < 0):
        raise InvalidInputError("inequality multipliers must be nonnegative")
    q = set_.q(h)
    stat = np.linalg.norm(F_value + set_.A_ineq.T @ lam + set_.A_eq.T @ mu)
    primal = np.linalg.norm(set_.l(h)) + np.linalg.norm(np.maximum(q, 0.0))
    comp = abs(float(lam @ q)) if set_.s else 0.0
    return KktPoint(h, lam, mu, float(stat), float(primal), comp)


def _default_active_tol(set_: PolyhedralSet) -> float:
    b = np.concatenate([set_.b_ineq, set_.b_eq])
    return 1e-7 * (1.0 + (np.max(np.abs(b)) if b.size else 0.0))


def active_inequalities(set_: PolyhedralSet, h, active_tol: float | None = None) -> np.ndarray:
    if active_tol is None:
        active_tol = _default_active_tol(set_)
    return np.nonzero(np.abs(set_.q(np.asarray(h, dtype=float))) <= active_tol)[0]


def recover_multipliers(set_: PolyhedralSet, F_value, h, active_tol: float | None = None):
    """Least-squares multipliers for the stationarity equation at ``h``.

    Only inequalities active at ``h`` get a (nonnegative) multiplier; the
    rest are zero so complementarity holds by construction.
    """
    F_value = np.asarray(F_value, dtype=float).reshape(-1)
    active = active_inequalities(set_, h, active_tol)
    M = np.hstack([set_.A_ineq[active].T, set_.A_eq.T])
    lam = np.zeros(set_.s)
    if M.shape[1] == 0:
        return lam, np.zeros(0)
    k = active.size
    lb = np.r_[np.zeros(k), np.full(set_.t, -np.inf)]
    sol = lsq_linear(M, -F_value, bounds=(lb, np.full(M.shape[1], np.inf)),
                     method="bvls", tol=1e-12)
    lam[active] = np.maximum(sol.x[:k], 0.0)
    return lam, sol.x[k:]


def licq_check(set_: PolyhedralSet, h, active_tol: float | None = None) -> bool:
    """True iff active inequality and all equality gradients are independent."""
    active = active_inequalities(set_, h, active_tol)
    G = np.vstack([set_.A_ineq[active], set_.A_eq])
    if G.shape[0] == 0:
        return True
    if G.shape[0] > G.shape[1]:
        return False
    sv = np.linalg.svd(G, compute_uv=False)
    return bool(sv[-1] > 1e-8 * sv[0])
