"""Stochastic approximation schemes for CVaR-based variational inequalities.

All three schemes replace the map F by the empirical CVaR map computed
from N_k fresh shared events at every iteration:

* ``projected``   h <- P_H(h - g_k F_hat(h))
* ``penalty``     h <- h - g_k (F_hat(h) + c_k (h - P_H(h)))
* ``multiplier``  h <- h - g_k (F_hat(h) + A_ineq' lam + A_eq' mu),
                  lam <- max(lam + g_k q(h), 0),  mu <- mu + g_k l(h)

Iteration indices start at 1 so that harmonic steps 1/k are defined; the
k-th update turns h^(k-1) into h^k with step g_k and sample size N_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergenceError, InvalidInputError, UnsupportedOperationError
from .feasible import Box, PolyhedralSet, project
from .problem import ViProblem, empirical_map

__all__ = [
    "IterateTrace",
    "SampleSchedule",
    "SolverConfig",
    "StepSchedule",
    "TraceRecord",
    "make_schedule",
    "run",
    "run_multiplier",
    "run_penalty",
    "run_projected",
]

DIVERGENCE_NORM = 1e9


@dataclass(frozen=True)
class StepSchedule:
    """gamma_k = scale / (k + shift), indexed from ``start_index``."""

    kind: str = "harmonic"
    scale: float = 1.0
    shift: float = 0.0
    start_index: int = 1

    def __post_init__(self):
        if self.kind not in ("harmonic", "shifted_scaled"):
            raise InvalidInputError(f"unknown step schedule kind {self.kind!r}")
        if not self.scale > 0:
            raise InvalidInputError("step scale must be positive")
        if self.shift < 0:
            raise InvalidInputError("step shift must be nonnegative")
        if self.start_index < 1:
            raise InvalidInputError("start_index must be at least 1")

    def gamma(self, k: int) -> float:
        """Step of the k-th update (k = 1, 2, ...)."""
        return self.scale / (self.start_index + k - 1 + self.shift)


def make_schedule(kind: str = "harmonic", scale: float = 1.0, shift: float = 0.0,
                  start_index: int = 1) -> StepSchedule:
    return StepSchedule(kind, float(scale), float(shift), int(start_index))


@dataclass(frozen=True)
class SampleSchedule:
    """Per-iteration sample size N_k.

    ``constant`` keeps N_k = N0. ``growing`` uses ``growth(k)`` if given,
    else N_k = ceil(N0 * k**growth_power).
    """

    kind: str = "constant"
    N0: int = 100
    growth: Callable[[int], int] | None = None
    growth_power: float = 0.5

    def __post_init__(self):
        if self.kind not in ("constant", "growing"):
            raise InvalidInputError(f"unknown sample schedule kind {self.kind!r}")
        if int(self.N0) < 1:
            raise InvalidInputError("N0 must be at least 1")
        if self.kind == "growing" and self.growth is None and not self.growth_power > 0:
            raise InvalidInputError("growing schedule needs growth_power > 0")

    def size(self, k: int) -> int:
        if self.kind == "constant":
            return int(self.N0)
        if self.growth is not None:
            return max(1, int(self.growth(k)))
        return max(1, math.ceil(self.N0 * k ** self.growth_power))


@dataclass(frozen=True)
class PenaltyRamp:
    """Linear increase of the penalty constant from c_init to c_target."""

    c_init: float
    c_target: float
    ramp_iters: int

    def c(self, k: int) -> float:
        if self.ramp_iters <= 0:
            return self.c_target
        frac = min(1.0, (k - 1) / self.ramp_iters)
        return self.c_init + (self.c_target - self.c_init) * frac


@dataclass
class SolverConfig:
    algorithm: str
    h0: np.ndarray
    steps: StepSchedule = field(default_factory=StepSchedule)
    samples: SampleSchedule = field(default_factory=SampleSchedule)
    iterations: int = 1000
    penalty_c: float | None = None
    penalty_ramp: PenaltyRamp | None = None
    safeguard: Box | None = None
    multiplier_safeguard: Box | None = None
    lambda0: np.ndarray | None = None
    mu0: np.ndarray | None = None
    seed: int = 0
    downsample_stride: int = 1

    def __post_init__(self):
        if self.algorithm not in ("projected", "penalty", "multiplier"):
            raise InvalidInputError(f"unknown algorithm {self.algorithm!r}")
        self.h0 = np.asarray(self.h0, dtype=float).reshape(-1)
        if self.iterations < 1:
            raise InvalidInputError("iterations must be at least 1")
        if self.downsample_stride < 1:
            raise InvalidInputError("downsample_stride must be at least 1")
        if self.algorithm == "penalty":
            if self.penalty_ramp is None and (self.penalty_c is None or not self.penalty_c > 0):
                raise InvalidInputError("penalty algorithm needs penalty_c > 0 or a penalty ramp")
        if self.lambda0 is not None:
            self.lambda0 = np.asarray(self.lambda0, dtype=float).reshape(-1)
            if np.any(self.lambda0 < 0):
                raise InvalidInputError("lambda0 must be nonnegative")
        if self.mu0 is not None:
            self.mu0 = np.asarray(self.mu0, dtype=float).reshape(-1)

    def penalty_at(self, k: int) -> float:
        if self.penalty_ramp is not None:
            return self.penalty_ramp.c(k)
        return float(self.penalty_c)


@dataclass(frozen=True)
class TraceRecord:
    k: int
    h: np.ndarray
    lam: np.ndarray | None
    mu: np.ndarray | None
    gamma: float
    N: int
    F_hat_norm: float
    error_to_reference: float | None


@dataclass
class IterateTrace:
    algorithm: str
    h0: np.ndarray
    records: list[TraceRecord] = field(default_factory=list)
    downsample_stride: int = 1

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]


def run(problem: ViProblem, config: SolverConfig, reference=None) -> IterateTrace:
    """Dispatch on ``config.algorithm``."""
    runner = {"projected": run_projected, "penalty": run_penalty,
              "multiplier": run_multiplier}[config.algorithm]
    return runner(problem, config, reference=reference)


def _iterate(problem, config, reference, update, with_multipliers=False):
    n = problem.n
    if config.h0.size != n:
        raise InvalidInputError(f"h0 has dimension {config.h0.size}, problem has {n}")
    rng = np.random.Generator(np.random.Philox(config.seed))
    ref = None if reference is None else np.asarray(reference, dtype=float)
    trace = IterateTrace(config.algorithm, config.h0.copy(), downsample_stride=config.downsample_stride)
    state = update.init(config)
    K, stride = config.iterations, config.downsample_stride
    steps, samples = config.steps, config.samples
    for k in range(1, K + 1):
        gamma = steps.gamma(k)
        N = samples.size(k)
        F_hat, _ = empirical_map(problem, state.h, N, rng)
        update.step(state, F_hat, gamma, k)
        h = state.h
        # NaN fails the comparison, inf exceeds it
        diverged = not float(h @ h) <= DIVERGENCE_NORM ** 2
        if with_multipliers and not diverged:
            diverged = not (np.isfinite(state.lam).all() and np.isfinite(state.mu).all())
        if k % stride == 0 or k == K or diverged:
            trace.records.append(TraceRecord(
                k, h.copy(),
                state.lam.copy() if with_multipliers else None,
                state.mu.copy() if with_multipliers else None,
                gamma, N, float(np.linalg.norm(F_hat)),
                None if ref is None else float(np.linalg.norm(h - ref)),
            ))
        if diverged:
            raise DivergenceError(f"iterate diverged at k={k} (||h|| = {np.linalg.norm(h):.6g})", trace)
    return trace


class _State:
    __slots__ = ("h", "lam", "mu")


class _Projected:
    def __init__(self, problem):
        self.set = problem.set

    def init(self, config):
        st = _State()
        st.h = project(self.set, config.h0)
        return st

    def step(self, st, F_hat, gamma, k):
        st.h = project(self.set, st.h - gamma * F_hat)


class _Penalty:
    def __init__(self, problem, config):
        self.set = problem.set
        self.config = config

    def init(self, config):
        st = _State()
        st.h = config.h0.copy()
        return st

    def step(self, st, F_hat, gamma, k):
        h = st.h
        c = self.config.penalty_at(k)
        h = h - gamma * (F_hat + c * (h - project(self.set, h)))
        if self.config.safeguard is not None:
            h = self.config.safeguard.clamp(h)
        st.h = h


class _Multiplier:
    def __init__(self, problem, config):
        set_ = problem.set
        self.A_in, self.b_in = set_.A_ineq, set_.b_ineq
        self.A_eq, self.b_eq = set_.A_eq, set_.b_eq
        self.config = config
        self.s, self.t = set_.s, set_.t

    def init(self, config):
        st = _State()
        st.h = config.h0.copy()
        st.lam = np.zeros(self.s) if config.lambda0 is None else config.lambda0.copy()
        st.mu = np.zeros(self.t) if config.mu0 is None else config.mu0.copy()
        if st.lam.size != self.s or st.mu.size != self.t:
            raise InvalidInputError(f"expected {self.s} inequality and {self.t} equality multipliers")
        return st

    def step(self, st, F_hat, gamma, k):
        h, lam, mu = st.h, st.lam, st.mu
        q = self.A_in @ h - self.b_in
        l = self.A_eq @ h - self.b_eq  # noqa: E741
        h = h - gamma * (F_hat + self.A_in.T @ lam + self.A_eq.T @ mu)
        lam = np.maximum(lam + gamma * q, 0.0)
        mu = mu + gamma * l
        cfg = self.config
        if cfg.safeguard is not None:
            h = cfg.safeguard.clamp(h)
        if cfg.multiplier_safeguard is not None:
            box = cfg.multiplier_safeguard
            lam = np.minimum(np.maximum(lam, np.maximum(box.lower[:self.s], 0.0)), box.upper[:self.s])
            mu = np.minimum(np.maximum(mu, box.lower[self.s:]), box.upper[self.s:])
        st.h, st.lam, st.mu = h, lam, mu


def run_projected(problem: ViProblem, config: SolverConfig, reference=None) -> IterateTrace:
    """Projected scheme; every traced iterate lies in H."""
    if config.algorithm != "projected":
        raise InvalidInputError("config.algorithm must be 'projected'")
    return _iterate(problem, config, reference, _Projected(problem))


def run_penalty(problem: ViProblem, config: SolverConfig, reference=None) -> IterateTrace:
    """Penalty-driven scheme; iterates may leave H, optionally clamped to a box."""
    if config.algorithm != "penalty":
        raise InvalidInputError("config.algorithm must be 'penalty'")
    return _iterate(problem, config, reference, _Penalty(problem, config))


def run_multiplier(problem: ViProblem, config: SolverConfig, reference=None) -> IterateTrace:
    """Multiplier-driven (primal-dual) scheme; H is never projected onto.

    ``config.multiplier_safeguard`` is a box over the stacked vector
    (lam, mu) of length s + t.
    """
    if config.algorithm != "multiplier":
        raise InvalidInputError("config.algorithm must be 'multiplier'")
    set_ = problem.set
    if not isinstance(set_, PolyhedralSet):
        raise UnsupportedOperationError("multiplier scheme needs an affine (polyhedral) constraint set")
    box = config.multiplier_safeguard
    if box is not None and box.lower.size != set_.s + set_.t:
        raise InvalidInputError("multiplier safeguard must have length s + t")
    return _iterate(problem, config, reference, _Multiplier(problem, config), with_multipliers=True)
