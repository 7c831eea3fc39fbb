"""Exact and empirical conditional value-at-risk.

The empirical estimator is the plug-in version of the Rockafellar-Uryasev
formula,

    CVaR_N(Z) = inf_t { t + 1/(N*alpha) * sum_j [Z_j - t]_+ },

evaluated in closed form by sorting. Large values are bad (costs), so the
tail of interest is the upper tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "CvarEstimate",
    "check_alpha",
    "empirical_cvar",
    "empirical_cvar_vector",
    "exact_cvar_affine_uniform",
]


@dataclass(frozen=True)
class CvarEstimate:
    value: float
    minimizer_t: float
    n_samples: int


def check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0):
        raise InvalidInputError(f"risk level alpha must lie in (0, 1], got {alpha}")
    return alpha


def _tail_counts(n_samples: int, alpha: float) -> tuple[float, int, int]:
    """Return ``(N*alpha, floor(N*alpha), ceil(N*alpha))``.

    N*alpha is snapped to the nearest integer when it is within rounding
    error of one, e.g. 3 * 0.1 = 0.30000000000000004 * 10.
    """
    na = n_samples * alpha
    nearest = round(na)
    if abs(na - nearest) <= 1e-9 * max(1.0, na):
        m = lo = hi = int(nearest)
        return na, lo, max(hi, 1)
    m = int(math.floor(na))
    return na, m, m + 1


def _cvar_columns(Z: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise empirical CVaR of an ``(N, n)`` array (no validation)."""
    N = Z.shape[0]
    na, m, k_t = _tail_counts(N, alpha)
    # descending order: S[0] is the largest sample of each column
    S = -np.sort(-Z, axis=0)
    if m == 0:
        # N*alpha <= 1: the whole weight sits on the largest sample
        return S[0].copy(), S[k_t - 1]
    if m >= N:
        total = S.sum(axis=0)
    else:
        total = S[:m].sum(axis=0) + (na - m) * S[m]
    # a constant column is its own CVaR; avoid summation round-off
    value = np.where(S[0] == S[-1], S[0], total / na)
    return value, S[k_t - 1]


def _as_batch(values) -> np.ndarray:
    Z = np.asarray(values, dtype=float)
    if Z.ndim != 2:
        raise InvalidInputError(f"sample batch must be a 2-D array, got shape {Z.shape}")
    if Z.shape[0] < 1:
        raise InvalidInputError("sample batch needs at least one sample")
    if not np.all(np.isfinite(Z)):
        raise InvalidInputError("sample batch contains non-finite values")
    return Z


def empirical_cvar(samples, alpha) -> CvarEstimate:
    """Empirical CVaR of a scalar sample at level ``alpha``.

    With the samples sorted in decreasing order Z_(1) >= ... >= Z_(N) and
    m = floor(N*alpha), the infimum over t is attained at the
    ceil(N*alpha)-th largest sample and equals

        (sum_{j<=m} Z_(j) + (N*alpha - m) * Z_(m+1)) / (N*alpha).

    The result does not depend on the order of ``samples``.
    """
    alpha = check_alpha(alpha)
    Z = np.asarray(samples, dtype=float).reshape(-1)
    Z = _as_batch(Z[:, None])
    value, t = _cvar_columns(Z, alpha)
    return CvarEstimate(float(value[0]), float(t[0]), Z.shape[0])


def empirical_cvar_vector(batch, alpha) -> np.ndarray:
    """Apply :func:`empirical_cvar` to every column of an ``(N, n)`` batch.

    Row j of the batch must hold the cost vector of uncertainty event j, so
    all components share the same N events.
    """
    alpha = check_alpha(alpha)
    Z = _as_batch(batch)
    return _cvar_columns(Z, alpha)[0]


def exact_cvar_affine_uniform(offset, noise_gain, alpha) -> float:
    """CVaR of ``offset + noise_gain * U`` with U ~ Uniform(0, 1).

    The upper alpha-tail of U(0,1) is U(1 - alpha, 1) with mean 1 - alpha/2;
    translation invariance and positive homogeneity do the rest.
    """
    alpha = check_alpha(alpha)
    if noise_gain < 0:
        raise InvalidInputError(f"noise_gain must be nonnegative, got {noise_gain}")
    return float(offset) + float(noise_gain) * (1.0 - alpha / 2.0)
