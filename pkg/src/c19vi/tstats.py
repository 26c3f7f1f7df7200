"""Nonparametric time-series tests: Mann-Kendall, Theil-Sen slope, Pettitt.

All functions are pure and take any 1-D real sequence. Ties are exact
floating-point equality.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtr

MIN_N = 5
DEFAULT_ALPHA = 0.05


class Direction(str, Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"
    NO_TREND = "notrend"


@dataclass(frozen=True)
class TrendResult:
    direction: Direction
    s_statistic: int
    variance: float
    z: float
    p_value: float
    slope: float
    n: int
    short_series: bool = False


@dataclass(frozen=True)
class ChangePointResult:
    homogeneous: bool
    k_statistic: int
    changepoint: int | None
    p_value: float
    n: int
    short_series: bool = False


def _as_series(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    return x


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def _sign_matrix(x: np.ndarray) -> np.ndarray:
    # D[i, j] = sign(x[i] - x[j])
    return np.sign(x[:, None] - x[None, :]).astype(np.int64)


def kendall_s(series) -> int:
    """S = sum over i<j of sign(x_j - x_i)."""
    x = _as_series(series)
    if len(x) < 2:
        return 0
    d = _sign_matrix(x)
    # upper triangle of D holds sign(x_i - x_j) for i<j
    return int(-np.triu(d, 1).sum())


def tie_groups(series) -> np.ndarray:
    """Sizes of groups of exactly equal values (groups of size 1 included)."""
    _, counts = np.unique(_as_series(series), return_counts=True)
    return counts


def kendall_variance(series) -> float:
    x = _as_series(series)
    n = len(x)
    t = tie_groups(x).astype(np.int64)
    total = n * (n - 1) * (2 * n + 5) - int(np.sum(t * (t - 1) * (2 * t + 5)))
    return total / 18.0


def sen_slope(series) -> float:
    """Median of all pairwise slopes (x_j - x_i) / (j - i), i < j."""
    x = _as_series(series)
    n = len(x)
    if n < 2:
        raise ValueError(f"Sen slope needs at least 2 points, got {n}")
    i, j = np.triu_indices(n, 1)
    return float(np.median((x[j] - x[i]) / (j - i)))


def mann_kendall(series, alpha: float = DEFAULT_ALPHA) -> TrendResult:
    """Two-sided Mann-Kendall trend test with tie correction.

    Series shorter than MIN_N yield NoTrend with p = 1 and ``short_series``
    set. The Sen slope is attached whenever n >= 2 (NaN otherwise).
    """
    _check_alpha(alpha)
    x = _as_series(series)
    n = len(x)
    slope = sen_slope(x) if n >= 2 else math.nan
    if n < MIN_N:
        return TrendResult(Direction.NO_TREND, kendall_s(x), kendall_variance(x) if n else 0.0,
                           0.0, 1.0, slope, n, short_series=True)
    s = kendall_s(x)
    var = kendall_variance(x)
    if s == 0 or var <= 0:
        z = 0.0
    else:
        z = (s - 1) / math.sqrt(var) if s > 0 else (s + 1) / math.sqrt(var)
    p = float(min(1.0, 2.0 * ndtr(-abs(z))))
    if p < alpha and s > 0:
        direction = Direction.INCREASING
    elif p < alpha and s < 0:
        direction = Direction.DECREASING
    else:
        direction = Direction.NO_TREND
    return TrendResult(direction, s, var, z, p, slope, n)


def pettitt_u(series) -> np.ndarray:
    """U_t = sum_{i<=t} sum_{j>t} sign(x_i - x_j) for t = 0 .. n-2."""
    x = _as_series(series)
    if len(x) < 2:
        return np.zeros(0, dtype=np.int64)
    # row i of the sign matrix sums to 2*rank_i - n - 1; the within-prefix
    # block is antisymmetric, so prefix sums of the row totals give U_t
    row = _sign_matrix(x).sum(axis=1)
    return np.cumsum(row)[:-1]


def pettitt(series, alpha: float = DEFAULT_ALPHA) -> ChangePointResult:
    """Pettitt single-changepoint test with the asymptotic p-value.

    ``changepoint`` is the 0-based index of the last element of the first
    segment (first occurrence of max |U_t|). Series shorter than MIN_N
    still report K and the changepoint but are always homogeneous, p = 1.
    """
    _check_alpha(alpha)
    x = _as_series(series)
    n = len(x)
    if n < 2:
        return ChangePointResult(True, 0, None, 1.0, n, short_series=True)
    u = np.abs(pettitt_u(x))
    tau = int(np.argmax(u))
    k = int(u[tau])
    if n < MIN_N:
        return ChangePointResult(True, k, tau, 1.0, n, short_series=True)
    p = min(1.0, 2.0 * math.exp(-6.0 * k * k / (n ** 3 + n ** 2)))
    return ChangePointResult(p >= alpha, k, tau, p, n)
