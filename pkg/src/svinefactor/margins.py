"""Rank-based pseudo-observations, triweight KDE, and leave-one-out entropy.

The kernel is the triweight ``W(z) = (35/32)(1 - z^2)^3`` on [-1, 1]: it is
twice continuously differentiable with compact support.  Because ``W`` is a
polynomial in ``z^2``, window sums of the kernel reduce to prefix sums of
powers of the sample, which makes both the KDE and the leave-one-out entropy
exact O(T log T) operations.

The bandwidth rule is ``b = sigma_hat * T^(-1/4)`` with the 1/(T-1) variance
convention used throughout the package.

Ranks use the "max rank" convention for ties, so pseudo-observations are
``count(sample <= x) / (T + 1)``, strictly inside (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

TRIWEIGHT_AT_ZERO = 35.0 / 32.0
LOG_FLOOR = 1e-12  # floor on leave-one-out densities before taking logs


def bandwidth_rule(sample):
    """sigma_hat * T^(-1/4) with the sample (ddof=1) standard deviation."""
    sample = np.asarray(sample, dtype=float)
    t = sample.size
    if t < 2:
        raise DataError("bandwidth rule needs at least two observations")
    return float(np.std(sample, ddof=1) * t ** (-0.25))


def ecdf(sample, x):
    """Empirical CDF with the 1/(T+1) normalization: count(sample <= x)/(T+1)."""
    sample = np.sort(np.asarray(sample, dtype=float))
    t = sample.size
    ranks = np.searchsorted(sample, x, side="right")
    return ranks / (t + 1.0)


def pseudo_observations(values):
    """Column-wise rank transform rank/(T+1); ties take the max rank.

    Parameters
    ----------
    values : (T,) or (T, K) array

    Returns
    -------
    Array of the same shape with entries strictly inside (0, 1).
    """
    values = np.asarray(values, dtype=float)
    squeeze = values.ndim == 1
    if squeeze:
        values = values[:, None]
    t = values.shape[0]
    out = np.empty_like(values)
    for j in range(values.shape[1]):
        col = values[:, j]
        out[:, j] = np.searchsorted(np.sort(col), col, side="right") / (t + 1.0)
    return out[:, 0] if squeeze else out


def _power_window_sums(sorted_sample, prefix, x, bandwidth):
    """Sum of W((x_s - x)/b) over sample points within +-b of each x.

    ``prefix`` holds extended-precision prefix sums of sorted_sample**j for
    j = 0..6, so the polynomial kernel sums come out of binomial expansions
    of (x_s - x)^2m.  Extended precision keeps the cancellation noise of
    the alternating expansion far below any meaningful kernel mass.
    """
    xq = np.asarray(x, dtype=float)
    lo = np.searchsorted(sorted_sample, xq - bandwidth, side="left")
    hi = np.searchsorted(sorted_sample, xq + bandwidth, side="right")
    s = [prefix[j][hi] - prefix[j][lo] for j in range(7)]
    x = xq.astype(np.longdouble)
    x2 = x * x
    x3 = x2 * x
    x4 = x2 * x2
    x5 = x4 * x
    x6 = x4 * x2
    m2 = s[2] - 2 * x * s[1] + x2 * s[0]
    m4 = s[4] - 4 * x * s[3] + 6 * x2 * s[2] - 4 * x3 * s[1] + x4 * s[0]
    m6 = (
        s[6]
        - 6 * x * s[5]
        + 15 * x2 * s[4]
        - 20 * x3 * s[3]
        + 15 * x4 * s[2]
        - 6 * x5 * s[1]
        + x6 * s[0]
    )
    b2 = np.longdouble(bandwidth) * np.longdouble(bandwidth)
    total = s[0] - 3 * m2 / b2 + 3 * m4 / (b2 * b2) - m6 / (b2 * b2 * b2)
    return TRIWEIGHT_AT_ZERO * np.maximum(total, 0.0).astype(float)


def _prefix_powers(sorted_sample):
    xs = sorted_sample.astype(np.longdouble)
    powers = [np.ones_like(xs), xs]
    for j in range(2, 7):
        powers.append(powers[j - 1] * xs)
    prefix = []
    for j in range(7):
        p = np.zeros(xs.size + 1, dtype=np.longdouble)
        np.cumsum(powers[j], out=p[1:])
        prefix.append(p)
    return prefix


def kde(sample, bandwidth, x):
    """Triweight kernel density estimate at x: (1/(T b)) sum_s W((x_s - x)/b)."""
    sample = np.asarray(sample, dtype=float)
    if bandwidth <= 0:
        raise DataError("bandwidth must be positive")
    center = sample.mean()  # conditioning only; W depends on differences
    sorted_sample = np.sort(sample - center)
    prefix = _prefix_powers(sorted_sample)
    sums = _power_window_sums(sorted_sample, prefix, np.asarray(x, float) - center, bandwidth)
    return sums / (sample.size * bandwidth)


def loo_entropy(sample, bandwidth=None):
    """Leave-one-out kernel entropy estimate: mean_t log g_(-t)(x_t).

    Each leave-one-out density is floored at a small constant before the log
    so the optimizer can traverse rotations whose projections leave empty
    kernel windows.
    """
    sample = np.asarray(sample, dtype=float)
    t = sample.size
    if t < 2:
        raise DataError("leave-one-out entropy needs at least two observations")
    if bandwidth is None:
        bandwidth = bandwidth_rule(sample)
    if bandwidth <= 0:
        raise DataError("bandwidth must be positive")
    center = sample.mean()
    shifted = sample - center
    sorted_sample = np.sort(shifted)
    prefix = _prefix_powers(sorted_sample)
    sums = _power_window_sums(sorted_sample, prefix, shifted, bandwidth)
    loo_sums = sums - TRIWEIGHT_AT_ZERO
    # kernel mass below the evaluation noise floor means an empty window
    loo_sums[loo_sums < 1e-9] = 0.0
    loo = loo_sums / ((t - 1) * bandwidth)
    return float(np.mean(np.log(np.maximum(loo, LOG_FLOOR))))


def empirical_quantile(sorted_sample, u):
    """Inverse of the rank/(T+1) ECDF, linearly interpolated.

    The plotting positions are t/(T+1) for t = 1..T; values of ``u`` outside
    [1/(T+1), T/(T+1)] clamp to the extreme order statistics.
    """
    sorted_sample = np.asarray(sorted_sample, dtype=float)
    t = sorted_sample.size
    if t == 0:
        raise DataError("empty sample")
    positions = np.arange(1, t + 1) / (t + 1.0)
    return np.interp(u, positions, sorted_sample)


@dataclass
class MarginModel:
    """Empirical margin of one projected factor column.

    Holds the raw sample, the rule-based bandwidth, and a sorted copy used
    for quantile mapping.
    """

    sample: np.ndarray
    bandwidth: float = field(default=0.0)
    sorted_sample: np.ndarray = field(default=None)

    def __post_init__(self):
        self.sample = np.asarray(self.sample, dtype=float)
        if self.bandwidth == 0.0:
            self.bandwidth = bandwidth_rule(self.sample)
        if self.sorted_sample is None:
            self.sorted_sample = np.sort(self.sample)

    def cdf(self, x):
        return ecdf(self.sorted_sample, x)

    def quantile(self, u):
        return empirical_quantile(self.sorted_sample, u)

    def density(self, x):
        return kde(self.sample, self.bandwidth, x)

    def entropy(self):
        return loo_entropy(self.sample, self.bandwidth)
