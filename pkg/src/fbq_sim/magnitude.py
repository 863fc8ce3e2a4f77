"""Uniform-in-dB channel magnitude quantization codebooks.

Levels form a geometric ladder above an outage threshold; everything below
the first level is declared magnitude outage and the quantized value is the
level immediately to the left of the sample, so the quantizer always
underestimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ZETA_MAX = 8.0


def solve_zeta(n, y1: float, eta: float) -> float:
    """Solve n^{-z} (1 + n^{-z})^{n-1} = eta / y1 for z.

    The left side is strictly decreasing in z, so the root is found by
    bisection over z in (0, ZETA_MAX], evaluated in log space to survive the
    huge dynamic range at large n.  Raises ValueError("zeta out of range")
    when the target is outside what the bracket can reach, which signals a
    threshold y1 too extreme for this codebook size.  n may be any real
    size >= 2; the ladder equation extends continuously.
    """
    if n < 2:
        raise ValueError("need codebook size n >= 2")
    if y1 <= 0.0 or eta <= 0.0:
        raise ValueError("y1 and eta must be positive")
    log_n = np.log(float(n))
    target = np.log(eta / y1)

    def log_lhs(z):
        x = np.exp(-z * log_n)
        return -z * log_n + (n - 1) * np.log1p(x)

    lo, hi = 1e-12, ZETA_MAX
    if log_lhs(lo) < target or log_lhs(hi) > target:
        raise ValueError("zeta out of range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if log_lhs(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class MagnitudeCodebook:
    """Strictly increasing quantization levels for the squared magnitude,
    with the solved ladder exponent zeta attached."""

    levels: np.ndarray
    zeta: float

    def __post_init__(self):
        lv = np.array(self.levels, dtype=float)
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)
        if lv.ndim != 1 or lv.size < 2:
            raise ValueError("need at least 2 levels")
        if lv[0] <= 0.0 or np.any(np.diff(lv) <= 0.0):
            raise ValueError("levels must be positive and strictly increasing")
        if not 0.0 < self.zeta <= ZETA_MAX:
            raise ValueError("zeta out of range")

    @property
    def size(self) -> int:
        return self.levels.size

    @property
    def outage_threshold(self) -> float:
        return float(self.levels[0])


def build_uniform_db(N: int, q_dot: float, dist) -> MagnitudeCodebook:
    """Build the uniform-in-dB codebook of size N for magnitude outage
    probability q_dot under the given magnitude distribution.

    The first level is the q_dot quantile and successive levels grow by the
    constant ratio 1 + N^{-zeta(N)}, so levels are equally spaced in dB and
    the top level lands at eta * N^{zeta} by construction.
    """
    if not 0.0 < q_dot < 1.0:
        raise ValueError("q_dot must be in (0, 1)")
    y1 = dist.inv_cdf(q_dot)
    zeta = solve_zeta(N, y1, dist.eta)
    ratio = 1.0 + float(N) ** (-zeta)
    levels = y1 * ratio ** np.arange(N)
    return MagnitudeCodebook(levels=levels, zeta=zeta)


def quantize_magnitude(y: float, cb: MagnitudeCodebook):
    """Quantize a squared magnitude to (index, level).

    Returns (None, 0.0) on magnitude outage (y below the first level).
    Interval ownership is closed on the left: y equal to a level maps to that
    level; the top cell is unbounded.
    """
    if y < 0.0:
        raise ValueError("squared magnitude must be nonnegative")
    idx = int(np.searchsorted(cb.levels, y, side="right")) - 1
    if idx < 0:
        return None, 0.0
    return idx, float(cb.levels[idx])


def quantize_magnitude_batch(y: np.ndarray, cb: MagnitudeCodebook):
    """Vectorized quantizer: returns (idx, levels) with idx = -1 and level 0
    for samples in outage."""
    y = np.asarray(y, dtype=float)
    idx = np.searchsorted(cb.levels, y, side="right") - 1
    out = idx < 0
    vals = np.where(out, 0.0, cb.levels[np.maximum(idx, 0)])
    return idx, vals


def expected_inverse_quantized(cb: MagnitudeCodebook, dist) -> float:
    """Exact E[1/Ytilde] over the no-outage event (outage contributes zero).

    Sums (1/level_n) * P(level_n <= Y < level_{n+1}) cell by cell, with the
    top unbounded cell carrying the remaining upper tail mass.
    """
    F = dist.cdf(cb.levels)
    mass = np.empty(cb.size)
    mass[:-1] = np.diff(F)
    mass[-1] = 1.0 - F[-1]
    return float(np.sum(mass / cb.levels))


def quantized_inverse_bound(N: int, zeta: float, dist) -> float:
    """Analytic upper bound on E[1/Ytilde] for the uniform-in-dB codebook:
    rho * (1 + N^{-zeta} + omega N^{-2 zeta})."""
    x = float(N) ** (-zeta)
    return dist.rho * (1.0 + x + dist.omega * x * x)


def save_levels(cb: MagnitudeCodebook, path) -> None:
    """Write the levels as plain text, one full-precision double per line."""
    with open(path, "w", encoding="utf-8") as f:
        for y in cb.levels:
            f.write(f"{y:.17g}\n")


def load_levels(path) -> MagnitudeCodebook:
    """Read a plain-text level table; zeta is recovered from the ladder ratio."""
    levels = np.loadtxt(path, dtype=float, ndmin=1)
    if levels.size < 2:
        raise ValueError("need at least 2 levels")
    ratio = levels[1] / levels[0]
    zeta = -np.log(ratio - 1.0) / np.log(float(levels.size))
    return MagnitudeCodebook(levels=levels, zeta=float(zeta))
