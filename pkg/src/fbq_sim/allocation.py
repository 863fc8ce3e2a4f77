"""Feedback bit allocation: closed-form asymptotic laws, exact integer
minimization of the power-bound objective, the sufficient total feedback
rate, and the distortion scaling bound."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .directions import lambda_m
from .magnitude import solve_zeta
from .product import outage_split


@lru_cache(maxsize=None)
def _zeta(n: float, y1: float, eta: float) -> float:
    # the integer sweeps revisit the same (size, threshold) pairs constantly
    return solve_zeta(n, y1, eta)


@dataclass(frozen=True)
class QoSTargets:
    """Per-user target SINRs (linear scale) and outage probabilities."""

    gammas: np.ndarray
    qs: np.ndarray

    def __post_init__(self):
        g = np.array(self.gammas, dtype=float)
        q = np.array(self.qs, dtype=float)
        g.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "qs", q)
        if g.shape != q.shape or g.ndim != 1:
            raise ValueError("gammas and qs must be 1-d and equally long")
        if np.any(g <= 0.0) or np.any((q <= 0.0) | (q >= 1.0)):
            raise ValueError("need gamma > 0 and q in (0, 1)")

    @property
    def n_users(self) -> int:
        return self.gammas.size

    @property
    def gamma_bar(self) -> float:
        return float(np.exp(np.mean(np.log(self.gammas))))

    @property
    def q_bar(self) -> float:
        return float(np.exp(np.mean(np.log(self.qs))))


def kappa_mu(M: int) -> float:
    """Codebook-geometry constant ((M-1)/M) * log2(16 lambda_M / (pi (M-1)))."""
    if M < 2:
        raise ValueError("need M >= 2")
    return (M - 1) / M * math.log2(16.0 * lambda_m(M) / (math.pi * (M - 1)))


@dataclass(frozen=True)
class BitAllocation:
    """Continuous per-user magnitude and direction bit counts plus the
    constants they were derived from."""

    mag_bits: np.ndarray
    dir_bits: np.ndarray
    kappa: float
    mag_bits_avg: float
    dir_bits_avg: float

    @property
    def totals(self) -> np.ndarray:
        return self.mag_bits + self.dir_bits

    @property
    def budget(self) -> float:
        return float(np.sum(self.totals))


def allocate_bits_closed_form(B: float, targets: QoSTargets, M: int) -> BitAllocation:
    """Asymptotically optimal continuous bit split for total budget B.

    Every user's magnitude bits sit log(gamma_k/gamma_bar) + log(q_bar/q_k)
    away from the average share; direction bits scale those offsets by
    (M-1) and 2(M-1).  Raises when the budget is too small for all counts to
    stay positive, which is the signal that the asymptotic regime does not
    apply yet.
    """
    if B <= 0.0:
        raise ValueError("need B > 0")
    if targets.n_users != M:
        raise ValueError("targets must cover exactly M users")
    kap = kappa_mu(M)
    log_inv_qbar = math.log2(1.0 / targets.q_bar)
    mag_avg = B / M**2 - (M - 1) / M * log_inv_qbar - kap
    dir_avg = (M - 1) / M**2 * B + (M - 1) / M * log_inv_qbar + kap

    dg = np.log2(targets.gammas / targets.gamma_bar)
    dq = np.log2(targets.q_bar / targets.qs)
    mag_bits = mag_avg + dg + dq
    dir_bits = dir_avg + (M - 1) * dg + 2 * (M - 1) * dq
    if np.any(mag_bits <= 0.0) or np.any(dir_bits <= 0.0):
        raise ValueError("budget below asymptotic regime")
    return BitAllocation(mag_bits=mag_bits, dir_bits=dir_bits, kappa=kap,
                         mag_bits_avg=mag_avg, dir_bits_avg=dir_avg)


def round_bits(alloc: BitAllocation, repair: bool = False):
    """Round an allocation to integers (nearest, half away from zero).

    With repair=True the entries with the largest fractional parts are
    adjusted so the rounded total matches the continuous budget exactly.
    Returns (mag_bits, dir_bits) integer arrays.
    """
    cont = np.concatenate([alloc.mag_bits, alloc.dir_bits])
    ints = np.floor(cont + 0.5).astype(int)
    if repair:
        budget = int(round(alloc.budget))
        diff = budget - int(ints.sum())
        if diff != 0:
            frac = cont - np.floor(cont)
            # push up the closest-to-round-up entries, or down the closest-to-round-down
            order = np.argsort(frac)[::-1] if diff > 0 else np.argsort(frac)
            for j in range(abs(diff)):
                ints[order[j % ints.size]] += 1 if diff > 0 else -1
    n = alloc.mag_bits.size
    return ints[:n], ints[n:]


def lagrange_sizes(B: float, gammas, theta0s, M: int):
    """Continuous optimal codebook sizes from the multiplier solution.

    Returns (mag_sizes, dir_sizes) with prod(mag*dir) = 2^B; the logs agree
    with allocate_bits_closed_form when theta0 = (pi/4) q.
    """
    gammas = np.asarray(gammas, dtype=float)
    theta0s = np.asarray(theta0s, dtype=float)
    if B <= 0.0:
        raise ValueError("need B > 0")
    lam = lambda_m(M)
    c = 4.0 * lam / (M - 1)
    log_Lambda = ((M - 1) / M) * math.log(c) \
        + float(np.mean(np.log(gammas))) \
        + ((2 * M - 1) / M**2) * float(np.sum(np.log(1.0 / theta0s))) \
        - B * math.log(2.0) / M**2
    log_mag = np.log(gammas / theta0s) - log_Lambda
    log_dir = (M - 1) * (math.log(c) + np.log(gammas / theta0s**2) - log_Lambda)
    return np.exp(log_mag), np.exp(log_dir)


def per_user_objective(mag_bits: float, dir_bits: float, gamma: float, theta0: float,
                       y1: float, dist, M: int) -> float:
    """One user's term of the average-power objective (without the common
    2 rho / pi scale): (gamma/theta0) * magnitude factor * direction factor."""
    nm = 2.0 ** mag_bits
    nd = 2.0 ** dir_bits
    zeta = _zeta(nm, y1, dist.eta)
    mag = 1.0 + nm**-zeta + dist.omega * nm ** (-2.0 * zeta)
    dirf = 1.0 + (4.0 * lambda_m(M) / theta0) * nd ** (-1.0 / (M - 1))
    return (gamma / theta0) * mag * dirf


def allocation_objective(mag_bits, dir_bits, targets: QoSTargets, dist, M: int,
                         alpha: float = 0.5) -> float:
    """Average-power objective (without the 2 rho / pi scale) of a bit split."""
    total = 0.0
    for k in range(targets.n_users):
        q_dot, _, theta0 = outage_split(float(targets.qs[k]), alpha)
        y1 = dist.inv_cdf(q_dot)
        total += per_user_objective(float(np.asarray(mag_bits)[k]), float(np.asarray(dir_bits)[k]),
                                    float(targets.gammas[k]), theta0, y1, dist, M)
    return total


def allocate_bits_numerical(B: int, targets: QoSTargets, dist, M: int, alpha: float = 0.5):
    """Exact integer bit allocation minimizing the power-bound objective.

    Enumerates, per user, every (mag, dir) split of every per-user budget,
    then combines users by dynamic programming over the remaining budget;
    this is an exhaustive search over all integer compositions with at least
    one bit per codebook.  Returns (mag_bits, dir_bits, objective).
    """
    if targets.n_users != M:
        raise ValueError("targets must cover exactly M users")
    B = int(B)
    if B < 2 * M:
        raise ValueError("budget too small: need at least one bit per codebook")

    theta0s = []
    y1s = []
    for k in range(M):
        q_dot, _, theta0 = outage_split(float(targets.qs[k]), alpha)
        theta0s.append(theta0)
        y1s.append(dist.inv_cdf(q_dot))

    b_hi = B - 2 * (M - 1)  # leave one bit per codebook for everyone else
    user_cost = np.full((M, b_hi + 1), np.inf)
    user_split = np.zeros((M, b_hi + 1), dtype=int)
    for k in range(M):
        for b in range(2, b_hi + 1):
            best = np.inf
            best_m = 1
            for mb in range(1, b):
                try:
                    val = per_user_objective(mb, b - mb, float(targets.gammas[k]),
                                             theta0s[k], y1s[k], dist, M)
                except ValueError:
                    # ladder equation has no root: this size cannot carry the
                    # guaranteed bound, so the split is not a candidate
                    continue
                if val < best:
                    best, best_m = val, mb
            user_cost[k, b] = best
            user_split[k, b] = best_m

    # dp[k][b]: best cost of users 0..k using exactly b bits
    dp = np.full((M, B + 1), np.inf)
    choice = np.zeros((M, B + 1), dtype=int)
    for b in range(2, min(b_hi, B) + 1):
        dp[0, b] = user_cost[0, b]
        choice[0, b] = b
    for k in range(1, M):
        for b in range(2 * (k + 1), B + 1):
            for bk in range(2, min(b_hi, b - 2 * k) + 1):
                val = dp[k - 1, b - bk] + user_cost[k, bk]
                if val < dp[k, b]:
                    dp[k, b] = val
                    choice[k, b] = bk
    if not np.isfinite(dp[M - 1, B]):
        raise ValueError("no feasible integer composition")

    mag = np.zeros(M, dtype=int)
    dirb = np.zeros(M, dtype=int)
    b = B
    for k in range(M - 1, -1, -1):
        bk = choice[k, b]
        mag[k] = user_split[k, bk]
        dirb[k] = bk - mag[k]
        b -= bk
    return mag, dirb, float(dp[M - 1, B])


@dataclass(frozen=True)
class FeasibilityReport:
    """Sufficient total feedback rate and the quantities it is built from."""

    B_min: float
    Q: np.ndarray
    Delta: float
    b_const: float


def min_feedback_rate(targets: QoSTargets, M: int) -> FeasibilityReport:
    """Total feedback rate sufficient for the targets to be achievable.

    Scales with log of the geometric-mean SINR and inverse outage targets,
    plus a penalty when users' QoS indicators sqrt(gamma)/q deviate from
    their geometric mean.
    """
    if targets.n_users != M:
        raise ValueError("targets must cover exactly M users")
    if np.any(targets.gammas <= 1.0) or np.any(targets.qs > 0.2):
        raise ValueError("theorem assumptions violated: need gamma > 1 and q <= 0.2")
    Q = np.sqrt(targets.gammas) / targets.qs
    Q_bar = float(np.exp(np.mean(np.log(Q))))
    Delta = Q_bar / float(np.min(Q))
    kap = kappa_mu(M)
    b_const = 0.5 * M**2 + 1.5 * M**2 * math.log2(M) + M**2 * kap
    B_min = (0.5 * M**2 * math.log2(targets.gamma_bar)
             + (M**2 - M) * math.log2(1.0 / targets.q_bar)
             + M**2 * math.log2(Delta)
             + b_const)
    return FeasibilityReport(B_min=B_min, Q=Q, Delta=Delta, b_const=b_const)


def sigma_mu(M: int) -> float:
    """Distortion-scaling constant in front of 2^{-B/M^2}."""
    num = math.pi**1.5 * (M - 1) * math.gamma((M + 1) / 2.0)
    den = 16.0 * math.gamma(M / 2.0)
    return 16.0 * M / (math.pi * (M - 1)) * (num / den) ** (1.0 / M)


def distortion_bound(B: float, M: int, q_bar: float) -> float:
    """Upper bound on the relative excess average power over perfect CSI:
    (sigma_MU / q_bar) * 2^{-B/M^2}."""
    if B <= 0.0:
        raise ValueError("need B > 0")
    return sigma_mu(M) / q_bar * 2.0 ** (-B / M**2)


def allocation_rows(alloc_mag, alloc_dir):
    """CSV-ready (user, mag_bits, dir_bits, total) tuples."""
    mag = np.asarray(alloc_mag)
    dirb = np.asarray(alloc_dir)
    return [(k + 1, mag[k], dirb[k], mag[k] + dirb[k]) for k in range(mag.size)]
