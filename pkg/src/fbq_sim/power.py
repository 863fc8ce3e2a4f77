"""Transmit power control for zero-forcing beams.

Covers the perfect-CSI baseline, the closed-form robust power bound over
sector-type channel uncertainty regions, the minimum direction-codebook size
that guarantees robust feasibility, the small-cap asymptotic expansion of the
bound, the analytic average-power bound, and a sampling oracle that estimates
the worst-case SINR inside a sector directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, zf_geometry
from .directions import lambda_m
from .magnitude import solve_zeta
from .product import QuantizedState, outage_split


@dataclass(frozen=True)
class PowerAllocation:
    """Per-user transmit powers (noise power 1).  Silent users carry 0.
    When infeasible, powers are all zero and `feasible` is False."""

    powers: np.ndarray
    feasible: bool

    @property
    def total(self) -> float:
        return float(np.sum(self.powers))


@dataclass(frozen=True)
class SectorRegion:
    """Channel uncertainty set: magnitude shell [sqrt(r), sqrt(R)) around a
    quantized direction cap of opening phi.  The upper radius R never binds
    (worst case sits on the lower shell) but is kept for completeness."""

    r: float
    R: float
    u_tilde: np.ndarray
    phi: float

    def __post_init__(self):
        if not 0.0 < self.r <= self.R:
            raise ValueError("need 0 < r <= R")
        if not 0.0 <= self.phi < np.pi / 2.0:
            raise ValueError("phi must be in [0, pi/2)")
        u = np.array(self.u_tilde, dtype=float)
        u /= np.linalg.norm(u)
        u.setflags(write=False)
        object.__setattr__(self, "u_tilde", u)


def csi_zf_power(channels: ChannelSet, gammas, theta0s) -> PowerAllocation:
    """Perfect-CSI zero-forcing powers meeting the SINR targets exactly.

    Users whose channel sits within theta0 of the other users' span are
    declared in outage and get zero power; everyone else needs
    gamma / (||h||^2 sin^2 theta) since ZF removes all interference.
    """
    gammas = np.asarray(gammas, dtype=float)
    theta0s = np.asarray(theta0s, dtype=float)
    _, sin_theta = zf_geometry(channels.directions)
    theta = np.arcsin(np.clip(sin_theta, 0.0, 1.0))
    served = theta >= theta0s
    powers = np.where(served, gammas / (channels.magnitudes_sq * sin_theta**2), 0.0)
    return PowerAllocation(powers=powers, feasible=True)


def closed_form_powers(r, theta, phi, gamma, active):
    """Closed-form robust powers for one realization (array inputs, length M).

    Sets the worst-case SINR lower bound of every active user equal to its
    target and solves the resulting linear system.  Returns (powers, feasible);
    infeasible when some active user has theta <= phi or when the alpha
    weights sum to >= 1.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    active = np.asarray(active, dtype=bool)

    M = r.shape[0]
    powers = np.zeros(M)
    if not active.any():
        return powers, True
    if np.any(theta[active] <= phi[active]):
        return powers, False

    s2phi = np.sin(phi) ** 2
    den = gamma * s2phi + np.sin(theta - phi) ** 2
    alpha = np.where(active, gamma * s2phi / den, 0.0)
    ratio = np.where(active, gamma / (r * den), 0.0)  # alpha_k / beta_k

    alpha_sum = float(alpha.sum())
    if alpha_sum >= 1.0:
        return powers, False
    total = float(ratio.sum()) / (1.0 - alpha_sum)
    powers = alpha * total + ratio
    return powers, True


def closed_form_robust(state: QuantizedState, phis, gammas) -> PowerAllocation:
    """Closed-form robust power bound for a quantized state (r = quantized
    magnitude, theta from quantized directions)."""
    powers, ok = closed_form_powers(state.y_quant, state.theta, phis, gammas, state.active)
    return PowerAllocation(powers=powers, feasible=ok)


def closed_form_powers_batch(r, theta, phi, gamma, active):
    """Vectorized closed_form_powers over (n, M) arrays.

    phi and gamma are per-user (length M).  Returns (powers (n, M),
    feasible (n,)).  Rows that are infeasible have zero powers.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    active = np.asarray(active, dtype=bool)
    phi = np.broadcast_to(np.asarray(phi, dtype=float), r.shape)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), r.shape)

    geom_ok = np.where(active, theta > phi, True).all(axis=1)
    s2phi = np.sin(phi) ** 2
    den = gamma * s2phi + np.sin(np.maximum(theta - phi, 0.0)) ** 2
    den = np.maximum(den, 1e-300)
    alpha = np.where(active, gamma * s2phi / den, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(active & (r > 0), gamma / (r * den), 0.0)
    alpha_sum = alpha.sum(axis=1)
    feasible = geom_ok & (alpha_sum < 1.0)
    total = np.where(feasible, ratio.sum(axis=1) / np.maximum(1.0 - alpha_sum, 1e-300), 0.0)
    powers = np.where(feasible[:, None], alpha * total[:, None] + ratio, 0.0)
    return powers, feasible


def mqcs_min_dir_size(gamma: float, theta0: float, M: int) -> int:
    """Smallest direction-codebook size that guarantees feasibility of the
    robust power control problem for an active user with target SINR gamma
    and angle threshold theta0."""
    if gamma <= 0.0 or not 0.0 < theta0 < np.pi / 2.0:
        raise ValueError("need gamma > 0 and theta0 in (0, pi/2)")
    inner = math.sin(theta0) / (1.0 + math.sqrt((M - 1) * gamma))
    denom = math.sin(math.atan(inner))
    return int(math.ceil((4.0 * lambda_m(M) / denom) ** (M - 1)))


def asymptotic_power_terms(state: QuantizedState, phis, gammas):
    """Small-phi expansion terms of the closed-form sum power.

    Returns (e, f, approx_sum) with e_k = (gamma_k/r_k)(1 + z^2) and
    f_k = (2 gamma_k/r_k)(z + z^3), z = cot(theta_k), zeroed for silent
    users, and approx_sum = sum(e) + sum(f * phi).
    """
    gammas = np.asarray(gammas, dtype=float)
    phis = np.asarray(phis, dtype=float)
    z = np.where(state.active, 1.0 / np.tan(np.maximum(state.theta, 1e-300)), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_r = np.where(state.active, 1.0 / state.y_quant, 0.0)
    e = gammas * inv_r * (1.0 + z * z)
    f = 2.0 * gammas * inv_r * (z + z**3)
    approx = float(e.sum() + (f * phis).sum())
    return e, f, approx


def average_power_bound(M: int, gammas, qs, mag_sizes, dir_sizes, dist, alpha: float = 0.5):
    """Analytic bound on the average sum power of the limited-feedback system.

    Returns (full, simplified): the full form keeps the solved ladder
    exponent zeta and the omega term per user; the simplified form replaces
    the magnitude factor by 1 + 1/N_mag.
    """
    gammas = np.asarray(gammas, dtype=float)
    qs = np.asarray(qs, dtype=float)
    mag_sizes = np.asarray(mag_sizes, dtype=int)
    dir_sizes = np.asarray(dir_sizes, dtype=int)
    if np.any(mag_sizes < 2) or np.any(dir_sizes < 2):
        raise ValueError("codebook sizes must be >= 2")
    lam = lambda_m(M)
    full = 0.0
    simp = 0.0
    for k in range(gammas.size):
        q_dot, _, theta0 = outage_split(float(qs[k]), alpha)
        y1 = dist.inv_cdf(q_dot)
        zeta = solve_zeta(int(mag_sizes[k]), y1, dist.eta)
        nm = float(mag_sizes[k])
        nd = float(dir_sizes[k])
        dir_term = 1.0 + (4.0 * lam / theta0) * nd ** (-1.0 / (M - 1))
        full += (gammas[k] / theta0) * (1.0 + nm**-zeta + dist.omega * nm ** (-2 * zeta)) * dir_term
        simp += (gammas[k] / theta0) * (1.0 + 1.0 / nm + (4.0 * lam / theta0) * nd ** (-1.0 / (M - 1)))
    scale = 2.0 * dist.rho / np.pi
    return scale * full, scale * simp


@dataclass(frozen=True)
class WorstCaseEstimate:
    """Per-user worst-case SINR information from the sampling oracle.

    sampled_min upper-bounds the true infimum (it is a minimum of exact SINRs
    over points of the uncertainty set) and converges to it from above;
    analytic_bound lower-bounds the infimum by decoupling numerator and
    interference extremes, and equals the target by construction for the
    closed-form power solution.
    """

    sampled_min: float
    analytic_bound: float


def worst_case_sinr(powers, beams, sectors, n_samples: int, rng: np.random.Generator):
    """Estimate each active user's worst-case SINR over its sector.

    `sectors` is a list with one SectorRegion per user, or None for silent
    users (their entry in the result is None).  Samples live on the lower
    magnitude shell ||w|| = sqrt(r): random cap angles plus the deterministic
    worst-numerator direction and a sweep of the cap boundary ring.
    """
    powers = np.asarray(powers, dtype=float)
    beams = np.asarray(beams, dtype=float)
    M = beams.shape[1]
    results = []
    for k, sec in enumerate(sectors):
        if sec is None:
            results.append(None)
            continue
        v_k = beams[k]
        others = [l for l in range(len(sectors)) if l != k and powers[l] > 0.0]
        sin_theta = float(abs(v_k @ sec.u_tilde))
        # worst numerator direction: tilt away from the beam inside the cap
        e = v_k - (v_k @ sec.u_tilde) * sec.u_tilde
        e_norm = np.linalg.norm(e)
        e = e / e_norm if e_norm > 1e-300 else _any_orthogonal(sec.u_tilde)

        psi = np.concatenate([
            rng.uniform(0.0, sec.phi, size=n_samples // 2),
            np.full(n_samples - n_samples // 2, sec.phi),
        ])
        g = rng.standard_normal((psi.size, M))
        g -= np.outer(g @ sec.u_tilde, sec.u_tilde)
        g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
        W = np.cos(psi)[:, None] * sec.u_tilde[None, :] + np.sin(psi)[:, None] * g
        w_star = np.cos(sec.phi) * sec.u_tilde - np.sin(sec.phi) * e
        W = np.vstack([W, w_star[None, :]])
        W *= np.sqrt(sec.r)

        num = powers[k] * (W @ v_k) ** 2
        den = np.ones(W.shape[0])
        for l in others:
            den += powers[l] * (W @ beams[l]) ** 2
        sampled = float(np.min(num / den))

        interf = sum(powers[l] for l in others)
        s_worst = np.sin(max(np.arcsin(min(sin_theta, 1.0)) - sec.phi, 0.0))
        analytic = powers[k] * sec.r * s_worst**2 / (interf * sec.r * np.sin(sec.phi) ** 2 + 1.0)
        results.append(WorstCaseEstimate(sampled_min=sampled, analytic_bound=float(analytic)))
    return results


def _any_orthogonal(u: np.ndarray) -> np.ndarray:
    v = np.zeros_like(u)
    v[int(np.argmin(np.abs(u)))] = 1.0
    v -= (v @ u) * u
    return v / np.linalg.norm(v)
