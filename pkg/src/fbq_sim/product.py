"""Per-user product codebooks (magnitude ladder x direction packing), the
quantized system state, activity flags, and outage estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, angle_to_subspace, zf_geometry_batch
from .directions import DirectionCodebook, quantize_direction_batch
from .magnitude import MagnitudeCodebook, quantize_magnitude, quantize_magnitude_batch


def outage_split(q: float, alpha: float = 0.5):
    """Split a target outage probability q into magnitude and direction parts
    and fix the minimum acceptable angle.

    Returns (q_dot, q_ddot, theta0) with q_dot = alpha*q, q_ddot = (1-alpha)*q
    and theta0 = (pi/2) * q_ddot, the angle whose direction-outage probability
    equals q_ddot under the uniform-angle model.  Default is the even split.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    q_dot = alpha * q
    q_ddot = (1.0 - alpha) * q
    theta0 = (np.pi / 2.0) * q_ddot
    return q_dot, q_ddot, theta0


@dataclass(frozen=True)
class ProductCodebook:
    """One user's pair of magnitude and direction codebooks plus the angle
    threshold below which the user is flagged silent."""

    mag: MagnitudeCodebook
    dir: DirectionCodebook
    theta0: float

    def __post_init__(self):
        # theta0 = 0 disables direction outage (useful in audits)
        if not 0.0 <= self.theta0 < np.pi / 2.0:
            raise ValueError("theta0 must be in [0, pi/2)")

    @property
    def y1(self) -> float:
        return self.mag.outage_threshold

    @property
    def size(self) -> int:
        """Total number of feedback messages: all (level, codeword) pairs
        plus the dedicated magnitude-outage message."""
        return self.mag.size * self.dir.size + 1


@dataclass(frozen=True)
class QuantizedState:
    """Quantized view of one channel realization for all M users.

    y_quant is 0 where the magnitude is in outage (mag_index -1); theta is
    the angle between each user's quantized direction and the span of the
    other users' quantized directions; active is the per-user flag
    (theta >= theta0) and (y_true >= y1).
    """

    y_true: np.ndarray
    y_quant: np.ndarray
    mag_index: np.ndarray
    u_quant: np.ndarray
    theta: np.ndarray
    active: np.ndarray

    @property
    def n_users(self) -> int:
        return self.y_true.shape[0]


def quantize_all(channels: ChannelSet, codebooks) -> QuantizedState:
    """Quantize every user's channel through its product codebook."""
    M = channels.n_users
    if len(codebooks) != M:
        raise ValueError("need one product codebook per user")
    y_true = channels.magnitudes_sq
    dirs = channels.directions

    y_quant = np.zeros(M)
    mag_index = np.full(M, -1, dtype=int)
    u_quant = np.zeros((M, M))
    for k in range(M):
        idx, val = quantize_magnitude(float(y_true[k]), codebooks[k].mag)
        mag_index[k] = -1 if idx is None else idx
        y_quant[k] = val
        j = quantize_direction_batch(dirs[k][None, :], codebooks[k].dir)[0]
        u_quant[k] = codebooks[k].dir.codewords[j]

    theta = np.empty(M)
    for k in range(M):
        others = u_quant[[l for l in range(M) if l != k]]
        theta[k] = angle_to_subspace(u_quant[k], others)

    theta0 = np.array([cb.theta0 for cb in codebooks])
    y1 = np.array([cb.y1 for cb in codebooks])
    active = (theta >= theta0) & (y_true >= y1)
    return QuantizedState(y_true=y_true, y_quant=y_quant, mag_index=mag_index,
                          u_quant=u_quant, theta=theta, active=active)


def quantize_batch(H: np.ndarray, codebooks) -> dict:
    """Vectorized quantize_all over a (n, M, M) stack of channel draws.

    Returns arrays keyed by name; shapes are (n, M) except u_quant (n, M, M).
    Users whose quantized directions are numerically coplanar get theta 0.
    """
    H = np.asarray(H, dtype=float)
    n, M, _ = H.shape
    y_true = np.sum(H * H, axis=2)
    dirs = H / np.sqrt(y_true)[:, :, None]

    y_quant = np.empty((n, M))
    mag_index = np.empty((n, M), dtype=int)
    u_quant = np.empty((n, M, M))
    for k in range(M):
        mag_index[:, k], y_quant[:, k] = quantize_magnitude_batch(y_true[:, k], codebooks[k].mag)
        j = quantize_direction_batch(dirs[:, k, :], codebooks[k].dir)
        u_quant[:, k, :] = codebooks[k].dir.codewords[j]

    _, sin_theta, _ = zf_geometry_batch(u_quant)
    theta = np.arcsin(np.clip(sin_theta, 0.0, 1.0))

    theta0 = np.array([cb.theta0 for cb in codebooks])
    y1 = np.array([cb.y1 for cb in codebooks])
    active = (theta >= theta0[None, :]) & (y_true >= y1[None, :])
    return {
        "y_true": y_true,
        "y_quant": y_quant,
        "mag_index": mag_index,
        "u_quant": u_quant,
        "theta": theta,
        "active": active,
    }


def state_from_batch(batch: dict, i: int) -> QuantizedState:
    """Materialize trial i of a quantize_batch result as a QuantizedState."""
    return QuantizedState(
        y_true=batch["y_true"][i],
        y_quant=batch["y_quant"][i],
        mag_index=batch["mag_index"][i],
        u_quant=batch["u_quant"][i],
        theta=batch["theta"][i],
        active=batch["active"][i],
    )


def estimate_outage(codebooks, n_trials: int, rng: np.random.Generator):
    """Monte Carlo per-user outage probability P(flag off) with its binomial
    standard error.  Returns (rates, std_errors) arrays of length M."""
    if n_trials < 10_000:
        raise ValueError("need n_trials >= 1e4 for a meaningful estimate")
    M = len(codebooks)
    H = rng.standard_normal((n_trials, M, M))
    batch = quantize_batch(H, codebooks)
    off = ~batch["active"]
    rates = off.mean(axis=0)
    se = np.sqrt(np.maximum(rates * (1.0 - rates), 1e-300) / n_trials)
    return rates, se
