"""Channel sampling, vector geometry (angles, subspaces, zero-forcing beams),
and analytic facts about the chi-square channel-magnitude distribution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

# Rank test for "linearly independent" direction sets: smallest singular value
# relative to the largest.  Sampled Gaussian channels are full rank almost
# surely; this only guards pathological hand-built inputs.
RANK_RTOL = 1e-9

UNIT_NORM_ATOL = 1e-12


def unit(v: np.ndarray) -> np.ndarray:
    """Normalize a vector to unit Euclidean norm."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / n


def _check_unit(v: np.ndarray, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-6:
        raise ValueError(f"{name} must be unit norm")
    return v


@dataclass(frozen=True)
class ChannelSet:
    """M user channels in R^M, one per row of `matrix`.

    Immutable after construction; magnitude/direction split is derived on
    access.  Construction verifies the rows are linearly independent (rank M).
    """

    matrix: np.ndarray

    def __post_init__(self):
        H = np.array(self.matrix, dtype=float)
        H.setflags(write=False)
        object.__setattr__(self, "matrix", H)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("channel set must be square: M users with M antennas")
        if H.shape[0] < 2:
            raise ValueError("need M >= 2")
        if not np.all(np.isfinite(H)):
            raise ValueError("channel entries must be finite")
        s = np.linalg.svd(H, compute_uv=False)
        if s[-1] <= RANK_RTOL * s[0]:
            raise ValueError("channels are linearly dependent")

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def magnitudes_sq(self) -> np.ndarray:
        """Per-user squared channel magnitude Y_k = ||h_k||^2."""
        return np.sum(self.matrix**2, axis=1)

    @property
    def directions(self) -> np.ndarray:
        """Per-user unit direction vectors (rows)."""
        return self.matrix / np.linalg.norm(self.matrix, axis=1, keepdims=True)


def sample_channels(rng: np.random.Generator, M: int) -> ChannelSet:
    """Draw M i.i.d. users, each h_k ~ N(0, I_M).

    Directions are uniform on the unit hypersphere and ||h||^2 is chi-square
    with M degrees of freedom, independent of the direction.
    """
    if M < 2:
        raise ValueError("need M >= 2")
    return ChannelSet(rng.standard_normal((M, M)))


def angle_between(u: np.ndarray, v: np.ndarray) -> float:
    """Angle between two unit vectors with antipodal identification:
    arccos|u.v|, in [0, pi/2]."""
    u = _check_unit(u, "u")
    v = _check_unit(v, "v")
    return float(np.arccos(np.clip(abs(float(u @ v)), 0.0, 1.0)))


def angle_to_subspace(u: np.ndarray, others) -> float:
    """Angle between unit vector u and span(others), in [0, pi/2].

    Computed as arcsin of the residual norm after orthogonal projection onto
    the span.  If the others span the whole space the angle is 0.
    """
    u = _check_unit(u, "u")
    A = np.asarray(others, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    q, s, _ = np.linalg.svd(A.T, full_matrices=False)
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    if rank >= u.shape[0]:
        return 0.0
    basis = q[:, :rank]
    resid = u - basis @ (basis.T @ u)
    return float(np.arcsin(np.clip(np.linalg.norm(resid), 0.0, 1.0)))


def zf_geometry(directions: np.ndarray):
    """Zero-forcing beams plus own-direction gains for M unit directions.

    Returns (V, sin_theta) where the rows of V are the unit-norm beams with
    v_k . u_l = 0 for l != k and v_k . u_k = sin(theta_k) > 0, theta_k being
    the angle between u_k and the span of the other directions.

    Raises ValueError("ZF undefined") when the directions are rank deficient.
    """
    U = np.asarray(directions, dtype=float)
    s = np.linalg.svd(U, compute_uv=False)
    if s[-1] <= RANK_RTOL * s[0]:
        raise ValueError("ZF undefined: directions are rank deficient")
    W = np.linalg.inv(U.T)  # rows satisfy w_k . u_l = delta_kl
    norms = np.linalg.norm(W, axis=1)
    V = W / norms[:, None]
    sin_theta = 1.0 / norms
    return V, sin_theta


def zero_forcing_beams(directions: np.ndarray) -> np.ndarray:
    """Unit-norm zero-forcing beamforming vectors (one row per direction)."""
    V, _ = zf_geometry(directions)
    return V


def zf_geometry_batch(U: np.ndarray):
    """Batched zf_geometry for a (n, M, M) stack of direction matrices.

    Near-singular direction sets (numerically coplanar users) are returned
    with sin_theta = 0 for every user instead of raising.
    """
    U = np.asarray(U, dtype=float)
    n, M, _ = U.shape
    # rows are unit vectors, so |det| is the parallelepiped volume in [0, 1]
    dets = np.abs(np.linalg.det(U))
    bad = dets < 1e-12
    safe = U.copy()
    safe[bad] = np.eye(M)
    W = np.linalg.inv(np.swapaxes(safe, 1, 2))
    norms = np.linalg.norm(W, axis=2)
    V = W / norms[:, :, None]
    sin_theta = 1.0 / norms
    sin_theta[bad] = 0.0
    return V, sin_theta, bad


class ChiSquareMagnitude:
    """Distribution facts for Y = ||h||^2 when h ~ N(0, I_M), i.e. chi-square
    with M degrees of freedom.

    Provides the cdf F, a bisection-based inverse cdf, the pdf f, and the
    constants used by the codebook analysis:

      rho   = E[1/Y] = 1/(M-2)      (finite only for M >= 3)
      eta   = lim_{y->inf} -f(y)/f'(y) = 2
      omega = E[Y] / (eta^2 E[1/Y]) = M(M-2)/4
    """

    def __init__(self, M: int):
        if M < 3:
            raise ValueError("E[1/Y] diverges for M < 3")
        self.M = int(M)
        self.rho = 1.0 / (M - 2)
        self.eta = 2.0
        self.omega = M * (M - 2) / 4.0
        self.mean = float(M)
        self._k = M / 2.0
        self._log_norm = self._k * np.log(2.0) + special.gammaln(self._k)

    def cdf(self, y):
        return special.gammainc(self._k, np.asarray(y, dtype=float) / 2.0)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 0:
            if y <= 0:
                return 0.0
            return float(np.exp((self._k - 1) * np.log(y) - y / 2.0 - self._log_norm))
        out = np.zeros_like(y, dtype=float)
        pos = y > 0
        out[pos] = np.exp((self._k - 1) * np.log(y[pos]) - y[pos] / 2.0 - self._log_norm)
        return out

    def inv_cdf(self, p: float) -> float:
        """Quantile by bisection on the cdf, to 1e-12 absolute tolerance in y.

        Distribution agnostic: only monotonicity of the cdf is used.  The
        bracket is grown geometrically until it contains p.
        """
        if not 0.0 < p < 1.0:
            raise ValueError("p must be in (0, 1)")
        lo, hi = 0.0, 1.0
        while self.cdf(hi) < p:
            hi *= 2.0
            if hi > 1e12:
                raise RuntimeError("quantile bracket blew up")
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if self.cdf(mid) < p:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def chi_square_facts(M: int) -> ChiSquareMagnitude:
    """Magnitude distribution facts for M antennas (requires M >= 3)."""
    return ChiSquareMagnitude(M)
