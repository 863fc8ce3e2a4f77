"""Real Grassmannian line packings used as channel direction codebooks.

Codewords are unit vectors with antipodal identification; quantization picks
the codeword with the smallest angle (largest |inner product|).  The cap
opening phi = arcsin(min chordal distance) over-covers every quantization
cell, which is what the robust power control protects against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special


def lambda_m(M: int) -> float:
    """Packing constant (sqrt(pi) Gamma((M+1)/2) / Gamma(M/2))^(1/(M-1))."""
    if M < 2:
        raise ValueError("need M >= 2")
    log_val = 0.5 * np.log(np.pi) + special.gammaln((M + 1) / 2.0) - special.gammaln(M / 2.0)
    return float(np.exp(log_val / (M - 1)))


def min_chordal_distance(codewords: np.ndarray) -> float:
    """Smallest pairwise sin(angle) over all codeword pairs."""
    U = np.asarray(codewords, dtype=float)
    C = np.abs(U @ U.T)
    np.fill_diagonal(C, 0.0)
    cmax = min(C.max(), 1.0)
    return float(np.sqrt(max(1.0 - cmax * cmax, 0.0)))


@dataclass(frozen=True)
class DirectionCodebook:
    """Unit-norm codeword rows with their derived packing geometry."""

    codewords: np.ndarray
    min_chordal: float = field(init=False)
    cap_opening: float = field(init=False)

    def __post_init__(self):
        U = np.array(self.codewords, dtype=float)
        if U.ndim != 2 or U.shape[0] < 2:
            raise ValueError("need at least 2 codewords")
        norms = np.linalg.norm(U, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            U = U / norms[:, None]
        U.setflags(write=False)
        object.__setattr__(self, "codewords", U)
        delta = min_chordal_distance(U)
        if delta <= 0.0:
            raise ValueError("codebook contains duplicate lines")
        object.__setattr__(self, "min_chordal", delta)
        object.__setattr__(self, "cap_opening", float(np.arcsin(min(delta, 1.0))))

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def dim(self) -> int:
        return self.codewords.shape[1]


def _repulsion_descent(U0: np.ndarray, iterations: int) -> np.ndarray:
    """Log-barrier repulsion on pairwise |u_i . u_j| with annealed step size.

    The barrier -log(1 - c^2) blows up as a pair of lines collides, so the
    closest pairs dominate the gradient and spacings equalize.
    """
    U = U0.copy()
    lr = 0.15
    decay = (1e-4 / lr) ** (1.0 / max(iterations, 1))
    for _ in range(iterations):
        C = U @ U.T
        np.fill_diagonal(C, 0.0)
        s2 = np.maximum(1.0 - C * C, 1e-12)
        G = (2.0 * C / s2) @ U
        step = G / np.maximum(np.linalg.norm(G, axis=1, keepdims=True), 1e-30)
        U = U - lr * step
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        lr *= decay
    return U


def build_grassmannian(N: int, M: int, rng: np.random.Generator,
                       iterations: int = 2000, restarts: int = 20) -> DirectionCodebook:
    """Best-of-`restarts` repulsion packing of N lines in R^M."""
    if N < 2:
        raise ValueError("need N >= 2")
    if M < 2:
        raise ValueError("need M >= 2")
    best = None
    best_delta = -1.0
    for child in rng.spawn(restarts):
        U0 = child.standard_normal((N, M))
        U0 /= np.linalg.norm(U0, axis=1, keepdims=True)
        U = _repulsion_descent(U0, iterations)
        delta = min_chordal_distance(U)
        if delta > best_delta:
            best_delta, best = delta, U
    return DirectionCodebook(codewords=best)


def quantize_direction(h: np.ndarray, cb: DirectionCodebook) -> np.ndarray:
    """Codeword with the smallest angle to h (ties -> lowest index)."""
    h = np.asarray(h, dtype=float)
    if np.linalg.norm(h) == 0.0:
        raise ValueError("cannot quantize the zero vector")
    idx = int(np.argmax(np.abs(cb.codewords @ h)))
    return cb.codewords[idx]


def quantize_direction_batch(H: np.ndarray, cb: DirectionCodebook) -> np.ndarray:
    """Row-wise quantization indices for a (n, M) stack of vectors."""
    scores = np.abs(np.asarray(H, dtype=float) @ cb.codewords.T)
    return np.argmax(scores, axis=1)


def haar_rotation(M: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix via sign-fixed QR."""
    A = rng.standard_normal((M, M))
    Q, R = np.linalg.qr(A)
    return Q * np.sign(np.diag(R))


def random_rotation(cb: DirectionCodebook, rng: np.random.Generator) -> DirectionCodebook:
    """Apply one common Haar-random rotation to every codeword."""
    Q = haar_rotation(cb.dim, rng)
    return DirectionCodebook(codewords=cb.codewords @ Q.T)


def verify_cap_bound(cb: DirectionCodebook) -> float:
    """Margin of the packing bound: 4 lambda_M N^{-1/(M-1)} - sin(phi).

    Positive means the codebook satisfies the cap-size bound the asymptotic
    analysis relies on.
    """
    M = cb.dim
    bound = 4.0 * lambda_m(M) * cb.size ** (-1.0 / (M - 1))
    return float(bound - cb.min_chordal)


def save_codewords(cb: DirectionCodebook, path) -> None:
    """Write codewords as plain text, one space-separated row per line."""
    with open(path, "w", encoding="utf-8") as f:
        for row in cb.codewords:
            f.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_codewords(path) -> DirectionCodebook:
    return DirectionCodebook(codewords=np.loadtxt(path, dtype=float, ndmin=2))
