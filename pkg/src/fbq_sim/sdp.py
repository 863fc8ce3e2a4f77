"""Exact robust power control as a small dense SDP.

Each active user contributes one M x M linear matrix inequality obtained from
the S-procedure applied to its sector uncertainty region; minimizing the sum
power over the block-diagonal LMIs is solved here with a self-contained
log-det barrier interior-point method (problem sizes are tiny: M <= 8 users,
M x M blocks).  The returned iterate is strictly interior, so the worst-case
SINR constraints hold with margin and can be certified by sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import zero_forcing_beams
from .power import PowerAllocation, closed_form_powers
from .product import QuantizedState

MU_CAP = 1e8


@dataclass(frozen=True)
class LmiProblem:
    """Per-active-user data of the robust power SDP.

    Arrays are indexed by active-user position; `active` maps positions back
    to user indices.  Beams are zero-forcing for all users' quantized
    directions, so v_i . u_j = 0 for i != j.
    """

    M: int
    active: np.ndarray
    beams: np.ndarray       # (K, M) rows, active users' ZF beams
    u: np.ndarray           # (K, M) rows, active users' quantized directions
    r: np.ndarray           # (K,) lower squared magnitudes
    phi: np.ndarray         # (K,) cap openings
    gamma: np.ndarray       # (K,) SINR targets

    @property
    def n_active(self) -> int:
        return self.active.size

    def block(self, i: int, powers: np.ndarray, lam: float, mu: float) -> np.ndarray:
        """Assemble the i-th user's LMI block at active-user powers
        (feasible iff the block is PSD)."""
        v = self.beams
        B = (powers[i] / self.gamma[i]) * np.outer(v[i], v[i])
        for l in range(self.n_active):
            if l != i:
                B -= powers[l] * np.outer(v[l], v[l])
        B -= (lam - mu) * np.eye(self.M)
        B -= (mu / np.cos(self.phi[i]) ** 2) * np.outer(self.u[i], self.u[i])
        return B

    def a_matrices(self, i: int, powers: np.ndarray):
        """Quadratic-form matrices (A0, A1, A2) and constants (tau0, tau1,
        tau2) whose S-procedure combination yields user i's LMI block."""
        v = self.beams
        A0 = -(powers[i] / self.gamma[i]) * np.outer(v[i], v[i])
        for l in range(self.n_active):
            if l != i:
                A0 += powers[l] * np.outer(v[l], v[l])
        A1 = -np.eye(self.M)
        A2 = np.eye(self.M) - np.outer(self.u[i], self.u[i]) / np.cos(self.phi[i]) ** 2
        tau = (-1.0, -float(self.r[i]), 0.0)
        return A0, A1, A2, tau


def polyak_certificate(phi: float):
    """A (nu1, nu2) pair with nu1*A1 + nu2*A2 positive definite, which is the
    regularity condition the lossless S-procedure needs."""
    nu2 = 0.5 / max(np.tan(phi) ** 2, 1e-12)
    return -1.0, min(nu2, 1e10)


def sdp_matrices(state: QuantizedState, phis, gammas) -> LmiProblem:
    """Build the robust power SDP for the active users of a quantized state."""
    M = state.n_users
    if M < 3:
        raise ValueError("S-procedure equivalence requires M >= 3")
    beams = zero_forcing_beams(state.u_quant)
    active = np.flatnonzero(state.active)
    phis = np.asarray(phis, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    return LmiProblem(
        M=M,
        active=active,
        beams=beams[active],
        u=state.u_quant[active],
        r=state.y_quant[active],
        phi=phis[active],
        gamma=gammas[active],
    )


@dataclass(frozen=True)
class RobustSolution:
    """Power solution of the SDP with its multipliers and PSD residuals."""

    powers: np.ndarray
    lambdas: np.ndarray
    mus: np.ndarray
    objective: float
    feasible: bool
    active: np.ndarray
    min_eigs: np.ndarray


def _max_margin_mu(Bfix: np.ndarray, Gmu: np.ndarray):
    """Maximize the smallest eigenvalue of Bfix + mu*Gmu over mu >= 0.

    The objective is concave in mu; golden-section search after geometric
    bracket growth.  Returns (margin, mu)."""
    def margin(mu):
        return float(np.linalg.eigvalsh(Bfix + mu * Gmu)[0])

    hi = 1.0
    while margin(hi * 4.0) > margin(hi) and hi < MU_CAP / 8.0:
        hi *= 4.0
    hi *= 4.0
    lo = 0.0
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = margin(c), margin(d)
    for _ in range(90):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = margin(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = margin(d)
    mu = 0.5 * (a + b)
    best = margin(mu)
    if margin(0.0) > best:
        return margin(0.0), 0.0
    return best, mu


def feasibility_margins(problem: LmiProblem, powers_active: np.ndarray):
    """Best achievable smallest block eigenvalue per active user at the given
    powers, optimizing each user's multiplier with lambda = 1/r.  Every entry
    being nonnegative means the powers are supportable."""
    K = problem.n_active
    out = np.empty(K)
    mus = np.empty(K)
    for i in range(K):
        Bfix = problem.block(i, powers_active, lam=1.0 / problem.r[i], mu=0.0)
        Gmu = np.eye(problem.M) - np.outer(problem.u[i], problem.u[i]) / np.cos(problem.phi[i]) ** 2
        out[i], mus[i] = _max_margin_mu(Bfix, Gmu)
    return out, mus


class _BarrierProgram:
    """min c.x subject to affine M x M blocks being PD, selected coordinates
    positive, and selected coordinates below caps; solved along the standard
    log-barrier central path with damped Newton steps."""

    def __init__(self, n, c, blocks, pos_idx, caps):
        self.n = n
        self.c = np.asarray(c, dtype=float)
        self.blocks = blocks          # list of (Const, [(var, G), ...])
        self.pos_idx = list(pos_idx)
        self.caps = list(caps)        # [(var, cap), ...]
        self.nu = sum(C.shape[0] for C, _ in blocks) + len(self.pos_idx) + len(self.caps)

    def assemble(self, x):
        out = []
        for C, terms in self.blocks:
            B = C.copy()
            for i, G in terms:
                B += x[i] * G
            out.append(B)
        return out

    def feasible(self, x):
        for i in self.pos_idx:
            if x[i] <= 0.0:
                return False
        for i, cap in self.caps:
            if x[i] >= cap:
                return False
        for B in self.assemble(x):
            try:
                np.linalg.cholesky(B)
            except np.linalg.LinAlgError:
                return False
        return True

    def value(self, x, t):
        val = t * float(self.c @ x)
        for B in self.assemble(x):
            sign, logdet = np.linalg.slogdet(B)
            if sign <= 0:
                return np.inf
            val -= logdet
        for i in self.pos_idx:
            val -= np.log(x[i])
        for i, cap in self.caps:
            val -= np.log(cap - x[i])
        return val

    def grad_hess(self, x, t):
        g = t * self.c.copy()
        H = np.zeros((self.n, self.n))
        for C, terms in self.blocks:
            B = C.copy()
            for i, G in terms:
                B += x[i] * G
            S = np.linalg.inv(B)
            Ts = [(i, S @ G) for i, G in terms]
            for i, Ti in Ts:
                g[i] -= np.trace(Ti)
            for a in range(len(Ts)):
                ia, Ta = Ts[a]
                for b in range(a, len(Ts)):
                    ib, Tb = Ts[b]
                    hv = float(np.sum(Ta * Tb.T))
                    H[ia, ib] += hv
                    if ia != ib or a != b:
                        H[ib, ia] += hv
        for i in self.pos_idx:
            g[i] -= 1.0 / x[i]
            H[i, i] += 1.0 / x[i] ** 2
        for i, cap in self.caps:
            g[i] += 1.0 / (cap - x[i])
            H[i, i] += 1.0 / (cap - x[i]) ** 2
        return g, H

    def newton(self, x, t, max_iter=60, tol=1e-12):
        for _ in range(max_iter):
            g, H = self.grad_hess(x, t)
            try:
                d = np.linalg.solve(H + 1e-14 * np.eye(self.n), -g)
            except np.linalg.LinAlgError:
                d = -g
            decrement = float(-g @ d)
            if decrement <= 0.0:
                d = -g / max(np.linalg.norm(g), 1.0)
                decrement = float(-g @ d)
                if decrement <= 0.0:
                    break
            if 0.5 * decrement < tol:
                break
            step = 1.0
            f0 = self.value(x, t)
            for _ in range(70):
                xn = x + step * d
                if self.feasible(xn) and self.value(xn, t) <= f0 - 0.25 * step * decrement:
                    break
                step *= 0.5
            else:
                break
            x = xn
        return x

    def solve(self, x0, gap_tol, t0=1.0, t_mult=20.0, stop_early=None):
        """Follow the central path until nu/t drops below gap_tol, which may
        be a constant or a callable of the current iterate."""
        x = np.asarray(x0, dtype=float).copy()
        if not self.feasible(x):
            raise ValueError("barrier start point is not strictly feasible")
        t = t0
        while True:
            x = self.newton(x, t)
            if stop_early is not None and stop_early(x):
                return x
            tol = gap_tol(x) if callable(gap_tol) else gap_tol
            if self.nu / t < tol:
                return x
            t *= t_mult


def _phase1(problem: LmiProblem, consts, p_terms, mu_terms):
    """Search for a strictly feasible (P, mu) by minimizing the uniform block
    shift s; succeeds as soon as s goes negative."""
    K = problem.n_active
    n = 2 * K + 1
    s_idx = 2 * K
    blocks = []
    for i in range(K):
        terms = list(p_terms[i]) + [mu_terms[i]] + [(s_idx, np.eye(problem.M))]
        blocks.append((consts[i], terms))
    c = np.zeros(n)
    c[s_idx] = 1.0
    caps = [(i, 1e9) for i in range(K)] + [(K + i, MU_CAP) for i in range(K)]
    prog = _BarrierProgram(n, c, blocks, pos_idx=range(2 * K), caps=caps)

    x0 = np.ones(n)
    need = 0.0
    for i, (C, terms) in enumerate(blocks):
        B = C + sum(x0[j] * G for j, G in terms if j != s_idx)
        need = max(need, -float(np.linalg.eigvalsh(B)[0]))
    x0[s_idx] = need + 1.0

    x = prog.solve(x0, gap_tol=1e-9, stop_early=lambda y: y[s_idx] < -1e-6)
    if x[s_idx] < -1e-6:
        return x[: 2 * K]
    return None


def solve_sdp(problem: LmiProblem, psd_tol: float = 1e-8, obj_rtol: float = 1e-6) -> RobustSolution:
    """Minimize the sum power over the robust LMI constraints.

    Warm-starts from the closed-form bound solution when it is feasible
    (scaled up slightly so every exact constraint holds strictly), otherwise
    runs a feasibility phase first.  Returns an Infeasible solution when no
    strictly feasible point is found.
    """
    M = problem.M
    K = problem.n_active
    if K == 0:
        return RobustSolution(powers=np.zeros(M), lambdas=np.zeros(0), mus=np.zeros(0),
                              objective=0.0, feasible=True, active=problem.active,
                              min_eigs=np.zeros(0))

    # constant and per-variable matrices of each block, in active-local vars
    consts = [-(1.0 / problem.r[i]) * np.eye(M) for i in range(K)]
    p_terms = []
    mu_terms = []
    for i in range(K):
        terms = []
        for l in range(K):
            vvT = np.outer(problem.beams[l], problem.beams[l])
            terms.append((l, vvT / problem.gamma[i] if l == i else -vvT))
        p_terms.append(terms)
        Gmu = np.eye(M) - np.outer(problem.u[i], problem.u[i]) / np.cos(problem.phi[i]) ** 2
        mu_terms.append((K + i, Gmu))

    # strictly feasible start: inflated closed-form powers with per-user
    # multiplier search, falling back to the feasibility phase
    x0 = None
    theta = np.arcsin(np.clip(np.abs(np.sum(problem.beams * problem.u, axis=1)), 0.0, 1.0))
    cf_powers, cf_ok = closed_form_powers(problem.r, theta, problem.phi, problem.gamma,
                                          np.ones(K, dtype=bool))
    if cf_ok:
        for inflate in (1.05, 1.5, 4.0):
            p_try = cf_powers * inflate
            margins, mus = feasibility_margins(problem, p_try)
            scale = max(1.0, float(np.max(np.abs(p_try))))
            if np.all(margins > 1e-9 * scale) and np.all(mus < 0.9 * MU_CAP):
                x0 = np.concatenate([p_try, np.maximum(mus, 1e-9)])
                break
    if x0 is None:
        x0 = _phase1(problem, consts, p_terms, mu_terms)
    if x0 is None or not np.all(x0[:K] > 0.0):
        return RobustSolution(powers=np.zeros(M), lambdas=np.zeros(K), mus=np.zeros(K),
                              objective=float("nan"), feasible=False, active=problem.active,
                              min_eigs=np.full(K, -np.inf))

    blocks = [(consts[i], list(p_terms[i]) + [mu_terms[i]]) for i in range(K)]
    c = np.concatenate([np.ones(K), np.zeros(K)])
    caps = [(K + i, MU_CAP) for i in range(K)]
    prog = _BarrierProgram(2 * K, c, blocks, pos_idx=range(2 * K), caps=caps)

    # stop once the barrier gap is negligible against the current objective,
    # re-evaluated every round since a feasibility-phase start can sit orders
    # of magnitude above the optimum
    obj0 = float(np.sum(x0[:K]))
    scale = min(1e-8, 0.01 * obj_rtol)

    def gap_tol(xc):
        return scale * (1.0 + float(np.sum(xc[:K])))

    x = prog.solve(x0, gap_tol=gap_tol, t0=max(1e-6, prog.nu / (1.0 + obj0)))

    P_act = x[:K]
    mus = x[K:]
    min_eigs = np.array([
        float(np.linalg.eigvalsh(problem.block(i, P_act, 1.0 / problem.r[i], mus[i]))[0])
        for i in range(K)
    ])
    powers_full = np.zeros(M)
    powers_full[problem.active] = P_act
    return RobustSolution(
        powers=powers_full,
        lambdas=1.0 / problem.r,
        mus=mus,
        objective=float(np.sum(P_act)),
        feasible=bool(np.all(min_eigs >= -psd_tol)),
        active=problem.active,
        min_eigs=min_eigs,
    )
