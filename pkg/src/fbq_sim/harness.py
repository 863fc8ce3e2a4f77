"""Seeded Monte Carlo experiment runner producing CSV result tables.

Each experiment consumes an ExperimentConfig and returns a ResultTable whose
byte representation is a pure function of the config and seed: packing,
rotations, and channel draws all derive from the master seed through fixed
stream tags, and worker threads only parallelize deterministic solves.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .allocation import (QoSTargets, allocate_bits_closed_form, allocate_bits_numerical,
                         distortion_bound, per_user_objective, round_bits)
from .channel import chi_square_facts, zf_geometry_batch
from .config import FROM_ALLOCATION, ConfigError, ExperimentConfig
from .directions import DirectionCodebook, build_grassmannian, haar_rotation, lambda_m
from .magnitude import build_uniform_db
from .power import closed_form_powers_batch
from .product import ProductCodebook, QuantizedState, outage_split, quantize_batch
from .sdp import sdp_matrices, solve_sdp

SCREEN_BATCH = 4096
MAX_DRAW_FACTOR = 1000          # draw cap per sweep point, times the target count
MAX_PACKED_DIR_SIZE = 4096      # refuse to pack beyond this (minutes of CPU)
FLAG_EXCLUSION_RATE = 0.5


def _rng(seed: int, *tags) -> np.random.Generator:
    """Deterministic generator for (seed, stream tags); string tags are
    crc32-hashed so the mapping is stable across platforms and runs."""
    ints = [seed & 0xFFFFFFFF]
    for t in tags:
        ints.append(zlib.crc32(t.encode()) if isinstance(t, str) else int(t) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(ints))


@dataclass
class ResultTable:
    """Column-labelled rows plus the config echo carried as '#' comments."""

    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv_text(self) -> str:
        lines = [f"# fbq-sim {__version__}"]
        for k, v in self.meta.items():
            lines.append(f"# {k} = {v}")
        lines.append(",".join(self.columns))
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(self.to_csv_text())

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([row[j] for row in self.rows], dtype=float)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _meta(cfg: ExperimentConfig, **extra) -> dict:
    meta = {"experiment": cfg.experiment, "M": cfg.M, "seed": cfg.seed}
    if cfg.gamma_db:
        meta["gamma_db"] = ",".join(format(g, "g") for g in cfg.gamma_db)
    if cfg.q:
        meta["q"] = ",".join(format(v, "g") for v in cfg.q)
    if cfg.B:
        meta["B"] = ",".join(str(b) for b in cfg.B)
    if cfg.mag_sizes:
        meta["mag_sizes"] = cfg.mag_sizes if isinstance(cfg.mag_sizes, str) else \
            ",".join(str(s) for s in cfg.mag_sizes)
    if cfg.dir_sizes:
        meta["dir_sizes"] = cfg.dir_sizes if isinstance(cfg.dir_sizes, str) else \
            ",".join(str(s) for s in cfg.dir_sizes)
    if cfg.n_trials:
        meta["n_trials"] = cfg.n_trials
    meta.update(extra)
    return meta


def _pack(size: int, M: int, seed: int, tag: str):
    if size > MAX_PACKED_DIR_SIZE:
        raise ConfigError(f"direction codebook size {size} exceeds the packing "
                          f"limit {MAX_PACKED_DIR_SIZE}")
    restarts = 20 if size <= 128 else 6
    iters = 2000 if size <= 512 else 1200
    return build_grassmannian(size, M, _rng(seed, tag, size), iterations=iters,
                              restarts=restarts)


def _mean_se(x: np.ndarray):
    if x.size == 0:
        return float("nan"), float("nan")
    if x.size == 1:
        return float(x[0]), float("nan")
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(x.size))


# ----------------------------------------------------------------------
# sdp-vs-bound: exact SDP powers vs the closed-form bound, perfect
# magnitude information, sweep over direction codebook size
# ----------------------------------------------------------------------

def run_sdp_vs_bound(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    M = cfg.M
    gammas = np.array(cfg.gammas)
    table = ResultTable(
        columns=["dir_size", "n_effective", "n_draws", "exclusion_rate", "flagged",
                 "mean_sdp", "se_sdp", "mean_bound", "se_bound",
                 "mean_rel_gap", "se_rel_gap", "median_rel_gap", "n_sdp_failures"],
        meta=_meta(cfg, mode="perfect-magnitude"),
    )
    for size in cfg.dir_sizes:
        base = _pack(size, M, cfg.seed, "pack")
        books = [DirectionCodebook(base.codewords @ haar_rotation(M, _rng(cfg.seed, "rot", size, k)).T)
                 for k in range(M)]
        phis = np.array([b.cap_opening for b in books])
        rng = _rng(cfg.seed, "trials", size)

        states = []
        bounds = []
        n_draws = 0
        max_draws = MAX_DRAW_FACTOR * cfg.n_trials
        while len(states) < cfg.n_trials and n_draws < max_draws:
            batch_n = min(SCREEN_BATCH, max_draws - n_draws)
            H = rng.standard_normal((batch_n, M, M))
            y = np.sum(H * H, axis=2)
            dirs = H / np.sqrt(y)[:, :, None]
            u_quant = np.empty((batch_n, M, M))
            for k in range(M):
                scores = np.abs(dirs[:, k, :] @ books[k].codewords.T)
                u_quant[:, k, :] = books[k].codewords[np.argmax(scores, axis=1)]
            _, sin_theta, _ = zf_geometry_batch(u_quant)
            theta = np.arcsin(np.clip(sin_theta, 0.0, 1.0))
            active = np.ones((batch_n, M), dtype=bool)
            powers, feas = closed_form_powers_batch(y, theta, phis, gammas, active)
            last_accept = -1
            for i in np.flatnonzero(feas):
                if len(states) >= cfg.n_trials:
                    break
                states.append({
                    "y": y[i], "u": u_quant[i], "theta": theta[i],
                })
                bounds.append(float(powers[i].sum()))
                last_accept = int(i)
            # draws past the one that filled the target are not examined
            n_draws += batch_n if len(states) < cfg.n_trials else last_accept + 1

        def solve_one(st):
            state = QuantizedState(y_true=st["y"], y_quant=st["y"],
                                   mag_index=np.zeros(M, dtype=int),
                                   u_quant=st["u"], theta=st["theta"],
                                   active=np.ones(M, dtype=bool))
            sol = solve_sdp(sdp_matrices(state, phis, gammas))
            return sol.objective if sol.feasible else float("nan")

        if threads > 1 and states:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                sdp_vals = list(pool.map(solve_one, states))
        else:
            sdp_vals = [solve_one(st) for st in states]

        sdp_arr = np.array(sdp_vals, dtype=float)
        bound_arr = np.array(bounds, dtype=float)
        ok = np.isfinite(sdp_arr)
        n_failures = int(np.sum(~ok))
        sdp_arr, bound_arr = sdp_arr[ok], bound_arr[ok]
        n_eff = sdp_arr.size
        exclusion = 1.0 - n_eff / n_draws if n_draws else float("nan")
        gaps = (bound_arr - sdp_arr) / sdp_arr if n_eff else np.array([])
        mean_sdp, se_sdp = _mean_se(sdp_arr)
        mean_bound, se_bound = _mean_se(bound_arr)
        mean_gap, se_gap = _mean_se(gaps)
        median_gap = float(np.median(gaps)) if n_eff else float("nan")
        table.rows.append((int(size), n_eff, n_draws, exclusion,
                           exclusion > FLAG_EXCLUSION_RATE, mean_sdp, se_sdp,
                           mean_bound, se_bound, mean_gap, se_gap, median_gap,
                           n_failures))
    return table


# ----------------------------------------------------------------------
# bit allocation experiments
# ----------------------------------------------------------------------

def _targets(cfg: ExperimentConfig) -> QoSTargets:
    return QoSTargets(gammas=np.array(cfg.gammas), qs=np.array(cfg.q))


def run_bit_alloc_compare(cfg: ExperimentConfig) -> ResultTable:
    M = cfg.M
    targets = _targets(cfg)
    dist = chi_square_facts(M)
    cols = ["B", "cf_ok"]
    for tag in ("cf_mag_cont", "cf_dir_cont", "cf_mag", "cf_dir", "num_mag", "num_dir"):
        cols += [f"{tag}_{k + 1}" for k in range(M)]
    table = ResultTable(columns=cols, meta=_meta(cfg))
    for B in cfg.B:
        num_mag, num_dir, _ = allocate_bits_numerical(B, targets, dist, M)
        try:
            alloc = allocate_bits_closed_form(B, targets, M)
            cf_ok = 1
            cont_m, cont_d = alloc.mag_bits, alloc.dir_bits
            r_m, r_d = round_bits(alloc)
        except ValueError:
            cf_ok = 0
            cont_m = cont_d = np.full(M, np.nan)
            r_m = r_d = np.full(M, -1, dtype=int)
        table.rows.append((int(B), cf_ok, *cont_m, *cont_d, *r_m, *r_d,
                           *num_mag, *num_dir))
    return table


def run_bit_shares(cfg: ExperimentConfig) -> ResultTable:
    M = cfg.M
    targets = _targets(cfg)
    cols = ["B", "cf_ok"] + [f"share_cont_{k + 1}" for k in range(M)] \
        + [f"share_{k + 1}" for k in range(M)]
    table = ResultTable(columns=cols, meta=_meta(cfg))
    for B in cfg.B:
        try:
            alloc = allocate_bits_closed_form(B, targets, M)
        except ValueError:
            table.rows.append((int(B), 0) + (float("nan"),) * M + (-1,) * M)
            continue
        r_m, r_d = round_bits(alloc)
        table.rows.append((int(B), 1, *alloc.totals, *(r_m + r_d)))
    return table


def _distortion_value(mag_bits, dir_bits, targets: QoSTargets, dist, M: int) -> float:
    """Relative excess of the analytic power bound over its no-quantization
    floor, for the given per-user bit counts."""
    floor = 0.0
    total = 0.0
    for k in range(M):
        _, _, theta0 = outage_split(float(targets.qs[k]))
        y1 = dist.inv_cdf(float(targets.qs[k]) / 2.0)
        floor += targets.gammas[k] / theta0
        total += per_user_objective(float(np.asarray(mag_bits)[k]),
                                    float(np.asarray(dir_bits)[k]),
                                    float(targets.gammas[k]), theta0, y1, dist, M)
    return (total - floor) / floor


def _distortion_value_simplified(mag_bits, dir_bits, targets: QoSTargets, M: int) -> float:
    """Same as _distortion_value but with the 1 + 1/N_mag magnitude factor
    the distortion-scaling theorem is derived from."""
    lam = lambda_m(M)
    floor = 0.0
    total = 0.0
    for k in range(M):
        _, _, theta0 = outage_split(float(targets.qs[k]))
        nm = 2.0 ** float(np.asarray(mag_bits)[k])
        nd = 2.0 ** float(np.asarray(dir_bits)[k])
        floor += targets.gammas[k] / theta0
        total += (targets.gammas[k] / theta0) * (1.0 + 1.0 / nm
                                                 + (4.0 * lam / theta0) * nd ** (-1.0 / (M - 1)))
    return (total - floor) / floor


def run_distortion(cfg: ExperimentConfig, monte_carlo: bool = False) -> ResultTable:
    M = cfg.M
    targets = _targets(cfg)
    dist = chi_square_facts(M)
    cols = ["B", "d_cf_cont", "d_cf_rounded", "d_numerical", "d_cf_simplified", "d_bound"]
    if monte_carlo:
        cols += ["d_measured", "mc_exclusion_rate"]
    table = ResultTable(columns=cols, meta=_meta(cfg, monte_carlo=int(monte_carlo)))
    for B in cfg.B:
        num_mag, num_dir, _ = allocate_bits_numerical(B, targets, dist, M)
        d_num = _distortion_value(num_mag, num_dir, targets, dist, M)
        try:
            alloc = allocate_bits_closed_form(B, targets, M)
            d_cont = _distortion_value(alloc.mag_bits, alloc.dir_bits, targets, dist, M)
            d_simp = _distortion_value_simplified(alloc.mag_bits, alloc.dir_bits, targets, M)
            r_m, r_d = round_bits(alloc)
            d_round = _distortion_value(r_m, r_d, targets, dist, M)
        except ValueError:
            d_cont = d_round = d_simp = float("nan")
        bound = distortion_bound(B, M, targets.q_bar)
        row = [int(B), d_cont, d_round, d_num, d_simp, bound]
        if monte_carlo:
            d_meas, excl = _measured_distortion(cfg, num_mag, num_dir, targets, dist)
            row += [d_meas, excl]
        table.rows.append(tuple(row))
    return table


def _measured_distortion(cfg: ExperimentConfig, mag_bits, dir_bits,
                         targets: QoSTargets, dist):
    """Monte Carlo average closed-form power at the allocated codebook sizes,
    as a distortion against the analytic perfect-CSI floor.  Infeasible draws
    are excluded and reported."""
    M = cfg.M
    n_trials = cfg.n_trials if cfg.n_trials else 20_000
    books = []
    for k in range(M):
        q = float(targets.qs[k])
        q_dot, _, theta0 = outage_split(q)
        mag = build_uniform_db(int(2 ** mag_bits[k]), q_dot, dist)
        base = _pack(int(2 ** dir_bits[k]), M, cfg.seed, f"mcpack{k}")
        dircb = DirectionCodebook(base.codewords @ haar_rotation(M, _rng(cfg.seed, "mcrot", k)).T)
        books.append(ProductCodebook(mag=mag, dir=dircb, theta0=theta0))
    phis = np.array([b.dir.cap_opening for b in books])
    gammas = np.array(cfg.gammas)
    rng = _rng(cfg.seed, "mctrials")
    H = rng.standard_normal((n_trials, M, M))
    batch = quantize_batch(H, books)
    powers, feas = closed_form_powers_batch(batch["y_quant"], batch["theta"],
                                            phis, gammas, batch["active"])
    n_eff = int(np.sum(feas))
    if n_eff == 0:
        return float("nan"), 1.0
    mean_power = float(powers[feas].sum(axis=1).mean())
    floor = float(sum((2.0 * dist.rho / np.pi) * gammas[k] / ((np.pi / 4.0) * targets.qs[k])
                      for k in range(M)))
    return (mean_power - floor) / floor, 1.0 - n_eff / n_trials


# ----------------------------------------------------------------------
# outage audit
# ----------------------------------------------------------------------

def run_outage_audit(cfg: ExperimentConfig) -> ResultTable:
    M = cfg.M
    dist = chi_square_facts(M)
    qs = np.array(cfg.q)

    if cfg.mag_sizes == FROM_ALLOCATION:
        targets = _targets(cfg)
        alloc = allocate_bits_closed_form(cfg.B[0], targets, M)
        r_m, r_d = round_bits(alloc)
        mag_sizes = [int(2 ** b) for b in r_m]
        dir_sizes = [int(2 ** b) for b in r_d]
    else:
        mag_sizes = list(cfg.mag_sizes)
        dir_sizes = list(cfg.dir_sizes)

    packed = {}
    books = []
    for k in range(M):
        q_dot, _, theta0 = outage_split(float(qs[k]))
        mag = build_uniform_db(mag_sizes[k], q_dot, dist)
        size = dir_sizes[k]
        if size not in packed:
            packed[size] = _pack(size, M, cfg.seed, "pack")
        dircb = DirectionCodebook(packed[size].codewords
                                  @ haar_rotation(M, _rng(cfg.seed, "rot", k)).T)
        books.append(ProductCodebook(mag=mag, dir=dircb, theta0=theta0))

    rng = _rng(cfg.seed, "trials")
    H = rng.standard_normal((cfg.n_trials, M, M))
    batch = quantize_batch(H, books)
    theta0s = np.array([b.theta0 for b in books])
    y1s = np.array([b.y1 for b in books])
    mag_out = batch["y_true"] < y1s[None, :]
    dir_out = batch["theta"] < theta0s[None, :]
    off = ~batch["active"]

    def rate_se(mask):
        r = mask.mean(axis=0)
        return r, np.sqrt(np.maximum(r * (1 - r), 1e-300) / cfg.n_trials)

    p_off, se_off = rate_se(off)
    p_mag, se_mag = rate_se(mag_out)
    p_dir, se_dir = rate_se(dir_out)
    p_both, _ = rate_se(mag_out & dir_out)

    table = ResultTable(
        columns=["user", "q_target", "mag_size", "dir_size", "p_off", "se_off",
                 "p_mag_outage", "se_mag", "p_dir_outage", "se_dir", "p_both", "n_trials"],
        meta=_meta(cfg),
    )
    for k in range(M):
        table.rows.append((k + 1, float(qs[k]), mag_sizes[k], dir_sizes[k],
                           float(p_off[k]), float(se_off[k]), float(p_mag[k]),
                           float(se_mag[k]), float(p_dir[k]), float(se_dir[k]),
                           float(p_both[k]), cfg.n_trials))
    return table


# ----------------------------------------------------------------------
# perfect-CSI power Monte Carlo (library utility, used by the test gate)
# ----------------------------------------------------------------------

def average_csi_zf_power_mc(M: int, gammas, theta0s, n_samples: int, seed: int,
                            batch: int = 200_000) -> float:
    """Vectorized Monte Carlo of the perfect-CSI ZF average sum power.

    Uses the identity P_k = gamma_k ||row_k(H^-T)||^2 for served users, with
    user k served when its direction sits at least theta0 away from the span
    of the other channels.
    """
    gammas = np.asarray(gammas, dtype=float)
    sin_t0 = np.sin(np.asarray(theta0s, dtype=float))
    rng = _rng(seed, "csi")
    total = 0.0
    done = 0
    while done < n_samples:
        n = min(batch, n_samples - done)
        H = rng.standard_normal((n, M, M))
        W = np.linalg.inv(np.swapaxes(H, 1, 2))
        gain = np.sum(W * W, axis=2)          # 1 / (Y_k sin^2 theta_k)
        y = np.sum(H * H, axis=2)
        sin_theta = 1.0 / np.sqrt(gain * y)
        served = sin_theta >= sin_t0[None, :]
        total += float(np.sum(np.where(served, gammas[None, :] * gain, 0.0)))
        done += n
    return total / n_samples


EXPERIMENT_RUNNERS = {
    "sdp-vs-bound": run_sdp_vs_bound,
    "bit-alloc-compare": run_bit_alloc_compare,
    "bit-shares": run_bit_shares,
    "distortion": run_distortion,
    "outage-audit": run_outage_audit,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1,
                   monte_carlo: bool = False) -> ResultTable:
    if cfg.experiment == "sdp-vs-bound":
        return run_sdp_vs_bound(cfg, threads=threads)
    if cfg.experiment == "distortion":
        return run_distortion(cfg, monte_carlo=monte_carlo)
    if cfg.experiment == "bit-alloc-compare":
        return run_bit_alloc_compare(cfg)
    if cfg.experiment == "bit-shares":
        return run_bit_shares(cfg)
    if cfg.experiment == "outage-audit":
        return run_outage_audit(cfg)
    raise ConfigError(f"unknown experiment {cfg.experiment!r}")
