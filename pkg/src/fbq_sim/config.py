"""Experiment configuration: a flat key = value text format.

Recognized keys (a subset is required depending on the experiment):

  experiment   sdp-vs-bound | bit-alloc-compare | bit-shares | distortion | outage-audit
  M            antenna / user count
  gamma_db     per-user target SINRs in dB, comma separated
  q            per-user target outage probabilities, comma separated
  B            budget list: single value, comma list, or start:stop:step (inclusive)
  mag_sizes    per-user magnitude codebook sizes, or "from-allocation"
  dir_sizes    codebook sizes (per sweep point for sdp-vs-bound, per user otherwise),
               or "from-allocation"
  n_trials     Monte Carlo trial count (target feasible count for sdp-vs-bound)
  seed         master seed
  out          output CSV path

Unknown keys are errors.  Lines starting with '#' and blank lines are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

EXPERIMENTS = ("sdp-vs-bound", "bit-alloc-compare", "bit-shares", "distortion", "outage-audit")

_KEYS = {"experiment", "M", "gamma_db", "q", "B", "mag_sizes", "dir_sizes",
         "n_trials", "seed", "out"}

FROM_ALLOCATION = "from-allocation"


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configs."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    M: int
    gamma_db: tuple = ()
    q: tuple = ()
    B: tuple = ()
    mag_sizes: tuple | str = ()
    dir_sizes: tuple | str = ()
    n_trials: int = 0
    seed: int = 0
    out: str = ""

    @property
    def gammas(self):
        """Target SINRs in linear scale."""
        return tuple(10.0 ** (g / 10.0) for g in self.gamma_db)


def _parse_floats(text: str):
    try:
        return tuple(float(tok) for tok in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list: {text!r}") from exc


def _parse_ints(text: str):
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            vals.append(int(tok))
        except ValueError as exc:
            raise ConfigError(f"cannot parse integer list: {text!r}") from exc
    return tuple(vals)


def _parse_budgets(text: str):
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"budget range must be start:stop:step, got {text!r}")
        try:
            start, stop, step = (int(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"budget range must be integers: {text!r}") from exc
        if step <= 0 or stop < start:
            raise ConfigError(f"bad budget range {text!r}")
        return tuple(range(start, stop + 1, step))
    return _parse_ints(text)


def _parse_sizes(text: str):
    text = text.strip()
    if text == FROM_ALLOCATION:
        return FROM_ALLOCATION
    sizes = _parse_ints(text)
    if any(s < 2 for s in sizes):
        raise ConfigError("codebook sizes must be >= 2")
    return sizes


def parse_config_text(text: str) -> ExperimentConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    for req in ("experiment", "M"):
        if req not in raw:
            raise ConfigError(f"missing required key {req!r}")
    experiment = raw.pop("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
    try:
        M = int(raw.pop("M"))
    except ValueError as exc:
        raise ConfigError("M must be an integer") from exc
    if M < 2:
        raise ConfigError("M must be >= 2")

    kwargs = {"experiment": experiment, "M": M}
    if "gamma_db" in raw:
        kwargs["gamma_db"] = _parse_floats(raw.pop("gamma_db"))
    if "q" in raw:
        kwargs["q"] = _parse_floats(raw.pop("q"))
        if any(not 0.0 < v < 1.0 for v in kwargs["q"]):
            raise ConfigError("q values must be in (0, 1)")
    if "B" in raw:
        kwargs["B"] = _parse_budgets(raw.pop("B"))
    if "mag_sizes" in raw:
        kwargs["mag_sizes"] = _parse_sizes(raw.pop("mag_sizes"))
    if "dir_sizes" in raw:
        kwargs["dir_sizes"] = _parse_sizes(raw.pop("dir_sizes"))
    if "n_trials" in raw:
        try:
            kwargs["n_trials"] = int(raw.pop("n_trials"))
        except ValueError as exc:
            raise ConfigError("n_trials must be an integer") from exc
    if "seed" in raw:
        try:
            kwargs["seed"] = int(raw.pop("seed"))
        except ValueError as exc:
            raise ConfigError("seed must be an integer") from exc
    if "out" in raw:
        kwargs["out"] = raw.pop("out")

    cfg = ExperimentConfig(**kwargs)
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _validate(cfg: ExperimentConfig):
    M = cfg.M
    per_user = lambda name, t: _require(len(t) == M, f"{name} needs exactly {M} entries")
    if cfg.experiment == "sdp-vs-bound":
        per_user("gamma_db", cfg.gamma_db)
        _require(isinstance(cfg.dir_sizes, tuple) and len(cfg.dir_sizes) >= 1,
                 "sdp-vs-bound needs an explicit dir_sizes sweep")
        _require(cfg.n_trials >= 1, "n_trials must be >= 1")
    elif cfg.experiment in ("bit-alloc-compare", "bit-shares", "distortion"):
        per_user("gamma_db", cfg.gamma_db)
        per_user("q", cfg.q)
        _require(len(cfg.B) >= 1, f"{cfg.experiment} needs a budget list B")
    elif cfg.experiment == "outage-audit":
        per_user("q", cfg.q)
        if cfg.mag_sizes == FROM_ALLOCATION or cfg.dir_sizes == FROM_ALLOCATION:
            _require(cfg.mag_sizes == FROM_ALLOCATION and cfg.dir_sizes == FROM_ALLOCATION,
                     "from-allocation applies to both size fields together")
            _require(len(cfg.B) == 1, "from-allocation needs a single budget B")
            per_user("gamma_db", cfg.gamma_db)
        else:
            per_user("mag_sizes", cfg.mag_sizes)
            per_user("dir_sizes", cfg.dir_sizes)
        _require(cfg.n_trials >= 10_000, "outage-audit needs n_trials >= 1e4")
