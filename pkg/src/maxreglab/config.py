"""Experiment configuration: a flat YAML mapping with validated fields."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import yaml

from .counterexample import NONSYMMETRIC, SYMMETRIC, CounterexampleSpec

VARIANTS = (NONSYMMETRIC, SYMMETRIC)


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"invalid config field '{field_name}': {message}")
        self.field = field_name


def _default_sweep():
    return [10.0 ** (-k) for k in range(2, 9)]


@dataclass(frozen=True)
class ExperimentConfig:
    """All experiment parameters; defaults reproduce the reference construction."""

    variants: tuple = VARIANTS
    weight_exp: float = 1.5
    phase_exp: float = 1.5
    profile_exp: float = 1.0
    shift_d: Optional[float] = None  # None / "auto" selects d automatically
    horizon_T: float = 1.0
    # mesh rule
    grading_gamma: float = 2.0
    eps_sweep: tuple = field(default_factory=lambda: tuple(_default_sweep()))
    n_cells: int = 1024
    form_eps: float = 1e-4
    form_n_cells: int = 2048
    form_samples: int = 2000
    holder_eps: float = 1e-6
    holder_n_cells: int = 2048
    holder_pairs_per_gap: int = 8
    residual_eps: float = 0.1
    residual_levels: tuple = (4096, 8192, 16384)
    # time rule and solver
    theta: float = 1.0
    solve_eps: tuple = (0.2, 0.1, 0.05)
    solve_n_cells: int = 64
    solve_levels: int = 4
    energy_steps: int = 256
    crosscheck_min_eps: float = 1e-2
    crosscheck_n_cells: int = 256
    # randomized extension checks
    extension_trials: int = 200
    rayleigh_samples: int = 10_000
    seed: int = 0
    output: str = "maxreglab-out"

    def __post_init__(self):
        validate(self)

    def spec(self, variant: str) -> CounterexampleSpec:
        return CounterexampleSpec(
            variant=variant,
            weight_exp=self.weight_exp,
            phase_exp=self.phase_exp,
            profile_exp=self.profile_exp,
            shift_d=self.shift_d if variant == SYMMETRIC else None,
            horizon_T=self.horizon_T,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


def _positive_int(cfg, name, minimum=1):
    v = getattr(cfg, name)
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(name, f"must be an integer >= {minimum}, got {v!r}")


def _positive(cfg, name):
    v = getattr(cfg, name)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        raise ConfigError(name, f"must be a positive number, got {v!r}")


def _eps(cfg, name):
    v = getattr(cfg, name)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 < v < 1:
        raise ConfigError(name, f"must lie in (0, 1), got {v!r}")


def _decreasing_eps(cfg, name, allow_empty=False):
    seq = getattr(cfg, name)
    if not allow_empty and len(seq) == 0:
        raise ConfigError(name, "must not be empty")
    for e in seq:
        if isinstance(e, bool) or not isinstance(e, (int, float)) or not 0 < e < 1:
            raise ConfigError(name, f"entries must lie in (0, 1), got {e!r}")
    if any(b >= a for a, b in zip(seq, seq[1:])):
        raise ConfigError(name, "must be strictly decreasing")


def validate(cfg: ExperimentConfig) -> None:
    if not cfg.variants or any(v not in VARIANTS for v in cfg.variants):
        raise ConfigError("variants", f"entries must be among {VARIANTS}, got {cfg.variants!r}")
    for name in ("weight_exp", "phase_exp", "profile_exp"):
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(name, f"must be a number, got {v!r}")
    if cfg.shift_d is not None:
        if isinstance(cfg.shift_d, bool) or not isinstance(cfg.shift_d, (int, float)) \
                or not abs(cfg.shift_d) > 1:
            raise ConfigError("shift_d", f"must be 'auto' or a number with |d| > 1, got {cfg.shift_d!r}")
    _positive(cfg, "horizon_T")
    v = cfg.grading_gamma
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 1:
        raise ConfigError("grading_gamma", f"must be >= 1, got {v!r}")
    _decreasing_eps(cfg, "eps_sweep", allow_empty=True)
    _decreasing_eps(cfg, "solve_eps")
    for name in ("form_eps", "holder_eps", "residual_eps", "crosscheck_min_eps"):
        _eps(cfg, name)
    for name in ("n_cells", "form_n_cells", "holder_n_cells", "solve_n_cells",
                 "crosscheck_n_cells"):
        _positive_int(cfg, name, 2)
    levels = cfg.residual_levels
    if len(levels) < 2 or any(isinstance(n, bool) or not isinstance(n, int) or n < 2
                              for n in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("residual_levels", f"must be >= 2 increasing cell counts, got {levels!r}")
    for name in ("form_samples", "holder_pairs_per_gap", "extension_trials", "rayleigh_samples"):
        _positive_int(cfg, name)
    _positive_int(cfg, "solve_levels", 2)
    _positive_int(cfg, "energy_steps", 2)
    t = cfg.theta
    if isinstance(t, bool) or not isinstance(t, (int, float)) or not 0.5 <= t <= 1.0:
        raise ConfigError("theta", f"must lie in [0.5, 1], got {t!r}")
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed", f"must be a nonnegative integer, got {cfg.seed!r}")
    if not isinstance(cfg.output, str) or not cfg.output:
        raise ConfigError("output", "must be a nonempty path")


_SEQUENCES = {"variants", "eps_sweep", "residual_levels", "solve_eps"}
_TEXT = {"variants", "output"}


def _number(value):
    """YAML 1.1 reads '1e-2' as a string; accept numeric strings for numeric keys."""
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def from_mapping(data: Optional[dict], **overrides) -> ExperimentConfig:
    """Build a config from a flat mapping; unknown keys are errors."""
    data = dict(data or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    if "variant" in data:  # singular convenience key
        v = data.pop("variant")
        data["variants"] = list(VARIANTS) if v in ("both", "all") else [v]
    for key in data:
        if key not in known:
            raise ConfigError(key, "unknown key")
    if data.get("shift_d") == "auto":
        data["shift_d"] = None
    for key in _SEQUENCES & data.keys():
        val = data[key]
        if isinstance(val, (str, int, float)):
            val = [val]
        if not isinstance(val, (list, tuple)):
            raise ConfigError(key, f"must be a list, got {val!r}")
        data[key] = tuple(val)
    for key in data.keys() - _TEXT:
        val = data[key]
        data[key] = tuple(_number(v) for v in val) if isinstance(val, tuple) else _number(val)
    return ExperimentConfig(**data)


def load_config(path: Optional[str], **overrides) -> ExperimentConfig:
    """Read a flat YAML file (an empty file gives the defaults)."""
    data = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                data = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ConfigError("<file>", f"not valid YAML: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("<file>", "top level must be a mapping")
        for k, v in data.items():
            if isinstance(v, dict):
                raise ConfigError(str(k), "nested sections are not supported (flat keys only)")
    return from_mapping(data, **overrides)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
