"""Flat ``key = value`` experiment configuration.

One assignment per line, ``#`` starts a comment, lists are comma-separated.
``seed`` is mandatory; every other key has a default. The attack probability
is given either directly (``p = 0.05``) or through a rule
(``p_rule = quarter_k`` for ``1/(4k)``).
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .bounds import attack_probability_limit

logger = logging.getLogger(__name__)

P_RULES = {
    "quarter_k": lambda k: 1.0 / (4 * k),
    "half_limit": lambda k: 0.5 / (4 * k - 2),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seed: int
    # system
    generator: str = "nilpotent"
    n: int = 30
    m: int = 3
    r: int = 3
    target_norm: float = 0.6
    entry_dist: str = "uniform"
    # estimation horizon
    k: int = 5
    horizon: int = 4000
    checkpoints: str = "geometric"
    checkpoint_base: int = 50
    # inputs and attacks
    gamma: float = 10.0
    p: float | None = None
    p_rule: str = "quarter_k"
    attack: str = "state_adaptive"
    mean_low: float = 300.0
    mean_high: float = 1000.0
    attack_mean: float = 0.0
    cov_scale: float = 25.0
    sign_rule: str = "positive_high"
    x0: str = "fixed"
    x0_value: float = 1000.0
    x0_scale: float = 1.0
    eta: float | None = None
    # estimator
    lad_inner_max_iter: int = 60
    lad_max_pivots: int = 2000
    lad_tol: float = 1e-9
    # realization
    d_list: tuple = ()
    i_list: tuple = (0, 1, 2, 3)
    realize_hankel: str = "d"
    realize_T: int | None = None
    tail_tol: float = 1e-12
    # harness
    trials: int = 20
    c: float = 1.0
    delta: float = 0.05
    n_directions: int = 200
    workers: int = 1
    out: str = "out"
    strict_assumptions: bool = False
    resolved: dict = field(default_factory=dict, compare=False)

    @property
    def p_value(self) -> float:
        if self.p is not None:
            return self.p
        return P_RULES[self.p_rule](self.k)

    @property
    def eta_value(self) -> float:
        if self.eta is not None:
            return self.eta
        return nominal_eta(self)

    def checkpoint_list(self) -> list[int]:
        if self.checkpoints == "geometric":
            Ts, T = [], self.checkpoint_base
            while T < self.horizon:
                Ts.append(T)
                T *= 2
            return Ts + [self.horizon]
        return sorted(int(v) for v in self.checkpoints.split(","))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with fields replaced and the result re-validated."""
        text = serialize_config(dataclasses.replace(self, **kw))
        return parse_config(text, strict=kw.get("strict_assumptions", self.strict_assumptions))


_FIELDS = {f.name: f for f in fields(ExperimentConfig) if f.name != "resolved"}
_ORDER = [name for name in _FIELDS]
_CHOICES = {
    "generator": ("nilpotent", "general"),
    "entry_dist": ("uniform", "gaussian"),
    "p_rule": tuple(P_RULES) + ("explicit",),
    "attack": ("none", "iid_gaussian", "state_adaptive"),
    "sign_rule": ("positive_high", "positive_low"),
    "x0": ("fixed", "gaussian"),
    "realize_hankel": ("d", "k"),
}
_OPTIONAL = {"p", "eta", "realize_T"}
_INT_TUPLES = {"d_list", "i_list"}


def nominal_eta(cfg: ExperimentConfig) -> float:
    """Nominal scale of the initial state and attack vectors (Euclidean)."""
    n = cfg.n
    x0 = abs(cfg.x0_value) * math.sqrt(n) if cfg.x0 == "fixed" else cfg.x0_scale * math.sqrt(n)
    noise = math.sqrt(n * cfg.cov_scale)
    if cfg.attack == "state_adaptive":
        w = max(abs(cfg.mean_low), abs(cfg.mean_high)) * math.sqrt(n) + noise
    elif cfg.attack == "iid_gaussian":
        w = abs(cfg.attack_mean) * math.sqrt(n) + noise
    else:
        w = 0.0
    return max(x0, w, 1e-12)


def _convert(name: str, raw: str):
    f = _FIELDS[name]
    raw = raw.strip()
    if name in _OPTIONAL and raw.lower() in ("auto", "none", ""):
        return None
    try:
        if name in _INT_TUPLES:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if name == "checkpoints":
            if raw != "geometric":
                [int(v) for v in raw.split(",")]
            return raw
        kind = f.type if isinstance(f.type, str) else f.type.__name__
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value for {name!r}: {raw!r}") from None


def _assumption(message: str, strict: bool) -> None:
    if strict:
        raise ConfigError(message)
    logger.warning(message)


def validate(cfg: ExperimentConfig, strict: bool | None = None) -> ExperimentConfig:
    strict = cfg.strict_assumptions if strict is None else strict
    for name, choices in _CHOICES.items():
        if getattr(cfg, name) not in choices:
            raise ConfigError(f"{name} must be one of {choices}, got {getattr(cfg, name)!r}")
    for name in ("n", "m", "r", "k", "horizon", "checkpoint_base", "trials", "n_directions", "workers"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be positive, got {getattr(cfg, name)}")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if not 0.0 < cfg.target_norm < 1.0:
        raise ConfigError(f"Assumption 1: target_norm must lie in (0, 1), got {cfg.target_norm}")
    if cfg.generator == "nilpotent" and cfg.n <= 2 * cfg.k - 1:
        raise ConfigError(f"nilpotent generator needs n > 2k-1 (n={cfg.n}, k={cfg.k})")
    if not cfg.gamma > 0:
        raise ConfigError("gamma must be positive")
    if cfg.cov_scale < 0:
        raise ConfigError("cov_scale must be nonnegative")
    if cfg.eta is not None and not cfg.eta > 0:
        raise ConfigError("Assumption 2: eta must be positive")
    p = cfg.p_value
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"attack probability must lie in [0, 1), got {p}")
    if p >= attack_probability_limit(cfg.k):
        _assumption(f"Assumption 3: p >= 1/(4k-2) (p={p:.6g}, k={cfg.k})", strict)
    cps = cfg.checkpoint_list()
    if cps[0] < 1 or cps[-1] > cfg.horizon:
        raise ConfigError(f"checkpoints must lie in 1..horizon={cfg.horizon}")
    if cfg.realize_T is not None and not 1 <= cfg.realize_T <= cfg.horizon:
        raise ConfigError(f"realize_T must lie in 1..horizon={cfg.horizon}")
    if not cfg.d_list:
        cfg.d_list = tuple(range(1, cfg.k + 1))
        cfg.resolved["d_list"] = "derived: 1..k"
    if any(not 1 <= d <= cfg.k for d in cfg.d_list):
        raise ConfigError(f"d_list entries must lie in 1..k={cfg.k}")
    if any(d > cfg.n for d in cfg.d_list):
        raise ConfigError(f"d_list entries must not exceed n={cfg.n}")
    if any(i < 0 for i in cfg.i_list):
        raise ConfigError("i_list entries must be nonnegative")
    if not 0.0 < cfg.delta <= 1.0:
        raise ConfigError("delta must lie in (0, 1]")
    if cfg.c <= 0:
        raise ConfigError("bound constant c must be positive")
    return cfg


def parse_config(text: str, strict: bool | None = None) -> ExperimentConfig:
    values, resolved = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r} (line {lineno})")
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (line {lineno})")
        values[key] = _convert(key, raw)
        resolved[key] = "given"
    if "seed" not in values:
        raise ConfigError("missing mandatory key 'seed'")
    if values.get("p") is not None:
        if resolved.get("p_rule") == "given" and values["p_rule"] != "explicit":
            raise ConfigError("give either 'p' or 'p_rule', not both")
        values["p_rule"] = "explicit"
    elif values.get("p_rule") == "explicit":
        raise ConfigError("p_rule = explicit requires a value for 'p'")
    for name in _ORDER:
        resolved.setdefault(name, "default")
    if strict is not None:
        values["strict_assumptions"] = strict
    cfg = ExperimentConfig(**values)
    if cfg.p is None:
        resolved["p"] = f"derived from p_rule={cfg.p_rule}: {cfg.p_value!r}"
    if cfg.eta is None:
        resolved["eta"] = f"derived nominal scale: {cfg.eta_value!r}"
    cfg.resolved = resolved
    return validate(cfg)


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for name in _ORDER:
        value = getattr(cfg, name)
        if name == "p_rule" and cfg.p is not None:
            continue
        if name == "p" and value is None:
            continue
        lines.append(f"{name} = {_format(value)}")
    return "\n".join(lines) + "\n"


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {name: getattr(cfg, name) for name in _ORDER}
    for name in _INT_TUPLES:
        out[name] = list(out[name])
    out["p_effective"] = cfg.p_value
    out["eta_effective"] = cfg.eta_value
    out["resolved"] = dict(sorted(cfg.resolved.items()))
    return out


def load_config(path, strict: bool | None = None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), strict=strict)


def x0_sampler(cfg: ExperimentConfig):
    """Initial state: a fixed vector or a Gaussian draw from the input stream."""
    if cfg.x0 == "fixed":
        return np.full(cfg.n, float(cfg.x0_value))
    return lambda rng: cfg.x0_scale * rng.standard_normal(cfg.n)
