"""Run configuration: a small ``key = value`` file with typed fields.

Schema (alpha is required, everything else has a default):

  alpha         fractional dissipation exponent, in (1, 5/4)
  n_grid        even grid size per axis, >= 4                 [32]
  dt            solver time step, > 0                         [0.01]
  t_end         integration end time, >= 0                    [0.8]
  init          taylor_green | random_bandlimited[(seed, k_min, k_max)]
  seed          RNG seed for random initial data              [0]
  k_min, k_max  spectral band for random initial data         [1, 3]
  amplitude     initial-data scale (TG amplitude / random energy)  [1.0]
  n_snapshots   stored snapshots per run, >= 2                [11]
  epsilon_0     candidate-extraction smallness threshold, > 0 [0.1]
  epsilon       counting-argument lower-bound constant, > 0   [1e-3]
  gamma         exponent improvement, in [0, L - J) at alpha  [0.0]
  radii         comma-separated analysis radii, decreasing    [0.9, 0.45]
  centers       lattice centers per axis, >= 1                [3]
  output_dir    artifact directory                            [out]

Lines starting with ``#`` and blank lines are ignored. Unknown keys are
rejected so a typo cannot silently fall back to a default. Command-line
overrides win over file values.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields as dc_fields

from .bounds import eval_J, eval_L
from .errors import ConfigError
from .fields import (
    VelocityState,
    _check_alpha,
    random_bandlimited,
    taylor_green,
)

_INIT_RE = re.compile(r"^([a-z_]+)\s*(?:\(([^)]*)\))?$")
_INIT_NAMES = ("taylor_green", "random_bandlimited")


def _parse_radii(text):
    if isinstance(text, (tuple, list)):
        vals = tuple(float(v) for v in text)
    else:
        parts = [p for p in str(text).replace("(", "").replace(")", "")
                 .split(",") if p.strip()]
        if not parts:
            raise ConfigError("radii must list at least one value")
        try:
            vals = tuple(float(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"bad radii entry: {exc}") from None
    return vals


def _parse_int(text):
    try:
        return int(str(text).strip())
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _parse_float(text):
    try:
        return float(str(text).strip())
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


_PARSERS = {
    "alpha": _parse_float,
    "n_grid": _parse_int,
    "dt": _parse_float,
    "t_end": _parse_float,
    "init": lambda v: str(v).strip(),
    "seed": _parse_int,
    "k_min": _parse_int,
    "k_max": _parse_int,
    "amplitude": _parse_float,
    "n_snapshots": _parse_int,
    "epsilon_0": _parse_float,
    "epsilon": _parse_float,
    "gamma": _parse_float,
    "radii": _parse_radii,
    "centers": _parse_int,
    "output_dir": lambda v: str(v).strip(),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters for the solver and analysis commands."""

    alpha: float
    n_grid: int = 32
    dt: float = 0.01
    t_end: float = 0.8
    init: str = "taylor_green"
    seed: int = 0
    k_min: int = 1
    k_max: int = 3
    amplitude: float = 1.0
    n_snapshots: int = 11
    epsilon_0: float = 0.1
    epsilon: float = 1e-3
    gamma: float = 0.0
    radii: tuple = (0.9, 0.45)
    centers: int = 3
    output_dir: str = "out"

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.n_grid < 4 or self.n_grid % 2:
            raise ConfigError("n_grid must be an even integer >= 4")
        if self.dt <= 0.0:
            raise ConfigError("dt must be positive")
        if self.t_end < 0.0:
            raise ConfigError("t_end must be nonnegative")
        name, args = _split_init(self.init)
        if name not in _INIT_NAMES:
            raise ConfigError(
                f"init must be one of {_INIT_NAMES}, got {name!r}")
        if args is not None and len(args) != 3:
            raise ConfigError(
                "init arguments must be (seed, k_min, k_max)")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if not 1 <= self.k_min <= self.k_max:
            raise ConfigError("need 1 <= k_min <= k_max")
        if name == "random_bandlimited" and 2 * self.k_max >= self.n_grid:
            raise ConfigError("k_max must stay below half the grid")
        if self.amplitude < 0.0:
            raise ConfigError("amplitude must be nonnegative")
        if self.n_snapshots < 2:
            raise ConfigError("n_snapshots must be at least 2")
        if self.epsilon_0 <= 0.0 or self.epsilon <= 0.0:
            raise ConfigError("epsilon_0 and epsilon must be positive")
        gap = eval_L(self.alpha) - eval_J(self.alpha)
        if not 0.0 <= self.gamma < gap:
            raise ConfigError(
                f"gamma must lie in [0, {gap:g}) at alpha={self.alpha:g}")
        radii = self.radii
        if not radii or min(radii) <= 0.0:
            raise ConfigError("radii must be positive")
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise ConfigError("radii must be strictly decreasing")
        if self.centers < 1:
            raise ConfigError("centers must be at least 1")
        if not self.output_dir:
            raise ConfigError("output_dir must be nonempty")


def _split_init(value: str):
    m = _INIT_RE.match(value.strip())
    if m is None:
        raise ConfigError(f"cannot parse init spec {value!r}")
    name = m.group(1)
    if m.group(2) is None:
        return name, None
    try:
        args = tuple(int(p) for p in m.group(2).split(",") if p.strip())
    except ValueError:
        raise ConfigError(
            f"init arguments must be integers in {value!r}") from None
    return name, args


def parse_config_text(text: str) -> dict:
    """key = value lines into a typed dict; rejects unknown keys."""
    out = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _PARSERS[key](value.strip())
    return out


def load_config(path: str | None = None,
                overrides: dict | None = None) -> RunConfig:
    """File settings, then overrides on top, then full validation."""
    settings: dict = {}
    if path is not None:
        try:
            with open(path, "r") as fh:
                settings = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    if overrides:
        known = {f.name for f in dc_fields(RunConfig)}
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            settings[key] = _PARSERS[key](value) if isinstance(value, str) \
                else value
    if "alpha" not in settings:
        raise ConfigError("alpha is required (config file or --alpha)")
    # init-spec arguments take effect as seed/k_min/k_max unless given
    name, args = _split_init(str(settings.get("init", "taylor_green")))
    if args is not None:
        settings["init"] = name
        settings.setdefault("seed", args[0])
        settings.setdefault("k_min", args[1])
        settings.setdefault("k_max", args[2])
    if isinstance(settings.get("radii"), (list, tuple)):
        settings["radii"] = tuple(float(v) for v in settings["radii"])
    return RunConfig(**settings)


def initial_state(cfg: RunConfig) -> VelocityState:
    """The configured initial velocity field."""
    if cfg.init == "taylor_green":
        return taylor_green(cfg.n_grid, cfg.alpha, amplitude=cfg.amplitude)
    return random_bandlimited(cfg.n_grid, cfg.alpha, seed=cfg.seed,
                              k_min=cfg.k_min, k_max=cfg.k_max,
                              energy=cfg.amplitude)
