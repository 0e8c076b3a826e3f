"""Flat ``dotted.key = value`` run configuration.

One assignment per line, UTF-8, ``#`` starts a comment. Unknown keys and
unparsable values are errors so typos never pass silently.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _dt(text: str):
    return "auto" if text.strip().lower() == "auto" else float(text)


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    "grid.n": (int, 32),
    "physics.nu": (float, 0.0),
    "physics.eta": (float, 0.0),
    "physics.hall": (float, 1.0),
    "time.dt": (_dt, "auto"),
    "time.t_end": (float, 1.0),
    "time.record_every": (int, 10),
    "init.kind": (str, "abc"),
    "init.seed": (int, 0),
    "init.field": (str, "u"),
    "init.A": (float, 1.0),
    "init.B": (float, 1.0),
    "init.C": (float, 1.0),
    "init.lambda": (int, 1),
    "init.shell": (int, 1),
    "init.sign": (int, 1),
    "init.amplitude": (float, 1.0),
    "init.n1": (int, 1),
    "init.s1": (int, 1),
    "init.n2": (int, 4),
    "init.s2": (int, -1),
    "init.amp1": (float, 0.1),
    "init.amp2": (float, 0.1),
    "init.path": (str, ""),
    "perturbation.enabled": (_bool, False),
    "perturbation.amplitude": (float, 0.01),
    "perturbation.seed": (int, 1),
    "output.csv_path": (str, "run.csv"),
    "output.checkpoint_path": (str, "state.ckpt"),
    "output.checkpoint_every": (int, 0),
    "minimize.mode": (str, "woltjer"),
    "minimize.h1": (float, 3.0 * (2.0 * math.pi) ** 3),
    "minimize.h2": (_opt_float, None),
    "minimize.max_iter": (int, 100_000),
    "minimize.omega_shell": (int, 1),
    "minimize.omega_sign": (int, 1),
    "minimize.omega_amplitude": (float, 1.0),
    "minimize.result_path": (str, "minimize.csv"),
    "verify.reference_nu": (_opt_float, None),
}

INIT_KINDS = ("abc", "shell", "double_beltrami", "checkpoint", "random")


@dataclass
class RunConfig:
    """Resolved configuration: every schema key has a value."""

    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    def __setitem__(self, key: str, value):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = value

    def set_text(self, key: str, text: str):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parser = SCHEMA[key][0]
        try:
            self.values[key] = parser(text.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text.strip()!r} ({exc})") from None

    def validate(self):
        n = self["grid.n"]
        if n < 8 or n % 2:
            raise ConfigError(f"grid.n must be even and >= 8, got {n}")
        for key in ("physics.nu", "physics.eta", "physics.hall", "time.t_end"):
            v = self[key]
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{key} must be finite and >= 0, got {v}")
        dt = self["time.dt"]
        if dt != "auto" and not (math.isfinite(dt) and dt > 0):
            raise ConfigError(f"time.dt must be positive or 'auto', got {dt}")
        if self["time.record_every"] < 1:
            raise ConfigError("time.record_every must be >= 1")
        if self["init.kind"] not in INIT_KINDS:
            raise ConfigError(f"init.kind must be one of {', '.join(INIT_KINDS)}")
        if self["init.field"] not in ("u", "B", "both"):
            raise ConfigError("init.field must be u, B or both")
        if self["minimize.mode"] not in ("woltjer", "fixed_omega", "full"):
            raise ConfigError("minimize.mode must be woltjer, fixed_omega or full")

    def echo(self) -> list[str]:
        """``key = value`` lines in schema order."""
        return [f"{k} = {_show(self.values[k])}" for k in SCHEMA]


def _show(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str) -> RunConfig:
    """Parse config text over the defaults.

    Raises:
        ConfigError: malformed line, unknown key or bad value.
    """
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            cfg.set_text(key, value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return cfg


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
