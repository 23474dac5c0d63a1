"""Scenario configuration files.

A scenario is a TOML (or JSON) document with one table per domain type and a
``[run]`` table of execution settings::

    [protocol]
    intensities = [0.6, 0.2, 0.0]
    prep_probs = [0.5, 0.25, 0.25]

    [detector]
    eta_high = 0.12
    eta_low = 0.06
    dark_count = 1e-05
    transmittance = 0.99
    alpha = 0.5

    [channel]
    length_km = 100.0
    loss_exponent_per_km = 0.02

    [eve]
    active = false
    beta = 0.5

    [run]
    mode = "two_spad"
    n_alice = 1000000000.0
    pulses = 1000000
    seed = 0
    sweep = [0.02, 0.04, 0.06, 0.08, 0.1]
    length_range = "0:150:5"

Missing tables and keys fall back to the defaults above.
"""
from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .model import (
    ChannelConfig,
    ConfigError,
    DecoyProtocol,
    DetectorConfig,
    EveStrategy,
    ReceiverMode,
    from_dict,
    to_dict,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["RunSettings", "Scenario", "load_scenario", "parse_range", "dumps_toml"]

DEFAULT_SWEEPS = {
    ReceiverMode.TWO_SPAD: (0.02, 0.04, 0.06, 0.08, 0.10),
    ReceiverMode.ONE_SPAD: (0.99, 0.999, 0.9999),
}


def parse_range(text: str) -> list[float]:
    """Expand ``"a:b:step"`` into an inclusive list of lengths."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ConfigError("RunSettings", [("length_range", f"expected 'a:b:step', got {text!r}")])
    try:
        a, b, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError("RunSettings", [("length_range", f"non-numeric range {text!r}")]) from None
    if not (math.isfinite(a) and math.isfinite(b) and step > 0 and b >= a >= 0):
        raise ConfigError("RunSettings", [("length_range", f"need 0 <= a <= b and step > 0, got {text!r}")])
    n = int(math.floor((b - a) / step + 1e-9))
    return [round(a + i * step, 10) for i in range(n + 1)]


@dataclass(frozen=True)
class RunSettings:
    mode: ReceiverMode = ReceiverMode.TWO_SPAD
    n_alice: float = 1e9
    pulses: int = 1_000_000
    seed: int = 0
    sweep: tuple[float, ...] | None = None
    sweep_param: str | None = None
    length_range: str = "0:150:5"

    def __post_init__(self) -> None:
        problems = []
        try:
            object.__setattr__(self, "mode", ReceiverMode(self.mode))
        except ValueError:
            problems.append(("mode", f"must be two_spad or one_spad, got {self.mode!r}"))
        if not (isinstance(self.n_alice, (int, float)) and self.n_alice > 0 and math.isfinite(self.n_alice)):
            problems.append(("n_alice", "must be a positive number"))
        if not (isinstance(self.pulses, int) and self.pulses >= 1):
            problems.append(("pulses", "must be a positive integer"))
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            problems.append(("seed", "must be an integer in [0, 2**64)"))
        if self.sweep is not None:
            object.__setattr__(self, "sweep", tuple(float(v) for v in self.sweep))
            if not self.sweep:
                problems.append(("sweep", "must be nonempty"))
        if self.sweep_param not in (None, "eta_low", "transmittance"):
            problems.append(("sweep_param", "must be eta_low or transmittance"))
        if problems:
            raise ConfigError("RunSettings", problems)
        parse_range(self.length_range)

    def sweep_values(self) -> tuple[float, ...]:
        return self.sweep if self.sweep is not None else DEFAULT_SWEEPS[self.mode]

    def lengths(self) -> list[float]:
        return parse_range(self.length_range)


@dataclass(frozen=True)
class Scenario:
    protocol: DecoyProtocol = field(default_factory=DecoyProtocol)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    eve: EveStrategy = field(default_factory=EveStrategy)
    run: RunSettings = field(default_factory=RunSettings)

    def to_dict(self) -> dict[str, Any]:
        run = to_dict(self.run)
        run["mode"] = self.run.mode.value
        return {
            "protocol": to_dict(self.protocol),
            "detector": to_dict(self.detector),
            "channel": to_dict(self.channel),
            "eve": to_dict(self.eve),
            "run": run,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Scenario":
        sections = {
            "protocol": DecoyProtocol,
            "detector": DetectorConfig,
            "channel": ChannelConfig,
            "eve": EveStrategy,
            "run": RunSettings,
        }
        unknown = sorted(set(data) - set(sections))
        if unknown:
            raise ConfigError("Scenario", [(k, "unknown section") for k in unknown])
        kwargs = {}
        for name, typ in sections.items():
            if name in data:
                kwargs[name] = from_dict(typ, data[name])
        return cls(**kwargs)


def load_scenario(path: str | Path | None) -> Scenario:
    if path is None:
        return Scenario()
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError("Scenario", [("<file>", f"cannot read {path}: {exc.strerror}")]) from None
    try:
        if path.suffix == ".json":
            data = json.loads(raw)
        else:
            data = tomllib.loads(raw.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError("Scenario", [("<file>", f"cannot parse {path}: {exc}")]) from None
    return Scenario.from_dict(data)


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to TOML")


def dumps_toml(data: Mapping[str, Mapping[str, Any]]) -> str:
    """Write a two-level mapping of scalars and lists as TOML; ``None`` values are omitted."""
    out = []
    for section, table in data.items():
        out.append(f"[{section}]")
        for k, v in table.items():
            if v is not None:
                out.append(f"{k} = {_toml_value(v)}")
        out.append("")
    return "\n".join(out)

