"""Shared domain types for leakage estimation under pulsed detector blinding.

All types are frozen dataclasses validated on construction. Probabilities are
plain fractions in [0, 1]; counts are integers unless a ``SessionCounts`` is
explicitly marked as holding expectations.
"""
from __future__ import annotations

import enum
import math
import numbers
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Mapping

__all__ = [
    "ConfigError",
    "ReceiverMode",
    "DecoyProtocol",
    "DetectorConfig",
    "ChannelConfig",
    "EveStrategy",
    "SessionCounts",
    "LeakageEstimate",
    "validate",
    "to_dict",
    "from_dict",
]


class ConfigError(ValueError):
    """Raised when one or more invariants of a domain type are violated.

    ``problems`` holds ``(field, message)`` pairs, one per violation.
    """

    def __init__(self, type_name: str, problems: list[tuple[str, str]]):
        self.type_name = type_name
        self.problems = list(problems)
        lines = "; ".join(f"{f}: {m}" for f, m in self.problems)
        super().__init__(f"invalid {type_name}: {lines}")


class ReceiverMode(str, enum.Enum):
    TWO_SPAD = "two_spad"
    ONE_SPAD = "one_spad"


def _finite(x: Any) -> bool:
    return isinstance(x, numbers.Real) and not isinstance(x, bool) and math.isfinite(x)


def _check_prob(problems, name, x, *, lo=0.0, hi=1.0, lo_open=False, hi_open=False):
    if not _finite(x):
        problems.append((name, f"must be a finite number, got {x!r}"))
        return
    below = x <= lo if lo_open else x < lo
    above = x >= hi if hi_open else x > hi
    if below or above:
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        problems.append((name, f"must lie in {lb}{lo}, {hi}{rb}, got {x!r}"))


class _Validated:
    """Mixin: run ``problems()`` after construction and raise if any."""

    def __post_init__(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError(type(self).__name__, problems)

    def problems(self) -> list[tuple[str, str]]:  # pragma: no cover - overridden
        return []


@dataclass(frozen=True)
class DecoyProtocol(_Validated):
    """Decoy-state intensities and the probability of preparing each one."""

    intensities: tuple[float, ...] = (0.6, 0.2, 0.0)
    prep_probs: tuple[float, ...] = (0.5, 0.25, 0.25)

    def __post_init__(self) -> None:
        object.__setattr__(self, "intensities", tuple(self.intensities))
        object.__setattr__(self, "prep_probs", tuple(self.prep_probs))
        super().__post_init__()

    def problems(self):
        out: list[tuple[str, str]] = []
        if len(self.intensities) == 0:
            out.append(("intensities", "at least one intensity required"))
        if len(self.intensities) != len(self.prep_probs):
            out.append(("prep_probs", "must have the same length as intensities"))
        for i, mu in enumerate(self.intensities):
            if not _finite(mu) or mu < 0:
                out.append((f"intensities[{i}]", f"must be finite and >= 0, got {mu!r}"))
        for i, p in enumerate(self.prep_probs):
            _check_prob(out, f"prep_probs[{i}]", p)
        if all(_finite(p) for p in self.prep_probs) and self.prep_probs:
            total = math.fsum(self.prep_probs)
            if abs(total - 1.0) > 1e-12:
                out.append(("prep_probs", f"prep_probs must sum to 1, got {total!r}"))
        return out


@dataclass(frozen=True)
class DetectorConfig(_Validated):
    """Receiver detector settings.

    ``eta_high`` and ``eta_low`` are the detection efficiencies under the high
    and low gate voltage; ``alpha`` is the probability of applying the high
    gate in a slot. ``transmittance`` is the optical alignment transmittance
    (misalignment is ``1 - transmittance``).
    """

    eta_high: float = 0.12
    eta_low: float = 0.06
    dark_count: float = 1e-5
    transmittance: float = 0.99
    alpha: float = 0.5

    def problems(self):
        out: list[tuple[str, str]] = []
        _check_prob(out, "eta_high", self.eta_high, lo_open=True)
        _check_prob(out, "eta_low", self.eta_low, lo_open=True)
        _check_prob(out, "dark_count", self.dark_count, hi_open=True)
        _check_prob(out, "transmittance", self.transmittance, lo_open=True)
        _check_prob(out, "alpha", self.alpha, lo_open=True)
        if _finite(self.eta_low) and _finite(self.eta_high) and self.eta_low > self.eta_high:
            out.append(("eta_low", "eta_low <= eta_high required"))
        return out


@dataclass(frozen=True)
class ChannelConfig(_Validated):
    """Fiber channel with transmittance ``10 ** (-loss_exponent_per_km * L)``."""

    length_km: float = 0.0
    loss_exponent_per_km: float = 0.02

    def problems(self):
        out: list[tuple[str, str]] = []
        if not _finite(self.length_km) or self.length_km < 0:
            out.append(("length_km", f"must be finite and >= 0, got {self.length_km!r}"))
        if not _finite(self.loss_exponent_per_km) or self.loss_exponent_per_km <= 0:
            out.append(("loss_exponent_per_km", f"must be finite and > 0, got {self.loss_exponent_per_km!r}"))
        return out


@dataclass(frozen=True)
class EveStrategy(_Validated):
    """Eavesdropper behaviour: ``beta`` is the chance of a high-energy trigger."""

    active: bool = False
    beta: float = 0.5
    detection_eff: float = 1.0

    def problems(self):
        out: list[tuple[str, str]] = []
        if not isinstance(self.active, bool):
            out.append(("active", f"must be a bool, got {self.active!r}"))
        _check_prob(out, "beta", self.beta)
        if self.detection_eff != 1.0:
            out.append(("detection_eff", "only perfect interception (1.0) is supported"))
        return out


@dataclass(frozen=True)
class SessionCounts(_Validated):
    """Tallies from one QKD session.

    With ``expected=True`` the fields hold real-valued expectations instead of
    observed integer counts.
    """

    n_alice: float = 0
    n_sent: float = 0
    n_clicked: float = 0
    n_double: float = 0
    n_error: float = 0
    expected: bool = False

    def problems(self):
        out: list[tuple[str, str]] = []
        names = ("n_alice", "n_sent", "n_clicked", "n_double", "n_error")
        for name in names:
            v = getattr(self, name)
            if not _finite(v) or v < 0:
                out.append((name, f"must be finite and >= 0, got {v!r}"))
            elif not self.expected and not float(v).is_integer():
                out.append((name, f"observed counts must be integers, got {v!r}"))
        if out or self.expected:
            # expectations from the closed forms need not respect tally ordering
            return out
        if self.n_double > self.n_clicked:
            out.append(("n_double", "n_double <= n_clicked required"))
        if self.n_error > self.n_clicked:
            out.append(("n_error", "n_error <= n_clicked required"))
        if self.n_sent > self.n_alice:
            out.append(("n_sent", "n_sent <= n_alice required"))
        return out


@dataclass(frozen=True)
class LeakageEstimate:
    """Result of the leakage estimator for one session."""

    mode: ReceiverMode
    eve_clicked: float
    key_bits: float
    secure_fraction: float
    alpha_opt: float
    beta_hat: float
    beta_sigma: float
    key_bits_sigma: float
    flags: tuple[str, ...] = field(default_factory=tuple)

    def as_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["flags"] = list(self.flags)
        return d


_CONFIG_TYPES = {
    "DecoyProtocol": DecoyProtocol,
    "DetectorConfig": DetectorConfig,
    "ChannelConfig": ChannelConfig,
    "EveStrategy": EveStrategy,
    "SessionCounts": SessionCounts,
}


def validate(obj: Any) -> Any:
    """Return ``obj`` unchanged if it satisfies its invariants, else raise ConfigError."""
    if not hasattr(obj, "problems"):
        raise TypeError(f"cannot validate object of type {type(obj).__name__}")
    problems = obj.problems()
    if problems:
        raise ConfigError(type(obj).__name__, problems)
    return obj


def to_dict(obj: Any) -> dict[str, Any]:
    d = asdict(obj)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d


def from_dict(cls: type, data: Mapping[str, Any]):
    """Build ``cls`` from a mapping, reporting unknown keys and bad values together."""
    if not isinstance(data, Mapping):
        raise ConfigError(cls.__name__, [("<root>", f"expected a table, got {type(data).__name__}")])
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(cls.__name__, [(k, "unknown key") for k in unknown])
    kwargs = dict(data)
    for k in ("intensities", "prep_probs"):
        if k in kwargs:
            if not isinstance(kwargs[k], (list, tuple)):
                raise ConfigError(cls.__name__, [(k, "must be a list of numbers")])
            kwargs[k] = tuple(kwargs[k])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(cls.__name__, [("<root>", str(exc))]) from None
