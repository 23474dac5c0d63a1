"""Detector characterization: trigger-energy thresholds and the fingerprint condition.

Energies are relative dB throughout; linear energies are ``10**(dB/10)`` in
the same arbitrary unit. Curve files are delimited text with a ``#`` header::

    # gate_label: low
    # blinding_mode: pulsed
    # repetition_rate_mhz: 10
    # avg_blinding_power: 0.42
    energy_db,p_det
    -10.0,0.0
    ...
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "GateLabel",
    "BlindingMode",
    "DetectionCurve",
    "EnergyGap",
    "CircuitParams",
    "FingerprintVerdict",
    "NoThresholdError",
    "extract_gap",
    "fingerprint_condition",
    "energy_ratio",
    "gap_margin_series",
    "bias_drop",
    "read_curve",
    "parse_curve",
    "sample_curves",
    "load_detection_table",
    "gapcheck",
]

FACTOR_TWO_DB = 10.0 * math.log10(2.0)


class GateLabel(str, enum.Enum):
    HIGH = "high"
    LOW = "low"
    DEFAULT = "default"


class BlindingMode(str, enum.Enum):
    CW = "cw"
    PULSED = "pulsed"


class NoThresholdError(ValueError):
    """The curve never reaches the requested detection-probability level."""


@dataclass(frozen=True)
class DetectionCurve:
    points: tuple[tuple[float, float], ...]
    gate_label: GateLabel = GateLabel.DEFAULT
    blinding_mode: BlindingMode = BlindingMode.PULSED
    repetition_rate_mhz: float | None = None
    avg_blinding_power: float | None = None
    name: str = ""

    def __post_init__(self) -> None:
        pts = tuple((float(e), float(p)) for e, p in self.points)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "gate_label", GateLabel(self.gate_label))
        object.__setattr__(self, "blinding_mode", BlindingMode(self.blinding_mode))
        if len(pts) < 2:
            raise ValueError("a detection curve needs at least two points")
        for e, p in pts:
            if not (math.isfinite(e) and math.isfinite(p)):
                raise ValueError("curve points must be finite")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"detection probability {p!r} outside [0, 1]")
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise ValueError("energies must be strictly increasing")

    @property
    def energies(self) -> list[float]:
        return [e for e, _ in self.points]

    @property
    def probabilities(self) -> list[float]:
        return [p for _, p in self.points]


@dataclass(frozen=True)
class EnergyGap:
    e_always: float
    e_never: float
    epsilon: float

    def __post_init__(self) -> None:
        if self.e_never > self.e_always:
            raise ValueError("e_never <= e_always required within one curve")


def _crossing(x0: float, p0: float, x1: float, p1: float, level: float) -> float:
    return x0 + (level - p0) / (p1 - p0) * (x1 - x0)


def extract_gap(curve: DetectionCurve, epsilon: float = 0.01) -> EnergyGap:
    """Thresholds of the piecewise-linear curve.

    ``e_always`` is the energy above which the curve never drops below
    ``1 - epsilon``; ``e_never`` is the energy below which it never rises
    above ``epsilon``.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon!r}")
    xs, ps = curve.energies, curve.probabilities
    hi, lo = 1.0 - epsilon, epsilon
    if ps[-1] < hi:
        raise NoThresholdError(f"no-threshold: curve never reaches {hi:g} (e_always)")
    below = [i for i, p in enumerate(ps) if p < hi]
    if below:
        i = below[-1]
        e_always = _crossing(xs[i], ps[i], xs[i + 1], ps[i + 1], hi)
    else:
        e_always = xs[0]
    if ps[0] > lo:
        raise NoThresholdError(f"no-threshold: curve starts above {lo:g} (e_never)")
    j = next(i for i, p in enumerate(ps) if p > lo)
    e_never = _crossing(xs[j - 1], ps[j - 1], xs[j], ps[j], lo)
    return EnergyGap(e_always=e_always, e_never=e_never, epsilon=epsilon)


@dataclass(frozen=True)
class FingerprintVerdict:
    holds: bool
    margin_db: float
    ratio: float


def energy_ratio(e_always_db: float, e_never_db: float) -> float:
    """``(E_never - E_always) / E_always`` in linear energy."""
    return 10.0 ** ((e_never_db - e_always_db) / 10.0) - 1.0


def fingerprint_condition(e_always_high: float, e_never_low: float) -> FingerprintVerdict:
    """Test ``2 * E_always(high gate) <= E_never(low gate)`` on dB inputs."""
    if not (math.isfinite(e_always_high) and math.isfinite(e_never_low)):
        raise ValueError("energies must be finite")
    margin = e_never_low - (e_always_high + FACTOR_TWO_DB)
    # tolerance absorbs rounding of the factor-two boundary written in dB
    holds = margin >= -1e-9
    return FingerprintVerdict(holds=holds, margin_db=margin, ratio=energy_ratio(e_always_high, e_never_low))


@dataclass(frozen=True)
class MarginPoint:
    repetition_rate_mhz: float | None
    blinding_mode: BlindingMode
    margin_linear: float
    avg_blinding_power: float | None
    positive: bool


def gap_margin_series(
    pairs: Iterable[tuple[DetectionCurve, DetectionCurve]],
    epsilon: float = 0.01,
) -> list[MarginPoint]:
    """``E_never(low) - 2*E_always(default)`` per blinding setting, in linear units.

    ``pairs`` holds ``(default_gate_curve, low_gate_curve)`` measured under the
    same blinding setting.
    """
    out = []
    for default, low in pairs:
        if default is None or low is None:
            raise ValueError("missing-pair: each setting needs a default and a low gate curve")
        if (default.blinding_mode, default.repetition_rate_mhz) != (low.blinding_mode, low.repetition_rate_mhz):
            raise ValueError("missing-pair: curves in a pair come from different blinding settings")
        e_always = extract_gap(default, epsilon).e_always
        e_never = extract_gap(low, epsilon).e_never
        margin = 10.0 ** (e_never / 10.0) - 2.0 * 10.0 ** (e_always / 10.0)
        out.append(
            MarginPoint(
                repetition_rate_mhz=default.repetition_rate_mhz,
                blinding_mode=default.blinding_mode,
                margin_linear=margin,
                avg_blinding_power=default.avg_blinding_power,
                positive=margin > 0,
            )
        )
    return out


@dataclass(frozen=True)
class CircuitParams:
    r_bias: float
    r_spad: float
    r_0: float
    delta_v: float

    def __post_init__(self) -> None:
        for name in ("r_bias", "r_spad", "r_0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite resistance")
        if not math.isfinite(self.delta_v):
            raise ValueError("delta_v must be finite")
        if self.r_bias / self.r_0 < 100 or self.r_spad / self.r_0 < 100:
            raise ValueError("r_bias and r_spad must each be at least 100 * r_0")


@dataclass(frozen=True)
class BiasDrop:
    delta_i: float
    delta_v_spad: float
    # delta_v / delta_v_spad; large when r_bias >> r_spad
    suppression: float


def bias_drop(params: CircuitParams) -> BiasDrop:
    """Current and SPAD voltage change when the bias supply drops by ``delta_v``."""
    total = params.r_bias + params.r_spad
    return BiasDrop(
        delta_i=params.delta_v / total,
        delta_v_spad=params.delta_v * params.r_spad / total,
        suppression=total / params.r_spad,
    )


_HEADER_KEYS = {"gate_label", "blinding_mode", "repetition_rate_mhz", "avg_blinding_power", "name"}


def parse_curve(text: str, name: str = "") -> DetectionCurve:
    meta: dict[str, str] = {}
    body = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            key = key.strip()
            if sep and key in _HEADER_KEYS:
                meta[key] = value.strip()
            continue
        body.append(line)
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    if rows and rows[0] and rows[0][0].strip() == "energy_db":
        rows = rows[1:]
    points = []
    for row in rows:
        if len(row) != 2:
            raise ValueError(f"expected 'energy_db, p_det' rows, got {row!r}")
        points.append((float(row[0]), float(row[1])))

    def opt(key):
        v = meta.get(key, "")
        return float(v) if v not in ("", "none", "None") else None

    return DetectionCurve(
        points=tuple(points),
        gate_label=meta.get("gate_label", "default"),
        blinding_mode=meta.get("blinding_mode", "pulsed"),
        repetition_rate_mhz=opt("repetition_rate_mhz"),
        avg_blinding_power=opt("avg_blinding_power"),
        name=meta.get("name", name),
    )


def read_curve(path: str | Path) -> DetectionCurve:
    path = Path(path)
    return parse_curve(path.read_text(), name=path.stem)


def sample_curves() -> list[DetectionCurve]:
    """Bundled synthetic curves shaped like the pulsed and CW blinding measurements."""
    root = resources.files("dbaleak") / "data" / "curves"
    files = sorted((p for p in root.iterdir() if p.name.endswith(".csv")), key=lambda p: p.name)
    return [parse_curve(p.read_text(), name=p.name[: -len(".csv")]) for p in files]


@dataclass(frozen=True)
class TableRow:
    setting: str
    kind: str
    voltage: float | None
    p_det: float


def load_detection_table(path: str | Path | None = None) -> list[TableRow]:
    """Geiger-mode detection probability per supply setting, converted from percent."""
    if path is None:
        text = (resources.files("dbaleak") / "data" / "detection_table.csv").read_text()
    else:
        text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        v = row["voltage"].strip()
        out.append(
            TableRow(
                setting=row["setting"].strip(),
                kind=row["kind"].strip(),
                voltage=float(v) if v else None,
                p_det=float(row["p_det_percent"]) / 100.0,
            )
        )
    return out


@dataclass(frozen=True)
class GapCheck:
    setting: str
    e_always_default: float
    e_never_low: float
    verdict: FingerprintVerdict
    avg_blinding_power: float | None = None


def _setting_key(c: DetectionCurve) -> tuple:
    return (c.blinding_mode.value, c.repetition_rate_mhz)


def _setting_name(c: DetectionCurve) -> str:
    if c.blinding_mode is BlindingMode.CW:
        return "cw"
    return f"pulsed_{c.repetition_rate_mhz:g}mhz"


def gapcheck(curves: Sequence[DetectionCurve], epsilon: float = 0.01) -> list[GapCheck]:
    """Pair default/high-gate curves with low-gate curves per blinding setting and test each."""
    groups: dict[tuple, dict[str, DetectionCurve]] = {}
    for c in curves:
        slot = "low" if c.gate_label is GateLabel.LOW else "reference"
        groups.setdefault(_setting_key(c), {})
        if slot in groups[_setting_key(c)]:
            raise ValueError(f"duplicate {slot} curve for setting {_setting_name(c)}")
        groups[_setting_key(c)][slot] = c
    out = []
    for key in sorted(groups, key=lambda k: (k[0], k[1] if k[1] is not None else -1.0)):
        g = groups[key]
        if "reference" not in g or "low" not in g:
            missing = "low" if "low" not in g else "default/high"
            raise ValueError(f"missing-pair: no {missing} gate curve for setting {key}")
        ref, low = g["reference"], g["low"]
        e_always = extract_gap(ref, epsilon).e_always
        e_never = extract_gap(low, epsilon).e_never
        out.append(
            GapCheck(
                setting=_setting_name(ref),
                e_always_default=e_always,
                e_never_low=e_never,
                verdict=fingerprint_condition(e_always, e_never),
                avg_blinding_power=ref.avg_blinding_power,
            )
        )
    return out
