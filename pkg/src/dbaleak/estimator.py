"""Secret-key leakage estimation from observed session tallies.

The estimators only see :class:`~dbaleak.model.SessionCounts`; they never look
at simulator ground truth. Legitimate users cannot tell imposed clicks from
genuine ones, so every fingerprint (double click or error click) is charged
to the adversary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple, Sequence

from . import gains
from .attack import infer_beta
from .model import (
    ChannelConfig,
    DecoyProtocol,
    DetectorConfig,
    LeakageEstimate,
    ReceiverMode,
    SessionCounts,
)

__all__ = [
    "KeyBits",
    "AlphaChoice",
    "CurvePoint",
    "eve_clicked_2spad",
    "key_bits_2spad",
    "optimal_alpha",
    "key_bits_optimal_2spad",
    "eve_success_1spad",
    "key_bits_1spad",
    "eve_bits_1spad_optimal",
    "estimate",
    "self_consistent_alpha",
    "secure_fraction_curve",
]


class KeyBits(NamedTuple):
    """Unattacked-bit count, clamped at zero. ``raw`` keeps the unclamped value."""

    value: float
    raw: float
    flags: tuple[str, ...]


class AlphaChoice(NamedTuple):
    alpha: float
    raw: float
    flags: tuple[str, ...]


def _clamped(raw: float) -> KeyBits:
    if raw < 0:
        return KeyBits(0.0, raw, ("clamped",))
    return KeyBits(raw, raw, ())


def _require_alpha(alpha: float) -> None:
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha!r}")


def eve_clicked_2spad(alpha: float, n_sent: float, n_double: float) -> float:
    """Clicks attributed to the adversary: successes plus all double clicks."""
    _require_alpha(alpha)
    return 0.5 * (alpha * n_sent + 4.0 * n_double / alpha)


def key_bits_2spad(counts: SessionCounts, alpha: float) -> KeyBits:
    return _clamped(counts.n_clicked - eve_clicked_2spad(alpha, counts.n_sent, counts.n_double))


def optimal_alpha(
    mode: ReceiverMode | str,
    fingerprint_count: float,
    n_alice: float,
    q_eve: float,
) -> AlphaChoice:
    """High-gate probability minimising the adversary's share for fixed fingerprints.

    ``fingerprint_count`` is the double-click count for two detectors and the
    error count for one. Values above 1 are clamped with ``alpha-clamped``. With
    no fingerprints the optimum sits at the excluded point 0; a floor of
    ``1/(n_alice*q_eve)`` (half a bit of charged leakage) is returned instead,
    flagged ``alpha-floor``.
    """
    mode = ReceiverMode(mode)
    if not q_eve > 0:
        raise ValueError(f"q_eve must be > 0, got {q_eve!r}")
    if not n_alice > 0:
        raise ValueError(f"n_alice must be > 0, got {n_alice!r}")
    if fingerprint_count < 0:
        raise ValueError(f"fingerprint_count must be >= 0, got {fingerprint_count!r}")
    n_max = n_alice * q_eve
    factor = 1.0 if mode is ReceiverMode.TWO_SPAD else 2.0
    raw = 2.0 * math.sqrt(factor * fingerprint_count / n_max)
    if raw > 1.0:
        return AlphaChoice(1.0, raw, ("alpha-clamped",))
    if raw == 0.0:
        return AlphaChoice(min(1.0, 1.0 / n_max), raw, ("alpha-floor",))
    return AlphaChoice(raw, raw, ())


def key_bits_optimal_2spad(counts: SessionCounts, n_alice: float | None, q_eve: float) -> KeyBits:
    n_alice = counts.n_alice if n_alice is None else n_alice
    optimal_alpha(ReceiverMode.TWO_SPAD, counts.n_double, n_alice, q_eve)
    return _clamped(counts.n_clicked - 2.0 * math.sqrt(counts.n_double * n_alice * q_eve))


def eve_success_1spad(alpha: float, n_sent: float, n_error: float) -> float:
    _require_alpha(alpha)
    return alpha * n_sent / 4.0 + 2.0 * n_error / alpha


def key_bits_1spad(counts: SessionCounts, alpha: float) -> KeyBits:
    _require_alpha(alpha)
    raw = (
        counts.n_clicked
        - alpha * counts.n_sent / 4.0
        - 2.0 * counts.n_error * (1.0 + alpha) / alpha
    )
    return _clamped(raw)


def eve_bits_1spad_optimal(counts: SessionCounts, n_alice: float | None, q_eve: float) -> float:
    n_alice = counts.n_alice if n_alice is None else n_alice
    optimal_alpha(ReceiverMode.ONE_SPAD, counts.n_error, n_alice, q_eve)
    return math.sqrt(2.0 * counts.n_error * n_alice * q_eve) + 2.0 * counts.n_error


def estimate(
    mode: ReceiverMode | str,
    counts: SessionCounts,
    q_eve: float,
    alpha: float | None = None,
) -> LeakageEstimate:
    """Full leakage estimate for one session.

    With ``alpha=None`` the gate probability is the closed-form optimum for the
    observed fingerprints, and the optimal-alpha expression for the key is
    used. With an explicit ``alpha``, or when the optimum is clamped or
    floored, the key is evaluated at that alpha directly.
    """
    mode = ReceiverMode(mode)
    two = mode is ReceiverMode.TWO_SPAD
    fingerprints = counts.n_double if two else counts.n_error
    flags: list[str] = []

    use_closed_form = False
    if alpha is None:
        choice = optimal_alpha(mode, fingerprints, counts.n_alice, q_eve)
        alpha = choice.alpha
        flags.extend(choice.flags)
        # the closed form holds only at an interior optimum
        use_closed_form = not choice.flags
    else:
        _require_alpha(alpha)
        if alpha > 1:
            raise ValueError(f"alpha must be <= 1, got {alpha!r}")

    if two:
        if use_closed_form:
            kb = key_bits_optimal_2spad(counts, counts.n_alice, q_eve)
        else:
            kb = key_bits_2spad(counts, alpha)
    else:
        if use_closed_form:
            raw = counts.n_clicked - eve_bits_1spad_optimal(counts, counts.n_alice, q_eve)
            kb = _clamped(raw)
        else:
            kb = key_bits_1spad(counts, alpha)
    flags.extend(kb.flags)
    eve_clicked = counts.n_clicked - kb.raw

    if counts.n_sent > 0:
        beta = infer_beta(mode, counts, alpha)
        beta_hat, beta_sigma = beta.beta, beta.sigma
        flags.extend(beta.flags)
    else:
        beta_hat, beta_sigma = 0.0, 0.0
        flags.append("no-fake-states")

    # linear propagation of the fingerprint-count spread into the key count
    if two:
        key_sigma = 0.5 * alpha * counts.n_sent * beta_sigma
    else:
        key_sigma = 2.0 * (1.0 + alpha) / alpha * (alpha * counts.n_sent * beta_sigma / 8.0)

    if counts.n_clicked > 0:
        fraction = min(1.0, kb.value / counts.n_clicked)
    else:
        fraction = 0.0
        flags.append("no-clicks")

    return LeakageEstimate(
        mode=mode,
        eve_clicked=eve_clicked,
        key_bits=kb.value,
        secure_fraction=fraction,
        alpha_opt=alpha,
        beta_hat=beta_hat,
        beta_sigma=beta_sigma,
        key_bits_sigma=key_sigma,
        flags=tuple(dict.fromkeys(flags)),
    )


def self_consistent_alpha(
    mode: ReceiverMode | str,
    protocol: DecoyProtocol,
    detectors: DetectorConfig,
    channel: ChannelConfig,
) -> AlphaChoice:
    """Optimal alpha when the fingerprint rate itself depends on alpha.

    The adversary mimics the honest fingerprint gain, which is linear in alpha:
    ``f(a) = a*f_high + (1-a)*f_low``. Substituting into the closed-form
    optimum gives a quadratic in alpha whose positive root is returned.
    """
    mode = ReceiverMode(mode)
    bg = gains.branch_gains(protocol, detectors, channel)
    q_eve = gains.eve_gain(protocol)
    if not q_eve > 0:
        raise ValueError("protocol has zero adversary gain")
    if mode is ReceiverMode.TWO_SPAD:
        f_high, f_low, k = bg.high.q_double, bg.low.q_double, 1.0
    else:
        f_high, f_low, k = bg.high.qber, bg.low.qber, 2.0
    # a^2 q_eve / (4k) - (f_high - f_low) a - f_low = 0
    d = f_high - f_low
    a2 = q_eve / (4.0 * k)
    raw = (d + math.sqrt(d * d + 4.0 * a2 * f_low)) / (2.0 * a2)
    if raw > 1.0:
        return AlphaChoice(1.0, raw, ("alpha-clamped",))
    if raw <= 0.0:
        # no fingerprints at any alpha; callers pick a floor for their session size
        return AlphaChoice(0.0, 0.0, ("alpha-floor",))
    return AlphaChoice(raw, raw, ())


@dataclass(frozen=True)
class CurvePoint:
    length_km: float
    sweep_value: float
    secure_fraction: float
    alpha_opt: float
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not (0.0 <= self.secure_fraction <= 1.0):
            raise ValueError(f"secure_fraction must lie in [0, 1], got {self.secure_fraction!r}")


SWEEP_PARAMS = ("eta_low", "transmittance")


def default_sweep_param(mode: ReceiverMode | str) -> str:
    return "eta_low" if ReceiverMode(mode) is ReceiverMode.TWO_SPAD else "transmittance"


def curve_point(
    mode: ReceiverMode | str,
    protocol: DecoyProtocol,
    detectors: DetectorConfig,
    channel: ChannelConfig,
    n_alice: float = 1e9,
) -> tuple[CurvePoint, SessionCounts]:
    """One point of the secure-fraction curve together with the counts behind it.

    The adversary reproduces the honest click, double-click and error gains at
    Bob's chosen alpha, so the observed counts equal honest expectations.
    """
    mode = ReceiverMode(mode)
    choice = self_consistent_alpha(mode, protocol, detectors, channel)
    q_eve = gains.eve_gain(protocol)
    if "alpha-floor" in choice.flags:
        alpha = min(1.0, 1.0 / (n_alice * q_eve))
    else:
        alpha = choice.alpha
    counts = gains.expected_counts(protocol, detectors, channel, n_alice, mode, alpha=alpha)
    est = estimate(mode, counts, q_eve)
    flags = tuple(f for f in est.flags if f != "beta-exceeds-one")
    point = CurvePoint(
        length_km=channel.length_km,
        sweep_value=float("nan"),
        secure_fraction=est.secure_fraction,
        alpha_opt=est.alpha_opt,
        flags=flags,
    )
    return point, counts


def secure_fraction_curve(
    protocol: DecoyProtocol,
    detectors: DetectorConfig,
    channel: ChannelConfig,
    mode: ReceiverMode | str,
    sweep: Sequence[float],
    lengths_km: Iterable[float],
    sweep_param: str | None = None,
    n_alice: float = 1e9,
) -> list[CurvePoint]:
    """Secure bit fraction over channel lengths for each swept detector setting.

    ``sweep_param`` selects which detector field the sweep values replace:
    ``eta_low`` (default for two detectors) or ``transmittance`` (default for
    one detector). ``channel`` supplies the loss coefficient; its length is
    replaced by each entry of ``lengths_km``.
    """
    mode = ReceiverMode(mode)
    param = sweep_param or default_sweep_param(mode)
    if param not in SWEEP_PARAMS:
        raise ValueError(f"sweep_param must be one of {SWEEP_PARAMS}, got {param!r}")
    lengths = list(lengths_km)
    if not sweep or not lengths:
        raise ValueError("sweep values and lengths must be nonempty")
    points = []
    for value in sweep:
        det = replace(detectors, **{param: float(value)})
        for length in lengths:
            ch = replace(channel, length_km=float(length))
            point, _ = curve_point(mode, protocol, det, ch, n_alice)
            points.append(replace(point, sweep_value=float(value)))
    return points
