"""Closed-form gains for honest operation and for the intercepting adversary.

Every gain that depends on Bob's gate choice is a mixture of a high-gate and a
low-gate branch weighted by ``alpha``. The per-branch sums are exposed through
:func:`branch_gains` so callers can re-mix them at a different ``alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import (
    ChannelConfig,
    DecoyProtocol,
    DetectorConfig,
    ReceiverMode,
    SessionCounts,
)

__all__ = [
    "GainSet",
    "Branch",
    "BranchGains",
    "channel_transmittance",
    "single_gain",
    "eve_gain",
    "branch_gains",
    "pass_gain",
    "double_gain",
    "qber_gain",
    "gain_set",
    "expected_counts",
]


def channel_transmittance(channel: ChannelConfig) -> float:
    return 10.0 ** (-channel.loss_exponent_per_km * channel.length_km)


def single_gain(mu, eta_eff, y0):
    """Click probability of one detector: ``1 - (1 - y0) * exp(-mu * eta_eff)``.

    Works elementwise on arrays. ``-expm1`` keeps precision when the exponent
    is tiny, which is the normal regime at long channel lengths.
    """
    x = np.multiply(mu, eta_eff)
    out = y0 - (1.0 - y0) * np.expm1(-x)
    if np.ndim(out) == 0:
        return float(out)
    return out


def eve_gain(protocol: DecoyProtocol) -> float:
    """Adversary's gain over the decoy set with a lossless channel and ideal detection."""
    mu = np.asarray(protocol.intensities, dtype=float)
    n = np.asarray(protocol.prep_probs, dtype=float)
    return float(np.sum(n * -np.expm1(-mu)))


class Branch(NamedTuple):
    """Sifted gains for one gate level (the leading 1/2 already applied)."""

    q_pass: float
    q_double: float
    qber: float
    # exact any-click probability of the two-arm detector model, see simulator
    q_any: float


class BranchGains(NamedTuple):
    high: Branch
    low: Branch

    def mix(self, alpha: float) -> Branch:
        return Branch(*(alpha * h + (1.0 - alpha) * lo for h, lo in zip(self.high, self.low)))


def _branch(protocol: DecoyProtocol, eta: float, eta_ch: float, y0: float, t: float) -> Branch:
    mu = np.asarray(protocol.intensities, dtype=float)
    n = np.asarray(protocol.prep_probs, dtype=float)
    eff = eta_ch * eta
    q_full = single_gain(mu, eff, y0)
    q_right = single_gain(mu * t, eff, y0)
    q_wrong = single_gain(mu * (1.0 - t), eff, y0)
    q_any = 1.0 - (1.0 - q_right) * (1.0 - q_wrong)
    return Branch(
        q_pass=0.5 * float(np.sum(n * q_full)),
        q_double=0.5 * float(np.sum(n * q_wrong * q_right)),
        qber=0.5 * float(np.sum(n * q_wrong)),
        q_any=0.5 * float(np.sum(n * q_any)),
    )


def branch_gains(protocol: DecoyProtocol, detectors: DetectorConfig, channel: ChannelConfig) -> BranchGains:
    eta_ch = channel_transmittance(channel)
    args = (eta_ch, detectors.dark_count, detectors.transmittance)
    return BranchGains(
        high=_branch(protocol, detectors.eta_high, *args),
        low=_branch(protocol, detectors.eta_low, *args),
    )


def pass_gain(protocol, detectors, channel, alpha: float | None = None) -> float:
    a = detectors.alpha if alpha is None else alpha
    return branch_gains(protocol, detectors, channel).mix(a).q_pass


def double_gain(protocol, detectors, channel, alpha: float | None = None) -> float:
    a = detectors.alpha if alpha is None else alpha
    return branch_gains(protocol, detectors, channel).mix(a).q_double


def qber_gain(protocol, detectors, channel, alpha: float | None = None) -> float:
    a = detectors.alpha if alpha is None else alpha
    return branch_gains(protocol, detectors, channel).mix(a).qber


@dataclass(frozen=True)
class GainSet:
    q_eve: float
    q_pass: float
    q_double: float
    qber: float
    eta_ch: float

    def __post_init__(self) -> None:
        for name in ("q_eve", "q_pass", "q_double", "qber", "eta_ch"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if self.q_double > self.q_pass:
            raise ValueError("q_double <= q_pass required")


def gain_set(protocol, detectors, channel, alpha: float | None = None) -> GainSet:
    a = detectors.alpha if alpha is None else alpha
    mixed = branch_gains(protocol, detectors, channel).mix(a)
    return GainSet(
        q_eve=eve_gain(protocol),
        q_pass=mixed.q_pass,
        q_double=mixed.q_double,
        qber=mixed.qber,
        eta_ch=channel_transmittance(channel),
    )


def expected_counts(
    protocol: DecoyProtocol,
    detectors: DetectorConfig,
    channel: ChannelConfig,
    n_alice: float,
    receiver_mode: ReceiverMode | str = ReceiverMode.TWO_SPAD,
    alpha: float | None = None,
) -> SessionCounts:
    """Expected session tallies when the channel behaves honestly.

    ``n_sent`` is the adversary's maximum number of fake states,
    ``n_alice * q_eve``. A single-detector receiver registers half of the
    clicks and has no double clicks. Error counts follow the wrong-arm gain
    for both receivers.
    """
    if not n_alice > 0:
        raise ValueError(f"n_alice must be > 0, got {n_alice!r}")
    mode = ReceiverMode(receiver_mode)
    g = gain_set(protocol, detectors, channel, alpha)
    if mode is ReceiverMode.TWO_SPAD:
        return SessionCounts(
            n_alice=n_alice,
            n_sent=g.q_eve * n_alice,
            n_clicked=g.q_pass * n_alice,
            n_double=g.q_double * n_alice,
            n_error=g.qber * n_alice,
            expected=True,
        )
    return SessionCounts(
        n_alice=n_alice,
        n_sent=g.q_eve * n_alice,
        n_clicked=0.5 * g.q_pass * n_alice,
        n_double=0.0,
        n_error=g.qber * n_alice,
        expected=True,
    )
