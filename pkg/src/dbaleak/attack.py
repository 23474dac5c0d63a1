"""Click imposition under randomized gate voltages.

The adversary guesses Bob's gate level by choosing between two trigger pulse
energies. A high-energy pulse fires a detector under either gate when it
arrives whole, and fires both detectors under the high gate when it is split
by a basis mismatch. A low-energy pulse fires only a high-gated detector and
only when it arrives whole. Those eight outcomes make up :data:`CLICK_RULES`.
"""
from __future__ import annotations

import enum
import itertools
import math
from typing import NamedTuple

import numpy as np

from .model import ReceiverMode, SessionCounts

__all__ = [
    "GateLevel",
    "PulseClass",
    "BasisMatch",
    "CLICK_RULES",
    "click_outcome",
    "rule_array",
    "imposition_stats_2spad",
    "imposition_stats_1spad",
    "imposition_from_table_2spad",
    "imposition_from_table_1spad",
    "BetaEstimate",
    "infer_beta",
]


class GateLevel(str, enum.Enum):
    HIGH = "high"
    LOW = "low"


class PulseClass(str, enum.Enum):
    HIGH_ENERGY = "high_energy"
    LOW_ENERGY = "low_energy"


class BasisMatch(str, enum.Enum):
    MATCHED = "matched"
    MISMATCHED = "mismatched"


_G, _P, _B = GateLevel, PulseClass, BasisMatch

CLICK_RULES: dict[tuple[GateLevel, PulseClass, BasisMatch], int] = {
    (_G.HIGH, _P.HIGH_ENERGY, _B.MATCHED): 1,
    (_G.LOW, _P.HIGH_ENERGY, _B.MATCHED): 1,
    (_G.HIGH, _P.HIGH_ENERGY, _B.MISMATCHED): 1,
    (_G.HIGH, _P.LOW_ENERGY, _B.MATCHED): 1,
    (_G.LOW, _P.HIGH_ENERGY, _B.MISMATCHED): 0,
    (_G.LOW, _P.LOW_ENERGY, _B.MATCHED): 0,
    (_G.HIGH, _P.LOW_ENERGY, _B.MISMATCHED): 0,
    (_G.LOW, _P.LOW_ENERGY, _B.MISMATCHED): 0,
}


def click_outcome(gate_level, pulse_class, basis_match) -> int:
    """Click probability (0 or 1) of one detector arm for a fake-state pulse."""
    key = (GateLevel(gate_level), PulseClass(pulse_class), BasisMatch(basis_match))
    return CLICK_RULES[key]


def rule_array() -> np.ndarray:
    """The click table as a uint8 array indexed ``[gate_high, energy_high, matched]``."""
    arr = np.zeros((2, 2, 2), dtype=np.uint8)
    for (g, p, b), v in CLICK_RULES.items():
        arr[int(g is _G.HIGH), int(p is _P.HIGH_ENERGY), int(b is _B.MATCHED)] = v
    return arr


def _check_unit(name: str, x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {x!r}")


def imposition_stats_2spad(alpha: float, beta: float) -> tuple[float, float]:
    """Return ``(P_double, P_success)`` per fake state for a two-detector receiver."""
    _check_unit("alpha", alpha)
    _check_unit("beta", beta)
    return alpha * beta / 2.0, (alpha + beta - alpha * beta) / 2.0


def imposition_stats_1spad(alpha: float, beta: float) -> tuple[float, float]:
    """Return ``(P_error, P_success)`` per fake state for a single-detector receiver."""
    _check_unit("alpha", alpha)
    _check_unit("beta", beta)
    return alpha * beta / 4.0, (alpha + beta) / 4.0


def _weights(alpha: float, beta: float):
    gate_w = {_G.HIGH: alpha, _G.LOW: 1.0 - alpha}
    pulse_w = {_P.HIGH_ENERGY: beta, _P.LOW_ENERGY: 1.0 - beta}
    for g, p in itertools.product(_G, _P):
        yield g, p, gate_w[g] * pulse_w[p]


def imposition_from_table_2spad(alpha: float, beta: float) -> tuple[float, float]:
    """Sum the conditional click table term by term, without the closed forms.

    A split pulse gives a double click only when both identical arms fire,
    hence the squared half-pulse term; a success is a whole-pulse click or a
    lone split-pulse click.
    """
    p_double = 0.0
    p_success = 0.0
    for g, p, w in _weights(alpha, beta):
        full = CLICK_RULES[g, p, _B.MATCHED]
        half = CLICK_RULES[g, p, _B.MISMATCHED]
        p_double += w * half * half
        p_success += w * (full + half - half * half)
    return 0.5 * p_double, 0.5 * p_success


def imposition_from_table_1spad(alpha: float, beta: float) -> tuple[float, float]:
    p_error = 0.0
    p_success = 0.0
    for g, p, w in _weights(alpha, beta):
        full = CLICK_RULES[g, p, _B.MATCHED]
        half = CLICK_RULES[g, p, _B.MISMATCHED]
        p_error += w * half
        p_success += w * (full + half)
    return 0.25 * p_error, 0.25 * p_success


class BetaEstimate(NamedTuple):
    beta: float
    sigma: float
    flags: tuple[str, ...]


def infer_beta(mode: ReceiverMode | str, counts: SessionCounts, alpha: float) -> BetaEstimate:
    """Estimate the high-energy pulse fraction from the observed fingerprints.

    Only half of the fingerprints survive sifting, so the observed fraction
    per fake state is ``alpha*beta/4`` (double clicks) or ``alpha*beta/8``
    (errors). ``sigma`` is the Gaussian approximation of the binomial spread
    of the fingerprint count, which scales as ``1/sqrt(n_sent)``.
    """
    mode = ReceiverMode(mode)
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha!r}")
    if not counts.n_sent > 0:
        raise ValueError("n_sent must be > 0 to infer beta")
    if mode is ReceiverMode.TWO_SPAD:
        scale, fingerprints = 4.0, counts.n_double
    else:
        scale, fingerprints = 8.0, counts.n_error
    p_hat = fingerprints / counts.n_sent
    beta = scale * p_hat / alpha
    sigma = scale * math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / counts.n_sent) / alpha
    flags = ("beta-exceeds-one",) if beta > 1.0 else ()
    return BetaEstimate(beta, sigma, flags)
