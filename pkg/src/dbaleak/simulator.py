"""Per-pulse Monte Carlo of honest and attacked sessions.

Pulses are processed in fixed-size batches. Batch ``i`` draws from its own
counter-based Philox stream keyed by ``(seed, i)``, so a run gives the same
tallies whether batches execute serially or on a thread pool. Tallies merge by
integer summation.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from . import gains
from .attack import imposition_stats_1spad, imposition_stats_2spad, rule_array
from .model import (
    ChannelConfig,
    DecoyProtocol,
    DetectorConfig,
    EveStrategy,
    ReceiverMode,
    SessionCounts,
)

__all__ = [
    "SimConfig",
    "AttackTally",
    "simulate_honest",
    "simulate_attack",
    "honest_expectations",
    "attack_expectations",
    "ZRow",
    "ValidationReport",
    "validate_against_analytics",
    "check_honest",
    "check_attack",
    "validation_suite",
]

DEFAULT_BATCH = 1 << 20
_RULES = rule_array()


@dataclass(frozen=True)
class SimConfig:
    protocol: DecoyProtocol = field(default_factory=DecoyProtocol)
    detectors: DetectorConfig = field(default_factory=DetectorConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    eve: EveStrategy = field(default_factory=EveStrategy)
    n_pulses: int = 1_000_000
    seed: int = 0
    receiver_mode: ReceiverMode = ReceiverMode.TWO_SPAD
    batch_size: int = DEFAULT_BATCH
    workers: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "receiver_mode", ReceiverMode(self.receiver_mode))
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise ValueError(f"n_pulses must be a positive integer, got {self.n_pulses!r}")
        object.__setattr__(self, "n_pulses", int(self.n_pulses))
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class AttackTally:
    """Observed counts plus ground truth only the simulator knows.

    ``n_success`` counts clicks whose registered bit is the one the adversary
    encoded (a whole-pulse click; for one detector also a split-pulse click
    that happens to land on that bit). ``n_imposed`` counts every slot in
    which the adversary's pulse made Bob click, before sifting.
    """

    counts: SessionCounts
    n_success: int
    n_imposed: int
    n_split_clicks: int


def _rng(seed: int, batch: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(batch,))))


def _run_batches(config: SimConfig, fn: Callable[[int, np.random.Generator], np.ndarray]) -> np.ndarray:
    n, b = config.n_pulses, config.batch_size
    sizes = [min(b, n - start) for start in range(0, n, b)]
    jobs = [(i, m) for i, m in enumerate(sizes)]
    workers = config.workers or min(len(jobs), os.cpu_count() or 1)
    if workers <= 1:
        parts = [fn(m, _rng(config.seed, i)) for i, m in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(job[1], _rng(config.seed, job[0])), jobs))
    return np.sum(parts, axis=0, dtype=np.int64)


def _decoy_class(protocol: DecoyProtocol, m: int, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(protocol.prep_probs)
    idx = np.searchsorted(cum, rng.random(m), side="right")
    return np.minimum(idx, len(cum) - 1)


def _bit(bits: np.ndarray, k: int) -> np.ndarray:
    return (bits >> k) & 1 == 1


def simulate_honest(config: SimConfig) -> SessionCounts:
    """Honest session: no adversary, Bob's tallies after sifting.

    Two detectors: each sifted slot draws the correct arm with intensity
    ``mu*T`` and the wrong arm with ``mu*(1-T)`` independently. Clicks count
    slots where either arm fired, doubles where both fired, errors where the
    wrong arm fired. One detector: Bob watches one output chosen at random,
    so he sees the correct arm half of the time.
    """
    if config.eve.active:
        raise ValueError("simulate_honest requires an inactive adversary")
    det = config.detectors
    mu = np.asarray(config.protocol.intensities, dtype=float)
    eta = np.array([det.eta_low, det.eta_high]) * gains.channel_transmittance(config.channel)
    t = det.transmittance
    # [class, gate_high]
    p_right = gains.single_gain(mu[:, None] * t, eta[None, :], det.dark_count)
    p_wrong = gains.single_gain(mu[:, None] * (1.0 - t), eta[None, :], det.dark_count)
    one = config.receiver_mode is ReceiverMode.ONE_SPAD

    def batch(m: int, rng: np.random.Generator) -> np.ndarray:
        cls = _decoy_class(config.protocol, m, rng)
        gate = (rng.random(m) < det.alpha).astype(np.intp)
        bits = rng.integers(0, 256, size=m, dtype=np.uint8)
        sifted = _bit(bits, 0)
        right = rng.random(m) < p_right[cls, gate]
        wrong = rng.random(m) < p_wrong[cls, gate]
        if one:
            on_right_port = _bit(bits, 1)
            click = sifted & np.where(on_right_port, right, wrong)
            error = sifted & ~on_right_port & wrong
            double = np.zeros(1, dtype=bool)
        else:
            click = sifted & (right | wrong)
            double = sifted & right & wrong
            error = sifted & wrong
        return np.array([click.sum(), double.sum(), error.sum()], dtype=np.int64)

    clicked, double, error = _run_batches(config, batch)
    return SessionCounts(
        n_alice=config.n_pulses,
        n_sent=0,
        n_clicked=int(clicked),
        n_double=int(double),
        n_error=int(error),
    )


def simulate_attack(config: SimConfig) -> AttackTally:
    """Session under the pulsed blinding fake-state attack.

    The adversary detects each of Alice's pulses with the lossless-channel
    probability ``1 - exp(-mu)`` and resends a fake state for every detection,
    in her own random basis. Bob's gate, her pulse class and the two bases
    are drawn per pulse; the click table decides each arm. A whole pulse
    lands on the arm of her bit; a split pulse lands on both arms.
    """
    if not config.eve.active:
        raise ValueError("simulate_attack requires an active adversary")
    det, eve = config.detectors, config.eve
    mu = np.asarray(config.protocol.intensities, dtype=float)
    p_detect = -np.expm1(-mu) * eve.detection_eff
    one = config.receiver_mode is ReceiverMode.ONE_SPAD

    def batch(m: int, rng: np.random.Generator) -> np.ndarray:
        cls = _decoy_class(config.protocol, m, rng)
        k = int(np.count_nonzero(rng.random(m) < p_detect[cls]))
        gate = rng.random(k) < det.alpha
        energy = rng.random(k) < eve.beta
        bits = rng.integers(0, 256, size=k, dtype=np.uint8)
        basis_a, basis_e, basis_b = _bit(bits, 0), _bit(bits, 1), _bit(bits, 2)
        bit_a, bit_rand, bit_y = _bit(bits, 3), _bit(bits, 4), _bit(bits, 5)
        matched = basis_e == basis_b
        sifted = basis_a == basis_b
        bit_e = np.where(basis_e == basis_a, bit_a, bit_rand)
        fire = _RULES[gate.view(np.uint8), energy.view(np.uint8), matched.view(np.uint8)] == 1
        if one:
            # Bob's single detector watches the port of bit_y in his basis
            click = np.where(matched, fire & (bit_e == bit_y), fire)
            success = click & (bit_y == bit_e)
            split = click & ~matched
            n_double = 0
            wrong = bit_y != bit_a
        else:
            click = fire
            success = fire & matched
            split = fire & ~matched
            n_double = int(np.count_nonzero(sifted & split))
            # a split pulse fires the wrong arm too
            wrong = (bit_e != bit_a) | split
        clicked_sifted = sifted & click
        n_error = int(np.count_nonzero(clicked_sifted & wrong))
        return np.array(
            [
                k,
                np.count_nonzero(clicked_sifted),
                n_double,
                n_error,
                np.count_nonzero(success),
                np.count_nonzero(click),
                np.count_nonzero(split),
            ],
            dtype=np.int64,
        )

    sent, clicked, double, error, success, imposed, split = (int(x) for x in _run_batches(config, batch))
    counts = SessionCounts(
        n_alice=config.n_pulses,
        n_sent=sent,
        n_clicked=clicked,
        n_double=double,
        n_error=error,
    )
    return AttackTally(counts=counts, n_success=success, n_imposed=imposed, n_split_clicks=split)


def honest_expectations(config: SimConfig) -> dict[str, tuple[float, float]]:
    """Per-pulse ``(closed_form, exact_model)`` probabilities of each honest tally.

    The closed-form click gain uses the full intensity ``mu`` in one
    exponential, while the two-arm model lets each arm add its own dark
    count; the difference is of order ``Y0`` and becomes validation slack.
    For one detector the closed-form error gain counts wrong-arm clicks on
    both outputs, the simulated receiver sees half of them.
    """
    det = config.detectors
    mixed = gains.branch_gains(config.protocol, det, config.channel).mix(det.alpha)
    if config.receiver_mode is ReceiverMode.TWO_SPAD:
        return {
            "n_clicked": (mixed.q_pass, mixed.q_any),
            "n_double": (mixed.q_double, mixed.q_double),
            "n_error": (mixed.qber, mixed.qber),
        }
    return {
        "n_clicked": (0.5 * mixed.q_pass, 0.5 * (mixed.q_any + mixed.q_double)),
        "n_error": (0.5 * mixed.qber, 0.5 * mixed.qber),
    }


def attack_expectations(config: SimConfig) -> dict[str, float]:
    """Per-fake-state probabilities from the closed forms (``n_sent`` is per Alice pulse)."""
    a, b = config.detectors.alpha, config.eve.beta
    q_eve = gains.eve_gain(config.protocol)
    if config.receiver_mode is ReceiverMode.TWO_SPAD:
        p_double, p_success = imposition_stats_2spad(a, b)
        return {
            "n_sent": q_eve,
            # half of the fingerprints survive sifting
            "n_double": p_double / 2.0,
            "n_success": p_success,
            "n_imposed": p_success + p_double,
        }
    p_error, p_success = imposition_stats_1spad(a, b)
    return {
        "n_sent": q_eve,
        "n_error": p_error / 2.0,
        "n_success": p_success,
    }


@dataclass(frozen=True)
class ZRow:
    tally: str
    n: int
    observed: float
    expected: float
    sigma: float
    slack: float
    z: float
    flagged: bool

    def line(self) -> str:
        status = "FLAG" if self.flagged else "ok"
        return (
            f"{self.tally:<14} n={self.n:d} observed={self.observed:.0f} "
            f"expected={self.expected:.4f} sigma={self.sigma:.4f} "
            f"slack={self.slack:.4f} z={self.z:+.4f} {status}"
        )


@dataclass(frozen=True)
class ValidationReport:
    label: str
    rows: tuple[ZRow, ...]
    threshold: float = 4.0

    @property
    def passed(self) -> bool:
        return not any(r.flagged for r in self.rows)

    def to_text(self) -> str:
        head = f"[{'PASS' if self.passed else 'FAIL'}] {self.label}"
        return "\n".join([head] + ["  " + r.line() for r in self.rows])

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "passed": self.passed,
            "threshold": self.threshold,
            "rows": [r.__dict__.copy() for r in self.rows],
        }


def validate_against_analytics(
    observed: Mapping[str, float],
    expected: Mapping[str, float],
    n_trials: int | Mapping[str, int],
    slack: Mapping[str, float] | None = None,
    threshold: float = 4.0,
    label: str = "",
) -> ValidationReport:
    """Binomial z-scores of observed tallies against per-trial probabilities.

    A tally is flagged when ``|observed - n*p|`` exceeds ``threshold`` binomial
    standard deviations plus ``slack*n`` (a known model discrepancy in
    probability units).
    """
    rows = []
    for name, p in expected.items():
        n = int(n_trials[name] if isinstance(n_trials, Mapping) else n_trials)
        obs = float(observed[name])
        mean = n * p
        sigma = math.sqrt(max(n * p * (1.0 - p), 0.0))
        s = (slack or {}).get(name, 0.0) * n
        dev = obs - mean
        if sigma > 0:
            z = dev / sigma
        else:
            z = 0.0 if dev == 0 else math.copysign(math.inf, dev)
        flagged = abs(dev) > threshold * sigma + s
        rows.append(ZRow(name, n, obs, mean, sigma, s, z, flagged))
    return ValidationReport(label=label, rows=tuple(rows), threshold=threshold)


def check_honest(config: SimConfig, threshold: float = 4.0) -> ValidationReport:
    """Simulate an honest session and compare it with the closed-form gains."""
    counts = simulate_honest(config)
    exp = honest_expectations(config)
    probs = {k: v[0] for k, v in exp.items()}
    slack = {k: abs(v[1] - v[0]) for k, v in exp.items()}
    observed = {k: getattr(counts, k) for k in exp}
    label = (
        f"honest {config.receiver_mode.value} L={config.channel.length_km:g}km "
        f"alpha={config.detectors.alpha:g} seed={config.seed}"
    )
    return validate_against_analytics(observed, probs, config.n_pulses, slack, threshold, label)


def check_attack(config: SimConfig, threshold: float = 4.0) -> ValidationReport:
    """Simulate an attacked session and compare frequencies with the closed forms."""
    tally = simulate_attack(config)
    exp = attack_expectations(config)
    observed = {
        "n_sent": tally.counts.n_sent,
        "n_double": tally.counts.n_double,
        "n_error": tally.counts.n_error,
        "n_success": tally.n_success,
        "n_imposed": tally.n_imposed,
    }
    trials = {k: (config.n_pulses if k == "n_sent" else tally.counts.n_sent) for k in exp}
    label = (
        f"attack {config.receiver_mode.value} alpha={config.detectors.alpha:g} "
        f"beta={config.eve.beta:g} seed={config.seed}"
    )
    return validate_against_analytics({k: observed[k] for k in exp}, exp, trials, None, threshold, label)


GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


def validation_suite(
    base: SimConfig,
    lengths_km=(0.0, 50.0, 100.0),
    grid=GRID,
    honest_pulses: int | None = None,
    attack_pulses: int | None = None,
) -> list[ValidationReport]:
    """Every analytic-vs-simulation check for both receivers.

    Each sub-run gets its own seed derived from ``base.seed``.
    """
    honest_pulses = honest_pulses or base.n_pulses
    attack_pulses = attack_pulses or base.n_pulses
    modes = (ReceiverMode.TWO_SPAD, ReceiverMode.ONE_SPAD)
    n_runs = len(modes) * (len(lengths_km) + len(grid) ** 2)
    seeds = iter(int(s) for s in np.random.SeedSequence(base.seed).generate_state(n_runs, dtype=np.uint64))
    reports = []
    quiet = replace(base.eve, active=False)
    loud = replace(base.eve, active=True)
    for mode in modes:
        for length in lengths_km:
            cfg = replace(
                base,
                eve=quiet,
                channel=replace(base.channel, length_km=float(length)),
                receiver_mode=mode,
                n_pulses=honest_pulses,
                seed=next(seeds),
            )
            reports.append(check_honest(cfg))
        for a in grid:
            for b in grid:
                cfg = replace(
                    base,
                    eve=replace(loud, beta=b),
                    detectors=replace(base.detectors, alpha=a),
                    receiver_mode=mode,
                    n_pulses=attack_pulses,
                    seed=next(seeds),
                )
                reports.append(check_attack(cfg))
    return reports
