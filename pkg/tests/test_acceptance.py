"""Acceptance criteria 1-9, one pass/fail line each.

Run with pytest (lines appear in the terminal summary) or directly:
``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Callable, NamedTuple

import mpmath as mp
import numpy as np
import pytest

from dbaleak import cli
from dbaleak.attack import imposition_stats_1spad, imposition_stats_2spad, infer_beta
from dbaleak.estimator import (
    eve_bits_1spad_optimal,
    eve_clicked_2spad,
    key_bits_1spad,
    key_bits_2spad,
    key_bits_optimal_2spad,
    optimal_alpha,
    secure_fraction_curve,
)
from dbaleak.gains import double_gain, eve_gain, pass_gain, qber_gain
from dbaleak.model import ChannelConfig, DecoyProtocol, DetectorConfig, EveStrategy, SessionCounts
from dbaleak.simulator import SimConfig, simulate_attack, simulate_honest
from dbaleak.spadcheck import gapcheck, sample_curves

PROTO = DecoyProtocol()
DET = DetectorConfig()
GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
Z = 4.0


class Outcome(NamedTuple):
    passed: bool
    detail: str


def outcome(passed, detail: str) -> Outcome:
    return Outcome(bool(passed), detail)


CRITERIA: dict[int, tuple[str, Callable[[], Outcome]]] = {}


def criterion(number: int, title: str):
    def deco(fn):
        CRITERIA[number] = (title, fn)
        return fn

    return deco


def zscore(obs: float, n: int, p: float) -> float:
    sd = math.sqrt(n * p * (1 - p))
    return (obs - n * p) / sd if sd > 0 else (0.0 if obs == n * p else math.inf)


def seeds(root: int, k: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(root).generate_state(k, np.uint64)]


@criterion(1, "attack simulation matches imposition statistics on the 9x9 grid")
def oracle_equivalence() -> Outcome:
    worst = 0.0
    where = ""
    sub = iter(seeds(101, 2 * len(GRID) ** 2))
    for mode in ("two_spad", "one_spad"):
        for a in GRID:
            for b in GRID:
                cfg = SimConfig(
                    detectors=replace(DET, alpha=a),
                    eve=EveStrategy(active=True, beta=b),
                    n_pulses=10**6,
                    seed=next(sub),
                    receiver_mode=mode,
                )
                t = simulate_attack(cfg)
                n = t.counts.n_sent
                if mode == "two_spad":
                    p_fp, p_success = imposition_stats_2spad(a, b)
                    fp = t.counts.n_double
                else:
                    p_fp, p_success = imposition_stats_1spad(a, b)
                    fp = t.counts.n_error
                # only sifted fingerprints are observed
                for name, z in (("fingerprint", zscore(fp, n, p_fp / 2)), ("success", zscore(t.n_success, n, p_success))):
                    if abs(z) > abs(worst):
                        worst, where = z, f"{mode} a={a} b={b} {name}"
    return outcome(abs(worst) <= Z, f"max |z| = {abs(worst):.2f} ({where}), 324 tallies")


@criterion(2, "inferred beta recovers the configured value and its spread scales as 1/sqrt(n_sent)")
def beta_round_trip() -> Outcome:
    q = eve_gain(PROTO)
    alpha, beta = 0.5, 0.3
    parts = []
    ok = True
    for mode in ("two_spad", "one_spad"):
        for n_sent in (10**5, 10**6, 10**7):
            cfg = SimConfig(
                detectors=replace(DET, alpha=alpha),
                eve=EveStrategy(active=True, beta=beta),
                n_pulses=round(n_sent / q),
                seed=n_sent + (0 if mode == "two_spad" else 1),
                receiver_mode=mode,
            )
            b = infer_beta(mode, simulate_attack(cfg).counts, alpha)
            dev = abs(b.beta - beta) / b.sigma
            ok &= dev <= Z
            parts.append(f"{mode[:3]}@{n_sent:.0e}:{dev:.1f}sd")
    # empirical spread over independent seeds, n_sent quadrupled
    k = 400
    sds = []
    for n_sent in (10**5, 4 * 10**5):
        base = SimConfig(
            detectors=replace(DET, alpha=alpha),
            eve=EveStrategy(active=True, beta=beta),
            n_pulses=round(n_sent / q),
        )
        est = [infer_beta("two_spad", simulate_attack(replace(base, seed=s)).counts, alpha).beta for s in seeds(n_sent, k)]
        sds.append(float(np.std(est, ddof=1)))
    ratio = sds[0] / sds[1]
    ok &= abs(ratio / 2 - 1) <= 0.2
    return outcome(ok, f"{' '.join(parts)}; sd ratio for 4x n_sent = {ratio:.3f} (target 2 +/- 20%)")


@criterion(3, "closed-form optimal alpha agrees with a 1e-4 grid search")
def optimal_alpha_grid() -> Outcome:
    rng = np.random.default_rng(303)
    grid = np.arange(1, 10001) * 1e-4
    worst = 0.0
    n = 0
    for mode in ("two_spad", "one_spad"):
        for _ in range(100):
            n_alice = 10 ** rng.uniform(5, 11)
            q_eve = rng.uniform(0.01, 1.0)
            n_max = n_alice * q_eve
            fp = float(np.round(10 ** rng.uniform(-6, -0.6) * n_max))
            if mode == "two_spad":
                term = 0.5 * (grid * n_max + 4 * fp / grid)
            else:
                term = grid * n_max / 4 + 2 * fp * (1 + grid) / grid
            best = grid[np.argmin(term)]
            worst = max(worst, abs(best - optimal_alpha(mode, fp, n_alice, q_eve).alpha))
            n += 1
    return outcome(worst <= 1e-4 + 1e-12, f"{n} tuples, max |alpha_grid - alpha_closed| = {worst:.2e}")


@criterion(4, "algebraic identities among the estimators")
def identities() -> Outcome:
    rng = np.random.default_rng(404)
    e7 = e11 = e21 = 0.0
    half_exact = True
    for _ in range(500):
        alpha, beta = rng.uniform(0.01, 1.0, 2)
        n_alice = int(10 ** rng.uniform(6, 11))
        n_sent = int(n_alice * rng.uniform(0.05, 0.6))
        # the optimal-alpha forms assume n_sent = n_alice * q_eve exactly
        q_eve = n_sent / n_alice
        n_fp = int(rng.uniform(1e-7, 1e-2) * n_sent)
        n_clicked = int(max(rng.uniform(0.05, 0.5) * n_sent, 4 * n_fp))
        c = SessionCounts(n_alice=n_alice, n_sent=n_sent, n_clicked=n_clicked, n_double=n_fp, n_error=n_fp)
        b_hat = infer_beta("two_spad", c, alpha).beta
        lhs = eve_clicked_2spad(alpha, n_sent, n_fp)
        e7 = max(e7, abs(lhs - n_sent * (alpha + b_hat) / 2) / abs(lhs))
        a2 = optimal_alpha("two_spad", n_fp, n_alice, q_eve)
        if not a2.flags:
            closed = key_bits_optimal_2spad(c, None, q_eve).raw
            e11 = max(e11, abs(closed - key_bits_2spad(c, a2.alpha).raw) / abs(closed))
        a1 = optimal_alpha("one_spad", n_fp, n_alice, q_eve)
        if not a1.flags:
            direct = key_bits_1spad(c, a1.alpha).raw
            closed = n_clicked - eve_bits_1spad_optimal(c, None, q_eve)
            e21 = max(e21, abs(closed - direct) / abs(direct))
        half_exact &= imposition_stats_1spad(alpha, beta)[0] == 0.5 * imposition_stats_2spad(alpha, beta)[0]
    ok = e7 <= 1e-12 and e11 <= 1e-9 and e21 <= 1e-9 and half_exact
    return outcome(ok, f"rel err eve_clicked {e7:.1e}, optimal 2-det {e11:.1e}, optimal 1-det {e21:.1e}, P_error = P_double/2 exact: {half_exact}")


def exact_two_arm(det: DetectorConfig, length: float) -> dict[str, float]:
    """High-precision per-pulse probabilities of the independent two-arm receiver."""
    mp.mp.dps = 40
    eta_ch = mp.power(10, -mp.mpf("0.02") * length)
    y0, t = mp.mpf(det.dark_count), mp.mpf(det.transmittance)
    out = {"any": mp.mpf(0), "double": mp.mpf(0), "wrong": mp.mpf(0)}
    for w_gate, eta in ((det.alpha, det.eta_high), (1 - det.alpha, det.eta_low)):
        for mu, n in zip(PROTO.intensities, PROTO.prep_probs):
            eff = mp.mpf(eta) * eta_ch
            right = 1 - (1 - y0) * mp.exp(-mu * t * eff)
            wrong = 1 - (1 - y0) * mp.exp(-mu * (1 - t) * eff)
            w = mp.mpf(w_gate) * n / 2
            out["any"] += w * (1 - (1 - right) * (1 - wrong))
            out["double"] += w * right * wrong
            out["wrong"] += w * wrong
    return {k: float(v) for k, v in out.items()}


@criterion(5, "honest 1e7-pulse sessions match the click, double-click and error gains")
def honest_gains() -> Outcome:
    n = 10**7
    worst = 0.0
    where = ""
    sub = iter(seeds(505, 6))
    for mode in ("two_spad", "one_spad"):
        for length in (0.0, 50.0, 100.0):
            ch = ChannelConfig(length_km=length)
            c = simulate_honest(SimConfig(channel=ch, n_pulses=n, seed=next(sub), receiver_mode=mode))
            ex = exact_two_arm(DET, length)
            q_pass, q_double, qber = pass_gain(PROTO, DET, ch), double_gain(PROTO, DET, ch), qber_gain(PROTO, DET, ch)
            if mode == "two_spad":
                checks = [("clicked", c.n_clicked, q_pass, ex["any"]), ("double", c.n_double, q_double, ex["double"]), ("error", c.n_error, qber, ex["wrong"])]
            else:
                # one watched output: half the clicks, half the wrong-arm events
                checks = [("clicked", c.n_clicked, q_pass / 2, (ex["any"] + ex["double"]) / 2), ("error", c.n_error, qber / 2, ex["wrong"] / 2)]
            for name, obs, p, p_model in checks:
                sd = math.sqrt(n * p * (1 - p))
                slack = abs(p_model - p) * n
                excess = (abs(obs - n * p) - slack) / sd
                if excess > worst or not where:
                    worst, where = excess, f"{mode} L={length:g} {name}"
    return outcome(worst <= Z, f"max (|dev| - slack)/sigma = {worst:.2f} ({where})")


@criterion(6, "two-detector curve keeps over half the key at 100-120 km with max S(100) in [0.57, 0.77]")
def two_detector_curve() -> Outcome:
    sweep = (0.02, 0.04, 0.06, 0.08, 0.10)
    pts = secure_fraction_curve(PROTO, DET, ChannelConfig(), "two_spad", sweep, range(100, 121))
    above = [v for v in sweep if all(p.secure_fraction > 0.5 for p in pts if p.sweep_value == v)]
    s100 = max(p.secure_fraction for p in pts if p.length_km == 100)
    ok = bool(above) and 0.57 <= s100 <= 0.77
    return outcome(ok, f"eta_low with S > 0.5 on [100,120] km: {above}; max S(100 km) = {s100:.3f}")


@criterion(7, "single-detector leakage fraction is at least the two-detector one at every length")
def one_detector_dominance() -> Outcome:
    lengths = range(0, 151, 10)
    worst = math.inf
    n = 0
    for eta_low in (0.06, 0.096):
        for t in (0.99, 0.999, 0.9999):
            det = replace(DET, eta_low=eta_low, transmittance=t)
            one = secure_fraction_curve(PROTO, det, ChannelConfig(), "one_spad", [t], lengths, "transmittance")
            two = secure_fraction_curve(PROTO, det, ChannelConfig(), "two_spad", [eta_low], lengths)
            for a, b in zip(one, two):
                worst = min(worst, (1 - a.secure_fraction) - (1 - b.secure_fraction))
                n += 1
    return outcome(worst >= 0, f"{n} (setting, L) points, min leakage(one) - leakage(two) = {worst:.4f}")


@criterion(8, "gap checker: pulsed samples hold with margin >= 20 dB and ratio >= 500, CW fails")
def gap_checker() -> Outcome:
    checks = gapcheck(sample_curves())
    pulsed = [c for c in checks if c.setting != "cw"]
    cw = [c for c in checks if c.setting == "cw"]
    head = max(pulsed, key=lambda c: c.verdict.ratio)
    ok = (
        all(c.verdict.holds and c.verdict.margin_db >= 20 for c in pulsed)
        and head.verdict.ratio >= 500
        and len(cw) == 1
        and not cw[0].verdict.holds
    )
    margins = ", ".join(f"{c.setting} {c.verdict.margin_db:.1f}" for c in pulsed)
    return outcome(ok, f"margins dB: {margins}; {head.setting} ratio {head.verdict.ratio:.0f}; cw margin {cw[0].verdict.margin_db:.1f} dB")


@criterion(9, "validate output is byte-identical for the same seed")
def determinism() -> Outcome:
    with tempfile.TemporaryDirectory() as d:
        outs = [Path(d) / f"run{i}.csv" for i in (1, 2)]
        codes = [cli.run(["validate", "--seed", "42", "--out", str(p)]) for p in outs]
        same = outs[0].read_bytes() == outs[1].read_bytes()
        size = outs[0].stat().st_size
    return outcome(same and codes == [0, 0], f"exit codes {codes}, identical: {same} ({size} bytes)")


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_acceptance(number, acceptance_log):
    title, fn = CRITERIA[number]
    outcome = fn()
    acceptance_log(number, title, outcome.passed, outcome.detail)
    assert outcome.passed, outcome.detail


if __name__ == "__main__":
    failed = 0
    for number in sorted(CRITERIA):
        title, fn = CRITERIA[number]
        o = fn()
        failed += not o.passed
        print(f"[{'PASS' if o.passed else 'FAIL'}] {number}. {title}: {o.detail}", flush=True)
    raise SystemExit(1 if failed else 0)
