
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from dbaleak.attack import imposition_stats_2spad, infer_beta
from dbaleak.estimator import (
    CurvePoint,
    curve_point,
    estimate,
    eve_bits_1spad_optimal,
    eve_clicked_2spad,
    eve_success_1spad,
    key_bits_1spad,
    key_bits_2spad,
    key_bits_optimal_2spad,
    optimal_alpha,
    secure_fraction_curve,
    self_consistent_alpha,
)
from dbaleak.gains import eve_gain, expected_counts
from dbaleak.model import ChannelConfig, DecoyProtocol, DetectorConfig, SessionCounts

PROTO = DecoyProtocol()
DET = DetectorConfig()
Q_EVE = eve_gain(PROTO)
GRID = np.arange(1, 10001) * 1e-4


def counts(**kw):
    base = dict(n_alice=10**9, n_sent=10**6, n_clicked=10**5, n_double=0, n_error=0)
    base.update(kw)
    return SessionCounts(**base)


def test_eve_clicked_examples():
    assert eve_clicked_2spad(0.3, 1e6, 0) == pytest.approx(0.3 * 1e6 / 2)
    assert eve_clicked_2spad(0.5, 1e6, 62500) == pytest.approx(500000, rel=1e-15)
    with pytest.raises(ValueError):
        eve_clicked_2spad(0.0, 1e6, 1)


@given(st.floats(0.01, 1), st.floats(0, 1), st.integers(10**3, 10**9))
def test_eve_clicked_is_success_plus_two_doubles(alpha, beta, n_sent):
    n_double = round(alpha * beta / 4 * n_sent)
    c = SessionCounts(n_alice=n_sent, n_sent=n_sent, n_clicked=n_sent, n_double=n_double)
    beta_hat = infer_beta("two_spad", c, alpha).beta
    assume(beta_hat <= 1)
    p_success = imposition_stats_2spad(alpha, beta_hat)[1]
    assert eve_clicked_2spad(alpha, n_sent, n_double) == pytest.approx(p_success * n_sent + 2 * n_double, rel=1e-12)
    assert eve_clicked_2spad(alpha, n_sent, n_double) == pytest.approx(n_sent * (alpha + beta_hat) / 2, rel=1e-12)


def test_key_bits_2spad_limits():
    c = counts()
    assert c.n_clicked - key_bits_2spad(c, 1e-9).value == pytest.approx(1e-9 * c.n_sent / 2, rel=1e-6)
    k = key_bits_2spad(counts(n_double=1000), 1.0)
    assert k.value == 0.0 and k.raw < 0 and k.flags == ("clamped",)


def test_optimal_alpha_examples():
    n_alice = 1e6 / Q_EVE
    assert optimal_alpha("two_spad", 100, n_alice, Q_EVE).alpha == pytest.approx(0.02, rel=1e-12)
    assert optimal_alpha("one_spad", 50, n_alice, Q_EVE).alpha == pytest.approx(0.02, rel=1e-12)
    big = optimal_alpha("two_spad", 1e6, n_alice, Q_EVE)
    assert big.alpha == 1.0 and big.raw > 1 and big.flags == ("alpha-clamped",)
    zero = optimal_alpha("two_spad", 0, n_alice, Q_EVE)
    assert zero.flags == ("alpha-floor",) and zero.alpha == pytest.approx(1e-6)
    with pytest.raises(ValueError):
        optimal_alpha("two_spad", 1, n_alice, 0.0)


def eve_term_2spad(a, n_max, n_double):
    return 0.5 * (a * n_max + 4 * n_double / a)


def eve_term_1spad(a, n_max, n_error):
    return a * n_max / 4 + 2 * n_error * (1 + a) / a


@pytest.mark.parametrize("mode, term", [("two_spad", eve_term_2spad), ("one_spad", eve_term_1spad)])
def test_optimal_alpha_matches_grid_search(mode, term):
    rng = np.random.default_rng(7)
    for _ in range(120):
        n_alice = 10 ** rng.uniform(5, 11)
        q_eve = rng.uniform(0.01, 1)
        fingerprints = float(np.round(10 ** rng.uniform(0, 1) * 10 ** rng.uniform(-6, -0.5) * n_alice * q_eve))
        choice = optimal_alpha(mode, fingerprints, n_alice, q_eve)
        best = GRID[np.argmin(term(GRID, n_alice * q_eve, fingerprints))]
        assert abs(best - choice.alpha) <= 1e-4 + 1e-12


@given(st.floats(1e4, 1e10), st.floats(0.01, 1), st.floats(1e-6, 0.2))
def test_eve_term_convex(n_alice, q_eve, frac):
    # the closed-form optimum is a minimum because the adversary term is convex in alpha
    n_max = n_alice * q_eve
    for term in (eve_term_2spad, eve_term_1spad):
        vals = term(GRID[::50], n_max, frac * n_max)
        assert np.all(np.diff(vals, 2) >= -1e-9 * np.abs(vals[1:-1]))


def test_key_bits_optimal_examples():
    n_alice = 1e6 / Q_EVE
    c = SessionCounts(n_alice=10**7, n_sent=10**6, n_clicked=10**5, n_double=0, expected=True)
    assert key_bits_optimal_2spad(c, n_alice, Q_EVE).value == 1e5
    c = SessionCounts(n_alice=10**7, n_sent=10**6, n_clicked=10**5, n_double=100, expected=True)
    assert key_bits_optimal_2spad(c, n_alice, Q_EVE).value == pytest.approx(8e4, rel=1e-12)


def test_one_detector_examples():
    c = counts(n_error=0)
    assert key_bits_1spad(c, 0.2).value == pytest.approx(c.n_clicked - 0.2 * c.n_sent / 4)
    c = counts(n_error=50)
    assert eve_bits_1spad_optimal(c, 1e6 / Q_EVE, Q_EVE) == pytest.approx(10100, rel=1e-12)
    assert eve_success_1spad(0.4, 1e6, 100) == pytest.approx(1e5 + 500)


@given(st.floats(1e6, 1e11), st.floats(0.05, 0.5), st.floats(1e-7, 1e-2), st.floats(0.2, 1.0))
def test_closed_forms_equal_direct_evaluation(n_alice, q_eve, frac, clicked_frac):
    n_sent = n_alice * q_eve
    fp = frac * n_sent / 4
    for mode in ("two_spad", "one_spad"):
        a = optimal_alpha(mode, fp, n_alice, q_eve)
        assume(not a.flags)
        c = SessionCounts(
            n_alice=n_alice, n_sent=n_sent, n_clicked=clicked_frac * n_sent, n_double=fp, n_error=fp, expected=True
        )
        if mode == "two_spad":
            closed = key_bits_optimal_2spad(c, None, q_eve).raw
            direct = key_bits_2spad(c, a.alpha).raw
        else:
            closed = c.n_clicked - eve_bits_1spad_optimal(c, None, q_eve)
            direct = key_bits_1spad(c, a.alpha).raw
        assert closed == pytest.approx(direct, rel=1e-9, abs=1e-9 * c.n_clicked)


def test_estimate_zero_fingerprints_charges_only_alpha_term():
    c = SessionCounts(n_alice=10**9, n_sent=270911494, n_clicked=10**6)
    est = estimate("two_spad", c, Q_EVE)
    assert "alpha-floor" in est.flags
    # eve_clicked is n_clicked minus the key, so it carries the cancellation error of 1e6
    assert est.eve_clicked == pytest.approx(0.5 * est.alpha_opt * c.n_sent, abs=1e-9)
    assert est.key_bits == pytest.approx(c.n_clicked - 0.5 * est.alpha_opt * c.n_sent, rel=1e-15)


def test_estimate_fields_and_flags():
    c = SessionCounts(n_alice=10**9, n_sent=10**8, n_clicked=10**6, n_double=500)
    est = estimate("two_spad", c, Q_EVE)
    assert 0 <= est.secure_fraction <= 1
    assert est.secure_fraction == pytest.approx(est.key_bits / c.n_clicked)
    assert est.beta_hat == pytest.approx(4 * 500 / (est.alpha_opt * 1e8))
    assert est.key_bits_sigma == pytest.approx(0.5 * est.alpha_opt * 1e8 * est.beta_sigma)
    fixed = estimate("two_spad", c, Q_EVE, alpha=0.5)
    assert fixed.alpha_opt == 0.5
    assert fixed.key_bits <= est.key_bits + 1e-6
    empty = estimate("one_spad", SessionCounts(n_alice=10, n_sent=0, n_clicked=0), 0.27)
    assert set(empty.flags) >= {"no-fake-states", "no-clicks"}
    with pytest.raises(ValueError):
        estimate("two_spad", c, Q_EVE, alpha=1.5)


@given(st.integers(0, 10**5), st.integers(0, 10**5), st.sampled_from(["two_spad", "one_spad"]))
def test_fraction_nonincreasing_in_fingerprints(a, b, mode):
    lo, hi = sorted((a, b))
    mk = lambda f: SessionCounts(n_alice=10**9, n_sent=10**8, n_clicked=10**6, n_double=f if mode == "two_spad" else 0, n_error=f if mode == "one_spad" else 0)
    assert estimate(mode, mk(hi), Q_EVE).secure_fraction <= estimate(mode, mk(lo), Q_EVE).secure_fraction + 1e-12


def test_perfect_system_keeps_whole_key():
    det = DetectorConfig(dark_count=0.0, transmittance=1.0)
    point, c = curve_point("two_spad", PROTO, det, ChannelConfig())
    assert c.n_double == 0
    assert point.secure_fraction == pytest.approx(1.0, abs=1.0 / c.n_clicked)
    assert "alpha-floor" in point.flags


def test_key_bits_match_curve_point():
    ch = ChannelConfig(length_km=100)
    point, c = curve_point("two_spad", PROTO, DET, ch)
    direct = key_bits_2spad(c, point.alpha_opt).value / c.n_clicked
    assert point.secure_fraction == pytest.approx(direct, rel=1e-9)


def test_self_consistent_alpha_is_fixed_point():
    for mode in ("two_spad", "one_spad"):
        for length in (0, 60, 120):
            ch = ChannelConfig(length_km=length)
            a = self_consistent_alpha(mode, PROTO, DET, ch)
            c = expected_counts(PROTO, DET, ch, 1e9, mode, alpha=a.alpha)
            fp = c.n_double if mode == "two_spad" else c.n_error
            again = optimal_alpha(mode, fp, 1e9, Q_EVE)
            assert again.alpha == pytest.approx(a.alpha, rel=1e-9)


def test_curve_shape_and_bounds():
    pts = secure_fraction_curve(PROTO, DET, ChannelConfig(), "two_spad", [0.04, 0.08], range(0, 151, 30))
    assert len(pts) == 12
    assert all(0 <= p.secure_fraction <= 1 for p in pts)
    assert [p.sweep_value for p in pts[:6]] == [0.04] * 6
    for sweep in (0.04, 0.08):
        s = [p.secure_fraction for p in pts if p.sweep_value == sweep]
        assert all(x >= y for x, y in zip(s, s[1:]))
    one = secure_fraction_curve(PROTO, DET, ChannelConfig(), "one_spad", [0.99], [100])
    assert one[0].secure_fraction == 0.0 and "clamped" in one[0].flags
    with pytest.raises(ValueError):
        secure_fraction_curve(PROTO, DET, ChannelConfig(), "two_spad", [0.1], [0], sweep_param="dark_count")
    with pytest.raises(ValueError):
        CurvePoint(0.0, 0.1, 1.5, 0.1)


def test_higher_low_gate_efficiency_helps():
    s = [p.secure_fraction for p in secure_fraction_curve(PROTO, DET, ChannelConfig(), "two_spad", [0.02, 0.06, 0.1], [100])]
    assert s == sorted(s)
