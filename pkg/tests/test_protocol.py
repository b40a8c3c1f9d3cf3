import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from starqkd import _kernel_py, kernel
from starqkd.errors import InsufficientDataError, ProtocolDesyncError
from starqkd.protocol import (
    Basis,
    Decision,
    Phase,
    PulsePhysics,
    ReceiverLog,
    SenderLog,
    SessionConfig,
    SessionStatus,
    abort_check,
    calibrate_session_excess,
    click_probability,
    decode,
    encode,
    estimate_qber,
    run_session,
    session_expectation,
    sift,
    simulate_pulse,
    transmit,
)

ARC = PulsePhysics(mu=0.1, transmittance=10 ** -1.163, efficiency=0.1, visibility=0.9744,
                   p_dark=5.2e-6, excess_error=0.0218)


def oracle(phys: PulsePhysics):
    """Enumerate the 16 equally likely (bit, basis, basis, bit) draws with explicit cosines."""
    m, v, d, x, eps = (phys.mu * phys.transmittance * phys.efficiency, phys.visibility,
                       phys.p_dark, phys.xtalk_click_prob, phys.excess_error)
    click = sifted = errors = 0.0
    for b, beta, gamma, r in itertools.product((0, 1), repeat=4):
        dphi = (2 * b + beta - 2 * r - gamma) * math.pi / 2
        arg = m * (1 + v * math.cos(dphi)) / 2
        s = -math.expm1(-arg)
        p = s + (1 - s) * (x + (1 - x) * d)
        click += p / 16
        if beta != gamma:
            continue
        sifted += p / 16
        errors += (s * (1 - eps) + (p - s) if r != b else s * eps) / 16
    return click, sifted, errors / sifted if sifted else 0.5


def test_encode_mapping():
    assert encode(0, Basis.Z) == Phase.ZERO
    assert encode(0, Basis.X) == Phase.HALF_PI
    assert encode(1, Basis.Z) == Phase.PI
    assert encode(1, Basis.X) == Phase.THREE_HALF_PI
    assert Phase.THREE_HALF_PI.radians == pytest.approx(3 * math.pi / 2)


def test_decode_examples_and_bijection():
    assert decode(Phase.PI) == (1, Basis.Z)
    assert decode(Phase.HALF_PI) == (0, Basis.X)
    for p in Phase:
        assert encode(*decode(p)) == p
    for b in (0, 1):
        for basis in Basis:
            assert decode(encode(b, basis)) == (b, basis)


def test_click_probability_limits():
    ideal = PulsePhysics(mu=0.5, transmittance=0.3, efficiency=0.2, visibility=1.0, p_dark=0.0)
    assert click_probability(Phase.PI, Phase.ZERO, ideal) == pytest.approx(0.0, abs=1e-17)
    assert click_probability(Phase.ZERO, Phase.ZERO, ideal) == pytest.approx(1 - math.exp(-0.03))


@given(
    mu=st.floats(0.01, 1), t=st.floats(0, 1), eta=st.floats(0.01, 1), v=st.floats(0.5, 1),
    d=st.floats(0, 1e-3), x=st.floats(0, 1e-3), eps=st.floats(0, 0.3),
)
@settings(max_examples=200)
def test_closed_form_matches_enumeration(mu, t, eta, v, d, x, eps):
    phys = PulsePhysics(mu, t, eta, v, d, x, eps)
    exp = session_expectation(phys)
    click, sifted, qber = oracle(phys)
    assert exp.click_prob == pytest.approx(click, rel=1e-9, abs=1e-300)
    assert exp.sifted_prob == pytest.approx(sifted, rel=1e-9, abs=1e-300)
    if sifted > 0:
        assert exp.qber.total == pytest.approx(qber, rel=1e-9)
        assert exp.qber.total == pytest.approx(sum(exp.qber.components.values()), rel=1e-12)


def test_simulate_pulse_matches_probability():
    phys = PulsePhysics(mu=1.0, transmittance=0.5, efficiency=0.5, visibility=0.9, p_dark=1e-3,
                        xtalk_click_prob=1e-3, excess_error=0.1)
    rng = np.random.default_rng(3)
    n = 20_000
    for s, r in [(0, 0), (1, 0), (2, 0)]:
        p = click_probability(s, r, phys)
        hits = sum(simulate_pulse(s, r, phys, rng).clicked for _ in range(n))
        assert abs(hits - n * p) < 3 * math.sqrt(n * p * (1 - p)) + 1


def test_simulate_pulse_never_clicks_on_destructive_noiseless():
    phys = PulsePhysics(mu=1.0, transmittance=1.0, efficiency=1.0, visibility=1.0, p_dark=0.0)
    rng = np.random.default_rng(0)
    assert not any(simulate_pulse(Phase.PI, Phase.ZERO, phys, rng).clicked for _ in range(1000))


def test_monte_carlo_click_rate_within_3_sigma_arc():
    n = 10_000_000
    log = transmit(ARC, n, np.random.default_rng(11))
    p = session_expectation(ARC).click_prob
    assert abs(len(log) - n * p) < 3 * math.sqrt(n * p * (1 - p))


def test_sift_keeps_matched_clicked_only():
    s = SenderLog(np.arange(4), np.array([0, 1, 2, 3], dtype=np.uint8))
    r = ReceiverLog(np.arange(4), np.array([0, 0, 2, 1], dtype=np.uint8),
                    np.array([True, True, False, True]))
    a, b = sift(s, r)
    assert a.tolist() == [0, 1]   # bins 0 and 3 have matching bases; bin 2 never clicked
    assert b.tolist() == [0, 0]


def test_sift_no_clicks_and_desync():
    s = SenderLog(np.arange(3), np.zeros(3, dtype=np.uint8))
    a, b = sift(s, ReceiverLog(np.arange(3), np.zeros(3, dtype=np.uint8), np.zeros(3, bool)))
    assert a.size == b.size == 0
    with pytest.raises(ProtocolDesyncError):
        sift(s, ReceiverLog(np.array([0, 2, 1]), np.zeros(3, dtype=np.uint8), np.ones(3, bool)))


def test_sift_noiseless_bits_agree_and_half_kept():
    phys = PulsePhysics(mu=3.0, transmittance=1.0, efficiency=1.0, visibility=1.0, p_dark=0.0)
    log = transmit(phys, 200_000, np.random.default_rng(5))
    a, b = sift(log.sender_view(), log.receiver_view())
    assert np.array_equal(a, b)
    sp, rp = log.sender_phase, log.receiver_phase
    matched = (sp & 1) == (rp & 1)
    kept = a.size
    assert kept == int(matched.sum())
    # noiseless: matched clicks only at dphi = 0, mismatched at +-pi/2
    p0 = 1 - math.exp(-3.0)
    ph = 1 - math.exp(-1.5)
    frac = p0 / (p0 + 2 * ph)
    n = len(log)
    assert abs(kept / n - frac) < 3 * math.sqrt(frac * (1 - frac) / n)


def test_mismatched_bins_never_in_key():
    log = transmit(ARC, 2_000_000, np.random.default_rng(1))
    sp, rp = log.sender_phase, log.receiver_phase
    a, _ = sift(log.sender_view(), log.receiver_view())
    assert a.size == int(((sp & 1) == (rp & 1)).sum())


def test_estimate_qber_extremes():
    a = np.zeros(100, dtype=np.uint8)
    rng = np.random.default_rng(0)
    assert estimate_qber(a, a, 0.1, rng).estimate == 0
    assert estimate_qber(a, a ^ 1, 0.1, rng).estimate == 1
    s = estimate_qber(a, a, 0.1, rng)
    assert s.disclosed_count == 10 and np.all(np.diff(s.positions) > 0)


def test_estimate_qber_binomial():
    rng = np.random.default_rng(8)
    n = 100_000
    a = rng.integers(0, 2, n, dtype=np.uint8)
    b = a ^ (rng.random(n) < 0.05).astype(np.uint8)
    s = estimate_qber(a, b, 0.1, rng)
    assert abs(s.estimate - 0.05) < 3 * math.sqrt(0.05 * 0.95 / s.disclosed_count)
    assert s.estimate == s.error_count / s.disclosed_count


def test_estimate_qber_empty():
    with pytest.raises(InsufficientDataError):
        estimate_qber(np.array([]), np.array([]), 0.1, np.random.default_rng(0))


def test_abort_rule():
    assert abort_check(0.077) is Decision.CONTINUE
    assert abort_check(0.115) is Decision.CONTINUE
    assert abort_check(0.20) is Decision.ABORT


def _cfg(phys, n=200_000, seed=1):
    return SessionConfig(physics=phys, pulse_count=n, seed=seed)


def test_noiseless_session():
    phys = PulsePhysics(mu=1.0, transmittance=1.0, efficiency=1.0, visibility=1.0, p_dark=0.0)
    st_ = run_session(_cfg(phys))
    assert st_.qber_sample.estimate == 0
    assert st_.status is SessionStatus.COMPLETED
    assert np.array_equal(st_.sender_key, st_.receiver_key)
    assert st_.sender_key.size == st_.sifted - st_.qber_sample.disclosed_count


def test_session_determinism():
    s1, s2 = run_session(_cfg(ARC, 1_000_000, 99)), run_session(_cfg(ARC, 1_000_000, 99))
    for f in ("index", "sender_phase", "receiver_phase", "tag"):
        assert np.array_equal(getattr(s1.log, f), getattr(s2.log, f))
    assert np.array_equal(s1.receiver_key, s2.receiver_key)
    assert s1.qber_sample == s2.qber_sample
    assert s1.status == s2.status


def test_session_with_no_clicks_completes_empty():
    phys = PulsePhysics(mu=0.1, transmittance=0.0, efficiency=0.1, visibility=1.0, p_dark=0.0)
    st_ = run_session(_cfg(phys, 1000))
    assert st_.sifted == 0 and st_.qber_sample is None
    assert st_.status is SessionStatus.COMPLETED


def test_aborted_implies_estimate_above_threshold():
    phys = PulsePhysics(mu=1.0, transmittance=1.0, efficiency=1.0, visibility=1.0, p_dark=0.0,
                        excess_error=0.2)
    st_ = run_session(_cfg(phys, 50_000))
    assert st_.status is SessionStatus.ABORTED
    assert st_.qber_sample.estimate > 0.115


def test_sifted_lengths_equal():
    st_ = run_session(_cfg(ARC, 1_000_000))
    assert st_.sender_sifted.size == st_.receiver_sifted.size
    assert st_.sender_key.size == st_.receiver_key.size


def test_calibrate_session_excess_round_trip():
    base = PulsePhysics(ARC.mu, ARC.transmittance, ARC.efficiency, ARC.visibility, ARC.p_dark)
    e = calibrate_session_excess(0.041, base)
    phys = PulsePhysics(ARC.mu, ARC.transmittance, ARC.efficiency, ARC.visibility, ARC.p_dark,
                        0.0, e)
    assert session_expectation(phys).qber.total == pytest.approx(0.041, abs=1e-9)


# Backends

def _random_block(seed, n=50_000):
    rng = np.random.default_rng(seed)
    return (rng.integers(0, 16, n, dtype=np.uint8), rng.random(n), rng.random(n))


@given(
    seed=st.integers(0, 2**32 - 1),
    mu=st.floats(0.01, 2), t=st.floats(0, 1), v=st.floats(0.3, 1),
    d=st.floats(0, 5e-3), x=st.floats(0, 5e-3), eps=st.floats(0, 0.5),
)
@settings(max_examples=30, deadline=None)
def test_backends_bit_identical(seed, mu, t, v, d, x, eps):
    from starqkd.protocol import click_thresholds

    phys = PulsePhysics(mu, t, 1.0, v, d, x, eps)
    thr = np.ascontiguousarray(click_thresholds(phys))
    rbits, uc, uf = _random_block(seed)
    ref = _kernel_py.process_block(rbits, uc, uf, thr, eps)
    out = kernel.process_block(rbits, uc, uf, thr, eps)
    for a, b in zip(ref, out):
        assert a.dtype.kind == b.dtype.kind
        assert np.array_equal(a, b)


def test_session_identical_across_backends():
    a = run_session(_cfg(ARC, 3_000_000, 5), _kernel_py.process_block)
    b = run_session(_cfg(ARC, 3_000_000, 5), kernel.process_block)
    assert np.array_equal(a.log.index, b.log.index)
    assert np.array_equal(a.log.tag, b.log.tag)
    assert np.array_equal(a.receiver_key, b.receiver_key)


def test_kernel_tags():
    assert {kernel.TAG_SIGNAL, kernel.TAG_SIGNAL_FLIPPED, kernel.TAG_CROSSTALK,
            kernel.TAG_DARK} == {1, 2, 3, 4}
    assert kernel.BACKEND in ("cython", "python")
