import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sagnac_qkd.optics import OpticsConfig, reduce_phase
from sagnac_qkd.protocol import (
    ALL_SYMBOLS,
    Bb84Symbol,
    DecoyPlan,
    IntensityClass,
    NoDataError,
    Outcome,
    PulseRecord,
    QberEstimate,
    Records,
    SIGNAL,
    assign_intensity,
    bob_phase,
    encode_phase,
    estimate_qber,
    expected_detection_probability,
    expected_qber,
    measure,
    per_intensity_stats,
    read_replay_file,
    sample_intensities,
    sift,
    write_replay_file,
)

NO_LOSS = dict(loop_length=0.0, attenuation=0.0, insertion_loss=0.0)


def within_3sigma(count, n, p):
    sigma = math.sqrt(n * p * (1 - p))
    return abs(count - n * p) <= 3 * sigma


def test_encode_phase_table():
    assert encode_phase(Bb84Symbol(0, 0)) == 0.0
    assert encode_phase(Bb84Symbol(1, 0)) == pytest.approx(math.pi)
    assert encode_phase(Bb84Symbol(0, 1)) == pytest.approx(math.pi / 2)
    assert encode_phase(Bb84Symbol(1, 1)) == pytest.approx(1.5 * math.pi)


def test_encode_phase_bijective():
    phases = sorted(round(encode_phase(s), 12) for s in ALL_SYMBOLS)
    assert phases == [round(k * math.pi / 2, 12) for k in range(4)]


@pytest.mark.parametrize("basis", [0, 1])
def test_bit_flip_is_pi(basis):
    d = encode_phase(Bb84Symbol(1, basis)) - encode_phase(Bb84Symbol(0, basis))
    assert reduce_phase(d) == pytest.approx(math.pi, abs=1e-12)


def test_symbol_validation():
    with pytest.raises(ValueError):
        Bb84Symbol(2, 0)


def test_bob_phase():
    assert bob_phase(0) == 0.0
    assert bob_phase(1) == pytest.approx(math.pi / 2)
    with pytest.raises(ValueError):
        bob_phase(2)


def test_net_phase_matched_basis_is_bit_times_pi():
    for s in ALL_SYMBOLS:
        net = reduce_phase(encode_phase(s) - bob_phase(s.basis))
        assert net == pytest.approx(s.bit * math.pi, abs=1e-12)


def test_measure_deterministic_port():
    optics = OpticsConfig(visibility=1.0, dark_count_prob=0.0, mean_photon_number=1e6,
                          detector_efficiency=1.0, **NO_LOSS)
    rng = np.random.default_rng(1)
    for _ in range(100):
        assert measure(0.0, 0.0, optics, rng) is Outcome.CH2


def test_measure_dark_counts_only():
    optics = OpticsConfig(mean_photon_number=0.0, dark_count_prob=5e-5)
    rng = np.random.default_rng(2)
    n = 1_000_000
    out = measure(np.zeros(n), np.zeros(n), optics, rng)
    p_none = (1 - 5e-5) ** 2
    assert within_3sigma(np.count_nonzero(out == Outcome.NONE), n, p_none)


def test_measure_matched_basis_wrong_click_rate():
    optics = OpticsConfig(visibility=0.96, dark_count_prob=0.0, mean_photon_number=0.1,
                          detector_efficiency=1.0, **NO_LOSS)
    rng = np.random.default_rng(3)
    n = 1_000_000
    bits = rng.integers(0, 2, n)
    out = measure(bits * math.pi, np.zeros(n), optics, rng)
    det = out != Outcome.NONE
    wrong = np.count_nonzero(det & ((out == Outcome.CH1).astype(int) != bits))
    assert within_3sigma(wrong, np.count_nonzero(det), 0.02)


@pytest.mark.parametrize("v", [0.0, 0.5, 1.0])
def test_mismatched_basis_ports_equiprobable(v):
    optics = OpticsConfig(visibility=v, dark_count_prob=0.0, mean_photon_number=0.1,
                          detector_efficiency=1.0, **NO_LOSS)
    rng = np.random.default_rng(4)
    n = 400_000
    out = measure(np.full(n, math.pi / 2), np.zeros(n), optics, rng)
    det = np.count_nonzero(out != Outcome.NONE)
    assert within_3sigma(np.count_nonzero(out == Outcome.CH1), det, 0.5)


def test_scalar_measure_returns_outcome():
    rng = np.random.default_rng(0)
    assert isinstance(measure(0.0, 0.0, OpticsConfig(), rng), Outcome)


def _record(i, bit, basis, bob, outcome, intensity=SIGNAL):
    return PulseRecord(i, i / 1000, Bb84Symbol(bit, basis), intensity, bob, outcome)


def test_sift_empty():
    assert sift([]).shape == (0, 2)


def test_sift_keeps_matched_detected():
    recs = [
        _record(0, 0, 0, 0, Outcome.CH2),  # kept, bob 0
        _record(1, 1, 0, 1, Outcome.CH1),  # basis mismatch
        _record(2, 1, 1, 1, Outcome.NONE),  # not detected
        _record(3, 1, 1, 1, Outcome.CH2),  # kept, bob 0 -> error
    ]
    pairs = sift(recs)
    assert pairs.tolist() == [[0, 0], [1, 0]]


def test_sift_fraction_uniform_bases():
    rng = np.random.default_rng(5)
    n = 200_000
    rec = Records(
        index=np.arange(n), time=np.arange(n) / 1e3,
        alice_bit=rng.integers(0, 2, n).astype(np.int8), alice_basis=rng.integers(0, 2, n).astype(np.int8),
        intensity=np.zeros(n, np.int8), bob_basis=rng.integers(0, 2, n).astype(np.int8),
        outcome=np.full(n, Outcome.CH2, np.int8), eve_touched=np.zeros(n, bool), double_click=np.zeros(n, bool),
    )
    assert within_3sigma(len(sift(rec)), n, 0.5)
    # simplified setup: Bob fixed to basis 0
    assert within_3sigma(len(sift(rec, fixed_bob_basis=0)), n, 0.5)
    assert np.all(sift(rec, fixed_bob_basis=0)[:, 0] == rec.alice_bit[rec.alice_basis == 0])


def test_estimate_qber_examples():
    assert estimate_qber([(0, 0), (1, 1)]) == QberEstimate(0.0, 0.0, 2, 0)
    pairs = [(0, 0)] * 97 + [(0, 1)] * 3
    e = estimate_qber(pairs)
    assert e.qber == pytest.approx(0.03)
    assert e.std_error == pytest.approx(0.01705872210923198, rel=1e-12)
    assert estimate_qber([(0, 1), (1, 0)]).qber == 1.0
    with pytest.raises(NoDataError):
        estimate_qber([])


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=200))
def test_estimate_qber_invariants(pairs):
    e = estimate_qber(pairs)
    assert e.error_count <= e.sifted_count == len(pairs)
    assert e.qber == e.error_count / e.sifted_count
    assert e.std_error == pytest.approx(math.sqrt(e.qber * (1 - e.qber) / e.sifted_count))


def test_assign_intensity():
    rng = np.random.default_rng(6)
    assert assign_intensity(rng, None) == SIGNAL
    assert assign_intensity(rng, DecoyPlan()) == SIGNAL
    plan = DecoyPlan.from_mapping({"signal": (0.0, 0.8), "decoy": (1.0, 0.1)})
    assert assign_intensity(rng, plan) == IntensityClass("decoy", 0.1)


def test_sample_intensities_frequencies():
    plan = DecoyPlan.from_mapping({"signal": (0.5, 0.8), "decoy": (0.25, 0.1), "vacuum": (0.25, 0.0)})
    n = 1_000_000
    idx = sample_intensities(np.random.default_rng(7), plan, n)
    for i, p in enumerate(plan.probabilities):
        assert within_3sigma(np.count_nonzero(idx == i), n, p)


def test_decoy_plan_validation():
    with pytest.raises(ValueError):
        DecoyPlan.from_mapping({"signal": (0.7, 0.8), "decoy": (0.7, 0.1)})
    with pytest.raises(ValueError):
        IntensityClass("bright", 1.0)


def _simulate_records(plan, optics, n, seed):
    rng = np.random.default_rng(seed)
    cls = sample_intensities(rng, plan, n)
    mu = np.array([c.mean_photon_number for c in plan.classes])[cls]
    bit = rng.integers(0, 2, n)
    basis = rng.integers(0, 2, n)
    phase = (basis + 2 * bit) * math.pi / 2
    bob = np.zeros(n, np.int8)
    out = measure(phase, bob * math.pi / 2, optics, rng, mean_photon_number=mu)
    return Records(np.arange(n), np.arange(n) / 1e3, bit.astype(np.int8), basis.astype(np.int8),
                   cls, bob, out, np.zeros(n, bool), np.zeros(n, bool), classes=plan.classes)


def test_per_intensity_stats():
    plan = DecoyPlan.from_mapping({"signal": (0.5, 0.8), "decoy": (0.3, 0.1), "vacuum": (0.2, 0.0)})
    optics = OpticsConfig(**NO_LOSS)
    rec = _simulate_records(plan, optics, 600_000, 8)
    stats = per_intensity_stats(rec)
    vac = stats["vacuum"]
    assert within_3sigma(vac.detected, vac.sent, 1 - (1 - 5e-5) ** 2)
    sig, dec = stats["signal"], stats["decoy"]
    assert within_3sigma(sig.detected, sig.sent, expected_detection_probability(optics, 0.8))
    assert sig.gain >= dec.gain >= vac.gain
    assert vac.qber is None or vac.qber.sifted_count < 50


def test_single_class_matches_global():
    plan = DecoyPlan()
    rec = _simulate_records(plan, OpticsConfig(**NO_LOSS), 50_000, 9)
    assert per_intensity_stats(rec)["signal"].qber == estimate_qber(sift(rec))


def test_dark_count_only_qber_is_half():
    plan = DecoyPlan.from_mapping({"signal": (1.0, 0.0)})
    optics = OpticsConfig(dark_count_prob=0.01)
    rec = _simulate_records(plan, optics, 400_000, 10)
    e = estimate_qber(sift(rec))
    assert abs(e.qber - 0.5) <= 3 * math.sqrt(0.25 / e.sifted_count)


def test_expected_qber_limits():
    ideal = OpticsConfig(visibility=0.96, dark_count_prob=0.0, mean_photon_number=1e-6)
    assert expected_qber(ideal) == pytest.approx(0.02, rel=1e-5)
    dark = OpticsConfig(mean_photon_number=0.0)
    assert expected_qber(dark) == pytest.approx(0.5)


def test_records_round_trip():
    pulses = [_record(0, 0, 0, 0, Outcome.CH2), _record(1, 1, 1, 0, Outcome.NONE, IntensityClass("decoy", 0.1))]
    rec = Records.from_pulses(pulses)
    assert list(rec) == pulses
    assert rec.take(slice(0, 1)).index.tolist() == [0]


def test_replay_file_round_trip(tmp_path):
    path = tmp_path / "replay.txt"
    write_replay_file(path, [(0, 1), (1, 0)], labels=["signal", "decoy"])
    plan = DecoyPlan.from_mapping({"signal": (0.5, 0.8), "decoy": (0.5, 0.1)})
    rows = read_replay_file(path, plan)
    assert rows.tolist() == [[0, 1, 0], [1, 0, 1]]


@pytest.mark.parametrize("text", ["", "0\n", "2 0\n", "0 0 bright\n", "a b\n"])
def test_replay_file_rejects(tmp_path, text):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ValueError):
        read_replay_file(path)


def test_replay_file_comments(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("# header\n0 0\n\n1 1  # trailing\n")
    assert read_replay_file(path).tolist() == [[0, 0, 0], [1, 1, 0]]
