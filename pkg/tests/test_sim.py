import math
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sagnac_qkd.optics import ConfigError, ModulatorConfig, OpticsConfig
from sagnac_qkd.protocol import DecoyPlan, estimate_qber, expected_detection_probability, expected_qber, sift
from sagnac_qkd.sim import (
    BLOCK_SIZE,
    AttackConfig,
    DriftConfig,
    DriftState,
    SimConfig,
    alice_phase_table,
    drift_step,
    iter_records,
    run_protocol,
    summarize,
)

NO_DRIFT = DriftConfig(enabled=False)


def within_3sigma(est, truth):
    sigma = math.sqrt(truth * (1 - truth) / est.sifted_count)
    return abs(est.qber - truth) <= 3 * sigma


def test_drift_without_noise_or_ramp_stays_put():
    rng = np.random.default_rng(0)
    s = DriftState()
    for _ in range(100):
        s = drift_step(s, 1e-3, rng, DriftConfig(sigma=0.0, ramp=0.0))
    assert s.phase_offset == 0.0
    assert s.elapsed == pytest.approx(0.1)


def test_drift_variance():
    rng = np.random.default_rng(1)
    drift = DriftConfig(sigma=0.01, ramp=0.0)
    finals = []
    for _ in range(2000):
        s = DriftState()
        for _ in range(10):
            s = drift_step(s, 0.1, rng, drift)
        finals.append(s.phase_offset)
    var = np.var(finals)
    # sample variance of 2000 normals is within ~10% of the truth with high probability
    assert var == pytest.approx(0.01**2 * 1.0, rel=0.15)


def test_drift_ramp_is_deterministic():
    s = drift_step(DriftState(), 10.0, np.random.default_rng(2), DriftConfig(sigma=0.0, ramp=0.5))
    assert s.phase_offset == pytest.approx(5.0)
    with pytest.raises(ValueError):
        drift_step(DriftState(), 0.0, np.random.default_rng(2), DriftConfig())


def test_drift_config_validation():
    with pytest.raises(ConfigError) as exc:
        DriftConfig(sigma=-1.0)
    assert exc.value.key == "drift.sigma"


def test_alice_phase_table_is_bb84():
    table = alice_phase_table(ModulatorConfig())
    assert np.allclose(table, [0, math.pi / 2, math.pi, 1.5 * math.pi], atol=0.01 * math.pi)


@pytest.mark.parametrize("bad, key", [
    (dict(pulses=0), "pulses"),
    (dict(mode="half"), "mode"),
    (dict(pulses=10, qber_window=20), "qber_window"),
    (dict(workers=0), "workers"),
])
def test_sim_config_validation(bad, key):
    with pytest.raises(ConfigError) as exc:
        SimConfig(**bad)
    assert exc.value.key == key


def test_default_window_clamps_to_pulses():
    assert SimConfig(pulses=500).qber_window == 500
    assert SimConfig(pulses=10**6).qber_window == 10_000


def test_attack_with_paired_aoms_rejected():
    cfg = SimConfig(pulses=100, modulator=ModulatorConfig(paired_aoms=True), attack=AttackConfig(delta=0.3))
    with pytest.raises(ConfigError, match="inapplicable"):
        run_protocol(cfg)


def test_workers_do_not_change_results():
    base = dict(pulses=3 * BLOCK_SIZE + 123, mode="full", master_seed=99)
    r1, s1 = run_protocol(SimConfig(workers=1, **base))
    r4, s4 = run_protocol(SimConfig(workers=4, **base))
    for name in ("alice_bit", "alice_basis", "bob_basis", "outcome", "double_click"):
        assert np.array_equal(getattr(r1, name), getattr(r4, name))
    assert s1.to_dict() == s4.to_dict()


def test_seed_changes_results():
    a, _ = run_protocol(SimConfig(pulses=5000, master_seed=1))
    b, _ = run_protocol(SimConfig(pulses=5000, master_seed=2))
    assert not np.array_equal(a.alice_bit, b.alice_bit)


def test_streaming_matches_batch():
    cfg = SimConfig(pulses=2 * BLOCK_SIZE + 7, master_seed=5)
    parts = list(iter_records(cfg))
    assert [len(p) for p in parts] == [BLOCK_SIZE, BLOCK_SIZE, 7]
    rec, summary = run_protocol(cfg)
    assert np.array_equal(np.concatenate([p.outcome for p in parts]), rec.outcome)
    assert np.array_equal(rec.index, np.arange(cfg.pulses))
    _, lean = run_protocol(cfg, keep_records=False)
    assert lean.to_dict() == summary.to_dict()


def test_drift_is_continuous_across_blocks():
    # huge sigma makes any reset of the walk at a block edge visible
    cfg = SimConfig(pulses=2 * BLOCK_SIZE, drift=DriftConfig(sigma=1.0, ramp=0.0))
    from sagnac_qkd.sim import _Engine

    eng = _Engine(cfg)
    edge = BLOCK_SIZE
    left = eng.drift_offsets(0, np.arange(edge))
    right = eng.drift_offsets(1, np.arange(edge, 2 * edge))
    step = right[0] - left[-1]
    assert abs(step) < 6 * math.sqrt(eng.dt)
    assert abs(right[0]) > 0


@pytest.mark.filterwarnings("ignore:no sifted bits")
@settings(max_examples=15, deadline=None)
@given(st.integers(1, 5000), st.integers(1, 5000))
def test_windows_partition_the_run(pulses, window):
    window = min(window, pulses)
    cfg = SimConfig(pulses=pulses, qber_window=window, optics=OpticsConfig(mean_photon_number=50.0))
    _, s = run_protocol(cfg)
    assert len(s.series) == -(-pulses // window)
    assert s.series[0].start_index == 0 and s.series[-1].stop_index == pulses
    sifted = sum(p.estimate.sifted_count for p in s.series if p.estimate)
    errors = sum(p.estimate.error_count for p in s.series if p.estimate)
    assert sifted == s.total_sifted
    if s.overall:
        assert errors == s.overall.error_count


def test_single_window_equals_overall():
    rec, s = run_protocol(SimConfig(pulses=20_000, qber_window=20_000))
    assert len(s.series) == 1
    assert s.series[0].estimate == s.overall == estimate_qber(sift(rec))
    assert summarize(rec, 20_000).to_dict() == s.to_dict()


def test_vacuum_run_has_qber_half():
    optics = OpticsConfig(mean_photon_number=0.0, dark_count_prob=0.01)
    _, s = run_protocol(SimConfig(pulses=200_000, optics=optics))
    assert within_3sigma(s.overall, 0.5)


def test_no_detections_warns():
    optics = OpticsConfig(mean_photon_number=0.0, dark_count_prob=0.0)
    with pytest.warns(RuntimeWarning, match="no detections"):
        _, s = run_protocol(SimConfig(pulses=1000, optics=optics))
    assert s.overall is None


@pytest.mark.parametrize("visibility", [0.9, 0.96, 0.99])
def test_qber_tracks_closed_form(visibility):
    optics = OpticsConfig(visibility=visibility, loop_length=0.0)
    _, s = run_protocol(SimConfig(pulses=300_000, optics=optics, drift=NO_DRIFT, master_seed=3))
    assert within_3sigma(s.overall, expected_qber(optics))


def test_detection_and_sift_counts():
    optics = OpticsConfig()
    cfg = SimConfig(pulses=500_000, mode="full", optics=optics, drift=NO_DRIFT, master_seed=4)
    _, s = run_protocol(cfg, keep_records=False)
    p = expected_detection_probability(optics)
    n = cfg.pulses
    assert abs(s.total_detected - n * p) <= 3 * math.sqrt(n * p * (1 - p))
    ps = p / 2
    assert abs(s.total_sifted - n * ps) <= 3 * math.sqrt(n * ps * (1 - ps))


def test_decoy_classes_reported():
    plan = DecoyPlan.from_mapping({"signal": (0.6, 0.8), "decoy": (0.3, 0.1), "vacuum": (0.1, 0.0)})
    _, s = run_protocol(SimConfig(pulses=100_000, decoy_plan=plan, optics=OpticsConfig(loop_length=0.0)))
    assert set(s.per_intensity) == {"signal", "decoy", "vacuum"}
    assert sum(v.sent for v in s.per_intensity.values()) == 100_000
    assert s.per_intensity["signal"].gain > s.per_intensity["decoy"].gain > s.per_intensity["vacuum"].gain


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_replay_file_drives_alice(tmp_path):
    path = tmp_path / "bits.txt"
    path.write_text("1 0\n0 1\n")
    rec, _ = run_protocol(SimConfig(pulses=10, replay_file=str(path)))
    assert rec.alice_bit.tolist() == [1, 0] * 5
    assert rec.alice_basis.tolist() == [0, 1] * 5
