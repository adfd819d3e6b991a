import dataclasses
import json

import numpy as np
import pytest

from scalesense.config import PipelineConfig, load_config
from scalesense.geometry import FrameLabel, TimedTrajectory, matrix_to_quat, so3_exp
from scalesense.pipeline import (error_statistics, evaluate_trajectories, format_suite_table, run_degenerate_suite,
                                 run_pipeline)
from scalesense.scale import Verdict
from scalesense.sim import ScenarioConfig, ScenarioKind, generate


def straight_trajectory(n=50):
    t = np.arange(n) * 0.4
    p = np.column_stack([np.sin(t), np.cos(t), t])
    q = matrix_to_quat(np.stack([so3_exp([0.1 * k, 0.0, 0.05]) for k in range(n)]))
    return TimedTrajectory(t, p, q, FrameLabel.OBJECT, FrameLabel.WORLD)


def test_error_statistics_identity_and_offset():
    truth = straight_trajectory()
    same = error_statistics(truth, truth)
    np.testing.assert_array_equal(same.position_std, 0.0)
    np.testing.assert_array_equal(same.orientation_std, 0.0)
    shifted = truth.replace_positions(truth.positions + [0.1, 0.0, 0.0])
    st = error_statistics(shifted, truth)
    np.testing.assert_allclose(st.position_std, 0.0, atol=1e-15)
    np.testing.assert_allclose(st.position_mean, [0.1, 0.0, 0.0], atol=1e-15)


def test_error_statistics_noise_concentration():
    rng = np.random.default_rng(0)
    truth = straight_trajectory(1000)
    noisy = truth.replace_positions(truth.positions + np.column_stack([rng.normal(0, 0.05, 1000),
                                                                       np.zeros(1000), np.zeros(1000)]))
    st = error_statistics(noisy, truth)
    assert 0.04 <= st.position_std[0] <= 0.06
    assert st.position_std[1] == 0.0 and st.position_error.shape == (1000, 3)


def test_error_statistics_orientation_yaw():
    truth = straight_trajectory()
    yaw = np.linspace(-0.1, 0.1, len(truth))
    R = np.einsum("nij,njk->nik", truth.rotations, np.stack([so3_exp([0, 0, a]) for a in yaw]))
    est = TimedTrajectory(truth.timestamps, truth.positions, matrix_to_quat(R), FrameLabel.OBJECT, FrameLabel.WORLD)
    st = error_statistics(est, truth)
    np.testing.assert_allclose(st.orientation_error[:, 0], yaw, atol=1e-12)
    np.testing.assert_allclose(st.orientation_std, [yaw.std(), 0.0, 0.0], atol=1e-12)


def test_error_statistics_length_mismatch():
    truth = straight_trajectory()
    with pytest.raises(ValueError, match="samples"):
        error_statistics(truth.slice(0, 10), truth)


def _bypass(kind=ScenarioKind.RICH_MOTION, seed=0, **kw):
    cfg = load_config()
    return dataclasses.replace(cfg, scenario=dataclasses.replace(cfg.scenario, scenario_kind=kind, seed=seed), **kw)


def test_static_camera_has_no_world_trajectory():
    report = run_pipeline(_bypass(ScenarioKind.C2_STATIC_CAMERA))
    assert report.gate_verdict is Verdict.REJECTED_II
    assert not report.observable and report.world_trajectory is None
    d = report.to_dict()
    assert d["outcome"] == "unobservable" and d["s_hat"] is None
    assert "no world trajectory" in report.format_summary()
    with pytest.raises(ValueError):
        report.write_series("unused.csv")


def test_orthogonalized_bypass_is_exact():
    report = run_pipeline(_bypass(seed=3, orthogonalize=True, estimator=dataclasses.replace(
        load_config().estimator, selection="first")))
    assert report.scale_error_rel < 1e-6


def test_truth_fed_as_estimate_gives_zero_std():
    out = generate(ScenarioConfig(seed=1))
    cfg = load_config()
    report = evaluate_trajectories(out.camera_world, out.object_camera_upscale, cfg.estimator, cfg.gate,
                                   out.object_world_truth, out.true_scale)
    st = error_statistics(out.object_world_truth, out.object_world_truth)
    np.testing.assert_array_equal(st.position_std, 0.0)
    assert report.stats.position_error.shape == (len(out.timestamps), 3)
    assert np.all(report.position_std >= 0) and np.all(report.orientation_std >= 0)


def test_pipeline_determinism_and_manifest_consistency(tmp_path):
    cfg = _bypass(seed=5)
    a, b = run_pipeline(cfg), run_pipeline(cfg)
    assert a.to_dict() == b.to_dict()
    assert a.scale_error_rel == abs(a.s_hat - 0.43) / 0.43
    from scalesense.sim import write_scenario
    write_scenario(tmp_path, generate(cfg.scenario))
    true_scale = json.loads((tmp_path / "manifest.json").read_text())["true_scale"]
    assert a.scale_error_rel == pytest.approx(abs(a.s_hat - true_scale) / true_scale, rel=1e-15)
    a.write_series(tmp_path / "series.csv")
    lines = (tmp_path / "series.csv").read_text().splitlines()
    assert len(lines) == 301 and lines[0].startswith("timestamp,err_x")


def test_selection_first_uses_earliest_acceptance():
    first = run_pipeline(_bypass(seed=2, estimator=dataclasses.replace(load_config().estimator, selection="first")))
    accepted = [e for e in first.evaluations if e.accepted]
    assert first.s_hat == accepted[0].s_hat


def test_config_roundtrip_and_overrides():
    cfg = load_config(overrides={"scenario": {"seed": 9}, "mode": "ba"})
    assert cfg.scenario.seed == 9 and cfg.mode == "ba"
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        load_config(overrides={"mode": "nonsense"})


def test_degenerate_suite_single_seed():
    rows = run_degenerate_suite(load_config(), seeds=[0])
    assert all(r.match for r in rows), [(r.kind, r.verdict) for r in rows]
    table = format_suite_table(rows, 0.43)
    assert table.count("\n") == 7 and "1/1" in table
