import json

import numpy as np
import pytest

from scalesense.motion import build_samples, finite_difference
from scalesense.scale import closed_form_scale, sample_covariance
from scalesense.sim import (NoiseConfig, ScenarioConfig, ScenarioKind, generate, look_at,
                            orthogonalize_object_motion, project_points, read_tracks, write_scenario)


def test_determinism():
    cfg = ScenarioConfig(seed=21, noise=NoiseConfig(observation=0.001, pose_position=0.001))
    a, b = generate(cfg), generate(cfg)
    for name in ("camera_world", "camera_world_truth", "object_world_truth", "object_camera_upscale"):
        np.testing.assert_array_equal(getattr(a, name).positions, getattr(b, name).positions)
        np.testing.assert_array_equal(getattr(a, name).quaternions, getattr(b, name).quaternions)
    np.testing.assert_array_equal(a.feature_tracks.uv, b.feature_tracks.uv)


def test_config_needs_enough_samples():
    with pytest.raises(ValueError, match="frames"):
        ScenarioConfig(duration=10.0, rate=2.5)
    with pytest.raises(ValueError):
        ScenarioConfig(true_scale=0.0)


@pytest.mark.parametrize("kind", list(ScenarioKind)[:5])
def test_compound_motion_identity(kind):
    out = generate(ScenarioConfig(scenario_kind=kind, seed=3))
    R_c = out.camera_world_truth.rotations
    lhs = out.true_scale * np.einsum("nij,nj->ni", R_c, out.object_camera_upscale.positions) \
        + out.camera_world_truth.positions
    np.testing.assert_allclose(lhs, out.object_world_truth.positions, atol=1e-12)
    p_bar = np.einsum("nji,nj->ni", R_c, out.object_world_truth.positions - out.camera_world_truth.positions) / 0.43
    np.testing.assert_allclose(out.object_camera_upscale.positions, p_bar, atol=1e-12)


def test_static_camera_has_zero_motion():
    out = generate(ScenarioConfig(scenario_kind=ScenarioKind.C2_STATIC_CAMERA, seed=1))
    p = out.camera_world.positions
    np.testing.assert_array_equal(p, np.broadcast_to(p[0], p.shape))
    samples = build_samples(out.camera_world, out.object_camera_upscale)
    np.testing.assert_array_equal([s.m_c for s in samples], 0.0)


def test_static_relative_observation():
    out = generate(ScenarioConfig(scenario_kind=ScenarioKind.C4_STATIC_RELATIVE_OBSERVATION, seed=1))
    p = out.object_camera_upscale.positions
    np.testing.assert_allclose(p, np.broadcast_to(p[0], p.shape), atol=1e-12)
    q = out.object_camera_upscale.quaternions
    np.testing.assert_allclose(q, np.broadcast_to(q[0], q.shape), atol=1e-12)


def test_constant_velocity_camera_has_zero_velocity_variance():
    out = generate(ScenarioConfig(scenario_kind=ScenarioKind.C3_CONSTANT_VELOCITY_CAMERA, seed=1))
    _, v = finite_difference(out.timestamps, out.camera_world.positions, 1)
    np.testing.assert_allclose(v.var(axis=0), 0.0, atol=1e-12)
    assert np.linalg.norm(v[0]) > 0


def test_mimic_camera_follows_object():
    out = generate(ScenarioConfig(scenario_kind=ScenarioKind.C1_MIMIC_TRANSLATION, seed=1))
    d = out.camera_world.positions - out.object_world_truth.positions
    dev = d - np.array([0.0, -5.0, 0.0])
    # the residual follower motion lies along one fixed direction
    u = np.ones(3) / np.sqrt(3)
    np.testing.assert_allclose(dev - np.outer(dev @ u, u), 0.0, atol=1e-12)


def test_rich_motion_frequency_gap():
    from scalesense import sim
    cfg = ScenarioConfig(seed=0)
    rng = np.random.default_rng(0)
    cam = sim._sinusoid_table(rng, cfg)
    obj = sim._sinusoid_table(rng, cfg, avoid=cam[..., 1])
    gaps = np.abs(obj[..., 1].reshape(-1, 1) - cam[..., 1].reshape(1, -1))
    assert gaps.min() >= 0.05
    assert np.all((cam[..., 0] >= 0.5) & (cam[..., 0] <= 2.0))
    assert np.all((cam[..., 1] >= 0.1) & (cam[..., 1] <= 1.0))


def test_orthogonalization_postconditions():
    out = generate(ScenarioConfig(seed=7))
    orth = orthogonalize_object_motion(out)
    np.testing.assert_array_equal(orth.camera_world.positions, out.camera_world.positions)
    np.testing.assert_array_equal(orth.camera_world_truth.quaternions, out.camera_world_truth.quaternions)
    samples = build_samples(orth.camera_world, orth.object_camera_upscale, 1, orth.object_world_truth)[:200]
    m_c = np.array([s.m_c for s in samples])
    m_o = np.array([s.m_o_truth for s in samples])
    m_d = np.array([s.m_d for s in samples])
    np.testing.assert_allclose(sample_covariance(m_o, m_c), 0.0, atol=1e-10)
    s_hat = closed_form_scale(sample_covariance(m_d, m_c), sample_covariance(m_c, m_c))
    assert abs(s_hat - 0.43) / 0.43 < 1e-9
    # motion after the window is untouched
    later = build_samples(out.camera_world, out.object_camera_upscale, 1, out.object_world_truth)[201:]
    later_o = build_samples(orth.camera_world, orth.object_camera_upscale, 1, orth.object_world_truth)[201:]
    np.testing.assert_allclose([s.m_o_truth for s in later_o], [s.m_o_truth for s in later], atol=1e-10)


def test_orthogonalization_second_order():
    out = generate(ScenarioConfig(seed=8))
    orth = orthogonalize_object_motion(out, order=2)
    samples = build_samples(orth.camera_world, orth.object_camera_upscale, 2, orth.object_world_truth)[:200]
    m_c = np.array([s.m_c for s in samples])
    m_o = np.array([s.m_o_truth for s in samples])
    np.testing.assert_allclose(sample_covariance(m_o, m_c), 0.0, atol=1e-9)


def test_orthogonalization_rejects_degenerate_camera():
    out = generate(ScenarioConfig(seed=0))
    with pytest.raises(ValueError):
        orthogonalize_object_motion(generate(ScenarioConfig(scenario_kind=ScenarioKind.C2_STATIC_CAMERA)))
    static = ScenarioConfig(scenario_kind=ScenarioKind.CUSTOM, custom_camera=np.zeros((3, 1, 3)).tolist(),
                            custom_object=[[[1.0, 0.3, 0.0]]] * 3)
    with pytest.raises(ValueError, match="rank"):
        orthogonalize_object_motion(generate(static))
    assert out is not None


def test_optical_axis_projects_to_centre():
    uv, vis = project_points(np.array([[0.0, 0.0, 4.0], [0.0, 0.0, -1.0]]))
    np.testing.assert_array_equal(uv[0], [0.0, 0.0])
    assert vis.tolist() == [True, False]
    R = look_at(np.array([[0.0, -5.0, 0.0]]), np.zeros((1, 3)))[0]
    np.testing.assert_allclose(R.T @ (np.zeros(3) - [0, -5, 0]), [0, 0, 5], atol=1e-15)
    np.testing.assert_allclose(np.linalg.det(R), 1.0)


def test_feature_tracks_visibility_and_warnings():
    out = generate(ScenarioConfig(seed=2))
    tr = out.feature_tracks
    counts = np.bincount(tr.frame_indices, minlength=tr.num_frames)
    assert counts.min() >= 8 and counts.max() <= 50
    assert np.all(np.abs(tr.uv) <= 1.0)
    narrow = generate(ScenarioConfig(seed=2, fov_degrees=0.5))
    assert narrow.warnings and "visible features" in narrow.warnings[0]


def test_tracks_reproject_exactly():
    out = generate(ScenarioConfig(seed=9))
    tr = out.feature_tracks
    for k in (0, 100, 299):
        Rc, pc = out.camera_world_truth.rotations[k], out.camera_world_truth.positions[k]
        Ro, po = out.object_world_truth.rotations[k], out.object_world_truth.positions[k]
        for fid, uv in tr.frame(k).items():
            P = Rc.T @ (Ro @ tr.points_object[fid] + po - pc)
            np.testing.assert_allclose(uv, P[:2] / P[2], atol=1e-14)


def test_write_scenario(tmp_path):
    out = generate(ScenarioConfig(seed=4, noise=NoiseConfig(observation=0.001)))
    write_scenario(tmp_path, out)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["true_scale"] == 0.43 and manifest["config"]["scenario_kind"] == "RichMotion"
    assert (tmp_path / "tracks.csv").read_text().startswith("feature_id,frame_index,u,v\n")
    back = read_tracks(tmp_path / "tracks.csv")
    np.testing.assert_array_equal(back.uv, out.feature_tracks.uv)
    np.testing.assert_array_equal(back.timestamps, out.timestamps)
    np.testing.assert_array_equal(back.region_centers, out.feature_tracks.region_centers)
