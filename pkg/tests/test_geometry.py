import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from scalesense.geometry import (OBJECT, WORLD, FrameLabel, FrameMismatchError, Pose, ScaledPose, TimedTrajectory,
                                 camera_frame, compose, matrix_to_quat, quat_to_matrix, read_trajectory,
                                 recover_world_pose, recover_world_trajectory, rot_z, rotate_relative_position,
                                 so3_exp, so3_log, write_trajectory, yaw_pitch_roll)
from scalesense.sim import ScenarioConfig, generate

C = camera_frame()


def random_pose(rng, frm, to, scale=3.0):
    q = rng.normal(size=4)
    return Pose(q, rng.normal(0, scale, 3), frm, to)


def homog(p: Pose) -> np.ndarray:
    # independent oracle: scipy rotation (scalar-last) into a 4x4
    w, x, y, z = p.rotation
    T = np.eye(4)
    T[:3, :3] = Rotation.from_quat([x, y, z, w]).as_matrix()
    T[:3, 3] = p.translation
    return T


def test_quaternion_matrix_matches_scipy():
    rng = np.random.default_rng(0)
    for _ in range(100):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        ref = Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()
        np.testing.assert_allclose(quat_to_matrix(q), ref, atol=1e-14)
        back = matrix_to_quat(ref)
        assert back[0] >= 0
        np.testing.assert_allclose(np.abs(back @ q), 1.0, atol=1e-12)


def test_so3_exp_log_roundtrip():
    rng = np.random.default_rng(1)
    phi = rng.normal(0, 1.0, (200, 3))
    phi = phi[np.linalg.norm(phi, axis=1) < np.pi - 1e-3]
    np.testing.assert_allclose(so3_log(so3_exp(phi)), phi, atol=1e-10)
    ref = Rotation.from_rotvec(phi).as_matrix()
    np.testing.assert_allclose(so3_exp(phi), ref, atol=1e-13)


def test_compose_identity_and_inverse():
    rng = np.random.default_rng(2)
    P = random_pose(rng, C, WORLD)
    same = compose(P, Pose.identity(C, C))
    np.testing.assert_allclose(same.rotation, P.rotation, atol=1e-15)
    np.testing.assert_allclose(same.translation, P.translation, atol=1e-15)
    ident = compose(P, P.inverse())
    np.testing.assert_allclose(ident.matrix, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(ident.translation, 0.0, atol=1e-12)
    assert ident.from_frame == WORLD and ident.to_frame == WORLD


def test_compose_hand_example():
    # R1 R2 = Rz(180); R1 t2 + t1 = Rz(90)(0,1,0) + (1,0,0) = (-1,0,0) + (1,0,0) = (0,0,0)
    a = Pose.from_matrix(rot_z(np.pi / 2), [1, 0, 0], C, WORLD)
    b = Pose.from_matrix(rot_z(np.pi / 2), [0, 1, 0], OBJECT, C)
    ab = compose(a, b)
    np.testing.assert_allclose(ab.matrix, rot_z(np.pi), atol=1e-15)
    np.testing.assert_allclose(ab.translation, [0.0, 0.0, 0.0], atol=1e-15)
    assert ab.from_frame == OBJECT and ab.to_frame == WORLD


def test_compose_matches_homogeneous_product():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = random_pose(rng, C, WORLD)
        b = random_pose(rng, OBJECT, C)
        np.testing.assert_allclose(compose(a, b).homogeneous(), homog(a) @ homog(b), atol=1e-12)


def test_compose_frame_mismatch_names_both_frames():
    rng = np.random.default_rng(4)
    a = random_pose(rng, C, WORLD)
    b = random_pose(rng, C, OBJECT)
    with pytest.raises(FrameMismatchError) as err:
        compose(a, b)
    assert "camera" in str(err.value) and "object" in str(err.value)


def test_quaternion_norm_and_double_inverse():
    rng = np.random.default_rng(5)
    P = random_pose(rng, C, WORLD)
    for _ in range(200):
        P = compose(P, random_pose(rng, C, C).with_frames(C, C))
    assert abs(np.linalg.norm(P.rotation) - 1.0) < 1e-9
    Q = P.inverse().inverse()
    np.testing.assert_allclose(Q.rotation, P.rotation, atol=1e-12)
    np.testing.assert_allclose(Q.translation, P.translation, atol=1e-12)


def test_rotate_relative_position_examples():
    I = Pose.identity(C, WORLD)
    np.testing.assert_allclose(rotate_relative_position(I, [1, 2, 3]), [1, 2, 3])
    Rz = Pose.from_matrix(rot_z(np.pi / 2), [5, 6, 7], C, WORLD)
    np.testing.assert_allclose(rotate_relative_position(Rz, [1, 0, 0]), [0, 1, 0], atol=1e-15)


def test_rotate_relative_position_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(100):
        P = random_pose(rng, C, WORLD)
        p = rng.normal(size=3)
        R = homog(P)[:3, :3]
        expected = [sum(R[i][j] * p[j] for j in range(3)) for i in range(3)]
        np.testing.assert_allclose(rotate_relative_position(P, p), expected, atol=1e-12)


def test_rotate_relative_position_requires_camera_to_world():
    with pytest.raises(FrameMismatchError):
        rotate_relative_position(Pose.identity(OBJECT, C), [1, 0, 0])


def test_recover_world_pose_identity_camera():
    rng = np.random.default_rng(7)
    obj = random_pose(rng, OBJECT, C)
    out = recover_world_pose(Pose.identity(C, WORLD), obj, 1.0)
    np.testing.assert_allclose(out.rotation, obj.rotation, atol=1e-15)
    np.testing.assert_allclose(out.translation, obj.translation, atol=1e-15)
    assert out.from_frame == OBJECT and out.to_frame == WORLD


def test_recover_world_pose_round_trip():
    rng = np.random.default_rng(8)
    for _ in range(100):
        cam = random_pose(rng, C, WORLD)
        p_o = rng.normal(0, 3, 3)
        s = rng.uniform(0.1, 5)
        p_bar = cam.matrix.T @ (p_o - cam.translation) / s
        obj = Pose(rng.normal(size=4), p_bar, OBJECT, C)
        np.testing.assert_allclose(recover_world_pose(cam, obj, s).translation, p_o, atol=1e-10)


def test_recover_world_pose_matches_simulator_truth():
    out = generate(ScenarioConfig(seed=11))
    for k in range(0, len(out.timestamps), 17):
        world = recover_world_pose(out.camera_world_truth[k], out.object_camera_upscale[k], 0.43)
        truth = out.object_world_truth[k]
        np.testing.assert_allclose(world.translation, truth.translation, atol=1e-10)
        np.testing.assert_allclose(world.matrix, truth.matrix, atol=1e-10)


def test_recover_world_pose_errors():
    cam = Pose.identity(C, WORLD)
    obj = Pose.identity(OBJECT, C)
    for s in (0.0, -1.0):
        with pytest.raises(ValueError):
            recover_world_pose(cam, obj, s)
    with pytest.raises(FrameMismatchError):
        recover_world_pose(cam, Pose.identity(OBJECT, WORLD), 1.0)
    with pytest.raises(FrameMismatchError):
        recover_world_pose(Pose.identity(camera_frame(1), WORLD), Pose.identity(OBJECT, camera_frame(2)), 1.0)
    with pytest.raises(ValueError):
        ScaledPose(cam, 0.0)


def test_world_equivariance_and_reciprocity():
    rng = np.random.default_rng(9)
    for _ in range(100):
        cam = random_pose(rng, C, WORLD)
        obj = random_pose(rng, OBJECT, C)
        G = random_pose(rng, WORLD, WORLD)
        s = rng.uniform(0.1, 3)
        lhs = recover_world_pose(compose(G, cam), obj, s)
        rhs = compose(G, recover_world_pose(cam, obj, s))
        np.testing.assert_allclose(lhs.homogeneous(), rhs.homogeneous(), atol=1e-10)
        k = rng.uniform(0.1, 10)
        scaled = Pose(obj.rotation, obj.translation * k, OBJECT, C)
        np.testing.assert_allclose(recover_world_pose(cam, scaled, s / k).translation,
                                   recover_world_pose(cam, obj, s).translation, atol=1e-10)


def test_trajectory_requires_increasing_timestamps():
    with pytest.raises(ValueError, match="strictly increasing"):
        TimedTrajectory([0.0, 1.0, 1.0], np.zeros((3, 3)), np.tile([1.0, 0, 0, 0], (3, 1)),
                        FrameLabel.CAMERA, FrameLabel.WORLD)


def test_trajectory_from_poses_rejects_mixed_frames():
    with pytest.raises(FrameMismatchError):
        TimedTrajectory.from_poses([0.0, 1.0], [Pose.identity(C, WORLD), Pose.identity(OBJECT, WORLD)])


def test_trajectory_file_round_trip(tmp_path):
    out = generate(ScenarioConfig(seed=2))
    path = tmp_path / "cam.csv"
    write_trajectory(path, out.camera_world)
    assert path.read_text().splitlines()[0] == "# timestamp tx ty tz qw qx qy qz"
    back = read_trajectory(path, FrameLabel.CAMERA, FrameLabel.WORLD)
    np.testing.assert_array_equal(back.timestamps, out.camera_world.timestamps)
    np.testing.assert_array_equal(back.positions, out.camera_world.positions)
    np.testing.assert_allclose(back.quaternions, out.camera_world.quaternions, atol=1e-15)


def test_trajectory_reader_accepts_commas(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("# timestamp tx ty tz qw qx qy qz\n0.0,1,2,3,1,0,0,0\n0.5, 4, 5, 6, 1, 0, 0, 0\n")
    traj = read_trajectory(path, FrameLabel.OBJECT, FrameLabel.CAMERA)
    np.testing.assert_array_equal(traj.positions, [[1, 2, 3], [4, 5, 6]])


def test_recover_world_trajectory_matches_posewise():
    out = generate(ScenarioConfig(seed=4))
    traj = recover_world_trajectory(out.camera_world, out.object_camera_upscale, 0.43)
    np.testing.assert_allclose(traj.positions, out.object_world_truth.positions, atol=1e-10)
    k = 50
    single = recover_world_pose(out.camera_world[k], out.object_camera_upscale[k], 0.43)
    np.testing.assert_allclose(traj.positions[k], single.translation, atol=1e-15)


def test_yaw_pitch_roll_composition():
    rng = np.random.default_rng(10)
    for _ in range(50):
        y, p, r = rng.uniform(-1.5, 1.5, 3)
        R = Rotation.from_euler("ZYX", [y, p, r]).as_matrix()
        np.testing.assert_allclose(yaw_pitch_roll(R), [y, p, r], atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_composition_associativity_property(seed):
    rng = np.random.default_rng(seed)
    a = random_pose(rng, C, WORLD)
    b = random_pose(rng, OBJECT, C)
    c = random_pose(rng, camera_frame(3), OBJECT)
    lhs = compose(a, compose(b, c))
    rhs = compose(compose(a, b), c)
    np.testing.assert_allclose(lhs.homogeneous(), rhs.homogeneous(), atol=1e-10)
