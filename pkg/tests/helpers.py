"""Shared test builders: ground-truth BA windows and their perturbations."""

import numpy as np

from scalesense import ba
from scalesense.geometry import matrix_to_quat, quat_to_matrix, so3_exp
from scalesense.sim import NoiseConfig, ScenarioConfig, generate


def truth_window(seed: int, num_frames: int = 20, start: int = 0, observation_noise: float = 0.0,
                 num_features: int = 50):
    """Metric camera-in-object window built from simulator truth, plus the scenario."""
    out = generate(ScenarioConfig(seed=seed, num_features=num_features,
                                  noise=NoiseConfig(observation=observation_noise)))
    sl = slice(start, start + num_frames)
    Rc, pc = out.camera_world_truth.rotations[sl], out.camera_world_truth.positions[sl]
    Ro, po = out.object_world_truth.rotations[sl], out.object_world_truth.positions[sl]
    R = np.einsum("nji,njk->nik", Ro, Rc)
    t = np.einsum("nji,nj->ni", Ro, pc - po)
    tracks = out.feature_tracks
    points = {i: tracks.points_object[i] for i in range(len(tracks.points_object))}
    obs = tracks.by_frame()[sl]
    window = ba.window_from_points(R, t, points, obs, capacity=num_frames)
    return window, out


def perturb_poses(window, rng, angle=0.05, distance=0.05):
    """Rotate every non-first pose by ``angle`` about a random axis and shift it by ``distance``."""
    q = window.quaternions.copy()
    t = window.translations.copy()
    for k in range(1, window.size):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        q[k] = matrix_to_quat(quat_to_matrix(q[k]) @ so3_exp(angle * axis))
        t[k] = t[k] + distance * d
    return window.replace(quaternions=q, translations=t)


def gauge_align(estimate, reference):
    """Rescale ``estimate`` about camera 0 so its mean camera-0 depth matches ``reference``."""
    k = reference.mean_depth(0) / estimate.mean_depth(0)
    t = estimate.translations[0] + k * (estimate.translations - estimate.translations[0])
    feats = tuple(f.__class__(f.feature_id, f.anchor_frame_index, f.observations, f.inverse_depth / k,
                              f.anchor_bearing) for f in estimate.features)
    return estimate.replace(translations=t, features=feats)


def pose_rmse(a, b) -> float:
    """RMS of translation differences and rotation angle differences over all states."""
    dt = a.translations - b.translations
    dR = np.einsum("nji,njk->nik", a.rotations, b.rotations)
    ang = np.arccos(np.clip((np.trace(dR, axis1=1, axis2=2) - 1) / 2, -1, 1))
    return float(np.sqrt((np.sum(dt**2) + np.sum(ang**2)) / (4 * a.size)))


def finite_difference_jacobian(window, step=1e-6):
    P = ba.jacobian(window).shape[1]
    cols = []
    for c in range(P):
        d = np.zeros(P)
        d[c] = step
        cols.append((ba.residual_vector(ba.retract(window, d)) - ba.residual_vector(ba.retract(window, -d)))
                    / (2 * step))
    return np.column_stack(cols)
