"""Sliding-window region bundle adjustment with inverse-depth features.

State
-----
Each window state ``k`` is the pose of camera ``k`` in the object frame,
``(R_k, t_k)`` with ``X_object = R_k @ X_camera + t_k``.  A feature is anchored
in the first window frame that observes it: its point is ``b / mu`` in the
anchor camera, where ``b = (u, v, 1)`` is the anchor observation and ``mu`` the
inverse depth.

Gauge
-----
The first window pose is held fixed and the mean z-depth of all features in
camera 0 is held at its value on entry to :func:`optimize_window` (1 right
after :func:`initialize_object_frame`).  After every accepted step the window
is rescaled about the camera-0 centre to restore that depth, so the solver
never wanders along the unobservable scale direction.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import (FrameLabel, TimedTrajectory, matrix_to_quat, quat_from_axis_angle, quat_multiply,
                       quat_normalize, quat_to_matrix, skew)

log = logging.getLogger(__name__)

MIN_DEPTH = 1e-6
MU_MIN, MU_MAX = 1e-4, 1e4
INITIAL_DAMPING = 1e-4
MIN_DAMPING = 1e-10
MAX_DAMPING = 1e10
ABS_COST_FLOOR = 1e-25


class BaSingularError(np.linalg.LinAlgError):
    """Normal equations stayed singular after damping escalation."""

    def __init__(self, message: str, condition: float, damping: float, size: int):
        self.condition = condition
        self.damping = damping
        self.size = size
        super().__init__(f"{message} (cond={condition:.3e}, damping={damping:.1e}, unknowns={size})")


@dataclass(frozen=True)
class FeatureTrack:
    feature_id: int
    anchor_frame_index: int
    observations: Tuple[Tuple[int, float, float], ...]
    inverse_depth: float
    # Normalized anchor ray when it differs from the anchor observation (set on re-anchoring).
    anchor_bearing: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        obs = tuple(sorted((int(k), float(u), float(v)) for k, u, v in self.observations))
        frames = [o[0] for o in obs]
        if len(set(frames)) != len(frames):
            raise ValueError(f"feature {self.feature_id}: duplicate observation frames")
        if self.anchor_frame_index not in frames:
            raise ValueError(f"feature {self.feature_id}: anchor frame {self.anchor_frame_index} not observed")
        if not (self.inverse_depth > 0 and math.isfinite(self.inverse_depth)):
            raise ValueError(f"feature {self.feature_id}: inverse depth must be positive")
        object.__setattr__(self, "observations", obs)

    @property
    def frames(self) -> Tuple[int, ...]:
        return tuple(o[0] for o in self.observations)

    def observation(self, frame_index: int) -> Optional[np.ndarray]:
        for k, u, v in self.observations:
            if k == frame_index:
                return np.array([u, v])
        return None

    @property
    def bearing(self) -> np.ndarray:
        if self.anchor_bearing is not None:
            u, v = self.anchor_bearing
        else:
            u, v = self.observation(self.anchor_frame_index)
        return np.array([u, v, 1.0])


@dataclass(frozen=True)
class SlidingWindow:
    """Camera-in-object poses and the features they observe."""

    quaternions: np.ndarray                 # (N, 4) camera k -> object
    translations: np.ndarray                # (N, 3)
    features: Tuple[FeatureTrack, ...] = ()
    capacity: int = 20
    frame_ids: Optional[Tuple[int, ...]] = None
    timestamps: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        q = quat_normalize(np.asarray(self.quaternions, dtype=float).reshape(-1, 4))
        t = np.asarray(self.translations, dtype=float).reshape(-1, 3)
        if len(q) != len(t):
            raise ValueError("rotation and translation counts differ")
        if not 0 < len(q) <= self.capacity:
            raise ValueError(f"window holds {len(q)} states, capacity {self.capacity}")
        object.__setattr__(self, "quaternions", q)
        object.__setattr__(self, "translations", t)
        object.__setattr__(self, "features", tuple(self.features))
        ids = tuple(range(len(q))) if self.frame_ids is None else tuple(int(i) for i in self.frame_ids)
        ts = tuple(float(i) for i in ids) if self.timestamps is None else tuple(float(x) for x in self.timestamps)
        if len(ids) != len(q) or len(ts) != len(q):
            raise ValueError("frame_ids/timestamps length mismatch")
        object.__setattr__(self, "frame_ids", ids)
        object.__setattr__(self, "timestamps", ts)
        for f in self.features:
            if f.frames[-1] >= len(q) or f.frames[0] < 0:
                raise ValueError(f"feature {f.feature_id} observed outside the window")

    @property
    def size(self) -> int:
        return len(self.quaternions)

    @property
    def full(self) -> bool:
        return self.size == self.capacity

    @property
    def rotations(self) -> np.ndarray:
        return quat_to_matrix(self.quaternions)

    def replace(self, **kw) -> "SlidingWindow":
        return dataclasses.replace(self, **kw)

    def feature_ids(self) -> List[int]:
        return [f.feature_id for f in self.features]

    def points_object(self) -> np.ndarray:
        """Feature positions in the object frame, ``(M, 3)``."""
        if not self.features:
            return np.zeros((0, 3))
        R = self.rotations
        a = np.array([f.anchor_frame_index for f in self.features])
        b = np.array([f.bearing for f in self.features])
        mu = np.array([f.inverse_depth for f in self.features])
        return np.einsum("mij,mj->mi", R[a], b / mu[:, None]) + self.translations[a]

    def points_in_camera(self, k: int) -> np.ndarray:
        R = self.rotations[k]
        return (self.points_object() - self.translations[k]) @ R

    def mean_depth(self, k: int = 0) -> float:
        if not self.features:
            raise ValueError("window has no features")
        return float(np.mean(self.points_in_camera(k)[:, 2]))

    def object_in_camera(self) -> Tuple[np.ndarray, np.ndarray]:
        """Inverse of the states: ``(R_o^c, p_o^c)`` per frame."""
        RT = np.transpose(self.rotations, (0, 2, 1))
        return RT, -np.einsum("nij,nj->ni", RT, self.translations)


@dataclass(frozen=True)
class BaReport:
    iterations: int
    initial_cost: float
    final_cost: float
    converged: bool
    accepted_steps: int = 0
    damping: float = INITIAL_DAMPING
    invalid_residuals: int = 0


# ---------------------------------------------------------------------------
# residuals and Jacobians

def project(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    return P[..., :2] / P[..., 2:3]


def reprojection_residual(window: SlidingWindow, feature: FeatureTrack, target_frame: int) -> np.ndarray:
    """Predicted minus observed normalized coordinates; NaN when the point is not in front of the target."""
    z = feature.observation(target_frame)
    if z is None:
        raise ValueError(f"feature {feature.feature_id} is not observed in frame {target_frame}")
    if target_frame == feature.anchor_frame_index:
        return np.zeros(2)
    R = window.rotations
    Pa = feature.bearing / feature.inverse_depth
    X = R[feature.anchor_frame_index] @ Pa + window.translations[feature.anchor_frame_index]
    Pj = R[target_frame].T @ (X - window.translations[target_frame])
    if Pj[2] <= MIN_DEPTH:
        return np.full(2, np.nan)
    return Pj[:2] / Pj[2] - z


@dataclass(frozen=True)
class _ObsIndex:
    feature: np.ndarray   # (K,) feature position in window.features
    anchor: np.ndarray
    target: np.ndarray
    bearing: np.ndarray   # (K, 3)
    z: np.ndarray         # (K, 2)


def _index(window: SlidingWindow) -> _ObsIndex:
    f, a, j, b, z = [], [], [], [], []
    for m, feat in enumerate(window.features):
        bear = feat.bearing
        for k, u, v in feat.observations:
            if k == feat.anchor_frame_index:
                continue
            f.append(m)
            a.append(feat.anchor_frame_index)
            j.append(k)
            b.append(bear)
            z.append((u, v))
    return _ObsIndex(np.array(f, dtype=int), np.array(a, dtype=int), np.array(j, dtype=int),
                     np.array(b, dtype=float).reshape(-1, 3), np.array(z, dtype=float).reshape(-1, 2))


def _predict(R, t, mu, idx: _ObsIndex):
    Pa = idx.bearing / mu[idx.feature][:, None]
    Ra, Rj = R[idx.anchor], R[idx.target]
    X = np.einsum("kij,kj->ki", Ra, Pa) + t[idx.anchor]
    Pj = np.einsum("kji,kj->ki", Rj, X - t[idx.target])
    return Pa, Pj


def _residuals(R, t, mu, idx: _ObsIndex):
    _, Pj = _predict(R, t, mu, idx)
    valid = Pj[:, 2] > MIN_DEPTH
    safe = np.where(valid, Pj[:, 2], 1.0)
    r = Pj[:, :2] / safe[:, None] - idx.z
    r[~valid] = np.nan
    return r, valid


def _cost(r, valid) -> float:
    return float(np.sum(r[valid] ** 2))


def _jacobian(R, t, mu, idx: _ObsIndex, valid, num_states: int) -> np.ndarray:
    """Dense Jacobian of the stacked residuals; frame 0 is held fixed.

    Columns: ``[dtheta_k, dt_k]`` for k = 1..N-1, then one inverse depth per feature.
    """
    K = len(idx.feature)
    n_pose = 6 * (num_states - 1)
    J = np.zeros((2 * K, n_pose + len(mu)))
    if K == 0:
        return J
    Pa, Pj = _predict(R, t, mu, idx)
    x, y, z = Pj[:, 0], Pj[:, 1], np.where(valid, Pj[:, 2], 1.0)
    dpi = np.zeros((K, 2, 3))
    dpi[:, 0, 0] = 1.0 / z
    dpi[:, 1, 1] = 1.0 / z
    dpi[:, 0, 2] = -x / z**2
    dpi[:, 1, 2] = -y / z**2
    Ra, Rj = R[idx.anchor], R[idx.target]
    RjT = np.transpose(Rj, (0, 2, 1))
    RjT_Ra = RjT @ Ra

    blocks_j = np.concatenate([dpi @ skew(Pj), -dpi @ RjT], axis=2)
    blocks_a = np.concatenate([-dpi @ RjT_Ra @ skew(Pa), dpi @ RjT], axis=2)
    b = idx.bearing
    m = mu[idx.feature]
    d_mu = np.einsum("kij,kj->ki", dpi @ RjT_Ra, -b / (m**2)[:, None])

    rows = 2 * np.arange(K)[:, None] + np.arange(2)[None, :]        # (K, 2)
    for frames, blocks in ((idx.target, blocks_j), (idx.anchor, blocks_a)):
        sel = frames > 0
        cols = 6 * (frames[sel] - 1)[:, None] + np.arange(6)[None, :]
        J[rows[sel][:, :, None], cols[:, None, :]] = blocks[sel]
    J[rows, (n_pose + idx.feature)[:, None]] = d_mu
    J[np.repeat(~valid, 2)] = 0.0
    return J


def residual_vector(window: SlidingWindow) -> np.ndarray:
    """Stacked residuals ``(2K,)`` over non-anchor observations (NaN where invalid)."""
    mu = np.array([f.inverse_depth for f in window.features])
    r, _ = _residuals(window.rotations, window.translations, mu, _index(window))
    return r.reshape(-1)


def jacobian(window: SlidingWindow) -> np.ndarray:
    idx = _index(window)
    mu = np.array([f.inverse_depth for f in window.features])
    _, valid = _residuals(window.rotations, window.translations, mu, idx)
    return _jacobian(window.rotations, window.translations, mu, idx, valid, window.size)


def window_cost(window: SlidingWindow) -> float:
    r = residual_vector(window).reshape(-1, 2)
    return _cost(r, np.all(np.isfinite(r), axis=1))


def _retract(q, t, mu, delta, num_states):
    n_pose = 6 * (num_states - 1)
    d = delta[:n_pose].reshape(-1, 6)
    q_new = q.copy()
    t_new = t.copy()
    q_new[1:] = quat_normalize(quat_multiply(q[1:], quat_from_axis_angle(d[:, :3])))
    t_new[1:] = t[1:] + d[:, 3:]
    return q_new, t_new, mu + delta[n_pose:]


def retract(window: SlidingWindow, delta: np.ndarray) -> SlidingWindow:
    """Apply a tangent-space update laid out like the Jacobian columns."""
    mu = np.array([f.inverse_depth for f in window.features])
    q, t, mu = _retract(window.quaternions, window.translations, mu, np.asarray(delta, dtype=float), window.size)
    return _with_state(window, q, t, mu)


def _with_state(window: SlidingWindow, q, t, mu) -> SlidingWindow:
    feats = tuple(dataclasses.replace(f, inverse_depth=float(m)) for f, m in zip(window.features, mu))
    return window.replace(quaternions=q, translations=t, features=feats)


def _mean_depth0(R, t, mu, anchors, bearings) -> float:
    X = np.einsum("mij,mj->mi", R[anchors], bearings / mu[:, None]) + t[anchors]
    return float(np.mean((X - t[0]) @ R[0][:, 2]))


# ---------------------------------------------------------------------------
# solver

def optimize_window(window: SlidingWindow, max_iterations: int = 50, tolerance: float = 1e-10,
                    reference_depth: Optional[float] = None) -> Tuple[SlidingWindow, BaReport]:
    """Levenberg-damped Gauss-Newton on the total squared reprojection error.

    ``reference_depth`` pins the scale gauge; by default it is the mean camera-0
    depth of the features on entry.
    """
    idx = _index(window)
    N = window.size
    q = window.quaternions.copy()
    t = window.translations.copy()
    mu = np.array([f.inverse_depth for f in window.features], dtype=float)
    anchors = np.array([f.anchor_frame_index for f in window.features], dtype=int)
    bearings = np.array([f.bearing for f in window.features], dtype=float).reshape(-1, 3)
    ref = reference_depth
    if ref is None and len(mu):
        ref = _mean_depth0(quat_to_matrix(q), t, mu, anchors, bearings)

    R = quat_to_matrix(q)
    r, valid = _residuals(R, t, mu, idx)
    cost = _cost(r, valid)
    initial_cost = cost
    lam = INITIAL_DAMPING
    iterations = accepted = 0
    converged = False
    if len(idx.feature) == 0:
        return window, BaReport(0, cost, cost, True, 0, lam, 0)

    while iterations < max_iterations:
        if cost <= ABS_COST_FLOOR:
            converged = True
            break
        iterations += 1
        J = _jacobian(R, t, mu, idx, valid, N)
        rv = np.where(valid[:, None], r, 0.0).reshape(-1)
        H = J.T @ J
        g = J.T @ rv
        improved = solved = False
        while lam <= MAX_DAMPING:
            try:
                delta = np.linalg.solve(H + lam * np.eye(len(H)), -g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is None or not np.all(np.isfinite(delta)):
                lam *= 10.0
                continue
            solved = True
            q_new, t_new, mu_new = _retract(q, t, mu, delta, N)
            clamped = bool(np.any((mu_new < MU_MIN) | (mu_new > MU_MAX)))
            mu_new = np.clip(mu_new, MU_MIN, MU_MAX)
            R_new = quat_to_matrix(q_new)
            r_new, valid_new = _residuals(R_new, t_new, mu_new, idx)
            new_cost = _cost(r_new, valid_new)
            if clamped or valid_new.sum() < valid.sum() or not new_cost < cost:
                lam *= 10.0
                continue
            # restore the scale gauge about the camera-0 centre
            if ref is not None:
                k = ref / _mean_depth0(R_new, t_new, mu_new, anchors, bearings)
                if k > 0 and math.isfinite(k):
                    t_new = t_new[0] + k * (t_new - t_new[0])
                    mu_new = np.clip(mu_new / k, MU_MIN, MU_MAX)
                    r_new, valid_new = _residuals(R_new, t_new, mu_new, idx)
                    new_cost = _cost(r_new, valid_new)
            rel = (cost - new_cost) / cost
            q, t, mu, R, r, valid, cost = q_new, t_new, mu_new, R_new, r_new, valid_new, new_cost
            lam = max(lam / 10.0, MIN_DAMPING)
            accepted += 1
            improved = True
            if rel < tolerance:
                converged = True
            break
        if not solved:
            cond = float(np.linalg.cond(H)) if np.all(np.isfinite(H)) else math.inf
            raise BaSingularError("normal equations singular after damping escalation", cond, lam, len(H))
        if not improved:
            # no damped step lowers the cost: stationary to working precision
            converged = True
            break
        if converged:
            break
    if cost <= ABS_COST_FLOOR:
        converged = True
    report = BaReport(iterations, initial_cost, cost, converged, accepted, lam, int((~valid).sum()))
    return _with_state(window, q, t, mu), report


# ---------------------------------------------------------------------------
# gauge and window maintenance

def initialize_object_frame(window: SlidingWindow, region_center_bearing) -> SlidingWindow:
    """Move the object origin onto the region-centre ray at the mean cloud depth and
    rescale so that mean first-frame feature depth is exactly 1.

    Idempotent: a second call leaves the window unchanged.
    """
    if not window.features:
        raise ValueError("cannot initialize the object frame from an empty point cloud")
    bearing = np.asarray(region_center_bearing, dtype=float).reshape(3)
    if not bearing[2] > 0:
        raise ValueError("region-centre bearing must point in front of the first camera")
    Pc = window.points_in_camera(0)
    d = float(np.mean(Pc[:, 2]))
    if not d > 0:
        raise ValueError("point cloud has non-positive mean depth in the first camera")
    origin_c0 = bearing * (d / bearing[2])
    uv = Pc[:, :2] / Pc[:, 2:3]
    cu, cv = origin_c0[:2] / origin_c0[2]
    if not (uv[:, 0].min() <= cu <= uv[:, 0].max() and uv[:, 1].min() <= cv <= uv[:, 1].max()):
        warnings.warn("region-centre bearing misses the point cloud; placing the origin at mean depth anyway",
                      RuntimeWarning, stacklevel=2)
    R0 = window.rotations[0]
    origin = R0 @ origin_c0 + window.translations[0]
    t_new = (window.translations - origin) / d
    feats = tuple(dataclasses.replace(f, inverse_depth=f.inverse_depth * d) for f in window.features)
    return window.replace(translations=t_new, features=feats)


def marginalize_oldest(window: SlidingWindow) -> SlidingWindow:
    """Drop the oldest state, re-anchoring its features on their next observing frame.

    The new anchor ray is the projection of the current point estimate into the
    new anchor camera (not the noisy measurement there) and the inverse depth is
    the reciprocal of its depth, so every point keeps its object-frame position
    exactly.  Re-anchoring on the measured ray instead shifts each point by the
    measurement noise and, over hundreds of frames, makes the scale gauge drift.
    Features left with fewer than ``min(2, remaining)`` observations are removed.
    """
    if window.size < 2:
        raise ValueError("cannot marginalize the only state in the window")
    R = window.rotations
    X = window.points_object()
    need = min(2, window.size - 1)
    feats = []
    for m, f in enumerate(window.features):
        obs = [(k - 1, u, v) for k, u, v in f.observations if k > 0]
        if len(obs) < need or not obs:
            continue
        if f.anchor_frame_index == 0:
            a, u, v = obs[0]
            P = R[a + 1].T @ (X[m] - window.translations[a + 1])
            depth = float(P[2])
            if not depth > MIN_DEPTH:
                continue
            feats.append(FeatureTrack(f.feature_id, a, tuple(obs), 1.0 / depth,
                                      (float(P[0] / depth), float(P[1] / depth))))
        else:
            feats.append(dataclasses.replace(f, anchor_frame_index=f.anchor_frame_index - 1, observations=tuple(obs)))
    return window.replace(quaternions=window.quaternions[1:], translations=window.translations[1:],
                          features=tuple(feats), frame_ids=window.frame_ids[1:], timestamps=window.timestamps[1:])


def append_state(window: SlidingWindow, rotation, translation, observations: Dict[int, Sequence[float]],
                 frame_id: Optional[int] = None, timestamp: Optional[float] = None) -> SlidingWindow:
    """Add a camera-in-object state and attach its observations of features already in the window."""
    if window.full:
        raise ValueError("window is full; marginalize first")
    k = window.size
    feats = []
    for f in window.features:
        uv = observations.get(f.feature_id)
        if uv is not None:
            f = dataclasses.replace(f, observations=f.observations + ((k, float(uv[0]), float(uv[1])),))
        feats.append(f)
    fid = window.frame_ids[-1] + 1 if frame_id is None else frame_id
    ts = window.timestamps[-1] + 1.0 if timestamp is None else timestamp
    return window.replace(
        quaternions=np.vstack([window.quaternions, matrix_to_quat(rotation)[None]]),
        translations=np.vstack([window.translations, np.asarray(translation, dtype=float)[None]]),
        features=tuple(feats), frame_ids=window.frame_ids + (fid,), timestamps=window.timestamps + (ts,),
    )


def window_from_points(rotations, translations, points_object: Dict[int, np.ndarray],
                       observations: Sequence[Dict[int, Sequence[float]]], capacity: int = 20,
                       frame_ids=None, timestamps=None) -> SlidingWindow:
    """Build a window from camera-in-object poses, object-frame points and per-frame observations.

    Each feature is anchored at its first observing frame with the inverse depth of the given point there.
    """
    R = np.asarray(rotations, dtype=float)
    t = np.asarray(translations, dtype=float)
    feats = []
    for fid, X in points_object.items():
        obs = tuple((k, float(o[fid][0]), float(o[fid][1])) for k, o in enumerate(observations) if fid in o)
        if len(obs) < min(2, len(R)):
            continue
        a = obs[0][0]
        depth = float((R[a].T @ (np.asarray(X) - t[a]))[2])
        if not depth > MIN_DEPTH:
            continue
        feats.append(FeatureTrack(int(fid), a, obs, 1.0 / depth))
    return SlidingWindow(matrix_to_quat(R), t, tuple(feats), capacity, frame_ids, timestamps)


# ---------------------------------------------------------------------------
# two-view bootstrap, triangulation and resection

def _normalize_2d(x):
    c = x.mean(axis=0)
    s = math.sqrt(2.0) / max(np.mean(np.linalg.norm(x - c, axis=1)), 1e-12)
    T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
    return np.column_stack([x, np.ones(len(x))]) @ T.T, T


def essential_eight_point(x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """Essential matrix with ``[x1, 1] E [x0, 1]^T = 0`` from normalized coordinates (Hartley-normalized)."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if len(x0) < 8:
        raise ValueError("eight-point needs at least 8 correspondences")
    h0, T0 = _normalize_2d(x0)
    h1, T1 = _normalize_2d(x1)
    A = np.einsum("ki,kj->kij", h1, h0).reshape(len(h0), 9)
    E = np.linalg.svd(A)[2][-1].reshape(3, 3)
    E = T1.T @ E @ T0
    U, _, Vt = np.linalg.svd(E)
    return U @ np.diag([1.0, 1.0, 0.0]) @ Vt


def triangulate(rotations, translations, uvs) -> np.ndarray:
    """Linear (DLT) triangulation from camera-in-object poses and normalized observations."""
    rows = []
    for R, t, (u, v) in zip(rotations, translations, uvs):
        P = np.hstack([R.T, (-R.T @ t)[:, None]])
        rows.append(u * P[2] - P[0])
        rows.append(v * P[2] - P[1])
    X = np.linalg.svd(np.array(rows))[2][-1]
    return X[:3] / X[3]


def decompose_essential(E: np.ndarray, x0: np.ndarray, x1: np.ndarray):
    """Relative pose ``x1 = R x0 + t`` (unit ``t``) passing the cheirality test on most points."""
    U, _, Vt = np.linalg.svd(E)
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    W = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    best = None
    for R in (U @ W @ Vt, U @ W.T @ Vt):
        for t in (U[:, 2], -U[:, 2]):
            # camera 0 at the origin, camera 1 in camera-0 coordinates is (R^T, -R^T t)
            rots = [np.eye(3), R.T]
            trans = [np.zeros(3), -R.T @ t]
            good = 0
            for a, b in zip(x0, x1):
                X = triangulate(rots, trans, [a, b])
                good += int(X[2] > 0 and (R @ X + t)[2] > 0)
            if best is None or good > best[0]:
                best = (good, R, t)
    return best[1], best[2]


def _pose_gn(R, t, X, uv, iterations=20):
    """Motion-only Gauss-Newton for a camera-in-object pose against fixed points."""
    lam = 1e-6
    def cost_of(R, t):
        P = (X - t) @ R
        if np.any(P[:, 2] <= MIN_DEPTH):
            return math.inf
        return float(np.sum((P[:, :2] / P[:, 2:3] - uv) ** 2))
    c = cost_of(R, t)
    for _ in range(iterations):
        if not math.isfinite(c) or c < 1e-28:
            break
        P = (X - t) @ R
        z = P[:, 2]
        r = (P[:, :2] / z[:, None] - uv).reshape(-1)
        dpi = np.zeros((len(P), 2, 3))
        dpi[:, 0, 0] = dpi[:, 1, 1] = 1.0 / z
        dpi[:, 0, 2] = -P[:, 0] / z**2
        dpi[:, 1, 2] = -P[:, 1] / z**2
        J = np.concatenate([dpi @ skew(P), -dpi @ R.T[None]], axis=2).reshape(-1, 6)
        H, g = J.T @ J, J.T @ r
        step_ok = False
        while lam < 1e8:
            d = np.linalg.solve(H + lam * np.eye(6), -g)
            R_new = R @ quat_to_matrix(quat_from_axis_angle(d[:3]))
            t_new = t + d[3:]
            c_new = cost_of(R_new, t_new)
            if c_new < c:
                rel = (c - c_new) / c
                R, t, c = R_new, t_new, c_new
                lam = max(lam / 10, 1e-12)
                step_ok = True
                break
            lam *= 10
        if not step_ok or rel < 1e-12:
            break
    return R, t, c


def resect(X: np.ndarray, uv: np.ndarray, initial: Optional[Tuple[np.ndarray, np.ndarray]] = None):
    """Camera-in-object pose from 3D-2D matches: DLT (>= 6 points) and an optional
    prior pose, each refined by Gauss-Newton; the lower-cost result wins."""
    X = np.asarray(X, dtype=float)
    uv = np.asarray(uv, dtype=float)
    candidates = []
    if len(X) >= 6:
        c = X.mean(axis=0)
        s = 1.0 / max(np.mean(np.linalg.norm(X - c, axis=1)), 1e-12)
        Xn = (X - c) * s
        A = []
        for (x, y, z), (u, v) in zip(Xn, uv):
            A.append([x, y, z, 1, 0, 0, 0, 0, -u * x, -u * y, -u * z, -u])
            A.append([0, 0, 0, 0, x, y, z, 1, -v * x, -v * y, -v * z, -v])
        P = np.linalg.svd(np.array(A))[2][-1].reshape(3, 4)
        # P = lambda [R | t] for an unknown lambda whose sign is that of det(P[:, :3])
        M = P[:, :3]
        U, S, Vt = np.linalg.svd(M)
        sign = 1.0 if np.linalg.det(M) > 0 else -1.0
        Rco = sign * (U @ Vt)
        tco = P[:, 3] / (sign * S.mean())
        # undo the point normalization: Xc = Rco (s (X - c)) + tco  ->  Xc/s = Rco X - Rco c + tco/s
        R_obj = Rco.T
        t_obj = c - Rco.T @ tco / s
        candidates.append(_pose_gn(R_obj, t_obj, X, uv))
    if initial is not None:
        candidates.append(_pose_gn(np.asarray(initial[0]), np.asarray(initial[1]), X, uv))
    if not candidates:
        raise ValueError("resection needs at least 6 points or an initial pose")
    return min(candidates, key=lambda c: c[2])


# ---------------------------------------------------------------------------
# streaming tracker

@dataclass(frozen=True)
class BaResult:
    object_camera_upscale: TimedTrajectory
    reports: Tuple[BaReport, ...]
    bearing: np.ndarray
    origin_bearing_unit_depth: np.ndarray       # origin in camera 0 with the BA gauge depth of 1
    init_feature_ids: Tuple[int, ...]
    final_window: SlidingWindow


class RegionBaTracker:
    """Runs the sliding-window BA over a whole track set.

    The first window is bootstrapped from a two-view essential matrix, resection
    of the remaining frames and multi-view triangulation, then given its object
    frame.  Each later frame marginalizes the oldest state when full, is
    resected against the current points, brings in newly triangulable features
    and re-optimizes the window.
    """

    def __init__(self, frames: Sequence[Dict[int, np.ndarray]], timestamps: Sequence[float],
                 bearing=None, window_size: int = 20, max_iterations: int = 30, tolerance: float = 1e-10):
        if len(frames) < 2:
            raise ValueError("need at least two frames")
        self.frames = [{int(k): np.asarray(v, dtype=float) for k, v in f.items()} for f in frames]
        self.timestamps = np.asarray(timestamps, dtype=float)
        self.window_size = window_size
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        if bearing is None:
            c = np.mean(np.array(list(self.frames[0].values())), axis=0)
            bearing = np.array([c[0], c[1], 1.0])
        bearing = np.asarray(bearing, dtype=float)
        self.bearing = bearing / np.linalg.norm(bearing)
        self.reports: List[BaReport] = []

    # -- bootstrap ---------------------------------------------------------
    def _bootstrap(self) -> SlidingWindow:
        F0 = min(self.window_size, len(self.frames))
        f0 = self.frames[0]
        best = None
        for k in range(1, F0):
            common = sorted(set(f0) & set(self.frames[k]))
            if len(common) < 8:
                continue
            d = np.array([self.frames[k][i] - f0[i] for i in common])
            score = float(np.median(np.linalg.norm(d - np.median(d, axis=0), axis=1)))
            if best is None or score > best[0]:
                best = (score, k, common)
        if best is None:
            raise ValueError("no frame in the first window shares 8 features with frame 0")
        _, kb, common = best
        x0 = np.array([f0[i] for i in common])
        x1 = np.array([self.frames[kb][i] for i in common])
        R10, t10 = decompose_essential(essential_eight_point(x0, x1), x0, x1)
        rots = {0: np.eye(3), kb: R10.T}
        trans = {0: np.zeros(3), kb: -R10.T @ t10}
        points = {i: triangulate([rots[0], rots[kb]], [trans[0], trans[kb]], [f0[i], self.frames[kb][i]])
                  for i in common}

        prev = (np.eye(3), np.zeros(3))
        for k in range(1, F0):
            if k == kb:
                prev = (rots[kb], trans[kb])
                continue
            ids = [i for i in self.frames[k] if i in points]
            R, t, _ = resect(np.array([points[i] for i in ids]), np.array([self.frames[k][i] for i in ids]), prev)
            rots[k], trans[k] = R, t
            prev = (R, t)
        R_all = np.array([rots[k] for k in range(F0)])
        t_all = np.array([trans[k] for k in range(F0)])
        obs = self.frames[:F0]
        all_ids = sorted(set().union(*[set(o) for o in obs]))
        pts = {}
        for i in all_ids:
            ks = [k for k in range(F0) if i in obs[k]]
            if len(ks) >= 2:
                pts[i] = triangulate(R_all[ks], t_all[ks], [obs[k][i] for k in ks])
        window = window_from_points(R_all, t_all, pts, obs, self.window_size, tuple(range(F0)),
                                    tuple(self.timestamps[:F0]))
        window = initialize_object_frame(window, self.bearing)
        self.init_feature_ids = tuple(window.feature_ids())
        window, report = optimize_window(window, self.max_iterations, self.tolerance, reference_depth=1.0)
        self.reports.append(report)
        return window

    # -- streaming ---------------------------------------------------------
    def run(self) -> BaResult:
        window = self._bootstrap()
        exported_q: Dict[int, np.ndarray] = {}
        exported_t: Dict[int, np.ndarray] = {}
        pending: Dict[int, List[Tuple[int, np.ndarray]]] = {}

        def export_state(win, k):
            RT = win.rotations[k].T
            exported_q[win.frame_ids[k]] = matrix_to_quat(RT)
            exported_t[win.frame_ids[k]] = -RT @ win.translations[k]

        for f in range(window.size, len(self.frames)):
            obs = self.frames[f]
            if window.full:
                export_state(window, 0)
                window = marginalize_oldest(window)
                pending = {i: [(k - 1, uv) for k, uv in lst if k > 0] for i, lst in pending.items()}
            in_window = set(window.feature_ids())
            X = window.points_object()
            pos = {fid: m for m, fid in enumerate(window.feature_ids())}
            ids = [i for i in obs if i in in_window]
            prev = (window.rotations[-1], window.translations[-1])
            if len(ids) >= 3:
                R, t, _ = resect(X[[pos[i] for i in ids]], np.array([obs[i] for i in ids]), prev)
            else:
                R, t = prev
            window = append_state(window, R, t, obs, f, float(self.timestamps[f]))
            k_new = window.size - 1
            for i in obs:
                if i not in in_window:
                    pending.setdefault(i, []).append((k_new, obs[i]))
            window = self._promote(window, pending)
            window, report = optimize_window(window, self.max_iterations, self.tolerance)
            self.reports.append(report)
        for k in range(window.size):
            export_state(window, k)

        order = sorted(exported_q)
        traj = TimedTrajectory(self.timestamps[order], np.array([exported_t[i] for i in order]),
                               np.array([exported_q[i] for i in order]), FrameLabel.OBJECT, FrameLabel.CAMERA,
                               np.array(order))
        return BaResult(traj, tuple(self.reports), self.bearing, self.bearing / self.bearing[2],
                        self.init_feature_ids, window)

    def _promote(self, window: SlidingWindow, pending) -> SlidingWindow:
        """Triangulate pending features seen in at least two window frames and add them."""
        R, t = window.rotations, window.translations
        feats = list(window.features)
        for i in list(pending):
            lst = [(k, uv) for k, uv in pending[i] if k >= 0]
            pending[i] = lst
            if len(lst) < 2:
                continue
            ks = [k for k, _ in lst]
            X = triangulate(R[ks], t[ks], [uv for _, uv in lst])
            depths = [(R[k].T @ (X - t[k]))[2] for k in ks]
            if min(depths) <= MIN_DEPTH:
                continue
            feats.append(FeatureTrack(i, ks[0], tuple((k, float(uv[0]), float(uv[1])) for k, uv in lst),
                                      1.0 / depths[0]))
            del pending[i]
        return window.replace(features=tuple(feats))


def run_region_ba(tracks, bearing=None, window_size: int = 20, max_iterations: int = 30,
                  tolerance: float = 1e-10) -> BaResult:
    """Convenience wrapper taking a :class:`~scalesense.sim.FeatureTracks`."""
    if bearing is None and np.all(np.isfinite(tracks.region_centers[0])):
        c = tracks.region_centers[0]
        bearing = np.array([c[0], c[1], 1.0])
    tracker = RegionBaTracker(tracks.by_frame(), tracks.timestamps, bearing, window_size, max_iterations, tolerance)
    return tracker.run()
