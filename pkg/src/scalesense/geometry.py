"""Frame-aware rigid-body geometry.

Conventions
-----------
A :class:`Pose` with ``from_frame=y`` and ``to_frame=x`` stores ``R_y^x`` and
``p_y^x``: it maps a point expressed in frame ``y`` into frame ``x`` via
``p_x = R @ p_y + t``.  Quaternions are stored scalar-first ``(qw, qx, qy, qz)``
everywhere, including trajectory files, and are kept in the ``qw >= 0``
hemisphere.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

QUAT_NORM_TOL = 1e-9
TRAJECTORY_HEADER = "# timestamp tx ty tz qw qx qy qz"


class FrameMismatchError(ValueError):
    """Raised when two transforms are chained through different frames."""

    def __init__(self, expected, got, context: str = "compose"):
        self.expected = expected
        self.got = got
        super().__init__(f"{context}: frame mismatch, expected {expected} but got {got}")


class FrameLabel(enum.Enum):
    WORLD = "world"
    CAMERA = "camera"
    OBJECT = "object"


@dataclass(frozen=True)
class FrameId:
    label: FrameLabel
    index: Optional[int] = None

    def __str__(self) -> str:
        if self.index is None:
            return self.label.value
        return f"{self.label.value}[{self.index}]"


WORLD = FrameId(FrameLabel.WORLD)
OBJECT = FrameId(FrameLabel.OBJECT)


def camera_frame(index: Optional[int] = None) -> FrameId:
    return FrameId(FrameLabel.CAMERA, index)


# ---------------------------------------------------------------------------
# quaternion / rotation helpers

def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix; broadcasts over leading dimensions."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    sign = np.where(q[..., :1] < 0.0, -1.0, 1.0)
    return q * sign


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=float), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=float), -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - w * z)
    out[..., 0, 2] = 2 * (x * z + w * y)
    out[..., 1, 0] = 2 * (x * y + w * z)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - w * x)
    out[..., 2, 0] = 2 * (x * z - w * y)
    out[..., 2, 1] = 2 * (y * z + w * x)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (Shepperd's method), batched."""
    R = np.asarray(R, dtype=float)
    flat = R.reshape(-1, 3, 3)
    out = np.empty((flat.shape[0], 4))
    for i, m in enumerate(flat):
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0.0:
            s = 2.0 * np.sqrt(tr + 1.0)
            q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        elif m[1, 1] > m[2, 2]:
            s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        else:
            s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        out[i] = q
    return quat_normalize(out).reshape(R.shape[:-2] + (4,))


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """Rotation matrix of an axis-angle vector (Rodrigues), batched."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)[..., None, None]
    K = skew(phi)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + a * K + b * (K @ K)


def quat_from_axis_angle(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1, keepdims=True)
    half = 0.5 * theta
    small = theta < 1e-10
    k = np.where(small, 0.5 - theta**2 / 48.0, np.sin(half) / np.where(small, 1.0, theta))
    return quat_normalize(np.concatenate([np.cos(half), k * phi], axis=-1))


def so3_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, batched (via quaternion)."""
    q = matrix_to_quat(R)
    w = np.clip(q[..., :1], -1.0, 1.0)
    v = q[..., 1:]
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(n, w)
    small = n < 1e-12
    scale = np.where(small, 2.0 / np.where(w == 0, 1.0, w), angle / np.where(small, 1.0, n))
    return scale * v


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def yaw_pitch_roll(R: np.ndarray) -> np.ndarray:
    """Intrinsic Z-Y-X angles ``(yaw, pitch, roll)`` with ``R = Rz(yaw) Ry(pitch) Rx(roll)``."""
    R = np.asarray(R, dtype=float)
    yaw = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    pitch = np.arcsin(np.clip(-R[..., 2, 0], -1.0, 1.0))
    roll = np.arctan2(R[..., 2, 1], R[..., 2, 2])
    return np.stack([yaw, pitch, roll], axis=-1)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# poses

@dataclass(frozen=True)
class Pose:
    """Rigid transform ``from_frame -> to_frame`` (rotation quaternion + translation)."""

    rotation: np.ndarray
    translation: np.ndarray
    from_frame: FrameId
    to_frame: FrameId

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float).reshape(4)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(q)) or not np.all(np.isfinite(t)):
            raise ValueError("pose contains non-finite values")
        object.__setattr__(self, "rotation", _frozen(quat_normalize(q)))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls, from_frame: FrameId, to_frame: FrameId) -> "Pose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3), from_frame, to_frame)

    @classmethod
    def from_matrix(cls, R, t, from_frame: FrameId, to_frame: FrameId) -> "Pose":
        return cls(matrix_to_quat(R), t, from_frame, to_frame)

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def homogeneous(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.matrix
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "Pose":
        q_inv = quat_conjugate(self.rotation)
        t_inv = -quat_to_matrix(q_inv) @ self.translation
        return Pose(q_inv, t_inv, self.to_frame, self.from_frame)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points (``(3,)`` or ``(n, 3)``) from ``from_frame`` into ``to_frame``."""
        return np.asarray(points, dtype=float) @ self.matrix.T + self.translation

    def with_frames(self, from_frame: FrameId, to_frame: FrameId) -> "Pose":
        return Pose(self.rotation, self.translation, from_frame, to_frame)

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)


def compose(a: Pose, b: Pose) -> Pose:
    """Chain ``b: C -> B`` then ``a: B -> A`` into ``C -> A``."""
    if a.from_frame != b.to_frame:
        raise FrameMismatchError(a.from_frame, b.to_frame)
    q = quat_normalize(quat_multiply(a.rotation, b.rotation))
    t = a.matrix @ b.translation + a.translation
    return Pose(q, t, b.from_frame, a.to_frame)


@dataclass(frozen=True)
class ScaledPose:
    pose: Pose
    scale: float

    def __post_init__(self):
        if not (self.scale > 0.0):
            raise ValueError(f"scale must be positive, got {self.scale}")


def _require(pose: Pose, from_label: FrameLabel, to_label: FrameLabel, context: str):
    if pose.from_frame.label != from_label or pose.to_frame.label != to_label:
        raise FrameMismatchError(
            f"{from_label.value}->{to_label.value}",
            f"{pose.from_frame}->{pose.to_frame}",
            context,
        )


def rotate_relative_position(camera_pose_world: Pose, object_pos_camera_upscale) -> np.ndarray:
    """Rotate an up-to-scale camera-frame object position into world axes.

    Only the camera rotation is applied; no translation is added.
    """
    _require(camera_pose_world, FrameLabel.CAMERA, FrameLabel.WORLD, "rotate_relative_position")
    return camera_pose_world.matrix @ np.asarray(object_pos_camera_upscale, dtype=float).reshape(3)


def recover_world_pose(camera_pose_world: Pose, object_pose_camera_upscale: Pose, scale: float) -> Pose:
    """Object pose in the world from the camera world pose and a scaled relative pose."""
    if not (scale > 0.0):
        raise ValueError(f"scale must be positive, got {scale}")
    _require(camera_pose_world, FrameLabel.CAMERA, FrameLabel.WORLD, "recover_world_pose")
    _require(object_pose_camera_upscale, FrameLabel.OBJECT, FrameLabel.CAMERA, "recover_world_pose")
    if camera_pose_world.from_frame != object_pose_camera_upscale.to_frame:
        raise FrameMismatchError(
            camera_pose_world.from_frame, object_pose_camera_upscale.to_frame, "recover_world_pose"
        )
    R_cw = camera_pose_world.matrix
    q = quat_multiply(camera_pose_world.rotation, object_pose_camera_upscale.rotation)
    p = scale * (R_cw @ object_pose_camera_upscale.translation) + camera_pose_world.translation
    return Pose(q, p, object_pose_camera_upscale.from_frame, camera_pose_world.to_frame)


# ---------------------------------------------------------------------------
# trajectories

def _frame_for(label: FrameLabel, index: int) -> FrameId:
    return FrameId(label, index) if label is FrameLabel.CAMERA else FrameId(label)


@dataclass(frozen=True)
class TimedTrajectory:
    """Timestamped poses sharing one ``from_label -> to_label`` frame pair.

    Stored column-wise; camera frames carry the sample index as their time index.
    """

    timestamps: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray
    from_label: FrameLabel
    to_label: FrameLabel
    frame_indices: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float).reshape(-1)
        p = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        q = np.asarray(self.quaternions, dtype=float).reshape(-1, 4)
        if not (len(t) == len(p) == len(q)):
            raise ValueError("timestamps, positions and quaternions differ in length")
        if len(t) > 1 and np.any(np.diff(t) <= 0.0):
            bad = int(np.argmax(np.diff(t) <= 0.0))
            raise ValueError(f"timestamps not strictly increasing at sample {bad + 1}")
        idx = self.frame_indices
        idx = np.arange(len(t)) if idx is None else np.asarray(idx, dtype=int).reshape(-1)
        if len(idx) != len(t):
            raise ValueError("frame_indices length mismatch")
        object.__setattr__(self, "timestamps", _frozen(t))
        object.__setattr__(self, "positions", _frozen(p))
        object.__setattr__(self, "quaternions", _frozen(quat_normalize(q) if len(q) else q))
        idx.setflags(write=False)
        object.__setattr__(self, "frame_indices", idx)

    @classmethod
    def from_poses(cls, timestamps: Sequence[float], poses: Sequence[Pose]) -> "TimedTrajectory":
        if not poses:
            raise ValueError("empty pose list")
        from_label = poses[0].from_frame.label
        to_label = poses[0].to_frame.label
        for p in poses:
            if p.from_frame.label != from_label or p.to_frame.label != to_label:
                raise FrameMismatchError(f"{from_label.value}->{to_label.value}", f"{p.from_frame}->{p.to_frame}",
                                         "TimedTrajectory")
        idx = []
        for k, p in enumerate(poses):
            frame = p.from_frame if p.from_frame.label is FrameLabel.CAMERA else p.to_frame
            idx.append(k if frame.index is None else frame.index)
        return cls(
            np.asarray(timestamps, dtype=float),
            np.array([p.translation for p in poses]),
            np.array([p.rotation for p in poses]),
            from_label,
            to_label,
            np.asarray(idx),
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, k: int) -> Pose:
        i = int(self.frame_indices[k])
        return Pose(
            self.quaternions[k],
            self.positions[k],
            _frame_for(self.from_label, i),
            _frame_for(self.to_label, i),
        )

    def __iter__(self) -> Iterator[Pose]:
        return (self[k] for k in range(len(self)))

    @property
    def rotations(self) -> np.ndarray:
        return quat_to_matrix(self.quaternions)

    def inverse(self) -> "TimedTrajectory":
        q_inv = quat_conjugate(self.quaternions)
        t_inv = -np.einsum("nij,nj->ni", quat_to_matrix(q_inv), self.positions)
        return TimedTrajectory(self.timestamps, t_inv, q_inv, self.to_label, self.from_label, self.frame_indices)

    def replace_positions(self, positions: np.ndarray) -> "TimedTrajectory":
        return TimedTrajectory(self.timestamps, positions, self.quaternions, self.from_label,
                               self.to_label, self.frame_indices)

    def slice(self, start: int, stop: int) -> "TimedTrajectory":
        return TimedTrajectory(self.timestamps[start:stop], self.positions[start:stop],
                               self.quaternions[start:stop], self.from_label, self.to_label,
                               self.frame_indices[start:stop])


def recover_world_trajectory(camera_world: TimedTrajectory, object_camera_upscale: TimedTrajectory,
                             scale: float) -> TimedTrajectory:
    """Apply :func:`recover_world_pose` at every shared timestamp."""
    if not (scale > 0.0):
        raise ValueError(f"scale must be positive, got {scale}")
    if camera_world.from_label is not FrameLabel.CAMERA or camera_world.to_label is not FrameLabel.WORLD:
        raise FrameMismatchError("camera->world", f"{camera_world.from_label.value}->{camera_world.to_label.value}",
                                 "recover_world_trajectory")
    if object_camera_upscale.from_label is not FrameLabel.OBJECT or object_camera_upscale.to_label is not FrameLabel.CAMERA:
        raise FrameMismatchError("object->camera",
                                 f"{object_camera_upscale.from_label.value}->{object_camera_upscale.to_label.value}",
                                 "recover_world_trajectory")
    check_same_timestamps(camera_world, object_camera_upscale)
    R_cw = camera_world.rotations
    q = quat_multiply(camera_world.quaternions, object_camera_upscale.quaternions)
    p = scale * np.einsum("nij,nj->ni", R_cw, object_camera_upscale.positions) + camera_world.positions
    return TimedTrajectory(camera_world.timestamps, p, q, FrameLabel.OBJECT, FrameLabel.WORLD,
                           camera_world.frame_indices)


def check_same_timestamps(a: TimedTrajectory, b: TimedTrajectory) -> None:
    if len(a) != len(b):
        raise ValueError(f"trajectory lengths differ: {len(a)} vs {len(b)}")
    mismatch = np.nonzero(a.timestamps != b.timestamps)[0]
    if len(mismatch):
        k = int(mismatch[0])
        raise ValueError(f"timestamp mismatch at sample {k}: {a.timestamps[k]!r} vs {b.timestamps[k]!r}")


# ---------------------------------------------------------------------------
# file IO

PathLike = Union[str, Path]


def write_trajectory(path: PathLike, traj: TimedTrajectory) -> None:
    data = np.column_stack([traj.timestamps, traj.positions, traj.quaternions])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for row in data:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_trajectory(path: PathLike, from_label: FrameLabel, to_label: FrameLabel) -> TimedTrajectory:
    """Read a trajectory CSV; columns may be separated by spaces or commas."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 8:
                raise ValueError(f"{path}:{lineno}: expected 8 columns, got {len(parts)}")
            rows.append([float(x) for x in parts])
    if not rows:
        raise ValueError(f"{path}: no trajectory samples")
    data = np.array(rows)
    return TimedTrajectory(data[:, 0], data[:, 1:4], data[:, 4:8], from_label, to_label)
