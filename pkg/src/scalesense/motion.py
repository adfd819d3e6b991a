"""Motion random-variable samples from synchronized trajectories.

Positions are differenced with forward stencils of order ``n``; the camera
motion ``m_c`` and the rotated relative motion ``m_d`` are paired per
timestamp, optionally with the true object motion ``m_o`` in simulation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .geometry import FrameLabel, FrameMismatchError, TimedTrajectory, check_same_timestamps

SPACING_TOL = 0.01


@dataclass(frozen=True)
class MotionSample:
    timestamp: float
    m_c: np.ndarray
    m_d: np.ndarray
    m_o_truth: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("m_c", "m_d", "m_o_truth"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.array(v, dtype=float).reshape(3)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} has non-finite components at t={self.timestamp}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)


class SampleWindow:
    """Ring buffer of the latest ``capacity`` motion samples."""

    def __init__(self, capacity: int = 200):
        if capacity < 2:
            raise ValueError("capacity must be at least 2")
        self.capacity = capacity
        self._buf: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._buf)

    def __iter__(self):
        return iter(self._buf)

    @property
    def full(self) -> bool:
        return len(self._buf) == self.capacity

    def push(self, sample: MotionSample) -> None:
        if self._buf and sample.timestamp <= self._buf[-1].timestamp:
            raise ValueError(
                f"sample timestamp {sample.timestamp} not after {self._buf[-1].timestamp}"
            )
        self._buf.append(sample)

    def extend(self, samples: Iterable[MotionSample]) -> None:
        for s in samples:
            self.push(s)

    def clear(self) -> None:
        self._buf.clear()

    def snapshot(self) -> List[MotionSample]:
        return list(self._buf)

    def arrays(self):
        """``(m_c, m_d, m_o)`` as ``(N, 3)`` arrays; ``m_o`` is None unless every sample has it."""
        m_c = np.array([s.m_c for s in self._buf])
        m_d = np.array([s.m_d for s in self._buf])
        if self._buf and all(s.m_o_truth is not None for s in self._buf):
            m_o = np.array([s.m_o_truth for s in self._buf])
        else:
            m_o = None
        return m_c, m_d, m_o


def check_uniform_spacing(timestamps: np.ndarray, tol: float = SPACING_TOL) -> float:
    """Return the nominal step; raise if any gap deviates from it by more than ``tol``."""
    t = np.asarray(timestamps, dtype=float)
    gaps = np.diff(t)
    if len(gaps) == 0:
        raise ValueError("need at least two timestamps")
    dt = float(np.median(gaps))
    if dt <= 0:
        raise ValueError("timestamps must increase")
    bad = np.nonzero(np.abs(gaps - dt) > tol * dt)[0]
    if len(bad):
        k = int(bad[0])
        raise ValueError(
            f"non-uniform spacing: gap {gaps[k]:.6g}s between t={t[k]:.6g} and t={t[k + 1]:.6g} "
            f"deviates from {dt:.6g}s by more than {tol:.0%}"
        )
    return dt


def finite_difference(timestamps: Sequence[float], values: np.ndarray, order: int = 1):
    """Forward differences of order 1 or 2.

    Returns ``(timestamps[:-order], derivatives)``; the step is the median gap.
    """
    if order not in (1, 2):
        raise ValueError(f"derivative order must be 1 or 2, got {order}")
    t = np.asarray(timestamps, dtype=float)
    x = np.asarray(values, dtype=float)
    if len(t) != len(x):
        raise ValueError("timestamps and values differ in length")
    if len(t) < order + 1:
        raise ValueError(f"need at least {order + 1} samples for order {order}")
    dt = check_uniform_spacing(t)
    if order == 1:
        d = (x[1:] - x[:-1]) / dt
    else:
        d = (x[2:] - 2.0 * x[1:-1] + x[:-2]) / dt**2
    return t[:-order], d


def relative_world_positions(camera_world: TimedTrajectory, object_camera_upscale: TimedTrajectory) -> np.ndarray:
    """``R_c^w(t) @ pbar_o^c(t)`` for every shared timestamp."""
    if camera_world.from_label is not FrameLabel.CAMERA or camera_world.to_label is not FrameLabel.WORLD:
        raise FrameMismatchError("camera->world", f"{camera_world.from_label.value}->{camera_world.to_label.value}",
                                 "build_samples")
    if object_camera_upscale.from_label is not FrameLabel.OBJECT or object_camera_upscale.to_label is not FrameLabel.CAMERA:
        raise FrameMismatchError("object->camera",
                                 f"{object_camera_upscale.from_label.value}->{object_camera_upscale.to_label.value}",
                                 "build_samples")
    check_same_timestamps(camera_world, object_camera_upscale)
    return np.einsum("nij,nj->ni", camera_world.rotations, object_camera_upscale.positions)


def build_samples(camera_world: TimedTrajectory, object_camera_upscale: TimedTrajectory, order: int = 1,
                  object_world_truth: Optional[TimedTrajectory] = None) -> List[MotionSample]:
    p_d = relative_world_positions(camera_world, object_camera_upscale)
    t, m_c = finite_difference(camera_world.timestamps, camera_world.positions, order)
    _, m_d = finite_difference(camera_world.timestamps, p_d, order)
    m_o = None
    if object_world_truth is not None:
        check_same_timestamps(camera_world, object_world_truth)
        _, m_o = finite_difference(object_world_truth.timestamps, object_world_truth.positions, order)
    return [
        MotionSample(float(t[k]), m_c[k], m_d[k], None if m_o is None else m_o[k])
        for k in range(len(t))
    ]
