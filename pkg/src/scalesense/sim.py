"""Ground-truth camera/object trajectories and synthetic feature tracks.

Rich motion uses one sinusoid per axis by default for both the camera and the
object (amplitudes 0.5-2 m, frequencies 0.1-1 Hz, random phases).  Object
frequencies are redrawn until each one is at least ``min_frequency_gap`` away
from every camera frequency.  Without that separation a finite window cannot
tell the two motions apart and the sample cross-covariance ``Cov(m_o, m_c)``
stays large, which biases the closed-form scale.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .geometry import (FrameLabel, TimedTrajectory, matrix_to_quat, so3_exp, write_trajectory)

UP = np.array([0.0, 0.0, 1.0])
MIN_VISIBLE_FEATURES = 8
# one gate evaluation with the default window (N_o = 200) and first-order differences
MIN_FRAMES = 201


class ScenarioKind(enum.Enum):
    RICH_MOTION = "RichMotion"
    C1_MIMIC_TRANSLATION = "C1_MimicTranslation"
    C2_STATIC_CAMERA = "C2_StaticCamera"
    C3_CONSTANT_VELOCITY_CAMERA = "C3_ConstantVelocityCamera"
    C4_STATIC_RELATIVE_OBSERVATION = "C4_StaticRelativeObservation"
    CUSTOM = "Custom"

    @classmethod
    def parse(cls, name: str) -> "ScenarioKind":
        for k in cls:
            if name in (k.value, k.name) or name.lower() == k.value.lower():
                return k
        short = {"rich": cls.RICH_MOTION, "c1": cls.C1_MIMIC_TRANSLATION, "c2": cls.C2_STATIC_CAMERA,
                 "c3": cls.C3_CONSTANT_VELOCITY_CAMERA, "c4": cls.C4_STATIC_RELATIVE_OBSERVATION,
                 "custom": cls.CUSTOM}
        try:
            return short[name.lower()]
        except KeyError:
            raise ValueError(f"unknown scenario kind {name!r}") from None


@dataclass(frozen=True)
class NoiseConfig:
    """Standard deviations. Pose noise is a per-frame random walk on the measured camera trajectory."""

    pose_position: float = 0.0
    pose_rotation: float = 0.0
    observation: float = 0.0
    relative_position: float = 0.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"noise.{f.name} must be non-negative")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_kind: ScenarioKind = ScenarioKind.RICH_MOTION
    true_scale: float = 0.43
    duration: float = 120.0
    rate: float = 2.5
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0
    sinusoids_per_axis: int = 1
    amplitude_range: Tuple[float, float] = (0.5, 2.0)
    frequency_range: Tuple[float, float] = (0.1, 1.0)
    min_frequency_gap: float = 0.05
    camera_offset: Tuple[float, float, float] = (0.0, -5.0, 0.0)
    camera_wobble: float = 0.05
    object_angular_rate: float = 0.3
    follower_deviation: float = 0.1
    constant_speed: float = 0.05
    num_features: int = 50
    feature_radius: float = 0.3
    fov_degrees: float = 90.0
    # Custom kind: per-axis sinusoid parameters, shape (3, K, 3) holding (amplitude, frequency, phase)
    custom_camera: Optional[tuple] = None
    custom_object: Optional[tuple] = None

    def __post_init__(self):
        if isinstance(self.scenario_kind, str):
            object.__setattr__(self, "scenario_kind", ScenarioKind.parse(self.scenario_kind))
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseConfig(**self.noise))
        if not self.true_scale > 0:
            raise ValueError("true_scale must be positive")
        if self.rate <= 0 or self.duration <= 0:
            raise ValueError("rate and duration must be positive")
        if self.num_frames < MIN_FRAMES:
            raise ValueError(f"rate*duration gives {self.num_frames} frames, need at least {MIN_FRAMES}")
        if self.num_features < 1:
            raise ValueError("num_features must be >= 1")
        if self.scenario_kind is ScenarioKind.CUSTOM and (self.custom_camera is None or self.custom_object is None):
            raise ValueError("Custom scenario needs custom_camera and custom_object sinusoid tables")

    @property
    def num_frames(self) -> int:
        return int(round(self.rate * self.duration))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scenario_kind"] = self.scenario_kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "noise" in d and isinstance(d["noise"], dict):
            d["noise"] = NoiseConfig(**d["noise"])
        for key in ("amplitude_range", "frequency_range", "camera_offset"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class FeatureTracks:
    """Normalized image observations of a rigid point cloud, one row per observation."""

    timestamps: np.ndarray          # (F,)
    feature_ids: np.ndarray         # (K,)
    frame_indices: np.ndarray       # (K,)
    uv: np.ndarray                  # (K, 2)
    region_centers: np.ndarray      # (F, 2), projection of the object origin (nan if behind)
    points_object: Optional[np.ndarray] = None   # (M, 3) metric points in the object frame
    warnings: Tuple[str, ...] = ()

    @property
    def num_frames(self) -> int:
        return len(self.timestamps)

    def frame(self, k: int) -> Dict[int, np.ndarray]:
        """Observations of frame ``k`` as ``{feature_id: (u, v)}``."""
        sel = self.frame_indices == k
        return {int(i): self.uv[j] for i, j in zip(self.feature_ids[sel], np.nonzero(sel)[0])}

    def by_frame(self) -> List[Dict[int, np.ndarray]]:
        out: List[Dict[int, np.ndarray]] = [dict() for _ in range(self.num_frames)]
        for fid, k, uv in zip(self.feature_ids, self.frame_indices, self.uv):
            out[int(k)][int(fid)] = uv
        return out

    def head(self, num_frames: int) -> "FeatureTracks":
        sel = self.frame_indices < num_frames
        return FeatureTracks(self.timestamps[:num_frames], self.feature_ids[sel], self.frame_indices[sel],
                             self.uv[sel], self.region_centers[:num_frames], self.points_object, self.warnings)


@dataclass(frozen=True)
class ScenarioOutput:
    config: ScenarioConfig
    camera_world_truth: TimedTrajectory
    camera_world: TimedTrajectory          # measured (pose noise applied)
    object_world_truth: TimedTrajectory
    object_camera_upscale: TimedTrajectory
    feature_tracks: FeatureTracks
    true_scale: float
    warnings: Tuple[str, ...] = ()

    @property
    def timestamps(self) -> np.ndarray:
        return self.camera_world_truth.timestamps


# ---------------------------------------------------------------------------
# motion generators

def _rngs(seed: int):
    motion, noise, cloud = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(motion), np.random.default_rng(noise), np.random.default_rng(cloud)


def _draw_frequencies(rng, shape, lo, hi, avoid=(), gap=0.0, max_tries=10000):
    avoid = np.asarray(avoid, dtype=float).reshape(-1)
    for _ in range(max_tries):
        f = rng.uniform(lo, hi, shape)
        if avoid.size == 0 or np.min(np.abs(f.reshape(-1, 1) - avoid.reshape(1, -1))) >= gap:
            return f
    raise RuntimeError("could not draw frequencies satisfying the minimum gap")


def _sinusoid_table(rng, cfg: ScenarioConfig, avoid=()) -> np.ndarray:
    """(3, K, 3) table of (amplitude, frequency, phase)."""
    k = cfg.sinusoids_per_axis
    freqs = _draw_frequencies(rng, (3, k), *cfg.frequency_range, avoid=avoid, gap=cfg.min_frequency_gap)
    amps = rng.uniform(*cfg.amplitude_range, (3, k))
    phases = rng.uniform(0.0, 2.0 * np.pi, (3, k))
    return np.stack([amps, freqs, phases], axis=-1)


def _eval_sinusoids(table: np.ndarray, t: np.ndarray) -> np.ndarray:
    table = np.asarray(table, dtype=float)
    a, f, ph = table[..., 0], table[..., 1], table[..., 2]
    arg = 2.0 * np.pi * f[None] * t[:, None, None] + ph[None]
    return np.sum(a[None] * np.sin(arg), axis=-1)


def look_at(camera_positions: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Camera-to-world rotations with +z toward the target, +x right and +y down (world z up)."""
    z = np.asarray(targets, dtype=float) - np.asarray(camera_positions, dtype=float)
    z = z / np.linalg.norm(z, axis=-1, keepdims=True)
    x = np.cross(z, UP)
    x = x / np.linalg.norm(x, axis=-1, keepdims=True)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=-1)


def _integrate_rotation(rng, t: np.ndarray, rate_amplitude: float) -> np.ndarray:
    """Rotations from a bounded sinusoidal body angular velocity, integrated step by step."""
    amps = rng.uniform(0.5, 1.0, 3) * rate_amplitude
    freqs = rng.uniform(0.05, 0.3, 3)
    phases = rng.uniform(0.0, 2.0 * np.pi, 3)
    omega = amps * np.sin(2.0 * np.pi * freqs * t[:, None] + phases)
    R = np.empty((len(t), 3, 3))
    R[0] = so3_exp(rng.normal(0.0, 0.5, 3))
    for k in range(1, len(t)):
        R[k] = R[k - 1] @ so3_exp(omega[k - 1] * (t[k] - t[k - 1]))
    return R


def _wobble(rng, t: np.ndarray, amplitude: float) -> np.ndarray:
    if amplitude == 0.0:
        return np.broadcast_to(np.eye(3), (len(t), 3, 3)).copy()
    freqs = rng.uniform(0.1, 0.5, 3)
    phases = rng.uniform(0.0, 2.0 * np.pi, 3)
    return so3_exp(amplitude * np.sin(2.0 * np.pi * freqs * t[:, None] + phases))


def _trajectories(cfg: ScenarioConfig, rng) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Ground-truth ``(p_c, R_c, p_o, R_o)`` in the world frame."""
    t = np.arange(cfg.num_frames) / cfg.rate
    offset = np.asarray(cfg.camera_offset, dtype=float)
    kind = cfg.scenario_kind

    if kind is ScenarioKind.CUSTOM:
        cam_table = np.asarray(cfg.custom_camera, dtype=float)
        obj_table = np.asarray(cfg.custom_object, dtype=float)
    else:
        cam_table = _sinusoid_table(rng, cfg)
        obj_table = _sinusoid_table(rng, cfg, avoid=cam_table[..., 1])
    p_o = _eval_sinusoids(obj_table, t)
    R_o = _integrate_rotation(rng, t, cfg.object_angular_rate)
    wobble = _wobble(rng, t, cfg.camera_wobble)

    if kind in (ScenarioKind.RICH_MOTION, ScenarioKind.CUSTOM):
        p_c = offset + _eval_sinusoids(cam_table, t)
        R_c = look_at(p_c, p_o) @ wobble
    elif kind is ScenarioKind.C1_MIMIC_TRANSLATION:
        # The camera copies the object translation; a small follower deviation along a
        # fixed oblique direction keeps Cov(m_d, m_c) away from zero.
        u = np.ones(3) / np.sqrt(3.0)
        f_dev = _draw_frequencies(rng, (1,), *cfg.frequency_range, avoid=obj_table[..., 1], gap=cfg.min_frequency_gap)[0]
        obj_energy = np.sum((2.0 * np.pi * obj_table[..., 1] * obj_table[..., 0]) ** 2)
        amp = np.sqrt(cfg.follower_deviation * obj_energy) / (2.0 * np.pi * f_dev)
        dev = amp * np.sin(2.0 * np.pi * f_dev * t + rng.uniform(0.0, 2.0 * np.pi))
        p_c = p_o + offset + dev[:, None] * u
        R_c = look_at(p_c, p_o) @ wobble
    elif kind is ScenarioKind.C2_STATIC_CAMERA:
        p_c = np.broadcast_to(offset, (len(t), 3)).copy()
        R_c = np.broadcast_to(look_at(offset, np.zeros(3)), (len(t), 3, 3)).copy()
    elif kind is ScenarioKind.C3_CONSTANT_VELOCITY_CAMERA:
        # heading in the horizontal plane perpendicular to the offset keeps the range bounded
        heading = rng.uniform(0.0, 2.0 * np.pi)
        v = cfg.constant_speed * np.array([np.cos(heading), 0.0, np.sin(heading)])
        p_c = offset + (t - 0.5 * t[-1])[:, None] * v
        R_c = look_at(p_c, p_o)
    elif kind is ScenarioKind.C4_STATIC_RELATIVE_OBSERVATION:
        p_c = offset + _eval_sinusoids(cam_table, t)
        R_fixed = look_at(offset, np.zeros(3))
        R_c = np.broadcast_to(R_fixed, (len(t), 3, 3)).copy()
        rel_pos = R_fixed.T @ (-offset)
        rel_rot = R_fixed.T @ R_o[0]
        p_o = p_c + rel_pos @ R_fixed.T
        R_o = np.broadcast_to(R_fixed @ rel_rot, (len(t), 3, 3)).copy()
    else:  # pragma: no cover
        raise ValueError(kind)
    return p_c, R_c, p_o, R_o


def _traj(t, p, R, from_label, to_label) -> TimedTrajectory:
    return TimedTrajectory(t, p, matrix_to_quat(R), from_label, to_label)


def _relative(p_c, R_c, p_o, R_o, scale):
    """Up-to-scale object-in-camera positions and rotations."""
    p_bar = np.einsum("nji,nj->ni", R_c, p_o - p_c) / scale
    R_rel = np.einsum("nji,njk->nik", R_c, R_o)
    return p_bar, R_rel


def _assemble(cfg: ScenarioConfig, p_c, R_c, p_o, R_o, noise_rng, cloud_rng) -> ScenarioOutput:
    t = np.arange(cfg.num_frames) / cfg.rate
    n = cfg.noise
    cam_truth = _traj(t, p_c, R_c, FrameLabel.CAMERA, FrameLabel.WORLD)
    obj_truth = _traj(t, p_o, R_o, FrameLabel.OBJECT, FrameLabel.WORLD)

    p_meas, R_meas = p_c, R_c
    if n.pose_position > 0:
        p_meas = p_c + np.cumsum(noise_rng.normal(0.0, n.pose_position, p_c.shape), axis=0)
    if n.pose_rotation > 0:
        walk = np.cumsum(noise_rng.normal(0.0, n.pose_rotation, p_c.shape), axis=0)
        R_meas = R_c @ so3_exp(walk)
    cam_meas = _traj(t, p_meas, R_meas, FrameLabel.CAMERA, FrameLabel.WORLD)

    p_bar, R_rel = _relative(p_c, R_c, p_o, R_o, cfg.true_scale)
    if n.relative_position > 0:
        p_bar = p_bar + noise_rng.normal(0.0, n.relative_position, p_bar.shape)
    obj_cam = _traj(t, p_bar, R_rel, FrameLabel.OBJECT, FrameLabel.CAMERA)

    points = sample_ball(cloud_rng, cfg.num_features, cfg.feature_radius)
    tracks = synthesize_feature_tracks(t, p_c, R_c, p_o, R_o, points, cfg.fov_degrees, n.observation, noise_rng)
    return ScenarioOutput(cfg, cam_truth, cam_meas, obj_truth, obj_cam, tracks, cfg.true_scale, tracks.warnings)


def generate(config: ScenarioConfig) -> ScenarioOutput:
    """Deterministic scenario for a fixed config and seed."""
    motion_rng, noise_rng, cloud_rng = _rngs(config.seed)
    p_c, R_c, p_o, R_o = _trajectories(config, motion_rng)
    return _assemble(config, p_c, R_c, p_o, R_o, noise_rng, cloud_rng)


# ---------------------------------------------------------------------------
# exact-independence construction

def orthogonalize_object_motion(output: ScenarioOutput, window: int = 200, order: int = 1) -> ScenarioOutput:
    """Make the sample cross-covariance of object and camera motion exactly zero
    over the first ``window`` motion samples, then regenerate observations.

    The object motion samples are projected off the span of the centered camera
    motion samples and reintegrated from the original initial conditions.  Past
    the window the position correction is held constant (``order=1``) or
    extrapolated linearly (``order=2``) so later motion samples are untouched.
    """
    cfg = output.config
    if cfg.scenario_kind not in (ScenarioKind.RICH_MOTION, ScenarioKind.CUSTOM):
        raise ValueError("orthogonalization expects a rich-motion scenario")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    t = output.timestamps
    n_frames = len(t)
    if window + order > n_frames:
        raise ValueError("window longer than the scenario")
    dt = 1.0 / cfg.rate
    p_c = output.camera_world_truth.positions
    p_o = output.object_world_truth.positions

    if order == 1:
        m_c = np.diff(p_c, axis=0)[:window] / dt
        m_o = np.diff(p_o, axis=0)[:window] / dt
    else:
        m_c = (p_c[2:] - 2 * p_c[1:-1] + p_c[:-2])[:window] / dt**2
        m_o = (p_o[2:] - 2 * p_o[1:-1] + p_o[:-2])[:window] / dt**2
    Mc = m_c - m_c.mean(axis=0)
    gram = Mc.T @ Mc
    if np.linalg.matrix_rank(gram) < 3:
        raise ValueError("camera motion is rank deficient over the window; cannot orthogonalize")
    m_new = m_o - Mc @ np.linalg.solve(gram, Mc.T @ m_o)

    p_new = p_o.copy()
    if order == 1:
        p_new[1:window + 1] = p_o[0] + np.cumsum(m_new * dt, axis=0)
        p_new[window + 1:] = p_o[window + 1:] + (p_new[window] - p_o[window])
    else:
        for k in range(window):
            p_new[k + 2] = 2 * p_new[k + 1] - p_new[k] + dt**2 * m_new[k]
        d1 = p_new[window + 1] - p_o[window + 1]
        slope = d1 - (p_new[window] - p_o[window])
        steps = np.arange(1, n_frames - window - 1)[:, None]
        p_new[window + 2:] = p_o[window + 2:] + d1 + steps * slope

    _, noise_rng, cloud_rng = _rngs(cfg.seed)
    R_c = output.camera_world_truth.rotations
    R_o = output.object_world_truth.rotations
    out = _assemble(cfg, p_c, R_c, p_new, R_o, noise_rng, cloud_rng)
    # the camera trajectories pass through untouched
    return dataclasses.replace(out, camera_world=output.camera_world, camera_world_truth=output.camera_world_truth)


# ---------------------------------------------------------------------------
# feature tracks

def sample_ball(rng, count: int, radius: float) -> np.ndarray:
    """Points uniform in a ball centred on the origin."""
    d = rng.normal(size=(count, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.uniform(0.0, 1.0, count) ** (1.0 / 3.0)
    return d * r[:, None]


def project_points(points_camera: np.ndarray, half_fov_tan: float = math.inf):
    """Normalized coordinates and a visibility mask (in front of the camera and inside the FOV)."""
    P = np.asarray(points_camera, dtype=float)
    z = P[..., 2]
    front = z > 1e-6
    safe = np.where(front, z, 1.0)
    uv = P[..., :2] / safe[..., None]
    vis = front & np.all(np.abs(uv) <= half_fov_tan, axis=-1)
    return uv, vis


def synthesize_feature_tracks(timestamps, p_c, R_c, p_o, R_o, points_object, fov_degrees: float = 90.0,
                              noise_std: float = 0.0, rng=None) -> FeatureTracks:
    """Project an object-fixed point cloud into every camera."""
    if len(points_object) < 1:
        raise ValueError("need at least one feature")
    half = math.tan(math.radians(fov_degrees) / 2.0)
    # world points per frame: R_o X + p_o, then into the camera: R_c^T (.) - R_c^T p_c
    Xw = np.einsum("nij,mj->nmi", R_o, points_object) + p_o[:, None, :]
    Pc = np.einsum("nji,nmj->nmi", R_c, Xw - p_c[:, None, :])
    uv, vis = project_points(Pc, half)
    origin_c = np.einsum("nji,nj->ni", R_c, p_o - p_c)
    centers, front = project_points(origin_c)
    centers = np.where(front[:, None], centers, np.nan)

    frames, feats = np.nonzero(vis)
    obs = uv[frames, feats]
    if noise_std > 0:
        if rng is None:
            raise ValueError("observation noise needs an rng")
        obs = obs + rng.normal(0.0, noise_std, obs.shape)
    warnings = tuple(
        f"frame {k}: only {int(c)} visible features" for k, c in enumerate(vis.sum(axis=1)) if c < MIN_VISIBLE_FEATURES
    )
    return FeatureTracks(np.asarray(timestamps, dtype=float), feats.astype(int), frames.astype(int), obs, centers,
                         np.asarray(points_object, dtype=float), warnings)


# ---------------------------------------------------------------------------
# files

TRACKS_HEADER = "feature_id,frame_index,u,v"
FRAMES_HEADER = "# frame_index timestamp center_u center_v"


def sidecar_path(tracks_path) -> Path:
    p = Path(tracks_path)
    return p.with_name(p.stem + ".frames" + p.suffix)


def write_tracks(path, tracks: FeatureTracks) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRACKS_HEADER + "\n")
        for fid, k, (u, v) in zip(tracks.feature_ids, tracks.frame_indices, tracks.uv):
            fh.write(f"{int(fid)},{int(k)},{float(u)!r},{float(v)!r}\n")
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        fh.write(FRAMES_HEADER + "\n")
        for k, (t, c) in enumerate(zip(tracks.timestamps, tracks.region_centers)):
            fh.write(f"{k} {float(t)!r} {float(c[0])!r} {float(c[1])!r}\n")


def read_tracks(path) -> FeatureTracks:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("feature_id"):
                continue
            parts = [p for p in line.replace(",", " ").split()]
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            rows.append((int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])))
    if not rows:
        raise ValueError(f"{path}: no observations")
    data = np.array(rows, dtype=float)
    side = sidecar_path(path)
    if side.exists():
        frames = np.loadtxt(side, comments="#", ndmin=2)
        order = np.argsort(frames[:, 0])
        frames = frames[order]
        timestamps = frames[:, 1]
        centers = frames[:, 2:4] if frames.shape[1] >= 4 else np.full((len(frames), 2), np.nan)
    else:
        n = int(data[:, 1].max()) + 1
        timestamps = np.arange(n, dtype=float)
        centers = np.full((n, 2), np.nan)
    return FeatureTracks(timestamps, data[:, 0].astype(int), data[:, 1].astype(int), data[:, 2:4], centers)


def write_scenario(out_dir, output: ScenarioOutput) -> Dict[str, str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "camera_world": "camera_world.csv",
        "camera_world_truth": "camera_world_truth.csv",
        "object_world_truth": "object_world_truth.csv",
        "object_camera_upscale": "object_camera_upscale.csv",
        "tracks": "tracks.csv",
    }
    write_trajectory(out / files["camera_world"], output.camera_world)
    write_trajectory(out / files["camera_world_truth"], output.camera_world_truth)
    write_trajectory(out / files["object_world_truth"], output.object_world_truth)
    write_trajectory(out / files["object_camera_upscale"], output.object_camera_upscale)
    write_tracks(out / files["tracks"], output.feature_tracks)
    manifest = {
        "config": output.config.to_dict(),
        "true_scale": output.true_scale,
        "num_frames": len(output.timestamps),
        "files": files,
        "warnings": list(output.warnings),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return files
