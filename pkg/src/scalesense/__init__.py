"""Metric scale and world trajectory of a dynamic object observed by a moving monocular camera."""

from .geometry import (FrameId, FrameLabel, FrameMismatchError, Pose, ScaledPose, TimedTrajectory, compose,
                       read_trajectory, recover_world_pose, recover_world_trajectory, rotate_relative_position,
                       write_trajectory)
from .motion import MotionSample, SampleWindow, build_samples, finite_difference
from .scale import (CovarianceSet, DegenerateScaleError, GateThresholds, ScaleEstimate, ScaleTracker, Verdict,
                    closed_form_scale, error_ratio_diagnostic, estimate_from_arrays, evaluate_gate, objective,
                    sample_covariance)

__all__ = [
    "FrameId", "FrameLabel", "FrameMismatchError", "Pose", "ScaledPose", "TimedTrajectory", "compose",
    "read_trajectory", "recover_world_pose", "recover_world_trajectory", "rotate_relative_position",
    "write_trajectory", "MotionSample", "SampleWindow", "build_samples", "finite_difference", "CovarianceSet",
    "DegenerateScaleError", "GateThresholds", "ScaleEstimate", "ScaleTracker", "Verdict", "closed_form_scale",
    "error_ratio_diagnostic", "estimate_from_arrays", "evaluate_gate", "objective", "sample_covariance",
]
