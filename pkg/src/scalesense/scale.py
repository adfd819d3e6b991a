"""Closed-form metric scale from motion covariances, plus the observability gate.

The scale minimizes the summed squared cross-covariances between the
reconstructed object motion ``s * m_d + m_c`` and the camera motion ``m_c``.
That objective is a quadratic in ``s``:

    f(s) = a s^2 + b s + c,  a = sum(C_dc**2), b = 2 sum(C_dc * C_cc), c = sum(C_cc**2)

so the minimizer is ``-b / (2a)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Sequence

import numpy as np

from .motion import MotionSample, SampleWindow


class DegenerateScaleError(ArithmeticError):
    """The closed form has a vanishing denominator."""


class Verdict(enum.Enum):
    ACCEPTED = "Accepted"
    REJECTED_I = "RejectedI"
    REJECTED_II = "RejectedII"
    REJECTED_III = "RejectedIII"


def sample_covariance(xs, ys) -> np.ndarray:
    """Unbiased cross-covariance ``1/(N-1) sum (x - xbar)(y - ybar)^T`` of paired 3-vectors."""
    x = np.asarray(xs, dtype=float).reshape(-1, 3)
    y = np.asarray(ys, dtype=float).reshape(-1, 3)
    if len(x) != len(y):
        raise ValueError(f"sample counts differ: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("need at least two samples for a covariance")
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    return xc.T @ yc / (len(x) - 1)


def objective(cov_dc, cov_cc, s_hat: float) -> float:
    """Sum of squared entries of ``s_hat * cov_dc + cov_cc``."""
    m = s_hat * np.asarray(cov_dc, dtype=float) + np.asarray(cov_cc, dtype=float)
    return float(np.sum(m * m))


def closed_form_scale(cov_dc, cov_cc) -> float:
    cov_dc = np.asarray(cov_dc, dtype=float)
    cov_cc = np.asarray(cov_cc, dtype=float)
    denom = float(np.sum(cov_dc * cov_dc))
    if denom <= 0.0 or not math.isfinite(denom):
        raise DegenerateScaleError("sum of squared Cov(m_d, m_c) entries is zero")
    return -float(np.sum(cov_dc * cov_cc)) / denom


def error_ratio_diagnostic(cov_oc_truth, cov_cc) -> float:
    """Relative scale error predicted from the true object/camera cross-covariance.

    Simulation only: needs ``Cov(m_o, m_c)`` from ground truth.
    """
    oc = np.asarray(cov_oc_truth, dtype=float)
    cc = np.asarray(cov_cc, dtype=float)
    diff = cc - oc
    denom = float(np.sum(diff * diff))
    if denom <= 0.0:
        raise DegenerateScaleError("Cov(m_c, m_c) equals Cov(m_o, m_c); error ratio undefined")
    return float(np.sum(oc * diff)) / denom


@dataclass(frozen=True)
class CovarianceSet:
    cov_dc: np.ndarray
    cov_cc: np.ndarray
    cov_oc_hat: Optional[np.ndarray]
    sample_count: int

    @classmethod
    def from_arrays(cls, m_c, m_d, s_hat: Optional[float] = None) -> "CovarianceSet":
        cov_dc = sample_covariance(m_d, m_c)
        cov_cc = sample_covariance(m_c, m_c)
        oc_hat = None if s_hat is None or not math.isfinite(s_hat) else s_hat * cov_dc + cov_cc
        return cls(cov_dc, cov_cc, oc_hat, len(np.asarray(m_c).reshape(-1, 3)))


@dataclass(frozen=True)
class GateThresholds:
    """Observability thresholds.

    With ``epsilon_relative`` the residual-correlation bound is
    ``epsilon_t1 * stat_cc`` so that it carries the units of ``f``.
    """

    epsilon_t1: float = 0.05
    rho_t1: float = 1e-3
    rho_t2: float = 1e-3
    epsilon_relative: bool = True

    def __post_init__(self):
        for name in ("epsilon_t1", "rho_t1", "rho_t2"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be strictly positive, got {v}")

    def epsilon_for(self, stat_cc: float) -> float:
        return self.epsilon_t1 * stat_cc if self.epsilon_relative else self.epsilon_t1


@dataclass(frozen=True)
class ScaleEstimate:
    s_hat: float
    objective_at_optimum: float
    stat_cc: float
    stat_dc: float
    verdict: Verdict
    failed_subconditions: FrozenSet[str]
    epsilon: float
    timestamp: Optional[float] = None
    error_ratio: Optional[float] = None

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPTED

    @property
    def quality(self) -> float:
        """``f(s*) / stat_dc``; smaller is better, used to fuse accepted estimates."""
        if self.stat_dc <= 0.0:
            return math.inf
        return self.objective_at_optimum / self.stat_dc

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None or not math.isfinite(x) else float(x)

        return {
            "timestamp": num(self.timestamp),
            "s_hat": num(self.s_hat),
            "verdict": self.verdict.value,
            "failed_subconditions": sorted(self.failed_subconditions),
            "objective_at_optimum": num(self.objective_at_optimum),
            "epsilon": num(self.epsilon),
            "stat_cc": num(self.stat_cc),
            "stat_dc": num(self.stat_dc),
            "error_ratio": num(self.error_ratio),
        }


# Subconditions are checked II -> III -> I: a frozen camera makes both energy
# statistics vanish and must report II.
CHECK_ORDER = ("II", "III", "I")
_VERDICT_OF = {"I": Verdict.REJECTED_I, "II": Verdict.REJECTED_II, "III": Verdict.REJECTED_III}


def estimate_from_arrays(m_c, m_d, thresholds: GateThresholds, m_o=None,
                         timestamp: Optional[float] = None) -> ScaleEstimate:
    """Gate evaluation on raw ``(N, 3)`` motion arrays."""
    cov_dc = sample_covariance(m_d, m_c)
    cov_cc = sample_covariance(m_c, m_c)
    stat_cc = float(np.sum(cov_cc * cov_cc))
    stat_dc = float(np.sum(cov_dc * cov_dc))
    try:
        s_hat = closed_form_scale(cov_dc, cov_cc)
        f_opt = objective(cov_dc, cov_cc, s_hat)
    except DegenerateScaleError:
        # f is constant when cov_dc vanishes; any s minimizes it
        s_hat, f_opt = math.nan, stat_cc
    eps = thresholds.epsilon_for(stat_cc)

    failed = set()
    if not stat_cc >= thresholds.rho_t1:
        failed.add("II")
    if not stat_dc >= thresholds.rho_t2:
        failed.add("III")
    if not (math.isfinite(s_hat) and f_opt <= eps):
        failed.add("I")
    verdict = Verdict.ACCEPTED
    for name in CHECK_ORDER:
        if name in failed:
            verdict = _VERDICT_OF[name]
            break

    ratio = None
    if m_o is not None:
        try:
            ratio = error_ratio_diagnostic(sample_covariance(m_o, m_c), cov_cc)
        except DegenerateScaleError:
            ratio = math.nan
    return ScaleEstimate(s_hat, f_opt, stat_cc, stat_dc, verdict, frozenset(failed), eps, timestamp, ratio)


def evaluate_gate(samples: SampleWindow, thresholds: GateThresholds) -> ScaleEstimate:
    """Closed-form scale and observability verdict for a full sample window."""
    if not samples.full:
        raise ValueError(f"sample window holds {len(samples)} of {samples.capacity} samples")
    m_c, m_d, m_o = samples.arrays()
    last = samples.snapshot()[-1].timestamp
    return estimate_from_arrays(m_c, m_d, thresholds, m_o=m_o, timestamp=last)


class ScaleTracker:
    """Streams motion samples, evaluates the gate every ``stride`` samples once
    the window is full, and keeps the accepted estimates."""

    def __init__(self, thresholds: GateThresholds, capacity: int = 200, stride: int = 20):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.thresholds = thresholds
        self.window = SampleWindow(capacity)
        self.stride = stride
        self.evaluations: List[ScaleEstimate] = []
        self._since_eval = 0

    def push(self, sample: MotionSample) -> Optional[ScaleEstimate]:
        self.window.push(sample)
        if not self.window.full:
            return None
        if self.evaluations and self._since_eval + 1 < self.stride:
            self._since_eval += 1
            return None
        self._since_eval = 0
        est = evaluate_gate(self.window, self.thresholds)
        self.evaluations.append(est)
        return est

    def extend(self, samples: Sequence[MotionSample]) -> None:
        for s in samples:
            self.push(s)

    @property
    def accepted(self) -> List[ScaleEstimate]:
        return [e for e in self.evaluations if e.accepted]

    def first_accepted(self) -> Optional[ScaleEstimate]:
        acc = self.accepted
        return acc[0] if acc else None

    def fused(self) -> Optional[ScaleEstimate]:
        """Accepted estimate with the smallest ``f(s*) / stat_dc``."""
        acc = self.accepted
        if not acc:
            return None
        return min(acc, key=lambda e: e.quality)

    def overall_verdict(self) -> Optional[Verdict]:
        """Accepted if any evaluation passed, else the most frequent rejection."""
        if not self.evaluations:
            return None
        if self.accepted:
            return Verdict.ACCEPTED
        counts = {}
        for e in self.evaluations:
            counts[e.verdict] = counts.get(e.verdict, 0) + 1
        # ties resolve to the earliest-seen verdict
        order = []
        for e in self.evaluations:
            if e.verdict not in order:
                order.append(e.verdict)
        return max(order, key=lambda v: (counts[v], -order.index(v)))
