"""Inverted-U operator performance model.

Maps normalized cognitive workload on [0, 1] to task performance with a
Gaussian curve (performance peaks at an optimal workload ``mu`` and falls
off on both sides), fuses a subjective and an objective workload channel
into one operator score, and predicts the score after a workload change.

All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

ISA_MIN = -2
ISA_MAX = 2


def clamp01(value: float) -> float:
    """Clamp a float into [0, 1]."""
    return min(1.0, max(0.0, float(value)))


def workload(value: float, *, clamp: bool = False) -> float:
    """Validate a workload level, or clamp it into range when ``clamp=True``.

    Workload levels are dimensionless and live on [0, 1]. Out-of-range
    values raise ``ValueError`` unless the caller opts into clamping.
    """
    v = float(value)
    if math.isnan(v):
        raise ValueError("workload level must not be NaN")
    if clamp:
        return clamp01(v)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"workload level {v!r} outside [0, 1]")
    return v


def isa_score(value: int) -> int:
    """Validate a five-point self-assessment score in {-2, -1, 0, +1, +2}."""
    v = int(value)
    if v != value or not ISA_MIN <= v <= ISA_MAX:
        raise ValueError(f"self-assessment score {value!r} not in -2..+2")
    return v


def peak_amplitude(sigma: float) -> float:
    """Amplitude that normalizes the curve peak to exactly 1: sigma * sqrt(2*pi)."""
    return sigma * math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ChannelParams:
    """Gaussian curve parameters for one workload channel.

    ``mu`` is the optimal workload (curve peak location), ``sigma`` the
    curve width in workload units, and ``amplitude`` the area/scale
    constant. ``amplitude=None`` selects the peak-normalizing default
    ``sigma * sqrt(2*pi)``, which makes the maximum performance exactly 1.
    """

    mu: float = 0.5
    sigma: float = 0.2
    amplitude: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu={self.mu} outside [0, 1]")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.amplitude is None:
            object.__setattr__(self, "amplitude", peak_amplitude(self.sigma))
        if not self.amplitude > 0.0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")


@dataclass(frozen=True)
class PerformanceModel:
    """Two-channel operator performance model.

    Each operator has a subjective channel (self-reported workload) and an
    objective channel (predicted workload). The fused score is the weighted
    sum ``objective_weight * P(s_obj) + subjective_weight * P(s_subj)``;
    the weights must sum to 1 (both 0.5 by default).
    """

    subjective: ChannelParams = field(default_factory=ChannelParams)
    objective: ChannelParams = field(default_factory=ChannelParams)
    objective_weight: float = 0.5
    subjective_weight: float = 0.5

    def __post_init__(self) -> None:
        for name in ("objective_weight", "subjective_weight"):
            w = getattr(self, name)
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"{name}={w} outside [0, 1]")
        if abs(self.objective_weight + self.subjective_weight - 1.0) > 1e-9:
            raise ValueError(
                "channel weights must sum to 1, got "
                f"{self.objective_weight} + {self.subjective_weight}"
            )


def performance_curve(s: float, params: ChannelParams) -> float:
    """Performance at workload ``s``: A / (sigma*sqrt(2*pi)) * exp(-(s-mu)^2 / (2*sigma^2)).

    Maximum over ``s`` is attained at ``s == mu``; with the peak-normalizing
    amplitude the maximum is exactly 1.
    """
    z = (s - params.mu) / params.sigma
    return params.amplitude / (params.sigma * math.sqrt(2.0 * math.pi)) * math.exp(-0.5 * z * z)


def calibrate_amplitude(samples: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal area under an empirical workload->performance curve.

    ``samples`` are (workload, performance) pairs with strictly increasing
    workloads; the returned area is used as the curve amplitude when a
    measured performance profile is available.
    """
    if len(samples) < 2:
        raise ValueError("amplitude calibration needs at least 2 samples")
    area = 0.0
    for (x0, y0), (x1, y1) in zip(samples, samples[1:]):
        if not x1 > x0:
            raise ValueError(f"sample workloads must be strictly increasing, got {x0} -> {x1}")
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def isa_to_workload(score: int) -> float:
    """Map a five-point score in -2..+2 onto the normalized workload scale: (score+2)/4."""
    return (isa_score(score) + 2) / 4.0


def operator_performance(s_subj: float, s_obj: float, model: PerformanceModel) -> float:
    """Fused operator score: objective_weight*P(s_obj) + subjective_weight*P(s_subj)."""
    return model.objective_weight * performance_curve(
        s_obj, model.objective
    ) + model.subjective_weight * performance_curve(s_subj, model.subjective)


def team_performance(perfs: Sequence[float]) -> float:
    """Team score: arithmetic mean of per-operator scores."""
    if len(perfs) == 0:
        raise ValueError("team performance of an empty team is undefined")
    return sum(perfs) / len(perfs)


def predict_next_state(s: float, delta_w: float) -> float:
    """One-step workload transition ``s + delta_w``, saturated by clamping to [0, 1]."""
    return clamp01(s + delta_w)


def predict_next_performance(
    s_subj: float, s_obj: float, delta_w: float, model: PerformanceModel
) -> float:
    """Predicted fused score after both channels shift by ``delta_w``."""
    return operator_performance(
        predict_next_state(s_subj, delta_w),
        predict_next_state(s_obj, delta_w),
        model,
    )
