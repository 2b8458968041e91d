"""Posterior-predictive calibration of scalar-observation filter runs."""

from __future__ import annotations
from dataclasses import dataclass
from typing import Sequence, TypedDict

import numpy as np
from scipy.stats import norm

from kalman_adapt.core.linear_filter import FilterStep
from kalman_adapt.exceptions import DimensionMismatch, InsufficientData

MIN_PREDICTIVE_EVENTS = 50
DEFAULT_NOMINAL_LEVELS = (0.5, 0.9)


class CalibrationReportDict(TypedDict):
    nominal_levels: list[float]
    empirical_coverage: list[float]
    num_trials: int


@dataclass(frozen=True)
class PredictiveEvents:
    """
    Gaussian one-step-ahead predictions N(mean, variance) and the values that
    were then observed.
    """

    means: np.ndarray
    variances: np.ndarray
    realized: np.ndarray

    def __len__(self) -> int:
        return len(self.realized)

    @classmethod
    def from_filter_steps(cls, steps: Sequence[FilterStep]) -> 'PredictiveEvents':
        """H μ_{t|t−1} and S_t = H P_{t|t−1} Hᵀ + R per scalar step."""
        if any(s.observation.obs_dim != 1 for s in steps):
            raise DimensionMismatch("calibration is defined for scalar observations")
        return cls(
            means=np.array([float(s.predictive_mean[0]) for s in steps]),
            variances=np.array([float(s.innovation_cov[0, 0]) for s in steps]),
            realized=np.array([float(s.observation.value[0]) for s in steps]),
        )

    @classmethod
    def concatenate(cls, events: Sequence['PredictiveEvents']) -> 'PredictiveEvents':
        if not events:
            return cls(np.zeros(0), np.zeros(0), np.zeros(0))
        return cls(
            means=np.concatenate([e.means for e in events]),
            variances=np.concatenate([e.variances for e in events]),
            realized=np.concatenate([e.realized for e in events]),
        )


@dataclass(frozen=True)
class CalibrationReport:
    nominal_levels: tuple[float, ...]
    empirical_coverage: tuple[float, ...]
    num_trials: int

    def coverage(self, level: float) -> float:
        return self.empirical_coverage[self.nominal_levels.index(level)]

    def as_dict(self) -> CalibrationReportDict:
        return {
            'nominal_levels': list(self.nominal_levels),
            'empirical_coverage': list(self.empirical_coverage),
            'num_trials': self.num_trials,
        }


def compute_calibration(
    traces: Sequence[Sequence[FilterStep]] | Sequence[PredictiveEvents],
    nominal_levels: Sequence[float] = DEFAULT_NOMINAL_LEVELS,
) -> CalibrationReport:
    """
    Empirical coverage of the central predictive intervals mean ± z·√variance,
    z = Φ⁻¹((1 + level)/2), pooled over every event of every trace.

    Raises
    ------
    InsufficientData
        If fewer than 50 predictive events are available.
    """
    events = PredictiveEvents.concatenate([
        t if isinstance(t, PredictiveEvents) else PredictiveEvents.from_filter_steps(t) for t in traces
    ])
    if len(events) < MIN_PREDICTIVE_EVENTS:
        raise InsufficientData(
            f"calibration needs at least {MIN_PREDICTIVE_EVENTS} predictive events, got {len(events)}"
        )
    standardized = np.abs(events.realized - events.means) / np.sqrt(events.variances)
    levels = tuple(float(level) for level in nominal_levels)
    coverage = tuple(
        float(np.mean(standardized <= norm.ppf(0.5 + level / 2))) for level in levels
    )
    return CalibrationReport(levels, coverage, len(events))
