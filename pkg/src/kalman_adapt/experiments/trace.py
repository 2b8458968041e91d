"""Per-step experiment records and per-seed execution."""

from __future__ import annotations
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Iterable, Sequence, TypedDict, TypeVar
import logging

import numpy as np
from numpy.typing import ArrayLike

from kalman_adapt.core.linear_filter import FilterStep
from kalman_adapt.exceptions import KalmanAdaptException, LengthMismatch

logger = logging.getLogger(__name__)

T = TypeVar('T')


class StepRecordDict(TypedDict):
    step: int
    trace_P: float | None
    lambda_min: float | None
    gain_norm: float | None
    innovation: float | None
    sq_error: float | None
    heldout_metric: float | None


@dataclass(frozen=True)
class StepRecord:
    """
    Quantities reported after one observation; `None` marks a quantity the run
    does not have (no covariance for SGD, no truth, no heldout set).
    """

    step: int
    trace_P: float | None = None
    lambda_min: float | None = None
    gain_norm: float | None = None
    innovation: float | None = None
    sq_error: float | None = None
    heldout_metric: float | None = None

    def as_dict(self) -> StepRecordDict:
        return asdict(self)


RECORD_FIELDS = tuple(f.name for f in fields(StepRecord))


@dataclass(frozen=True)
class ExperimentTrace:
    """
    Step records of one run.

    Attributes & Properties
    -----------------------
    records : list[StepRecord]
        Strictly increasing in `step`.
    config_fingerprint : str
        SHA-256 of the run configuration.
    seed : int
        Root seed of the run.
    label : str
        Arm of the experiment (e.g. `kalman_q0.01`, `sgd_0.1`); empty for the
        main arm.
    """

    records: list[StepRecord]
    config_fingerprint: str
    seed: int
    label: str = ''

    def __post_init__(self) -> None:
        steps = [r.step for r in self.records]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise KalmanAdaptException("step records must be strictly increasing in step")

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        """One record field as a float array; missing values become nan."""
        return np.array([
            np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records
        ], dtype=float)

    @classmethod
    def from_filter_steps(
        cls,
        steps: Sequence[FilterStep],
        config_fingerprint: str,
        seed: int,
        label: str = '',
        truths: ArrayLike | None = None,
        heldout: ArrayLike | None = None,
    ) -> 'ExperimentTrace':
        """
        Records from filter steps; step t counts observations consumed (1-based).

        `truths` is a static d-vector or an (n, d) array of per-step true
        states; `heldout` is a per-step metric.
        """
        n = len(steps)
        if truths is not None and n:
            truths = np.asarray(truths, dtype=float)
            truths = np.broadcast_to(truths, (n, steps[0].posterior.dim)) if truths.ndim == 1 else truths
            if truths.shape[0] != n:
                raise LengthMismatch(f"{truths.shape[0]} truths for {n} steps")
        if heldout is not None and len(heldout) != n:
            raise LengthMismatch(f"{len(heldout)} heldout values for {n} steps")

        records = []
        for i, s in enumerate(steps):
            records.append(StepRecord(
                step=i + 1,
                trace_P=s.posterior.trace,
                lambda_min=s.posterior.precision_min_eigenvalue,
                gain_norm=s.gain_norm,
                innovation=float(s.innovation[0]) if s.innovation.size == 1 else float(np.linalg.norm(s.innovation)),
                sq_error=None if truths is None else float(np.sum((s.posterior.mean - truths[i]) ** 2)),
                heldout_metric=None if heldout is None else float(heldout[i]),
            ))
        return cls(records, config_fingerprint, seed, label)

    @classmethod
    def from_iterates(
        cls,
        iterates: np.ndarray,
        truths: ArrayLike,
        config_fingerprint: str,
        seed: int,
        label: str,
    ) -> 'ExperimentTrace':
        """Records for a point-estimate baseline: only the squared error is available."""
        errors = squared_errors(iterates, truths)
        records = [
            StepRecord(step=i + 1, sq_error=float(e))
            for i, e in enumerate(errors)
        ]
        return cls(records, config_fingerprint, seed, label)


def squared_errors(estimates: ArrayLike, truths: ArrayLike) -> np.ndarray:
    """‖estimate_t − truth_t‖² per row; overflowed estimates give inf."""
    estimates = np.asarray(estimates, dtype=float)
    with np.errstate(over='ignore', invalid='ignore'):
        errors = np.sum((estimates - np.asarray(truths, dtype=float)) ** 2, axis=1)
    return np.where(np.isfinite(errors), errors, np.inf)


def filter_errors(steps: Sequence[FilterStep], truths: ArrayLike) -> np.ndarray:
    return squared_errors(np.array([s.posterior.mean for s in steps]), truths)


@dataclass
class ExperimentResult:
    """
    Everything one experiment produced.

    Attributes & Properties
    -----------------------
    name : str
        Experiment name.
    traces : list[ExperimentTrace]
        Per-seed traces, written one file each.
    summary : dict[str, Any]
        Aggregate report, written once as JSON.
    """

    name: str
    traces: list[ExperimentTrace] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return {
            'name': self.name,
            'num_traces': len(self.traces),
            'summary': self.summary,
        }


def seed_streams(seed: int, n: int) -> list[np.random.Generator]:
    """n independent generators split from one root seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def map_seeds(func: Callable[[int], T], seeds: Iterable[int], max_workers: int = 1) -> list[T]:
    """Apply `func` to every seed, in seed order; a process pool when max_workers > 1."""
    seeds = list(seeds)
    if max_workers <= 1 or len(seeds) <= 1:
        return [func(seed) for seed in seeds]
    logger.debug("Running %d seeds on %d workers", len(seeds), max_workers)
    with ProcessPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(func, seeds))


def half_life(series: ArrayLike, initial: float) -> int:
    """First 1-based step at which the series reaches half of `initial`; len+1 if never."""
    series = np.asarray(series, dtype=float)
    reached = np.flatnonzero(series <= initial / 2)
    return int(reached[0]) + 1 if reached.size else len(series) + 1
