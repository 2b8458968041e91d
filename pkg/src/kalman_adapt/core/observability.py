"""Observability and Covariance-Contraction Analysis

Report-only checks over filter traces: finite-horizon observability Gramians,
information accumulation per window, exponential contraction of the posterior
covariance, boundedness of the covariance under process noise, and the
mean-square-error envelope of the posterior mean.

None of the `check_*` functions raise when a property fails; the verdict is
carried by the `passed` property of the returned report. Preconditions (a
window longer than the trace, mismatched lengths) still raise.

Notes
-----
- Loewner comparisons X ⪰ Y are evaluated as λ_min(X − Y) ≥ −LOEWNER_TOLERANCE,
  scaled by ‖X‖ for precision matrices larger than 1.
- The operator norm of a covariance is its spectral norm.
- α, the per-window lower bound on information, is measured from the Gramian
  and never assumed.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, TypedDict

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import solve

from kalman_adapt.core.belief import GaussianBelief, PrecisionBelief, to_information
from kalman_adapt.core.linear_filter import (
    FilterStep,
    Observation,
    StateSpaceModel,
    run_filter,
)
from kalman_adapt.exceptions import DimensionMismatch, LengthMismatch, WindowTooShort

LOEWNER_TOLERANCE = 1e-9
RANK_TOLERANCE = 1e-10


# ── gramians ───────────────────────────────────────────────────────────────────

class GramianReportDict(TypedDict):
    window_start: int
    window_length: int
    min_eigenvalue: float
    rank: int


class GramianReport:
    """
    Finite-horizon observability Gramian W_{t,T} over one window.

    Parameters
    ----------
    gramian : np.ndarray
        W_{t,T} (d×d, symmetric PSD).
    window_start : int
        First observation index t of the window.
    window_length : int
        Number of observations T in the window.

    Attributes & Properties
    -----------------------
    min_eigenvalue : float
        λ_min(W), the window's α. Cached property.
    rank : int
        Numerical rank of W (eigenvalues above 1e-10 relative to the largest). Cached property.
    """

    def __init__(self, gramian: np.ndarray, window_start: int, window_length: int) -> None:
        gramian = (gramian + gramian.T) / 2
        gramian.setflags(write=False)
        self.gramian = gramian
        self.window_start = window_start
        self.window_length = window_length

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(window_start={self.window_start}, "
            f"window_length={self.window_length}, min_eigenvalue={self.min_eigenvalue:.6g})"
        )

    @cached_property
    def _eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.gramian)

    @cached_property
    def min_eigenvalue(self) -> float:
        return float(self._eigenvalues[0])

    @cached_property
    def rank(self) -> int:
        top = self._eigenvalues[-1]
        if top <= 0:
            return 0
        return int(np.sum(self._eigenvalues > RANK_TOLERANCE * max(top, 1.0)))

    def as_dict(self) -> GramianReportDict:
        return {
            'window_start': self.window_start,
            'window_length': self.window_length,
            'min_eigenvalue': self.min_eigenvalue,
            'rank': self.rank,
        }


def gramian(
    model: StateSpaceModel,
    observations: Sequence[Observation],
    t: int = 0,
    T: int | None = None,
) -> GramianReport:
    """
    W = Σ_{k=t}^{t+T−1} (A^{k−t})ᵀ H_kᵀ R_k⁻¹ H_k A^{k−t}.

    `T` defaults to the rest of the stream from `t`.

    Raises
    ------
    WindowTooShort
        If fewer than T observations are available from index t.
    """
    T = len(observations) - t if T is None else T
    if t < 0 or T < 0 or t + T > len(observations):
        raise WindowTooShort(
            f"window [{t}, {t + T}) needs {T} observations, only {max(len(observations) - t, 0)} available"
        )
    d = model.state_dim
    w = np.zeros((d, d))
    power = np.eye(d)
    for obs in observations[t:t + T]:
        if obs.state_dim != d:
            raise DimensionMismatch(f"gramian: expected state dimension {d}, got {obs.state_dim}")
        w += power.T @ obs.information @ power
        power = model.transition @ power
    return GramianReport(w, t, T)


def window_gramians(
    model: StateSpaceModel,
    observations: Sequence[Observation],
    T: int,
) -> list[GramianReport]:
    """Gramians of the consecutive non-overlapping windows [0, T), [T, 2T), …"""
    if T < 1:
        raise WindowTooShort("window length must be at least 1")
    return [gramian(model, observations, t, T) for t in range(0, len(observations) - T + 1, T)]


# ── information accumulation ───────────────────────────────────────────────────

def _precision_series(trace: Sequence[FilterStep] | Sequence[PrecisionBelief]) -> list[PrecisionBelief]:
    if trace and isinstance(trace[0], FilterStep):
        return [to_information(trace[0].prior)] + [to_information(s.posterior) for s in trace]
    return list(trace)


@dataclass(frozen=True)
class AccumulationWindow:
    window_start: int
    window_length: int
    alpha: float
    margin: float
    residual: float
    scale: float = 1.0

    @property
    def passed(self) -> bool:
        return self.margin >= -LOEWNER_TOLERANCE * max(self.scale, 1.0)


@dataclass(frozen=True)
class AccumulationReport:
    """Per-window λ_min(Λ_{t+T} − Λ_t − αI) and Frobenius residual ‖Λ_{t+T} − Λ_t − W‖."""

    windows: list[AccumulationWindow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(w.passed for w in self.windows)

    @property
    def max_residual(self) -> float:
        return max((w.residual for w in self.windows), default=0.0)

    def as_dict(self) -> dict:
        return {
            'passed': self.passed,
            'max_residual': self.max_residual,
            'windows': [
                {'window_start': w.window_start, 'alpha': w.alpha, 'margin': w.margin, 'passed': w.passed}
                for w in self.windows
            ],
        }


def check_information_accumulation(
    filter_trace: Sequence[FilterStep] | Sequence[PrecisionBelief],
    gramians: Sequence[GramianReport],
) -> AccumulationReport:
    """
    Verify Λ_{t+T} ⪰ Λ_t + αI for every Gramian window.

    `filter_trace` is either a sequence of FilterStep (converted to information
    form, the first prior included) or a sequence of PrecisionBelief whose
    first element is the belief before any observation. Either way entry k of
    the precision series is the belief after k observations.

    The trace is expected to come from identity dynamics without process noise,
    where the residual Λ_{t+T} − Λ_t − W is zero up to rounding.
    """
    series = _precision_series(filter_trace)
    windows = []
    for report in gramians:
        t, T = report.window_start, report.window_length
        if t + T > len(series) - 1:
            raise WindowTooShort(f"window [{t}, {t + T}) exceeds a trace of {len(series) - 1} steps")
        gained = series[t + T].information_matrix - series[t].information_matrix
        alpha = report.min_eigenvalue
        margin = float(np.linalg.eigvalsh(gained - alpha * np.eye(report.gramian.shape[0]))[0])
        residual = float(np.linalg.norm(gained - report.gramian, 'fro'))
        scale = float(np.linalg.norm(series[t + T].information_matrix, 2))
        windows.append(AccumulationWindow(t, T, alpha, margin, residual, scale))
    return AccumulationReport(windows)


# ── contraction ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ContractionReport:
    """
    Empirical exponential-contraction fit ‖P_t‖ ≈ C‖P_0‖ρ^⌊t/T⌋.

    Attributes & Properties
    -----------------------
    trace_series : np.ndarray
        trace(P_t) for t = 1..n (posteriors).
    precision_min_eig_series : np.ndarray
        λ_min(Λ_t) for t = 1..n.
    fitted_rate : float
        ρ, fitted over the final two-thirds of the trace.
    fit_constant : float
        C.
    window : int
        T.
    loewner_checked : bool
        Whether P_{t+T} ⪯ (Λ_t + αI)⁻¹ was checked (identity dynamics without process noise).
    loewner_violations : list[int]
        Window starts where the Loewner bound failed.
    """

    trace_series: np.ndarray
    precision_min_eig_series: np.ndarray
    fitted_rate: float
    fit_constant: float
    window: int
    loewner_checked: bool = False
    loewner_violations: list[int] = field(default_factory=list)

    @property
    def contracting(self) -> bool:
        return self.fitted_rate < 1.0

    @property
    def precision_nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.precision_min_eig_series) >= -LOEWNER_TOLERANCE))

    @property
    def passed(self) -> bool:
        return self.contracting and not self.loewner_violations

    def as_dict(self) -> dict:
        return {
            'fitted_rate': self.fitted_rate,
            'fit_constant': self.fit_constant,
            'window': self.window,
            'contracting': self.contracting,
            'loewner_checked': self.loewner_checked,
            'loewner_violations': list(self.loewner_violations),
        }


def log_linear_fit(x: ArrayLike, values: ArrayLike) -> tuple[float, float]:
    """
    Least-squares line through (x, log value) over the positive values.

    A covariance that collapsed to zero has no logarithm; those points are
    dropped. With fewer than two distinct x left the decay is complete and
    (−inf, −inf) is returned, so exp() of the slope is a rate of 0.
    """
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    positive = values > 0
    if np.unique(x[positive]).size < 2:
        return -np.inf, -np.inf
    slope, intercept = np.polyfit(x[positive], np.log(values[positive]), 1)
    return float(slope), float(intercept)


def check_contraction(
    trace: Sequence[FilterStep],
    window: int,
    model: StateSpaceModel | None = None,
) -> ContractionReport:
    """
    Fit the per-window decay factor ρ of ‖P_t‖ and check the Loewner bound.

    log‖P_t‖ is regressed by ordinary least squares on ⌊t/T⌋ over the final two
    thirds of the trace (t = 1..n); ρ = exp(slope) and C = exp(intercept)/‖P_0‖.
    When `model` is None or static (A = I, Q = 0) each full window is also
    checked for P_{t+T} ⪯ (Λ_t + αI)⁻¹, with α the window Gramian's λ_min.

    Raises
    ------
    WindowTooShort
        If the trace holds fewer than 3·T steps.
    """
    n = len(trace)
    if window < 1 or n < 3 * window:
        raise WindowTooShort(f"contraction fit needs at least {3 * window} steps, got {n}")

    posteriors = [s.posterior for s in trace]
    trace_series = np.array([b.trace for b in posteriors])
    precision_series = np.array([b.precision_min_eigenvalue for b in posteriors])
    norms = np.array([b.spectral_norm for b in posteriors])
    initial_norm = trace[0].prior.spectral_norm

    steps = np.arange(1, n + 1)
    start = n // 3
    slope, intercept = log_linear_fit(steps[start:] // window, norms[start:])

    loewner_checked = model is None or model.is_static
    violations = []
    if loewner_checked:
        series = _precision_series(trace)
        observations = [s.observation for s in trace]
        static = model or StateSpaceModel.random_walk(trace[0].prior.dim)
        for report in window_gramians(static, observations, window):
            t = report.window_start
            bound = series[t].information_matrix + report.min_eigenvalue * np.eye(static.state_dim)
            bound = solve(bound, np.eye(static.state_dim), assume_a='pos')
            covariance = posteriors[t + window - 1].covariance
            if np.linalg.eigvalsh(bound - covariance)[0] < -LOEWNER_TOLERANCE:
                violations.append(t)

    return ContractionReport(
        trace_series=trace_series,
        precision_min_eig_series=precision_series,
        fitted_rate=float(np.exp(slope)),
        fit_constant=float(np.exp(intercept) / initial_norm) if initial_norm > 0 else 0.0,
        window=window,
        loewner_checked=loewner_checked,
        loewner_violations=violations,
    )


# ── boundedness ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class BoundednessReport:
    """
    Supremum of ‖P_t‖ over a trace and an initialization-independence probe.

    Attributes & Properties
    -----------------------
    sup_norm : float
        max_t ‖P_t‖, the initial prior included.
    norm_series : np.ndarray
        ‖P_t‖ for the initial prior followed by every posterior.
    relative_growth : float
        Growth of the least-squares linear trend of ‖P_t‖ across the second half
        of the trace, relative to the mean norm there.
    bounded : bool
        relative_growth ≤ growth tolerance.
    max_difference : float | None
        Largest absolute entrywise difference of the final covariances of the two
        runs, when a reference run was supplied.
    converged : bool | None
        max_difference ≤ tolerance, when a reference run was supplied.
    """

    sup_norm: float
    norm_series: np.ndarray
    relative_growth: float
    bounded: bool
    max_difference: float | None = None
    converged: bool | None = None

    @property
    def passed(self) -> bool:
        return self.bounded and self.converged is not False

    def as_dict(self) -> dict:
        return {
            'sup_norm': self.sup_norm,
            'relative_growth': self.relative_growth,
            'bounded': self.bounded,
            'max_difference': self.max_difference,
            'converged': self.converged,
        }


def _norm_series(trace: Sequence[FilterStep]) -> np.ndarray:
    return np.array([trace[0].prior.spectral_norm] + [s.posterior.spectral_norm for s in trace])


def check_boundedness(
    trace: Sequence[FilterStep],
    reference_trace: Sequence[FilterStep] | None = None,
    tol: float = 1e-6,
    growth_tol: float = 0.1,
) -> BoundednessReport:
    """
    Report sup_t ‖P_t‖, whether the covariance stays bounded, and (given a
    second run over the same observations from another initialization) whether
    the two runs end within `tol` of each other.
    """
    if not trace:
        raise WindowTooShort("boundedness check needs a nonempty trace")
    norms = _norm_series(trace)

    half = norms[len(norms) // 2:]
    if len(half) >= 2:
        slope = np.polyfit(np.arange(len(half)), half, 1)[0]
        relative_growth = float(slope * (len(half) - 1) / np.mean(half))
    else:
        relative_growth = 0.0

    max_difference = converged = None
    if reference_trace is not None:
        if len(reference_trace) != len(trace):
            raise LengthMismatch(
                f"reference trace has {len(reference_trace)} steps, expected {len(trace)}"
            )
        max_difference = float(np.max(np.abs(
            trace[-1].posterior.covariance - reference_trace[-1].posterior.covariance
        )))
        converged = max_difference <= tol

    return BoundednessReport(
        sup_norm=float(np.max(norms)),
        norm_series=norms,
        relative_growth=relative_growth,
        bounded=relative_growth <= growth_tol,
        max_difference=max_difference,
        converged=converged,
    )


def probe_boundedness(
    model: StateSpaceModel,
    init: GaussianBelief,
    observations: Sequence[Observation],
    scale: float = 100.0,
    tol: float = 1e-6,
) -> BoundednessReport:
    """Run the filter from P_0 and from scale·P_0 and compare both traces."""
    trace = run_filter(model, init, observations)
    inflated = GaussianBelief(init.mean, scale * init.covariance)
    reference = run_filter(model, inflated, observations)
    return check_boundedness(trace, reference, tol=tol)


# ── mean-square error ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class MSEReport:
    """
    Replicate-averaged ‖μ_t − x*_t‖² next to trace(P_t) and its envelope.

    Attributes & Properties
    -----------------------
    mse : np.ndarray
        Mean squared error of the posterior mean per step.
    mean_trace : np.ndarray
        Mean trace(P_t) per step.
    bound : np.ndarray
        envelope · (mean_trace + d·q) per step.
    num_replicates : int
        Number of runs averaged.
    """

    mse: np.ndarray
    mean_trace: np.ndarray
    bound: np.ndarray
    num_replicates: int

    @property
    def within_envelope(self) -> np.ndarray:
        return self.mse <= self.bound

    @property
    def passed(self) -> bool:
        return bool(np.all(self.within_envelope))

    @property
    def worst_ratio(self) -> float:
        return float(np.max(self.mse / self.bound)) if len(self.mse) else 0.0

    def as_dict(self) -> dict:
        return {
            'passed': self.passed,
            'worst_ratio': self.worst_ratio,
            'num_replicates': self.num_replicates,
            'mse': self.mse.tolist(),
            'mean_trace': self.mean_trace.tolist(),
        }


def _truth_matrix(truth: ArrayLike, n: int, d: int) -> np.ndarray:
    truth = np.asarray(truth, dtype=float)
    if truth.ndim == 1:
        truth = np.broadcast_to(truth, (n, d))
    if truth.shape != (n, d):
        raise LengthMismatch(f"truth has shape {truth.shape}, expected ({n}, {d})")
    return truth


def mse_vs_trace(
    traces: Sequence[FilterStep] | Sequence[Sequence[FilterStep]],
    truths: ArrayLike | Sequence[ArrayLike],
    q: float = 0.0,
    envelope: float = 1.1,
) -> MSEReport:
    """
    Compare empirical MSE of the posterior mean with trace(P_t).

    `traces` is one run or a sequence of replicate runs of equal length;
    `truths` gives, per run, the true state at every step ((n, d) array) or a
    single static d-vector.

    Raises
    ------
    LengthMismatch
        If runs differ in length or a truth does not match its run.
    """
    if traces and isinstance(traces[0], FilterStep):
        traces, truths = [traces], [truths]
    if len(traces) != len(truths):
        raise LengthMismatch(f"{len(traces)} runs but {len(truths)} truths")
    if not traces:
        empty = np.zeros(0)
        return MSEReport(empty, empty, empty, 0)

    n = len(traces[0])
    d = traces[0][0].posterior.dim if n else 0
    errors = np.zeros((len(traces), n))
    covariance_traces = np.zeros((len(traces), n))
    for i, (run, truth) in enumerate(zip(traces, truths)):
        if len(run) != n:
            raise LengthMismatch(f"run {i} has {len(run)} steps, expected {n}")
        means = np.array([s.posterior.mean for s in run]).reshape(n, d)
        errors[i] = np.sum((means - _truth_matrix(truth, n, d)) ** 2, axis=1)
        covariance_traces[i] = [s.posterior.trace for s in run]

    mean_trace = covariance_traces.mean(axis=0)
    return MSEReport(
        mse=errors.mean(axis=0),
        mean_trace=mean_trace,
        bound=envelope * (mean_trace + d * q),
        num_replicates=len(traces),
    )


# ── gain annealing ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class GainAnnealingReport:
    """
    ‖K_t‖ along a trace next to the effective step size ‖P_{t|t−1}‖ / λ_max(R_t).

    The raw gain norm also depends on the magnitude of each H_t; the effective
    step size isolates the covariance and is the quantity that anneals.
    """

    gain_norms: np.ndarray
    effective_steps: np.ndarray

    @property
    def annealed(self) -> bool:
        """Effective step size nonincreasing over the final half of the trace."""
        tail = self.effective_steps[len(self.effective_steps) // 2:]
        return bool(np.all(np.diff(tail) <= LOEWNER_TOLERANCE * max(float(np.max(tail, initial=0.0)), 1.0)))

    def gain_dropped(self, early: int, late: int = -1) -> bool:
        """‖K‖ at position `late` below its value at position `early`."""
        return bool(self.gain_norms[late] < self.gain_norms[early])

    def as_dict(self) -> dict:
        return {
            'annealed': self.annealed,
            'gain_norms': self.gain_norms.tolist(),
            'effective_steps': self.effective_steps.tolist(),
        }


def gain_annealing(trace: Sequence[FilterStep]) -> GainAnnealingReport:
    return GainAnnealingReport(
        gain_norms=np.array([s.gain_norm for s in trace]),
        effective_steps=np.array([s.prior.spectral_norm / s.observation.noise_bound for s in trace]),
    )
