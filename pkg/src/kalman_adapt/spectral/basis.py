"""Spectral State Parameterization

The latent state is a vector of spectral responses a_k. A signal
x = Σ c_k ψ_k on an orthonormal basis {ψ_k} yields the scalar observation
y = Σ a_k c_k + v, which is linear in a with operator H = [c_1, …, c_K], so the
estimation of a is exactly the recursive least-squares problem with φ = c.

Two basis generators are provided: the orthonormal discrete cosine basis on a
1-D grid and the low-frequency eigenvectors of a path-graph Laplacian.
"""

from __future__ import annotations
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.fft import dct
from scipy.sparse import diags
from scipy.sparse.csgraph import laplacian

from kalman_adapt.core.belief import GaussianBelief
from kalman_adapt.core.linear_filter import FilterStep, Observation, StateSpaceModel, run_filter
from kalman_adapt.core.optimization_limits import RegressionDataset
from kalman_adapt.exceptions import DimensionMismatch, NonPositiveDefinite

ORTHONORMALITY_TOLERANCE = 1e-10


class SpectralBasis:
    """
    K orthonormal basis vectors ψ_k on a domain of size n, stored as rows.

    Parameters
    ----------
    basis_vectors : ArrayLike
        (K, n) array with orthonormal rows, K ≤ n.

    Attributes & Properties
    -----------------------
    domain_size : int
        n.
    num_components : int
        K.

    Methods
    -------
    cosine(n: int, K: int) -> SpectralBasis
        First K orthonormal DCT-II vectors.
    graph_laplacian(n: int, K: int) -> SpectralBasis
        Eigenvectors of the path-graph Laplacian for the K smallest eigenvalues.
    analyze(signal: ArrayLike) -> np.ndarray
        c_k = ⟨ψ_k, x⟩.
    synthesize(coefficients: ArrayLike) -> np.ndarray
        Σ c_k ψ_k.
    """

    def __init__(self, basis_vectors: ArrayLike) -> None:
        psi = np.array(basis_vectors, dtype=float, ndmin=2)
        k, n = psi.shape
        if k > n:
            raise DimensionMismatch(f"{k} basis vectors cannot be orthonormal in dimension {n}")
        deviation = np.max(np.abs(psi @ psi.T - np.eye(k)))
        if deviation > ORTHONORMALITY_TOLERANCE:
            raise DimensionMismatch(f"basis vectors are not orthonormal (deviation {deviation:.3e})")
        psi.setflags(write=False)
        self.basis_vectors = psi

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(domain_size={self.domain_size}, num_components={self.num_components})"

    @classmethod
    def cosine(cls, n: int, K: int) -> 'SpectralBasis':
        return cls(dct(np.eye(n), type=2, norm='ortho', axis=0)[:K])

    @classmethod
    def graph_laplacian(cls, n: int, K: int) -> 'SpectralBasis':
        adjacency = diags([np.ones(n - 1), np.ones(n - 1)], [-1, 1]).toarray()
        eigvecs = np.linalg.eigh(laplacian(adjacency))[1]
        return cls(eigvecs[:, :K].T)

    @property
    def domain_size(self) -> int:
        return self.basis_vectors.shape[1]

    @property
    def num_components(self) -> int:
        return self.basis_vectors.shape[0]

    def analyze(self, signal: ArrayLike) -> np.ndarray:
        signal = np.asarray(signal, dtype=float)
        if signal.shape != (self.domain_size,):
            raise DimensionMismatch(f"signal has shape {signal.shape}, expected ({self.domain_size},)")
        return self.basis_vectors @ signal

    def synthesize(self, coefficients: ArrayLike) -> np.ndarray:
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (self.num_components,):
            raise DimensionMismatch(
                f"coefficients have shape {coefficients.shape}, expected ({self.num_components},)"
            )
        return self.basis_vectors.T @ coefficients


@dataclass(frozen=True)
class SpectralSignal:
    """Coefficients c of one signal and the spectral response a it is observed through."""

    coefficients: np.ndarray
    response: np.ndarray

    def __post_init__(self) -> None:
        if np.shape(self.coefficients) != np.shape(self.response):
            raise DimensionMismatch(
                f"coefficients {np.shape(self.coefficients)} and response {np.shape(self.response)} differ"
            )

    def reconstruct(self, basis: SpectralBasis) -> np.ndarray:
        return basis.synthesize(self.coefficients)

    @property
    def output(self) -> float:
        """Noise-free observation Σ a_k c_k."""
        return float(np.dot(self.response, self.coefficients))


def spectral_observation(
    signal: SpectralSignal,
    noise_var: float,
    rng: np.random.Generator | None = None,
) -> Observation:
    """
    Observation with H = [c_1, …, c_K] and y = Σ a_k c_k (+ noise when `rng` is given).
    """
    if not noise_var > 0:
        raise NonPositiveDefinite(f"noise_var must be positive, got {noise_var}")
    value = signal.output
    if rng is not None:
        value += np.sqrt(noise_var) * rng.standard_normal()
    return Observation(np.asarray(signal.coefficients, dtype=float), noise_var, value)


@dataclass(frozen=True)
class SpectralRun:
    """
    Filter steps of one spectral experiment with the data behind them.

    `truths` holds the true response at every step (constant unless drifting);
    `dataset` holds the (c, y) pairs with the final true response as truth.
    """

    steps: list[FilterStep]
    dataset: RegressionDataset
    truths: np.ndarray

    @property
    def final_error(self) -> float:
        return float(np.linalg.norm(self.steps[-1].posterior.mean - self.truths[-1]))

    @property
    def squared_errors(self) -> np.ndarray:
        means = np.array([s.posterior.mean for s in self.steps])
        return np.sum((means - self.truths) ** 2, axis=1)


def spectral_filter_run(
    basis: SpectralBasis,
    true_response: ArrayLike,
    num_obs: int,
    noise_var: float,
    rng: np.random.Generator,
    q: float = 0.0,
    prior_scale: float = 1.0,
    drift_std: float = 0.0,
    coefficient_scales: ArrayLike | None = None,
) -> SpectralRun:
    """
    Generate `num_obs` random signals, observe each through the true response
    and estimate the response with the Kalman filter under A = I, Q = q·I.

    Signal coefficients are i.i.d. N(0, s_k²) with s_k from `coefficient_scales`
    (ones by default); each signal is synthesized on the basis and analyzed back
    before being observed. With `drift_std` > 0 the true response takes a
    Gaussian random-walk step of that size before every observation.
    """
    if num_obs < 1:
        raise DimensionMismatch("num_obs must be at least 1")
    k = basis.num_components
    response = np.array(true_response, dtype=float)
    if response.shape != (k,):
        raise DimensionMismatch(f"true_response has shape {response.shape}, expected ({k},)")
    scales = np.ones(k) if coefficient_scales is None else np.asarray(coefficient_scales, dtype=float)

    truths = np.empty((num_obs, k))
    observations = []
    for t in range(num_obs):
        if drift_std > 0:
            response = response + drift_std * rng.standard_normal(k)
        truths[t] = response
        coefficients = basis.analyze(basis.synthesize(scales * rng.standard_normal(k)))
        observations.append(spectral_observation(SpectralSignal(coefficients, response.copy()), noise_var, rng))

    model = StateSpaceModel.random_walk(k, q)
    steps = run_filter(model, GaussianBelief.isotropic(k, prior_scale), observations)
    dataset = RegressionDataset(
        np.array([o.operator[0] for o in observations]),
        np.array([o.value[0] for o in observations]),
        noise_var,
        truth=truths[-1],
    )
    return SpectralRun(steps=steps, dataset=dataset, truths=truths)
