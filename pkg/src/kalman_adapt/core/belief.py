"""Gaussian Beliefs in Moment and Information Form

This module provides the two parameterizations of a Gaussian belief over the
latent adaptation state and the conversions between them.

Classes
-------
GaussianBelief
    Moment form: mean vector and covariance matrix.
PrecisionBelief
    Information form: precision (information) matrix and information vector.

Functions
---------
symmetrize_and_floor(matrix: ArrayLike, floor: float = 0.0) -> np.ndarray
    Symmetric part of a square matrix with its spectrum clamped from below.
to_information(belief: GaussianBelief) -> PrecisionBelief
    Convert a moment-form belief to information form.
from_information(belief: PrecisionBelief) -> GaussianBelief
    Convert an information-form belief to moment form.

Notes
-----
- Inversions go through a Cholesky factorization (`scipy.linalg.cho_factor`),
  never through a generic inverse.
- The eigenvalue floor is only applied on explicit repair paths. Filter updates
  symmetrize but never floor, so that a loss of definiteness stays visible.
- Arrays stored on beliefs are read-only copies; beliefs are immutable values.
"""

from __future__ import annotations
from functools import cached_property
from typing import TypedDict
import logging

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from kalman_adapt.exceptions import DimensionMismatch, NonPositiveDefinite

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-10
DEFAULT_EIGENVALUE_FLOOR = 1e-12


class GaussianBeliefDict(TypedDict):
    mean: list[float]
    covariance: list[list[float]]


class PrecisionBeliefDict(TypedDict):
    information_matrix: list[list[float]]
    information_vector: list[float]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def _check_square_symmetric(matrix: np.ndarray, dim: int, name: str) -> None:
    if matrix.shape != (dim, dim):
        raise DimensionMismatch(f"{name} must have shape ({dim}, {dim}), got {matrix.shape}")
    asymmetry = np.max(np.abs(matrix - matrix.T)) if dim else 0.0
    if asymmetry > SYMMETRY_TOLERANCE:
        raise NonPositiveDefinite(
            f"{name} is not symmetric (max asymmetry {asymmetry:.3e} > {SYMMETRY_TOLERANCE:.0e})"
        )


def symmetrize_and_floor(matrix: ArrayLike, floor: float = 0.0) -> np.ndarray:
    """
    Return (M + Mᵀ)/2 with eigenvalues clamped below at `floor`.

    The symmetric part is returned untouched when its spectrum already lies at
    or above the floor, which makes the operation idempotent and guarantees the
    smallest eigenvalue never decreases.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if floor < 0:
        raise ValueError("floor must be nonnegative")

    sym = (m + m.T) / 2
    if sym.size == 0:
        return sym
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals[0] >= floor:
        return sym

    logger.debug("Clamped eigenvalue %.3e to floor %.3e", eigvals[0], floor)
    clamped = np.maximum(eigvals, floor)
    repaired = (eigvecs * clamped) @ eigvecs.T
    return (repaired + repaired.T) / 2


def _spd_factor(matrix: np.ndarray, name: str) -> tuple[np.ndarray, bool]:
    """Cholesky factor of a symmetric positive-definite matrix; rejects λ_min ≤ 0."""
    sym = symmetrize_and_floor(matrix, 0.0)
    if sym.size and np.linalg.eigvalsh(sym)[0] <= 0:
        raise NonPositiveDefinite(f"{name} is not positive definite")
    try:
        return cho_factor(sym, lower=True)
    except (LinAlgError, ValueError) as e:
        raise NonPositiveDefinite(f"{name} factorization failed: {e}") from e


class GaussianBelief:
    """
    Gaussian belief N(mean, covariance) over the latent adaptation state.

    Parameters
    ----------
    mean : ArrayLike
        Posterior mean μ, a vector of dimension d.
    covariance : ArrayLike
        Posterior covariance P, a symmetric d×d matrix.

    Attributes & Properties
    -----------------------
    mean : np.ndarray
        Read-only copy of μ.
    covariance : np.ndarray
        Read-only copy of P.
    dim : int
        State dimension d.
    trace : float
        trace(P). Cached property.
    spectral_norm : float
        Largest eigenvalue of P (operator norm). Cached property.
    min_eigenvalue : float
        Smallest eigenvalue of P. Cached property.
    precision_min_eigenvalue : float
        λ_min(P⁻¹) = 1 / λ_max(P); inf for a zero covariance. Cached property.

    Methods
    -------
    isotropic(dim: int, scale: float, mean: ArrayLike | None = None) -> GaussianBelief
        Belief with covariance scale·I, centered at zero unless `mean` is given.
    as_dict() -> GaussianBeliefDict
        Serialize to plain lists.

    Notes
    -----
    Construction checks shapes and symmetry to within 1e-10. Positive
    definiteness is enforced where the matrix is factorized (`to_information`),
    so that a filter producing an indefinite covariance fails loudly there.

    Examples
    --------
    >>> from kalman_adapt import GaussianBelief, to_information
    >>> belief = GaussianBelief([1.0], [[4.0]])
    >>> to_information(belief).information_vector
    array([0.25])
    """

    def __init__(self, mean: ArrayLike, covariance: ArrayLike) -> None:
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
        if mean.ndim != 1:
            raise DimensionMismatch(f"mean must be a vector, got shape {mean.shape}")
        _check_square_symmetric(covariance, mean.shape[0], 'covariance')
        self.mean = _frozen(mean)
        self.covariance = _frozen(covariance)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(mean={self.mean.tolist()}, trace={self.trace:.6g})"

    @classmethod
    def isotropic(
        cls,
        dim: int,
        scale: float,
        mean: ArrayLike | None = None,
    ) -> 'GaussianBelief':
        mean = np.zeros(dim) if mean is None else mean
        return cls(mean, scale * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @cached_property
    def trace(self) -> float:
        return float(np.trace(self.covariance))

    @cached_property
    def _eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.covariance)

    @cached_property
    def spectral_norm(self) -> float:
        return float(np.max(np.abs(self._eigenvalues)))

    @cached_property
    def min_eigenvalue(self) -> float:
        return float(self._eigenvalues[0])

    @cached_property
    def precision_min_eigenvalue(self) -> float:
        top = float(self._eigenvalues[-1])
        return 1.0 / top if top > 0 else np.inf

    def as_dict(self) -> GaussianBeliefDict:
        return {
            'mean': self.mean.tolist(),
            'covariance': self.covariance.tolist(),
        }


class PrecisionBelief:
    """
    Gaussian belief in information form: Λ = P⁻¹ and η = Λμ.

    Parameters
    ----------
    information_matrix : ArrayLike
        Precision matrix Λ, symmetric positive definite d×d.
    information_vector : ArrayLike
        Information vector η of dimension d.

    Attributes & Properties
    -----------------------
    information_matrix : np.ndarray
        Read-only copy of Λ.
    information_vector : np.ndarray
        Read-only copy of η.
    dim : int
        State dimension d.
    min_eigenvalue : float
        λ_min(Λ). Cached property.

    Notes
    -----
    Measurement updates are additive in this form (`update_information`).
    """

    def __init__(self, information_matrix: ArrayLike, information_vector: ArrayLike) -> None:
        vector = np.atleast_1d(np.asarray(information_vector, dtype=float))
        matrix = np.atleast_2d(np.asarray(information_matrix, dtype=float))
        if vector.ndim != 1:
            raise DimensionMismatch(f"information_vector must be a vector, got shape {vector.shape}")
        _check_square_symmetric(matrix, vector.shape[0], 'information_matrix')
        self.information_matrix = _frozen(matrix)
        self.information_vector = _frozen(vector)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(dim={self.dim}, min_eigenvalue={self.min_eigenvalue:.6g})"

    @property
    def dim(self) -> int:
        return self.information_vector.shape[0]

    @cached_property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.information_matrix)[0])

    def as_dict(self) -> PrecisionBeliefDict:
        return {
            'information_matrix': self.information_matrix.tolist(),
            'information_vector': self.information_vector.tolist(),
        }


def to_information(belief: GaussianBelief) -> PrecisionBelief:
    """Λ = P⁻¹ and η = P⁻¹μ, both solved from the Cholesky factor of P."""
    factor = _spd_factor(belief.covariance, 'covariance')
    precision = cho_solve(factor, np.eye(belief.dim))
    precision = (precision + precision.T) / 2
    return PrecisionBelief(precision, cho_solve(factor, belief.mean))


def from_information(belief: PrecisionBelief) -> GaussianBelief:
    """P = Λ⁻¹ and μ = Λ⁻¹η, both solved from the Cholesky factor of Λ."""
    factor = _spd_factor(belief.information_matrix, 'information_matrix')
    covariance = cho_solve(factor, np.eye(belief.dim))
    covariance = (covariance + covariance.T) / 2
    return GaussianBelief(cho_solve(factor, belief.information_vector), covariance)
