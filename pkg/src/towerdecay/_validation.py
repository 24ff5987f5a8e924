"""Input validation helpers and the package exception hierarchy."""

from __future__ import annotations

import numbers

import numpy as np


class ValidationError(ValueError):
    """An argument violates a documented precondition."""


class NormalizationError(ValidationError):
    """A probability vector does not sum to one."""

    def __init__(self, defect: float, message: str | None = None) -> None:
        self.defect = float(defect)
        super().__init__(message or f"probabilities do not sum to 1 (defect {defect:.3e})")


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap."""


class SingularityError(ArithmeticError):
    """A matrix that must be inverted is numerically singular."""


class StateSpaceError(MemoryError):
    """An exact computation would need more states than allowed."""


class AliasingError(RuntimeError):
    """Contour quadrature is under-resolved."""


PROB_TOL = 1e-12


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        if isinstance(value, numbers.Real) and float(value).is_integer():
            value = int(value)
        else:
            raise ValidationError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_real(value, name: str, *, low=None, high=None, low_open=False, high_open=False) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a real number, got {value!r}") from None
    if not np.isfinite(x):
        raise ValidationError(f"{name} must be finite, got {x}")
    if low is not None and (x < low or (low_open and x == low)):
        raise ValidationError(f"{name} must be {'>' if low_open else '>='} {low}, got {x}")
    if high is not None and (x > high or (high_open and x == high)):
        raise ValidationError(f"{name} must be {'<' if high_open else '<='} {high}, got {x}")
    return x


def check_probability_vector(p, name: str = "p", *, tol: float = PROB_TOL, residual: float = 0.0) -> np.ndarray:
    """Return ``p`` as a float array after checking nonnegativity and total mass.

    ``residual`` is mass held outside the vector (e.g. beyond a support cutoff).
    """
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{name} must be a nonempty 1-D array")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    if np.any(arr < 0):
        raise ValidationError(f"{name} has negative entries")
    defect = arr.sum() + residual - 1.0
    if abs(defect) > tol:
        raise NormalizationError(defect, f"{name} sums to {1.0 + defect!r} (defect {defect:.3e})")
    return arr


def check_square_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def check_finite(arr, name: str) -> np.ndarray:
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def check_rng(seed) -> np.random.Generator:
    """Turn ``None``, an int or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sup_norm(a: np.ndarray) -> float:
    """Operator norm on densities with the sup norm: max absolute row sum."""
    a = np.asarray(a)
    if a.ndim == 1:
        return float(np.max(np.abs(a))) if a.size else 0.0
    return float(np.max(np.abs(a).sum(axis=1))) if a.size else 0.0


def weighted_l1_norm(a: np.ndarray, weights: np.ndarray) -> float:
    """Operator norm on L1(weights): max_j sum_i w_i |a_ij| / w_j."""
    a = np.abs(np.asarray(a))
    w = np.asarray(weights, dtype=float)
    return float(np.max((w @ a) / w)) if a.size else 0.0
