"""Dense complex matrix helpers for small N.

Matrices are plain ``numpy.ndarray`` objects of shape ``(n, n)`` and dtype
``complex128`` (row-major). Nothing here keeps state.
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Operands do not have matching square shapes."""


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a


def _check_pair(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"size mismatch: {a.shape} vs {b.shape}")
    return a, b


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.complex128)


def zeros(n: int) -> np.ndarray:
    return np.zeros((n, n), dtype=np.complex128)


def dagger(m) -> np.ndarray:
    """Conjugate transpose, returned as a fresh C-contiguous array."""
    return np.ascontiguousarray(as_matrix(m).conj().T)


def commutator(a, b) -> np.ndarray:
    a, b = _check_pair(a, b)
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    a, b = _check_pair(a, b)
    return a @ b + b @ a


def trace_real(m) -> float:
    return float(np.trace(as_matrix(m)).real)


def trace_imag(m) -> float:
    return float(np.trace(as_matrix(m)).imag)


def trace_product(a, b) -> complex:
    """Tr(a @ b) without forming the product (O(n^2))."""
    a, b = _check_pair(a, b)
    return complex(np.sum(a * b.T))


def trace_product_dagger(a, b) -> complex:
    """Tr(a @ dagger(b)), i.e. the Frobenius inner product <a, b>."""
    a, b = _check_pair(a, b)
    return complex(np.vdot(b, a))


def rank1_update(m: np.ndarray, row: int, col: int, delta: complex) -> None:
    """Add ``delta`` to ``m[row, col]`` in place."""
    n = m.shape[0]
    if not (0 <= row < n and 0 <= col < n):
        raise IndexError(f"entry ({row}, {col}) outside a {n}x{n} matrix")
    m[row, col] += delta


def is_hermitian(m, atol: float = 1e-13) -> bool:
    m = as_matrix(m)
    return bool(np.allclose(m, m.conj().T, rtol=0.0, atol=atol))
