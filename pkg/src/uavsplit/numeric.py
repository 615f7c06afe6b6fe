"""Dense float64 helpers.

Matrices and vectors are plain ``numpy.ndarray`` objects of dtype float64.
The functions below add shape checks that raise ``ContractViolation``
instead of numpy's broadcasting surprises.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation

DTYPE = np.float64


def as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=DTYPE)
    if arr.ndim != 1 or arr.size == 0:
        raise ContractViolation(f"expected a non-empty vector, got shape {arr.shape}")
    return arr


def as_matrix(m) -> np.ndarray:
    arr = np.asarray(m, dtype=DTYPE)
    if arr.ndim != 2 or arr.size == 0:
        raise ContractViolation(f"expected a non-empty matrix, got shape {arr.shape}")
    return arr


def check_shape(name: str, arr: np.ndarray, shape: tuple) -> None:
    """Raise unless ``arr.shape == shape``; ``None`` entries match any size."""
    if arr.ndim != len(shape) or any(
        want is not None and got != want for got, want in zip(arr.shape, shape)
    ):
        raise ContractViolation(f"{name}: expected shape {shape}, got {arr.shape}")


def matvec(m, v) -> np.ndarray:
    m, v = as_matrix(m), as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise ContractViolation(f"matvec: matrix {m.shape} incompatible with vector ({v.shape[0]},)")
    return m @ v


def matvec_transposed(m, v) -> np.ndarray:
    m, v = as_matrix(m), as_vector(v)
    if m.shape[0] != v.shape[0]:
        raise ContractViolation(
            f"matvec_transposed: matrix {m.shape} incompatible with vector ({v.shape[0]},)"
        )
    return m.T @ v


_ELEMENTWISE = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def elementwise(op: str, a, b) -> np.ndarray:
    a, b = as_vector(a), as_vector(b)
    if a.shape != b.shape:
        raise ContractViolation(f"elementwise {op}: length {a.shape[0]} vs {b.shape[0]}")
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractViolation(f"unknown elementwise op {op!r}") from None
    return fn(a, b)


def sigmoid(x):
    # Split by sign so exp never overflows.
    x = np.asarray(x, dtype=DTYPE)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x):
    return np.tanh(np.asarray(x, dtype=DTYPE))


def activation(kind: str, v) -> np.ndarray:
    if kind == "tanh":
        return tanh(v)
    if kind == "sigmoid":
        return sigmoid(v)
    raise ContractViolation(f"unknown activation {kind!r}")
