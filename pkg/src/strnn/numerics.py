"""Dense float64 helpers, seeded generators and a central-difference oracle.

Matrices and vectors are plain ``numpy.ndarray`` objects of dtype float64.
The helpers here add the shape and finiteness checks the rest of the
package relies on.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

ACTIVATIONS = ("relu", "sigmoid")

T = TypeVar("T")
R = TypeVar("R")


class ShapeError(ValueError):
    """Operand shapes do not line up."""


class NonFiniteError(ArithmeticError):
    """A NaN or infinity appeared where finite values are required."""


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def as_matrix(rows: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    m = np.array(rows, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def as_vector(values: Iterable[float] | np.ndarray) -> np.ndarray:
    v = np.array(values, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-d vector, got shape {v.shape}")
    return v


def check_finite(x: np.ndarray, what: str = "value") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains non-finite entries")
    return x


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"cannot multiply matrix {m.shape} by vector {v.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = m @ v
    return check_finite(out, "matvec result")


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ez = np.exp(x[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def activation(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_grad(pre: np.ndarray, post: np.ndarray, kind: str) -> np.ndarray:
    """Derivative of the activation, given pre- and post-activation values.

    The ReLU subgradient at exactly zero is 0.
    """
    if kind == "relu":
        return (pre > 0).astype(np.float64)
    if kind == "sigmoid":
        return post * (1.0 - post)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int,
                   fan_in: int | None = None, fan_out: int | None = None) -> np.ndarray:
    """Uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out)); fans default to the shape."""
    fan_in = cols if fan_in is None else fan_in
    fan_out = rows if fan_out is None else fan_out
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(rows, cols))


def finite_diff_grad(f: Callable[[np.ndarray], float], p: np.ndarray,
                     h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if h <= 0:
        raise ValueError("step must be positive")
    p = np.array(p, dtype=np.float64)
    grad = np.zeros_like(p)
    for i in range(p.size):
        old = p[i]
        p[i] = old + h
        fp = f(p)
        p[i] = old - h
        fm = f(p)
        p[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"objective is non-finite when perturbing coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def thread_count() -> int:
    env = os.environ.get("STRNN_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("STRNN_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map over items, possibly on a thread pool; results keep input order."""
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
