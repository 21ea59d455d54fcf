"""Dense float64 primitives with hand-derived backward passes.

Vectors and matrices are plain ``numpy.ndarray`` objects of dtype float64
(rank 1 and rank 2).  The functions here validate shapes and raise
:class:`~amsrn.exceptions.ShapeError` instead of relying on broadcasting.
Each differentiable op ``f`` has a companion ``f_backward`` that maps an
upstream gradient to the gradient with respect to the op's input(s).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import DomainError, NumericError, ShapeError

DTYPE = np.float64


def as_vector(x, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=DTYPE)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ShapeError(f"{name} must be a non-empty rank-1 array, got shape {v.shape}")
    return v


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    m = np.asarray(x, dtype=DTYPE)
    if m.ndim != 2 or 0 in m.shape:
        raise ShapeError(f"{name} must be a non-empty rank-2 array, got shape {m.shape}")
    return m


def _same_length(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: length mismatch {a.shape} vs {b.shape}")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic PCG64 generator; extra ints select independent sub-streams."""
    return np.random.default_rng([int(seed), *map(int, stream)])


# ---------------------------------------------------------------------------
# forward ops

def matvec(m, v) -> np.ndarray:
    m = as_matrix(m, "m")
    v = as_vector(v, "v")
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: matrix shape {m.shape} incompatible with vector shape {v.shape}")
    return m @ v


def hadamard(a, b) -> np.ndarray:
    a, b = as_vector(a, "a"), as_vector(b, "b")
    _same_length(a, b, "hadamard")
    return a * b


def dot(a, b) -> float:
    a, b = as_vector(a, "a"), as_vector(b, "b")
    _same_length(a, b, "dot")
    return float(a @ b)


def axpy(alpha: float, x, y) -> np.ndarray:
    """Return ``alpha * x + y``."""
    x, y = as_vector(x, "x"), as_vector(y, "y")
    _same_length(x, y, "axpy")
    return alpha * x + y


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=DTYPE))


def softmax(x, axis: int = -1) -> np.ndarray:
    """Softmax along ``axis`` with max-subtraction.

    Entries equal to ``-inf`` get probability exactly zero, which is how the
    attention code masks out future memory slots.
    """
    x = np.asarray(x, dtype=DTYPE)
    if x.size == 0 or x.shape[axis] == 0:
        raise ShapeError("softmax of an empty vector")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.size == 0 or x.shape[axis] == 0:
        raise ShapeError("log_softmax of an empty vector")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softmax_cross_entropy(logits, targets) -> tuple[float, np.ndarray]:
    """Summed NLL of integer ``targets`` under row-wise softmax of ``logits``.

    Returns ``(nll, dlogits)``; the log-softmax is fused so no ``log(0)`` occurs.
    """
    logits = np.asarray(logits, dtype=DTYPE)
    targets = np.asarray(targets, dtype=np.intp)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and targets {targets.shape} misaligned")
    logp = log_softmax(logits)
    rows = np.arange(targets.shape[0])
    nll = -float(np.sum(logp[rows, targets]))
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    return nll, grad


def entropy(p, axis: int = -1) -> np.ndarray | float:
    """Shannon entropy in nats with ``0 * log 0 = 0``; entries below 1e-300 count as zero."""
    p = np.asarray(p, dtype=DTYPE)
    safe = p > 1e-300
    terms = np.where(safe, -p * np.log(np.where(safe, p, 1.0)), 0.0)
    out = np.sum(terms, axis=axis)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# backward ops (vector-Jacobian products)

def sigmoid_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Gradient through ``y = sigmoid(x)`` given the forward output."""
    return dy * y * (1.0 - y)


def tanh_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (1.0 - y * y)


def softmax_backward(p: np.ndarray, dp: np.ndarray, axis: int = -1) -> np.ndarray:
    """Gradient through ``p = softmax(x)``; masked (zero-probability) entries get zero."""
    return p * (dp - np.sum(p * dp, axis=axis, keepdims=True))


def entropy_backward(p: np.ndarray) -> np.ndarray:
    """Gradient of ``entropy(p)`` with respect to ``p``; zero where ``p`` is (numerically) zero."""
    p = np.asarray(p, dtype=DTYPE)
    safe = p > 1e-300
    return np.where(safe, -(np.log(np.where(safe, p, 1.0)) + 1.0), 0.0)


def matvec_backward(m: np.ndarray, v: np.ndarray, dy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dm, dv)`` for ``y = m @ v``."""
    return np.outer(dy, v), m.T @ dy


# ---------------------------------------------------------------------------
# gradient checking

@dataclass
class GradCheckReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    tol: float

    @property
    def max_error(self) -> float:
        return float(np.max(self.rel_error)) if self.rel_error.size else 0.0

    @property
    def failed(self) -> np.ndarray:
        """Indices of coordinates whose relative error exceeds ``tol``."""
        return np.flatnonzero(self.rel_error > self.tol)

    @property
    def ok(self) -> bool:
        return self.failed.size == 0


def grad_check(f: Callable[[np.ndarray], tuple[float, np.ndarray]], theta, eps: float = 1e-5,
               tol: float = 1e-4, coords=None) -> GradCheckReport:
    """Compare the analytic gradient of ``f`` against central differences.

    ``f(theta)`` must return ``(value, gradient)``.  The error per coordinate is
    ``|g_a - g_n| / max(1, |g_a| + |g_n|)``.  ``coords`` restricts the check to
    a subset of coordinates (all by default).
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    theta = as_vector(theta, "theta").copy()
    value, analytic = f(theta.copy())
    analytic = np.asarray(analytic, dtype=DTYPE).reshape(-1)
    if analytic.shape != theta.shape:
        raise ShapeError(f"gradient shape {analytic.shape} != theta shape {theta.shape}")
    if not np.isfinite(value):
        raise NumericError("f is not finite at theta")
    idx = np.arange(theta.size) if coords is None else np.asarray(coords, dtype=np.intp)
    numeric = np.zeros_like(analytic)
    for i in idx:
        old = theta[i]
        theta[i] = old + eps
        fp = f(theta.copy())[0]
        theta[i] = old - eps
        fm = f(theta.copy())[0]
        theta[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"f is not finite when perturbing coordinate {i}")
        numeric[i] = (fp - fm) / (2.0 * eps)
    a, n = analytic[idx], numeric[idx]
    rel = np.abs(a - n) / np.maximum(1.0, np.abs(a) + np.abs(n))
    return GradCheckReport(analytic=a, numeric=n, rel_error=rel, tol=tol)


# ---------------------------------------------------------------------------
# parameter containers

class ParamSet:
    """Mixin for dataclasses whose array fields are trainable parameters.

    Fields holding ``None`` are treated as absent; non-array fields are
    configuration and are carried through ``copy``/``unflatten`` untouched.
    """

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
                if isinstance(getattr(self, f.name), np.ndarray)}

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.named_arrays().values())

    def copy(self):
        return dataclasses.replace(self, **{k: v.copy() for k, v in self.named_arrays().items()})

    def zeros_like(self):
        return dataclasses.replace(self, **{k: np.zeros_like(v) for k, v in self.named_arrays().items()})

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for a in self.named_arrays().values()])

    def unflatten(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=DTYPE)
        if theta.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        out, pos = {}, 0
        for k, a in self.named_arrays().items():
            out[k] = theta[pos:pos + a.size].reshape(a.shape).copy()
            pos += a.size
        return dataclasses.replace(self, **out)

    def equals(self, other) -> bool:
        """Bitwise equality of every parameter array."""
        mine, theirs = self.named_arrays(), other.named_arrays()
        return mine.keys() == theirs.keys() and all(
            mine[k].shape == theirs[k].shape and np.array_equal(mine[k], theirs[k]) for k in mine)
