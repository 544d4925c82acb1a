"""Dense float64 linear algebra, seeded randomness, and gradient utilities.

Matrices are plain 2-D ``numpy.ndarray`` objects with dtype float64 and
row-major (C) layout. The seeded generator is NumPy's PCG64: the same
64-bit seed yields the same draw sequence on every platform, which is what
makes fixtures, splits, and model initialization reproducible.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError

Matrix = np.ndarray


def matrix(data) -> Matrix:
    """Build a 2-D float64 matrix from nested sequences."""
    m = np.array(data, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def zeros(rows: int, cols: int) -> Matrix:
    return np.zeros((rows, cols), dtype=np.float64)


class SeededRng:
    """Deterministic random source (NumPy PCG64 keyed by a 64-bit seed).

    Single-owner by convention: one consumer advances the stream.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, rows: int, cols: int, std: float = 1.0) -> Matrix:
        return self._gen.normal(0.0, std, size=(rows, cols))

    def normal_vec(self, n: int, std: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, std, size=n)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int) -> int:
        return int(self._gen.integers(low, high))

    def choice(self, seq: Sequence):
        return seq[self.integers(0, len(seq))]


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with an explicit dimension check."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_rows(m: Matrix) -> Matrix:
    """Row-wise softmax with per-row max subtraction for stability."""
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: Matrix, targets: Sequence[int]) -> tuple[float, Matrix]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    loss = mean_i(-log softmax(logits[i])[targets[i]])
    grad = (softmax(logits) - onehot(targets)) / rows
    """
    n, c = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    if len(targets) != n:
        raise ShapeError(f"{n} logit rows but {len(targets)} targets")
    if targets.min(initial=0) < 0 or (n > 0 and targets.max() >= c):
        raise IndexError(f"target index out of range for {c} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(n), targets]))
    probs = softmax_rows(logits)
    grad = probs.copy()
    grad[np.arange(n), targets] -= 1.0
    grad /= n
    return loss, grad


def finite_diff_grad(
    f: Callable[[Matrix], float], x: Matrix, eps: float = 1e-5
) -> Matrix:
    """Central-difference gradient estimate of a scalar function, per entry."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        fp = f(x)
        x[idx] = orig - eps
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * eps)
    return g
