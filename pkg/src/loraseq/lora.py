"""Low-rank adaptation of a frozen linear map.

A frozen weight W (d_out x d_in) is augmented by a trainable rank-R update
scaled by alpha/R:

    y = x @ W.T + (alpha/R) * x @ A.T @ B.T        (x is a batch of rows)
    merged W' = W + (alpha/R) * B @ A

A is R x d_in with Gaussian(0, 1/R) entries; B is d_out x R and starts at
zero, so a fresh adapter leaves the base map untouched. Only A and B ever
receive gradients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import Matrix, SeededRng, matmul

CHECKPOINT_VERSION = 1


@dataclass
class LoraAdapter:
    rank: int
    d_in: int
    d_out: int
    alpha: float
    A: Matrix
    B: Matrix
    trainable: bool = True

    def __post_init__(self):
        if self.A.shape != (self.rank, self.d_in):
            raise ShapeError(f"A has shape {self.A.shape}, want ({self.rank}, {self.d_in})")
        if self.B.shape != (self.d_out, self.rank):
            raise ShapeError(f"B has shape {self.B.shape}, want ({self.d_out}, {self.rank})")

    @property
    def scale(self) -> float:
        return self.alpha / self.rank


@dataclass
class AdaptedLinear:
    W: Matrix  # frozen, d_out x d_in
    adapter: LoraAdapter

    def __post_init__(self):
        if self.W.shape != (self.adapter.d_out, self.adapter.d_in):
            raise ShapeError(
                f"W has shape {self.W.shape}, adapter expects "
                f"({self.adapter.d_out}, {self.adapter.d_in})"
            )


def lora_init(d_in: int, d_out: int, rank: int, alpha: float, rng: SeededRng) -> LoraAdapter:
    if not 1 <= rank < min(d_in, d_out):
        raise ConfigError(f"rank {rank} not in [1, min({d_in}, {d_out}))")
    if alpha <= 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    A = rng.normal(rank, d_in, std=math.sqrt(1.0 / rank))
    B = np.zeros((d_out, rank), dtype=np.float64)
    return LoraAdapter(rank=rank, d_in=d_in, d_out=d_out, alpha=alpha, A=A, B=B)


def lora_delta(adapter: LoraAdapter) -> Matrix:
    """The low-rank weight update (alpha/R) * B @ A."""
    return adapter.scale * (adapter.B @ adapter.A)


def lora_forward(layer: AdaptedLinear, x: Matrix) -> Matrix:
    ad = layer.adapter
    if x.shape[1] != ad.d_in:
        raise ShapeError(f"input has {x.shape[1]} columns, layer expects {ad.d_in}")
    return matmul(x, layer.W.T) + ad.scale * (matmul(x, ad.A.T) @ ad.B.T)


def lora_backward(
    layer: AdaptedLinear, x: Matrix, upstream: Matrix
) -> tuple[Matrix, Matrix, Matrix]:
    """Gradients (d_x, d_A, d_B) of a scalar loss given dloss/dy.

    W is frozen: no gradient is produced for it.
    """
    ad = layer.adapter
    if upstream.shape != (x.shape[0], ad.d_out):
        raise ShapeError(
            f"upstream has shape {upstream.shape}, want ({x.shape[0]}, {ad.d_out})"
        )
    x_at = x @ ad.A.T  # n x R
    grad_b = ad.scale * (upstream.T @ x_at)
    grad_a = ad.scale * ((upstream @ ad.B).T @ x)
    d_x = upstream @ layer.W + ad.scale * ((upstream @ ad.B) @ ad.A)
    return d_x, grad_a, grad_b


def lora_grads(layer: AdaptedLinear, x: Matrix, upstream: Matrix) -> tuple[Matrix, Matrix]:
    _, grad_a, grad_b = lora_backward(layer, x, upstream)
    return grad_a, grad_b


def lora_merge(layer: AdaptedLinear) -> Matrix:
    """W + (alpha/R) * B @ A, leaving the layer untouched."""
    return layer.W + lora_delta(layer.adapter)


def trainable_param_count(adapter: LoraAdapter) -> int:
    return adapter.rank * (adapter.d_in + adapter.d_out)


def adapter_to_dict(adapter: LoraAdapter) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "d_in": adapter.d_in,
        "d_out": adapter.d_out,
        "rank": adapter.rank,
        "alpha": adapter.alpha,
        "A": adapter.A.ravel().tolist(),
        "B": adapter.B.ravel().tolist(),
    }


def adapter_from_dict(doc: dict) -> LoraAdapter:
    rank, d_in, d_out = doc["rank"], doc["d_in"], doc["d_out"]
    A = np.array(doc["A"], dtype=np.float64).reshape(rank, d_in)
    B = np.array(doc["B"], dtype=np.float64).reshape(d_out, rank)
    return LoraAdapter(rank=rank, d_in=d_in, d_out=d_out, alpha=doc["alpha"], A=A, B=B)


def save_adapter(adapter: LoraAdapter, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(adapter_to_dict(adapter), fh)


def load_adapter(path) -> LoraAdapter:
    with open(path, encoding="utf-8") as fh:
        return adapter_from_dict(json.load(fh))
