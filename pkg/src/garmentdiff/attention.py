"""Scaled dot-product attention primitives shared by the conditioning
stack and the denoiser. Single-head throughout; scores are scaled by the
square root of the query width (the global model width in every use)."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EmptyContextError, ShapeError
from .tensor import Parameter, Tensor, concat_rows, matmul, mul, softmax_rows, transpose


@dataclass
class AttentionParams:
    """Square d x d projections, with an optional output projection."""

    w_q: Parameter
    w_k: Parameter
    w_v: Parameter
    w_o: Parameter | None = None

    def parameters(self) -> list[Parameter]:
        out = [self.w_q, self.w_k, self.w_v]
        if self.w_o is not None:
            out.append(self.w_o)
        return out


def sdpa(q: Tensor, k: Tensor, v: Tensor, return_weights: bool = False):
    """Softmax(Q K^T / sqrt(d)) V with a stabilized softmax."""
    if k.shape[0] == 0:
        raise EmptyContextError("attention context is empty (no key/value rows)")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"query width {q.shape[1]} != key width {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"key rows {k.shape[0]} != value rows {v.shape[0]}")
    scale = 1.0 / math.sqrt(q.shape[1])
    weights = softmax_rows(mul(matmul(q, transpose(k)), Tensor(scale)))
    out = matmul(weights, v)
    if return_weights:
        return out, weights
    return out


def attend(params: AttentionParams, x_q: Tensor, context: Tensor,
           return_weights: bool = False):
    """Project, attend over ``context``, optionally output-project."""
    out, weights = sdpa(
        matmul(x_q, params.w_q),
        matmul(context, params.w_k),
        matmul(context, params.w_v),
        return_weights=True,
    )
    if params.w_o is not None:
        out = matmul(out, params.w_o)
    if return_weights:
        return out, weights
    return out


def concat_context(parts) -> Tensor:
    """Row-concatenate token sequences, dropping empty ones."""
    kept = [p for p in parts if p.shape[0] > 0]
    if not kept:
        raise EmptyContextError("all context parts are empty")
    if len(kept) == 1:
        return kept[0]
    return concat_rows(kept)
