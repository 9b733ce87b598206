"""Small conditional noise-prediction network.

A two-level UNet: full-resolution stem, residual blocks at 1/2 and 1/4
resolution, each with FiLM timestep modulation and one cross-attention
layer whose queries are the hidden-state tokens and whose context is the
per-item conditioning token sequence (identical context at every layer).
Skip connections carry the stem and mid activations back up; the head
predicts the noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attention import sdpa
from .convops import (avgpool2, batch_scale_shift, conv2d, map_to_tokens,
                      tokens_to_maps, upsample2)
from .errors import ShapeError
from .tensor import Parameter, Tensor, add, matmul, silu


@dataclass
class Linear:
    w: Parameter
    b: Parameter

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.w), self.b)

    def parameters(self):
        return [self.w, self.b]


@dataclass
class Conv:
    w: Parameter  # (C_in*k*k, C_out)
    b: Parameter  # (C_out,)
    kernel: int

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b, self.kernel)

    def parameters(self):
        return [self.w, self.b]


@dataclass
class CrossAttn:
    w_q: Parameter  # (C, d)
    w_k: Parameter  # (d, d)
    w_v: Parameter  # (d, d)
    w_o: Parameter  # (d, C)

    def parameters(self):
        return [self.w_q, self.w_k, self.w_v, self.w_o]


@dataclass
class ResBlock:
    conv_a: Conv
    conv_b: Conv
    scale_proj: Linear
    shift_proj: Linear
    shortcut: Conv | None
    attn: CrossAttn

    def parameters(self):
        out = (self.conv_a.parameters() + self.conv_b.parameters()
               + self.scale_proj.parameters() + self.shift_proj.parameters()
               + self.attn.parameters())
        if self.shortcut is not None:
            out += self.shortcut.parameters()
        return out


@dataclass
class DenoiserParams:
    conv_in: Conv
    temb_lin1: Linear
    temb_lin2: Linear
    block1: ResBlock
    block2: ResBlock
    up1: Conv
    out_scale: Linear
    out_shift: Linear
    conv_out: Conv
    temb_dim: int
    calls: int = field(default=0)

    def parameters(self):
        return (self.conv_in.parameters() + self.temb_lin1.parameters()
                + self.temb_lin2.parameters() + self.block1.parameters()
                + self.block2.parameters() + self.up1.parameters()
                + self.out_scale.parameters() + self.out_shift.parameters()
                + self.conv_out.parameters())


def timestep_embedding(t_idx, dim: int, dtype) -> np.ndarray:
    """Sinusoidal features of integer timesteps, (B, dim)."""
    t = np.asarray(t_idx, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1).astype(dtype)


def _cross_attend(h: Tensor, contexts, attn: CrossAttn, spatial: tuple,
                  record=None, tag: str = ""):
    hh, ww = spatial
    outs = []
    for item, ctx in enumerate(contexts):
        tok = map_to_tokens(h, item)
        out, weights = sdpa(
            matmul(tok, attn.w_q),
            matmul(ctx, attn.w_k),
            matmul(ctx, attn.w_v),
            return_weights=True,
        )
        outs.append(matmul(out, attn.w_o))
        if record is not None and item == 0:
            record[tag] = np.array(weights.data)
    return add(h, tokens_to_maps(outs, hh, ww))


def _res_block(block: ResBlock, x: Tensor, temb: Tensor, contexts,
               record=None, tag: str = ""):
    h = block.conv_a(x)
    h = batch_scale_shift(h, block.scale_proj(temb), block.shift_proj(temb))
    h = silu(h)
    h = block.conv_b(h)
    skip = x if block.shortcut is None else block.shortcut(x)
    h = add(h, skip)
    spatial = (x.data.shape[1], x.data.shape[2])
    return _cross_attend(h, contexts, block.attn, spatial, record=record, tag=tag)


def denoiser_forward(params: DenoiserParams, x: Tensor, t_idx, contexts,
                     record=None) -> Tensor:
    """Predict the noise in ``x`` at timesteps ``t_idx`` given one
    conditioning token sequence per batch item. Layout is channels-last:
    (B, H, W, 3) in, (B, H, W, 3) out."""
    if x.data.ndim != 4 or x.data.shape[3] != 3:
        raise ShapeError(f"denoiser input must be (B,H,W,3), got {x.data.shape}")
    bsz = x.data.shape[0]
    if len(contexts) != bsz:
        raise ShapeError(f"got {len(contexts)} conditioning contexts for batch of {bsz}")
    params.calls += 1

    temb = Tensor(timestep_embedding(t_idx, params.temb_dim, x.data.dtype))
    temb = params.temb_lin2(silu(params.temb_lin1(temb)))

    h0 = silu(params.conv_in(x))
    h1 = _res_block(params.block1, avgpool2(h0), temb, contexts, record, "level1")
    h2 = _res_block(params.block2, avgpool2(h1), temb, contexts, record, "level2")
    u1 = silu(add(params.up1(upsample2(h2)), h1))
    u0 = add(upsample2(u1), h0)
    u0 = silu(batch_scale_shift(u0, params.out_scale(temb), params.out_shift(temb)))
    return params.conv_out(u0)
