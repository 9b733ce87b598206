"""Fabric-aware feature enhancement.

A small learned-query fuser distills a retrieved fabric (its label
tokens and swatch image tokens) into fabric tokens; those then feed a
pair of residual cross-attention enhancers that inject fabric/text
context into the visual stream and fabric/visual context into the text
stream. With no fabric in the prompt the fuser is skipped and the
enhancers run on the bare modalities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionParams, attend, concat_context, sdpa
from .encoders import encode_image, encode_text, split_words, tokenize
from .errors import EmptyContextError
from .fabricdb import FabricDb, RetrievalTrace, extract_fabric_label, retrieve
from .tensor import Parameter, Tensor, add, concat_rows, matmul


@dataclass
class QueryFuserParams:
    """Learned query rows plus self/cross attention projections."""

    queries: Parameter  # (N_q, d)
    self_q: Parameter
    self_k: Parameter
    self_v: Parameter
    cross_q: Parameter
    cross_k: Parameter
    cross_v: Parameter

    def parameters(self) -> list[Parameter]:
        return [self.queries, self.self_q, self.self_k, self.self_v,
                self.cross_q, self.cross_k, self.cross_v]


def fuse_self(label_tokens: Tensor, params: QueryFuserParams) -> Tensor:
    """Self-attention over [queries; label]; output keeps all rows."""
    if label_tokens.shape[0] == 0:
        raise EmptyContextError("fuser needs at least one label token")
    x = concat_rows([params.queries, label_tokens])
    return sdpa(matmul(x, params.self_q), matmul(x, params.self_k), matmul(x, params.self_v))


def fuse_cross(fused: Tensor, image_tokens: Tensor, params: QueryFuserParams) -> Tensor:
    """Cross-attention from the fused rows onto swatch image tokens."""
    if image_tokens.shape[0] == 0:
        raise EmptyContextError("fuser needs at least one swatch token")
    return sdpa(
        matmul(fused, params.cross_q),
        matmul(image_tokens, params.cross_k),
        matmul(image_tokens, params.cross_v),
    )


def enhance_visual(v: Tensor, t: Tensor, fabric: Tensor, params: AttentionParams,
                   return_weights: bool = False):
    """v + Attention(v -> [t; fabric]); the residual keeps length and width."""
    ctx = concat_context([t, fabric])
    out, weights = attend(params, v, ctx, return_weights=True)
    enhanced = add(v, out)
    if return_weights:
        return enhanced, weights
    return enhanced


def enhance_text(t: Tensor, v: Tensor, fabric: Tensor, params: AttentionParams,
                 return_weights: bool = False):
    """t + Attention(t -> [v; fabric]), mirror of the visual side."""
    ctx = concat_context([v, fabric])
    out, weights = attend(params, t, ctx, return_weights=True)
    enhanced = add(t, out)
    if return_weights:
        return enhanced, weights
    return enhanced


@dataclass
class EnhancedFeatures:
    visual: Tensor            # (L_v, d) enhanced visual tokens
    text: Tensor              # (L_t, d) enhanced text tokens
    fabric: Tensor            # (N_q + L_l, d) fabric tokens; (0, d) without fabric
    raw_visual: Tensor        # encoder outputs, pre-enhancement
    raw_text: Tensor
    retrieval: RetrievalTrace | None = None


def fabric_tokens_for_prompt(prompt_words: list[str], db: FabricDb, model) -> tuple:
    """Resolve the prompt's fabric: gazetteer hit, or an out-of-vocabulary
    word routed through the semantic fallback. Returns (label_ids,
    swatch_image, trace), or (None, None, None) when no fabric applies."""
    label = extract_fabric_label(prompt_words, db)
    if label is None:
        unknown = [w for w in prompt_words if w not in model.vocab]
        if not unknown:
            return None, None, None
        label = unknown[0]
    entry, trace = retrieve(label, db, model.text_enc, model.vocab)
    label_ids = tokenize(entry.canonical, model.vocab)
    return label_ids, entry.image, trace


def enhance_features(sketch: np.ndarray, prompt: str, db: FabricDb, model,
                     record=None) -> EnhancedFeatures:
    """Full enhancement pipeline for one (sketch, prompt) pair."""
    words = split_words(prompt)
    ids = tokenize(prompt, model.vocab)
    t = encode_text(ids, model.text_enc)
    v = encode_image(sketch, model.sketch_enc)

    if model.cfg.use_enhancer:
        label_ids, swatch, trace = fabric_tokens_for_prompt(words, db, model)
    else:
        label_ids, swatch, trace = None, None, None

    if label_ids is not None:
        label_tokens = encode_text(label_ids, model.text_enc)
        swatch_tokens = encode_image(swatch.astype(model.dtype), model.swatch_enc)
        fused = fuse_self(label_tokens, model.fuser)
        fabric = fuse_cross(fused, swatch_tokens, model.fuser)
    else:
        fabric = Tensor(np.zeros((0, model.cfg.d), dtype=model.dtype))

    if model.cfg.use_enhancer:
        v2, wv = enhance_visual(v, t, fabric, model.vis_enh, return_weights=True)
        t2, wt = enhance_text(t, v, fabric, model.txt_enh, return_weights=True)
        if record is not None:
            record["enhance_visual"] = np.array(wv.data)
            record["enhance_text"] = np.array(wt.data)
    else:
        v2, t2 = v, t

    return EnhancedFeatures(v2, t2, fabric, v, t, trace)
