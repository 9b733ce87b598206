"""Gated conditioning: a cosine agreement score between the pooled
visual and text features drives a sigmoid gate weight, which scales a
cross-attention read of the enhanced visual stream over the
concatenated visual+text context. The result is the conditioning token
sequence handed to the denoiser.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionParams, sdpa
from .errors import DegenerateInputError, EmptyContextError
from .fusion import EnhancedFeatures, enhance_features
from .tensor import Tensor, concat_rows, div, matmul, mul, sigmoid, sqrt, tmean, tsum


def cosine_agreement(v: Tensor, t: Tensor) -> Tensor:
    """Cosine similarity of the mean-pooled token sequences (scalar graph
    node, so the gate stays differentiable)."""
    if v.shape[0] == 0 or t.shape[0] == 0:
        raise EmptyContextError("cosine agreement needs nonempty token sequences")
    vbar = tmean(v, axis=0)
    tbar = tmean(t, axis=0)
    if float(np.linalg.norm(vbar.data)) < 1e-12 or float(np.linalg.norm(tbar.data)) < 1e-12:
        raise DegenerateInputError("cosine agreement of a zero-norm pooled vector")
    dot = tsum(mul(vbar, tbar))
    norms = mul(sqrt(tsum(mul(vbar, vbar))), sqrt(tsum(mul(tbar, tbar))))
    return div(dot, norms)


def gate_weight(s, lam: float):
    """lam + (1 - lam) * sigmoid(s); strictly increasing, range (lam, 1)."""
    if isinstance(s, Tensor):
        return sigmoid(s) * (1.0 - lam) + lam
    s = float(s)
    if s >= 0:
        sig = 1.0 / (1.0 + np.exp(-s))
    else:
        e = np.exp(s)
        sig = e / (1.0 + e)
    return lam + (1.0 - lam) * sig


def harmonized_attention(v2: Tensor, t2: Tensor, alpha, params: AttentionParams,
                         return_weights: bool = False):
    """alpha * Softmax(Q K^T / sqrt(d)) V with Q from the visual stream
    and K/V from the projected visual and text streams concatenated."""
    if v2.shape[0] == 0 or t2.shape[0] == 0:
        raise EmptyContextError("harmonized attention needs nonempty streams")
    q = matmul(v2, params.w_q)
    k = concat_rows([matmul(v2, params.w_k), matmul(t2, params.w_k)])
    v = concat_rows([matmul(v2, params.w_v), matmul(t2, params.w_v)])
    out, weights = sdpa(q, k, v, return_weights=True)
    if not isinstance(alpha, Tensor):
        alpha = Tensor(np.asarray(alpha, dtype=out.data.dtype))
    z = mul(alpha, out)
    if return_weights:
        return z, weights
    return z


@dataclass
class ConditioningBundle:
    features: EnhancedFeatures
    agreement: float          # cosine score s
    alpha: float              # gate weight actually applied
    alpha_overridden: bool
    cond: Tensor | None       # (L_v, d) harmonized conditioning, None when disabled

    @property
    def cond_norm(self) -> float:
        return 0.0 if self.cond is None else float(np.linalg.norm(self.cond.data))


def build_conditioning(sketch: np.ndarray, prompt: str, db, model,
                       alpha_override: float | None = None,
                       record=None) -> ConditioningBundle:
    """Run enhancement, the gate, and the harmonized attention for one
    generation request."""
    feats = enhance_features(sketch, prompt, db, model, record=record)

    if model.cfg.cosine_on_enhanced:
        s_node = cosine_agreement(feats.visual, feats.text)
    else:
        s_node = cosine_agreement(feats.raw_visual, feats.raw_text)
    s_val = float(s_node.data)

    if not model.cfg.use_harmonizer:
        return ConditioningBundle(feats, s_val, 1.0, alpha_override is not None, None)

    if alpha_override is not None:
        alpha = Tensor(np.asarray(alpha_override, dtype=model.dtype))
        alpha_val = float(alpha_override)
    else:
        gate_in = s_node.detach() if model.cfg.detach_gate else s_node
        alpha = gate_weight(gate_in, model.cfg.gate_lambda)
        alpha_val = float(alpha.data)

    cond, weights = harmonized_attention(feats.visual, feats.text, alpha,
                                         model.cond_attn, return_weights=True)
    if record is not None:
        record["harmonized"] = np.array(weights.data)
    return ConditioningBundle(feats, s_val, alpha_val, alpha_override is not None, cond)


def conditioning_context(bundle: ConditioningBundle) -> Tensor:
    """Token context given to every denoiser cross-attention layer:
    [conditioning; enhanced text], or the plain concatenation
    [visual; text] when the harmonizer is disabled."""
    if bundle.cond is None:
        return concat_rows([bundle.features.visual, bundle.features.text])
    return concat_rows([bundle.cond, bundle.features.text])
