"""Gradient-verification suites, shared by the CLI and the test suite.

Each suite builds a small float64 model, closes a pure scalar loss over
some block, and compares analytic gradients against central differences.
Isolated blocks must stay under 1e-5 relative error; the full
conditioning + denoiser chain under 1e-4.
"""

from __future__ import annotations

import numpy as np

from .attention import AttentionParams, attend
from .config import RunConfig
from .denoiser import denoiser_forward
from .diffusion import forward_noise, make_schedule
from .encoders import encode_image, encode_text
from .fabricdb import FabricDb, FabricEntry
from .fusion import enhance_visual, fuse_cross, fuse_self
from .gradcheck import GradCheckReport, grad_check
from .harmonize import build_conditioning, conditioning_context, cosine_agreement, gate_weight, harmonized_attention
from .model import GarmentModel
from .rng import RngState
from .synthdata import FABRICS, GarmentSpec, render_fabric_swatch, render_sample
from .tensor import Parameter, Tensor, matmul, tmean

BLOCK_TOL = 1e-5
CHAIN_TOL = 1e-4

_SMALL = dict(d=16, patch=4, n_queries=2, max_text_len=8, width1=8, width2=12,
              temb_dim=8, image_size=8, swatch_size=8, timesteps=40,
              ddim_steps=10, dtype="float64")


def small_config(**overrides) -> RunConfig:
    kw = dict(_SMALL)
    kw.update(overrides)
    return RunConfig(**kw).validate()


def small_model(seed: int = 0, **overrides) -> GarmentModel:
    return GarmentModel(small_config(seed=seed, **overrides))


def memory_db(swatch_size: int = 8, seed: int = 0) -> FabricDb:
    """Grammar fabric database held in memory (no files)."""
    db = FabricDb()
    for i, name in enumerate(sorted(FABRICS)):
        img = render_fabric_swatch(name, swatch_size, RngState(seed).fork(i))
        db.entries[name] = FabricEntry(name, f"{name}.ppm", img)
        db.aliases[name] = name
    from .synthdata import FABRIC_ALIASES

    for alias, canonical in FABRIC_ALIASES.items():
        db.aliases[alias] = canonical
    return db


def check_core(seed: int = 0, grad_tweak=None) -> GradCheckReport:
    """Linear map + quadratic loss over plain tensor ops."""
    rng = RngState(seed)
    a = Parameter(rng.normal((5, 4)), "a")
    b = Parameter(rng.normal((4, 3)), "b")
    c = Parameter(rng.normal((1, 3)), "c")
    x = Tensor(rng.normal((5, 4)))

    def loss():
        y = matmul(a * x, b) + c
        return tmean(y * y)

    return grad_check(loss, [a, b, c], seed=seed, grad_tweak=grad_tweak)


def check_attention(seed: int = 0, grad_tweak=None) -> GradCheckReport:
    model = small_model(seed)
    rng = RngState(seed + 1)
    xq = Tensor(rng.normal((3, model.cfg.d)))
    ctx = Tensor(rng.normal((5, model.cfg.d)))
    params = model.vis_enh

    def loss():
        return tmean(attend(params, xq, ctx) ** 2.0)

    return grad_check(loss, params.parameters(), seed=seed, grad_tweak=grad_tweak)


def check_encoders(seed: int = 0, grad_tweak=None) -> GradCheckReport:
    model = small_model(seed)
    rng = RngState(seed + 2)
    img = rng.uniform((1, model.cfg.image_size, model.cfg.image_size))
    ids = np.array([2, 5, 3])

    def loss():
        v = encode_image(img, model.sketch_enc)
        t = encode_text(ids, model.text_enc)
        return tmean(v * v) + tmean(t * t)

    params = model.sketch_enc.parameters() + model.text_enc.parameters()
    return grad_check(loss, params, seed=seed, grad_tweak=grad_tweak)


def check_enhance(seed: int = 0, grad_tweak=None) -> GradCheckReport:
    """Fabric fuser plus both enhancement attentions."""
    model = small_model(seed)
    rng = RngState(seed + 3)
    d = model.cfg.d
    label = Tensor(rng.normal((1, d)))
    swatch_tokens = Tensor(rng.normal((4, d)))
    v = Tensor(rng.normal((4, d)))
    t = Tensor(rng.normal((3, d)))

    def loss():
        f = fuse_cross(fuse_self(label, model.fuser), swatch_tokens, model.fuser)
        v2 = enhance_visual(v, t, f, model.vis_enh)
        return tmean(v2 * v2)

    params = model.fuser.parameters() + model.vis_enh.parameters()
    return grad_check(loss, params, seed=seed, grad_tweak=grad_tweak)


def check_harmonize(seed: int = 0, grad_tweak=None) -> GradCheckReport:
    """Cosine gate and gated attention, differentiable end to end."""
    model = small_model(seed)
    rng = RngState(seed + 4)
    d = model.cfg.d
    v = Tensor(rng.normal((4, d)))
    t = Tensor(rng.normal((3, d)))

    def loss():
        alpha = gate_weight(cosine_agreement(v, t), model.cfg.gate_lambda)
        z = harmonized_attention(v, t, alpha, model.cond_attn)
        return tmean(z * z)

    return grad_check(loss, model.cond_attn.parameters(), seed=seed, grad_tweak=grad_tweak)


def check_denoiser(seed: int = 0, grad_tweak=None) -> GradCheckReport:
    model = small_model(seed)
    cfg = model.cfg
    rng = RngState(seed + 5)
    x = Tensor(rng.normal((1, cfg.image_size, cfg.image_size, 3)))
    ctx = Tensor(rng.normal((5, cfg.d)))
    eps = rng.normal((1, cfg.image_size, cfg.image_size, 3))

    def loss():
        pred = denoiser_forward(model.denoiser, x, np.array([7]), [ctx])
        diff = pred - Tensor(eps)
        return tmean(diff * diff)

    return grad_check(loss, model.denoiser.parameters(), seed=seed,
                      max_entries_per_param=2, grad_tweak=grad_tweak)


def check_full_chain(seed: int = 0, grad_tweak=None) -> GradCheckReport:
    """Everything at once: encoders, retrieval-fed fuser, enhancement,
    gate, harmonized attention, and the denoiser, under the training
    loss with fixed noise draw."""
    model = small_model(seed)
    cfg = model.cfg
    db = memory_db(cfg.swatch_size, seed)
    rng = RngState(seed + 6)
    sketch = rng.uniform((1, cfg.image_size, cfg.image_size))
    caption = "red denim tshirt with pocket"
    target = rng.uniform((3, cfg.image_size, cfg.image_size))
    schedule = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    t_step = 11
    eps = rng.normal(target.shape)
    x_t = forward_noise(target * 2.0 - 1.0, t_step, eps, schedule)
    x = Tensor(x_t.transpose(1, 2, 0)[None])
    eps_t = Tensor(eps.transpose(1, 2, 0)[None])

    def loss():
        bundle = build_conditioning(sketch, caption, db, model)
        ctx = conditioning_context(bundle)
        pred = denoiser_forward(model.denoiser, x, np.array([t_step]), [ctx])
        diff = pred - eps_t
        return tmean(diff * diff)

    return grad_check(loss, model.parameters(), seed=seed, max_entries_per_param=2,
                      grad_tweak=grad_tweak)


SUITES = {
    "core": check_core,
    "attention": check_attention,
    "encoders": check_encoders,
    "enhance": check_enhance,
    "harmonize": check_harmonize,
    "denoiser": check_denoiser,
    "chain": check_full_chain,
}

TOLERANCES = {name: (CHAIN_TOL if name == "chain" else BLOCK_TOL) for name in SUITES}


def run_suites(module: str = "all", seed: int = 0,
               grad_tweak=None) -> dict[str, GradCheckReport]:
    if module == "all":
        names = list(SUITES)
    elif module in SUITES:
        names = [module]
    else:
        raise ValueError(f"unknown gradcheck module {module!r} (choose from {sorted(SUITES)} or all)")
    return {name: SUITES[name](seed, grad_tweak=grad_tweak) for name in names}
