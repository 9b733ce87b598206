"""Forward noising, the denoising training loop, and deterministic DDIM
sampling. Pixels are mapped to [-1, 1] inside the diffusion process and
back to [0, 1] (with a final clamp) when an image is emitted."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .denoiser import denoiser_forward
from .errors import NumericError, ValidationError
from .harmonize import build_conditioning, conditioning_context
from .optim import OptimizerState, adamw_step
from .rng import RngState
from .tensor import Tensor, no_grad, sub, tmean


@dataclass
class NoiseSchedule:
    """Linear-beta schedule; index 0 is the identity step (alpha_bar=1)."""

    betas: np.ndarray           # (T+1,), betas[0] unused
    alphas: np.ndarray          # (T+1,)
    alpha_bar: np.ndarray       # (T+1,), alpha_bar[0] == 1
    one_minus_alpha_bar: np.ndarray

    @property
    def timesteps(self) -> int:
        return len(self.betas) - 1


def make_schedule(timesteps: int = 1000, beta_start: float = 1e-4,
                  beta_end: float = 0.02) -> NoiseSchedule:
    if timesteps < 1:
        raise ValidationError(f"timesteps must be >= 1, got {timesteps}")
    betas = np.zeros(timesteps + 1)
    betas[1:] = np.linspace(beta_start, beta_end, timesteps)
    alphas = 1.0 - betas
    alpha_bar = np.cumprod(alphas)
    alpha_bar[0] = 1.0
    return NoiseSchedule(betas, alphas, alpha_bar, 1.0 - alpha_bar)


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray,
                  schedule: NoiseSchedule) -> np.ndarray:
    """q(x_t | x_0): sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    if not 0 <= t <= schedule.timesteps:
        raise ValidationError(f"timestep {t} outside [0, {schedule.timesteps}]")
    ab = schedule.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(schedule.one_minus_alpha_bar[t]) * eps


def _to_signed(img: np.ndarray) -> np.ndarray:
    return img * 2.0 - 1.0


def _to_unit(x: np.ndarray) -> np.ndarray:
    return np.clip((x + 1.0) * 0.5, 0.0, 1.0)


def train_step(model, batch, db, schedule: NoiseSchedule, opt: OptimizerState,
               rng: RngState) -> float:
    """One optimization step over ``batch`` records (dicts with
    ``sketch_img``, ``caption``, ``target_img``). Returns the loss."""
    if not batch:
        raise ValidationError("training batch is empty")
    dtype = model.dtype
    contexts = []
    noisy = []
    targets = []
    for rec in batch:
        bundle = build_conditioning(rec["sketch_img"].astype(dtype), rec["caption"],
                                    db, model)
        contexts.append(conditioning_context(bundle))
        t = rng.integers(1, schedule.timesteps + 1)
        eps = rng.normal(rec["target_img"].shape)
        x_t = forward_noise(_to_signed(rec["target_img"]), t, eps, schedule)
        noisy.append((x_t, t))
        targets.append(eps)
    # denoiser layout is channels-last
    x = Tensor(np.stack([xt for xt, _ in noisy]).transpose(0, 2, 3, 1).astype(dtype))
    t_idx = np.array([t for _, t in noisy])
    eps_true = Tensor(np.stack(targets).transpose(0, 2, 3, 1).astype(dtype))

    pred = denoiser_forward(model.denoiser, x, t_idx, contexts)
    diff = sub(pred, eps_true)
    loss = tmean(diff * diff)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericError(f"training loss is not finite ({value})")
    loss.backward()
    adamw_step(model.trainable_parameters(), opt)
    model.zero_grad()
    return value


def train(model, dataset, db, cfg, log_path=None) -> list[tuple[int, float, float]]:
    """Run ``cfg.train_steps`` steps of AdamW; returns and optionally
    appends (step, loss, wall_time) rows."""
    schedule = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    opt = OptimizerState.create(model.trainable_parameters(), lr=cfg.lr,
                                weight_decay=cfg.weight_decay)
    rng = RngState(cfg.seed).fork(0x545241494E)  # training stream
    history = []
    log_file = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        if log_file is not None and log_file.tell() == 0:
            log_file.write("step,loss,wall_time\n")
        start = time.time()
        for step in range(cfg.train_steps):
            idx = [rng.integers(0, len(dataset)) for _ in range(cfg.batch_size)]
            batch = [dataset[i] for i in idx]
            loss = train_step(model, batch, db, schedule, opt, rng)
            row = (step, loss, time.time() - start)
            history.append(row)
            if log_file is not None:
                log_file.write(f"{step},{loss:.8f},{row[2]:.3f}\n")
    finally:
        if log_file is not None:
            log_file.close()
    return history


def ddim_timesteps(timesteps: int, steps: int) -> np.ndarray:
    """Uniform descending sub-schedule T = tau_1 > ... > tau_steps >= 1,
    closed by the identity step 0."""
    if steps < 1:
        raise ValidationError(f"ddim needs >= 1 steps, got {steps}")
    taus = np.unique(np.round(np.linspace(0, timesteps, steps + 1)).astype(int))
    if len(taus) != steps + 1:
        raise ValidationError(
            f"cannot fit {steps} distinct ddim steps into {timesteps} timesteps"
        )
    return taus[::-1]  # descending, ends at 0


@dataclass
class SampleResult:
    image: np.ndarray          # (3, S, S) in [0, 1]
    agreement: float
    alpha: float
    alpha_overridden: bool
    cond_norm: float
    denoiser_evals: int
    attention: dict            # name -> weight matrix (last denoising step)
    retrieval: object | None


def ddim_sample(model, sketch: np.ndarray, prompt: str, db, schedule: NoiseSchedule,
                steps: int = 50, seed: int = 0,
                alpha_override: float | None = None) -> SampleResult:
    """Deterministic (eta=0) DDIM sampling; the conditioning context is
    built once and fed to every denoiser evaluation."""
    if not np.isfinite(next(iter(model.parameters())).data).all():
        raise NumericError("model parameters contain non-finite values")
    with no_grad():
        record: dict = {}
        bundle = build_conditioning(sketch.astype(model.dtype), prompt, db, model,
                                    alpha_override=alpha_override, record=record)
        ctx = conditioning_context(bundle)
        size = sketch.shape[-1]
        rng = RngState(seed).fork(0x53414D504C45)  # sampling stream
        x = rng.normal((1, size, size, 3)).astype(model.dtype)
        taus = ddim_timesteps(schedule.timesteps, steps)
        evals = 0
        attn_record: dict = {}
        for i in range(len(taus) - 1):
            t, t_next = int(taus[i]), int(taus[i + 1])
            ab_t = schedule.alpha_bar[t]
            ab_next = schedule.alpha_bar[t_next]
            eps_hat = denoiser_forward(model.denoiser, Tensor(x), np.array([t]),
                                       [ctx], record=attn_record).data
            evals += 1
            x0_hat = (x - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
            x = np.sqrt(ab_next) * x0_hat + np.sqrt(1.0 - ab_next) * eps_hat
        if not np.isfinite(x).all():
            raise NumericError("sampling produced non-finite pixels")
        record.update(attn_record)
    return SampleResult(
        image=_to_unit(x[0].transpose(2, 0, 1)),
        agreement=bundle.agreement,
        alpha=bundle.alpha,
        alpha_overridden=bundle.alpha_overridden,
        cond_norm=bundle.cond_norm,
        denoiser_evals=evals,
        attention=record,
        retrieval=bundle.features.retrieval,
    )
