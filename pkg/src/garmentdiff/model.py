"""Model assembly: every trainable parameter of the conditioning stack
and the denoiser, with stable hierarchical names for checkpointing."""

from __future__ import annotations

import numpy as np

from .attention import AttentionParams
from .checkpoint import load_checkpoint, restore_parameters, save_checkpoint
from .config import RunConfig
from .denoiser import Conv, CrossAttn, DenoiserParams, Linear, ResBlock
from .encoders import ImageEncoderParams, TextEncoderParams, Vocabulary
from .errors import ValidationError
from .fusion import QueryFuserParams
from .rng import RngState
from .synthdata import grammar_words
from .tensor import Parameter

_INIT_STREAM = 0x4D4F44454C  # distinct fork index for parameter init


class GarmentModel:
    def __init__(self, cfg: RunConfig, vocab: Vocabulary | None = None):
        cfg.validate()
        self.cfg = cfg
        self.dtype = np.float32 if cfg.dtype == "float32" else np.float64
        self.vocab = vocab if vocab is not None else Vocabulary.from_tokens(grammar_words())
        rng = RngState(cfg.seed).fork(_INIT_STREAM)
        d = cfg.d

        def normal(name, shape, std):
            return Parameter((rng.normal(shape) * std).astype(self.dtype), name)

        def zeros(name, shape):
            return Parameter(np.zeros(shape, dtype=self.dtype), name)

        proj_std = 1.0 / np.sqrt(d)
        n_img_tokens = (cfg.image_size // cfg.patch) ** 2
        n_swatch_tokens = (cfg.swatch_size // cfg.patch) ** 2

        self.text_enc = TextEncoderParams(
            embed=normal("text.embed", (len(self.vocab), d), 0.5),
            pos=normal("text.pos", (cfg.max_text_len, d), 0.1),
        )
        self.sketch_enc = ImageEncoderParams(
            proj=normal("sketch.proj", (cfg.patch * cfg.patch, d),
                        1.0 / np.sqrt(cfg.patch * cfg.patch)),
            pos=normal("sketch.pos", (n_img_tokens, d), 0.1),
            patch=cfg.patch, channels=1,
        )
        self.swatch_enc = ImageEncoderParams(
            proj=normal("swatch.proj", (cfg.patch * cfg.patch * 3, d),
                        1.0 / np.sqrt(cfg.patch * cfg.patch * 3)),
            pos=normal("swatch.pos", (n_swatch_tokens, d), 0.1),
            patch=cfg.patch, channels=3,
        )
        self.fuser = QueryFuserParams(
            queries=normal("fuser.queries", (cfg.n_queries, d), 0.5),
            self_q=normal("fuser.self_q", (d, d), proj_std),
            self_k=normal("fuser.self_k", (d, d), proj_std),
            self_v=normal("fuser.self_v", (d, d), proj_std),
            cross_q=normal("fuser.cross_q", (d, d), proj_std),
            cross_k=normal("fuser.cross_k", (d, d), proj_std),
            cross_v=normal("fuser.cross_v", (d, d), proj_std),
        )
        self.vis_enh = AttentionParams(
            w_q=normal("enh_vis.w_q", (d, d), proj_std),
            w_k=normal("enh_vis.w_k", (d, d), proj_std),
            w_v=normal("enh_vis.w_v", (d, d), proj_std),
        )
        self.txt_enh = AttentionParams(
            w_q=normal("enh_txt.w_q", (d, d), proj_std),
            w_k=normal("enh_txt.w_k", (d, d), proj_std),
            w_v=normal("enh_txt.w_v", (d, d), proj_std),
        )
        self.cond_attn = AttentionParams(
            w_q=normal("cond.w_q", (d, d), proj_std),
            w_k=normal("cond.w_k", (d, d), proj_std),
            w_v=normal("cond.w_v", (d, d), proj_std),
        )

        c1, c2 = cfg.width1, cfg.width2
        hidden = 2 * cfg.temb_dim

        def conv(name, cin, cout, k):
            fan = cin * k * k
            return Conv(normal(f"{name}.w", (fan, cout), np.sqrt(2.0 / fan)),
                        zeros(f"{name}.b", (cout,)), k)

        def linear(name, nin, nout, std=None):
            std = 1.0 / np.sqrt(nin) if std is None else std
            return Linear(normal(f"{name}.w", (nin, nout), std) if std > 0
                          else zeros(f"{name}.w", (nin, nout)),
                          zeros(f"{name}.b", (nout,)))

        def cross(name, width):
            return CrossAttn(
                w_q=normal(f"{name}.w_q", (width, d), 1.0 / np.sqrt(width)),
                w_k=normal(f"{name}.w_k", (d, d), proj_std),
                w_v=normal(f"{name}.w_v", (d, d), proj_std),
                w_o=normal(f"{name}.w_o", (d, width), 0.5 * proj_std),
            )

        def block(name, cin, cout):
            return ResBlock(
                conv_a=conv(f"{name}.conv_a", cin, cout, 3),
                conv_b=conv(f"{name}.conv_b", cout, cout, 3),
                scale_proj=linear(f"{name}.scale", hidden, cout, std=0.0),
                shift_proj=linear(f"{name}.shift", hidden, cout, std=0.0),
                shortcut=None if cin == cout else conv(f"{name}.shortcut", cin, cout, 1),
                attn=cross(f"{name}.attn", cout),
            )

        self.denoiser = DenoiserParams(
            conv_in=conv("den.conv_in", 3, c1, 3),
            temb_lin1=linear("den.temb1", cfg.temb_dim, hidden),
            temb_lin2=linear("den.temb2", hidden, hidden),
            block1=block("den.b1", c1, c1),
            block2=block("den.b2", c1, c2),
            up1=conv("den.up1", c2, c1, 3),
            out_scale=linear("den.out_scale", hidden, c1, std=0.0),
            out_shift=linear("den.out_shift", hidden, c1, std=0.0),
            conv_out=conv("den.conv_out", c1, 3, 3),
            temb_dim=cfg.temb_dim,
        )

        names = [p.name for p in self.parameters()]
        if len(names) != len(set(names)):
            raise ValidationError("duplicate parameter names in model")

    def parameters(self) -> list[Parameter]:
        params = (self.text_enc.parameters() + self.sketch_enc.parameters()
                  + self.swatch_enc.parameters() + self.fuser.parameters()
                  + self.vis_enh.parameters() + self.txt_enh.parameters()
                  + self.cond_attn.parameters() + self.denoiser.parameters())
        return sorted(params, key=lambda p: p.name)

    def trainable_parameters(self) -> list[Parameter]:
        """Parameters the optimizer updates under the current config:
        frozen or ablated-away components are excluded."""
        out = []
        for p in self.parameters():
            if not self.cfg.train_denoiser and p.name.startswith("den."):
                continue
            if not self.cfg.use_enhancer and (
                p.name.startswith(("fuser.", "enh_", "swatch."))
            ):
                continue
            if not self.cfg.use_harmonizer and p.name.startswith("cond."):
                continue
            out.append(p)
        return out

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def save(self, path):
        save_checkpoint(path, self.parameters())

    def load(self, path):
        restore_parameters(self.parameters(), load_checkpoint(path))
        return self
