"""Flat key=value run configuration plus run manifests.

Every tunable lives here with its documented default; unknown keys are
rejected. Values can be overridden per run by a config file and by
``GARMENTDIFF_<KEY>`` environment variables (file first, then env).
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError

ENV_PREFIX = "GARMENTDIFF_"


@dataclass
class RunConfig:
    # model widths
    d: int = 64                  # model width (token dimension)
    patch: int = 8               # image patch size
    n_queries: int = 8           # learned fuser query rows
    max_text_len: int = 16       # positional table size for prompts
    width1: int = 32             # denoiser channels, first level
    width2: int = 64             # denoiser channels, second level
    temb_dim: int = 32           # timestep embedding width
    # gating
    gate_lambda: float = 0.6     # lower bound of the image/text gate
    cosine_on_enhanced: bool = False  # gate cosine on enhanced instead of raw features
    detach_gate: bool = False    # stop gradients through the gate weight
    # ablations
    use_enhancer: bool = True    # fabric retrieval + feature enhancement
    use_harmonizer: bool = True  # gated conditioning attention
    train_denoiser: bool = True  # set False to freeze the denoiser
    # diffusion
    image_size: int = 32
    swatch_size: int = 32
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    ddim_steps: int = 50
    # training
    lr: float = 1e-4
    weight_decay: float = 0.01
    batch_size: int = 8
    train_steps: int = 2000
    seed: int = 0
    dtype: str = "float32"       # float32 runtime, float64 for verification

    def validate(self):
        for name in ("d", "patch", "n_queries", "max_text_len", "width1", "width2",
                     "temb_dim", "image_size", "swatch_size", "timesteps", "ddim_steps",
                     "batch_size", "train_steps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"config key {name!r} must be positive")
        for name in ("lr", "weight_decay"):
            if getattr(self, name) < 0:
                raise ConfigError(f"config key {name!r} must be nonnegative")
        if not 0.0 <= self.gate_lambda < 1.0:
            raise ConfigError("gate_lambda must lie in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.image_size % self.patch:
            raise ConfigError("image_size must be divisible by patch")
        if self.swatch_size % self.patch:
            raise ConfigError("swatch_size must be divisible by patch")
        if self.image_size % 4:
            raise ConfigError("image_size must be divisible by 4 (two pooling levels)")
        if self.ddim_steps > self.timesteps:
            raise ConfigError("ddim_steps cannot exceed timesteps")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    if ftype == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"config key {key!r} expects a boolean, got {raw!r}")
    if ftype == "int":
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r} expects an integer, got {raw!r}") from exc
    if ftype == "float":
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r} expects a number, got {raw!r}") from exc
    return raw


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _parse_value(key, raw))
    return cfg


def apply_env_overrides(cfg: RunConfig, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    for key in _FIELD_TYPES:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            setattr(cfg, key, _parse_value(key, raw))
    return cfg


def load_config(path=None, environ=None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        cfg = parse_config_text(Path(path).read_text(encoding="utf-8"), cfg)
    apply_env_overrides(cfg, environ)
    return cfg.validate()


# -- run manifests --------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, argv: list[str], config: dict, seed: int,
                   inputs: dict, outputs: dict, logs: list[str] | None = None,
                   wall_time: float | None = None, extra: dict | None = None):
    """Record everything needed to reproduce a CLI run. ``outputs`` maps
    file names to content hashes of deterministic artifacts; ``logs``
    lists files (wall-times etc.) excluded from hashing."""
    doc = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "logs": logs or [],
        "wall_time": time.time() if wall_time is None else wall_time,
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return doc


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
