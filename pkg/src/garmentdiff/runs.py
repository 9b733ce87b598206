"""Training-run directories and sample output writing.

A run directory is self-contained: checkpoint, resolved config, vocab,
and a copy of the fabric database, so `sample` and `sweep-alpha` need
only the run path.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, sha256_file
from .diffusion import NoiseSchedule, SampleResult, make_schedule
from .encoders import Vocabulary
from .errors import ValidationError
from .fabricdb import FabricDb, load_db
from .imageio import write_pgm, write_ppm
from .model import GarmentModel

CHECKPOINT = "checkpoint.hgck"
CONFIG = "config.txt"
VOCAB = "vocab.tsv"
DB_DIR = "fabricdb"


def save_run(out_dir, model: GarmentModel, db_path) -> dict:
    """Write the run artifacts; returns {relative name: sha256}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / CHECKPOINT)
    (out / CONFIG).write_text(model.cfg.to_text(), encoding="utf-8")
    model.vocab.save(out / VOCAB)
    src = Path(db_path)
    dst = out / DB_DIR
    if dst.exists():
        shutil.rmtree(dst)
    dst.mkdir()
    shutil.copy(src, dst / "db.jsonl")
    hashes = {}
    for rec_line in (dst / "db.jsonl").read_text(encoding="utf-8").splitlines():
        rec = json.loads(rec_line)
        if "image" not in rec:
            continue
        img_src = src.parent / rec["image"]
        img_dst = dst / rec["image"]
        img_dst.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy(img_src, img_dst)
        hashes[f"{DB_DIR}/{rec['image']}"] = sha256_file(img_dst)
    for name in (CHECKPOINT, CONFIG, VOCAB):
        hashes[name] = sha256_file(out / name)
    hashes[f"{DB_DIR}/db.jsonl"] = sha256_file(dst / "db.jsonl")
    return hashes


def resolve_run_dir(ckpt) -> Path:
    path = Path(ckpt)
    if path.is_file():
        path = path.parent
    if not (path / CHECKPOINT).exists():
        raise ValidationError(f"{path}: no {CHECKPOINT} found (not a run directory)")
    return path


def load_run(ckpt) -> tuple[GarmentModel, RunConfig, FabricDb, NoiseSchedule]:
    run = resolve_run_dir(ckpt)
    cfg = load_config(run / CONFIG, environ={})
    vocab = Vocabulary.load(run / VOCAB)
    model = GarmentModel(cfg, vocab=vocab)
    model.load(run / CHECKPOINT)
    db = load_db(run / DB_DIR / "db.jsonl")
    schedule = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    return model, cfg, db, schedule


def _heatmap(arr: np.ndarray) -> np.ndarray:
    peak = arr.max()
    return arr / peak if peak > 0 else arr


def write_sample_outputs(out_dir, result: SampleResult, image_name: str = "image.ppm") -> dict:
    """Write the image, attention-map PGMs, and diag.json; returns
    {relative name: sha256} of the deterministic artifacts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_ppm(out / image_name, result.image)
    hashes = {image_name: sha256_file(out / image_name)}
    attn_files = {}
    for name, weights in sorted(result.attention.items()):
        fname = f"attn_{name}.pgm"
        write_pgm(out / fname, _heatmap(np.asarray(weights)))
        attn_files[name] = fname
        hashes[fname] = sha256_file(out / fname)
    diag = {
        "agreement": result.agreement,
        "alpha": result.alpha,
        "alpha_overridden": result.alpha_overridden,
        "cond_norm": result.cond_norm,
        "denoiser_evals": result.denoiser_evals,
        "attention_maps": attn_files,
    }
    if result.retrieval is not None:
        diag["retrieval"] = {
            "term": result.retrieval.term,
            "method": result.retrieval.method,
            "canonical": result.retrieval.canonical,
            "scores": result.retrieval.scores,
        }
    with open(out / "diag.json", "w", encoding="utf-8") as f:
        json.dump(diag, f, indent=2, sort_keys=True)
        f.write("\n")
    hashes["diag.json"] = sha256_file(out / "diag.json")
    return hashes
