"""Fabric sample store: alias normalization, exact key retrieval, and a
cosine nearest-neighbor fallback for fabric terms not in the store.

Records live in a line-per-entry JSON file next to the swatch images.
Entry records are ``{canonical, aliases[], image}``; a line may instead
be a pure dictionary record ``{alias, canonical}`` adding one variant
term to an existing entry. Key embeddings are never stored; they are
recomputed from the canonical names with whatever text encoder the
caller supplies, so the file stays encoder-agnostic. Unknown terms are
embedded through the same table via a character-trigram hash, which
keeps query and key vectors in one space.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import TextEncoderParams, Vocabulary, encode_text, split_words, tokenize
from .errors import DegenerateInputError, ValidationError
from .imageio import read_ppm, write_ppm
from .rng import RngState, mix64
from .synthdata import FABRIC_ALIASES, FABRICS, render_fabric_swatch

log = logging.getLogger(__name__)


@dataclass
class FabricEntry:
    canonical: str
    image_path: str
    image: np.ndarray  # (3, S, S)
    key_embedding: np.ndarray | None = None  # unit L2 norm when set


@dataclass
class FabricDb:
    entries: dict = field(default_factory=dict)  # canonical -> FabricEntry
    aliases: dict = field(default_factory=dict)  # term -> canonical (canonicals map to themselves)

    def __len__(self):
        return len(self.entries)

    def canonical_names(self) -> list[str]:
        return sorted(self.entries)


@dataclass
class RetrievalTrace:
    term: str
    method: str  # "exact" | "fallback"
    canonical: str
    scores: dict | None = None  # canonical -> cosine, fallback only


def extract_fabric_label(tokens, db: FabricDb) -> str | None:
    """First prompt word that is a known alias or canonical name."""
    hits = [t for t in tokens if t in db.aliases]
    if len(hits) > 1:
        log.warning("prompt names several fabrics %s; using the first", hits)
    return hits[0] if hits else None


def normalize(label: str, db: FabricDb) -> str:
    """Map a variant fabric term to its canonical name."""
    if label not in db.aliases:
        raise ValidationError(f"fabric term {label!r} is not in the dictionary")
    return db.aliases[label]


def term_embedding(term: str, text_params: TextEncoderParams, vocab: Vocabulary) -> np.ndarray:
    """Unit-norm embedding of a fabric term. In-vocabulary words go
    through the normal token path; out-of-vocabulary words hash their
    character trigrams onto embedding rows so distinct unknown terms get
    distinct, deterministic vectors."""
    words = split_words(term)
    if not words:
        raise DegenerateInputError(f"cannot embed empty term {term!r}")
    if all(w in vocab for w in words):
        ids = tokenize(term, vocab)
    else:
        padded = f"^{'~'.join(words)}$"
        n_rows = text_params.embed.data.shape[0]
        ids = np.asarray(
            [mix64(int.from_bytes(padded[i : i + 3].encode(), "big")) % n_rows
             for i in range(len(padded) - 2)],
            dtype=np.intp,
        )
    vec = encode_text(ids, text_params).data.mean(axis=0)
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        raise DegenerateInputError(f"embedding of {term!r} has zero norm")
    return vec / norm


def refresh_embeddings(db: FabricDb, text_params: TextEncoderParams, vocab: Vocabulary):
    for name in db.canonical_names():
        db.entries[name].key_embedding = term_embedding(name, text_params, vocab)


def retrieve(term: str, db: FabricDb, text_params: TextEncoderParams,
             vocab: Vocabulary) -> tuple[FabricEntry, RetrievalTrace]:
    """Exact dictionary hit, else cosine nearest neighbor over the key
    embeddings (ties broken by lexicographic canonical name)."""
    if not db.entries:
        raise ValidationError("fabric database is empty")
    if term in db.aliases:
        canonical = db.aliases[term]
        return db.entries[canonical], RetrievalTrace(term, "exact", canonical)
    query = term_embedding(term, text_params, vocab)
    scores = {}
    for name in db.canonical_names():
        entry = db.entries[name]
        if entry.key_embedding is None:
            entry.key_embedding = term_embedding(name, text_params, vocab)
        scores[name] = float(np.dot(query, entry.key_embedding))
    best = max(sorted(scores), key=lambda n: scores[n])
    return db.entries[best], RetrievalTrace(term, "fallback", best, scores)


def build_db(out_dir, swatch_size: int = 32, seed: int = 0) -> Path:
    """Write swatches plus db.jsonl for the full fabric grammar."""
    out = Path(out_dir)
    (out / "swatches").mkdir(parents=True, exist_ok=True)
    alias_of: dict[str, list[str]] = {name: [] for name in FABRICS}
    for alias, canonical in FABRIC_ALIASES.items():
        alias_of[canonical].append(alias)
    db_path = out / "db.jsonl"
    with open(db_path, "w", encoding="utf-8") as f:
        for i, name in enumerate(sorted(FABRICS)):
            rel = f"swatches/{name}.ppm"
            swatch = render_fabric_swatch(name, swatch_size, RngState(seed).fork(i))
            write_ppm(out / rel, swatch)
            rec = {"canonical": name, "aliases": sorted(alias_of[name]), "image": rel}
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    return db_path


def save_db(db: FabricDb, path):
    """Rewrite the record file (swatch images must already exist)."""
    path = Path(path)
    alias_of: dict[str, list[str]] = {name: [] for name in db.entries}
    for term, canonical in db.aliases.items():
        if term != canonical:
            alias_of[canonical].append(term)
    with open(path, "w", encoding="utf-8") as f:
        for name in sorted(db.entries):
            rec = {
                "canonical": name,
                "aliases": sorted(alias_of[name]),
                "image": db.entries[name].image_path,
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def _add_alias(db: FabricDb, alias: str, canonical: str, where: str):
    if alias != alias.lower():
        raise ValidationError(f"{where}: aliases must be lowercase")
    if alias in db.aliases and db.aliases[alias] != canonical:
        raise ValidationError(f"{where}: alias {alias!r} maps to two entries")
    db.aliases[alias] = canonical


def load_db(path) -> FabricDb:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: fabric database not found")
    db = FabricDb()
    dict_records: list[tuple[int, str, str]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{where}: malformed record") from exc
            if set(rec) == {"alias", "canonical"}:
                dict_records.append((lineno, rec["alias"], rec["canonical"]))
                continue
            for key in ("canonical", "aliases", "image"):
                if key not in rec:
                    raise ValidationError(f"{where}: missing field {key!r}")
            name = rec["canonical"]
            if name != name.lower():
                raise ValidationError(f"{where}: canonical names must be lowercase")
            if name in db.entries:
                raise ValidationError(f"{where}: duplicate canonical name {name!r}")
            image_file = path.parent / rec["image"]
            if not image_file.exists():
                raise ValidationError(f"{where}: swatch image {rec['image']!r} missing")
            db.entries[name] = FabricEntry(name, rec["image"], read_ppm(image_file))
            db.aliases[name] = name
            for alias in rec["aliases"]:
                _add_alias(db, alias, name, where)
    for lineno, alias, canonical in dict_records:
        where = f"{path}:{lineno}"
        if canonical not in db.entries:
            raise ValidationError(
                f"{where}: alias {alias!r} points to missing entry {canonical!r}"
            )
        _add_alias(db, alias, canonical, where)
    if not db.entries:
        raise ValidationError(f"{path}: fabric database has no entries")
    return db
