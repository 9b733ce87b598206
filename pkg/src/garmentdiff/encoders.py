"""Trainable toy encoders producing token sequences of the model width:
a token-embedding text encoder and a linear patch projection for images.
Images are channels-first float arrays in [0, 1]."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError
from .tensor import Parameter, Tensor, add, gather_rows, matmul

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
_WORD_RE = re.compile(r"[a-z0-9]+")


@dataclass
class Vocabulary:
    token_to_id: dict = field(default_factory=dict)
    id_to_token: list = field(default_factory=list)

    @classmethod
    def from_tokens(cls, tokens) -> "Vocabulary":
        vocab = cls()
        for special in (PAD_TOKEN, UNK_TOKEN):
            vocab.token_to_id[special] = len(vocab.id_to_token)
            vocab.id_to_token.append(special)
        for tok in sorted(set(tokens)):
            if tok in vocab.token_to_id:
                continue
            vocab.token_to_id[tok] = len(vocab.id_to_token)
            vocab.id_to_token.append(tok)
        return vocab

    def __len__(self):
        return len(self.id_to_token)

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD_TOKEN]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK_TOKEN]

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for tok in sorted(self.token_to_id):
                f.write(f"{tok}\t{self.token_to_id[tok]}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        pairs = []
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    tok, sid = line.split("\t")
                    pairs.append((int(sid), tok))
                except ValueError as exc:
                    raise ValidationError(f"{path}:{lineno}: malformed vocab line") from exc
        pairs.sort()
        vocab = cls()
        vocab.id_to_token = [tok for _, tok in pairs]
        vocab.token_to_id = {tok: i for i, tok in enumerate(vocab.id_to_token)}
        if vocab.id_to_token[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValidationError(f"{path}: vocab must start with {PAD_TOKEN}, {UNK_TOKEN}")
        return vocab


def split_words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def tokenize(text: str, vocab: Vocabulary) -> np.ndarray:
    """Lowercase word split; unknown words map to the unk id."""
    ids = [vocab.token_to_id.get(w, vocab.unk_id) for w in split_words(text)]
    return np.asarray(ids, dtype=np.intp)


@dataclass
class TextEncoderParams:
    embed: Parameter  # (|V|, d)
    pos: Parameter  # (max_len, d)

    def parameters(self):
        return [self.embed, self.pos]

    @property
    def max_len(self) -> int:
        return self.pos.data.shape[0]


def encode_text(ids, params: TextEncoderParams) -> Tensor:
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size == 0:
        raise ValidationError("encode_text needs at least one token (prompts are mandatory)")
    if ids.size > params.max_len:
        raise ValidationError(
            f"prompt has {ids.size} tokens, exceeding the positional table ({params.max_len})"
        )
    tok = gather_rows(params.embed, ids)
    pos = gather_rows(params.pos, np.arange(ids.size, dtype=np.intp))
    return add(tok, pos)


@dataclass
class ImageEncoderParams:
    proj: Parameter  # (patch*patch*channels, d)
    pos: Parameter  # (n_tokens, d)
    patch: int
    channels: int

    def parameters(self):
        return [self.proj, self.pos]


def patchify(img: np.ndarray, patch: int) -> np.ndarray:
    """(C,H,W) -> (n_patches, C*patch*patch), raster order."""
    c, h, w = img.shape
    hp, wp = h // patch, w // patch
    win = img.reshape(c, hp, patch, wp, patch)
    return np.ascontiguousarray(win.transpose(1, 3, 0, 2, 4)).reshape(hp * wp, c * patch * patch)


def encode_image(img: np.ndarray, params: ImageEncoderParams) -> Tensor:
    """Non-overlapping patches, linear projection, positional embedding."""
    img = np.asarray(img)
    if img.ndim != 3:
        raise ShapeError(f"image must be (C,H,W), got shape {img.shape}")
    c, h, w = img.shape
    if c != params.channels:
        raise ShapeError(f"image has {c} channels, encoder expects {params.channels}")
    if h % params.patch or w % params.patch:
        raise ShapeError(
            f"image {h}x{w} not divisible by patch size {params.patch}"
        )
    n_tokens = (h // params.patch) * (w // params.patch)
    if n_tokens != params.pos.data.shape[0]:
        raise ShapeError(
            f"image yields {n_tokens} tokens but the positional table has "
            f"{params.pos.data.shape[0]} rows"
        )
    patches = Tensor(patchify(img, params.patch).astype(params.proj.data.dtype))
    return add(matmul(patches, params.proj), params.pos)
