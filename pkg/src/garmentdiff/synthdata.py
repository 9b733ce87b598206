"""Procedural sketch -> garment sample generator.

Each sample is a 1-channel flat sketch (outline + a gray interior fill
whose level encodes the base color), a 3-channel rendered target (color
fill modulated by a per-fabric texture), and a caption from a fixed
template grammar. A sample can carry a deliberate conflict: the caption
and target use an override color while the sketch keeps the base hint.
Fabric swatches for the retrieval database come from the same texture
functions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .imageio import read_pgm, read_ppm, write_pgm, write_ppm
from .rng import RngState

COLORS = {
    "red": (0.80, 0.10, 0.10),
    "green": (0.10, 0.60, 0.15),
    "blue": (0.15, 0.25, 0.85),
    "gold": (0.85, 0.65, 0.05),
    "purple": (0.55, 0.15, 0.70),
    "orange": (0.90, 0.45, 0.05),
    "teal": (0.05, 0.55, 0.55),
    "brown": (0.45, 0.28, 0.12),
}

# fabric -> texture family
FABRICS = {
    "linen": "stripes",
    "denim": "twill",
    "gingham": "checker",
    "tweed": "speckle",
    "silk": "smooth",
    "corduroy": "rib",
    "lace": "dots",
    "wool": "crosshatch",
}

# variant term -> canonical fabric
FABRIC_ALIASES = {
    "jeans": "denim",
    "satin": "silk",
    "flannel": "wool",
    "plaid": "gingham",
    "burlap": "linen",
    "cord": "corduroy",
    "net": "lace",
    "boucle": "tweed",
}

SILHOUETTES = ("tshirt", "hoodie", "pants", "skirt")
COMPONENTS = ("buttons", "collar", "hood", "pocket")

_COLOR_NAMES = tuple(COLORS)
_FABRIC_NAMES = tuple(FABRICS)

STROKE_GRAY = 0.05
_HINT_LO, _HINT_HI = 0.25, 0.75


def hint_gray(color: str) -> float:
    """Sketch interior gray level encoding the base color."""
    i = _COLOR_NAMES.index(color)
    return _HINT_LO + (_HINT_HI - _HINT_LO) * i / (len(_COLOR_NAMES) - 1)


@dataclass(frozen=True)
class GarmentSpec:
    silhouette: str
    color: str
    fabric: str
    components: tuple = ()
    conflict_color: str | None = None

    def __post_init__(self):
        if self.silhouette not in SILHOUETTES:
            raise ValidationError(f"unknown silhouette {self.silhouette!r}")
        if self.color not in COLORS:
            raise ValidationError(f"unknown color {self.color!r}")
        if self.fabric not in FABRICS:
            raise ValidationError(f"unknown fabric {self.fabric!r}")
        for comp in self.components:
            if comp not in COMPONENTS:
                raise ValidationError(f"unknown component {comp!r}")
        if self.conflict_color is not None:
            if self.conflict_color not in COLORS:
                raise ValidationError(f"unknown conflict color {self.conflict_color!r}")
            if self.conflict_color == self.color:
                raise ValidationError("conflict color must differ from the base color")

    @property
    def caption_color(self) -> str:
        return self.conflict_color if self.conflict_color is not None else self.color


@dataclass
class Sample:
    sketch: np.ndarray  # (1, S, S)
    target: np.ndarray  # (3, S, S)
    caption: str
    spec: GarmentSpec


def caption_for(spec: GarmentSpec) -> str:
    base = f"{spec.caption_color} {spec.fabric} {spec.silhouette}"
    if spec.components:
        base += " with " + " and ".join(spec.components)
    return base


def parse_caption(caption: str) -> dict:
    """Recover the visible attributes (color, fabric, silhouette,
    components) from a grammar caption."""
    words = caption.split()
    if len(words) < 3 or words[0] not in COLORS or words[1] not in FABRICS \
            or words[2] not in SILHOUETTES:
        raise ValidationError(f"caption does not match the grammar: {caption!r}")
    comps: list[str] = []
    if len(words) > 3:
        if words[3] != "with":
            raise ValidationError(f"caption does not match the grammar: {caption!r}")
        rest = words[4:]
        for i, word in enumerate(rest):
            if i % 2 == 0:
                if word not in COMPONENTS:
                    raise ValidationError(f"unknown component in caption: {word!r}")
                comps.append(word)
            elif word != "and":
                raise ValidationError(f"caption does not match the grammar: {caption!r}")
    return {
        "color": words[0],
        "fabric": words[1],
        "silhouette": words[2],
        "components": tuple(comps),
    }


def grammar_words() -> list[str]:
    """Every word the caption grammar (plus fabric variants) can produce."""
    words = set(COLORS) | set(FABRICS) | set(FABRIC_ALIASES) | set(SILHOUETTES)
    words |= set(COMPONENTS) | {"with", "and", "a", "jacket", "top", "garment"}
    return sorted(words)


# -- geometry -------------------------------------------------------------


def _rect(mask, s, x0, y0, x1, y1, value=True):
    mask[int(round(y0 * s)) : int(round(y1 * s)), int(round(x0 * s)) : int(round(x1 * s))] = value


def _silhouette_mask(spec: GarmentSpec, s: int) -> np.ndarray:
    m = np.zeros((s, s), dtype=bool)
    kind = spec.silhouette
    if kind in ("tshirt", "hoodie"):
        _rect(m, s, 0.28, 0.22, 0.72, 0.85)
        sleeve_bottom = 0.55 if kind == "hoodie" else 0.42
        _rect(m, s, 0.10, 0.22, 0.28, sleeve_bottom)
        _rect(m, s, 0.72, 0.22, 0.90, sleeve_bottom)
    elif kind == "pants":
        _rect(m, s, 0.30, 0.12, 0.70, 0.32)
        _rect(m, s, 0.30, 0.32, 0.47, 0.90)
        _rect(m, s, 0.53, 0.32, 0.70, 0.90)
    elif kind == "skirt":
        yy, xx = np.mgrid[0:s, 0:s]
        y = yy / s
        half = 0.15 + (0.30 - 0.15) * np.clip((y - 0.20) / 0.65, 0.0, 1.0)
        band = (y >= 0.20) & (y < 0.85)
        m |= band & (np.abs(xx / s - 0.5) <= half)
    if kind == "hoodie" or "hood" in spec.components:
        yy, xx = np.mgrid[0:s, 0:s]
        r = np.hypot(xx / s - 0.5, yy / s - 0.26)
        m |= (r <= 0.16) & (yy / s <= 0.26)
    return m


def _component_strokes(spec: GarmentSpec, s: int, mask: np.ndarray) -> np.ndarray:
    strokes = np.zeros((s, s), dtype=bool)
    yy, xx = np.mgrid[0:s, 0:s]
    x, y = xx / s, yy / s
    if "pocket" in spec.components:
        box = (x >= 0.40) & (x <= 0.60) & (y >= 0.58) & (y <= 0.72)
        inner = (x >= 0.40 + 1.5 / s) & (x <= 0.60 - 1.5 / s) & \
                (y >= 0.58 + 1.5 / s) & (y <= 0.72 - 1.5 / s)
        strokes |= box & ~inner
    if "collar" in spec.components:
        strokes |= (y >= 0.22) & (y <= 0.34) & (np.abs(np.abs(x - 0.5) - (y - 0.22)) <= 0.75 / s)
    if "buttons" in spec.components:
        for by in (0.36, 0.48, 0.60, 0.72):
            strokes |= (np.abs(x - 0.5) <= 1.0 / s) & (np.abs(y - by) <= 1.0 / s)
    if "hood" in spec.components or spec.silhouette == "hoodie":
        r = np.hypot(x - 0.5, y - 0.26)
        strokes |= (np.abs(r - 0.11) <= 0.75 / s) & (y <= 0.28)
    return strokes & mask


def _outline(mask: np.ndarray) -> np.ndarray:
    interior = mask.copy()
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        shifted = np.zeros_like(mask)
        if shift == 1:
            if axis == 0:
                shifted[1:, :] = mask[:-1, :]
            else:
                shifted[:, 1:] = mask[:, :-1]
        else:
            if axis == 0:
                shifted[:-1, :] = mask[1:, :]
            else:
                shifted[:, :-1] = mask[:, 1:]
        interior &= shifted
    return mask & ~interior


def texture_factor(fabric: str, shape: tuple, rng: RngState) -> np.ndarray:
    """Multiplicative brightness pattern in [0.55, 1] for a fabric."""
    if fabric not in FABRICS:
        raise ValidationError(f"unknown fabric {fabric!r}")
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    family = FABRICS[fabric]
    if family == "stripes":
        pat = 0.35 * ((yy // 2) % 2)
    elif family == "twill":
        pat = 0.35 * (((xx + yy) // 2) % 2)
    elif family == "checker":
        pat = 0.30 * (((xx // 3) + (yy // 3)) % 2)
    elif family == "speckle":
        pat = 0.40 * (rng.uniform((h, w)) < 0.25)
    elif family == "smooth":
        pat = np.zeros((h, w))
    elif family == "rib":
        pat = 0.35 * ((xx // 2) % 2)
    elif family == "dots":
        pat = 0.45 * ((xx % 3 == 1) & (yy % 3 == 1))
    else:  # crosshatch
        pat = 0.30 * ((((xx + yy) % 4) == 0) | (((xx - yy) % 4) == 0))
    return 1.0 - pat


def render_fabric_swatch(fabric: str, size: int, rng: RngState) -> np.ndarray:
    """Full-frame texture on a neutral base, (3, size, size)."""
    base = 0.72
    factor = texture_factor(fabric, (size, size), rng)
    return np.repeat((base * factor)[None, :, :], 3, axis=0)


def render_sample(spec: GarmentSpec, size: int, rng: RngState) -> Sample:
    if size < 16:
        raise ValidationError(f"render size must be >= 16, got {size}")
    mask = _silhouette_mask(spec, size)
    strokes = _component_strokes(spec, size, mask)
    outline = _outline(mask)

    sketch = np.ones((size, size))
    sketch[mask] = hint_gray(spec.color)
    sketch[outline | strokes] = STROKE_GRAY

    rgb = np.array(COLORS[spec.caption_color])
    factor = texture_factor(spec.fabric, (size, size), rng)
    target = np.ones((3, size, size))
    fill = rgb[:, None, None] * factor[None, :, :]
    target[:, mask] = fill[:, mask]
    dark = rgb[:, None] * 0.25
    target[:, outline | strokes] = dark

    return Sample(sketch[None, :, :], target, caption_for(spec), spec)


def sample_spec(rng: RngState, conflict: bool = False) -> GarmentSpec:
    silhouette = SILHOUETTES[rng.integers(0, len(SILHOUETTES))]
    color = _COLOR_NAMES[rng.integers(0, len(_COLOR_NAMES))]
    fabric = _FABRIC_NAMES[rng.integers(0, len(_FABRIC_NAMES))]
    components = tuple(c for c in COMPONENTS if rng.uniform() < 0.5)
    conflict_color = None
    if conflict:
        others = [c for c in _COLOR_NAMES if c != color]
        conflict_color = others[rng.integers(0, len(others))]
    return GarmentSpec(silhouette, color, fabric, components, conflict_color)


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def gen_dataset(n: int, seed: int, conflict_fraction: float, size: int = 32,
                out_dir=None) -> list[dict]:
    """Generate ``n`` samples; returns manifest records (and writes
    PGM/PPM files plus manifest.jsonl when ``out_dir`` is given)."""
    if n < 1:
        raise ValidationError(f"dataset size must be >= 1, got {n}")
    if not 0.0 <= conflict_fraction <= 1.0:
        raise ValidationError(f"conflict fraction must be in [0,1], got {conflict_fraction}")
    root = RngState(seed)
    records = []
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        child = root.fork(i)
        conflict = child.uniform() < conflict_fraction
        spec = sample_spec(child, conflict=conflict)
        sample = render_sample(spec, size, child)
        rec = {
            "index": i,
            "caption": sample.caption,
            "silhouette": spec.silhouette,
            "color": spec.color,
            "fabric": spec.fabric,
            "components": list(spec.components),
            "conflict_color": spec.conflict_color,
            "seed": child.seed,
            "sketch": f"sample_{i:05d}_sketch.pgm",
            "target": f"sample_{i:05d}_target.ppm",
        }
        if out_path is not None:
            write_pgm(out_path / rec["sketch"], sample.sketch)
            write_ppm(out_path / rec["target"], sample.target)
            rec["sketch_sha256"] = _sha256_bytes((out_path / rec["sketch"]).read_bytes())
            rec["target_sha256"] = _sha256_bytes((out_path / rec["target"]).read_bytes())
        else:
            rec["_sample"] = sample
        records.append(rec)
    if out_path is not None:
        with open(out_path / "manifest.jsonl", "w", encoding="utf-8") as f:
            for rec in records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
    return records


def load_dataset(path) -> list[dict]:
    """Read manifest.jsonl and the referenced images into memory."""
    root = Path(path)
    manifest = root / "manifest.jsonl"
    if not manifest.exists():
        raise ValidationError(f"{manifest}: dataset manifest not found")
    records = []
    with open(manifest, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{manifest}:{lineno}: bad record") from exc
            rec["sketch_img"] = read_pgm(root / rec["sketch"])
            rec["target_img"] = read_ppm(root / rec["target"])
            records.append(rec)
    if not records:
        raise ValidationError(f"{manifest}: empty dataset")
    return records
