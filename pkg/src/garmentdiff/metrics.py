"""Proxy quality metrics: Otsu-mask silhouette IoU, masked RGB error,
and a chi-square distance between gradient-orientation histograms.
These stand in for pretrained-network metrics, which this artifact
deliberately does not ship; reports must label them as proxies."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

N_ORIENT_BINS = 16


def to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim == 3:
        return img.mean(axis=0)
    return img


def otsu_threshold(gray: np.ndarray) -> float:
    """Classic between-class variance maximization over 256 bins."""
    hist, edges = np.histogram(gray, bins=256, range=(0.0, 1.0))
    total = hist.sum()
    if total == 0:
        return 0.5
    centers = (edges[:-1] + edges[1:]) * 0.5
    weight = hist / total
    cum_w = np.cumsum(weight)
    cum_mu = np.cumsum(weight * centers)
    mu_total = cum_mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * cum_w - cum_mu) ** 2 / (cum_w * (1.0 - cum_w))
    between[~np.isfinite(between)] = -1.0
    return float(centers[int(np.argmax(between))])


def foreground_mask(img: np.ndarray) -> np.ndarray:
    """Otsu split; foreground is the darker class."""
    gray = to_gray(img)
    thr = otsu_threshold(gray)
    below = gray <= thr
    if not below.any() or below.all():
        return below if below.any() else np.zeros_like(gray, dtype=bool)
    if gray[below].mean() <= gray[~below].mean():
        return below
    return ~below


def silhouette_iou(generated: np.ndarray, sketch: np.ndarray) -> float:
    """IoU of the Otsu foreground masks of a generated image and its sketch."""
    gen_gray = to_gray(generated)
    sk_gray = to_gray(sketch)
    if gen_gray.shape != sk_gray.shape:
        raise ValidationError(
            f"size mismatch: generated {gen_gray.shape} vs sketch {sk_gray.shape}"
        )
    a = foreground_mask(generated)
    b = foreground_mask(sketch)
    union = (a | b).sum()
    if union == 0:
        return 1.0
    return float((a & b).sum() / union)


def color_err(generated: np.ndarray, target, mask: np.ndarray) -> float:
    """Mean RGB L2 distance over masked pixels. ``target`` is either an
    RGB triple or a full (3,H,W) reference image."""
    generated = np.asarray(generated, dtype=np.float64)
    if generated.ndim != 3 or generated.shape[0] != 3:
        raise ValidationError(f"generated image must be (3,H,W), got {generated.shape}")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValidationError("color_err mask is empty")
    target = np.asarray(target, dtype=np.float64)
    pix = generated[:, mask]
    if target.shape == (3,):
        ref = target[:, None]
    elif target.shape == generated.shape:
        ref = target[:, mask]
    else:
        raise ValidationError(f"target must be an RGB triple or (3,H,W), got {target.shape}")
    return float(np.mean(np.sqrt(((pix - ref) ** 2).sum(axis=0))))


def orientation_histogram(img: np.ndarray) -> np.ndarray:
    """Magnitude-weighted histogram of unsigned gradient orientations
    (mod pi) in ``N_ORIENT_BINS`` bins, normalized to sum 1; the zero
    vector for a flat region."""
    gray = to_gray(np.asarray(img, dtype=np.float64))
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    if mag.sum() < 1e-12:
        return np.zeros(N_ORIENT_BINS)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    bins = np.minimum((theta / np.pi * N_ORIENT_BINS).astype(int), N_ORIENT_BINS - 1)
    hist = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=N_ORIENT_BINS)
    return hist / hist.sum()


def texture_chi2(region_a: np.ndarray, region_b: np.ndarray) -> float:
    """Chi-square distance between the orientation histograms of two
    regions (each at least 8x8). Two flat regions compare as 0."""
    for name, region in (("first", region_a), ("second", region_b)):
        gray = to_gray(region)
        if gray.shape[0] < 8 or gray.shape[1] < 8:
            raise ValidationError(f"{name} region must be at least 8x8, got {gray.shape}")
    ha = orientation_histogram(region_a)
    hb = orientation_histogram(region_b)
    if ha.sum() == 0 and hb.sum() == 0:
        return 0.0
    denom = ha + hb
    valid = denom > 0
    return float(0.5 * np.sum((ha[valid] - hb[valid]) ** 2 / denom[valid]))


def crop_to_mask(img: np.ndarray, mask: np.ndarray, min_side: int = 8) -> np.ndarray:
    """Bounding-box crop of a channels-first image to a boolean mask,
    padded out to at least ``min_side`` per side when possible."""
    if not mask.any():
        raise ValidationError("cannot crop to an empty mask")
    ys, xs = np.where(mask)
    y0, y1 = ys.min(), ys.max() + 1
    x0, x1 = xs.min(), xs.max() + 1
    h, w = mask.shape
    while y1 - y0 < min_side and (y0 > 0 or y1 < h):
        y0, y1 = max(0, y0 - 1), min(h, y1 + 1)
    while x1 - x0 < min_side and (x0 > 0 or x1 < w):
        x0, x1 = max(0, x0 - 1), min(w, x1 + 1)
    return img[..., y0:y1, x0:x1]


def spearman_rho(xs, ys) -> float:
    """Spearman rank correlation with average ranks for ties."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 2:
        raise ValidationError("spearman_rho needs two equal-length 1-D sequences")

    def ranks(v):
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
                j += 1
            r[order[i : j + 1]] = (i + j) / 2.0 + 1.0
            i = j + 1
        return r

    rx, ry = ranks(xs), ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx**2).sum() * (ry**2).sum())
    if denom == 0:
        return 0.0
    return float((rx * ry).sum() / denom)
