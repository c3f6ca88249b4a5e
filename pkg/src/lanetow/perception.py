"""Lane extraction from ground camera images.

Images are numpy arrays of shape ``(height, width, 3)`` and dtype ``uint8``;
masks are boolean ``(height, width)`` arrays. Pixel coordinates are ``(u, v)``
= (column, row) with the pixel centre at integer coordinates.

Pipeline: :func:`warp_to_bev` -> :func:`quantize_colors` -> :func:`rgb_to_hsv`
-> :func:`binarize_hue` -> :func:`extract_contours` / :func:`lane_region`.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np
from scipy import ndimage

#: Fill colour for BEV pixels that fall outside the camera image.
SENTINEL = (0, 0, 0)

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class SingularHomographyError(ValueError):
    pass


# --------------------------------------------------------------------------
# homographies


def normalize_homography(h) -> np.ndarray:
    h = np.array(h, dtype=float)
    if h.shape != (3, 3):
        raise ValueError("homography must be 3x3")
    if abs(np.linalg.det(h)) <= 1e-12 or h[2, 2] == 0.0:
        raise SingularHomographyError("homography is singular")
    h = h / h[2, 2]
    if abs(np.linalg.det(h)) <= 1e-12:
        raise SingularHomographyError("homography is singular")
    return h


def homography_from_points(src, dst) -> np.ndarray:
    """Homography mapping four ``src`` points onto four ``dst`` points."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != (4, 2) or dst.shape != (4, 2):
        raise ValueError("need exactly four point correspondences")
    a = np.zeros((8, 8))
    rhs = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        rhs[2 * i], rhs[2 * i + 1] = u, v
    try:
        sol = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularHomographyError("degenerate point configuration") from exc
    return normalize_homography(np.append(sol, 1.0).reshape(3, 3))


def apply_homography(h, points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    q = p @ np.asarray(h)[:, :2].T + np.asarray(h)[:, 2]
    return q[..., :2] / q[..., 2:3]


@functools.lru_cache(maxsize=16)
def _sample_map(h_bytes: bytes, in_w: int, in_h: int, out_w: int, out_h: int):
    hinv = np.linalg.inv(np.frombuffer(h_bytes).reshape(3, 3))
    u, v = np.meshgrid(np.arange(out_w, dtype=float), np.arange(out_h, dtype=float))
    den = hinv[2, 0] * u + hinv[2, 1] * v + hinv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (hinv[0, 0] * u + hinv[0, 1] * v + hinv[0, 2]) / den
        y = (hinv[1, 0] * u + hinv[1, 1] * v + hinv[1, 2]) / den
    eps = 1e-9
    valid = (np.abs(den) > 1e-12) & np.isfinite(x) & np.isfinite(y)
    valid &= (x >= -eps) & (x <= in_w - 1 + eps) & (y >= -eps) & (y <= in_h - 1 + eps)
    x = np.where(valid, np.clip(x, 0.0, in_w - 1), 0.0)
    y = np.where(valid, np.clip(y, 0.0, in_h - 1), 0.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    idx = tuple(a * in_w + b for a, b in ((y0, x0), (y0, x1), (y1, x0), (y1, x1)))
    for arr in (valid, fx, fy) + idx:
        arr.setflags(write=False)
    return valid, fx, fy, idx


def warp_to_bev(img: np.ndarray, h, out_w: int, out_h: int) -> np.ndarray:
    """Resample ``img`` through the homography ``h`` (input px -> output px).

    Each output pixel is bilinearly sampled at ``h^-1 (u, v, 1)``; samples
    that land outside the input are set to :data:`SENTINEL`.
    """
    h = normalize_homography(h)
    in_h, in_w = img.shape[:2]
    valid, fx, fy, (i00, i01, i10, i11) = _sample_map(
        np.ascontiguousarray(h, dtype=float).tobytes(), in_w, in_h, out_w, out_h)
    src = img.reshape(in_h * in_w, -1).astype(float)
    top = src[i00] * (1.0 - fx) + src[i01] * fx
    bottom = src[i10] * (1.0 - fx) + src[i11] * fx
    out = np.rint(top * (1.0 - fy) + bottom * fy)
    out = np.clip(out, 0, 255).astype(np.uint8)
    out[~valid] = SENTINEL
    return out


def valid_region(img: np.ndarray) -> np.ndarray:
    """Pixels that are not the sentinel colour."""
    return np.any(img != np.asarray(SENTINEL, dtype=np.uint8), axis=2)


# --------------------------------------------------------------------------
# colour quantisation


class QuantizeResult(NamedTuple):
    image: np.ndarray
    palette: np.ndarray  # (k, 3) float centroids in 8-bit units
    degenerate: bool  # fewer distinct colours than clusters; image unchanged
    iterations: int


def _assign(colors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # explicit per-cluster distances keep the result independent of BLAS
    dist = np.empty((centroids.shape[0], colors.shape[0]))
    for j, c in enumerate(centroids):
        diff = colors - c
        dist[j] = diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
    return np.argmin(dist, axis=0)


def _update(colors, weights, labels, centroids) -> np.ndarray:
    k = centroids.shape[0]
    mass = np.bincount(labels, weights=weights, minlength=k)
    new = centroids.copy()
    nonempty = mass > 0
    for ch in range(3):
        sums = np.bincount(labels, weights=weights * colors[:, ch], minlength=k)
        new[nonempty, ch] = sums[nonempty] / mass[nonempty]
    return new


def _seed_centroids(colors, weights, k, rng) -> np.ndarray:
    """k-means++ seeding over the weighted colour set."""
    p = weights / weights.sum()
    centroids = [colors[rng.choice(len(colors), p=p)]]
    d2 = ((colors - centroids[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        score = weights * d2
        total = score.sum()
        if total <= 0.0:
            idx = int(np.argmax(d2))
        else:
            idx = rng.choice(len(colors), p=score / total)
        centroids.append(colors[idx])
        d2 = np.minimum(d2, ((colors - colors[idx]) ** 2).sum(axis=1))
    return np.array(centroids, dtype=float)


def lloyd(colors, weights, centroids, tol=0.5, max_iter=50):
    """Weighted Lloyd iteration; returns ``(centroids, labels, iterations)``."""
    it = 0
    for it in range(1, max_iter + 1):
        labels = _assign(colors, centroids)
        new = _update(colors, weights, labels, centroids)
        shift = np.abs(new - centroids).max()
        centroids = new
        if shift < tol:
            break
    return centroids, _assign(colors, centroids), it


def quantize_colors(img: np.ndarray, k: int, seed: int = 0, *, tol: float = 0.5,
                    max_iter: int = 50) -> QuantizeResult:
    """Replace every pixel by the nearest of ``k`` K-means colour centroids.

    Clustering runs on the distinct colours weighted by their pixel counts,
    which gives the same Lloyd fixed points as clustering every pixel.
    Sentinel pixels are left untouched and take no part in the clustering.
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    valid = valid_region(img)
    px = img[valid].astype(np.uint32)
    packed = (px[:, 0] << 16) | (px[:, 1] << 8) | px[:, 2]
    uniq, inverse, counts = np.unique(packed, return_inverse=True, return_counts=True)
    if uniq.size < k:
        return QuantizeResult(img.copy(), np.empty((0, 3)), True, 0)
    colors = np.stack([(uniq >> 16) & 255, (uniq >> 8) & 255, uniq & 255], axis=1).astype(float)
    weights = counts.astype(float)
    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(colors, weights, k, rng)
    centroids, labels, iterations = lloyd(colors, weights, centroids, tol, max_iter)
    palette = np.clip(np.rint(centroids), 0, 255).astype(np.uint8)
    out = img.copy()
    out[valid] = palette[labels][inverse.ravel()]
    return QuantizeResult(out, centroids, False, iterations)


# --------------------------------------------------------------------------
# HSV and thresholding


@dataclass(frozen=True)
class ColorModel:
    k: int = 3
    hue_min: float = 340.0
    hue_max: float = 20.0
    sat_min: float = 0.25
    val_min: float = 0.20

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("ColorModel.k must be >= 2")
        for name in ("hue_min", "hue_max"):
            if not 0.0 <= getattr(self, name) < 360.0:
                raise ValueError(f"{name} must lie in [0, 360)")
        for name in ("sat_min", "val_min"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    """Hexcone HSV: hue in degrees [0, 360), saturation and value in [0, 1]."""
    rgb = img.astype(float) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    h = np.where(mx == r, np.mod((g - b) / safe, 6.0),
                 np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    h = np.where(delta > 0, 60.0 * h, 0.0)
    h = np.where(h >= 360.0, h - 360.0, h)
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h, s, mx], axis=2)


def hue_in_range(h, hue_min: float, hue_max: float):
    if hue_min <= hue_max:
        return (h >= hue_min) & (h <= hue_max)
    return (h >= hue_min) | (h <= hue_max)


def binarize_hue(hsv: np.ndarray, m: ColorModel) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    return hue_in_range(h, m.hue_min, m.hue_max) & (s >= m.sat_min) & (v >= m.val_min)


# --------------------------------------------------------------------------
# contours

# clockwise on screen (v grows downwards): E, SE, S, SW, W, NW, N, NE
_STEPS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
_STEP_INDEX = {d: i for i, d in enumerate(_STEPS)}


class Contour(NamedTuple):
    points: np.ndarray  # (n, 2) integer (u, v), closed loop
    area: int  # pixel count of the traced component


def _trace(fg: np.ndarray, start) -> List:
    """Moore-neighbour trace of the outer border of the component at ``start``.

    ``fg`` is padded so that neighbours never fall outside the array, and
    ``start`` is the first component pixel in raster order. Tracing stops when
    the start pixel is left towards the same neighbour a second time.
    """
    back = 4  # west neighbour of the raster-first pixel is background
    cur = start
    points = [start]
    first_move = None
    while True:
        for i in range(1, 9):
            d = (back + i) % 8
            nxt = (cur[0] + _STEPS[d][0], cur[1] + _STEPS[d][1])
            if fg[nxt[1], nxt[0]]:
                break
        else:
            return points  # isolated pixel
        if cur == start:
            if first_move is None:
                first_move = nxt
            elif nxt == first_move:
                points.pop()  # closing visit of the start pixel
                return points
        pu, pv = _STEPS[(d - 1) % 8]
        back = _STEP_INDEX[(cur[0] + pu - nxt[0], cur[1] + pv - nxt[1])]
        cur = nxt
        points.append(cur)


def extract_contours(mask: np.ndarray, min_area: int = 64) -> List[Contour]:
    """Outer border of every 8-connected component with at least ``min_area`` px."""
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    padded = np.pad(labels, 1)
    contours = []
    # raster-first pixel of each component (row-major order)
    flat = labels.ravel()
    order = np.flatnonzero(flat)
    lab_at = flat[order]
    first_idx = {}
    uniq, pos = np.unique(lab_at, return_index=True)
    for lab, p in zip(uniq, pos):
        first_idx[int(lab)] = int(order[p])
    w = mask.shape[1]
    for lab in range(1, n + 1):
        if areas[lab] < min_area:
            continue
        idx = first_idx[lab]
        start = (idx % w + 1, idx // w + 1)
        pts = _trace(padded == lab, start)
        contours.append(Contour(np.array(pts, dtype=np.intp) - 1, int(areas[lab])))
    return contours


def lane_region(mask: np.ndarray, min_area: int = 64,
                contours: Optional[List[Contour]] = None) -> np.ndarray:
    """Pixels enclosed by the outer contours of the retained components.

    Components smaller than ``min_area`` are dropped (or, when ``contours``
    from :func:`extract_contours` are given, only their components are kept)
    and holes inside the retained ones, e.g. glare spots, are filled.
    """
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return np.zeros_like(mask, dtype=bool)
    if contours is None:
        keep = np.bincount(labels.ravel(), minlength=n + 1) >= min_area
    else:
        keep = np.zeros(n + 1, dtype=bool)
        for c in contours:
            u, v = c.points[0]
            keep[labels[v, u]] = True
    keep[0] = False
    kept = keep[labels]
    return ndimage.binary_fill_holes(kept)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union
