"""Saliency map to scored bounding boxes.

Pipeline: Otsu binarization over 256 bins, 8-connected components,
component-area filtering, centered box expansion, mean-saliency scoring.
Boxes are half-open pixel rectangles [x1, x2) x [y1, y2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


@dataclass
class BoundingBox:
    x1: int
    y1: int
    x2: int
    y2: int
    score: float = 0.0

    def __post_init__(self):
        if self.x2 <= self.x1 or self.y2 <= self.y1:
            raise ValueError(f"degenerate box ({self.x1},{self.y1},{self.x2},{self.y2})")

    @property
    def area(self) -> int:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def to_json(self) -> dict:
        return {"x1": self.x1, "y1": self.y1, "x2": self.x2, "y2": self.y2,
                "score": self.score}

    @classmethod
    def from_json(cls, obj: dict) -> "BoundingBox":
        return cls(x1=int(obj["x1"]), y1=int(obj["y1"]),
                   x2=int(obj["x2"]), y2=int(obj["y2"]),
                   score=float(obj.get("score", 0.0)))


@dataclass
class DetectionSet:
    image_id: str
    boxes: list[BoundingBox] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"image_id": self.image_id,
                "boxes": [b.to_json() for b in self.boxes]}

    @classmethod
    def from_json(cls, obj: dict) -> "DetectionSet":
        boxes = [BoundingBox.from_json(b) for b in obj.get("boxes", [])]
        return cls(image_id=obj["image_id"], boxes=boxes)


def quantize_256(saliency: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] values to integer levels 0..255."""
    v = np.clip(np.asarray(saliency, dtype=np.float64), 0.0, 1.0)
    return np.rint(v * 255.0).astype(np.int64)


def otsu_threshold(saliency: np.ndarray) -> float:
    """Threshold in [0, 1] maximizing inter-class variance over 256 bins.

    Foreground is saliency > threshold. Ties pick the lowest bin. A map
    occupying a single bin (constant maps included) returns its maximum
    value, so the foreground is empty.
    """
    q = quantize_256(saliency).ravel()
    hist = np.bincount(q, minlength=256).astype(np.int64)
    if np.count_nonzero(hist) <= 1:
        return float(np.asarray(saliency).max())
    levels = np.arange(256, dtype=np.int64)
    w0 = np.cumsum(hist)
    s0 = np.cumsum(hist * levels)
    n, s = w0[-1], s0[-1]
    w1 = n - w0
    variance = np.zeros(256, dtype=np.float64)
    valid = (w0 > 0) & (w1 > 0)
    mu0 = s0[valid] / w0[valid]
    mu1 = (s - s0[valid]) / w1[valid]
    variance[valid] = w0[valid] * w1[valid] * (mu0 - mu1) ** 2
    best = int(np.argmax(variance))
    return (best + 0.5) / 255.0


def binarize(saliency: np.ndarray, threshold: float) -> np.ndarray:
    """Foreground mask: saliency strictly above the threshold."""
    arr = np.asarray(saliency)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    return arr > threshold


_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected foreground components as (n_i, 2) arrays of (row, col).

    Components come out in raster-scan order of their first pixel.
    """
    labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    comps = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        pts = np.argwhere(labels[sl] == i)
        pts[:, 0] += sl[0].start
        pts[:, 1] += sl[1].start
        comps.append(pts)
    return comps


def _expand_interval(lo: int, hi: int, fraction: float, limit: int) -> tuple[int, int]:
    # Centered growth; an odd extra pixel goes to the high side.
    size = hi - lo
    extra = int(round(size * (1.0 + fraction))) - size
    lo -= extra // 2
    hi += extra - extra // 2
    return max(0, lo), min(limit, hi)


def boxes_from_components(components: list[np.ndarray], saliency: np.ndarray,
                          expand_fraction: float = 0.10,
                          min_area_px: int = 100) -> list[BoundingBox]:
    """Tight boxes around components, filtered by component pixel count,
    grown by expand_fraction about their center, clamped to the image.

    Score is the mean saliency inside the final box. Output is sorted by
    descending score, ties broken by (y1, x1).
    """
    if expand_fraction < 0:
        raise ValueError(f"expand_fraction must be >= 0, got {expand_fraction}")
    sal = np.asarray(saliency)
    if sal.ndim == 3:
        sal = sal[:, :, 0]
    h, w = sal.shape
    boxes = []
    for pts in components:
        if len(pts) < min_area_px:
            continue
        y1, x1 = pts.min(axis=0)
        y2, x2 = pts.max(axis=0) + 1
        x1, x2 = _expand_interval(int(x1), int(x2), expand_fraction, w)
        y1, y2 = _expand_interval(int(y1), int(y2), expand_fraction, h)
        score = float(sal[y1:y2, x1:x2].mean())
        boxes.append(BoundingBox(x1=x1, y1=y1, x2=x2, y2=y2, score=score))
    boxes.sort(key=lambda b: (-b.score, b.y1, b.x1))
    return boxes


def detect_objects(saliency: np.ndarray, image_id: str,
                   expand_fraction: float = 0.10,
                   min_area_px: int = 100) -> DetectionSet:
    """Full saliency-to-boxes pipeline for one image."""
    t = otsu_threshold(saliency)
    mask = binarize(saliency, t)
    comps = connected_components(mask)
    boxes = boxes_from_components(comps, saliency, expand_fraction, min_area_px)
    return DetectionSet(image_id=image_id, boxes=boxes)
