"""Synthetic blob fixtures: dark ellipses on a bright textured background.

Generates a complete ready-to-train project directory: grayscale PNGs,
auto-drawn scribbles (one inside each ellipse plus two background
strokes) for the training split, and tight ground-truth boxes for every
image. Used by the test suite and handy for demoing the interactive
builder without real data.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imops import save_png_gray
from .project import Project, load_project

ELLIPSE_AREA_RANGE = (150, 600)
BG_MARKER_BASE_ID = 100


def _rasterize_ellipse(size, cx, cy, a, b, theta):
    yy, xx = np.mgrid[0:size, 0:size]
    dx, dy = xx - cx, yy - cy
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _sample_ellipses(rng: np.random.Generator, size: int, count: int):
    """Non-overlapping ellipse masks with pixel areas inside the fixture range."""
    masks = []
    placed = []  # (cx, cy, max_axis)
    attempts = 0
    while len(masks) < count and attempts < 500:
        attempts += 1
        area = rng.uniform(200, 550)
        aspect = rng.uniform(1.0, 2.2)
        ab = area / np.pi
        a = float(np.sqrt(ab * aspect))
        b = ab / a
        margin = a + 8
        if 2 * margin >= size:
            continue
        cx = rng.uniform(margin, size - margin)
        cy = rng.uniform(margin, size - margin)
        if any(np.hypot(cx - px, cy - py) < a + pa + 10 for px, py, pa in placed):
            continue
        theta = rng.uniform(0, np.pi)
        mask = _rasterize_ellipse(size, cx, cy, a, b, theta)
        n = int(mask.sum())
        if not ELLIPSE_AREA_RANGE[0] <= n <= ELLIPSE_AREA_RANGE[1]:
            continue
        masks.append(mask)
        placed.append((cx, cy, a))
    return masks


def _render(rng: np.random.Generator, size: int, masks):
    texture = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma=6)
    texture /= max(np.abs(texture).max(), 1e-9)
    image = 0.85 + 0.05 * texture
    for mask in masks:
        level = rng.uniform(0.20, 0.35)
        speckle = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma=2)
        speckle /= max(np.abs(speckle).max(), 1e-9)
        image[mask] = level + 0.02 * speckle[mask]
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def _interior_scribble(rng: np.random.Generator, mask, max_pixels=60):
    """Pixels of the eroded blob core, as a plausible inside-the-object stroke."""
    core = ndimage.binary_erosion(mask, iterations=2)
    if not core.any():
        core = mask
    pts = np.argwhere(core)
    if len(pts) > max_pixels:
        keep = rng.choice(len(pts), size=max_pixels, replace=False)
        pts = pts[np.sort(keep)]
    return [(int(r), int(c)) for r, c in pts]


def _background_scribbles(rng: np.random.Generator, size, masks, count=2,
                          length=25):
    """Horizontal strokes kept clear of every (dilated) ellipse."""
    forbidden = np.zeros((size, size), dtype=bool)
    for mask in masks:
        forbidden |= ndimage.binary_dilation(mask, iterations=6)
    strokes = []
    attempts = 0
    while len(strokes) < count and attempts < 300:
        attempts += 1
        row = int(rng.integers(6, size - 6))
        col = int(rng.integers(4, size - length - 4))
        band = forbidden[row - 1:row + 2, col:col + length]
        if band.any():
            continue
        pixels = [(row + dr, col + i) for dr in (-1, 0, 1) for i in range(length)]
        strokes.append(pixels)
    return strokes


def generate_fixture(root, n_images: int = 20, n_train: int = 5,
                     size: int = 128, seed: int = 7) -> Project:
    """Write a synthetic project directory and return it loaded.

    The first n_train images (sorted by id) carry scribbles: markers
    1..n for the ellipses and 100, 101 for the background strokes. Every
    image gets ground-truth boxes.
    """
    rng = np.random.default_rng(seed)
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "markers").mkdir(exist_ok=True)
    (root / "gt").mkdir(exist_ok=True)

    with open(root / "project.json", "w", encoding="utf-8") as f:
        json.dump({"name": root.name, "heuristic": "parasite",
                   "postproc": {"box_expand_fraction": 0.10, "min_area_px": 100}},
                  f, indent=2, sort_keys=True)
        f.write("\n")

    for idx in range(n_images):
        image_id = f"img{idx:02d}"
        count = int(rng.integers(2, 5))
        masks = _sample_ellipses(rng, size, count)
        image = _render(rng, size, masks)
        save_png_gray(image, root / "images" / f"{image_id}.png")

        boxes = []
        for mask in masks:
            rows, cols = np.nonzero(mask)
            boxes.append({"x1": int(cols.min()), "y1": int(rows.min()),
                          "x2": int(cols.max()) + 1, "y2": int(rows.max()) + 1})
        with open(root / "gt" / f"{image_id}.json", "w", encoding="utf-8") as f:
            json.dump({"image_id": image_id, "boxes": boxes}, f, indent=2,
                      sort_keys=True)
            f.write("\n")

        if idx < n_train:
            markers = []
            for mi, mask in enumerate(masks, start=1):
                markers.append({"marker_id": mi,
                                "pixels": [[r, c] for r, c in
                                           _interior_scribble(rng, mask)]})
            for bi, stroke in enumerate(_background_scribbles(rng, size, masks)):
                markers.append({"marker_id": BG_MARKER_BASE_ID + bi,
                                "pixels": [[r, c] for r, c in stroke]})
            with open(root / "markers" / f"{image_id}.json", "w",
                      encoding="utf-8") as f:
                json.dump({"image_id": image_id, "markers": markers}, f,
                          indent=2, sort_keys=True)
                f.write("\n")

    return load_project(root)


def train_eval_split(project: Project, n_train: int = 5):
    """First n_train sorted image ids (the scribbled ones) vs the rest."""
    ids = project.image_ids()
    return ids[:n_train], ids[n_train:]
