"""Layer-by-layer encoder construction and execution.

Each layer runs marker-based z-score normalization, convolution with a
unit-norm kernel bank, ReLU, and pooling. Kernels are estimated without
backpropagation: patches centered on scribble pixels are clustered per
marker (k-means, k_m centers each), and the pooled centers are reduced
by a second k-means to the layer's kernel budget k_l.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import imops
from .model import (
    FlimModel,
    KernelBank,
    Layer,
    LayerSpec,
    MarkerSet,
    NormStats,
    PostprocConfig,
    DEFAULT_EPS,
)


@dataclass
class PatchDataset:
    """Flattened marker-centered patches with their originating markers."""

    patches: np.ndarray  # (n, k*k*c) float32
    marker_refs: list[tuple[str, int]]  # (image_id, marker_id) per patch
    layer_index: int = 0

    def __len__(self) -> int:
        return self.patches.shape[0]


def compute_norm_stats(layer_inputs: dict[str, np.ndarray],
                       markers: dict[str, MarkerSet],
                       eps: float = DEFAULT_EPS) -> NormStats:
    """Per-channel mean and population std over the union of marker pixels."""
    values = []
    for image_id in sorted(layer_inputs):
        mset = markers.get(image_id)
        if mset is None or not mset.markers:
            continue
        image = layer_inputs[image_id]
        for marker in mset.markers:
            rows = np.array([p[0] for p in marker.pixels])
            cols = np.array([p[1] for p in marker.pixels])
            values.append(image[rows, cols, :].astype(np.float64))
    if not values:
        raise ValueError("no marker pixels to normalize from")
    stacked = np.concatenate(values, axis=0)
    mean = stacked.mean(axis=0)
    std = np.sqrt(((stacked - mean) ** 2).mean(axis=0))
    return NormStats(mean=mean, std=std, eps=eps)


def apply_norm(image: np.ndarray, stats: NormStats) -> np.ndarray:
    """Per-channel z-score with marker statistics: (x - mu) / (sigma + eps)."""
    if image.shape[2] != stats.channels:
        raise ValueError(
            f"image has {image.shape[2]} channels, stats expect {stats.channels}")
    out = (image.astype(np.float64) - stats.mean) / (stats.std + stats.eps)
    return out.astype(np.float32)


def build_patch_dataset(layer_inputs: dict[str, np.ndarray],
                        markers: dict[str, MarkerSet],
                        spec: LayerSpec,
                        layer_index: int = 0) -> PatchDataset:
    """One flattened patch per marker pixel, from already-normalized inputs."""
    patches = []
    refs = []
    for image_id in sorted(layer_inputs):
        mset = markers.get(image_id)
        if mset is None:
            continue
        image = layer_inputs[image_id]
        for marker in sorted(mset.markers, key=lambda m: m.marker_id):
            for row, col in marker.pixels:
                patches.append(imops.extract_patch(
                    image, row, col, spec.kernel_size, spec.dilation))
                refs.append((image_id, marker.marker_id))
    if not patches:
        raise ValueError("no marker pixels to extract patches from")
    return PatchDataset(patches=np.stack(patches).astype(np.float32),
                        marker_refs=refs, layer_index=layer_index)


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = 100, tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding.

    Empty clusters are reseeded from the point farthest from its center.
    Returns (centers, labels). The within-cluster sum of squares never
    increases between iterations (asserted).
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    k = min(k, n)
    if k < 1:
        raise ValueError("kmeans needs at least one point")
    centers = _kmeans_pp_init(pts, k, rng)
    prev_obj = np.inf
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = _sq_dists(pts, centers)
        labels = d2.argmin(axis=1)
        obj = float(d2[np.arange(n), labels].sum())
        assert obj <= prev_obj * (1 + 1e-9) + 1e-12, "k-means objective increased"
        if prev_obj - obj <= tol * max(prev_obj, 1e-30) and np.isfinite(prev_obj):
            break
        prev_obj = obj
        assigned = d2[np.arange(n), labels].copy()
        for ci in range(k):
            mask = labels == ci
            if mask.any():
                centers[ci] = pts[mask].mean(axis=0)
            else:
                farthest = int(assigned.argmax())
                centers[ci] = pts[farthest]
                assigned[farthest] = 0.0
    return centers, labels


def _sq_dists(pts: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = pts[:, np.newaxis, :] - centers[np.newaxis, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp_init(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = pts.shape[0]
    centers = np.empty((k, pts.shape[1]), dtype=np.float64)
    centers[0] = pts[rng.integers(n)]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[i] = pts[idx]
        d2 = np.minimum(d2, ((pts - centers[i]) ** 2).sum(axis=1))
    return centers


def estimate_kernels(dataset: PatchDataset, spec: LayerSpec,
                     seed=0) -> KernelBank:
    """Two-stage clustering of marker patches into a unit-norm kernel bank.

    Stage 1 clusters each marker's patches into min(k_m, n) centers so no
    marker dominates; stage 2 reduces the pooled centers to at most k_l.
    Exact duplicate kernels are merged, so the bank can come out smaller
    than k_l for degenerate inputs.
    """
    if len(dataset) == 0:
        raise ValueError("empty patch dataset")
    rng = np.random.default_rng(seed)
    groups: dict[tuple[str, int], list[int]] = {}
    for idx, ref in enumerate(dataset.marker_refs):
        groups.setdefault(ref, []).append(idx)

    stage1 = []
    stage1_refs = []
    for ref in sorted(groups):
        pts = dataset.patches[groups[ref]].astype(np.float64)
        centers, _ = kmeans(pts, spec.kernels_per_marker, rng)
        for ci, center in enumerate(centers):
            stage1.append(center)
            stage1_refs.append(f"{ref[0]}/marker{ref[1]}/c{ci}")
    stage1 = np.stack(stage1)

    centers, labels = kmeans(stage1, spec.kernels_total, rng)

    kernels = []
    provenance = []
    seen = set()
    k, c = spec.kernel_size, dataset.patches.shape[1] // (spec.kernel_size ** 2)
    for ci, center in enumerate(centers):
        norm = float(np.linalg.norm(center))
        if norm < 1e-12:
            continue
        unit = (center / norm).astype(np.float32)
        key = unit.tobytes()
        if key in seen:
            continue
        seen.add(key)
        members = [i for i, lab in enumerate(labels) if lab == ci]
        origin = stage1_refs[members[0]] if members else ""
        kernels.append(unit.reshape(k, k, c))
        provenance.append(origin)
    if not kernels:
        raise ValueError("all estimated kernels have zero norm")
    return KernelBank(kernels=np.stack(kernels), provenance=provenance)


def run_layer(image: np.ndarray, layer: Layer) -> np.ndarray:
    """Normalize, convolve with the selected kernels, ReLU, pool."""
    x = apply_norm(image, layer.norm_stats)
    y = imops.convolve(x, layer.selected_kernels(), layer.spec.dilation)
    a = imops.relu(y)
    return imops.pool(a, layer.spec.pooling.kind, layer.spec.pooling.window)


def run_encoder(image: np.ndarray, model: FlimModel,
                up_to_layer: int | None = None) -> np.ndarray:
    """Run layers 1..up_to_layer (1-based; defaults to the whole encoder)."""
    if up_to_layer is None:
        up_to_layer = len(model.layers)
    if not 1 <= up_to_layer <= len(model.layers):
        raise ValueError(
            f"up_to_layer must be in 1..{len(model.layers)}, got {up_to_layer}")
    out = image
    for layer in model.layers[:up_to_layer]:
        out = run_layer(out, layer)
    return out


def layer_seed(seed: int, layer_index: int):
    """Derived per-layer RNG seed for deterministic multi-layer builds."""
    return [int(seed), int(layer_index)]


def estimate_layer(layer_inputs: dict[str, np.ndarray],
                   markers: dict[str, MarkerSet],
                   spec: LayerSpec,
                   seed=0,
                   layer_index: int = 0,
                   eps: float = DEFAULT_EPS) -> tuple[NormStats, KernelBank]:
    """Estimate one layer's normalization stats and candidate kernels."""
    stats = compute_norm_stats(layer_inputs, markers, eps)
    normed = {i: apply_norm(img, stats) for i, img in layer_inputs.items()}
    dataset = build_patch_dataset(normed, markers, spec, layer_index)
    bank = estimate_kernels(dataset, spec, seed)
    return stats, bank


def build_model(images: dict[str, np.ndarray],
                markers: dict[str, MarkerSet],
                arch: list[LayerSpec],
                heuristic: str = "parasite",
                postproc: PostprocConfig | None = None,
                seed: int = 0,
                selections: list[list[int] | None] | None = None) -> FlimModel:
    """Build a full model non-interactively from scribbled training images.

    selections gives, per layer, the kernel indices to keep; None (or a
    missing entry) keeps every estimated kernel.
    """
    if postproc is None:
        postproc = PostprocConfig()
    model = FlimModel(layers=[], heuristic=heuristic, postproc=postproc)
    inputs = dict(images)
    for li, spec in enumerate(arch):
        stats, bank = estimate_layer(inputs, markers, spec,
                                     seed=layer_seed(seed, li), layer_index=li)
        wanted = None
        if selections is not None and li < len(selections):
            wanted = selections[li]
        selected = list(range(len(bank))) if wanted is None else [int(i) for i in wanted]
        layer = Layer(spec=spec, norm_stats=stats, bank=bank, selected=selected)
        model.layers.append(layer)
        if li + 1 < len(arch):
            inputs = {i: run_layer(img, layer) for i, img in inputs.items()}
    return model
