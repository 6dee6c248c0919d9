"""Domain types shared across the pipeline: markers, layer specs, models.

A model is an ordered list of layers, each carrying its architecture
spec, the normalization statistics frozen at build time, the estimated
kernel bank, and the indices of the kernels kept by selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detect import BoundingBox

HEURISTICS = ("parasite", "ship")
DEFAULT_EPS = 1e-4


class ProjectError(ValueError):
    """Base class for project/model validation failures."""


class ProjectFormatError(ProjectError):
    """Malformed JSON or a file violating the on-disk schema."""


class MarkerBoundsError(ProjectError):
    """Marker pixels outside the image they annotate."""


class MissingImageError(ProjectError):
    """Marker or ground-truth file referencing an image that does not exist."""


class ModelFormatError(ProjectError):
    """Weights file with a bad magic, length, or layout."""


class ModelVersionError(ModelFormatError):
    """Weights file written by an unsupported format version."""


class ModelChecksumError(ModelFormatError):
    """Weights file failing its integrity check."""


@dataclass
class Marker:
    marker_id: int
    pixels: list[tuple[int, int]]


@dataclass
class MarkerSet:
    image_id: str
    markers: list[Marker] = field(default_factory=list)

    def validate(self, height: int, width: int) -> None:
        seen_ids = set()
        for marker in self.markers:
            if marker.marker_id in seen_ids:
                raise ProjectFormatError(
                    f"image {self.image_id!r}: duplicate marker id {marker.marker_id}")
            seen_ids.add(marker.marker_id)
            if not marker.pixels:
                raise ProjectFormatError(
                    f"image {self.image_id!r}: marker {marker.marker_id} is empty")
            if len(set(marker.pixels)) != len(marker.pixels):
                raise ProjectFormatError(
                    f"image {self.image_id!r}: marker {marker.marker_id} "
                    f"has repeated pixels")
            for row, col in marker.pixels:
                if not (0 <= row < height and 0 <= col < width):
                    raise MarkerBoundsError(
                        f"image {self.image_id!r}: marker {marker.marker_id} "
                        f"pixel ({row}, {col}) outside {height}x{width} image")

    def pixel_count(self) -> int:
        return sum(len(m.pixels) for m in self.markers)

    def to_json(self) -> dict:
        markers = sorted(self.markers, key=lambda m: m.marker_id)
        return {
            "image_id": self.image_id,
            "markers": [
                {"marker_id": m.marker_id,
                 "pixels": [[r, c] for r, c in sorted(m.pixels)]}
                for m in markers
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MarkerSet":
        try:
            markers = [
                Marker(marker_id=int(m["marker_id"]),
                       pixels=[(int(p[0]), int(p[1])) for p in m["pixels"]])
                for m in obj["markers"]
            ]
            return cls(image_id=str(obj["image_id"]), markers=markers)
        except (KeyError, TypeError, IndexError) as exc:
            raise ProjectFormatError(f"bad marker record: {exc}") from exc


@dataclass
class Pooling:
    kind: str = "max"
    window: int = 3

    def __post_init__(self):
        if self.kind not in ("max", "average"):
            raise ProjectFormatError(f"pooling kind must be max|average, got {self.kind!r}")
        if self.window < 1:
            raise ProjectFormatError(f"pooling window must be >= 1, got {self.window}")


@dataclass
class LayerSpec:
    kernel_size: int = 3
    dilation: int = 1
    kernels_per_marker: int = 5
    kernels_total: int = 32
    pooling: Pooling = field(default_factory=Pooling)

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ProjectFormatError(
                f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        if self.dilation < 1:
            raise ProjectFormatError(f"dilation must be >= 1, got {self.dilation}")
        if self.kernels_per_marker < 1:
            raise ProjectFormatError(
                f"kernels_per_marker must be >= 1, got {self.kernels_per_marker}")
        if self.kernels_total < 1:
            raise ProjectFormatError(
                f"kernels_total must be >= 1, got {self.kernels_total}")

    def to_json(self) -> dict:
        return {
            "kernel_size": self.kernel_size,
            "dilation": self.dilation,
            "kernels_per_marker": self.kernels_per_marker,
            "kernels_total": self.kernels_total,
            "pooling": {"kind": self.pooling.kind, "window": self.pooling.window},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LayerSpec":
        try:
            pooling = Pooling(kind=obj["pooling"]["kind"],
                              window=int(obj["pooling"]["window"]))
            return cls(kernel_size=int(obj["kernel_size"]),
                       dilation=int(obj["dilation"]),
                       kernels_per_marker=int(obj["kernels_per_marker"]),
                       kernels_total=int(obj["kernels_total"]),
                       pooling=pooling)
        except (KeyError, TypeError) as exc:
            raise ProjectFormatError(f"bad layer spec: {exc}") from exc


@dataclass
class NormStats:
    """Per-channel z-score statistics computed over marker pixels."""

    mean: np.ndarray
    std: np.ndarray
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape:
            raise ValueError("mean/std shape mismatch")
        if np.any(self.std < 0):
            raise ValueError("negative std")

    @property
    def channels(self) -> int:
        return self.mean.shape[0]

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "eps": self.eps}

    @classmethod
    def from_json(cls, obj: dict) -> "NormStats":
        return cls(mean=np.array(obj["mean"], dtype=np.float64),
                   std=np.array(obj["std"], dtype=np.float64),
                   eps=float(obj["eps"]))


@dataclass
class KernelBank:
    """Unit-norm convolution kernels with the marker each one came from."""

    kernels: np.ndarray  # (n, k, k, c) float32
    provenance: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.kernels = np.asarray(self.kernels, dtype=np.float32)
        if self.kernels.ndim != 4:
            raise ValueError(f"kernel bank must be (n, k, k, c), got {self.kernels.shape}")
        if not self.provenance:
            self.provenance = [""] * len(self.kernels)
        if len(self.provenance) != len(self.kernels):
            raise ValueError("provenance length does not match kernel count")

    def __len__(self) -> int:
        return self.kernels.shape[0]

    @property
    def kernel_shape(self) -> tuple[int, int, int]:
        return tuple(self.kernels.shape[1:])


@dataclass
class Layer:
    spec: LayerSpec
    norm_stats: NormStats
    bank: KernelBank
    selected: list[int]

    def __post_init__(self):
        if not self.selected:
            raise ValueError("layer selection must be non-empty")
        n = len(self.bank)
        for idx in self.selected:
            if not 0 <= idx < n:
                raise ValueError(f"selected kernel index {idx} out of range 0..{n - 1}")
        if self.norm_stats.channels != self.bank.kernel_shape[2]:
            raise ValueError("norm stats channel count does not match kernel channels")

    def selected_kernels(self) -> np.ndarray:
        return self.bank.kernels[self.selected]


@dataclass
class PostprocConfig:
    box_expand_fraction: float = 0.10
    min_area_px: int = 100

    def to_json(self) -> dict:
        return {"box_expand_fraction": self.box_expand_fraction,
                "min_area_px": self.min_area_px}

    @classmethod
    def from_json(cls, obj: dict) -> "PostprocConfig":
        return cls(box_expand_fraction=float(obj["box_expand_fraction"]),
                   min_area_px=int(obj["min_area_px"]))


@dataclass
class FlimModel:
    layers: list[Layer] = field(default_factory=list)
    heuristic: str = "parasite"
    postproc: PostprocConfig = field(default_factory=PostprocConfig)

    def __post_init__(self):
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"heuristic must be one of {HEURISTICS}, got {self.heuristic!r}")

    def __len__(self) -> int:
        return len(self.layers)


@dataclass
class GroundTruth:
    image_id: str
    boxes: list[BoundingBox] = field(default_factory=list)

    def validate(self, height: int, width: int) -> None:
        for box in self.boxes:
            if not (0 <= box.x1 < box.x2 <= width and 0 <= box.y1 < box.y2 <= height):
                raise ProjectFormatError(
                    f"image {self.image_id!r}: ground-truth box "
                    f"({box.x1},{box.y1},{box.x2},{box.y2}) outside {height}x{width}")

    def to_json(self) -> dict:
        return {"image_id": self.image_id,
                "boxes": [{"x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2}
                          for b in self.boxes]}

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        try:
            boxes = [BoundingBox(x1=int(b["x1"]), y1=int(b["y1"]),
                                 x2=int(b["x2"]), y2=int(b["y2"]))
                     for b in obj["boxes"]]
            return cls(image_id=str(obj["image_id"]), boxes=boxes)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProjectFormatError(f"bad ground-truth record: {exc}") from exc
