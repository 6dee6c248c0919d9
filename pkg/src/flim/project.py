"""Project directory persistence and the model file format.

On-disk layout:

    project.json          name, heuristic, postprocessing config
    images/*.png          the annotated images
    markers/<image>.json  scribbles per image
    gt/<image>.json       ground-truth boxes per image (optional)
    model/meta.json       layer specs, norm stats, selections
    model/weights.bin     kernel weights sidecar (see below)

The weights sidecar is a 16-byte header (magic "FLIM", format version
u32, total kernel count u32, reserved u32, all little-endian), the
kernels of every layer in order as little-endian float32 row-major
[kernel][row][col][channel], and a trailing CRC32 of everything before
it.
"""

from __future__ import annotations

import json
import shutil
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .model import (
    FlimModel,
    GroundTruth,
    KernelBank,
    Layer,
    LayerSpec,
    MarkerSet,
    MissingImageError,
    ModelChecksumError,
    ModelFormatError,
    ModelVersionError,
    NormStats,
    PostprocConfig,
    ProjectFormatError,
)

WEIGHTS_MAGIC = b"FLIM"
WEIGHTS_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass
class ImageInfo:
    image_id: str
    height: int
    width: int
    path: Path


@dataclass
class Project:
    root: Path
    name: str
    heuristic: str = "parasite"
    postproc: PostprocConfig = field(default_factory=PostprocConfig)
    images: dict[str, ImageInfo] = field(default_factory=dict)
    markers: dict[str, MarkerSet] = field(default_factory=dict)
    ground_truth: dict[str, GroundTruth] = field(default_factory=dict)

    def image_ids(self) -> list[str]:
        return sorted(self.images)

    def annotated_ids(self) -> list[str]:
        return [i for i in self.image_ids()
                if i in self.markers and self.markers[i].markers]


def _read_json(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise ProjectFormatError(f"{path}: malformed JSON: {exc}") from exc


def _write_json(obj: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def load_project(path) -> Project:
    """Load and validate a project directory."""
    root = Path(path)
    if not root.is_dir():
        raise ProjectFormatError(f"{root}: not a directory")

    name = root.name
    heuristic = "parasite"
    postproc = PostprocConfig()
    proj_file = root / "project.json"
    if proj_file.exists():
        obj = _read_json(proj_file)
        name = str(obj.get("name", name))
        heuristic = str(obj.get("heuristic", heuristic))
        if "postproc" in obj:
            postproc = PostprocConfig.from_json(obj["postproc"])

    images: dict[str, ImageInfo] = {}
    images_dir = root / "images"
    if images_dir.is_dir():
        for img_path in sorted(images_dir.glob("*.png")):
            with Image.open(img_path) as img:
                width, height = img.size
            images[img_path.stem] = ImageInfo(
                image_id=img_path.stem, height=height, width=width, path=img_path)

    markers: dict[str, MarkerSet] = {}
    markers_dir = root / "markers"
    if markers_dir.is_dir():
        for mpath in sorted(markers_dir.glob("*.json")):
            mset = MarkerSet.from_json(_read_json(mpath))
            info = images.get(mset.image_id)
            if info is None:
                raise MissingImageError(
                    f"{mpath}: markers reference unknown image {mset.image_id!r}")
            mset.validate(info.height, info.width)
            markers[mset.image_id] = mset

    ground_truth: dict[str, GroundTruth] = {}
    gt_dir = root / "gt"
    if gt_dir.is_dir():
        for gpath in sorted(gt_dir.glob("*.json")):
            gt = GroundTruth.from_json(_read_json(gpath))
            info = images.get(gt.image_id)
            if info is None:
                raise MissingImageError(
                    f"{gpath}: ground truth references unknown image {gt.image_id!r}")
            gt.validate(info.height, info.width)
            ground_truth[gt.image_id] = gt

    return Project(root=root, name=name, heuristic=heuristic, postproc=postproc,
                   images=images, markers=markers, ground_truth=ground_truth)


def save_project(project: Project, path=None) -> Path:
    """Write a project back to disk in canonical form.

    Defaults to the project's own directory; a different target copies
    the image files over as well.
    """
    root = Path(path) if path is not None else project.root
    root.mkdir(parents=True, exist_ok=True)
    _write_json({"name": project.name,
                 "heuristic": project.heuristic,
                 "postproc": project.postproc.to_json()},
                root / "project.json")
    (root / "images").mkdir(exist_ok=True)
    for info in project.images.values():
        target = root / "images" / f"{info.image_id}.png"
        if target.resolve() != info.path.resolve():
            shutil.copyfile(info.path, target)
    for mset in project.markers.values():
        _write_json(mset.to_json(), root / "markers" / f"{mset.image_id}.json")
    for gt in project.ground_truth.values():
        _write_json(gt.to_json(), root / "gt" / f"{gt.image_id}.json")
    return root


def save_markers(project: Project, mset: MarkerSet) -> None:
    """Persist one image's markers into the project directory."""
    info = project.images.get(mset.image_id)
    if info is None:
        raise MissingImageError(f"unknown image {mset.image_id!r}")
    mset.validate(info.height, info.width)
    project.markers[mset.image_id] = mset
    _write_json(mset.to_json(), project.root / "markers" / f"{mset.image_id}.json")


def save_model(model: FlimModel, path) -> Path:
    """Write meta.json and weights.bin into a model directory."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": WEIGHTS_VERSION,
        "heuristic": model.heuristic,
        "postproc": model.postproc.to_json(),
        "layers": [
            {
                "spec": layer.spec.to_json(),
                "norm_stats": layer.norm_stats.to_json(),
                "kernel_count": len(layer.bank),
                "kernel_shape": list(layer.bank.kernel_shape),
                "provenance": list(layer.bank.provenance),
                "selected": list(layer.selected),
            }
            for layer in model.layers
        ],
    }
    _write_json(meta, out / "meta.json")

    total = sum(len(layer.bank) for layer in model.layers)
    payload = b"".join(
        np.ascontiguousarray(layer.bank.kernels, dtype="<f4").tobytes()
        for layer in model.layers)
    body = _HEADER.pack(WEIGHTS_MAGIC, WEIGHTS_VERSION, total, 0) + payload
    crc = zlib.crc32(body) & 0xFFFFFFFF
    with open(out / "weights.bin", "wb") as f:
        f.write(body + struct.pack("<I", crc))
    return out


def load_model(path) -> FlimModel:
    """Load a model directory, verifying version, length, and checksum."""
    root = Path(path)
    meta = _read_json(root / "meta.json")
    data = (root / "weights.bin").read_bytes()
    if len(data) < _HEADER.size + 4:
        raise ModelFormatError(f"{root}: weights file truncated")
    magic, version, total, _reserved = _HEADER.unpack_from(data)
    if magic != WEIGHTS_MAGIC:
        raise ModelFormatError(f"{root}: bad weights magic {magic!r}")
    if version != WEIGHTS_VERSION:
        raise ModelVersionError(
            f"{root}: weights version {version}, expected {WEIGHTS_VERSION}")
    body, crc_bytes = data[:-4], data[-4:]
    (crc_stored,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise ModelChecksumError(f"{root}: weights checksum mismatch")

    layers = []
    offset = _HEADER.size
    meta_total = sum(int(rec["kernel_count"]) for rec in meta.get("layers", []))
    if meta_total != total:
        raise ModelFormatError(
            f"{root}: header kernel count {total} does not match meta {meta_total}")
    for rec in meta["layers"]:
        count = int(rec["kernel_count"])
        shape = tuple(int(v) for v in rec["kernel_shape"])
        nbytes = count * int(np.prod(shape)) * 4
        if offset + nbytes > len(body):
            raise ModelFormatError(f"{root}: weights file shorter than meta implies")
        kernels = np.frombuffer(body, dtype="<f4", count=count * int(np.prod(shape)),
                                offset=offset).reshape((count,) + shape).copy()
        offset += nbytes
        layers.append(Layer(
            spec=LayerSpec.from_json(rec["spec"]),
            norm_stats=NormStats.from_json(rec["norm_stats"]),
            bank=KernelBank(kernels=kernels, provenance=list(rec["provenance"])),
            selected=[int(i) for i in rec["selected"]],
        ))
    if offset != len(body):
        raise ModelFormatError(f"{root}: trailing bytes in weights file")
    return FlimModel(layers=layers,
                     heuristic=meta["heuristic"],
                     postproc=PostprocConfig.from_json(meta["postproc"]))


def count_parameters(model: FlimModel, selected_only: bool = True) -> int:
    """Total kernel weights: sum over layers of kernels x k x k x c_in.

    There are no bias terms in this architecture, so kernel elements are
    the whole parameter count.
    """
    if not model.layers:
        raise ValueError("model has no layers")
    total = 0
    for layer in model.layers:
        k, _, c_in = layer.bank.kernel_shape
        n = len(layer.selected) if selected_only else len(layer.bank)
        total += n * k * k * c_in
    return total
