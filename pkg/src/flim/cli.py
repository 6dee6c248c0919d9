"""Command-line entry points: train, detect, eval, serve, synth.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .decoder import decode_image
from .detect import DetectionSet, detect_objects
from .encoder import build_model
from .imops import load_png
from .metrics import MU_AP_THRESHOLDS, curve_rows, evaluate
from .model import GroundTruth, LayerSpec, PostprocConfig, ProjectError
from .project import load_model, load_project, save_model
from .synthetic import generate_fixture


def _load_arch(arch_arg: str) -> dict:
    """Read an architecture file; bare names resolve to bundled profiles."""
    path = Path(arch_arg)
    if not path.exists() and "/" not in arch_arg and not arch_arg.endswith(".json"):
        ref = resources.files("flim").joinpath(f"profiles/{arch_arg}.json")
        if ref.is_file():
            return json.loads(ref.read_text(encoding="utf-8"))
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _parse_arch(obj: dict, use_selection: bool):
    layers = []
    selections = []
    for rec in obj["layers"]:
        rec = dict(rec)
        picked = rec.pop("selection", None)
        layers.append(LayerSpec.from_json(rec))
        selections.append([int(i) for i in picked]
                          if (use_selection and picked is not None) else None)
    heuristic = obj.get("heuristic")
    postproc = (PostprocConfig.from_json(obj["postproc"])
                if "postproc" in obj else None)
    return layers, selections, heuristic, postproc


def cmd_train(args) -> int:
    try:
        arch_obj = _load_arch(args.arch)
    except FileNotFoundError:
        print(f"error: arch file not found: {args.arch}", file=sys.stderr)
        return 2
    project = load_project(args.project)
    layers, selections, heuristic, postproc = _parse_arch(
        arch_obj, use_selection=not args.no_selection)
    train_ids = project.annotated_ids()
    if not train_ids:
        print("error: project has no scribbled images to train on", file=sys.stderr)
        return 1
    images = {i: load_png(project.images[i].path) for i in train_ids}
    markers = {i: project.markers[i] for i in train_ids}
    model = build_model(
        images, markers, layers,
        heuristic=heuristic or project.heuristic,
        postproc=postproc or project.postproc,
        seed=args.seed, selections=selections)
    out = save_model(model, Path(args.project) / "model")
    total = sum(len(layer.selected) for layer in model.layers)
    print(f"trained {len(model.layers)} layer(s), {total} selected kernel(s) -> {out}")
    return 0


def _detect_one(model, image_path: Path) -> DetectionSet:
    image = load_png(image_path)
    saliency = decode_image(image, model)
    return detect_objects(saliency, image_path.stem,
                          expand_fraction=model.postproc.box_expand_fraction,
                          min_area_px=model.postproc.min_area_px)


def cmd_detect(args) -> int:
    model = load_model(args.model)
    image_paths = sorted(Path(args.images).glob("*.png"))
    results = []
    failures = 0

    def run(path):
        return _detect_one(model, path)

    if args.jobs > 1 and len(image_paths) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = {path: pool.submit(run, path) for path in image_paths}
        for path in image_paths:
            try:
                results.append(futures[path].result())
            except Exception as exc:
                failures += 1
                print(f"warning: {path}: {exc}", file=sys.stderr)
    else:
        for path in image_paths:
            try:
                results.append(run(path))
            except Exception as exc:
                failures += 1
                print(f"warning: {path}: {exc}", file=sys.stderr)

    if image_paths and failures == len(image_paths):
        print("error: every image failed", file=sys.stderr)
        return 1
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump([d.to_json() for d in results], f, indent=2)
        f.write("\n")
    print(f"detected over {len(results)} image(s) -> {args.out}")
    return 0


def _load_gt_dir(path) -> list[GroundTruth]:
    gts = []
    for gpath in sorted(Path(path).glob("*.json")):
        with open(gpath, encoding="utf-8") as f:
            gts.append(GroundTruth.from_json(json.load(f)))
    return gts


def cmd_eval(args) -> int:
    with open(args.dets, encoding="utf-8") as f:
        preds = [DetectionSet.from_json(obj) for obj in json.load(f)]
    gts = _load_gt_dir(args.gt)
    if not gts or all(not g.boxes for g in gts):
        print(f"error: no ground truth found in {args.gt}", file=sys.stderr)
        return 1
    scores = evaluate(preds, gts)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(scores, f, indent=2, sort_keys=True)
        f.write("\n")
    if args.curves:
        with open(args.curves, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["tau", "rank", "recall", "precision"])
            for row in curve_rows(preds, gts, MU_AP_THRESHOLDS):
                writer.writerow(row)
    print(json.dumps(scores, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    port = args.port
    if port is None:
        port = int(os.environ.get("FLIM_PORT", "8765"))
    if not 1 <= port <= 65535:
        print(f"error: port out of range: {port}", file=sys.stderr)
        return 2
    app = create_app(args.project, seed=args.seed)
    try:
        uvicorn.run(app, host=args.host, port=port, log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"error: server failed: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_synth(args) -> int:
    project = generate_fixture(args.out, n_images=args.images,
                               n_train=args.train, size=args.size,
                               seed=args.seed)
    print(f"generated {len(project.images)} image(s) in {project.root}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flim",
        description="Build, run, and score scribble-trained flyweight detectors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="build a model non-interactively")
    p.add_argument("--project", required=True, help="project directory")
    p.add_argument("--arch", required=True,
                   help="architecture JSON (or bundled profile: parasite, ship)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-selection", action="store_true",
                   help="ignore per-layer selection lists, keep all kernels")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="run a model over a directory of PNGs")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--images", required=True, help="directory of input PNGs")
    p.add_argument("--out", required=True, help="output detections JSON")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--dets", required=True, help="detections JSON from `flim detect`")
    p.add_argument("--gt", required=True, help="directory of ground-truth JSON files")
    p.add_argument("--out", required=True, help="output metrics JSON")
    p.add_argument("--curves", help="optional PR-curve CSV output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the interactive builder service")
    p.add_argument("--project", required=True, help="project directory")
    p.add_argument("--port", type=int, default=None,
                   help="default: $FLIM_PORT or 8765")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("synth", help="generate a synthetic blob project")
    p.add_argument("--out", required=True, help="target directory")
    p.add_argument("--images", type=int, default=20)
    p.add_argument("--train", type=int, default=5)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProjectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
