"""HTTP facade over the interactive build loop.

One writer per project: every mutation takes the project lock, so
concurrent readers never observe a half-updated model. Editing markers
invalidates every estimated layer; editing the selection at layer l
invalidates only the layers after l. All endpoints live under /api/v1.
"""

from __future__ import annotations

import base64
import io
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image

from . import __version__, imops
from .decoder import adapt_weights, channel_stats, decode, decode_image
from .detect import DetectionSet, detect_objects
from .encoder import apply_norm, estimate_layer, layer_seed, run_layer
from .model import (
    FlimModel,
    Layer,
    LayerSpec,
    MarkerSet,
    ProjectError,
)
from .project import Project, load_model, load_project, save_markers, save_model

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
THUMB_MAX_SIDE = 128


@dataclass
class BuiltLayer:
    spec: LayerSpec
    stats: object
    bank: object
    selected: list[int]

    def to_layer(self) -> Layer:
        return Layer(spec=self.spec, norm_stats=self.stats, bank=self.bank,
                     selected=list(self.selected))


@dataclass
class Session:
    """Build state for one project: model prefix plus candidate banks."""

    project_id: str
    project: Project
    seed: int = 0
    layers: list[BuiltLayer] = field(default_factory=list)
    lock: threading.RLock = field(default_factory=threading.RLock)
    jobs: dict = field(default_factory=dict)
    _images: dict = field(default_factory=dict)
    _acts: dict = field(default_factory=dict)  # (image_id, layer_idx) -> tensor

    def image(self, image_id: str) -> np.ndarray:
        if image_id not in self.project.images:
            raise HTTPException(404, f"unknown image {image_id!r}")
        if image_id not in self._images:
            self._images[image_id] = imops.load_png(self.project.images[image_id].path)
        return self._images[image_id]

    def encode(self, image_id: str, up_to: int) -> np.ndarray:
        """Output of built layers 1..up_to for an image (0 = raw image)."""
        if up_to == 0:
            return self.image(image_id)
        key = (image_id, up_to)
        if key not in self._acts:
            prev = self.encode(image_id, up_to - 1)
            self._acts[key] = run_layer(prev, self.layers[up_to - 1].to_layer())
        return self._acts[key]

    def candidate_activations(self, image_id: str, layer_index: int) -> np.ndarray:
        """Layer output for ALL candidate kernels, selection ignored."""
        built = self.layers[layer_index - 1]
        x = apply_norm(self.encode(image_id, layer_index - 1), built.stats)
        y = imops.convolve(x, built.bank.kernels, built.spec.dilation)
        return imops.pool(imops.relu(y), built.spec.pooling.kind,
                          built.spec.pooling.window)

    def invalidate(self, from_layer: int) -> None:
        """Drop built layers with 1-based index > from_layer and their caches."""
        del self.layers[from_layer:]
        self.drop_act_cache(from_layer + 1)

    def drop_act_cache(self, from_layer: int) -> None:
        self._acts = {k: v for k, v in self._acts.items() if k[1] < from_layer}

    def model(self, up_to: int | None = None) -> FlimModel:
        layers = self.layers if up_to is None else self.layers[:up_to]
        return FlimModel(layers=[b.to_layer() for b in layers],
                         heuristic=self.project.heuristic,
                         postproc=self.project.postproc)

    def check_layer(self, index: int) -> None:
        if not 1 <= index <= len(self.layers):
            raise HTTPException(404, f"layer {index} not built")


def _project_info(session: Session) -> dict:
    project = session.project
    return {
        "id": session.project_id,
        "name": project.name,
        "heuristic": project.heuristic,
        "postproc": project.postproc.to_json(),
        "images": [
            {
                "id": info.image_id,
                "height": info.height,
                "width": info.width,
                "marker_count": len(project.markers.get(info.image_id,
                                                        MarkerSet(info.image_id)).markers),
                "has_gt": info.image_id in project.ground_truth,
            }
            for info in (project.images[i] for i in project.image_ids())
        ],
        "layers": [
            {
                "index": li + 1,
                "spec": built.spec.to_json(),
                "candidates": len(built.bank),
                "selected": list(built.selected),
            }
            for li, built in enumerate(session.layers)
        ],
    }


def _thumbnail_png(channel: np.ndarray) -> bytes:
    normed = imops.minmax_normalize_channels(channel[:, :, np.newaxis])[:, :, 0]
    data = np.clip(np.rint(normed * 255.0), 0, 255).astype(np.uint8)
    img = Image.fromarray(data, mode="L")
    h, w = data.shape
    side = max(h, w)
    if side > THUMB_MAX_SIDE:
        scale = THUMB_MAX_SIDE / side
        img = img.resize((max(1, round(w * scale)), max(1, round(h * scale))),
                         Image.BILINEAR)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def create_app(project_path=None, seed: int = 0) -> FastAPI:
    """Build the service; optionally pre-register one project directory."""
    app = FastAPI(title="flim-builder", version=__version__)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"])

    sessions: dict[str, Session] = {}
    by_path: dict[str, str] = {}
    models: dict[str, Path] = {}
    registry_lock = threading.Lock()

    def register(path) -> Session:
        resolved = str(Path(path).resolve())
        with registry_lock:
            if resolved in by_path:
                return sessions[by_path[resolved]]
            try:
                project = load_project(path)
            except ProjectError as exc:
                raise HTTPException(422, detail=str(exc)) from exc
            pid = f"p{len(sessions) + 1}"
            session = Session(project_id=pid, project=project, seed=seed)
            sessions[pid] = session
            by_path[resolved] = pid
            if (project.root / "model" / "meta.json").exists():
                models[pid] = project.root / "model"
            return session

    def get_session(pid: str) -> Session:
        session = sessions.get(pid)
        if session is None:
            raise HTTPException(404, f"unknown project {pid!r}")
        return session

    if project_path is not None:
        register(project_path)

    @app.get("/api/v1/health")
    def health():
        return {"name": "flim-builder", "version": __version__}

    @app.get("/api/v1/projects")
    def list_projects():
        return [{"id": s.project_id, "name": s.project.name} for s in sessions.values()]

    @app.post("/api/v1/projects")
    def create_project(body: dict = Body(...)):
        path = body.get("path")
        if not path:
            raise HTTPException(422, "body must carry a 'path'")
        session = register(path)
        with session.lock:
            return _project_info(session)

    @app.get("/api/v1/projects/{pid}")
    def project_info(pid: str):
        session = get_session(pid)
        with session.lock:
            return _project_info(session)

    @app.get("/api/v1/projects/{pid}/images/{img}")
    def image_png(pid: str, img: str):
        session = get_session(pid)
        with session.lock:
            info = session.project.images.get(img)
            if info is None:
                raise HTTPException(404, f"unknown image {img!r}")
            return Response(content=info.path.read_bytes(), media_type="image/png")

    @app.get("/api/v1/projects/{pid}/images/{img}/markers")
    def get_markers(pid: str, img: str):
        session = get_session(pid)
        with session.lock:
            if img not in session.project.images:
                raise HTTPException(404, f"unknown image {img!r}")
            mset = session.project.markers.get(img, MarkerSet(image_id=img))
            return mset.to_json()

    @app.put("/api/v1/projects/{pid}/images/{img}/markers")
    def put_markers(pid: str, img: str, body: dict = Body(...)):
        session = get_session(pid)
        with session.lock:
            if img not in session.project.images:
                raise HTTPException(404, f"unknown image {img!r}")
            try:
                mset = MarkerSet.from_json({**body, "image_id": img})
                save_markers(session.project, mset)
            except ProjectError as exc:
                raise HTTPException(422, detail=str(exc)) from exc
            session.invalidate(0)
            return {"image_id": img, "markers": len(mset.markers),
                    "invalidated_layers": True}

    @app.get("/api/v1/projects/{pid}/gt/{img}")
    def get_gt(pid: str, img: str):
        session = get_session(pid)
        with session.lock:
            gt = session.project.ground_truth.get(img)
            if gt is None:
                raise HTTPException(404, f"no ground truth for {img!r}")
            return gt.to_json()

    @app.post("/api/v1/projects/{pid}/layers")
    def add_layer(pid: str, body: dict = Body(...)):
        session = get_session(pid)
        with session.lock:
            for li, built in enumerate(session.layers):
                if not built.selected:
                    raise HTTPException(409, f"layer {li + 1} has no selection")
            try:
                spec = LayerSpec.from_json(body)
            except ProjectError as exc:
                raise HTTPException(422, detail=str(exc)) from exc
            annotated = session.project.annotated_ids()
            if not annotated:
                raise HTTPException(409, "project has no scribbled images")
            job_id = uuid.uuid4().hex[:12]
            index = len(session.layers)
            inputs = {i: session.encode(i, index) for i in annotated}
            markers = {i: session.project.markers[i] for i in annotated}
            try:
                stats, bank = estimate_layer(
                    inputs, markers, spec,
                    seed=layer_seed(session.seed, index), layer_index=index)
            except ValueError as exc:
                raise HTTPException(422, detail=str(exc)) from exc
            session.layers.append(BuiltLayer(
                spec=spec, stats=stats, bank=bank,
                selected=list(range(len(bank)))))
            result = {"layer": index + 1, "candidates": len(bank)}
            session.jobs[job_id] = {"id": job_id, "status": "done",
                                    "result": result}
            return {**result, "job_id": job_id}

    @app.get("/api/v1/projects/{pid}/jobs/{job_id}")
    def job_status(pid: str, job_id: str):
        session = get_session(pid)
        with session.lock:
            job = session.jobs.get(job_id)
            if job is None:
                raise HTTPException(404, f"unknown job {job_id!r}")
            return job

    @app.get("/api/v1/projects/{pid}/layers/{index}/kernels")
    def layer_kernels(pid: str, index: int, img: str = Query(...)):
        session = get_session(pid)
        with session.lock:
            session.check_layer(index)
            acts = imops.minmax_normalize_channels(
                session.candidate_activations(img, index))
            stats = channel_stats(acts)
            alpha = adapt_weights(stats, session.project.heuristic)
            built = session.layers[index - 1]
            selected = set(built.selected)
            return {
                "layer": index,
                "image": img,
                "kernels": [
                    {
                        "index": ki,
                        "provenance": built.bank.provenance[ki],
                        "mean_activation": float(stats.mean[ki]),
                        "std_activation": float(stats.std[ki]),
                        "sign": int(alpha[ki]),
                        "selected": ki in selected,
                        "thumb": (f"/api/v1/projects/{pid}/layers/{index}"
                                  f"/kernels/{ki}/thumb?img={img}"),
                    }
                    for ki in range(len(built.bank))
                ],
            }

    @app.get("/api/v1/projects/{pid}/layers/{index}/kernels/{kernel}/thumb")
    def kernel_thumb(pid: str, index: int, kernel: int, img: str = Query(...)):
        session = get_session(pid)
        with session.lock:
            session.check_layer(index)
            built = session.layers[index - 1]
            if not 0 <= kernel < len(built.bank):
                raise HTTPException(404, f"kernel {kernel} out of range")
            acts = session.candidate_activations(img, index)
            return Response(content=_thumbnail_png(acts[:, :, kernel]),
                            media_type="image/png")

    @app.put("/api/v1/projects/{pid}/layers/{index}/selection")
    def put_selection(pid: str, index: int, body: dict = Body(...)):
        session = get_session(pid)
        with session.lock:
            session.check_layer(index)
            selected = body.get("selected") if isinstance(body, dict) else body
            if not isinstance(selected, list) or not selected:
                raise HTTPException(422, "selection must be a non-empty index list")
            built = session.layers[index - 1]
            indices = []
            for value in selected:
                if type(value) is not int or not 0 <= value < len(built.bank):
                    raise HTTPException(
                        422, f"kernel index {value!r} out of range 0..{len(built.bank) - 1}")
                indices.append(value)
            if len(set(indices)) != len(indices):
                raise HTTPException(422, "selection has repeated indices")
            built.selected = sorted(indices)
            del session.layers[index:]
            session.drop_act_cache(index)
            return {"layer": index, "selected": built.selected}

    @app.get("/api/v1/projects/{pid}/layers/{index}/saliency/{img}")
    def layer_saliency(pid: str, index: int, img: str):
        session = get_session(pid)
        with session.lock:
            session.check_layer(index)
            image = session.image(img)
            acts = imops.minmax_normalize_channels(session.encode(img, index))
            stats = channel_stats(acts)
            alpha = adapt_weights(stats, session.project.heuristic)
            saliency = decode(acts, alpha)
            postproc = session.project.postproc
            detections = detect_objects(
                saliency, img, expand_fraction=postproc.box_expand_fraction,
                min_area_px=postproc.min_area_px)
            gt = session.project.ground_truth.get(img)
            return {
                "layer": index,
                "image_id": img,
                "width": image.shape[1],
                "height": image.shape[0],
                "saliency_png": base64.b64encode(
                    imops.png_gray_bytes(saliency)).decode("ascii"),
                "boxes": [b.to_json() for b in detections.boxes],
                "gt_boxes": ([b.to_json() for b in gt.boxes] if gt else []),
            }

    @app.delete("/api/v1/projects/{pid}/layers/{index}")
    def delete_layer(pid: str, index: int):
        session = get_session(pid)
        with session.lock:
            session.check_layer(index)
            session.invalidate(index - 1)
            return {"layers": len(session.layers)}

    @app.post("/api/v1/projects/{pid}/export")
    def export_model(pid: str):
        session = get_session(pid)
        with session.lock:
            if not session.layers:
                raise HTTPException(409, "cannot export a model with zero layers")
            out = save_model(session.model(), session.project.root / "model")
            models[pid] = out
            return {"model_id": pid, "path": str(out)}

    @app.post("/api/v1/models/{mid}/detect")
    async def model_detect(mid: str, file: UploadFile):
        path = models.get(mid)
        if path is None:
            raise HTTPException(404, f"unknown model {mid!r}")
        data = await file.read()
        if not data.startswith(PNG_SIGNATURE):
            raise HTTPException(415, "only PNG uploads are supported")
        model = load_model(path)
        image = imops.load_png(io.BytesIO(data))
        saliency = decode_image(image, model)
        image_id = Path(file.filename or "upload.png").stem
        detections = detect_objects(
            saliency, image_id,
            expand_fraction=model.postproc.box_expand_fraction,
            min_area_px=model.postproc.min_area_px)
        return detections.to_json()

    return app
