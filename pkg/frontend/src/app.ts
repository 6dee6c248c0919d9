// Wires the scribble canvas, kernel gallery, and saliency preview to the
// builder service. Vanilla DOM; the service stays authoritative for all
// numbers on screen.

import { ApiClient, ApiError, LayerSpec, ProjectInfo } from "./api.js";
import { EmptySelectionError, GalleryState, toggleKernel } from "./gallery.js";
import { overlayRects } from "./overlay.js";
import { CanvasState, PathPoint } from "./scribble.js";

const MARKER_COLORS = ["#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
                       "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080"];
const SCALE = 4;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

class App {
  api = new ApiClient("http://127.0.0.1:8765");
  project: ProjectInfo | null = null;
  canvasState: CanvasState | null = null;
  gallery: GalleryState | null = null;
  activeImage: string | null = null;
  activeLayer = 0;
  private drawing: PathPoint[] | null = null;
  private baseImage: HTMLImageElement | null = null;

  mount(): void {
    el<HTMLButtonElement>("open-project").onclick = () => void this.openProject();
    el<HTMLButtonElement>("save-markers").onclick = () => void this.saveMarkers();
    el<HTMLButtonElement>("undo-stroke").onclick = () => this.undoStroke();
    el<HTMLButtonElement>("add-layer").onclick = () => void this.addLayer();
    el<HTMLButtonElement>("export-model").onclick = () => void this.exportModel();
    const canvas = el<HTMLCanvasElement>("scribble-canvas");
    canvas.onpointerdown = (e) => this.penDown(e);
    canvas.onpointermove = (e) => this.penMove(e);
    canvas.onpointerup = () => void this.penUp();
    canvas.onpointerleave = () => void this.penUp();
    const base = new URLSearchParams(location.search).get("api");
    if (base !== null) {
      el<HTMLInputElement>("base-url").value = base;
    }
    this.status("open a project directory to begin");
  }

  status(message: string, isError = false): void {
    const bar = el<HTMLDivElement>("status");
    bar.textContent = message;
    bar.className = isError ? "status error" : "status";
  }

  private async guard<T>(work: () => Promise<T>): Promise<T | null> {
    try {
      return await work();
    } catch (error) {
      if (error instanceof EmptySelectionError) {
        this.status(error.message, true);
      } else if (error instanceof ApiError) {
        this.status(`server rejected the request: ${error.detail}`, true);
      } else {
        this.status(String(error), true);
      }
      return null;
    }
  }

  async openProject(): Promise<void> {
    const baseUrl = el<HTMLInputElement>("base-url").value.replace(/\/$/, "");
    this.api = new ApiClient(baseUrl);
    const path = el<HTMLInputElement>("project-path").value;
    const info = await this.guard(async () => {
      if (path.trim() !== "") return this.api.openProject(path.trim());
      const listed = await this.api.listProjects();
      if (listed.length === 0) throw new Error("no project registered; enter a path");
      return this.api.getProject(listed[0].id);
    });
    if (info === null) return;
    this.project = info;
    this.activeLayer = info.layers.length;
    this.renderImageList();
    this.renderLayerList();
    this.status(`opened ${info.name}: ${info.images.length} image(s), `
      + `${info.layers.length} layer(s)`);
    if (info.images.length > 0) void this.selectImage(info.images[0].id);
  }

  renderImageList(): void {
    const list = el<HTMLUListElement>("image-list");
    list.replaceChildren();
    for (const image of this.project?.images ?? []) {
      const item = document.createElement("li");
      const label = `${image.id} (${image.width}x${image.height}`
        + `${image.marker_count > 0 ? `, ${image.marker_count} markers` : ""})`;
      item.textContent = label;
      item.className = image.id === this.activeImage ? "active" : "";
      item.onclick = () => void this.selectImage(image.id);
      list.append(item);
    }
  }

  async selectImage(imageId: string): Promise<void> {
    if (this.project === null) return;
    const info = this.project.images.find((i) => i.id === imageId);
    if (info === undefined) return;
    this.activeImage = imageId;
    this.canvasState = new CanvasState(imageId, info.width, info.height);
    const markers = await this.guard(() => this.api.getMarkers(this.project!.id, imageId));
    if (markers !== null) this.canvasState.loadFrom(markers);
    this.canvasState.brushRadius = Number(el<HTMLInputElement>("brush-radius").value);
    this.canvasState.currentMarker = Number(el<HTMLInputElement>("marker-id").value);

    const canvas = el<HTMLCanvasElement>("scribble-canvas");
    canvas.width = info.width * SCALE;
    canvas.height = info.height * SCALE;
    this.baseImage = new Image();
    this.baseImage.onload = () => this.redrawCanvas();
    this.baseImage.src = this.api.imageUrl(this.project.id, imageId);
    this.renderImageList();
    if (this.activeLayer > 0) {
      await this.refreshGallery();
      await this.refreshPreview();
    }
  }

  private markerColor(markerId: number): string {
    return MARKER_COLORS[Math.abs(markerId) % MARKER_COLORS.length];
  }

  redrawCanvas(): void {
    const canvas = el<HTMLCanvasElement>("scribble-canvas");
    const ctx = canvas.getContext("2d");
    if (ctx === null || this.canvasState === null) return;
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (this.baseImage !== null && this.baseImage.complete) {
      ctx.drawImage(this.baseImage, 0, 0, canvas.width, canvas.height);
    }
    ctx.globalAlpha = 0.85;
    for (const markerId of this.canvasState.markerIds()) {
      ctx.fillStyle = this.markerColor(markerId);
      for (const [row, col] of this.canvasState.pixelsOf(markerId)) {
        ctx.fillRect(col * SCALE, row * SCALE, SCALE, SCALE);
      }
    }
    ctx.globalAlpha = 1.0;
  }

  private pointerToImage(event: PointerEvent): PathPoint {
    const rect = (event.target as HTMLCanvasElement).getBoundingClientRect();
    return {
      x: (event.clientX - rect.left) / SCALE,
      y: (event.clientY - rect.top) / SCALE,
    };
  }

  penDown(event: PointerEvent): void {
    if (this.canvasState === null) return;
    this.canvasState.brushRadius = Number(el<HTMLInputElement>("brush-radius").value);
    this.canvasState.currentMarker = Number(el<HTMLInputElement>("marker-id").value);
    this.drawing = [this.pointerToImage(event)];
    (event.target as HTMLCanvasElement).setPointerCapture(event.pointerId);
  }

  penMove(event: PointerEvent): void {
    if (this.drawing === null) return;
    this.drawing.push(this.pointerToImage(event));
    this.previewStrokeSegment();
  }

  private previewStrokeSegment(): void {
    // live feedback without mutating state: draw the in-flight path only
    const canvas = el<HTMLCanvasElement>("scribble-canvas");
    const ctx = canvas.getContext("2d");
    if (ctx === null || this.drawing === null || this.canvasState === null) return;
    ctx.strokeStyle = this.markerColor(this.canvasState.currentMarker);
    ctx.lineWidth = this.canvasState.brushRadius * SCALE * 0.6;
    ctx.lineCap = "round";
    ctx.beginPath();
    const [first, ...rest] = this.drawing;
    ctx.moveTo(first.x * SCALE, first.y * SCALE);
    for (const p of rest) ctx.lineTo(p.x * SCALE, p.y * SCALE);
    ctx.stroke();
  }

  async penUp(): Promise<void> {
    if (this.drawing === null || this.canvasState === null) return;
    const path = this.drawing;
    this.drawing = null;
    const added = this.canvasState.applyStroke(path);
    this.redrawCanvas();
    if (added.length > 0) {
      this.status(`stroke added ${added.length} pixel(s) to marker `
        + `${this.canvasState.currentMarker}; save to persist`);
    }
  }

  undoStroke(): void {
    if (this.canvasState === null) return;
    if (this.canvasState.undo()) {
      this.redrawCanvas();
      this.status("stroke undone");
    }
  }

  async saveMarkers(): Promise<void> {
    if (this.project === null || this.canvasState === null) return;
    const payload = this.canvasState.toMarkerSetJson();
    const ok = await this.guard(() =>
      this.api.putMarkers(this.project!.id, payload.image_id, payload.markers));
    if (ok === null) return;
    const refreshed = await this.guard(() => this.api.getProject(this.project!.id));
    if (refreshed !== null) {
      this.project = refreshed;
      this.activeLayer = refreshed.layers.length;
      this.renderImageList();
      this.renderLayerList();
    }
    this.status("markers saved; estimated layers were invalidated");
  }

  private readSpec(): LayerSpec {
    return {
      kernel_size: Number(el<HTMLInputElement>("spec-kernel").value),
      dilation: Number(el<HTMLInputElement>("spec-dilation").value),
      kernels_per_marker: Number(el<HTMLInputElement>("spec-km").value),
      kernels_total: Number(el<HTMLInputElement>("spec-kl").value),
      pooling: {
        kind: el<HTMLSelectElement>("spec-pool-kind").value as "max" | "average",
        window: Number(el<HTMLInputElement>("spec-pool-window").value),
      },
    };
  }

  async addLayer(): Promise<void> {
    if (this.project === null) return;
    this.status("estimating kernels...");
    const response = await this.guard(() => this.api.addLayer(this.project!.id, this.readSpec()));
    if (response === null) return;
    let job = await this.guard(() => this.api.getJob(this.project!.id, response.job_id));
    while (job !== null && job.status === "running") {
      await new Promise((resolve) => setTimeout(resolve, 250));
      job = await this.guard(() => this.api.getJob(this.project!.id, response.job_id));
    }
    if (job === null || job.status !== "done") {
      this.status(`layer estimation failed: ${job?.error ?? "unknown"}`, true);
      return;
    }
    const refreshed = await this.guard(() => this.api.getProject(this.project!.id));
    if (refreshed === null) return;
    this.project = refreshed;
    this.activeLayer = response.layer;
    this.renderLayerList();
    this.status(`layer ${response.layer} built with ${response.candidates} candidate kernel(s)`);
    await this.refreshGallery();
    await this.refreshPreview();
  }

  async removeLayer(index: number): Promise<void> {
    if (this.project === null) return;
    const ok = await this.guard(() => this.api.deleteLayer(this.project!.id, index));
    if (ok === null) return;
    const refreshed = await this.guard(() => this.api.getProject(this.project!.id));
    if (refreshed === null) return;
    this.project = refreshed;
    this.activeLayer = refreshed.layers.length;
    this.renderLayerList();
    this.gallery = null;
    el<HTMLDivElement>("kernel-gallery").replaceChildren();
    this.status(`removed layer ${index} and everything after it`);
    if (this.activeLayer > 0) {
      await this.refreshGallery();
      await this.refreshPreview();
    }
  }

  renderLayerList(): void {
    const list = el<HTMLUListElement>("layer-list");
    list.replaceChildren();
    for (const layer of this.project?.layers ?? []) {
      const item = document.createElement("li");
      item.className = layer.index === this.activeLayer ? "active" : "";
      const label = document.createElement("span");
      label.textContent = `layer ${layer.index}: ${layer.selected.length}/${layer.candidates} kernels, `
        + `k=${layer.spec.kernel_size} d=${layer.spec.dilation} ${layer.spec.pooling.kind}${layer.spec.pooling.window}`;
      label.onclick = () => {
        this.activeLayer = layer.index;
        this.renderLayerList();
        void this.refreshGallery().then(() => this.refreshPreview());
      };
      const remove = document.createElement("button");
      remove.textContent = "remove";
      remove.onclick = () => void this.removeLayer(layer.index);
      item.append(label, " ", remove);
      list.append(item);
    }
  }

  async refreshGallery(): Promise<void> {
    if (this.project === null || this.activeImage === null || this.activeLayer === 0) return;
    const response = await this.guard(() =>
      this.api.getKernels(this.project!.id, this.activeLayer, this.activeImage!));
    if (response === null) return;
    this.gallery = new GalleryState(this.activeLayer);
    this.gallery.fromResponse(response.kernels);
    this.renderGallery();
  }

  renderGallery(): void {
    const grid = el<HTMLDivElement>("kernel-gallery");
    grid.replaceChildren();
    if (this.gallery === null) return;
    for (const card of this.gallery.cards) {
      const cell = document.createElement("div");
      cell.className = "kernel-card";
      const img = document.createElement("img");
      img.src = this.api.thumbUrl(card.thumb);
      img.title = card.provenance;
      const badge = document.createElement("span");
      badge.textContent = this.gallery.badgeFor(card.index);
      badge.className = `badge sign${card.sign}`;
      const mean = document.createElement("span");
      mean.className = "mean";
      mean.textContent = card.mean.toFixed(3);
      const checkbox = document.createElement("input");
      checkbox.type = "checkbox";
      checkbox.checked = card.selected;
      checkbox.onchange = () => void this.onToggle(card.index, checkbox);
      const row = document.createElement("div");
      row.append(checkbox, badge, mean);
      cell.append(img, row);
      grid.append(cell);
    }
  }

  async onToggle(index: number, checkbox: HTMLInputElement): Promise<void> {
    if (this.project === null || this.gallery === null || this.activeImage === null) return;
    const preview = await this.guard(() =>
      toggleKernel(this.api, this.gallery!, this.project!.id, this.activeImage!, index));
    checkbox.checked = this.gallery.cards.find((c) => c.index === index)?.selected ?? false;
    if (preview === null) return; // rolled back; status already shows why
    this.drawPreview(preview);
    const refreshed = await this.guard(() => this.api.getProject(this.project!.id));
    if (refreshed !== null) {
      this.project = refreshed;
      this.renderLayerList();
    }
    this.status(`kernel ${index} toggled; ${this.gallery.selection().length} selected`);
  }

  async refreshPreview(): Promise<void> {
    if (this.project === null || this.activeImage === null || this.activeLayer === 0) return;
    const preview = await this.guard(() =>
      this.api.getSaliency(this.project!.id, this.activeLayer, this.activeImage!));
    if (preview !== null) this.drawPreview(preview);
  }

  drawPreview(preview: { width: number; height: number; saliency_png: string;
                         boxes: { x1: number; y1: number; x2: number; y2: number }[];
                         gt_boxes: { x1: number; y1: number; x2: number; y2: number }[]; }): void {
    const canvas = el<HTMLCanvasElement>("preview-canvas");
    canvas.width = preview.width * SCALE;
    canvas.height = preview.height * SCALE;
    const ctx = canvas.getContext("2d");
    if (ctx === null) return;
    const img = new Image();
    img.onload = () => {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
      ctx.lineWidth = 2;
      for (const { rect, color } of overlayRects(preview.gt_boxes, preview.boxes)) {
        ctx.strokeStyle = color;
        ctx.strokeRect(rect.x1 * SCALE, rect.y1 * SCALE,
                       (rect.x2 - rect.x1) * SCALE, (rect.y2 - rect.y1) * SCALE);
      }
    };
    img.src = `data:image/png;base64,${preview.saliency_png}`;
  }

  async exportModel(): Promise<void> {
    if (this.project === null) return;
    const result = await this.guard(() => this.api.exportModel(this.project!.id));
    if (result !== null) this.status(`model exported to ${result.path}`);
  }
}

new App().mount();
