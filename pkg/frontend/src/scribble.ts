// Scribble drawing state: disk-swept stroke rasterization, per-marker
// pixel sets, and snapshot-based undo. All geometry is in image pixels
// ([row, col]); the wire format stays plain pixel lists.

import type { MarkerJson, MarkerSetJson, Pixel } from "./api.js";

export interface PathPoint {
  x: number; // col
  y: number; // row
}

const keyOf = (p: Pixel) => p[0] * 1_000_000 + p[1];

/** Pixels of a disk of the given radius stamped at (row, col), clipped
 * to the image. Radius 1 is a single pixel. */
export function stampDisk(row: number, col: number, radius: number,
                          width: number, height: number): Pixel[] {
  const out: Pixel[] = [];
  const r = Math.max(1, Math.floor(radius));
  for (let dr = -r + 1; dr <= r - 1; dr++) {
    for (let dc = -r + 1; dc <= r - 1; dc++) {
      if (dr * dr + dc * dc >= r * r) continue;
      const rr = row + dr;
      const cc = col + dc;
      if (rr >= 0 && rr < height && cc >= 0 && cc < width) out.push([rr, cc]);
    }
  }
  return out;
}

/** Rasterize a polyline swept by a disk brush into distinct in-bounds pixels. */
export function rasterizeStroke(path: PathPoint[], radius: number,
                                width: number, height: number): Pixel[] {
  const seen = new Set<number>();
  const out: Pixel[] = [];
  const stamp = (x: number, y: number) => {
    for (const pixel of stampDisk(Math.round(y), Math.round(x), radius, width, height)) {
      const key = keyOf(pixel);
      if (!seen.has(key)) {
        seen.add(key);
        out.push(pixel);
      }
    }
  };
  if (path.length === 0) return out;
  stamp(path[0].x, path[0].y);
  for (let i = 1; i < path.length; i++) {
    const a = path[i - 1];
    const b = path[i];
    const steps = Math.max(Math.abs(b.x - a.x), Math.abs(b.y - a.y), 1);
    for (let s = 1; s <= steps; s++) {
      const t = s / steps;
      stamp(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
    }
  }
  return out;
}

/** Per-image drawing state with an undo stack of marker-set snapshots. */
export class CanvasState {
  brushRadius = 3;
  currentMarker = 1;
  private markers = new Map<number, Pixel[]>();
  private undoStack: MarkerJson[][] = [];

  constructor(
    public readonly imageId: string,
    public readonly width: number,
    public readonly height: number,
  ) {}

  loadFrom(markerSet: MarkerSetJson): void {
    this.markers = new Map(
      markerSet.markers.map((m) => [m.marker_id, m.pixels.map((p) => [...p] as Pixel)]),
    );
    this.undoStack = [];
  }

  /** Append a rasterized stroke to the current marker. Returns the pixels
   * actually added (new, in-bounds, not already in the marker). */
  applyStroke(path: PathPoint[], radius = this.brushRadius): Pixel[] {
    const pixels = rasterizeStroke(path, radius, this.width, this.height);
    const existing = this.markers.get(this.currentMarker) ?? [];
    const present = new Set(existing.map(keyOf));
    const added = pixels.filter((p) => !present.has(keyOf(p)));
    if (added.length === 0) return [];
    this.undoStack.push(this.snapshot());
    this.markers.set(this.currentMarker, existing.concat(added));
    return added;
  }

  /** Restore the exact marker set from before the last stroke. */
  undo(): boolean {
    const prior = this.undoStack.pop();
    if (prior === undefined) return false;
    this.markers = new Map(prior.map((m) => [m.marker_id, m.pixels.map((p) => [...p] as Pixel)]));
    return true;
  }

  clearMarker(markerId: number): void {
    if (!this.markers.has(markerId)) return;
    this.undoStack.push(this.snapshot());
    this.markers.delete(markerId);
  }

  markerIds(): number[] {
    return [...this.markers.keys()].sort((a, b) => a - b);
  }

  pixelsOf(markerId: number): readonly Pixel[] {
    return this.markers.get(markerId) ?? [];
  }

  snapshot(): MarkerJson[] {
    return this.markerIds().map((id) => ({
      marker_id: id,
      pixels: (this.markers.get(id) ?? []).map((p) => [...p] as Pixel),
    }));
  }

  /** Canonical wire form: markers sorted by id, pixels sorted (row, col). */
  toMarkerSetJson(): MarkerSetJson {
    return {
      image_id: this.imageId,
      markers: this.snapshot().map((m) => ({
        marker_id: m.marker_id,
        pixels: [...m.pixels].sort((a, b) => a[0] - b[0] || a[1] - b[1]),
      })),
    };
  }
}
