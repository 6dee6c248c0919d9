// Box overlay compositing: ground truth in yellow, predictions in
// orange, their intersections in green. Pure rectangle math here; the
// canvas drawing lives in app.ts.

import type { BoxJson } from "./api.js";

export interface Rect {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export type OverlayColor = "yellow" | "orange" | "green";

export interface OverlayRect {
  rect: Rect;
  color: OverlayColor;
}

export function intersect(a: Rect, b: Rect): Rect | null {
  const x1 = Math.max(a.x1, b.x1);
  const y1 = Math.max(a.y1, b.y1);
  const x2 = Math.min(a.x2, b.x2);
  const y2 = Math.min(a.y2, b.y2);
  return x2 > x1 && y2 > y1 ? { x1, y1, x2, y2 } : null;
}

/** Draw order: ground truth, predictions, then intersections on top. */
export function overlayRects(gt: BoxJson[], preds: BoxJson[]): OverlayRect[] {
  const out: OverlayRect[] = [];
  for (const box of gt) out.push({ rect: box, color: "yellow" });
  for (const box of preds) out.push({ rect: box, color: "orange" });
  for (const g of gt) {
    for (const p of preds) {
      const both = intersect(g, p);
      if (both !== null) out.push({ rect: both, color: "green" });
    }
  }
  return out;
}
