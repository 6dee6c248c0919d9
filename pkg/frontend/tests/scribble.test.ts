import { describe, expect, it } from "vitest";

import { CanvasState, rasterizeStroke, stampDisk } from "../src/scribble.js";

describe("stampDisk", () => {
  it("radius 1 is a single pixel", () => {
    expect(stampDisk(5, 5, 1, 20, 20)).toEqual([[5, 5]]);
  });

  it("radius 3 fills the 5x5 square (all offsets within distance 3)", () => {
    expect(stampDisk(10, 10, 3, 64, 64).length).toBe(25);
  });

  it("radius 4 is a disk: edges in, far corners out", () => {
    const pixels = stampDisk(10, 10, 4, 64, 64);
    expect(pixels).toContainEqual([10, 10]);
    expect(pixels).toContainEqual([7, 10]); // distance 3 < 4
    expect(pixels).not.toContainEqual([7, 7]); // distance sqrt(18) >= 4
  });

  it("clips to the image bounds", () => {
    const pixels = stampDisk(0, 0, 3, 64, 64);
    for (const [row, col] of pixels) {
      expect(row).toBeGreaterThanOrEqual(0);
      expect(col).toBeGreaterThanOrEqual(0);
    }
    expect(pixels.length).toBeLessThan(stampDisk(10, 10, 3, 64, 64).length);
  });
});

describe("rasterizeStroke", () => {
  it("single click with radius 1 yields exactly one pixel", () => {
    expect(rasterizeStroke([{ x: 7, y: 9 }], 1, 32, 32)).toEqual([[9, 7]]);
  });

  it("produces distinct in-bounds pixels along a segment", () => {
    const pixels = rasterizeStroke(
      [{ x: -5, y: 2 }, { x: 40, y: 2 }], 2, 32, 32);
    const seen = new Set(pixels.map(([r, c]) => `${r},${c}`));
    expect(seen.size).toBe(pixels.length);
    for (const [row, col] of pixels) {
      expect(row).toBeGreaterThanOrEqual(0);
      expect(row).toBeLessThan(32);
      expect(col).toBeGreaterThanOrEqual(0);
      expect(col).toBeLessThan(32);
    }
    // the sweep covers the whole visible span of the row
    const cols = pixels.filter(([r]) => r === 2).map(([, c]) => c).sort((a, b) => a - b);
    expect(cols[0]).toBe(0);
    expect(cols[cols.length - 1]).toBe(31);
  });

  it("connects distant path points", () => {
    const pixels = rasterizeStroke(
      [{ x: 0, y: 0 }, { x: 20, y: 10 }], 1, 32, 32);
    // every step along the line contributes: no gaps larger than 1 column
    const cols = new Set(pixels.map(([, c]) => c));
    for (let c = 0; c <= 20; c++) expect(cols.has(c)).toBe(true);
  });
});

describe("CanvasState", () => {
  it("appends strokes to the current marker and dedupes", () => {
    const state = new CanvasState("img", 32, 32);
    state.currentMarker = 4;
    const added = state.applyStroke([{ x: 5, y: 5 }], 2);
    expect(added.length).toBeGreaterThan(0);
    const again = state.applyStroke([{ x: 5, y: 5 }], 2);
    expect(again).toEqual([]);
    expect(state.pixelsOf(4).length).toBe(added.length);
  });

  it("undo restores the exact prior marker set", () => {
    const state = new CanvasState("img", 32, 32);
    state.currentMarker = 1;
    state.applyStroke([{ x: 3, y: 3 }], 2);
    const before = JSON.stringify(state.toMarkerSetJson());
    state.currentMarker = 2;
    state.applyStroke([{ x: 10, y: 10 }, { x: 14, y: 12 }], 3);
    expect(JSON.stringify(state.toMarkerSetJson())).not.toBe(before);
    expect(state.undo()).toBe(true);
    expect(JSON.stringify(state.toMarkerSetJson())).toBe(before);
    expect(state.undo()).toBe(true);
    expect(state.toMarkerSetJson().markers).toEqual([]);
    expect(state.undo()).toBe(false);
  });

  it("round-trips through the wire format", () => {
    const state = new CanvasState("img", 32, 32);
    state.currentMarker = 9;
    state.applyStroke([{ x: 8, y: 8 }, { x: 12, y: 9 }], 3);
    const wire = state.toMarkerSetJson();
    const clone = new CanvasState("img", 32, 32);
    clone.loadFrom(wire);
    expect(clone.toMarkerSetJson()).toEqual(wire);
  });

  it("canonical form sorts markers and pixels", () => {
    const state = new CanvasState("img", 16, 16);
    state.loadFrom({
      image_id: "img",
      markers: [
        { marker_id: 5, pixels: [[3, 2], [1, 9], [1, 2]] },
        { marker_id: 2, pixels: [[0, 0]] },
      ],
    });
    const wire = state.toMarkerSetJson();
    expect(wire.markers.map((m) => m.marker_id)).toEqual([2, 5]);
    expect(wire.markers[1].pixels).toEqual([[1, 2], [1, 9], [3, 2]]);
  });
});
