// Kernel gallery state: thumbnails, sign badges, and checkbox selection
// that always reconverges to the server's acknowledged state.

import type { ApiClient, KernelInfo, SaliencyResponse } from "./api.js";

export interface KernelCard {
  index: number;
  provenance: string;
  mean: number;
  std: number;
  sign: -1 | 0 | 1;
  selected: boolean;
  thumb: string;
}

export class EmptySelectionError extends Error {
  constructor() {
    super("at least one kernel must stay selected");
  }
}

export class GalleryState {
  cards: KernelCard[] = [];
  /** Last selection the server acknowledged. */
  ackSelection: number[] = [];

  constructor(public layer: number) {}

  fromResponse(kernels: KernelInfo[]): void {
    this.cards = kernels.map((k) => ({
      index: k.index,
      provenance: k.provenance,
      mean: k.mean_activation,
      std: k.std_activation,
      sign: k.sign,
      selected: k.selected,
      thumb: k.thumb,
    }));
    this.ackSelection = this.cards.filter((c) => c.selected).map((c) => c.index);
  }

  selection(): number[] {
    return this.cards.filter((c) => c.selected).map((c) => c.index).sort((a, b) => a - b);
  }

  /** Flip one checkbox locally. Throws before any network traffic when the
   * flip would leave nothing selected (mirrors the server's 422). */
  toggle(index: number): number[] {
    const card = this.cards.find((c) => c.index === index);
    if (card === undefined) throw new Error(`no kernel ${index} in gallery`);
    if (card.selected && this.selection().length === 1) {
      throw new EmptySelectionError();
    }
    card.selected = !card.selected;
    return this.selection();
  }

  acknowledge(selected: number[]): void {
    const kept = new Set(selected);
    for (const card of this.cards) card.selected = kept.has(card.index);
    this.ackSelection = [...selected].sort((a, b) => a - b);
  }

  rollback(): void {
    this.acknowledge(this.ackSelection);
  }

  badgeFor(index: number): "+" | "-" | "0" {
    const card = this.cards.find((c) => c.index === index);
    if (card === undefined) throw new Error(`no kernel ${index} in gallery`);
    return card.sign > 0 ? "+" : card.sign < 0 ? "-" : "0";
  }
}

/** Optimistically toggle a kernel, push the selection, and refetch the
 * saliency preview once. Rolls the checkbox back if the server rejects. */
export async function toggleKernel(
  api: ApiClient,
  gallery: GalleryState,
  pid: string,
  img: string,
  index: number,
): Promise<SaliencyResponse> {
  const wanted = gallery.toggle(index); // throws EmptySelectionError before I/O
  try {
    const ack = await api.putSelection(pid, gallery.layer, wanted);
    gallery.acknowledge(ack.selected);
  } catch (error) {
    gallery.rollback();
    throw error;
  }
  return api.getSaliency(pid, gallery.layer, img);
}
