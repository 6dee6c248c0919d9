"""Image-adaptive decoding of activations into an object saliency map.

A point-wise convolution with per-channel weights in {-1, 0, +1} adds
foreground-dominant activation maps and subtracts background-dominant
ones, followed by ReLU. The weights are recomputed for every input
image from its own channel statistics, under one of two heuristics:

* ``parasite``: a channel is foreground when its mean activation is at
  most 0.5 (small objects cover little area, so object channels have
  low means).
* ``ship``: foreground below mean-of-means minus its std, background
  above plus, neutral in between; channels with mid-range mean and low
  variance (mostly-gray maps) are also zeroed.

Both operate on per-channel min-max normalized activations in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import imops
from .encoder import run_encoder
from .model import FlimModel

NEUTRAL_BAND = (0.25, 0.75)
NEUTRAL_STD = 0.1


@dataclass
class ChannelStats:
    """Per-channel activation moments plus moments of the channel means."""

    mean: np.ndarray  # (m,) mean activation per channel
    std: np.ndarray   # (m,) population std per channel
    mean_of_means: float
    std_of_means: float


def channel_stats(activations: np.ndarray) -> ChannelStats:
    """Channel means/stds of a min-max normalized (h, w, m) activation tensor."""
    acts = np.asarray(activations, dtype=np.float64)
    mean = acts.mean(axis=(0, 1))
    std = acts.std(axis=(0, 1))
    return ChannelStats(mean=mean, std=std,
                        mean_of_means=float(mean.mean()),
                        std_of_means=float(mean.std()))


def adapt_weights_hp(stats: ChannelStats, lam: float = 0.5) -> np.ndarray:
    """Small-object heuristic: +1 when a channel's mean is <= lam, else -1."""
    return np.where(stats.mean <= lam, 1, -1).astype(np.int8)


def adapt_weights_hs(stats: ChannelStats) -> np.ndarray:
    """Spread-based heuristic with a neutral band for uncertain channels.

    Foreground below mean_of_means - std_of_means, background above
    mean_of_means + std_of_means, zero in between. Channels with mean in
    [0.25, 0.75] and std below 0.1 are zeroed regardless (no distinctly
    salient region).
    """
    lo = stats.mean_of_means - stats.std_of_means
    hi = stats.mean_of_means + stats.std_of_means
    alpha = np.zeros(len(stats.mean), dtype=np.int8)
    alpha[stats.mean >= hi] = -1
    # foreground test runs first, so it wins when both bounds coincide
    alpha[stats.mean <= lo] = 1
    gray = ((stats.mean >= NEUTRAL_BAND[0]) & (stats.mean <= NEUTRAL_BAND[1])
            & (stats.std < NEUTRAL_STD))
    alpha[gray] = 0
    return alpha


def adapt_weights(stats: ChannelStats, heuristic: str) -> np.ndarray:
    if heuristic == "parasite":
        return adapt_weights_hp(stats)
    if heuristic == "ship":
        return adapt_weights_hs(stats)
    raise ValueError(f"unknown heuristic {heuristic!r}")


def decode(activations: np.ndarray, alpha: np.ndarray,
           normalize: bool = True) -> np.ndarray:
    """Signed channel sum followed by ReLU: S = relu(sum_b alpha_b * A_b).

    With normalize=True (the default) the map is min-max rescaled to
    [0, 1] for downstream Otsu thresholding.
    """
    alpha = np.asarray(alpha)
    if alpha.ndim != 1 or alpha.shape[0] != activations.shape[2]:
        raise ValueError(
            f"weight vector length {alpha.shape} does not match "
            f"{activations.shape[2]} channels")
    if not np.all(np.isin(alpha, (-1, 0, 1))):
        raise ValueError("weights must be in {-1, 0, +1}")
    acc = np.tensordot(activations.astype(np.float64), alpha.astype(np.float64),
                       axes=([2], [0]))
    sal = np.maximum(acc, 0.0).astype(np.float32)
    if normalize:
        sal = imops.minmax_normalize_channels(sal[:, :, np.newaxis])[:, :, 0]
    return sal


def decode_image(image: np.ndarray, model: FlimModel,
                 layer: int | None = None) -> np.ndarray:
    """Saliency map of an image at the output of a given layer (1-based).

    Runs the encoder, min-max normalizes the activations per channel,
    derives this image's own weight vector with the model's heuristic,
    and decodes. Defaults to the deepest layer.
    """
    acts = run_encoder(image, model, layer)
    acts = imops.minmax_normalize_channels(acts)
    stats = channel_stats(acts)
    alpha = adapt_weights(stats, model.heuristic)
    return decode(acts, alpha)
