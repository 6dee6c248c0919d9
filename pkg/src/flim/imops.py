"""Low-level raster operations: patches, convolution, pooling, normalization, PNG I/O.

Images are numpy arrays of shape (h, w, c), float32, row-major
[row][col][channel]. All spatial operations use zero padding and no
stride, so height and width are preserved everywhere. Dot products
accumulate in float64 and results are stored back as float32.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def as_image(data: np.ndarray) -> np.ndarray:
    """Validate and coerce an array to a (h, w, c) float32 image tensor."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    if arr.ndim != 3:
        raise ValueError(f"image must be (h, w, c), got shape {arr.shape}")
    h, w, c = arr.shape
    if h < 1 or w < 1 or c < 1:
        raise ValueError(f"image dimensions must be >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains NaN or Inf")
    return arr


def extract_patch(image: np.ndarray, row: int, col: int, size: int,
                  dilation: int = 1) -> np.ndarray:
    """Extract the flattened k*k*c patch centered at (row, col).

    Samples at offsets (dr*dilation, dc*dilation) for dr, dc in
    [-(k-1)/2, (k-1)/2]; samples falling outside the image are zero.
    """
    h, w, c = image.shape
    if size < 1 or size % 2 == 0:
        raise ValueError(f"patch size must be odd, got {size}")
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    if not (0 <= row < h and 0 <= col < w):
        raise ValueError(f"patch center ({row}, {col}) outside {h}x{w} image")
    r = (size - 1) // 2
    patch = np.zeros((size, size, c), dtype=np.float32)
    for i, dr in enumerate(range(-r, r + 1)):
        rr = row + dr * dilation
        if not 0 <= rr < h:
            continue
        for j, dc in enumerate(range(-r, r + 1)):
            cc = col + dc * dilation
            if 0 <= cc < w:
                patch[i, j, :] = image[rr, cc, :]
    return patch.reshape(-1)


def im2col(image: np.ndarray, size: int, dilation: int = 1) -> np.ndarray:
    """All patches of an image at once, as an (h, w, k*k*c) tensor.

    Row (i, j) of the result equals extract_patch(image, i, j, size, dilation).
    """
    h, w, c = image.shape
    if size < 1 or size % 2 == 0:
        raise ValueError(f"patch size must be odd, got {size}")
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    r = (size - 1) // 2
    pad = r * dilation
    padded = np.pad(image, ((pad, pad), (pad, pad), (0, 0)))
    cols = np.empty((h, w, size * size * c), dtype=image.dtype)
    idx = 0
    for dr in range(size):
        for dc in range(size):
            rr, cc = dr * dilation, dc * dilation
            cols[:, :, idx:idx + c] = padded[rr:rr + h, cc:cc + w, :]
            idx += c
    return cols


def convolve(image: np.ndarray, kernels: np.ndarray,
             dilation: int = 1) -> np.ndarray:
    """Convolve an image with a bank of (m, k, k, c) kernels.

    Output (i, j, b) is the dot product of the flattened patch at (i, j)
    with the flattened kernel b. Zero padding, no stride: output is
    (h, w, m).
    """
    kernels = np.asarray(kernels, dtype=np.float32)
    if kernels.ndim != 4:
        raise ValueError(f"kernel bank must be (m, k, k, c), got {kernels.shape}")
    m, k, k2, c = kernels.shape
    if k != k2 or k % 2 == 0:
        raise ValueError(f"kernels must be square with odd side, got {k}x{k2}")
    if c != image.shape[2]:
        raise ValueError(
            f"kernel channels ({c}) do not match image channels ({image.shape[2]})")
    h, w = image.shape[:2]
    cols = im2col(image, k, dilation).reshape(h * w, -1)
    flat = kernels.reshape(m, -1).T
    out = cols.astype(np.float64) @ flat.astype(np.float64)
    return out.reshape(h, w, m).astype(np.float32)


def relu(image: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(image, 0.0).astype(np.float32, copy=False)


def pool(image: np.ndarray, kind: str, window: int) -> np.ndarray:
    """Max- or average-pool with an s x s window, stride 1, same spatial size.

    Out-of-image samples are ignored: max takes the maximum of valid
    samples, average divides by the valid-sample count (so borders are
    not darkened by zero padding).
    """
    if window < 1:
        raise ValueError(f"pooling window must be >= 1, got {window}")
    if kind not in ("max", "average"):
        raise ValueError(f"pooling kind must be 'max' or 'average', got {kind!r}")
    if window == 1:
        return image.copy()
    h, w, c = image.shape
    lo = (window - 1) // 2
    hi = window // 2
    if kind == "max":
        padded = np.pad(image, ((lo, hi), (lo, hi), (0, 0)),
                        constant_values=-np.inf)
        out = np.full((h, w, c), -np.inf, dtype=np.float32)
        for dr in range(window):
            for dc in range(window):
                np.maximum(out, padded[dr:dr + h, dc:dc + w, :], out=out)
        return out
    padded = np.pad(image, ((lo, hi), (lo, hi), (0, 0)))
    ones = np.pad(np.ones((h, w), dtype=np.float64), ((lo, hi), (lo, hi)))
    acc = np.zeros((h, w, c), dtype=np.float64)
    cnt = np.zeros((h, w), dtype=np.float64)
    for dr in range(window):
        for dc in range(window):
            acc += padded[dr:dr + h, dc:dc + w, :]
            cnt += ones[dr:dr + h, dc:dc + w]
    return (acc / cnt[:, :, np.newaxis]).astype(np.float32)


def minmax_normalize_channels(image: np.ndarray) -> np.ndarray:
    """Map each channel independently to [0, 1]; constant channels become 0."""
    mn = image.min(axis=(0, 1))
    mx = image.max(axis=(0, 1))
    rng = mx - mn
    safe = rng > 0
    out = (image - mn) / np.where(safe, rng, 1.0)
    out[:, :, ~safe] = 0.0
    return out.astype(np.float32)


def load_png(path) -> np.ndarray:
    """Load an 8-bit grayscale or RGB PNG as a float32 image in [0, 1]."""
    with Image.open(path) as img:
        if img.mode != "L":
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    return arr


def save_png_gray(map2d: np.ndarray, path) -> None:
    """Save a single-channel [0, 1] map as an 8-bit grayscale PNG."""
    arr = np.asarray(map2d, dtype=np.float32)
    if arr.ndim == 3:
        if arr.shape[2] != 1:
            raise ValueError(f"expected single channel, got shape {arr.shape}")
        arr = arr[:, :, 0]
    data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def png_gray_bytes(map2d: np.ndarray) -> bytes:
    """Encode a single-channel [0, 1] map as PNG bytes."""
    import io

    buf = io.BytesIO()
    save_png_gray(map2d, buf)
    return buf.getvalue()
