"""Flyweight CNNs built from image scribbles, with adaptive saliency decoding.

The pipeline: estimate convolutional kernels from user-drawn markers
(no backpropagation), decode activations into an object saliency map
with image-adaptive channel signs, and turn the map into scored
bounding boxes. See the README for the CLI and the interactive builder
service.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    FlimModel,
    GroundTruth,
    KernelBank,
    Layer,
    LayerSpec,
    Marker,
    MarkerSet,
    NormStats,
    Pooling,
    PostprocConfig,
)
from .detect import BoundingBox, DetectionSet  # noqa: F401
