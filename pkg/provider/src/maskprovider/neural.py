"""Skeleton for wrapping a neural segmentation model as a provider backend.

No weights ship with this package.  To serve a real model, subclass
``NeuralBackend`` (or pass ``infer``) so that it maps a native-resolution
grayscale array plus point prompts to one or more (likelihood, score)
pairs, then register it in ``backends.make_backend`` or run ``serve``
directly:

    from maskprovider.neural import NeuralBackend
    from maskprovider.server import serve

    class MyModel(NeuralBackend):
        def load(self, checkpoint):
            ...  # build the network, load weights, move to device
        def infer(self, image_native, points):
            ...  # forward pass; return [(likelihood_hw, score), ...]

    serve(MyModel(checkpoint="weights.pt"), out_dir="masks")

The base class handles the protocol-required resizing: patch inputs are
upscaled to ``native_size`` before inference and the returned masks are
scaled back to the request resolution.
"""

from __future__ import annotations

import numpy as np

from .imaging import read_gray, resize_bilinear, resize_nearest_bool


class NeuralBackend:
    def __init__(self, checkpoint: str | None = None, native_size: int = 1024, threshold: float = 0.5):
        self.native_size = native_size
        self.threshold = threshold
        self.load(checkpoint)

    def load(self, checkpoint) -> None:
        """Load weights and prepare the model.  Override."""
        self.checkpoint = checkpoint

    def infer(self, image_native: np.ndarray, points) -> list[tuple[np.ndarray, float]]:
        """Run the model on one native-resolution image.  Override.

        Must return a non-empty list of (likelihood map in [0,1] at native
        resolution, quality score in [0,1]) pairs.
        """
        raise NotImplementedError(
            "NeuralBackend.infer is a skeleton; plug in a model to serve it"
        )

    def segment(self, image_path: str, points, scale: str) -> list[tuple[np.ndarray, float]]:
        img = read_gray(image_path)
        h, w = img.shape
        work = img
        sx = sy = 1.0
        if scale == "patch" or img.shape != (self.native_size, self.native_size):
            work = resize_bilinear(img, self.native_size, self.native_size)
            sx = self.native_size / w
            sy = self.native_size / h
        native_points = [(int(round(x * sx)), int(round(y * sy))) for x, y in points]
        out = []
        for likelihood, score in self.infer(work, native_points):
            bits = likelihood >= self.threshold
            if bits.shape != (h, w):
                bits = resize_nearest_bool(bits, h, w)
            out.append((bits, float(score)))
        return out
