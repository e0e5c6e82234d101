"""
Network layers with explicit forward and backward passes over NHWC batches.

Every layer's `forward` returns its output and a cache; `backward` takes the
upstream gradient and the cache and returns (input gradient, parameter
gradients). Parameter gradients are summed over the batch.
"""
from typing import Dict, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ghostflare.exceptions import DimMismatch

Shape = Tuple[int, ...]


class Layer:
    kind = "layer"

    def params(self) -> Dict[str, np.ndarray]:
        return {}

    def output_shape(self, input_shape: Shape) -> Shape:
        return input_shape

    def forward(self, x: np.ndarray):
        raise NotImplementedError

    def backward(self, grad: np.ndarray, cache):
        raise NotImplementedError

    def describe(self) -> Dict:
        return {"type": self.kind}


class Conv2D(Layer):
    """Valid (unpadded) convolution; weights shaped (kh, kw, c_in, c_out)."""

    kind = "conv"

    def __init__(self, weights: np.ndarray, bias: np.ndarray, stride: int = 1):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.stride = int(stride)
        if self.weights.ndim != 4 or self.bias.shape != (self.weights.shape[3],):
            raise DimMismatch(f"conv weights {self.weights.shape} / bias {self.bias.shape} are inconsistent")

    def params(self):
        return {"weights": self.weights, "bias": self.bias}

    def output_shape(self, input_shape):
        h, w, c = input_shape
        kh, kw, c_in, c_out = self.weights.shape
        if c != c_in or h < kh or w < kw:
            raise DimMismatch(f"conv {self.weights.shape} cannot take input {input_shape}")
        return ((h - kh) // self.stride + 1, (w - kw) // self.stride + 1, c_out)

    def _windows(self, x):
        kh, kw = self.weights.shape[:2]
        windows = sliding_window_view(x, (kh, kw), axis=(1, 2))
        # (n, oh, ow, c, kh, kw)
        return windows[:, :: self.stride, :: self.stride]

    def forward(self, x):
        windows = self._windows(x)
        out = np.einsum("nhwcij,ijcd->nhwd", windows, self.weights, optimize=True) + self.bias
        return out, (x.shape, windows)

    def backward(self, grad, cache):
        input_shape, windows = cache
        kh, kw = self.weights.shape[:2]
        s = self.stride
        grad_w = np.einsum("nhwcij,nhwd->ijcd", windows, grad, optimize=True)
        grad_b = grad.sum(axis=(0, 1, 2))
        # (n, oh, ow, kh, kw, c)
        patches = np.einsum("nhwd,ijcd->nhwijc", grad, self.weights, optimize=True)
        grad_x = np.zeros(input_shape)
        oh, ow = grad.shape[1:3]
        for i in range(kh):
            for j in range(kw):
                grad_x[:, i : i + s * oh : s, j : j + s * ow : s, :] += patches[:, :, :, i, j, :]
        return grad_x, {"weights": grad_w, "bias": grad_b}

    def describe(self):
        return {"type": self.kind, "stride": self.stride, "shape": list(self.weights.shape)}


class Dense(Layer):
    """Affine layer on flat vectors; weights shaped (n_in, n_out)."""

    kind = "dense"

    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise DimMismatch(f"dense weights {self.weights.shape} / bias {self.bias.shape} are inconsistent")

    def params(self):
        return {"weights": self.weights, "bias": self.bias}

    def output_shape(self, input_shape):
        if len(input_shape) != 1 or input_shape[0] != self.weights.shape[0]:
            raise DimMismatch(f"dense {self.weights.shape} cannot take input {input_shape}")
        return (self.weights.shape[1],)

    def forward(self, x):
        return x @ self.weights + self.bias, x

    def backward(self, grad, cache):
        x = cache
        return grad @ self.weights.T, {"weights": x.T @ grad, "bias": grad.sum(axis=0)}

    def describe(self):
        return {"type": self.kind, "shape": list(self.weights.shape)}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, grad, cache):
        return grad * cache, {}


class MaxPool(Layer):
    """Non-overlapping size x size max pooling; ties go to the first window element."""

    kind = "maxpool"

    def __init__(self, size: int = 2):
        self.size = int(size)

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if h < self.size or w < self.size:
            raise DimMismatch(f"maxpool {self.size} cannot take input {input_shape}")
        return (h // self.size, w // self.size, c)

    def forward(self, x):
        n, h, w, c = x.shape
        k = self.size
        oh, ow = h // k, w // k
        blocks = x[:, : oh * k, : ow * k].reshape(n, oh, k, ow, k, c).transpose(0, 1, 3, 5, 2, 4)
        flat = blocks.reshape(n, oh, ow, c, k * k)
        index = np.argmax(flat, axis=-1)
        out = np.take_along_axis(flat, index[..., None], axis=-1)[..., 0]
        return out, (x.shape, index)

    def backward(self, grad, cache):
        input_shape, index = cache
        n, h, w, c = input_shape
        k = self.size
        oh, ow = grad.shape[1:3]
        flat = np.zeros((n, oh, ow, c, k * k))
        np.put_along_axis(flat, index[..., None], grad[..., None], axis=-1)
        blocks = flat.reshape(n, oh, ow, c, k, k).transpose(0, 1, 4, 2, 5, 3).reshape(n, oh * k, ow * k, c)
        grad_x = np.zeros(input_shape)
        grad_x[:, : oh * k, : ow * k] = blocks
        return grad_x, {}

    def describe(self):
        return {"type": self.kind, "size": self.size}


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad, cache):
        return grad.reshape(cache), {}
