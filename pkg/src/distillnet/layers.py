"""Layer vocabulary: conv, max-pool, fully-connected, batchnorm, dropout, relu, softmax.

All arithmetic is float64. Activations travel as (N, C, H, W) until a
fully-connected layer flattens them to (N, features). Each layer caches what
its backward pass needs only when the stack is in train mode; eval-mode
forwards leave no state behind.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError, StateError


def softmax(logits):
    """Row-wise softmax of a (N, K) array, shifted by the row max for stability."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"softmax expects a 2-d array, got shape {z.shape}")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class Layer:
    """Base layer: holds parameters, their gradients, and a forward cache."""

    kind = "?"

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.cache = None
        self.in_shape = None
        self.out_shape = None

    def param_items(self):
        """Trainable arrays in a fixed order."""
        return list(self.params.items())

    def state_items(self):
        """All persistent arrays (trainable plus running statistics)."""
        return self.param_items()

    def forward(self, x, train, rng):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _need_cache(self):
        if self.cache is None:
            raise StateError(f"{self.kind}: backward called without a train-mode forward")
        return self.cache


def _im2col(x, k, pad):
    """Unfold k*k patches of a padded (N, C, H, W) array into rows.

    Returns (cols, oh, ow) where cols has shape (N*oh*ow, C*k*k) and row
    (n*oh*ow + i*ow + j) holds the patch producing output pixel (i, j).
    """
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = h + 2 * pad - k + 1
    ow = w + 2 * pad - k + 1
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # (n, c, oh, ow, k, k)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
    return np.ascontiguousarray(cols), oh, ow


class Conv2d(Layer):
    """2-d convolution (cross-correlation), stride 1, zero padding k//2.

    Weights are He-initialized: W ~ N(0, sqrt(2 / fan_in)) with
    fan_in = in_channels * k * k, biases start at zero.
    """

    kind = "c"

    def __init__(self, in_channels, out_channels, kernel, rng):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.pad = kernel // 2
        fan_in = in_channels * kernel * kernel
        self.params["weight"] = rng.normal(
            0.0, np.sqrt(2.0 / fan_in), (out_channels, in_channels, kernel, kernel)
        )
        self.params["bias"] = np.zeros(out_channels)

    def forward(self, x, train, rng):
        w = self.params["weight"]
        cols, oh, ow = _im2col(x, self.kernel, self.pad)
        y = cols @ w.reshape(self.out_channels, -1).T + self.params["bias"]
        y = y.reshape(x.shape[0], oh, ow, self.out_channels).transpose(0, 3, 1, 2)
        if train:
            self.cache = (cols, x.shape, oh, ow)
        return y

    def backward(self, dy):
        cols, x_shape, oh, ow = self._need_cache()
        n, c, h, w_in = x_shape
        k, p = self.kernel, self.pad
        w_mat = self.params["weight"].reshape(self.out_channels, -1)

        dy_mat = dy.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        self.grads["weight"] = (dy_mat.T @ cols).reshape(self.params["weight"].shape)
        self.grads["bias"] = dy_mat.sum(axis=0)

        # Scatter column gradients back to (padded) input pixels. With stride 1
        # each kernel offset (u, v) contributes one shifted dense slab, so the
        # scatter is k*k vectorized adds instead of an index-based col2im.
        dcols = (dy_mat @ w_mat).reshape(n, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
        dxp = np.zeros((n, c, h + 2 * p, w_in + 2 * p))
        for u in range(k):
            for v in range(k):
                dxp[:, :, u : u + oh, v : v + ow] += dcols[:, :, u, v]
        self.cache = None
        if p:
            return dxp[:, :, p : p + h, p : p + w_in]
        return dxp


class MaxPool2d(Layer):
    """Max pooling with a square window and stride equal to the window.

    Trailing rows/columns that do not fill a window are ignored. The argmax
    position inside each window is recorded so backward routes every output
    gradient to exactly one input pixel (ties break to the first position in
    row-major window order).
    """

    kind = "mp"

    def __init__(self, window):
        super().__init__()
        self.window = window

    def _windows(self, x):
        n, c, h, w = x.shape
        win = self.window
        oh, ow = h // win, w // win
        if oh < 1 or ow < 1:
            raise ShapeError(
                f"mp: {win}x{win} window does not fit input of {h}x{w}"
            )
        xc = x[:, :, : oh * win, : ow * win]
        flat = xc.reshape(n, c, oh, win, ow, win).transpose(0, 1, 2, 4, 3, 5)
        return flat.reshape(n, c, oh, ow, win * win), oh, ow

    def forward(self, x, train, rng):
        flat, oh, ow = self._windows(x)
        idx = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        if train:
            self.cache = (idx, x.shape, oh, ow)
        return out

    def backward(self, dy):
        idx, x_shape, oh, ow = self._need_cache()
        n, c, h, w = x_shape
        win = self.window
        buf = np.zeros((n, c, oh, ow, win * win))
        np.put_along_axis(buf, idx[..., None], dy[..., None], axis=-1)
        buf = buf.reshape(n, c, oh, ow, win, win).transpose(0, 1, 2, 4, 3, 5)
        dx = np.zeros((n, c, h, w))
        dx[:, :, : oh * win, : ow * win] = buf.reshape(n, c, oh * win, ow * win)
        self.cache = None
        return dx


class FullyConnected(Layer):
    """Affine layer y = flatten(x) @ W + b with He-initialized W (in, out)."""

    kind = "fc"

    def __init__(self, in_features, out_features, rng):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.params["weight"] = rng.normal(
            0.0, np.sqrt(2.0 / in_features), (in_features, out_features)
        )
        self.params["bias"] = np.zeros(out_features)

    def forward(self, x, train, rng):
        xf = x.reshape(x.shape[0], -1)
        if xf.shape[1] != self.in_features:
            raise ShapeError(
                f"fc: expected {self.in_features} input features, got {xf.shape[1]}"
            )
        if train:
            self.cache = (xf, x.shape)
        return xf @ self.params["weight"] + self.params["bias"]

    def backward(self, dy):
        xf, x_shape = self._need_cache()
        self.grads["weight"] = xf.T @ dy
        self.grads["bias"] = dy.sum(axis=0)
        self.cache = None
        return (dy @ self.params["weight"].T).reshape(x_shape)


class ReLU(Layer):
    """max(x, 0). Stacks insert these implicitly after conv/fc tokens."""

    kind = "relu"

    def __init__(self, implicit=False):
        super().__init__()
        self.implicit = implicit

    def forward(self, x, train, rng):
        if train:
            self.cache = x > 0
        return np.maximum(x, 0.0)

    def backward(self, dy):
        mask = self._need_cache()
        self.cache = None
        return dy * mask


class BatchNorm(Layer):
    """Per-channel batch normalization with affine gamma/beta.

    x_hat = (x - mu) / sqrt(var + eps), y = gamma * x_hat + beta.
    Statistics are taken over (N, H, W) for 4-d inputs and over N for 2-d
    inputs, using the biased variance. Running statistics are tracked with
    momentum 0.9 and used verbatim in eval mode.
    """

    kind = "bn"
    eps = 1e-5
    momentum = 0.9

    def __init__(self, channels):
        super().__init__()
        self.channels = channels
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def state_items(self):
        return self.param_items() + [
            ("running_mean", self.running_mean),
            ("running_var", self.running_var),
        ]

    def _axes_and_shape(self, x):
        if x.ndim == 4:
            return (0, 2, 3), (1, self.channels, 1, 1)
        if x.ndim == 2:
            return (0,), (1, self.channels)
        raise ShapeError(f"bn: expected 2-d or 4-d input, got shape {x.shape}")

    def forward(self, x, train, rng):
        axes, bshape = self._axes_and_shape(x)
        if x.shape[1] != self.channels:
            raise ShapeError(f"bn: expected {self.channels} channels, got {x.shape[1]}")
        if train:
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mu
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mu, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu.reshape(bshape)) * inv_std.reshape(bshape)
        if train:
            m = x.size // self.channels
            self.cache = (xhat, inv_std, axes, bshape, m)
        return self.params["gamma"].reshape(bshape) * xhat + self.params["beta"].reshape(bshape)

    def backward(self, dy):
        xhat, inv_std, axes, bshape, m = self._need_cache()
        dgamma = (dy * xhat).sum(axis=axes)
        dbeta = dy.sum(axis=axes)
        self.grads["gamma"] = dgamma
        self.grads["beta"] = dbeta
        scale = (self.params["gamma"] * inv_std).reshape(bshape)
        dx = scale * (dy - dbeta.reshape(bshape) / m - xhat * dgamma.reshape(bshape) / m)
        self.cache = None
        return dx


class Dropout(Layer):
    """Inverted dropout: train keeps each unit with prob 1-p and scales by 1/(1-p); eval is the identity."""

    kind = "d"

    def __init__(self, p):
        super().__init__()
        self.p = p

    def forward(self, x, train, rng):
        if not train:
            return x
        mask = rng.random(x.shape) >= self.p
        if train:
            self.cache = mask
        return x * mask / (1.0 - self.p)

    def backward(self, dy):
        mask = self._need_cache()
        self.cache = None
        return dy * mask / (1.0 - self.p)


class Softmax(Layer):
    """Final layer: flattens, then row-wise softmax to class probabilities."""

    kind = "s"

    def forward(self, x, train, rng):
        return softmax(x.reshape(x.shape[0], -1))

    def backward(self, dy):  # pragma: no cover - handled by LayerStack.backward
        raise StateError("softmax backward is fused with cross-entropy in LayerStack")
