"""Dense convolutional feature networks with exact backpropagation.

All layers produce same-size outputs via zero padding. Odd kernels are
centered; even kernels anchor at the top-left of the central block, so a
2x2 kernel at output (r, c) reads inputs (r, c), (r, c+1), (r+1, c),
(r+1, c+1). Double precision throughout.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

ACTIVATIONS = ("tanh", "identity", "abs")


class DimensionError(Exception):
    """Shape or channel mismatch between layers and inputs."""


@dataclass
class ConvLayer:
    kernel: np.ndarray  # (out_channels, in_channels, kh, kw)
    bias: np.ndarray    # (out_channels,)
    activation: str = "tanh"

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.kernel.ndim != 4 or self.bias.shape != (self.kernel.shape[0],):
            raise DimensionError("kernel must be (out, in, kh, kw) with matching bias")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def out_channels(self):
        return self.kernel.shape[0]

    @property
    def in_channels(self):
        return self.kernel.shape[1]

    def copy(self):
        return ConvLayer(self.kernel.copy(), self.bias.copy(), self.activation)


def glorot_layer(rng, out_channels, in_channels, kh, kw, activation="tanh"):
    """Uniform init in +-sqrt(6 / (fan_in + fan_out)), zero bias."""
    fan_in = in_channels * kh * kw
    fan_out = out_channels * kh * kw
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    kern = rng.uniform(-bound, bound, (out_channels, in_channels, kh, kw))
    return ConvLayer(kern, np.zeros(out_channels), activation)


def _activate(pre, activation):
    if activation == "tanh":
        return np.tanh(pre)
    if activation == "abs":
        return np.abs(pre)
    return pre


def _activation_grad(pre, out, activation):
    if activation == "tanh":
        return 1.0 - out * out
    if activation == "abs":
        # subgradient 0 at the kink
        return np.sign(pre)
    return np.ones_like(pre)


def _offsets(kh, kw):
    return (kh - 1) // 2, (kw - 1) // 2


def conv2d_forward(inp, layer, want_cache=False):
    """Apply one padded convolution + pointwise activation.

    inp: (H, W, in_channels) -> (H, W, out_channels)."""
    inp = np.asarray(inp, dtype=np.float64)
    if inp.ndim != 3 or inp.shape[2] != layer.in_channels:
        raise DimensionError(
            f"input has {inp.shape[2] if inp.ndim == 3 else '?'} channels, "
            f"layer expects {layer.in_channels}"
        )
    kh, kw = layer.kernel.shape[2:]
    off_h, off_w = _offsets(kh, kw)
    pre = kernels.conv2d_raw(inp, layer.kernel, off_h, off_w) + layer.bias
    out = _activate(pre, layer.activation)
    if want_cache:
        return out, (inp, pre, out)
    return out


def conv2d_backward(layer, cache, grad_out):
    """Gradients of sum(grad_out * output) w.r.t. kernel, bias and input."""
    inp, pre, out = cache
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != out.shape:
        raise DimensionError("grad_out shape mismatch")
    grad_pre = grad_out * _activation_grad(pre, out, layer.activation)
    kh, kw = layer.kernel.shape[2:]
    off_h, off_w = _offsets(kh, kw)
    grad_kernel = kernels.conv2d_grad_kernel(inp, grad_pre, kh, kw, off_h, off_w)
    grad_bias = grad_pre.sum(axis=(0, 1))
    # Input gradient is a convolution with the index-reversed, transposed
    # kernel and the complementary anchor.
    flipped = layer.kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    grad_input = kernels.conv2d_raw(
        np.ascontiguousarray(grad_pre), np.ascontiguousarray(flipped),
        kh - 1 - off_h, kw - 1 - off_w,
    )
    return grad_kernel, grad_bias, grad_input


def network_forward(inp, layers):
    """Compose conv layers; returns (features, caches) for backprop."""
    caches = []
    x = np.asarray(inp, dtype=np.float64)
    for layer in layers:
        x, cache = conv2d_forward(x, layer, want_cache=True)
        caches.append(cache)
    return x, caches


def network_backward(layers, caches, grad_out):
    """Backprop through a layer stack; returns (per-layer grads, grad_input).

    Per-layer grads are (grad_kernel, grad_bias) tuples, same order as layers."""
    grads = [None] * len(layers)
    g = grad_out
    for idx in range(len(layers) - 1, -1, -1):
        gk, gb, g = conv2d_backward(layers[idx], caches[idx], g)
        grads[idx] = (gk, gb)
    return grads, g


def unary_forward(img, layers):
    """Feature map of an image under the shared unary network."""
    features, _ = network_forward(img, layers)
    return features


def default_unary_layers(rng, in_channels, depth=3, filters=100):
    """Feature extractor geometry: 3x3 first layer, 2x2 afterwards, tanh."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    layers = [glorot_layer(rng, filters, in_channels, 3, 3)]
    for _ in range(depth - 1):
        layers.append(glorot_layer(rng, filters, filters, 2, 2))
    return layers
