"""Edge weights and the truncated label-jump penalty.

Weights live on the 4-connected grid as two (H, W) planes: horizontal[r, c]
prices the edge to the right neighbour, vertical[r, c] the edge below.
The trailing column/row of each plane is unused and held at zero.
"""

from dataclasses import dataclass

import numpy as np

from .cnn import ConvLayer, DimensionError, glorot_layer, network_backward, network_forward


@dataclass
class PenaltyParams:
    P1: float
    P2: float

    def __post_init__(self):
        if not (0.0 <= self.P1 <= self.P2):
            raise ValueError(f"need 0 <= P1 <= P2, got P1={self.P1}, P2={self.P2}")


@dataclass
class EdgeWeights:
    horizontal: np.ndarray  # (H, W), last column 0
    vertical: np.ndarray    # (H, W), last row 0

    def __post_init__(self):
        if self.horizontal.shape != self.vertical.shape:
            raise ValueError("weight planes must share a shape")
        if (self.horizontal < 0).any() or (self.vertical < 0).any():
            raise ValueError("edge weights must be non-negative")

    @property
    def shape(self):
        return self.horizontal.shape


def zero_weights(height, width):
    return EdgeWeights(np.zeros((height, width)), np.zeros((height, width)))


def rho(delta, penalty):
    """Truncated penalty: 0 at delta=0, P1 at delta=1, P2 beyond."""
    delta = np.asarray(delta)
    return np.where(delta == 0, 0.0, np.where(delta == 1, penalty.P1, penalty.P2))


def contrast_weights(img, alpha, beta):
    """exp(-alpha * |dI|^beta) per 4-neighbour edge.

    |dI| is the mean absolute difference over channels."""
    if alpha < 0 or beta <= 0:
        raise ValueError("need alpha >= 0 and beta > 0")
    img = np.asarray(img, dtype=np.float64)
    H, W = img.shape[:2]
    horizontal = np.zeros((H, W))
    vertical = np.zeros((H, W))
    dh = np.abs(img[:, 1:] - img[:, :-1]).mean(axis=2)
    dv = np.abs(img[1:] - img[:-1]).mean(axis=2)
    horizontal[:, :-1] = np.exp(-alpha * dh ** beta)
    vertical[:-1] = np.exp(-alpha * dv ** beta)
    return EdgeWeights(horizontal, vertical)


def default_pairwise_layers(rng, in_channels, filters=64):
    """3-layer weight estimator: two tanh feature layers, abs output layer."""
    return [
        glorot_layer(rng, filters, in_channels, 3, 3),
        glorot_layer(rng, filters, filters, 3, 3),
        glorot_layer(rng, 2, filters, 1, 1, activation="abs"),
    ]


def _check_pairwise_geometry(layers):
    if len(layers) != 3:
        raise DimensionError("pairwise network must have 3 layers")
    if layers[-1].out_channels != 2 or layers[-1].activation != "abs":
        raise DimensionError("pairwise output layer must emit 2 abs-activated channels")


def pairwise_cnn_forward(img, layers, want_cache=False):
    """Edge weights from a small network on the reference image.

    The abs output activation keeps both orientation channels non-negative."""
    _check_pairwise_geometry(layers)
    out, caches = network_forward(img, layers)
    horizontal = out[:, :, 0].copy()
    vertical = out[:, :, 1].copy()
    horizontal[:, -1] = 0.0
    vertical[-1] = 0.0
    weights = EdgeWeights(horizontal, vertical)
    if want_cache:
        return weights, caches
    return weights


def pairwise_cnn_backward(layers, caches, grad_weights):
    """Backprop (grad_horizontal, grad_vertical) planes to layer gradients."""
    grad_h, grad_v = grad_weights
    grad_out = np.stack([grad_h, grad_v], axis=2).astype(np.float64).copy()
    grad_out[:, -1, 0] = 0.0  # boundary entries are pinned to zero
    grad_out[-1, :, 1] = 0.0
    return network_backward(layers, caches, grad_out)


def dump_weights(weights):
    """Debug dump of the two orientation planes as one 2-channel volume."""
    from .correlation import dump_volume

    return dump_volume(np.stack([weights.horizontal, weights.vertical], axis=2))
