"""Model parameters, the versioned checkpoint container and the forward
pipeline from an image pair to a CRF problem.

Checkpoint layout (all little-endian, documented here and in the README):

    magic   4 bytes  b"CRFS"
    u32     version (currently 1)
    i32     disparity sign (+1 or -1)
    u32     pairwise mode: 0 off, 1 contrast, 2 learned
    u32     coordinate features flag (0/1)
    f64     alpha, beta, P1, P2
    u32     unary layer count, then per layer:
              u8 activation (0 tanh, 1 identity, 2 abs)
              u32 out_channels, in_channels, kh, kw
              f64[out*in*kh*kw] kernel (C order), f64[out] bias
    u32     pairwise layer count (0 if absent), same per-layer encoding
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import cnn, correlation, crf, io, pairwise

CHECKPOINT_MAGIC = b"CRFS"
CHECKPOINT_VERSION = 1

PAIRWISE_MODES = ("off", "contrast", "learned")
_MODE_CODE = {m: i for i, m in enumerate(PAIRWISE_MODES)}
_ACT_CODE = {a: i for i, a in enumerate(cnn.ACTIVATIONS)}


class CheckpointError(Exception):
    """Raised for unreadable or mismatched checkpoint files."""


@dataclass
class ModelParams:
    unary_layers: list
    penalty: pairwise.PenaltyParams
    pairwise_mode: str = "contrast"
    pairwise_layers: list | None = None
    alpha: float = 2.0
    beta: float = 1.0
    sign: int = 1
    coord_features: bool = False

    def __post_init__(self):
        if self.pairwise_mode not in PAIRWISE_MODES:
            raise ValueError(f"unknown pairwise mode {self.pairwise_mode!r}")
        if self.pairwise_mode == "learned" and not self.pairwise_layers:
            raise ValueError("learned pairwise mode requires pairwise layers")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def copy(self):
        return ModelParams(
            [layer.copy() for layer in self.unary_layers],
            pairwise.PenaltyParams(self.penalty.P1, self.penalty.P2),
            self.pairwise_mode,
            [layer.copy() for layer in self.pairwise_layers] if self.pairwise_layers else None,
            self.alpha, self.beta, self.sign, self.coord_features,
        )


def init_params(seed, in_channels, depth=3, filters=100, pairwise_mode="contrast",
                pairwise_filters=64, penalty=None, alpha=2.0, beta=1.0,
                sign=1, coord_features=False):
    """Fresh randomly-initialized model."""
    rng = np.random.default_rng(seed)
    channels = in_channels + (2 if coord_features else 0)
    unary = cnn.default_unary_layers(rng, channels, depth=depth, filters=filters)
    pw = None
    if pairwise_mode == "learned":
        pw = pairwise.default_pairwise_layers(rng, channels, filters=pairwise_filters)
    if penalty is None:
        penalty = pairwise.PenaltyParams(0.1, 0.3)
    return ModelParams(unary, penalty, pairwise_mode, pw, alpha, beta, sign, coord_features)


# ---------------------------------------------------------------------------
# Forward pipeline.

def prepare_image(img, params):
    out = io.normalize_image(img)
    if params.coord_features:
        out = io.append_coordinate_features(out)
    return out


def probability_volume(left, right, params, label_count):
    """Siamese features + correlation for a raw image pair."""
    phi0 = cnn.unary_forward(prepare_image(left, params), params.unary_layers)
    phi1 = cnn.unary_forward(prepare_image(right, params), params.unary_layers)
    return correlation.correlate(phi0, phi1, label_count, params.sign)


def edge_weights(params, left_prepared, mode=None):
    mode = mode or params.pairwise_mode
    h, w = left_prepared.shape[:2]
    if mode == "off":
        return pairwise.zero_weights(h, w)
    if mode == "contrast":
        return pairwise.contrast_weights(left_prepared, params.alpha, params.beta)
    return pairwise.pairwise_cnn_forward(left_prepared, params.pairwise_layers)


def build_problem(left, right, params, label_count, mode=None):
    """CRF problem for an image pair: learned unary costs + edge weights."""
    p = probability_volume(left, right, params, label_count)
    weights = edge_weights(params, prepare_image(left, params), mode=mode)
    prob = crf.CrfProblem(correlation.unary_costs(p), weights, params.penalty)
    return prob, p


def infer_disparity(left, right, params, label_count, iterations=5,
                    mode=None, sublabel=False):
    """Full inference: probability volume, CRF, optional sub-label refinement.

    With pairwise mode "off" this degrades to the per-pixel argmax rule.
    Returns (disparity (H, W) float64, diagnostics dict)."""
    from . import evaluate

    mode = mode or params.pairwise_mode
    if mode == "off":
        p = probability_volume(left, right, params, label_count)
        labeling = correlation.argmax_decision(p)
        return labeling.astype(np.float64), {"labeling": labeling, "mode": mode}
    prob, p = build_problem(left, right, params, label_count, mode=mode)
    result = crf.run_inference(prob, iterations)
    disparity = result.labeling.astype(np.float64)
    if sublabel:
        costs = crf.row_min_marginals(prob, result.lam)
        disparity = evaluate.sublabel_refine(costs, result.labeling)
    return disparity, {"labeling": result.labeling, "result": result, "mode": mode}


# ---------------------------------------------------------------------------
# Checkpoint serialization.

def _pack_layer(layer):
    out = struct.pack(
        "<BIIII", _ACT_CODE[layer.activation],
        layer.kernel.shape[0], layer.kernel.shape[1],
        layer.kernel.shape[2], layer.kernel.shape[3],
    )
    out += layer.kernel.astype("<f8").tobytes()
    out += layer.bias.astype("<f8").tobytes()
    return out


def _unpack_layer(buf, pos):
    act_code, co, ci, kh, kw = struct.unpack_from("<BIIII", buf, pos)
    pos += struct.calcsize("<BIIII")
    if act_code >= len(cnn.ACTIVATIONS):
        raise CheckpointError(f"unknown activation code {act_code}")
    n = co * ci * kh * kw
    kernel = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(co, ci, kh, kw)
    pos += 8 * n
    bias = np.frombuffer(buf, dtype="<f8", count=co, offset=pos)
    pos += 8 * co
    return cnn.ConvLayer(kernel.copy(), bias.copy(), cnn.ACTIVATIONS[act_code]), pos


def checkpoint_bytes(params):
    head = CHECKPOINT_MAGIC + struct.pack(
        "<IiIIdddd", CHECKPOINT_VERSION, params.sign,
        _MODE_CODE[params.pairwise_mode], int(params.coord_features),
        params.alpha, params.beta, params.penalty.P1, params.penalty.P2,
    )
    body = struct.pack("<I", len(params.unary_layers))
    for layer in params.unary_layers:
        body += _pack_layer(layer)
    pw = params.pairwise_layers or []
    body += struct.pack("<I", len(pw))
    for layer in pw:
        body += _pack_layer(layer)
    return head + body


def params_from_bytes(buf):
    if buf[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a crfstereo checkpoint")
    try:
        version, sign, mode_code, coords, alpha, beta, p1, p2 = struct.unpack_from(
            "<IiIIdddd", buf, 4
        )
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint header") from exc
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if mode_code >= len(PAIRWISE_MODES):
        raise CheckpointError(f"unknown pairwise mode code {mode_code}")
    pos = 4 + struct.calcsize("<IiIIdddd")
    try:
        (n_unary,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        unary = []
        for _ in range(n_unary):
            layer, pos = _unpack_layer(buf, pos)
            unary.append(layer)
        (n_pw,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        pw = []
        for _ in range(n_pw):
            layer, pos = _unpack_layer(buf, pos)
            pw.append(layer)
    except (struct.error, ValueError) as exc:
        raise CheckpointError("truncated checkpoint payload") from exc
    return ModelParams(
        unary, pairwise.PenaltyParams(p1, p2), PAIRWISE_MODES[mode_code],
        pw or None, alpha, beta, sign, bool(coords),
    )


def save_checkpoint(params, path):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(params))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return params_from_bytes(fh.read())
