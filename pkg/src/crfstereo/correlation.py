"""Feature correlation: per-pixel softmax over disparity candidates.

The probability volume holds, for each pixel of the reference image, a
distribution over disparity labels built from inner products with the
second image's features. Candidates whose matching pixel falls outside
the image row are excluded from the normalization (label 0 always stays
in range).
"""

from dataclasses import dataclass

import numpy as np

from .cnn import DimensionError

# Finite stand-in for "never pick this label": dominates any reachable
# energy at the scales this library works at while keeping arithmetic finite.
INVALID_LABEL_COST = 1e3


@dataclass
class CostVolume:
    values: np.ndarray  # (H, W, L)
    valid: np.ndarray   # (H, W, L) bool

    @property
    def label_count(self):
        return self.values.shape[2]


def _shifted_scores(phi0, phi1, label_count, sign):
    """scores[r, c, k] = <phi0[r, c], phi1[r, c + sign*k]>, -inf out of range."""
    H, W, _ = phi0.shape
    scores = np.full((H, W, label_count), -np.inf)
    valid = np.zeros((H, W, label_count), dtype=bool)
    for k in range(label_count):
        shift = sign * k
        c0 = max(0, -shift)
        c1 = min(W, W - shift)
        if c0 >= c1:
            continue
        block = np.einsum(
            "rcf,rcf->rc", phi0[:, c0:c1], phi1[:, c0 + shift:c1 + shift]
        )
        scores[:, c0:c1, k] = block
        valid[:, c0:c1, k] = True
    return scores, valid


def correlate(phi0, phi1, label_count, sign=1):
    """Softmax-normalized feature inner products over disparity candidates."""
    phi0 = np.asarray(phi0, dtype=np.float64)
    phi1 = np.asarray(phi1, dtype=np.float64)
    if phi0.shape != phi1.shape:
        raise DimensionError("feature maps must have identical shapes")
    if label_count < 2:
        raise ValueError("label_count must be >= 2")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    scores, valid = _shifted_scores(phi0, phi1, label_count, sign)
    # max-subtraction: inner products of wide feature maps can be large
    stable = scores - scores.max(axis=2, keepdims=True)
    expd = np.where(valid, np.exp(stable), 0.0)
    p = expd / expd.sum(axis=2, keepdims=True)
    return CostVolume(p, valid)


def correlate_backward(phi0, phi1, p, grad_p, sign=1):
    """Exact gradients of the probability volume w.r.t. both feature maps."""
    values, valid = p.values, p.valid
    grad_p = np.asarray(grad_p, dtype=np.float64)
    if grad_p.shape != values.shape or phi0.shape != phi1.shape:
        raise DimensionError("shape mismatch")
    L = values.shape[2]
    # softmax backward per pixel: ds_k = p_k * (g_k - sum_j g_j p_j)
    inner = (grad_p * values).sum(axis=2, keepdims=True)
    grad_scores = np.where(valid, values * (grad_p - inner), 0.0)
    grad_phi0 = np.zeros_like(phi0)
    grad_phi1 = np.zeros_like(phi1)
    W = phi0.shape[1]
    for k in range(L):
        shift = sign * k
        c0 = max(0, -shift)
        c1 = min(W, W - shift)
        if c0 >= c1:
            continue
        gs = grad_scores[:, c0:c1, k][:, :, None]
        grad_phi0[:, c0:c1] += gs * phi1[:, c0 + shift:c1 + shift]
        grad_phi1[:, c0 + shift:c1 + shift] += gs * phi0[:, c0:c1]
    return grad_phi0, grad_phi1


def argmax_decision(p):
    """Per-pixel most likely disparity; ties go to the smallest label."""
    masked = np.where(p.valid, p.values, -np.inf)
    return masked.argmax(axis=2).astype(np.int64)


def unary_costs(p, invalid_cost=INVALID_LABEL_COST):
    """CRF unary terms: negated probabilities, invalid labels priced out."""
    return np.where(p.valid, -p.values, invalid_cost)


def dump_volume(values):
    """Debug dump: u32 dimension count and sizes, then little-endian f64."""
    values = np.asarray(values, dtype=np.float64)
    head = np.array([values.ndim, *values.shape], dtype="<u4").tobytes()
    return head + values.astype("<f8").tobytes()


def load_volume(data):
    (ndim,) = np.frombuffer(data, dtype="<u4", count=1)
    shape = np.frombuffer(data, dtype="<u4", count=ndim, offset=4)
    return np.frombuffer(
        data, dtype="<f8", count=int(np.prod(shape)), offset=4 * (1 + int(ndim))
    ).reshape(shape)
