"""Disparity metrics, quadratic sub-label refinement and visualization."""

import json
from dataclasses import dataclass

import numpy as np


class MetricError(Exception):
    """Raised when a metric is undefined (no valid pixels)."""


def badx(pred, gt, threshold):
    """Percent of valid pixels with |pred - gt| strictly above threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    mask = gt.valid
    n = int(mask.sum())
    if n == 0:
        raise MetricError("no valid pixels")
    err = np.abs(np.asarray(pred, dtype=np.float64) - gt.disparity)
    return 100.0 * float((err[mask] > threshold).sum()) / n


def rms(pred, gt):
    """Root mean squared disparity error over valid pixels."""
    mask = gt.valid
    n = int(mask.sum())
    if n == 0:
        raise MetricError("no valid pixels")
    diff = (np.asarray(pred, dtype=np.float64) - gt.disparity)[mask]
    return float(np.sqrt((diff * diff).sum() / n))


@dataclass
class EvalReport:
    badx: dict            # threshold -> percent
    rms: float
    valid_pixel_count: int
    occluded_excluded: bool

    def to_csv(self):
        head = ["rms", "valid_pixels", "occluded_excluded"]
        row = [repr(self.rms), str(self.valid_pixel_count), str(self.occluded_excluded)]
        for t in sorted(self.badx):
            head.append(f"bad{t:g}")
            row.append(repr(self.badx[t]))
        return ",".join(head) + "\n" + ",".join(row) + "\n"

    def to_json(self):
        return json.dumps({
            "badx": {f"{t:g}": v for t, v in sorted(self.badx.items())},
            "rms": self.rms,
            "valid_pixel_count": self.valid_pixel_count,
            "occluded_excluded": self.occluded_excluded,
        }, indent=2) + "\n"

    def table(self):
        lines = [f"valid pixels: {self.valid_pixel_count}"
                 + ("  (non-occluded only)" if self.occluded_excluded else "  (all)")]
        for t in sorted(self.badx):
            lines.append(f"bad{t:g}: {self.badx[t]:8.4f} %")
        lines.append(f"rms:  {self.rms:8.4f} px")
        return "\n".join(lines)


def evaluate_pair(pred, gt, thresholds=(1.0, 2.0, 3.0, 4.0), occluded_excluded=True):
    return EvalReport(
        badx={float(t): badx(pred, gt, t) for t in thresholds},
        rms=rms(pred, gt),
        valid_pixel_count=int(gt.valid.sum()),
        occluded_excluded=occluded_excluded,
    )


def sublabel_refine(costs, labeling, eps=1e-12):
    """Continuous disparity from a quadratic fit around each winning label.

    costs is the reparametrized row-chain min-marginal volume used for
    decoding. Boundary labels and non-convex stencils are left unrefined;
    a discrete minimizer moves by at most one half label."""
    H, W, L = costs.shape
    x = np.asarray(labeling)
    out = x.astype(np.float64)
    interior = (x > 0) & (x < L - 1)
    if not interior.any():
        return out
    rows, cols = np.nonzero(interior)
    d = x[rows, cols]
    c_m = costs[rows, cols, d - 1]
    c_0 = costs[rows, cols, d]
    c_p = costs[rows, cols, d + 1]
    denom = 2.0 * (c_p - 2.0 * c_0 + c_m)
    ok = denom > eps
    offset = np.where(ok, (c_m - c_p) / np.where(ok, denom, 1.0), 0.0)
    out[rows, cols] = d + offset
    return out


def colorize(pred, max_disparity):
    """Blue-to-red disparity rendering; non-finite pixels are black."""
    if max_disparity <= 0:
        raise ValueError("max_disparity must be positive")
    pred = np.asarray(pred, dtype=np.float64)
    finite = np.isfinite(pred)
    t = np.clip(np.where(finite, pred, 0.0) / max_disparity, 0.0, 1.0)
    hue = (1.0 - t) * (2.0 / 3.0)  # 240deg (blue) down to 0deg (red)
    h6 = hue * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    one = np.ones_like(f)
    # value=saturation=1 HSV wheel
    lut = [
        (one, f, 0 * f), (1 - f, one, 0 * f), (0 * f, one, f),
        (0 * f, 1 - f, one), (f, 0 * f, one), (one, 0 * f, 1 - f),
    ]
    rgb = np.zeros(pred.shape + (3,))
    for sector, (r, g, b) in enumerate(lut):
        sel = i == sector
        rgb[sel, 0] = r[sel]
        rgb[sel, 1] = g[sel]
        rgb[sel, 2] = b[sel]
    rgb[~finite] = 0.0
    return rgb
