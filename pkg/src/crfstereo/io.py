"""Stereo sample I/O: image normalization, PFM/PGM/PPM codecs, synthetic
random-dot stereo pairs and sample manifests.

Images are float64 arrays of shape (H, W, C); disparity maps are (H, W).
Invalid ground-truth pixels carry a non-finite sentinel in the disparity
array and False in the validity mask; downstream code must only consult
the mask.
"""

import struct
from dataclasses import dataclass

import numpy as np

VARIANCE_FLOOR = 1e-12


class FormatError(Exception):
    """Raised for malformed or unsupported image payloads."""


@dataclass
class GroundTruth:
    disparity: np.ndarray  # (H, W) float, sub-pixel allowed, sentinel at invalid
    valid: np.ndarray      # (H, W) bool

    def __post_init__(self):
        d = self.disparity[self.valid]
        if d.size and (not np.all(np.isfinite(d)) or np.any(d < 0)):
            raise ValueError("valid ground-truth pixels must be finite and non-negative")


@dataclass
class StereoSample:
    left: np.ndarray
    right: np.ndarray
    gt: GroundTruth | None
    label_count: int

    def __post_init__(self):
        if self.left.shape != self.right.shape:
            raise ValueError("left/right shape mismatch")
        if self.label_count < 2:
            raise ValueError("label_count must be >= 2")
        if self.gt is not None and self.gt.disparity.shape != self.left.shape[:2]:
            raise ValueError("ground truth shape mismatch")


def ground_truth_from_disparity(disp):
    """Wrap a raw disparity map; non-finite or negative entries become invalid."""
    disp = np.asarray(disp, dtype=np.float64)
    valid = np.isfinite(disp) & (disp >= 0)
    return GroundTruth(disp, valid)


def normalize_image(img):
    """Shift/scale to zero mean and unit variance over all pixels and channels.

    Constant images map to all zeros (variance floor)."""
    img = np.asarray(img, dtype=np.float64)
    mean = img.mean()
    var = img.var()
    return (img - mean) / np.sqrt(max(var, VARIANCE_FLOOR))


def append_coordinate_features(img):
    """Append x/width and y/height channels in [0, 1)."""
    h, w = img.shape[:2]
    xs = np.broadcast_to(np.arange(w, dtype=np.float64)[None, :] / w, (h, w))
    ys = np.broadcast_to(np.arange(h, dtype=np.float64)[:, None] / h, (h, w))
    return np.concatenate([img, xs[:, :, None], ys[:, :, None]], axis=2)


# ---------------------------------------------------------------------------
# PFM (grayscale "Pf"): ASCII header, then h*w float32, rows bottom-to-top.
# A negative scale marks a little-endian payload.

def _read_token(buf, pos):
    while pos < len(buf) and buf[pos:pos + 1].isspace():
        pos += 1
    start = pos
    while pos < len(buf) and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated header")
    return buf[start:pos], pos


def read_pfm(data):
    """Decode grayscale PFM bytes to a (H, W) float32 array (top-down rows)."""
    magic, pos = _read_token(data, 0)
    if magic == b"PF":
        raise FormatError("color PFM is not supported")
    if magic != b"Pf":
        raise FormatError(f"bad PFM magic {magic!r}")
    try:
        wtok, pos = _read_token(data, pos)
        htok, pos = _read_token(data, pos)
        stok, pos = _read_token(data, pos)
        width, height, scale = int(wtok), int(htok), float(stok)
    except (ValueError, FormatError) as exc:
        raise FormatError("malformed PFM header") from exc
    if width < 1 or height < 1 or scale == 0:
        raise FormatError("bad PFM dimensions or scale")
    pos += 1  # single whitespace byte after the scale
    payload = data[pos:pos + 4 * width * height]
    if len(payload) != 4 * width * height:
        raise FormatError("truncated PFM payload")
    dt = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    arr = np.frombuffer(payload, dtype=dt).reshape(height, width)
    return arr[::-1].astype(np.float32)


def write_pfm(arr):
    """Encode a (H, W) float map as canonical little-endian grayscale PFM."""
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 2:
        raise FormatError("PFM writer expects a 2-D map")
    h, w = arr.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    return header + arr[::-1].astype("<f4").tobytes()


# ---------------------------------------------------------------------------
# PGM (binary P5) and PPM (binary P6), values scaled to [0, 1].

def _read_netpbm_header(data, magic):
    if data[:2] != magic:
        raise FormatError(f"bad magic, expected {magic!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError as exc:
            raise FormatError("malformed header field") from exc
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError("bad dimensions")
    if maxval <= 0 or maxval > 65535:
        raise FormatError(f"unsupported maxval {maxval}")
    return width, height, maxval, pos + 1


def read_pgm(data):
    """Decode binary P5 bytes to a (H, W, 1) image in [0, 1]."""
    width, height, maxval, pos = _read_netpbm_header(data, b"P5")
    dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    payload = data[pos:pos + width * height * dt.itemsize]
    if len(payload) != width * height * dt.itemsize:
        raise FormatError("truncated PGM payload")
    raw = np.frombuffer(payload, dtype=dt).reshape(height, width)
    return (raw.astype(np.float64) / maxval)[:, :, None]


def write_pgm(img, maxval=255):
    """Encode a (H, W) or (H, W, 1) image in [0, 1] as binary P5."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[2] != 1:
            raise FormatError("PGM writer expects a single channel")
        img = img[:, :, 0]
    if maxval <= 0 or maxval > 65535:
        raise FormatError(f"unsupported maxval {maxval}")
    h, w = img.shape
    dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    raw = np.rint(np.clip(img, 0.0, 1.0) * maxval).astype(dt)
    return f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + raw.tobytes()


def write_ppm(img, maxval=255):
    """Encode a (H, W, 3) color image in [0, 1] as binary P6."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError("PPM writer expects 3 channels")
    h, w = img.shape[:2]
    raw = np.rint(np.clip(img, 0.0, 1.0) * maxval).astype("u1")
    return f"P6\n{w} {h}\n{maxval}\n".encode("ascii") + raw.tobytes()


# ---------------------------------------------------------------------------
# Synthetic random-dot stereo pairs.

def synth_random_dot(seed, height, width, label_count, shape_count=4, sign=1):
    """Random-dot stereo pair over a piecewise-constant disparity map.

    The disparity map is a background plane with shape_count axis-aligned
    rectangles at random disparities in [0, label_count). The left image is
    uniform noise; the right image places each left pixel at column
    c + sign*d, nearer (larger-disparity) surfaces winning. Left pixels
    that lose that contest or whose match leaves the image are occluded
    and marked invalid. Deterministic for a fixed seed.
    """
    if label_count > width / 4:
        raise ValueError("label_count must be at most width/4")
    rng = np.random.default_rng(seed)
    disp = np.full((height, width), int(rng.integers(1, min(4, label_count))), dtype=np.int64)
    for _ in range(shape_count):
        rh = int(rng.integers(height // 6 + 2, max(height // 2, height // 6 + 3)))
        rw = int(rng.integers(width // 6 + 2, max(width // 2, width // 6 + 3)))
        r0 = int(rng.integers(0, max(height - rh, 1)))
        c0 = int(rng.integers(0, max(width - rw, 1)))
        disp[r0:r0 + rh, c0:c0 + rw] = int(rng.integers(0, label_count))

    left = rng.uniform(0.0, 1.0, (height, width, 1))
    right = rng.uniform(0.0, 1.0, (height, width, 1))
    valid = np.zeros((height, width), dtype=bool)
    # Far-to-near compositing: the largest disparity visible at a target wins.
    for r in range(height):
        owner = np.full(width, -1, dtype=np.int64)
        owner_d = np.full(width, -1, dtype=np.int64)
        for c in range(width):
            t = c + sign * disp[r, c]
            if 0 <= t < width and disp[r, c] > owner_d[t]:
                owner[t] = c
                owner_d[t] = disp[r, c]
        for t in range(width):
            if owner[t] >= 0:
                right[r, t] = left[r, owner[t]]
                valid[r, owner[t]] = True

    gt = GroundTruth(np.where(valid, disp.astype(np.float64), np.inf), valid)
    return StereoSample(left, right, gt, label_count)


# ---------------------------------------------------------------------------
# Manifests: one "left right gt" path triple per line.

def write_manifest(path, triples):
    with open(path, "w") as fh:
        for left, right, gt in triples:
            fh.write(f"{left} {right} {gt}\n")


def read_manifest(path):
    triples = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(f"manifest line needs 3 paths: {line!r}")
            triples.append(tuple(parts))
    return triples


def load_sample(triple, label_count, sign=1):
    """Read a (left, right, gt) path triple into a StereoSample."""
    left_path, right_path, gt_path = triple
    with open(left_path, "rb") as fh:
        left = read_pgm(fh.read())
    with open(right_path, "rb") as fh:
        right = read_pgm(fh.read())
    with open(gt_path, "rb") as fh:
        gt = ground_truth_from_disparity(read_pfm(fh.read()))
    return StereoSample(left, right, gt, label_count)
