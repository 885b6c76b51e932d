"""File formats: 8-bit PPM (P6) images, FOAT tensors, FOAE encoder weights, metrics CSV.

PPM is the deployment boundary: writing quantizes pixel values to bytes
(round(v * 255)) and reading maps bytes back to value = byte / 255. The binary
tensor/encoder formats are exact: little-endian float64 payloads with a small
header, so round-trips are byte-identical.
"""

import csv
import struct

import numpy as np

from .encoders import KIND_ATTENTION, KIND_PATCH_LINEAR, EncoderSpec, weight_count
from .errors import FormatError

FOAT_MAGIC = b"FOAT"
FOAE_MAGIC = b"FOAE"
FORMAT_VERSION = 1

_KIND_TAGS = {KIND_PATCH_LINEAR: 0, KIND_ATTENTION: 1}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


# ---------------------------------------------------------------- PPM images

def write_ppm(path, img):
    """Write an (H, W, 3) [0,1] image as binary 8-bit P6."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"PPM wants (H, W, 3), got shape {img.shape}")
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def _read_ppm_token(f):
    # tokens are whitespace-separated; '#' starts a comment running to end of line
    tok = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise FormatError("unexpected end of PPM header")
        if c == b"#":
            while c not in (b"\n", b""):
                c = f.read(1)
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_ppm(path):
    """Read a binary 8-bit P6 file into an (H, W, 3) float image in [0, 1]."""
    with open(path, "rb") as f:
        if _read_ppm_token(f) != b"P6":
            raise FormatError(f"{path}: not a P6 PPM")
        width = int(_read_ppm_token(f))
        height = int(_read_ppm_token(f))
        maxval = int(_read_ppm_token(f))
        if maxval != 255:
            raise FormatError(f"{path}: only 8-bit PPM supported, maxval={maxval}")
        raw = f.read(width * height * 3)
    if len(raw) != width * height * 3:
        raise FormatError(f"{path}: truncated pixel data")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return pixels.astype(np.float64) / 255.0


# ---------------------------------------------------------------- FOAT tensors

def write_tensor(path, arr):
    """Binary tensor: magic, version u16, rank u8, dims u32, float64 LE payload."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim > 255:
        raise FormatError("tensor rank too large")
    with open(path, "wb") as f:
        f.write(FOAT_MAGIC)
        f.write(struct.pack("<HB", FORMAT_VERSION, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.astype("<f8").tobytes())


def read_tensor(path):
    with open(path, "rb") as f:
        if f.read(4) != FOAT_MAGIC:
            raise FormatError(f"{path}: bad tensor magic")
        version, rank = struct.unpack("<HB", f.read(3))
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported tensor version {version}")
        dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        payload = f.read(8 * count)
    if len(payload) != 8 * count:
        raise FormatError(f"{path}: truncated tensor payload")
    return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()


# ---------------------------------------------------------------- FOAE encoders

def write_encoder(path, spec):
    """Encoder weights: magic, version u16, kind u8, 4 dims u32, float64 LE weights."""
    with open(path, "wb") as f:
        f.write(FOAE_MAGIC)
        f.write(struct.pack("<HB", FORMAT_VERSION, _KIND_TAGS[spec.kind]))
        f.write(struct.pack("<4I", spec.patch_size, spec.embed_dim, spec.input_h, spec.input_w))
        f.write(spec.weights.astype("<f8").tobytes())


def read_encoder(path, name=None):
    with open(path, "rb") as f:
        if f.read(4) != FOAE_MAGIC:
            raise FormatError(f"{path}: bad encoder magic")
        version, tag = struct.unpack("<HB", f.read(3))
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported encoder version {version}")
        if tag not in _TAG_KINDS:
            raise FormatError(f"{path}: unknown encoder kind tag {tag}")
        kind = _TAG_KINDS[tag]
        patch_size, embed_dim, input_h, input_w = struct.unpack("<4I", f.read(16))
        expected = weight_count(kind, patch_size, embed_dim)
        payload = f.read(8 * expected)
        if len(payload) != 8 * expected or f.read(1) != b"":
            raise FormatError(f"{path}: weight payload does not match header dims")
    weights = np.frombuffer(payload, dtype="<f8").copy()
    if name is None:
        name = f"{kind}-p{patch_size}-d{embed_dim}"
    return EncoderSpec(name=name, kind=kind, patch_size=patch_size, embed_dim=embed_dim,
                       input_h=input_h, input_w=input_w, weights=weights)


# ---------------------------------------------------------------- metrics CSV

METRICS_HEADER = ["step", "encoder", "loss_coarse", "loss_fine", "loss_total",
                  "speed", "weight", "delta_linf"]


def metrics_rows(trace):
    """Flatten a loss trace into one row per (step, encoder)."""
    rows = []
    for rec in trace:
        for j in range(rec.totals.shape[0]):
            rows.append([rec.step, j, float(rec.coarse[j]), float(rec.fine[j]),
                         float(rec.totals[j]), float(rec.speeds[j]),
                         float(rec.weights[j]), float(rec.delta_linf)])
    return rows


def write_metrics_csv(path, trace):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_HEADER)
        for row in metrics_rows(trace):
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])


def read_metrics_csv(path):
    """Parse a metrics CSV back into typed rows (ints and exact floats)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != METRICS_HEADER:
            raise FormatError(f"{path}: unexpected metrics header {header}")
        rows = []
        for raw in reader:
            rows.append([int(raw[0]), int(raw[1])] + [float(x) for x in raw[2:]])
    return rows
