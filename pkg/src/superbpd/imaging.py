"""File I/O for label maps and direction fields, plus colour renderings.

Formats
-------
Label maps
    Binary PGM (``P5``), 16-bit big-endian samples, maxval 65535. The gray
    value is the label.
Direction fields (BPDF)
    Magic ``BPD1``, little-endian u32 width, u32 height, then height*width
    pairs of little-endian float32 ``(d_row, d_col)`` in row-major order.
RGB images
    Binary PPM (``P6``), 8-bit samples, maxval 255.
"""
import os
import struct
import tempfile

import numpy as np

from .errors import FieldValidationError, FormatError, UnsupportedVersionError

BPDF_MAGIC = b"BPD1"
BPDF_NORM_TOL = 1e-3
_WHITESPACE = b" \t\n\r\v\f"


def atomic_write(path, data):
    """Write ``data`` to ``path`` through a temporary file in the same directory.

    Readers never see a half-written file, and a failure leaves nothing behind.
    """
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=folder)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


# -- netpbm ------------------------------------------------------------------

def _pnm_header(data, magic):
    """Parse a netpbm header; return (width, height, maxval, payload offset)."""
    if data[:2] != magic:
        raise FormatError(f"bad magic {data[:2]!r}, expected {magic!r}")
    fields = []
    pos = 2
    n = len(data)
    while len(fields) < 3:
        # at least one whitespace between tokens, comments run to end of line
        if pos >= n:
            raise FormatError("truncated header")
        if data[pos] not in _WHITESPACE and data[pos : pos + 1] != b"#":
            raise FormatError(f"malformed header near byte {pos}")
        while pos < n and (data[pos] in _WHITESPACE or data[pos : pos + 1] == b"#"):
            if data[pos : pos + 1] == b"#":
                while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise FormatError("truncated header")
        start = pos
        while pos < n and data[pos : pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise FormatError(f"malformed header near byte {pos}: expected a number")
        fields.append(int(data[start:pos]))
    if pos >= n or data[pos] not in _WHITESPACE:
        raise FormatError("malformed header: missing whitespace before the raster")
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise FormatError(f"bad dimensions {width}x{height}")
    return width, height, maxval, pos + 1


def decode_labels(data):
    width, height, maxval, off = _pnm_header(data, b"P5")
    if maxval != 65535:
        raise FormatError(f"label maps must be 16-bit (maxval 65535), got maxval {maxval}")
    need = width * height * 2
    payload = data[off:]
    if len(payload) < need:
        raise FormatError(f"truncated payload: {len(payload)} of {need} bytes")
    if len(payload) > need:
        raise FormatError(f"{len(payload) - need} trailing bytes after the raster")
    return np.frombuffer(payload, dtype=">u2").reshape(height, width).astype(np.int64)


def encode_labels(labels):
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.size == 0:
        raise ValueError(f"label map must be a non-empty 2-D array, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"labels must be integers, got {labels.dtype}")
    if labels.min() < 0 or labels.max() > 65535:
        raise FormatError("labels must lie in [0, 65535] for a 16-bit PGM")
    h, w = labels.shape
    return b"P5\n%d %d\n65535\n" % (w, h) + labels.astype(">u2").tobytes()


def read_labels(path):
    """Read a 16-bit binary PGM label map as an int64 (H, W) array."""
    return decode_labels(_read_bytes(path))


def write_labels(labels, path):
    atomic_write(path, encode_labels(labels))


def encode_rgb(rgb):
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError(f"RGB image must be uint8 (H, W, 3), got {rgb.dtype} {rgb.shape}")
    h, w = rgb.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(rgb).tobytes()


def decode_rgb(data):
    width, height, maxval, off = _pnm_header(data, b"P6")
    if maxval != 255:
        raise FormatError(f"only 8-bit PPM is supported, got maxval {maxval}")
    need = width * height * 3
    payload = data[off:]
    if len(payload) != need:
        raise FormatError(f"payload has {len(payload)} bytes, expected {need}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()


def write_rgb(rgb, path):
    atomic_write(path, encode_rgb(rgb))


def read_rgb(path):
    return decode_rgb(_read_bytes(path))


# -- BPDF --------------------------------------------------------------------

def _check_norms(vec):
    norm = np.hypot(vec[..., 0].astype(np.float64), vec[..., 1].astype(np.float64))
    bad = ~(np.abs(norm - 1.0) <= BPDF_NORM_TOL)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise FieldValidationError(
            f"{int(bad.sum())} vectors are not unit length (first at row {r}, col {c}, norm {norm[r, c]:.6g})"
        )


def encode_field(field):
    vec = np.asarray(field)
    if vec.ndim != 3 or vec.shape[2] != 2 or vec.shape[0] == 0 or vec.shape[1] == 0:
        raise ValueError(f"direction field must have shape (H, W, 2), got {vec.shape}")
    _check_norms(vec)
    h, w = vec.shape[:2]
    return BPDF_MAGIC + struct.pack("<II", w, h) + vec.astype("<f4").tobytes()


def decode_field(data):
    if len(data) < 12:
        raise FormatError(f"truncated BPDF header ({len(data)} bytes)")
    magic = data[:4]
    if magic != BPDF_MAGIC:
        if magic[:3] == b"BPD":
            raise UnsupportedVersionError(f"unsupported version {magic!r}, expected {BPDF_MAGIC!r}")
        raise FormatError(f"not a BPDF file (magic {magic!r})")
    width, height = struct.unpack("<II", data[4:12])
    if width == 0 or height == 0:
        raise FormatError(f"bad dimensions {width}x{height}")
    need = width * height * 8
    payload = data[12:]
    if len(payload) < need:
        raise FormatError(f"truncated payload: {len(payload)} of {need} bytes")
    if len(payload) > need:
        raise FormatError(f"{len(payload) - need} trailing bytes after the field")
    vec = np.frombuffer(payload, dtype="<f4").reshape(height, width, 2).astype(np.float32)
    _check_norms(vec)
    return vec


def read_field(path):
    """Read a BPDF file as a float32 (H, W, 2) array."""
    return decode_field(_read_bytes(path))


def write_field(field, path):
    atomic_write(path, encode_field(field))


# -- renderings ----------------------------------------------------------------

def hsv_to_rgb(hue_deg):
    """Fully saturated, full-value colours for hues in degrees, as uint8 RGB."""
    hp = np.mod(np.asarray(hue_deg, dtype=np.float64), 360.0) / 60.0
    x = 1.0 - np.abs(np.mod(hp, 2.0) - 1.0)
    sector = np.floor(hp).astype(np.int64) % 6
    one = np.ones_like(hp)
    zero = np.zeros_like(hp)
    # (R, G, B) per 60-degree sector
    table = [
        (one, x, zero),
        (x, one, zero),
        (zero, one, x),
        (zero, x, one),
        (x, zero, one),
        (one, zero, x),
    ]
    rgb = np.zeros(hp.shape + (3,))
    for s, chans in enumerate(table):
        sel = sector == s
        for ch in range(3):
            rgb[..., ch][sel] = chans[ch][sel]
    return np.rint(rgb * 255.0).astype(np.uint8)


def field_hue(field):
    """Hue in [0, 360) of every direction: atan2(d_row, d_col) taken mod 360."""
    vec = np.asarray(field, dtype=np.float64)
    return np.mod(np.degrees(np.arctan2(vec[..., 0], vec[..., 1])), 360.0)


def viz_field(field):
    """Colour wheel rendering: east is red, south yellow-green, west cyan."""
    return hsv_to_rgb(field_hue(field))


def boundary_mask(labels):
    """Pixels with at least one 4-neighbour of a different label."""
    labels = np.asarray(labels)
    mask = np.zeros(labels.shape, dtype=bool)
    dh = labels[:, :-1] != labels[:, 1:]
    dv = labels[:-1, :] != labels[1:, :]
    mask[:, :-1] |= dh
    mask[:, 1:] |= dh
    mask[:-1, :] |= dv
    mask[1:, :] |= dv
    return mask


def viz_boundaries(base, labels, color=(255, 0, 0)):
    """Paint segment boundaries over ``base`` (uint8 RGB) or a white canvas."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"labels must be 2-D, got shape {labels.shape}")
    if base is None:
        out = np.full(labels.shape + (3,), 255, dtype=np.uint8)
    else:
        out = np.array(base, dtype=np.uint8, copy=True)
        if out.shape != labels.shape + (3,):
            raise ValueError(f"base image {out.shape} does not match labels {labels.shape}")
    out[boundary_mask(labels)] = np.asarray(color, dtype=np.uint8)
    return out
