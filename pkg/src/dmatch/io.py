"""Image and field file formats, and colorization.

Inputs are binary PGM (P5) or PPM (P6), 8 or 16 bit.  Disparity is stored
as single-channel PFM, flow as Middlebury ``.flo``, colorized previews as
binary PPM or PNG.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ImageFormatError

__all__ = [
    "read_image",
    "write_pnm",
    "write_pfm",
    "read_pfm",
    "write_flo",
    "read_flo",
    "colorize_disparity",
    "colorize_flow",
    "write_color",
]

FLO_MAGIC = 202021.25
_SPACE = b" \t\r\n\x0b\x0c"


class _Header:
    """Whitespace and comment aware token reader over a byte buffer."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def token(self, what: str) -> bytes:
        d, n = self.data, len(self.data)
        while self.pos < n:
            c = d[self.pos:self.pos + 1]
            if c == b"#":
                end = d.find(b"\n", self.pos)
                self.pos = n if end < 0 else end + 1
            elif c in _SPACE:
                self.pos += 1
            else:
                break
        start = self.pos
        while self.pos < n and d[self.pos:self.pos + 1] not in _SPACE + b"#":
            self.pos += 1
        if start == self.pos:
            raise ImageFormatError(f"missing {what}", start)
        return d[start:self.pos]

    def integer(self, what: str, lo: int, hi: int) -> int:
        tok = self.token(what)
        start = self.pos - len(tok)
        if not tok.isdigit():
            raise ImageFormatError(f"{what} is not an integer: {tok[:16]!r}", start)
        value = int(tok)
        if not lo <= value <= hi:
            raise ImageFormatError(f"{what} {value} outside [{lo}, {hi}]", start)
        return value

    def end_of_header(self):
        """Exactly one whitespace byte separates the header from the data."""
        if self.pos >= len(self.data) or self.data[self.pos:self.pos + 1] not in _SPACE:
            raise ImageFormatError("expected whitespace after header", self.pos)
        self.pos += 1


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def read_image(path) -> np.ndarray:
    """Binary PGM/PPM as float64 in [0, 1]; (H, W) or (H, W, 3)."""
    data = _read_bytes(path)
    hdr = _Header(data)
    magic = hdr.token("magic number")
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported magic {magic[:8]!r}, expected P5 or P6", 0)
    width = hdr.integer("width", 1, 1 << 24)
    height = hdr.integer("height", 1, 1 << 24)
    maxval = hdr.integer("maxval", 1, 65535)
    hdr.end_of_header()
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * channels * dtype.itemsize
    if len(data) - hdr.pos < need:
        raise ImageFormatError(
            f"pixel data truncated: need {need} bytes, have {len(data) - hdr.pos}", len(data))
    pixels = np.frombuffer(data, dtype=dtype, count=width * height * channels, offset=hdr.pos)
    img = pixels.astype(np.float64) / maxval
    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.clip(img.reshape(shape), 0.0, 1.0)


def write_pnm(path, image, maxval: int = 255):
    """Binary PGM or PPM from an array in [0, 1] (or uint8)."""
    img = np.asarray(image)
    if img.dtype != np.uint8 or maxval != 255:
        img = np.round(np.clip(np.asarray(img, dtype=np.float64), 0, 1) * maxval)
    if img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    elif img.ndim == 2:
        magic = b"P5"
    else:
        raise ValueError("image must be (H, W) or (H, W, 3)")
    dtype = ">u2" if maxval > 255 else "u1"
    H, W = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"%s\n%d %d\n%d\n" % (magic, W, H, maxval))
        fh.write(np.ascontiguousarray(img.astype(dtype)).tobytes())


def write_pfm(path, field):
    """Single-channel PFM, little-endian (negative scale), bottom row first."""
    f = np.asarray(field, dtype="<f4")
    if f.ndim != 2:
        raise ValueError("PFM output expects a 2-D field")
    H, W = f.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n%d %d\n-1.0\n" % (W, H))
        fh.write(np.ascontiguousarray(f[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    """PFM (``Pf`` or ``PF``) as float32, top row first."""
    data = _read_bytes(path)
    hdr = _Header(data)
    magic = hdr.token("magic number")
    if magic not in (b"Pf", b"PF"):
        raise ImageFormatError(f"not a PFM file: {magic[:8]!r}", 0)
    width = hdr.integer("width", 1, 1 << 24)
    height = hdr.integer("height", 1, 1 << 24)
    tok = hdr.token("scale")
    start = hdr.pos - len(tok)
    try:
        scale = float(tok)
    except ValueError:
        raise ImageFormatError(f"bad scale {tok[:16]!r}", start) from None
    if scale == 0:
        raise ImageFormatError("scale must be nonzero", start)
    hdr.end_of_header()
    channels = 3 if magic == b"PF" else 1
    dtype = np.dtype("<f4" if scale < 0 else ">f4")
    count = width * height * channels
    if len(data) - hdr.pos < 4 * count:
        raise ImageFormatError("pixel data truncated", len(data))
    f = np.frombuffer(data, dtype=dtype, count=count, offset=hdr.pos).astype(np.float32)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.ascontiguousarray(f.reshape(shape)[::-1])


def write_flo(path, flow):
    """Middlebury ``.flo``: magic, width, height, then interleaved (u, v)."""
    flow = np.asarray(flow, dtype="<f4")
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError("flow must have shape (H, W, 2)")
    H, W = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(np.array([FLO_MAGIC], dtype="<f4").tobytes())
        fh.write(np.array([W, H], dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(flow).tobytes())


def read_flo(path) -> np.ndarray:
    data = _read_bytes(path)
    if len(data) < 12:
        raise ImageFormatError("file too short for a .flo header", len(data))
    magic = np.frombuffer(data, dtype="<f4", count=1)[0]
    if magic != np.float32(FLO_MAGIC):
        raise ImageFormatError("bad .flo magic", 0)
    W, H = (int(v) for v in np.frombuffer(data, dtype="<i4", count=2, offset=4))
    if W < 1 or H < 1:
        raise ImageFormatError(f"bad .flo size {W}x{H}", 4)
    if len(data) - 12 < 8 * W * H:
        raise ImageFormatError("flow data truncated", len(data))
    f = np.frombuffer(data, dtype="<f4", count=2 * W * H, offset=12)
    return f.reshape(H, W, 2).copy()


def colorize_disparity(disp, dmin: float, dmax: float) -> np.ndarray:
    """Linear gray ramp over ``[dmin, dmax]`` as uint8 RGB; non-finite
    (invalidated) pixels are black."""
    d = np.asarray(disp, dtype=np.float64)
    span = max(dmax - dmin, 1e-12)
    g = np.clip((d - dmin) / span, 0.0, 1.0)
    g = np.where(np.isfinite(d), g, 0.0)
    g8 = np.round(255 * g).astype(np.uint8)
    return np.repeat(g8[..., None], 3, axis=2)


def _color_wheel():
    """Middlebury hue wheel: red, yellow, green, cyan, blue, magenta."""
    segments = [(15, (255, 0, 0), (255, 255, 0)), (6, (255, 255, 0), (0, 255, 0)),
                (4, (0, 255, 0), (0, 255, 255)), (11, (0, 255, 255), (0, 0, 255)),
                (13, (0, 0, 255), (255, 0, 255)), (6, (255, 0, 255), (255, 0, 0))]
    rows = []
    for n, a, b in segments:
        t = np.arange(n)[:, None] / n
        rows.append((1 - t) * np.array(a) + t * np.array(b))
    return np.floor(np.concatenate(rows)) / 255.0


def colorize_flow(flow, max_magnitude: float = None) -> np.ndarray:
    """Hue from direction, saturation from magnitude; zero flow is white.

    Magnitudes are normalized by ``max_magnitude`` (the largest finite
    magnitude in the field when omitted).
    """
    flow = np.asarray(flow, dtype=np.float64)
    u, v = flow[..., 0], flow[..., 1]
    ok = np.isfinite(u) & np.isfinite(v)
    u, v = np.where(ok, u, 0.0), np.where(ok, v, 0.0)
    mag = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = float(mag.max()) if mag.size else 0.0
    rad = np.clip(mag / max(max_magnitude, 1e-12), 0.0, 1.0)
    wheel = _color_wheel()
    n = len(wheel)
    angle = np.arctan2(-v, -u) / np.pi  # in (-1, 1]
    pos = (angle + 1) / 2 * (n - 1)
    k0 = np.floor(pos).astype(int)
    k1 = (k0 + 1) % n
    frac = (pos - k0)[..., None]
    col = (1 - frac) * wheel[k0] + frac * wheel[k1]
    col = 1 - rad[..., None] * (1 - col)
    col = np.where(ok[..., None], col, 0.0)
    return np.round(255 * col).astype(np.uint8)


def write_color(path, rgb):
    """Write an RGB preview; PNG when the path ends in ``.png``, else PPM."""
    if os.fspath(path).lower().endswith(".png"):
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        plt.imsave(path, np.asarray(rgb, dtype=np.uint8), metadata={"Software": None})
    else:
        write_pnm(path, rgb)
