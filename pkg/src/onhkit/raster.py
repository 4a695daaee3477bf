"""Byte-image data model, binary PGM/PPM codecs, and basic pixel operations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_WHITESPACE = b" \t\n\r\x0b\x0c"


class PnmParseError(ValueError):
    """Raised when a PGM/PPM byte stream cannot be decoded."""


def round_half_up(values):
    """Round non-negative values to the nearest integer, halves rounding up.

    Fixed project-wide so every golden value derived from rounding is stable
    (numpy's default round() is round-half-to-even).
    """
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5)


@dataclass(frozen=True, eq=False)
class Raster:
    """H×W×C byte image, C in {1, 3}; channel order for C=3 is R, G, B.

    The pixel array is marked read-only on construction; all operations
    return new rasters.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if not isinstance(px, np.ndarray) or px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected an (H, W, 1|3) array, got {getattr(px, 'shape', None)}")
        if px.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        px.setflags(write=False)

    @classmethod
    def from_array(cls, arr) -> "Raster":
        """Build a raster from any array-like; 2-D input becomes single-channel."""
        px = np.ascontiguousarray(arr, dtype=np.uint8)
        if px.ndim == 2:
            px = px[:, :, np.newaxis]
        return cls(px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def plane(self) -> np.ndarray:
        """2-D view of a single-channel raster."""
        if self.channels != 1:
            raise ValueError("plane() requires a single-channel raster")
        return self.pixels[:, :, 0]

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned pixel rectangle; (x0, y0) inclusive top-left corner."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box must be at least 1x1, got {self.w}x{self.h}")

    @classmethod
    def square(cls, x0: int, y0: int, side: int) -> "PixelBox":
        return cls(x0, y0, side, side)

    @property
    def side(self) -> int:
        if self.w != self.h:
            raise ValueError("side is only defined for square boxes")
        return self.w

    def fits_inside(self, width: int, height: int) -> bool:
        return self.x0 >= 0 and self.y0 >= 0 and self.x0 + self.w <= width and self.y0 + self.h <= height


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos]
        if c in _WHITESPACE:
            pos += 1
        elif c == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in _WHITESPACE:
        pos += 1
    if start == pos:
        raise PnmParseError("truncated header")
    return data[start:pos], pos


def decode_pnm(data: bytes) -> Raster:
    """Decode a binary PGM (P5) or PPM (P6) byte stream with maxval 255.

    Header comment lines starting with '#' are skipped. The payload must be
    exactly width*height*channels bytes; anything shorter or longer is an
    error so that the codec stays byte-exact.
    """
    if len(data) < 2 or data[:2] not in (b"P5", b"P6"):
        raise PnmParseError("unsupported or missing magic number (want P5 or P6)")
    channels = 1 if data[:2] == b"P5" else 3
    pos = 2
    values = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(data, pos)
        try:
            values.append(int(token))
        except ValueError:
            raise PnmParseError(f"malformed {name} field {token!r}") from None
    width, height, maxval = values
    if width < 1 or height < 1:
        raise PnmParseError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise PnmParseError(f"unsupported maxval {maxval} (only 255)")
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise PnmParseError("missing whitespace between header and payload")
    pos += 1
    need = width * height * channels
    if len(data) - pos < need:
        raise PnmParseError(f"truncated payload: need {need} bytes, have {len(data) - pos}")
    if len(data) - pos > need:
        raise PnmParseError("trailing data after payload")
    arr = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return Raster(arr.reshape(height, width, channels).copy())


def encode_pnm(r: Raster) -> bytes:
    """Encode as binary P5/P6 with the canonical header `magic\\nW H\\n255\\n`."""
    magic = "P5" if r.channels == 1 else "P6"
    header = f"{magic}\n{r.width} {r.height}\n255\n".encode("ascii")
    return header + r.pixels.tobytes()


def read_pnm(path) -> Raster:
    with open(path, "rb") as fh:
        return decode_pnm(fh.read())


def write_pnm(path, r: Raster) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pnm(r))


def extract_red(r: Raster) -> Raster:
    """Pull the R channel of an RGB raster as a single-channel raster."""
    if r.channels != 3:
        raise ValueError("extract_red requires an RGB raster")
    return Raster(np.ascontiguousarray(r.pixels[:, :, 0:1]))


def contrast_stretch(r: Raster) -> Raster:
    """Scale intensities so the brightest pixel maps to 255.

    An all-zero image is returned unchanged (there is nothing to scale).
    """
    if r.channels != 1:
        raise ValueError("contrast_stretch requires a single-channel raster")
    peak = int(r.pixels.max())
    if peak == 0:
        return r
    if peak == 255:
        return r
    scaled = round_half_up(r.pixels.astype(np.float64) * (255.0 / peak))
    return Raster(scaled.astype(np.uint8))


def crop(r: Raster, box: PixelBox) -> Raster:
    """Copy the sub-raster under `box`; the box must lie fully inside."""
    if not box.fits_inside(r.width, r.height):
        raise ValueError(
            f"box {box} does not fit inside {r.width}x{r.height} image"
        )
    sub = r.pixels[box.y0 : box.y0 + box.h, box.x0 : box.x0 + box.w, :]
    return Raster(np.ascontiguousarray(sub))


def _axis_samples(n_src: int, n_dst: int):
    # Half-pixel-center mapping, clamped to the source extent.
    src = (np.arange(n_dst, dtype=np.float64) + 0.5) * (n_src / n_dst) - 0.5
    src = np.clip(src, 0.0, n_src - 1.0)
    lo = np.floor(src).astype(np.intp)
    frac = src - lo
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, frac


def resize_bilinear(r: Raster, w: int, h: int) -> Raster:
    """Bilinear resample to w×h using half-pixel-center source mapping."""
    if w < 1 or h < 1:
        raise ValueError("target size must be at least 1x1")
    if w == r.width and h == r.height:
        return Raster(r.pixels.copy())
    x0, x1, fx = _axis_samples(r.width, w)
    y0, y1, fy = _axis_samples(r.height, h)
    px = r.pixels.astype(np.float64)
    top = px[np.ix_(y0, x0)] * (1.0 - fx)[None, :, None] + px[np.ix_(y0, x1)] * fx[None, :, None]
    bot = px[np.ix_(y1, x0)] * (1.0 - fx)[None, :, None] + px[np.ix_(y1, x1)] * fx[None, :, None]
    out = top * (1.0 - fy)[:, None, None] + bot * fy[:, None, None]
    return Raster(round_half_up(out).astype(np.uint8))
