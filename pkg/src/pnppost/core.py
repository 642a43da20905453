"""Shared numeric types: images, block grids and the vectorization convention.

Within a block, pixels are vectorized in column-major (Fortran) order. The
whole image, when flattened, is row-major. Every module that touches Jacobian
blocks goes through :class:`BlockGrid` so the two conventions never mix.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class ImageBuffer:
    """Immutable real-valued 2D image.

    Samples are float64, nominally in [0, 255]. Values outside that range are
    allowed (the solver iterates in continuous space) but NaN/Inf are not.
    """

    __slots__ = ("_pixels",)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must be a non-empty 2D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image samples must be finite")
        arr.flags.writeable = False
        self._pixels = arr

    @classmethod
    def from_samples(cls, height: int, width: int, samples) -> "ImageBuffer":
        samples = np.asarray(samples, dtype=np.float64)
        if samples.size != height * width:
            raise ValueError(f"expected {height * width} samples, got {samples.size}")
        return cls(samples.reshape(height, width))

    @property
    def pixels(self) -> np.ndarray:
        """Read-only (height, width) view."""
        return self._pixels

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._pixels.shape

    @property
    def samples(self) -> np.ndarray:
        """Row-major flat samples (read-only)."""
        return self._pixels.ravel()

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._pixels
        return self._pixels.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._pixels, other._pixels))

    def __hash__(self):
        return hash((self.shape, self._pixels.tobytes()))

    def __repr__(self):
        return f"ImageBuffer({self.height}x{self.width})"


def as_array(img) -> np.ndarray:
    """Float64 2D array view of an ImageBuffer or array-like."""
    if isinstance(img, ImageBuffer):
        return img.pixels
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {arr.shape}")
    return arr


def as_image(img) -> ImageBuffer:
    return img if isinstance(img, ImageBuffer) else ImageBuffer(img)


def check_finite_matrix(m) -> np.ndarray:
    """Validate a dense matrix (2D, finite) and return it as float64."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"matrix must be 2D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    return arr


@dataclass(frozen=True)
class BlockGrid:
    """Non-overlapping tiling of an image into blocks of at most ``block_shape``.

    Trailing blocks on the bottom/right edges keep their true (smaller) size.
    Blocks are enumerated row-major by origin.
    """

    image_shape: tuple[int, int]
    block_shape: tuple[int, int]
    blocks: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        h, w = (int(v) for v in self.image_shape)
        bh, bw = (int(v) for v in self.block_shape)
        if min(h, w, bh, bw) < 1:
            raise ValueError("image and block dimensions must be positive")
        object.__setattr__(self, "image_shape", (h, w))
        object.__setattr__(self, "block_shape", (bh, bw))
        origins = tuple((r, c) for r in range(0, h, bh) for c in range(0, w, bw))
        object.__setattr__(self, "blocks", origins)

    @classmethod
    def for_image(cls, img, block_height: int, block_width: int) -> "BlockGrid":
        return cls(as_array(img).shape, (block_height, block_width))

    def __len__(self):
        return len(self.blocks)

    @property
    def block_size(self) -> int:
        """Pixel count of a full block (B_H * B_W)."""
        return self.block_shape[0] * self.block_shape[1]

    def _check_index(self, index: int):
        if not 0 <= index < len(self.blocks):
            raise IndexError(f"block index {index} out of range [0, {len(self.blocks)})")

    def block_dims(self, index: int) -> tuple[int, int]:
        """True (height, width) of block ``index``, smaller on trailing edges."""
        self._check_index(index)
        r, c = self.blocks[index]
        h, w = self.image_shape
        bh, bw = self.block_shape
        return min(bh, h - r), min(bw, w - c)

    def block_slices(self, index: int) -> tuple[slice, slice]:
        r, c = self.blocks[index]
        dh, dw = self.block_dims(index)
        return slice(r, r + dh), slice(c, c + dw)

    @cached_property
    def groups(self) -> list[tuple[tuple[int, int], np.ndarray, np.ndarray]]:
        """Blocks grouped by their true dimensions.

        Returns a list of ``(dims, block_indices, flat_pixel_index)`` where
        ``flat_pixel_index`` has shape ``(n_blocks, dh * dw)`` and holds the
        row-major image index of every block entry, in column-major
        within-block order. At most four groups exist (full, right edge,
        bottom edge, corner).
        """
        h, w = self.image_shape
        by_dims: dict[tuple[int, int], list[int]] = {}
        for i in range(len(self.blocks)):
            by_dims.setdefault(self.block_dims(i), []).append(i)
        out = []
        for dims, idx in by_dims.items():
            dh, dw = dims
            origins = np.array([self.blocks[i] for i in idx])
            lr, lc = np.meshgrid(np.arange(dh), np.arange(dw), indexing="ij")
            # column-major within block
            lr = lr.ravel(order="F")
            lc = lc.ravel(order="F")
            flat = (origins[:, :1] + lr) * w + (origins[:, 1:] + lc)
            out.append((dims, np.array(idx), flat))
        return out

    def gather(self, img) -> list[np.ndarray]:
        """Block vectors grouped as in :attr:`groups`, each ``(n_blocks, n)``."""
        flat = as_array(img).ravel()
        self._check_shape(as_array(img).shape)
        return [flat[ix] for _, _, ix in self.groups]

    def scatter(self, data: list[np.ndarray]) -> np.ndarray:
        """Inverse of :meth:`gather`; returns a fresh (height, width) array."""
        out = np.empty(self.image_shape[0] * self.image_shape[1])
        for (_, _, ix), d in zip(self.groups, data):
            out[ix] = d
        return out.reshape(self.image_shape)

    def _check_shape(self, shape):
        if tuple(shape) != self.image_shape:
            raise ValueError(f"grid is for images of shape {self.image_shape}, got {tuple(shape)}")


def extract_block(img, grid: BlockGrid, index: int) -> np.ndarray:
    """Return block ``index`` as a column-major vector."""
    arr = as_array(img)
    grid._check_shape(arr.shape)
    rs, cs = grid.block_slices(index)
    return arr[rs, cs].ravel(order="F").copy()


def insert_block(img, grid: BlockGrid, index: int, data) -> ImageBuffer:
    """Return a copy of ``img`` with block ``index`` replaced by ``data``."""
    arr = as_array(img)
    grid._check_shape(arr.shape)
    dh, dw = grid.block_dims(index)
    data = np.asarray(data, dtype=np.float64).ravel()
    if data.size != dh * dw:
        raise ValueError(f"block {index} holds {dh * dw} samples, got {data.size}")
    out = np.array(arr, copy=True)
    rs, cs = grid.block_slices(index)
    out[rs, cs] = data.reshape((dh, dw), order="F")
    return ImageBuffer(out)


# --- file formats -----------------------------------------------------------


def _pgm_tokens(data: bytes):
    """Yield (token, end_offset) for the PGM header, skipping comments."""
    pos = 0
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
                pos += 1
            yield data[start:pos], pos


def read_pgm(path) -> ImageBuffer:
    """Read a binary (P5) 8-bit PGM file."""
    with open(path, "rb") as f:
        data = f.read()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
        width, _ = next(tokens)
        height, _ = next(tokens)
        maxval, end = next(tokens)
        width, height, maxval = int(width), int(height), int(maxval)
    except (StopIteration, ValueError) as exc:
        raise ValueError(f"{path}: malformed PGM header") from exc
    if magic != b"P5":
        raise ValueError(f"{path}: only binary P5 PGM is supported, got {magic!r}")
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise ValueError(f"{path}: invalid dimensions {width}x{height}")
    # exactly one whitespace byte separates the header from the raster
    raster = data[end + 1 : end + 1 + width * height]
    if len(raster) != width * height:
        raise ValueError(f"{path}: truncated raster ({len(raster)} of {width * height} bytes)")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return ImageBuffer(pixels)


def to_uint8(img) -> np.ndarray:
    """Round and clip to the 8-bit range."""
    return np.clip(np.rint(as_array(img)), 0, 255).astype(np.uint8)


def write_pgm(path, img) -> None:
    """Write ``img`` as binary PGM, rounding and clipping to 8 bits."""
    pixels = to_uint8(img)
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def read_matrix(path) -> np.ndarray:
    """Read the plain-text matrix format: ``rows cols`` then one row per line."""
    with open(path) as f:
        lines = [ln for ln in (l.strip() for l in f) if ln]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    rows, cols = (int(v) for v in lines[0].split())
    body = lines[1:]
    if len(body) != rows:
        raise ValueError(f"{path}: expected {rows} rows, got {len(body)}")
    m = np.array([[float(v) for v in ln.split()] for ln in body], dtype=np.float64).reshape(rows, -1)
    if m.shape != (rows, cols):
        raise ValueError(f"{path}: expected {rows}x{cols}, got {m.shape}")
    return check_finite_matrix(m)


def write_matrix(path, m) -> None:
    """Write a matrix in the plain-text format using round-trip exact reprs."""
    m = check_finite_matrix(m)
    rows, cols = m.shape
    with open(path, "w") as f:
        f.write(f"{rows} {cols}\n")
        for row in m:
            f.write(" ".join(repr(float(v)) for v in row))
            f.write("\n")


def temp_dir() -> str | None:
    """Directory for subprocess adapters' scratch files (``PNPPOST_TMPDIR``)."""
    return os.environ.get("PNPPOST_TMPDIR") or None
