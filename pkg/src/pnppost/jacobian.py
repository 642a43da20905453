"""Finite-difference linearization of a black-box codec.

Columns of the Jacobian are averaged central differences over a set of step
lengths. When the codec treats blocks independently the Jacobian is block
diagonal, so one pixel position can be perturbed in every block at once:
a full estimate then costs ``2 * len(steps) * block_size`` codec calls,
independent of the image size.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .codecs import Codec
from .core import BlockGrid, ImageBuffer, as_array, as_image


@dataclass(frozen=True)
class StepSet:
    deltas: tuple[float, ...]

    def __post_init__(self):
        deltas = tuple(float(d) for d in self.deltas)
        if not deltas:
            raise ValueError("step set must be non-empty")
        if any(not d > 0 for d in deltas):
            raise ValueError("step lengths must be positive")
        if len(set(deltas)) != len(deltas):
            raise ValueError("step lengths must be distinct")
        object.__setattr__(self, "deltas", deltas)

    @classmethod
    def scaled(cls, base_step: float, count: int = 5, fraction: float = 0.1) -> "StepSet":
        """``{fraction * base_step * k}`` for ``k = 1..count``."""
        return cls(tuple(fraction * base_step * k for k in range(1, count + 1)))

    def __len__(self):
        return len(self.deltas)

    def __iter__(self):
        return iter(self.deltas)


def _central_difference(codec: Codec, z: np.ndarray, direction: np.ndarray, steps: StepSet) -> np.ndarray:
    acc = np.zeros_like(z)
    for d in steps:
        plus = as_array(codec(z + d * direction))
        minus = as_array(codec(z - d * direction))
        acc += (plus - minus) / (2 * d)
    return acc / len(steps)


def estimate_column(codec: Codec, z, k: int, steps: StepSet, grid: BlockGrid | None = None) -> np.ndarray:
    """Column ``k`` (row-major pixel index) of the Jacobian at ``z``.

    With a block grid (given, or built from the codec's ``block_shape``) only
    the entries of k's block are returned, in column-major block order.
    Otherwise the full length-N column is returned in row-major order.
    """
    z = as_array(z)
    h, w = z.shape
    if not 0 <= k < h * w:
        raise IndexError(f"pixel index {k} out of range")
    if grid is None and codec.block_shape is not None:
        grid = BlockGrid(z.shape, codec.block_shape)
    e = np.zeros(h * w)
    e[k] = 1.0
    col = _central_difference(codec, z, e.reshape(h, w), steps)
    if grid is None:
        return col.ravel()
    grid._check_shape(z.shape)
    r, c = divmod(k, w)
    bh, bw = grid.block_shape
    index = (r // bh) * len(range(0, w, bw)) + c // bw
    rs, cs = grid.block_slices(index)
    return col[rs, cs].ravel(order="F")


class LinearizedCodec:
    """``C_lin(x) = C(x0) + J (x - x0)`` with block-diagonal ``J``.

    ``blocks[i]`` is the square Jacobian block of grid block ``i`` in the
    column-major within-block convention.
    """

    def __init__(self, grid: BlockGrid, blocks, base_point, base_value):
        self.grid = grid
        self.base_point = as_image(base_point)
        self.base_value = as_image(base_value)
        grid._check_shape(self.base_point.shape)
        grid._check_shape(self.base_value.shape)
        if len(blocks) != len(grid):
            raise ValueError(f"expected {len(grid)} blocks, got {len(blocks)}")
        # store grouped stacks for vectorized use; `blocks` stays available as a list
        self._stacks = []
        for dims, idx, _ in grid.groups:
            n = dims[0] * dims[1]
            stack = np.empty((len(idx), n, n))
            for j, i in enumerate(idx):
                b = np.asarray(blocks[i], dtype=np.float64)
                if b.shape != (n, n):
                    raise ValueError(f"block {i} must be {n}x{n}, got {b.shape}")
                stack[j] = b
            if not np.all(np.isfinite(stack)):
                raise ValueError("Jacobian entries must be finite")
            self._stacks.append(stack)

    @classmethod
    def from_stacks(cls, grid, stacks, base_point, base_value) -> "LinearizedCodec":
        self = cls.__new__(cls)
        self.grid = grid
        self.base_point = as_image(base_point)
        self.base_value = as_image(base_value)
        self._stacks = [np.asarray(s, dtype=np.float64) for s in stacks]
        return self

    @property
    def stacks(self) -> list[np.ndarray]:
        """Jacobian blocks grouped like ``grid.groups``, each ``(n_blocks, n, n)``."""
        return self._stacks

    @property
    def blocks(self) -> list[np.ndarray]:
        out = [None] * len(self.grid)
        for (_, idx, _), stack in zip(self.grid.groups, self._stacks):
            for j, i in enumerate(idx):
                out[i] = stack[j]
        return out

    def offset_blocks(self) -> list[np.ndarray]:
        """Per-group ``C(x0) - J x0``, the constant term of the affine model."""
        x0 = self.grid.gather(self.base_point)
        c0 = self.grid.gather(self.base_value)
        return [c - np.einsum("bij,bj->bi", J, x) for J, x, c in zip(self._stacks, x0, c0)]

    def evaluate(self, x) -> ImageBuffer:
        x = as_array(x)
        if x.shape != self.base_point.shape:
            raise ValueError(f"shape {x.shape} does not match base point {self.base_point.shape}")
        dx = self.grid.gather(x - self.base_point.pixels)
        c0 = self.grid.gather(self.base_value)
        out = [c + np.einsum("bij,bj->bi", J, d) for J, d, c in zip(self._stacks, dx, c0)]
        return ImageBuffer(self.grid.scatter(out))

    __call__ = evaluate


def evaluate(lin: LinearizedCodec, x) -> ImageBuffer:
    return lin.evaluate(x)


def estimate_block_jacobian(
    codec: Codec,
    z,
    grid: BlockGrid,
    steps: StepSet,
    base_value=None,
    workers: int | None = None,
) -> LinearizedCodec:
    """Block-diagonal Jacobian of ``codec`` at ``z`` by batched central differences.

    Within-block position ``p`` is perturbed in every block simultaneously, so
    exactly ``2 * len(steps) * grid.block_size`` codec calls are made. If
    ``base_value`` (= ``codec(z)``) is not supplied it costs one more call.
    Cross-block entries are dropped, which is exact only for codecs that
    really are block independent.
    """
    z = as_array(z)
    grid._check_shape(z.shape)
    bh, bw = grid.block_shape
    h, w = z.shape
    stacks = [np.zeros((len(idx), dims[0] * dims[1], dims[0] * dims[1])) for dims, idx, _ in grid.groups]

    def position(p):
        lr, lc = p % bh, p // bh
        e = np.zeros((h, w))
        e[lr::bh, lc::bw] = 1.0
        return p, _central_difference(codec, z, e, steps)

    positions = range(bh * bw)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(position, positions))
    else:
        results = [position(p) for p in positions]

    for p, col in results:
        lr, lc = p % bh, p // bh
        flat = col.ravel()
        for (dims, _, ix), stack in zip(grid.groups, stacks):
            dh, dw = dims
            if lr >= dh or lc >= dw:
                continue
            stack[:, :, lc * dh + lr] = flat[ix]

    if base_value is None:
        base_value = codec(z)
    return LinearizedCodec.from_stacks(grid, stacks, z, base_value)


def estimate_naive_jacobian(codec: Codec, z, grid: BlockGrid, steps: StepSet, base_value=None) -> LinearizedCodec:
    """Column-by-column reference estimator (``2 * len(steps) * N`` calls)."""
    z = as_array(z)
    h, w = z.shape
    blocks = []
    for i in range(len(grid)):
        rs, cs = grid.block_slices(i)
        dh, dw = rs.stop - rs.start, cs.stop - cs.start
        jb = np.empty((dh * dw, dh * dw))
        for lc in range(dw):
            for lr in range(dh):
                k = (rs.start + lr) * w + cs.start + lc
                jb[:, lc * dh + lr] = estimate_column(codec, z, k, steps, grid)
        blocks.append(jb)
    if base_value is None:
        base_value = codec(z)
    return LinearizedCodec(grid, blocks, z, base_value)
