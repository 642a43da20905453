"""Compression-decompression operators used as black boxes by the solver.

Every codec maps an image to an image of the same shape, deterministically.
Codecs that process blocks independently advertise ``block_shape`` so the
Jacobian estimator can batch perturbations across blocks.
"""
from __future__ import annotations

import math
import os
import shlex
import subprocess
import tempfile
import threading

import numpy as np
from scipy.fft import dctn, idctn

from .core import ImageBuffer, as_array, read_pgm, temp_dir, write_pgm

# ITU-T T.81 Annex K luminance table, row-major
JPEG_LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


class CodecError(RuntimeError):
    """Base class for codec failures."""


class CodecExitError(CodecError):
    def __init__(self, command, returncode, stderr=""):
        super().__init__(f"codec command exited with status {returncode}: {command}\n{stderr}".rstrip())
        self.returncode = returncode


class CodecTimeoutError(CodecError):
    pass


class CodecOutputError(CodecError):
    """The codec's output file is missing or not a readable PGM."""


class CodecShapeError(CodecError):
    """The codec returned an image of different dimensions."""


class Codec:
    """Base class; subclasses implement :meth:`_apply`."""

    block_shape: tuple[int, int] | None = None

    @property
    def descriptor(self) -> str:
        raise NotImplementedError

    def _apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, img) -> ImageBuffer:
        x = as_array(img)
        y = self._apply(x)
        if y.shape != x.shape:
            raise CodecShapeError(f"{self.descriptor}: output shape {y.shape} != input shape {x.shape}")
        return ImageBuffer(y)

    def __call__(self, img) -> ImageBuffer:
        return self.apply(img)

    def __repr__(self):
        return f"<{type(self).__name__} {self.descriptor}>"


def midrise(x, step: float, offset: float = 0.0):
    return np.floor((x - offset) / step) * step + step / 2 + offset


class ScalarQuantCodec(Codec):
    """Per-sample mid-riser quantization with cells of width ``step``."""

    block_shape = (1, 1)

    def __init__(self, step: float, offset: float = 0.0):
        if not step > 0:
            raise ValueError("step must be positive")
        self.step = float(step)
        self.offset = float(offset)

    @property
    def descriptor(self):
        return f"scalar:{self.step!r}" + (f",offset={self.offset!r}" if self.offset else "")

    def _apply(self, x):
        return midrise(x, self.step, self.offset)


class PairTransformCodec(Codec):
    """Transform coding of vertical 2x1 pixel pairs with a 45-degree rotation.

    Both rotated coefficients are mid-riser quantized with the same step.
    With an odd image height the last row has no partner and is quantized
    directly in the pixel domain.
    """

    block_shape = (2, 1)

    def __init__(self, step: float):
        if not step > 0:
            raise ValueError("step must be positive")
        self.step = float(step)

    @property
    def descriptor(self):
        return f"pair:{self.step!r}"

    def _apply(self, x):
        out = np.empty_like(x)
        h = x.shape[0] - x.shape[0] % 2
        top, bottom = x[0:h:2], x[1:h:2]
        s = math.sqrt(0.5)
        # U = s [[1, -1], [1, 1]];  coefficients U^T p
        c1 = midrise(s * (top + bottom), self.step)
        c2 = midrise(s * (bottom - top), self.step)
        out[0:h:2] = s * (c1 - c2)
        out[1:h:2] = s * (c1 + c2)
        if h < x.shape[0]:
            out[h] = midrise(x[h], self.step)
        return out


class BlockDctCodec(Codec):
    """JPEG-like 8x8 block DCT coder (no entropy coding, not bitstream compatible).

    Each block is transformed with the orthonormal 2D DCT-II, divided by
    ``scale * quant_table``, rounded to the nearest integer and reconstructed.
    Partial edge blocks use a DCT of their own size and the matching corner
    of the table.
    """

    block_shape = (8, 8)

    def __init__(self, scale: float = 1.0, quant_table=None):
        if not scale > 0:
            raise ValueError("scale must be positive")
        table = JPEG_LUMA_TABLE if quant_table is None else np.asarray(quant_table, dtype=np.float64)
        table = table.reshape(8, 8)
        if np.any(table <= 0) or not np.all(np.isfinite(table)):
            raise ValueError("quantization table entries must be positive")
        self.scale = float(scale)
        self.quant_table = table

    @property
    def descriptor(self):
        if self.quant_table is JPEG_LUMA_TABLE:
            return f"dct:{self.scale!r}"
        return f"dct:{self.scale!r},table=custom"

    @property
    def effective_step(self) -> float:
        """Representative step size: scale times the median table entry."""
        return self.scale * float(np.median(self.quant_table))

    def _code(self, blocks, table):
        coef = dctn(blocks, axes=(-2, -1), norm="ortho")
        steps = self.scale * table
        return idctn(np.round(coef / steps) * steps, axes=(-2, -1), norm="ortho")

    def _apply(self, x):
        h, w = x.shape
        hf, wf = h - h % 8, w - w % 8
        out = np.empty_like(x)
        if hf and wf:
            blocks = x[:hf, :wf].reshape(hf // 8, 8, wf // 8, 8).transpose(0, 2, 1, 3)
            rec = self._code(blocks, self.quant_table)
            out[:hf, :wf] = rec.transpose(0, 2, 1, 3).reshape(hf, wf)
        for r in range(0, h, 8):
            for c in range(0, w, 8):
                if r < hf and c < wf:
                    continue
                blk = x[r : r + 8, c : c + 8]
                bh, bw = blk.shape
                out[r : r + bh, c : c + bw] = self._code(blk, self.quant_table[:bh, :bw])
        return out


class LinearCodec(Codec):
    """``C(x) = M x`` on the row-major flattened image; a test double."""

    def __init__(self, matrix, block_shape=None):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.block_shape = block_shape

    @property
    def descriptor(self):
        return f"linear:{self.matrix.shape[0]}x{self.matrix.shape[1]}"

    def _apply(self, x):
        return (self.matrix @ x.ravel()).reshape(x.shape)


class IdentityCodec(Codec):
    block_shape = (1, 1)

    @property
    def descriptor(self):
        return "identity"

    def _apply(self, x):
        return np.array(x, copy=True)


class CountingCodec(Codec):
    """Wraps a codec and counts invocations (thread-safe)."""

    def __init__(self, inner: Codec):
        self.inner = inner
        self.block_shape = inner.block_shape
        self.calls = 0
        self._lock = threading.Lock()

    @property
    def descriptor(self):
        return self.inner.descriptor

    def _apply(self, x):
        with self._lock:
            self.calls += 1
        return self.inner._apply(x)


class SubprocessCodec(Codec):
    """Runs an external program on PGM files.

    ``template`` is a shell command containing ``{in}`` and ``{out}``; both
    are replaced by quoted temporary paths. The image is rounded and clipped
    to 8 bits on the way out, which the Jacobian estimator sees as extra
    quantization.
    """

    def __init__(self, template: str, workdir=None, timeout: float = 60.0, block_shape=None):
        if "{in}" not in template or "{out}" not in template:
            raise ValueError("command template needs both {in} and {out} placeholders")
        self.template = template
        self.workdir = workdir
        self.timeout = timeout
        self.block_shape = block_shape

    @property
    def descriptor(self):
        return f"cmd:{self.template}"

    def format_command(self, src: str, dst: str, **extra) -> str:
        # str.format would choke on braces inside the user's shell command
        cmd = self.template.replace("{in}", shlex.quote(src)).replace("{out}", shlex.quote(dst))
        for key, value in extra.items():
            cmd = cmd.replace("{" + key + "}", shlex.quote(str(value)))
        return cmd

    def run_command(self, x: np.ndarray, **extra) -> np.ndarray:
        with tempfile.TemporaryDirectory(prefix="pnppost-", dir=temp_dir()) as tmp:
            src = os.path.join(tmp, "in.pgm")
            dst = os.path.join(tmp, "out.pgm")
            write_pgm(src, x)
            cmd = self.format_command(src, dst, **extra)
            try:
                proc = subprocess.run(
                    cmd, shell=True, cwd=self.workdir, capture_output=True, text=True, timeout=self.timeout
                )
            except subprocess.TimeoutExpired as exc:
                raise CodecTimeoutError(f"command timed out after {self.timeout}s: {cmd}") from exc
            if proc.returncode != 0:
                raise CodecExitError(cmd, proc.returncode, proc.stderr)
            if not os.path.exists(dst):
                raise CodecOutputError(f"command produced no output file: {cmd}")
            try:
                y = read_pgm(dst).pixels
            except (ValueError, OSError) as exc:
                raise CodecOutputError(f"unreadable output from {cmd}: {exc}") from exc
        if y.shape != x.shape:
            raise CodecShapeError(f"output shape {y.shape} != input shape {x.shape}")
        return np.array(y, dtype=np.float64)

    def _apply(self, x):
        return self.run_command(x)


def bitrate_to_step(kind: str, rate: float) -> float:
    """Quantizer step for a target rate.

    ``scalar``: ``rate`` bits per pixel spread uniformly over [0, 256).
    ``pair``: ``rate`` is the effective rate ``16 - log2(step)``.
    """
    if not rate > 0:
        raise ValueError("rate must be positive")
    if kind == "scalar":
        return 256.0 / 2.0**rate
    if kind == "pair":
        return 2.0 ** (16.0 - rate)
    raise ValueError(f"no rate mapping for codec kind {kind!r}")


def step_to_effective_rate(step: float) -> float:
    """Effective rate of the pair codec, ``16 - log2(step)``."""
    return 16.0 - math.log2(step)


def parse_codec(spec: str, timeout: float = 60.0, block_shape=None) -> Codec:
    """Build a codec from ``scalar:STEP``, ``pair:STEP``, ``dct:SCALE`` or ``cmd:TEMPLATE``."""
    kind, sep, arg = spec.partition(":")
    if not sep:
        raise ValueError(f"codec spec must look like KIND:ARG, got {spec!r}")
    if kind == "cmd":
        return SubprocessCodec(arg, timeout=timeout, block_shape=block_shape)
    try:
        value = float(arg)
    except ValueError:
        raise ValueError(f"codec {kind!r} needs a numeric argument, got {arg!r}") from None
    if kind == "scalar":
        return ScalarQuantCodec(value)
    if kind == "pair":
        return PairTransformCodec(value)
    if kind == "dct":
        return BlockDctCodec(value)
    raise ValueError(f"unknown codec kind {kind!r}")
