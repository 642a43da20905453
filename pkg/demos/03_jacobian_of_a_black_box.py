"""
Linearizing a codec you cannot differentiate
============================================

The solver needs a local linear model of the compress-decompress map. We
only get to call the codec, so each Jacobian column is an average of
central differences over several step lengths. Block codecs make the
Jacobian block diagonal, and one perturbation per within-block position
serves every block at once.
"""
from pathlib import Path

import numpy as np

from pnppost.codecs import BlockDctCodec, CountingCodec, PairTransformCodec
from pnppost.core import BlockGrid, read_pgm
from pnppost.jacobian import StepSet, estimate_block_jacobian, estimate_naive_jacobian

img = read_pgm(Path(__file__).resolve().parents[1] / "tests" / "data" / "astronaut_64.pgm")

###############################################################################
# An 8x8 DCT coder on a 64x64 image: 64 blocks of 64x64 Jacobian entries,
# estimated with 2 * 5 * 64 codec calls regardless of image size.
codec = CountingCodec(BlockDctCodec(scale=2.0))
grid = BlockGrid(img.shape, (8, 8))
steps = StepSet.scaled(135.0)  # {13.5, 27, ..., 67.5}
base = codec(img)
codec.calls = 0
lin = estimate_block_jacobian(codec, img, grid, steps, base_value=base)
print(f"{len(lin.blocks)} blocks, {codec.calls} codec calls")

###############################################################################
# The model is exact at its base point and close nearby.
print("exact at base point:", lin(img) == base)
nudge = np.random.default_rng(0).normal(scale=2.0, size=img.shape)
err_lin = np.abs(lin(img.pixels + nudge).pixels - codec(img.pixels + nudge).pixels).mean()
err_const = np.abs(base.pixels - codec(img.pixels + nudge).pixels).mean()
print(f"mean error after a small nudge: linear model {err_lin:.3f}, constant model {err_const:.3f}")

###############################################################################
# Perturbing one pixel at a time gives exactly the same numbers; it just
# costs a call pair per pixel instead of per block position.
small = img.pixels[:16, :16]
g = BlockGrid(small.shape, (8, 8))
fast = estimate_block_jacobian(BlockDctCodec(2.0), small, g, steps)
slow = estimate_naive_jacobian(BlockDctCodec(2.0), small, g, steps)
print("batched == naive:", all(np.array_equal(a, b) for a, b in zip(fast.blocks, slow.blocks)))

###############################################################################
# The pair codec's 2x2 blocks are symmetric. A coefficient far from a cell
# edge gets gain 0; one sitting right at an edge sees the full jump through
# the small steps and can get a gain well above 1.
pair = PairTransformCodec(30.0)
plin = estimate_block_jacobian(pair, img, BlockGrid(img.shape, (2, 1)), StepSet.scaled(30.0))
for i in (0, 100, 1000):
    print(f"pair block {i}:", plin.blocks[i].round(3).tolist())
