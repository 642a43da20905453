"""
Plugging in external codecs and denoisers
=========================================

Anything that reads and writes 8-bit PGM files can act as the codec or the
denoiser. The command template gets ``{in}`` and ``{out}`` (and ``{sigma}``
for denoisers); scratch files live in ``$PNPPOST_TMPDIR`` or the system temp
directory. Here a tiny Python script plays the role of a real encoder.
"""
import sys
import tempfile
from pathlib import Path

from pnppost.codecs import SubprocessCodec
from pnppost.core import read_pgm
from pnppost.denoise import SubprocessDenoiser, dct_threshold_denoiser
from pnppost.metrics import quality
from pnppost.jacobian import StepSet
from pnppost.solver import SolverConfig, run

clean = read_pgm(Path(__file__).resolve().parents[1] / "tests" / "data" / "astronaut_64.pgm")
work = Path(tempfile.mkdtemp())

###############################################################################
# A "codec" that codes 2x2 block means finely and the residual coarsely.
# Every call starts a Python process, so the demo keeps the image small and
# the step set short: 2 steps x 4 positions x 2 signs = 16 calls per
# Jacobian.
(work / "blockcoder.py").write_text(
    "import sys\n"
    "import numpy as np\n"
    "from pnppost.core import read_pgm, write_pgm\n"
    "x = read_pgm(sys.argv[1]).pixels\n"
    "h, w = x.shape\n"
    "b = x.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3)).repeat(2, 0).repeat(2, 1)\n"
    "write_pgm(sys.argv[2], np.round(b / 4) * 4 + np.round((x - b) / 24) * 24)\n"
)
clean = clean.pixels[16:48, 16:48]
codec = SubprocessCodec(f"{sys.executable} {work / 'blockcoder.py'} {{in}} {{out}}", block_shape=(2, 2))
y = codec(clean)

###############################################################################
# External codecs carry no preset, so every parameter is explicit.
cfg = SolverConfig(lam=0.15, beta=1.0, mu=0.04, steps=StepSet((6.0, 12.0)), max_iters=3, block_shape=(2, 2))
out, state = run(codec, y, dct_threshold_denoiser, cfg)
print(f"compressed [{quality(clean, y)}] -> restored [{quality(clean, out)}] in {state.iteration} iterations")

###############################################################################
# The same protocol for a denoiser; this one just copies its input, so the
# result equals the least-squares iterate without a prior.
den = SubprocessDenoiser("cp {in} {out}  # sigma={sigma}")
out, state = run(codec, y, den, cfg.with_(max_iters=1))
print(f"copy denoiser: [{quality(clean, out)}]")
