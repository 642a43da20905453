"""
Which window should the linearization use?
==========================================

For a transform coder the window can be a cube in pixel space (aligned
area, estimated numerically by finite differences) or a cube in the
transform domain (rotated area, available in closed form). Here both
drive the restoration of a pair-transform-coded image.
"""
import math
from pathlib import Path

from pnppost.codecs import PairTransformCodec
from pnppost.core import read_pgm
from pnppost.denoise import dct_threshold_denoiser
from pnppost.metrics import psnr
from pnppost.presets import preset
from pnppost.solver import rotated_pair_linearizer, run

root = Path(__file__).resolve().parents[1] / "tests" / "data"

###############################################################################
# Effective rate ``16 - log2(step)`` picks the parameters; each area has its
# own denoiser weight.
for name in ("astronaut_64", "camera_64"):
    clean = read_pgm(root / f"{name}.pgm")
    for step in (15, 20, 30, 40):
        codec = PairTransformCodec(step)
        y = codec(clean)
        rate = 16 - math.log2(step)
        al, _ = run(codec, y, dct_threshold_denoiser, preset("pair", rate, area="aligned"))
        ro, _ = run(codec, y, dct_threshold_denoiser, preset("pair", rate, area="rotated"), linearizer=rotated_pair_linearizer)
        base = psnr(clean, y)
        print(f"{name} step={step:2}: compressed {base:.2f} dB, aligned +{psnr(clean, al) - base:.2f}, rotated +{psnr(clean, ro) - base:.2f}")

###############################################################################
# With this small denoiser the ordering of the two areas depends on the
# image; the decisions file discusses a survey over several crops.
