"""
A transform coder looks like a filter
=====================================

Quantizing the coefficients of a unitary transform and fitting the best
affine map over a cube aligned with the transform axes gives a diagonal
operator in the transform domain. Its diagonal is a frequency response
that depends on how large the window is compared to each quantizer's step.
"""
import numpy as np

from pnppost.quantlin import (
    ScalarQuantizer,
    TransformCoder,
    dct_matrix,
    filter_response,
    fit_transform_coder,
    rotation_45,
    signal_domain_lmse,
)

###############################################################################
# Two dimensions first: a 45 degree rotation with one-bit quantizers. The
# second coefficient sits far from its jump, so it is simply blocked.
u = rotation_45()
tc = TransformCoder(u, [ScalarQuantizer.two_level()] * 2)
x0 = u @ np.array([0.0, 15.0])
rot = fit_transform_coder(tc, x0, 1.0, area="rotated")
print("transform-domain gains:", rot.transform_gains, "offsets:", rot.transform_offset)
print("signal-domain matrix:\n", rot.matrix)

###############################################################################
# Over the rotated cube the error splits into per-coefficient errors. A
# Monte-Carlo integral in the signal domain confirms the sum.
print("sum of scalar errors:", rot.lmse)
print("Monte-Carlo estimate:", signal_domain_lmse(tc, rot, x0, 1.0, "rotated", 500_000, seed=0))

###############################################################################
# Over the axis-aligned cube there is no closed form; a seeded Monte-Carlo
# least-squares fit stands in.
aligned = fit_transform_coder(tc, x0, 1.0, area="aligned", n_samples=200_000, seed=0)
print("aligned-area matrix:\n", aligned.matrix.round(4))

###############################################################################
# Now 32 DCT coefficients with steps growing as 2^(i/4). Small windows stop
# everything, huge ones pass everything, and in between low frequencies
# (small steps) pass while high frequencies (large steps) are attenuated.
n = 32
steps = 2.0 ** (np.arange(1, n + 1) / 4)
tc = TransformCoder(dct_matrix(n), [ScalarQuantizer.uniform(s) for s in steps])
x0 = tc.transform @ (steps / 2)
for delta in (0.5, 5.0, 50.0, 500.0):
    g = filter_response(tc, x0, delta)
    print(f"delta={delta:6}: " + " ".join(f"{v:.2f}" for v in g[::4]))
