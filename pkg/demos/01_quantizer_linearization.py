"""
Optimal straight lines through a staircase
==========================================

A quantizer is flat almost everywhere, so its derivative tells us nothing.
What we can ask instead is: over a window ``[x0 - delta, x0 + delta]``,
which line ``a x + b`` stays closest to it in the mean-square sense?
"""
import math

import numpy as np

from pnppost.quantlin import (
    Interval,
    ScalarQuantizer,
    fit_scalar,
    fit_scalar_oracle,
    rows_to_csv,
    sweep_grid,
    two_level_closed_form,
    uniform_closed_form,
)

two = ScalarQuantizer.two_level()
uni = ScalarQuantizer.uniform(1.0)

###############################################################################
# A window that straddles the jump of the one-bit quantizer gets a slope; a
# window that stays on one side gets a flat line at that level.
for x0, d in [(0.0, 1.0), (0.5, 1.0), (2.0, 1.0)]:
    f = fit_scalar(two, Interval(x0, d))
    print(f"two-level  x0={x0:4}  delta={d}:  a={f.slope:.4f}  b={f.intercept:+.4f}  lmse={f.lmse:.4f}")

###############################################################################
# The exact integrator agrees with brute-force least squares on a million
# samples, and with the closed form for the two-level case.
iv = Interval(0.3, 0.8)
print("exact   ", tuple(round(v, 6) for v in fit_scalar(two, iv)))
print("sampled ", tuple(round(v, 6) for v in fit_scalar_oracle(two, iv)))
print("closed  ", tuple(round(v, 6) for v in two_level_closed_form(iv)))

###############################################################################
# The error depends on the window only through ``delta / |x0|``; it is worst
# (1/12) on the ray ``delta = sqrt(3) |x0|``.
for x0 in (0.1, 1.0, 10.0):
    print(f"x0={x0:5}: lmse on the worst ray = {fit_scalar(two, Interval(x0, math.sqrt(3) * x0)).lmse:.6f}")

###############################################################################
# For the mid-riser staircase the fit is a sum of shifted one-bit fits. Wide
# windows see the identity line, narrow ones a constant, and in between the
# error peaks just above 0.106.
deltas = np.linspace(0.05, 3, 60)
worst = max(deltas, key=lambda d: fit_scalar(uni, Interval(0.5, d)).lmse)
print(f"uniform, x0 mid-cell: worst delta ~ {worst:.2f}, lmse {fit_scalar(uni, Interval(0.5, worst)).lmse:.4f}")
print("very wide window:", uniform_closed_form(1.0, Interval(0.5, 1e4)))

###############################################################################
# Whole surfaces go to CSV for any plotting tool.
rows = sweep_grid(two, np.linspace(0, 2, 41), np.linspace(0.05, 3, 60))
with open("two_level_surface.csv", "w") as f:
    f.write(rows_to_csv(rows))
print(f"wrote {len(rows)} rows to two_level_surface.csv")
