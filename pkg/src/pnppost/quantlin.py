"""Optimal local linear approximation of scalar quantizers and transform coders.

A quantizer ``q`` is approximated on the interval ``[x0 - delta, x0 + delta]``
by the line ``a*x + b`` minimizing the local mean squared error

    lmse(a, b) = 1/(2 delta) * integral (q(x) - a x - b)^2 dx .

Because ``q`` is piecewise constant every integral involved is a finite sum of
polynomial terms, so :func:`fit_scalar` is exact up to floating point. The
brute-force :func:`fit_scalar_oracle` exists only to cross-check it.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import check_finite_matrix


@dataclass(frozen=True)
class Interval:
    center: float
    half_width: float

    def __post_init__(self):
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise ValueError(f"half_width must be positive and finite, got {self.half_width}")
        if not math.isfinite(self.center):
            raise ValueError("center must be finite")

    @property
    def lo(self) -> float:
        return self.center - self.half_width

    @property
    def hi(self) -> float:
        return self.center + self.half_width


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    lmse: float

    def __iter__(self):
        return iter((self.slope, self.intercept, self.lmse))


class ScalarQuantizer:
    """Piecewise-constant scalar quantizer.

    Use the constructors :meth:`two_level`, :meth:`uniform` and
    :meth:`general`. Decision regions are left-open, right-closed for the
    general/two-level kinds, ``(d_{i-1}, d_i]``, matching ``q2(0) = -1/2``;
    the uniform mid-riser uses ``[k step, (k+1) step)`` as ``floor`` does.
    Boundary conventions have no effect on any fit (zero-measure sets).
    """

    def __init__(self, kind: str, boundaries=None, levels=None, step=None, offset=0.0, gain=1.0):
        self.kind = kind
        self.offset = float(offset)
        self.gain = float(gain)
        if kind == "uniform":
            if not (step is not None and step > 0 and math.isfinite(step)):
                raise ValueError(f"uniform quantizer needs a positive step, got {step}")
            self.step = float(step)
            self.boundaries = None
            self.levels = None
        else:
            b = np.asarray(boundaries, dtype=np.float64).ravel()
            r = np.asarray(levels, dtype=np.float64).ravel()
            if r.size != b.size + 1:
                raise ValueError("levels must have exactly one more entry than boundaries")
            if b.size and np.any(np.diff(b) <= 0):
                raise ValueError("decision boundaries must be strictly increasing")
            if not (np.all(np.isfinite(b)) and np.all(np.isfinite(r))):
                raise ValueError("boundaries and levels must be finite")
            self.step = None
            self.boundaries = b
            self.levels = r

    @classmethod
    def two_level(cls) -> "ScalarQuantizer":
        """Normalized one-bit quantizer: -1/2 for x <= 0, +1/2 for x > 0."""
        return cls("two_level", boundaries=[0.0], levels=[-0.5, 0.5])

    @classmethod
    def uniform(cls, step: float = 1.0, offset: float = 0.0, gain: float = 1.0) -> "ScalarQuantizer":
        """Mid-riser quantizer ``gain * (floor((x - offset)/step) * step + step/2 + offset)``."""
        return cls("uniform", step=step, offset=offset, gain=gain)

    @classmethod
    def general(cls, boundaries, levels) -> "ScalarQuantizer":
        return cls("general", boundaries=boundaries, levels=levels)

    def scaled(self, s: float) -> "ScalarQuantizer":
        """Quantizer with outputs multiplied by ``s`` (same decision regions)."""
        if self.kind == "uniform":
            return ScalarQuantizer.uniform(self.step, self.offset, self.gain * s)
        return ScalarQuantizer(self.kind, boundaries=self.boundaries, levels=self.levels * s)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "uniform":
            y = np.floor((x - self.offset) / self.step) * self.step + self.step / 2 + self.offset
            return y * self.gain
        return self.levels[np.searchsorted(self.boundaries, x, side="left")]

    def pieces(self, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Constant pieces of ``q`` on ``[lo, hi]`` as (left, right, level) arrays."""
        if self.kind == "uniform":
            s, o = self.step, self.offset
            k0 = math.floor((lo - o) / s)
            k1 = math.floor((hi - o) / s)
            k = np.arange(k0, k1 + 1, dtype=np.float64)
            left = np.maximum(k * s + o, lo)
            right = np.minimum((k + 1) * s + o, hi)
            level = (k * s + s / 2 + o) * self.gain
        else:
            inner = self.boundaries[(self.boundaries > lo) & (self.boundaries < hi)]
            edges = np.concatenate(([lo], inner, [hi]))
            left, right = edges[:-1], edges[1:]
            level = self(0.5 * (left + right))
        keep = right > left
        return left[keep], right[keep], level[keep]

    def __repr__(self):
        if self.kind == "uniform":
            return f"ScalarQuantizer.uniform(step={self.step}, offset={self.offset}, gain={self.gain})"
        if self.kind == "two_level":
            return "ScalarQuantizer.two_level()"
        return f"ScalarQuantizer.general({self.boundaries.tolist()}, {self.levels.tolist()})"


def _centered_pieces(q: ScalarQuantizer, iv: Interval):
    left, right, level = q.pieces(iv.lo, iv.hi)
    # work in t = x - x0 so large centers do not cost precision
    mid = 0.5 * (left + right) - iv.center
    half = 0.5 * (right - left)
    return mid, half, level


def local_mse(q: ScalarQuantizer, iv: Interval, slope: float, intercept: float) -> float:
    """Exact local MSE of the line ``slope*x + intercept`` against ``q``."""
    mid, half, level = _centered_pieces(q, iv)
    # on a piece centred at m with half-width h, with e = r - line(x0 + m):
    #   integral (e - a s)^2 ds over [-h, h] = 2h e^2 + 2 a^2 h^3 / 3
    e = level - (slope * (iv.center + mid) + intercept)
    total = np.sum(2 * half * e * e + (2.0 / 3.0) * slope * slope * half**3)
    return float(total / (2 * iv.half_width))


def fit_scalar(q: ScalarQuantizer, iv: Interval) -> LinearFit:
    """Optimal (slope, intercept) of ``q`` over ``iv`` and the attained local MSE."""
    mid, half, level = _centered_pieces(q, iv)
    if level.size == 1:
        # interval inside one decision region: the fit is the level itself
        return LinearFit(0.0, float(level[0]), 0.0)
    d = iv.half_width
    mean_q = float(np.sum(level * 2 * half)) / (2 * d)  # L_b
    mean_tq = float(np.sum(level * 2 * half * mid)) / (2 * d)  # L_a - L_b x0
    a = 3.0 * mean_tq / (d * d)
    b = mean_q - a * iv.center
    return LinearFit(a, b, local_mse(q, iv, a, b))


@lru_cache(maxsize=4)
def _unit_grid(n: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Midpoints of ``n`` equal cells on [-1, 1], their centred copy and its sum of squares."""
    u = (np.arange(n, dtype=np.float64) + 0.5) * (2.0 / n) - 1.0
    uc = u - u.mean()
    u.flags.writeable = False
    uc.flags.writeable = False
    return u, uc, float(np.dot(uc, uc))


def fit_scalar_oracle(q: ScalarQuantizer, iv: Interval, n_samples: int = 1_000_000) -> LinearFit:
    """Least-squares line through ``n_samples`` midpoint samples of ``q``."""
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    d = iv.half_width
    u, uc, suu = _unit_grid(n_samples)
    y = q(iv.center + d * u)
    if y.min() == y.max():
        return LinearFit(0.0, float(y[0]), 0.0)
    ym = float(y.mean())
    y -= ym
    slope_u = float(np.dot(uc, y)) / suu  # slope in the unit variable
    a = slope_u / d
    # centred regression: residual energy = |y_c|^2 - slope^2 |u_c|^2
    lmse = max(float(np.dot(y, y)) - slope_u * slope_u * suu, 0.0) / n_samples
    b = ym - slope_u * (u.mean()) - a * iv.center
    return LinearFit(a, b, lmse)


def two_level_closed_form(iv: Interval) -> LinearFit:
    """Closed-form optimal fit of the normalized two-level quantizer."""
    x0, d = iv.center, iv.half_width
    if d <= abs(x0):
        return LinearFit(0.0, 0.5 if x0 > 0 else -0.5, 0.0)
    ratio = x0 / d
    a = 0.75 / d * (1 - ratio * ratio)
    b = 0.75 * x0 / d * (ratio * ratio - 1.0 / 3.0)
    lmse = (1 + 3 * ratio * ratio) * (1 - ratio * ratio) / 16
    return LinearFit(a, b, lmse)


def uniform_closed_form(step: float, iv: Interval) -> LinearFit:
    """Fit of the mid-riser quantizer as a sum of shifted two-level fits.

    Only the steps located strictly inside the interval contribute a slope;
    the remaining ones are locally constant and fold into the intercept.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    lo, hi = iv.lo, iv.hi
    k_lo = math.floor(lo / step)
    base = k_lo * step + step / 2  # level of the cell holding the left end
    ks = range(k_lo + 1, math.ceil(hi / step))
    a = 0.0
    b = base
    for k in ks:
        tau = k * step
        if not lo < tau < hi:
            continue
        # step * (q2((x - tau)/step) + 1/2): jump of height `step` at tau
        f = two_level_closed_form(Interval((iv.center - tau) / step, iv.half_width / step))
        a += f.slope
        b += step * (f.intercept + 0.5) - f.slope * tau
    lmse = local_mse(ScalarQuantizer.uniform(step), iv, a, b)
    return LinearFit(a, b, lmse)


# --- transform coding -------------------------------------------------------


@dataclass(frozen=True)
class VectorLinearFit:
    matrix: np.ndarray
    offset: np.ndarray
    lmse: float
    # transform-domain parameters, set for the rotated area only
    transform_gains: np.ndarray | None = None
    transform_offset: np.ndarray | None = None
    n_samples: int | None = None

    def __call__(self, x):
        return self.matrix @ np.asarray(x, dtype=np.float64) + self.offset


class TransformCoder:
    """``C(x) = U Q(U^T x)`` with a unitary ``U`` and one scalar quantizer per coefficient."""

    def __init__(self, transform, quantizers: Sequence[ScalarQuantizer]):
        u = check_finite_matrix(transform)
        n = u.shape[0]
        if u.shape != (n, n):
            raise ValueError("transform must be square")
        if np.max(np.abs(u.T @ u - np.eye(n))) > 1e-12:
            raise ValueError("transform must be unitary (U^T U == I within 1e-12)")
        if len(quantizers) != n:
            raise ValueError(f"need {n} quantizers, got {len(quantizers)}")
        self.transform = u
        self.quantizers = list(quantizers)

    @property
    def size(self) -> int:
        return self.transform.shape[0]

    def __call__(self, x):
        """Apply to a vector of length N or to rows of an (M, N) array."""
        x = np.asarray(x, dtype=np.float64)
        coef = x @ self.transform  # rows of U^T x
        qc = np.empty_like(coef)
        for i, q in enumerate(self.quantizers):
            qc[..., i] = q(coef[..., i])
        return qc @ self.transform.T


def rotation_45() -> np.ndarray:
    """The 2x2 transform ``(1/sqrt 2) [[1, -1], [1, 1]]``."""
    return np.array([[1.0, -1.0], [1.0, 1.0]]) / math.sqrt(2.0)


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis as columns (so ``U^T x`` is the DCT of x)."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * math.sqrt(2.0 / n)
    m[0] /= math.sqrt(2.0)
    return m.T


def fit_transform_coder(
    tc: TransformCoder,
    x0,
    delta: float,
    area: str = "rotated",
    n_samples: int = 200_000,
    seed: int = 0,
) -> VectorLinearFit:
    """Optimal affine approximation of a transform coder around ``x0``.

    ``area="rotated"`` uses the cube aligned with the transform axes, where
    the problem separates into one scalar fit per coefficient and the result
    is exact. ``area="aligned"`` uses the signal-domain cube and is solved by
    Monte-Carlo least squares with ``n_samples`` points drawn with ``seed``.
    """
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    n = tc.size
    if x0.size != n:
        raise ValueError(f"x0 has length {x0.size}, transform is {n}x{n}")
    if not delta > 0:
        raise ValueError("delta must be positive")
    u = tc.transform
    if area == "rotated":
        xt0 = u.T @ x0
        fits = [fit_scalar(q, Interval(float(c), delta)) for q, c in zip(tc.quantizers, xt0)]
        gains = np.array([f.slope for f in fits])
        bt = np.array([f.intercept for f in fits])
        return VectorLinearFit(
            matrix=(u * gains) @ u.T,
            offset=u @ bt,
            lmse=float(sum(f.lmse for f in fits)),
            transform_gains=gains,
            transform_offset=bt,
        )
    if area == "aligned":
        rng = np.random.default_rng(seed)
        s = rng.uniform(-delta, delta, size=(n_samples, n))
        y = tc(x0 + s)
        design = np.hstack([s, np.ones((n_samples, 1))])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        a = coef[:n].T
        c = coef[n]
        resid = y - design @ coef
        return VectorLinearFit(
            matrix=a,
            offset=c - a @ x0,
            lmse=float(np.mean(np.sum(resid * resid, axis=1))),
            n_samples=n_samples,
        )
    raise ValueError(f"area must be 'rotated' or 'aligned', got {area!r}")


def filter_response(tc: TransformCoder, x0, delta: float) -> np.ndarray:
    """Per-coefficient pass gains (diagonal of the transform-domain fit)."""
    return fit_transform_coder(tc, x0, delta, area="rotated").transform_gains


def signal_domain_lmse(
    tc: TransformCoder, fit: VectorLinearFit, x0, delta: float, area: str, n_samples: int, seed: int = 0
) -> float:
    """Monte-Carlo estimate of the signal-domain local MSE of ``fit``.

    Points are drawn in the signal domain, uniformly over the rotated cube
    ``x0 + U s`` or the aligned cube ``x0 + s`` with ``|s|_inf <= delta``.
    """
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    rng = np.random.default_rng(seed)
    s = rng.uniform(-delta, delta, size=(n_samples, tc.size))
    x = x0 + (s @ tc.transform.T if area == "rotated" else s)
    resid = tc(x) - (x @ fit.matrix.T + fit.offset)
    return float(np.mean(np.sum(resid * resid, axis=1)))


# --- sweeps -----------------------------------------------------------------

CSV_HEADER = ("x0", "delta", "a", "b", "lmse")


def sweep_grid(
    q: ScalarQuantizer,
    x0_values: Iterable[float],
    delta_values: Iterable[float],
    fit: Callable[[ScalarQuantizer, Interval], LinearFit] = fit_scalar,
) -> list[tuple[float, float, float, float, float]]:
    """Rows ``(x0, delta, a, b, lmse)``, x0-major, for every grid point."""
    x0_values = [float(v) for v in x0_values]
    delta_values = [float(v) for v in delta_values]
    if not x0_values or not delta_values:
        raise ValueError("sweep ranges must be non-empty")
    rows = []
    for x0 in x0_values:
        for d in delta_values:
            f = fit(q, Interval(x0, d))
            rows.append((x0, d, f.slope, f.intercept, f.lmse))
    return rows


def rows_to_csv(rows, header=CSV_HEADER) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["%.12g" % v for v in row])
    return buf.getvalue()
