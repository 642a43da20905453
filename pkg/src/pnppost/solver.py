"""Plug-and-Play ADMM postprocessing of compressed images.

Each iteration re-linearizes the codec around the previous estimate, solves
the resulting block-separable least-squares problem for ``x``, denoises
``x + u`` to get ``v`` and updates the scaled dual ``u``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .codecs import Codec, PairTransformCodec
from .core import BlockGrid, ImageBuffer, as_array
from .jacobian import LinearizedCodec, StepSet, estimate_block_jacobian
from .metrics import psnr
from .quantlin import Interval, ScalarQuantizer, fit_scalar, rotation_45

log = logging.getLogger(__name__)


def sqrt_strength(beta: float, lam: float) -> float:
    """Default denoiser noise level: ``sqrt(beta / lambda)`` gray levels."""
    return math.sqrt(beta / lam)


@dataclass(frozen=True)
class SolverConfig:
    lam: float
    beta: float
    mu: float
    steps: StepSet
    max_iters: int
    block_shape: tuple[int, int] = (1, 1)
    stop_threshold: float = 0.05
    clip_output: bool = True
    output_iterate: str = "v"
    sigma_scale: float = 1.0
    workers: int | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.mu >= 0:
            raise ValueError("mu must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.stop_threshold > 0:
            raise ValueError("stop_threshold must be positive")
        if self.output_iterate not in ("x", "v"):
            raise ValueError("output_iterate must be 'x' or 'v'")
        if not isinstance(self.steps, StepSet):
            object.__setattr__(self, "steps", StepSet(tuple(self.steps)))
        object.__setattr__(self, "block_shape", tuple(int(v) for v in self.block_shape))

    @property
    def sigma(self) -> float:
        """Noise level handed to the denoiser."""
        return self.sigma_scale * sqrt_strength(self.beta, self.lam)

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass
class SolverState:
    x_hat: ImageBuffer
    v_hat: ImageBuffer
    u: np.ndarray
    iteration: int = 0
    delta_u: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    psnr_vs_input: list[float] = field(default_factory=list)
    # iterates per completed iteration; u_history[0] is the initial zero dual
    x_history: list[np.ndarray] = field(default_factory=list)
    v_history: list[np.ndarray] = field(default_factory=list)
    u_history: list[np.ndarray] = field(default_factory=list)
    stop_reason: str = ""


class SolverError(RuntimeError):
    """A sub-step failed; ``state`` holds the last completed iteration."""

    def __init__(self, message, state: SolverState):
        super().__init__(message)
        self.state = state


def x_step(lin: LinearizedCodec, y, x_tilde, x_prev, lam: float, mu: float) -> ImageBuffer:
    """Minimize ``|y - C_lin(x)|^2 + lam/2 |x - x_tilde|^2 + mu |x - x_prev|^2``.

    Block ``k`` solves ``(2 J^T J + (lam + 2 mu) I) x = 2 J^T (y - d) + lam x_tilde + 2 mu x_prev``
    with ``d = C(x0) - J x0``. The system is solved for the increment
    ``x - x_prev``, so a zero residual gives back ``x_prev`` bit-exactly.
    """
    if not (lam > 0 or mu > 0):
        raise ValueError("need lam > 0 or mu > 0 for a unique minimizer")
    grid = lin.grid
    for img in (y, x_tilde, x_prev):
        grid._check_shape(as_array(img).shape)
    yb = grid.gather(y)
    xt = grid.gather(x_tilde)
    xp = grid.gather(x_prev)
    x0 = grid.gather(lin.base_point)
    c0 = grid.gather(lin.base_value)
    out = []
    for J, yk, ck, x0k, xtk, xpk in zip(lin.stacks, yb, c0, x0, xt, xp):
        n = J.shape[-1]
        jt = np.swapaxes(J, 1, 2)
        lhs = 2 * jt @ J + (lam + 2 * mu) * np.eye(n)
        resid = yk - ck - np.einsum("bij,bj->bi", J, xpk - x0k)
        rhs = 2 * np.einsum("bij,bj->bi", jt, resid) + lam * (xtk - xpk)
        out.append(xpk + np.linalg.solve(lhs, rhs[..., None])[..., 0])
    return ImageBuffer(grid.scatter(out))


def x_step_objective(lin: LinearizedCodec, y, x, x_tilde, x_prev, lam, mu) -> float:
    r = as_array(y) - as_array(lin.evaluate(x))
    x = as_array(x)
    return float(
        np.sum(r * r)
        + lam / 2 * np.sum((x - as_array(x_tilde)) ** 2)
        + mu * np.sum((x - as_array(x_prev)) ** 2)
    )


def x_step_gradient(lin: LinearizedCodec, y, x, x_tilde, x_prev, lam, mu) -> np.ndarray:
    """Gradient of :func:`x_step_objective` with respect to ``x``."""
    grid = lin.grid
    r = grid.gather(as_array(y) - as_array(lin.evaluate(x)))
    jtr = [np.einsum("bji,bj->bi", J, rk) for J, rk in zip(lin.stacks, r)]
    x = as_array(x)
    return -2 * grid.scatter(jtr) + lam * (x - as_array(x_tilde)) + 2 * mu * (x - as_array(x_prev))


def v_step(denoiser: Callable, v_tilde, sigma: float) -> ImageBuffer:
    if not sigma > 0:
        raise ValueError("denoiser strength must be positive")
    out = denoiser(ImageBuffer(as_array(v_tilde)), sigma)
    out = ImageBuffer(as_array(out))
    if out.shape != as_array(v_tilde).shape:
        raise ValueError("denoiser changed the image shape")
    return out


Linearizer = Callable[[Codec, np.ndarray, ImageBuffer, BlockGrid, "SolverConfig"], LinearizedCodec]


def finite_difference_linearizer(codec, x, cx, grid, cfg) -> LinearizedCodec:
    return estimate_block_jacobian(codec, x, grid, cfg.steps, base_value=cx, workers=cfg.workers)


def rotated_pair_linearizer(codec, x, cx, grid, cfg) -> LinearizedCodec:
    """Analytic linearization of :class:`PairTransformCodec` over rotated squares.

    For each 2x1 block the transform-domain gains are the optimal scalar
    slopes of the mid-riser quantizer on ``[c - delta, c + delta]``, averaged
    over the step set, and mapped back with ``A = U diag(g) U^T``. The affine
    model keeps ``C(x0)`` as its value at the base point.
    """
    if not isinstance(codec, PairTransformCodec):
        raise TypeError("rotated-area linearization is defined for PairTransformCodec only")
    if grid.block_shape != (2, 1):
        raise ValueError("rotated-area linearization needs a 2x1 grid")
    u = rotation_45()
    q = ScalarQuantizer.uniform(codec.step)
    stacks = []
    for (dh, dw), _, ix in grid.groups:
        xb = as_array(x).ravel()[ix]
        if dh * dw == 1:
            gains = np.array([[np.mean([fit_scalar(q, Interval(float(v), d)).slope for d in cfg.steps])] for v in xb[:, 0]])
            stacks.append(gains[:, :, None])
            continue
        coef = xb @ u  # rows of U^T x
        gains = np.array(
            [[np.mean([fit_scalar(q, Interval(float(c), d)).slope for d in cfg.steps]) for c in row] for row in coef]
        )
        stacks.append(np.einsum("ik,bk,jk->bij", u, gains, u))
    return LinearizedCodec.from_stacks(grid, stacks, x, cx)


def run(
    codec: Codec,
    y,
    denoiser: Callable,
    cfg: SolverConfig,
    linearizer: Linearizer = finite_difference_linearizer,
    callback: Callable[[SolverState], None] | None = None,
) -> tuple[ImageBuffer, SolverState]:
    """Restore ``y`` (the decompressed image) and return (restored, state).

    Stops when the mean absolute dual change drops below
    ``cfg.stop_threshold``, when it grows relative to the previous iteration,
    or after ``cfg.max_iters`` iterations.
    """
    y_arr = np.array(as_array(y))
    grid = BlockGrid(y_arr.shape, cfg.block_shape)
    state = SolverState(x_hat=ImageBuffer(y_arr), v_hat=ImageBuffer(y_arr), u=np.zeros_like(y_arr))
    state.u_history.append(state.u)
    n = y_arr.size
    cx = codec(state.x_hat)

    for i in range(1, cfg.max_iters + 1):
        try:
            lin = linearizer(codec, state.x_hat.pixels, cx, grid, cfg)
            x_tilde = state.v_hat.pixels - state.u
            x_new = x_step(lin, y_arr, x_tilde, state.x_hat, cfg.lam, cfg.mu)
            v_tilde = x_new.pixels + state.u
            v_new = v_step(denoiser, v_tilde, cfg.sigma)
            gap = x_new.pixels - v_new.pixels
            u_new = state.u + gap
            cx = codec(x_new)
        except Exception as exc:
            raise SolverError(f"iteration {i} failed: {exc}", state) from exc

        du = float(np.sum(np.abs(u_new - state.u)) / n)
        state.x_history.append(x_new.pixels)
        state.v_history.append(v_new.pixels)
        state.u_history.append(u_new)
        state.x_hat, state.v_hat, state.u = x_new, v_new, u_new
        state.iteration = i
        state.objective.append(float(np.sum((y_arr - cx.pixels) ** 2)))
        state.psnr_vs_input.append(psnr(y_arr, _output(state, cfg)))
        state.delta_u.append(du)
        log.debug("iter %d: delta_u=%.4g objective=%.6g", i, du, state.objective[-1])
        if callback is not None:
            callback(state)

        if du < cfg.stop_threshold:
            state.stop_reason = "converged"
            break
        if i >= 2 and du > state.delta_u[-2]:
            state.stop_reason = "diverging"
            break
    else:
        state.stop_reason = "max_iters"

    return _output(state, cfg), state


def _output(state: SolverState, cfg: SolverConfig) -> ImageBuffer:
    img = state.v_hat if cfg.output_iterate == "v" else state.x_hat
    if cfg.clip_output:
        return ImageBuffer(np.clip(img.pixels, 0, 255))
    return img
