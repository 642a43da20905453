"""Solver parameter schedules per codec kind, as functions of the bit rate."""
from __future__ import annotations

from .codecs import bitrate_to_step
from .jacobian import StepSet
from .solver import SolverConfig

KINDS = ("scalar", "pair", "dct")


def preset(kind: str, rate: float, area: str = "aligned", delta_tilde: float | None = None) -> SolverConfig:
    """Solver configuration for ``kind`` at ``rate``.

    For ``pair`` the rate is the effective rate ``16 - log2(step)``; ``area``
    selects the beta schedule for the aligned or rotated approximation area.
    ``delta_tilde`` overrides the step-set base (the default
    ``135 / rate`` assumes real JPEG bit rates).
    """
    if not rate > 0:
        raise ValueError("rate must be positive")
    if kind == "scalar":
        base = bitrate_to_step("scalar", rate) if delta_tilde is None else delta_tilde
        return SolverConfig(
            lam=0.01,
            beta=500 * 2 ** (-2 * rate),
            mu=5e-4 * 2 ** (0.6 * rate),
            steps=StepSet.scaled(base),
            max_iters=6,
            block_shape=(1, 1),
        )
    if kind == "pair":
        if area not in ("aligned", "rotated"):
            raise ValueError("area must be 'aligned' or 'rotated'")
        base = bitrate_to_step("pair", rate) if delta_tilde is None else delta_tilde
        return SolverConfig(
            lam=0.03,
            beta=(200 if area == "aligned" else 500) * 2 ** (-0.5 * rate),
            mu=5e-5 * 2 ** (0.8 * rate),
            steps=StepSet.scaled(base),
            max_iters=10,
            block_shape=(2, 1),
        )
    if kind == "dct":
        base = 135.0 / rate if delta_tilde is None else delta_tilde
        return SolverConfig(
            lam=0.15,
            beta=2.0 / rate,
            mu=0.01 * 2**rate,
            steps=StepSet.scaled(base),
            max_iters=8,
            block_shape=(8, 8),
        )
    raise ValueError(f"unknown codec kind {kind!r}; expected one of {KINDS}")
