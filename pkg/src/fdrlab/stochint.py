"""Discrete stochastic integrals and forward SDE schemes.

The evaluation-point family ``f* = alpha f_{k+1} + (1 - alpha) f_k`` spans the
Ito rule (``alpha = 0``) and the Stratonovich rule (``alpha = 1/2``).  Energy
and power equations are integrated with Euler-Maruyama (Ito form) or the
Heun predictor-corrector (Stratonovich form); states are clamped at zero so
square-root diffusions stay defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .randpath import CircuitParams, TimeGrid, WienerPath

__all__ = [
    "AlphaRule",
    "ITO",
    "STRATONOVICH",
    "SdeSpec",
    "alpha_integral",
    "alpha_integral_path",
    "alpha_integral_law",
    "euler_maruyama",
    "stratonovich_heun",
    "heun_step",
    "energy_sde",
    "power_sde",
    "ideal_circuit_current",
]


@dataclass(frozen=True)
class AlphaRule:
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha!r}")


ITO = AlphaRule(0.0)
STRATONOVICH = AlphaRule(0.5)


def _as_rule(rule) -> AlphaRule:
    return rule if isinstance(rule, AlphaRule) else AlphaRule(float(rule))


def _integrand_values(integrand, integrator: WienerPath) -> np.ndarray:
    grid = getattr(integrand, "grid", None)
    if grid is not None and grid != integrator.grid:
        raise ValueError("integrand and integrator live on different grids")
    values = np.asarray(getattr(integrand, "values", integrand), dtype=float)
    if values.shape[-1] != integrator.grid.n_nodes:
        raise ValueError(
            f"integrand has {values.shape[-1]} nodes, integrator grid has "
            f"{integrator.grid.n_nodes}"
        )
    return values


def alpha_integral_path(integrand, integrator: WienerPath, rule) -> np.ndarray:
    """Running sums ``S_k = sum_{j<k} f*_j dB_j`` (``S_0 = 0``) on every node."""
    rule = _as_rule(rule)
    f = _integrand_values(integrand, integrator)
    f_star = (1.0 - rule.alpha) * f[..., :-1] + rule.alpha * f[..., 1:]
    terms = f_star * integrator.increments
    out = np.zeros(terms.shape[:-1] + (terms.shape[-1] + 1,))
    np.cumsum(terms, axis=-1, out=out[..., 1:])
    return out


def alpha_integral(integrand, integrator: WienerPath, rule) -> np.ndarray | float:
    """``sum_k (alpha f_{k+1} + (1-alpha) f_k)(B_{k+1} - B_k)`` over the whole grid."""
    rule = _as_rule(rule)
    f = _integrand_values(integrand, integrator)
    f_star = (1.0 - rule.alpha) * f[..., :-1] + rule.alpha * f[..., 1:]
    total = np.sum(f_star * integrator.increments, axis=-1)
    return float(total) if np.ndim(total) == 0 else total


def alpha_integral_law(B_t, t: float, rule) -> np.ndarray | float:
    """Continuum value of the integral of ``B`` against itself: ``B_t^2/2 + (alpha - 1/2) t``."""
    rule = _as_rule(rule)
    return 0.5 * np.asarray(B_t) ** 2 + (rule.alpha - 0.5) * t


def ideal_circuit_current(I_0, V: float, L: float, integral_BB) -> np.ndarray:
    """Current of the resistance-free circuit ``L dI = V B dB``.

    The prefactor is ``V / L``, which is what integrating the circuit equation
    gives; the isotropy requirement ``E[I_t] = I_0`` does not depend on it.
    """
    return np.asarray(I_0) + (V / L) * np.asarray(integral_BB)


@dataclass(frozen=True)
class SdeSpec:
    """Scalar SDE ``dx = drift(x, t) dt + diffusion(x, t) dB`` in a stated interpretation."""

    drift: Callable
    diffusion: Callable
    interpretation: str = "ito"
    clamp_at_zero: bool = True

    def __post_init__(self):
        if self.interpretation not in ("ito", "stratonovich"):
            raise ValueError(f"unknown interpretation {self.interpretation!r}")


def energy_sde(params: CircuitParams, interpretation: str = "ito") -> SdeSpec:
    """Energy ``E = L I^2 / 2`` of the noisy circuit.

    Ito:           dE = (V^2/2L - 2(R/L) E) dt + sqrt(2 V^2 E / L) dB
    Stratonovich:  dE = -2(R/L) E dt + sqrt(2 V^2 E / L) o dB
    """
    source = params.V**2 / (2.0 * params.L) if interpretation == "ito" else 0.0
    k = 2.0 * params.rate
    g = 2.0 * params.V**2 / params.L

    def drift(x, t):
        return source - k * x

    def diffusion(x, t):
        return np.sqrt(g * x)

    return SdeSpec(drift, diffusion, interpretation)


def power_sde(params: CircuitParams, interpretation: str = "ito") -> SdeSpec:
    """Dissipated power ``D = R I^2``; same structure as the energy equation scaled by 2R/L."""
    rv2 = params.R * params.V**2 / params.L**2
    source = rv2 if interpretation == "ito" else 0.0
    k = 2.0 * params.rate

    def drift(x, t):
        return source - k * x

    def diffusion(x, t):
        return 2.0 * np.sqrt(rv2 * x)

    return SdeSpec(drift, diffusion, interpretation)


def _clamp(x, spec: SdeSpec):
    return np.maximum(x, 0.0) if spec.clamp_at_zero else x


def _start(x0, path: WienerPath):
    lead = path.increments.shape[:-1]
    out = np.empty(lead + (path.grid.n_nodes,))
    out[..., 0] = np.broadcast_to(np.asarray(x0, dtype=float), lead)
    return out


def euler_maruyama(spec: SdeSpec, x0, path: WienerPath) -> np.ndarray:
    if spec.interpretation != "ito":
        raise ValueError("Euler-Maruyama integrates Ito equations only")
    x = _start(x0, path)
    times = path.grid.times
    dt = path.grid.dt
    dB = path.increments
    for k in range(path.grid.n_steps):
        xk = _clamp(x[..., k], spec)
        step = xk + spec.drift(xk, times[k]) * dt + spec.diffusion(xk, times[k]) * dB[..., k]
        x[..., k + 1] = _clamp(step, spec)
    return x


def heun_step(spec: SdeSpec, xk, t: float, dt: float, dB):
    """One Stratonovich Heun step; drift and diffusion are both trapezoid-averaged."""
    xk = _clamp(xk, spec)
    a0 = spec.drift(xk, t)
    b0 = spec.diffusion(xk, t)
    pred = _clamp(xk + a0 * dt + b0 * dB, spec)
    a1 = spec.drift(pred, t + dt)
    b1 = spec.diffusion(pred, t + dt)
    return _clamp(xk + 0.5 * (a0 + a1) * dt + 0.5 * (b0 + b1) * dB, spec)


def stratonovich_heun(spec: SdeSpec, x0, path: WienerPath) -> np.ndarray:
    if spec.interpretation != "stratonovich":
        raise ValueError("the Heun scheme here integrates Stratonovich equations only")
    x = _start(x0, path)
    times = path.grid.times
    dt = path.grid.dt
    for k in range(path.grid.n_steps):
        x[..., k + 1] = heun_step(spec, x[..., k], times[k], dt, path.increments[..., k])
    return x
