"""Threshold-versus-rival-rate sweeps of the small-discount switching state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import vanishing_threshold_grid
from .model import GameConfig

GRID_POINTS = 200
LAMBDA_0 = 100.0
U_MIN, U_MAX = 1.0, 10.0
RATIOS_2C = (0.01, 0.1, 0.5, 0.7, 0.95)
KINDS = ("fig2a", "fig2b", "fig2c", "fig2d", "custom")


@dataclass
class Sweep:
    kind: str
    a_minus: np.ndarray
    curves: dict[str, np.ndarray]

    @property
    def columns(self) -> list[str]:
        return ["a_minus_i", *self.curves]

    def rows(self):
        cols = list(self.curves.values())
        return [[float(a), *(float(c[k]) for c in cols)] for k, a in enumerate(self.a_minus)]


def feasible_grid(others_lambda_sum: float, u_min: float, u_max: float,
                  n: int = GRID_POINTS) -> np.ndarray:
    return np.linspace(others_lambda_sum * u_min, others_lambda_sum * u_max, n)


def _homogeneous(kind, n_players, gamma_over_lambda):
    grid = feasible_grid((n_players - 1) * LAMBDA_0, U_MIN, U_MAX)
    curves = {f"gamma/lambda={r:g}": vanishing_threshold_grid(LAMBDA_0, r * LAMBDA_0, grid, U_MIN, U_MAX)
              for r in gamma_over_lambda}
    return Sweep(kind, grid, curves)


def _classes(lams, gammas, u_min, u_max, labels):
    """Common feasible grid for several player classes; union if the ranges are disjoint."""
    total = sum(lams)
    lo = [(total - lam) * u_min for lam in lams]
    hi = [(total - lam) * u_max for lam in lams]
    a, b = max(lo), min(hi)
    if not a < b:
        a, b = min(lo), max(hi)
    grid = np.linspace(a, b, GRID_POINTS)
    curves = {}
    for lam, gam, label in zip(lams, gammas, labels):
        curves.setdefault(label, vanishing_threshold_grid(lam, gam, grid, u_min, u_max))
    return grid, curves


def run_sweep(kind: str, config: GameConfig | None = None, gamma: float = 70.0) -> Sweep:
    """Preset sweeps over a 200-point grid of rival rates.

    fig2a/fig2b: ten and thirty identical providers with gamma/lambda = 0.7;
    fig2c: ten providers and several gamma/lambda ratios;
    fig2d: ten providers, half with rate lambda_0 and half with 2 lambda_0;
    custom: one curve per distinct (lambda, gamma) class of ``config``.
    """
    if kind == "fig2a":
        return _homogeneous(kind, 10, (gamma / LAMBDA_0,))
    if kind == "fig2b":
        return _homogeneous(kind, 30, (gamma / LAMBDA_0,))
    if kind == "fig2c":
        return _homogeneous(kind, 10, RATIOS_2C)
    if kind == "fig2d":
        lams = [LAMBDA_0] * 5 + [2 * LAMBDA_0] * 5
        labels = ["lambda=" + f"{lam:g}" for lam in lams]
        grid, curves = _classes(lams, [gamma] * 10, U_MIN, U_MAX, labels)
        return Sweep(kind, grid, curves)
    if kind == "custom":
        if config is None:
            raise ValueError("custom sweep needs a scenario")
        lams = [pl.lam for pl in config.players]
        gams = [pl.gamma for pl in config.players]
        labels = [f"lambda={lam:g},gamma={g:g}" for lam, g in zip(lams, gams)]
        grid, curves = _classes(lams, gams, config.u_min, config.u_max, labels)
        return Sweep(kind, grid, curves)
    raise ValueError(f"unknown sweep kind {kind!r}")
