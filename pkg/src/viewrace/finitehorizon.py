"""Finite-horizon value machinery.

With ``t`` the time remaining until the horizon, the value of player i under
controls frozen on a time interval solves the linear transport equation

    dV/dt + p V - a (1 - x) dV/dx + b (1 - x) + c = 0,     V(x, 0) = 0.

Its homogeneous solutions are ``phi(v) (1 - x)^(-p/a)`` for an arbitrary
function ``phi`` of the characteristic variable ``v = ln(1 - x)/a - t``.
On the first interval ``phi`` is known in closed form; on later intervals it
is sampled along ``v`` by matching the previous piece at the boundary time
and interpolated with a monotone cubic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .dynamics import DomainError, simulate
from .hjb import piece_constants
from .model import GameConfig, Strategy

MATCH_TOL = 1e-5
DEFAULT_Y_FLOOR = 1e-12
DEFAULT_GRID = 1000


class GridInsufficient(RuntimeError):
    def __init__(self, message, defect=math.nan):
        super().__init__(message)
        self.defect = defect


def _y(x):
    y = 1.0 - np.asarray(x, dtype=float)
    if np.any(y <= 0):
        raise DomainError("x must be < 1")
    return y


def _particular_y(y, a, b, c, p):
    if p > 0:
        return y ** (-p / a) - (p * b * y + (p + a) * c) / (p * (p + a))
    return (b / a) * (1.0 - y) - (c / a) * np.log(y)


def fh_particular(x, a: float, b: float, c: float, p: float):
    """A time-independent solution of the transport equation.

    For ``p > 0`` this includes one copy of the homogeneous solution
    ``(1-x)^(-p/a)``; for ``p = 0`` it is the affine-plus-log form.
    """
    out = _particular_y(_y(x), a, b, c, p)
    return float(out) if np.ndim(out) == 0 else out


def fh_first_interval(x, t, a: float, b: float, c: float, p: float):
    """Value with ``t`` days to go when the controls never change.

    Direct integration of the discounted running cost along the exact
    trajectory; equals zero at ``t = 0`` and tends to the stationary value
    ``-c/p - b (1-x)/(p+a)`` as ``t`` grows.
    """
    y = _y(x)
    t = np.asarray(t, dtype=float)
    out = -(c / p) * -np.expm1(-p * t) - (b * y / (p + a)) * -np.expm1(-(p + a) * t)
    return float(out) if np.ndim(out) == 0 else out


def _first_phi(a, b, c, p) -> Callable:
    # phi such that phi(v) y^(-p/a) + fh_particular(x) reproduces fh_first_interval
    def phi(v):
        v = np.asarray(v, dtype=float)
        return -1.0 + np.exp(p * v) * (b * np.exp(a * v) / (p + a) + c / p)
    return phi


@dataclass(frozen=True)
class FhValuePiece:
    """One time interval ``[t_lo, t_hi]`` with frozen constants.

    ``phi_table`` is None for the closed-form first piece, otherwise the pair
    ``(v, phi(v))`` of samples behind the interpolant.
    """

    t_lo: float
    t_hi: float
    a: float
    b: float
    c: float
    p: float
    phi_table: tuple[np.ndarray, np.ndarray] | None = None
    match_defect: float = 0.0
    interp_defect: float = 0.0

    def __post_init__(self):
        if self.phi_table is not None:
            v, f = self.phi_table
            object.__setattr__(self, "_interp", PchipInterpolator(v, f, extrapolate=False))
        elif not self.p > 0:
            raise ValueError("the closed-form first piece needs p > 0")

    @property
    def closed_form(self) -> bool:
        return self.phi_table is None

    @property
    def v_range(self) -> tuple[float, float]:
        if self.phi_table is None:
            return (-math.inf, math.inf)
        v = self.phi_table[0]
        return float(v[0]), float(v[-1])

    def phi(self, v):
        if self.phi_table is None:
            return _first_phi(self.a, self.b, self.c, self.p)(v)
        v = np.asarray(v, dtype=float)
        lo, hi = self.v_range
        slack = 1e-9 * (1.0 + max(abs(lo), abs(hi)))   # round-off in log(1 - x)
        v = np.where((v < lo) & (v >= lo - slack), lo, v)
        v = np.where((v > hi) & (v <= hi + slack), hi, v)
        out = self._interp(v)
        if np.any(np.isnan(out)):
            raise DomainError("characteristic variable outside the sampled range of phi")
        return out

    def value_y(self, y, t):
        """Value in terms of the unwatched fraction ``y = 1 - x``.

        Lets callers reach states closer to saturation than ``x`` can resolve.
        """
        y = np.asarray(y, dtype=float)
        v = np.log(y) / self.a - np.asarray(t, dtype=float)
        return (self.phi(v) * y ** (-self.p / self.a)
                + _particular_y(y, self.a, self.b, self.c, self.p))

    def value(self, x, t):
        out = self.value_y(_y(x), t)
        return float(out) if np.ndim(out) == 0 else out

    def y_floor_at(self, t: float) -> float:
        """Smallest 1 - x at which the piece can be evaluated at time ``t``."""
        v_lo = self.v_range[0]
        if math.isinf(v_lo):
            return 0.0
        return math.exp(self.a * (v_lo + t))


def first_piece(a: float, b: float, c: float, p: float, t_hi: float = math.inf) -> FhValuePiece:
    return FhValuePiece(0.0, t_hi, a, b, c, p)


def fh_propagate(piece: FhValuePiece, t1: float, a: float, b: float, c: float, *,
                 n_grid: int = DEFAULT_GRID, y_floor: float = DEFAULT_Y_FLOOR,
                 tol: float = MATCH_TOL) -> FhValuePiece:
    """Next piece, continuous with ``piece`` at time ``t1``, for constants (a, b, c).

    ``phi`` is sampled on ``n_grid`` states log-spaced in ``1 - x``. The node
    defect and the interpolation defect at log-midpoints are stored on the
    returned piece; ``GridInsufficient`` is raised if either exceeds ``tol``.
    """
    if not piece.t_lo <= t1:
        raise ValueError("boundary time lies before the piece starts")
    p = piece.p
    lo = max(y_floor, piece.y_floor_at(t1))
    if not lo < 1.0:
        raise GridInsufficient(f"no state range left to match at t={t1}")
    log_y = np.linspace(math.log(lo), 0.0, n_grid)
    y = np.exp(log_y)
    target = piece.value_y(y, t1)
    f = (target - _particular_y(y, a, b, c, p)) * y ** (p / a)
    v = log_y / a - t1
    nxt = FhValuePiece(t1, math.inf, a, b, c, p, (v, f))

    node = float(np.max(np.abs(nxt.value_y(y, t1) - target)))
    mid_y = np.exp(0.5 * (log_y[1:] + log_y[:-1]))
    interp = float(np.max(np.abs(nxt.value_y(mid_y, t1) - piece.value_y(mid_y, t1))))
    nxt = replace(nxt, match_defect=node, interp_defect=interp)
    if max(node, interp) > tol:
        raise GridInsufficient(f"matching defect {max(node, interp):.3g} exceeds {tol:g}",
                               max(node, interp))
    return nxt


def fh_residual(piece: FhValuePiece, x, t, rel_step: float = 1e-4):
    """Central-difference defect of the transport equation at (x, t).

    Steps scale with the local time and state scales: ``rel_step/(a+p)``
    in time and ``rel_step*(1-x)`` in state.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    y = 1.0 - x
    ht = rel_step / (piece.a + piece.p)
    hx = rel_step * y
    vt = (piece.value(x, t + ht) - piece.value(x, t - ht)) / (2 * ht)
    vx = (piece.value(x + hx, t) - piece.value(x - hx, t)) / (2 * hx)
    return vt + piece.p * piece.value(x, t) - piece.a * y * vx + piece.b * y + piece.c


class FhValueFunction:
    """Pieces covering ``[0, horizon]`` in time-to-go."""

    def __init__(self, pieces: Sequence[FhValuePiece], horizon: float):
        self.pieces = tuple(pieces)
        self.horizon = horizon
        self._starts = np.array([pc.t_lo for pc in self.pieces])

    def index_at(self, t: float) -> int:
        return int(max(np.searchsorted(self._starts, t, side="right") - 1, 0))

    def __call__(self, x: float, t: float) -> float:
        return self.pieces[self.index_at(t)].value(x, t)

    def surface_rows(self, n_x: int = 41, n_t: int = 41, x_max: float = 0.99):
        """Rows ``t, x, V, piece_index`` on a regular grid."""
        rows = []
        for t in np.linspace(0.0, self.horizon, n_t):
            k = self.index_at(t)
            pc = self.pieces[k]
            hi = min(x_max, 1.0 - pc.y_floor_at(t) - 1e-12) if not pc.closed_form else x_max
            for x in np.linspace(0.0, hi, n_x):
                rows.append([float(t), float(x), float(pc.value(x, t)), k])
        return rows


def schedule_from_profile(config: GameConfig, profile: Sequence[Strategy]):
    """Time-to-go switching schedule realized by ``profile`` from the initial state.

    Returns ``[(t_lo, levels), ...]`` in increasing time-to-go, where
    ``t_lo`` is the remaining time at which the calendar segment ends.
    """
    tau = config.horizon
    traj = simulate(config, profile, t_end=tau)
    return [(max(tau - seg.t_end, 0.0), seg.levels) for seg in reversed(traj.segments)]


def finite_horizon_value(config: GameConfig, i: int, profile: Sequence[Strategy], *,
                         x_max: float = 0.99, n_grid: int = DEFAULT_GRID,
                         tol: float = MATCH_TOL) -> FhValueFunction:
    """Value surface of player ``i`` for the time schedule the profile realizes.

    Each matching grid reaches deep enough toward saturation that every
    state up to ``x_max`` stays evaluable over the whole horizon.
    """
    if config.infinite:
        raise ValueError("finite_horizon_value needs a finite horizon")
    p = config.players[i].p
    lam_i = config.players[i].lam
    stages = []
    for t_lo, levels in schedule_from_profile(config, profile):
        a_total = sum(pl.lam * config.value(lv) for pl, lv in zip(config.players, levels))
        stages.append((t_lo, piece_constants(config, i, levels[i],
                                             a_total - lam_i * config.value(levels[i]))))
    # required grid floors, from the last stage back to the first
    ends = [t for t, _ in stages[1:]] + [config.horizon]
    log_floor = math.log1p(-x_max)
    floors = [0.0] * len(stages)
    for k in range(len(stages) - 1, -1, -1):
        t_lo, (a, _, _) = stages[k]
        log_floor -= a * (ends[k] - t_lo)
        floors[k] = math.exp(max(log_floor - 1.0, -690.0))

    pieces: list[FhValuePiece] = []
    for k, (t_lo, (a, b, c)) in enumerate(stages):
        if not pieces:
            pieces.append(first_piece(a, b, c, p))
            continue
        prev = replace(pieces[-1], t_hi=t_lo)
        pieces[-1] = prev
        pieces.append(fh_propagate(prev, t_lo, a, b, c, n_grid=n_grid,
                                   y_floor=floors[k], tol=tol))
    pieces[-1] = replace(pieces[-1], t_hi=config.horizon)
    return FhValueFunction(pieces, config.horizon)
