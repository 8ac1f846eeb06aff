"""Exact fluid dynamics under piecewise-constant bang-bang controls.

With every control frozen, the aggregate watched fraction obeys
``dx/dt = a (1 - x)`` and therefore moves along ``1 - (1 - x0) e^{-a t}``.
Each content takes the share ``lambda_i u_i / a`` of every increment.
Breakpoint crossings are located in closed form, so there is no step-size
control anywhere in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ControlLevel, GameConfig, Strategy, aggregate_rate

SATURATION_TOL = 1e-9


class DomainError(ValueError):
    pass


def advance(x_agg: float, a: float, dt: float) -> float:
    """Aggregate state after ``dt`` days at constant rate ``a``."""
    if x_agg >= 1:
        raise DomainError(f"state {x_agg} is saturated")
    if math.isinf(dt):
        return 1.0
    return x_agg - (1.0 - x_agg) * math.expm1(-a * dt)


def time_to_reach(x_from: float, x_to: float, a: float) -> float:
    """Days needed to move the aggregate state from ``x_from`` to ``x_to``."""
    if x_to >= 1:
        raise DomainError(f"target {x_to} is not reachable in finite time")
    if x_to < x_from:
        raise DomainError(f"target {x_to} lies behind {x_from}")
    return (math.log1p(-x_from) - math.log1p(-x_to)) / a


@dataclass(frozen=True)
class TrajectorySegment:
    t_start: float
    t_end: float
    x_start: tuple[float, ...]
    x_agg_start: float
    a: float
    levels: tuple[ControlLevel, ...]
    shares: tuple[float, ...]       # lambda_i u_i / a

    def aggregate(self, t):
        dt = np.asarray(t, dtype=float) - self.t_start
        return self.x_agg_start - (1.0 - self.x_agg_start) * np.expm1(-self.a * dt)

    def state(self, t) -> np.ndarray:
        gain = self.aggregate(t) - self.x_agg_start
        return np.asarray(self.x_start)[:, None] + np.outer(self.shares, np.atleast_1d(gain))


@dataclass(frozen=True)
class Trajectory:
    z: tuple[float, ...]
    segments: tuple[TrajectorySegment, ...]
    t_saturation: float
    tol_x: float

    @property
    def t_final(self) -> float:
        return self.segments[-1].t_end

    @property
    def n(self) -> int:
        return len(self.z)

    def _locate(self, t: np.ndarray) -> np.ndarray:
        starts = np.array([s.t_start for s in self.segments])
        return np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(starts) - 1)

    def aggregate_at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._locate(t)
        out = np.empty_like(t)
        for k in np.unique(idx):
            m = idx == k
            out[m] = self.segments[k].aggregate(t[m])
        return out

    def state_at(self, t) -> np.ndarray:
        """Per-content fractions, shape (N, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._locate(t)
        out = np.empty((self.n, t.size))
        for k in np.unique(idx):
            m = idx == k
            out[:, m] = self.segments[k].state(t[m])
        return out

    def switch_times(self) -> list[list[tuple[float, ControlLevel]]]:
        """For every player, the (time, new level) pairs where its level changes."""
        out = [[] for _ in range(self.n)]
        for prev, seg in zip(self.segments, self.segments[1:]):
            for i, (l0, l1) in enumerate(zip(prev.levels, seg.levels)):
                if l0 is not l1:
                    out[i].append((seg.t_start, l1))
        return out

    def event_times(self, sample_dt: float | None = None) -> np.ndarray:
        t_stop = self.t_final if math.isfinite(self.t_final) else self.t_saturation
        times = [s.t_start for s in self.segments] + [t_stop]
        if sample_dt:
            times += list(np.arange(0.0, t_stop, sample_dt))
        return np.unique(np.asarray(times))


def simulate(config: GameConfig, profile: Sequence[Strategy], t_end: float | None = None,
             tol_x: float = SATURATION_TOL) -> Trajectory:
    """Event-driven exact solution of the fluid dynamics for a stationary profile.

    For an infinite horizon the last segment runs to ``t = inf``; the time
    at which the aggregate reaches ``1 - tol_x`` is stored as
    ``t_saturation``. Breakpoints above ``1 - tol_x`` are ignored.
    Simultaneous crossings collapse into one event.
    """
    if len(profile) != config.n:
        raise ValueError("profile length must match the number of players")
    if t_end is None:
        t_end = config.horizon
    lam = np.array([pl.lam for pl in config.players])
    xs = np.array([pl.z for pl in config.players], dtype=float)
    x = math.fsum(xs)
    cutoff = 1.0 - tol_x
    bps = sorted({b for s in profile for b in s.breakpoints if x < b < cutoff})

    t = 0.0
    t_sat = math.inf
    segments = []
    k = 0
    while True:
        nxt = bps[k] if k < len(bps) else None
        hi = nxt if nxt is not None else 1.0
        levels = tuple(s.level_on(x, hi) for s in profile)
        a = aggregate_rate(config, levels)
        shares = tuple(lam * np.array([config.value(lv) for lv in levels]) / a)
        dt = time_to_reach(x, nxt, a) if nxt is not None else math.inf
        if x < cutoff and math.isinf(t_sat):
            t_reach = t + time_to_reach(x, cutoff, a)
            if nxt is None or cutoff <= nxt:
                t_sat = t_reach
        last = nxt is None or t + dt >= t_end
        seg_end = min(t + dt, t_end)
        segments.append(TrajectorySegment(t, seg_end, tuple(xs), x, a, levels, shares))
        if last:
            break
        xs = xs + np.asarray(shares) * (nxt - x)
        x = nxt
        t = seg_end
        k += 1
    if math.isinf(t_sat) and x >= cutoff:
        t_sat = t
    return Trajectory(tuple(float(v) for v in (pl.z for pl in config.players)),
                      tuple(segments), t_sat, tol_x)


def trajectory_rows(traj: Trajectory, config: GameConfig, sample_dt: float | None = None):
    """Rows ``t, x_1..x_N, x_agg, u_1..u_N`` at segment boundaries (plus samples)."""
    times = traj.event_times(sample_dt)
    states = traj.state_at(times)
    agg = traj.aggregate_at(times)
    idx = traj._locate(times)
    rows = []
    for col, t in enumerate(times):
        seg = traj.segments[idx[col]]
        rows.append([float(t), *map(float, states[:, col]), float(agg[col]),
                     *(config.value(lv) for lv in seg.levels)])
    return rows
