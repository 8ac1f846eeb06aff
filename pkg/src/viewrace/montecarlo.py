"""Stochastic viewer-base simulation at finite population size M.

Each of the ``M - W`` viewers who have not watched yet adopts content j at
rate ``lambda_j u_j``, with levels read from the profile at the empirical
fraction ``W / M``. Levels only change when ``W`` crosses a breakpoint, so
the run is split into blocks of constant levels and each block is drawn in
one vectorized call.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import simulate
from .model import GameConfig, Strategy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class McConfig:
    M: int
    replications: int = 1
    seed: int = 0
    sample_dt: float | None = None

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")


@dataclass
class McPath:
    """One replication: adoption times and the content each adoption went to."""

    times: np.ndarray          # event times, increasing
    content: np.ndarray        # content index of each event
    z_counts: np.ndarray       # initial watched counts per content
    M: int

    def counts(self) -> np.ndarray:
        """Watched counts per content after each event, shape (N, events)."""
        n = self.z_counts.size
        onehot = np.zeros((n, self.content.size), dtype=np.int64)
        onehot[self.content, np.arange(self.content.size)] = 1
        return self.z_counts[:, None] + np.cumsum(onehot, axis=1)

    def fractions_at(self, t) -> np.ndarray:
        """Empirical per-content fractions at times ``t``, shape (N, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.searchsorted(self.times, t, side="right")
        c = np.concatenate([self.z_counts[:, None], self.counts()], axis=1)
        return c[:, k] / self.M


def thread_limit(default: int | None = None) -> int:
    """Worker count, capped by the VIEWRACE_THREADS environment variable."""
    env = os.environ.get("VIEWRACE_THREADS")
    n = default or os.cpu_count() or 1
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            log.warning("ignoring non-integer VIEWRACE_THREADS=%r", env)
    return max(1, n)


def _rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep])))


def _initial_counts(config: GameConfig, M: int) -> np.ndarray:
    return np.array([int(round(pl.z * M)) for pl in config.players], dtype=np.int64)


def _level_table(config: GameConfig, profile: Sequence[Strategy], M: int, w0: int):
    """Rates lambda_j u_j for every watched count W in [w0, M)."""
    w = np.arange(w0, M)
    frac = w / M
    rates = np.empty((config.n, w.size))
    for j, (pl, s) in enumerate(zip(config.players, profile)):
        idx = np.searchsorted(np.asarray(s.breakpoints, dtype=float), frac, side="left")
        vals = np.array([config.value(lv) for lv in s.levels])
        rates[j] = pl.lam * vals[idx]
    return rates


def run_replication(config: GameConfig, profile: Sequence[Strategy], M: int,
                    seed: int, rep: int) -> McPath:
    rng = _rng(seed, rep)
    z = _initial_counts(config, M)
    w0 = int(z.sum())
    rates = _level_table(config, profile, M, w0)
    total = rates.sum(axis=0)
    remaining = M - np.arange(w0, M)
    waits = rng.standard_exponential(M - w0) / (remaining * total)
    times = np.cumsum(waits)
    # categorical draw, block by block where the rates are constant
    u = rng.random(M - w0)
    content = np.empty(M - w0, dtype=np.int64)
    change = np.flatnonzero(np.any(np.diff(rates, axis=1) != 0, axis=0)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [M - w0]])
    for s, e in zip(starts, ends):
        cum = np.cumsum(rates[:, s]) / total[s]
        content[s:e] = np.minimum(np.searchsorted(cum, u[s:e], side="right"), config.n - 1)
    return McPath(times, content, z, M)


def mc_run(config: GameConfig, profile: Sequence[Strategy], mc: McConfig,
           workers: int | None = None) -> list[McPath]:
    """All replications, ordered by replication index.

    Replication ``r`` draws from its own Philox stream seeded with
    ``(seed, r)``, so results do not depend on the worker count.
    """
    workers = thread_limit(workers)
    reps = range(mc.replications)
    if workers > 1 and mc.replications > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(lambda r: run_replication(config, profile, mc.M, mc.seed, r), reps))
    return [run_replication(config, profile, mc.M, mc.seed, r) for r in reps]


def sup_error(path: McPath, config: GameConfig, profile: Sequence[Strategy]) -> float:
    """Largest deviation of the empirical fractions from the fluid solution.

    The empirical path is a step function and the fluid one is continuous
    and increasing, so the supremum is attained just before or just after
    an event; both sides are checked for every content and the aggregate.
    """
    traj = simulate(config, profile)
    fluid = traj.state_at(path.times)
    fluid = np.vstack([fluid, fluid.sum(axis=0)])
    after = path.counts() / path.M
    before = np.concatenate([path.z_counts[:, None] / path.M, after[:, :-1]], axis=1)
    after = np.vstack([after, after.sum(axis=0)])
    before = np.vstack([before, before.sum(axis=0)])
    return float(max(np.max(np.abs(after - fluid)), np.max(np.abs(before - fluid))))


def sample_rows(path: McPath, sample_dt: float | None = None):
    """Rows ``t, xhat_1..xhat_N`` at every event, or on a uniform grid."""
    if sample_dt:
        t = np.arange(0.0, path.times[-1] + sample_dt, sample_dt)
        frac = path.fractions_at(t)
    else:
        t = np.concatenate([[0.0], path.times])
        frac = np.concatenate([path.z_counts[:, None] / path.M, path.counts() / path.M], axis=1)
    return [[float(tk), *map(float, frac[:, k])] for k, tk in enumerate(t)]


@dataclass
class ConvergenceReport:
    M_list: list[int]
    mean_error: list[float]
    std_error: list[float]
    ratios: list[float]
    ratios_ok: bool
    decreasing: bool
    warnings: list[str]

    def rows(self):
        return [[m, e, s] for m, e, s in zip(self.M_list, self.mean_error, self.std_error)]

    def summary(self) -> str:
        lines = ["M, mean_sup_error, std"]
        lines += [f"{m}, {e:.6g}, {s:.6g}" for m, e, s in self.rows()]
        lines.append("ratios: " + ", ".join(f"{r:.3f}" for r in self.ratios)
                     + (" (ok)" if self.ratios_ok else " (outside [0.25, 1.0])"))
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def mc_convergence_report(config: GameConfig, profile: Sequence[Strategy],
                          M_list: Sequence[int], replications: int, seed: int,
                          workers: int | None = None) -> ConvergenceReport:
    """Mean sup-norm error per population size and the ratios between successive sizes.

    For a quadrupling of M the ratio is expected near 1/2; anything in
    [0.25, 1.0] is accepted as consistent within noise.
    """
    M_list = [int(m) for m in M_list]
    if any(b <= a for a, b in zip(M_list, M_list[1:])):
        raise ValueError("M_list must be increasing")
    means, stds = [], []
    for m in M_list:
        paths = mc_run(config, profile, McConfig(m, replications, seed), workers)
        errs = np.array([sup_error(pth, config, profile) for pth in paths])
        means.append(float(errs.mean()))
        stds.append(float(errs.std(ddof=1)) if errs.size > 1 else math.nan)
    ratios = [b / a for a, b in zip(means, means[1:])]
    warnings = []
    if replications == 1:
        warnings.append("single replication: error estimates have very wide variance")
    ok = all(0.25 <= r <= 1.0 for r in ratios)
    if not ok:
        log.warning("error ratios %s outside [0.25, 1.0]", ratios)
    return ConvergenceReport(M_list, means, stds, ratios, ok,
                             all(r < 1.0 for r in ratios), warnings)
