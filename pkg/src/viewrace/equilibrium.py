"""Nash equilibria: symmetric exact, vanishing-discount epsilon-approximate, and
a best-response iteration for everything else."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .bestresponse import best_response, cost_quadrature
from .dynamics import time_to_reach
from .hjb import ValueFunction, make_piece, switching_coefficient
from .model import (ControlLevel, GameConfig, PlayerParams, Strategy, all_min_profile,
                    threshold_profile)

log = logging.getLogger(__name__)

MIN, MAX = ControlLevel.MIN, ControlLevel.MAX


class EquilibriumKind(Enum):
    DEGENERATE_ALL_MIN = "DegenerateAllMin"
    SYMMETRIC_EXACT = "SymmetricExact"
    EPSILON_APPROX = "EpsilonApprox"
    ITERATION_FIXED_POINT = "IterationFixedPoint"


class ContinuityInfeasible(ArithmeticError):
    pass


class OrderViolation(RuntimeError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass
class EquilibriumResult:
    profile: tuple[Strategy, ...]
    kind: EquilibriumKind
    epsilon: float = 0.0
    x_star: float | None = None
    k_star: float | None = None
    switch_times: list[float] | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    @property
    def thresholds(self) -> list[float | None]:
        return [s.xhat for s in self.profile]

    def summary(self) -> str:
        head = self.kind.value
        if self.x_star is not None:
            head += f", x*={self.x_star:.6f}"
        lines = [head]
        if self.k_star is not None:
            lines.append(f"K* = {self.k_star:.9g}")
        if self.kind in (EquilibriumKind.EPSILON_APPROX, EquilibriumKind.ITERATION_FIXED_POINT):
            lines.append(f"epsilon = {self.epsilon:.6g}")
        for i, s in enumerate(self.profile):
            t = self.switch_times[i] if self.switch_times else None
            t_txt = f", switch at t={t:.6g} d" if t is not None and math.isfinite(t) else ""
            lines.append(f"  player {i + 1}: {s.describe()}{t_txt}")
        return "\n".join(lines)

    def rows(self):
        """Rows ``player, threshold, switch_time, epsilon_contribution``."""
        contrib = self.diagnostics.get("improvements") or [0.0] * len(self.profile)
        out = []
        for i, s in enumerate(self.profile):
            t = self.switch_times[i] if self.switch_times else math.nan
            x = s.xhat if s.xhat is not None else math.nan
            out.append([i + 1, x, t, contrib[i]])
        return out


# ---------------------------------------------------------------------------
# symmetric game

def existence_margin(lam, gamma, p, n, u_min) -> float:
    return lam * (1.0 - u_min * lam / (p + n * lam * u_min)) - gamma


def symmetric_existence(lam, gamma, p, n, u_min) -> bool:
    """Whether a provider facing idle rivals would ever start accelerating."""
    return existence_margin(lam, gamma, p, n, u_min) > 0


def symmetric_threshold(lam, gamma, p, n, u_min) -> float:
    return 1.0 - gamma * (p + n * lam * u_min) / (lam * (p + (n - 1) * u_min * lam))


def existence_crossover_gamma(lam, p, n, u_min) -> float:
    return lam * (p + (n - 1) * u_min * lam) / (p + n * lam * u_min)


def k_star_from_continuity(lam, gamma, p, n, u_min, u_max, x_star) -> float:
    """Constant of the accelerating piece that makes V continuous at ``x_star``.

    The idle piece to the right is -lambda u_min (1-x)/(p + N lambda u_min);
    the accelerating piece carries the spending term
    +gamma (u_max - u_min)/p, which makes the constant negative.
    """
    if not 0 < x_star < 1:
        raise ContinuityInfeasible(f"x* = {x_star} outside (0, 1)")
    y = 1.0 - x_star
    a_hi = n * lam * u_max
    v_right = -u_min * lam * y / (p + n * lam * u_min)
    rhs = v_right + lam * u_max * y / (p + a_hi) - gamma * (u_max - u_min) / p
    k = rhs * math.exp((p / a_hi) * math.log(y))
    if not math.isfinite(k):
        raise ContinuityInfeasible("continuity equation has no finite solution")
    return k


def k_star_as_displayed(lam, gamma, p, n, u_min, u_max, x_star) -> float:
    """Solution of the continuity equation with the opposite sign on the spending term.

    This is the constant one gets when the spending term of the
    accelerating piece enters with a minus sign. It is always positive, but
    the piece it defines is not the value of any strategy; kept only to
    document the discrepancy.
    """
    y = 1.0 - x_star
    return (u_max - u_min) * y ** (p / (lam * n * u_max)) * (
        y * lam * p / ((p + lam * n * u_max) * (p + lam * n * u_min)) + gamma / p)


def symmetric_value_function(lam, gamma, p, n, u_min, u_max, x_star, k_star=None,
                             z: float = 0.0) -> ValueFunction:
    """Two-piece value of a provider when all N providers use threshold ``x_star``."""
    if k_star is None:
        k_star = k_star_from_continuity(lam, gamma, p, n, u_min, u_max, x_star)
    hi = make_piece(x_star, 1.0, n * lam * u_min, lam * u_min, 0.0, p, K=0.0, level=MIN)
    lo = make_piece(z, x_star, n * lam * u_max, lam * u_max, gamma * (u_min - u_max), p,
                    K=k_star, level=MAX)
    return ValueFunction([lo, hi], 0)


def _certify_single_switch(lam, gamma, p, n, u_min, u_max, x_star, k_star, n_grid=1000):
    """Check on a grid below x* that the accelerating piece keeps acceleration optimal.

    Returns (slope_negative, accelerate_consistent): the derivative of the
    switching bracket is negative and the switching coefficient positive.
    """
    a = n * lam * u_max
    b = lam * u_max
    xs = np.linspace(0.0, x_star, n_grid, endpoint=False)
    y = 1.0 - xs
    slope = -(1.0 - b / (a + p)) - (k_star * p * p / (a * a)) * y ** (-p / a - 1.0)
    piece = make_piece(0.0, x_star, a, b, gamma * (u_min - u_max), p, K=k_star, level=MAX)
    phi = switching_coefficient(xs, piece, lam, gamma)
    return bool(np.all(slope < 0)), bool(np.all(phi > 0))


def symmetric_equilibrium(lam, gamma, p, n, u_min, u_max) -> EquilibriumResult:
    if not p > 0:
        raise PreconditionError("symmetric equilibrium requires p > 0")
    margin = existence_margin(lam, gamma, p, n, u_min)
    if lam < gamma or margin <= 0:
        reason = "lambda < gamma" if lam < gamma else "existence margin <= 0"
        return EquilibriumResult(all_min_profile(n), EquilibriumKind.DEGENERATE_ALL_MIN,
                                 diagnostics={"reason": reason, "margin": margin})
    x_star = symmetric_threshold(lam, gamma, p, n, u_min)
    k_star = k_star_from_continuity(lam, gamma, p, n, u_min, u_max, x_star)
    slope_ok, accel_ok = _certify_single_switch(lam, gamma, p, n, u_min, u_max, x_star, k_star)
    if not (slope_ok and accel_ok):
        log.warning("single-switch certificate failed (slope=%s, accelerate=%s)",
                    slope_ok, accel_ok)
    t_switch = time_to_reach(0.0, x_star, n * lam * u_max)
    return EquilibriumResult(
        threshold_profile([x_star] * n), EquilibriumKind.SYMMETRIC_EXACT, 0.0,
        x_star, k_star, [t_switch] * n,
        {"margin": margin, "slope_negative": slope_ok, "accelerate_consistent": accel_ok,
         "k_star_displayed": k_star_as_displayed(lam, gamma, p, n, u_min, u_max, x_star)})


def symmetric_equilibrium_for(config: GameConfig) -> EquilibriumResult:
    if not config.is_symmetric:
        raise PreconditionError("players are not identical")
    pl = config.players[0]
    res = symmetric_equilibrium(pl.lam, pl.gamma, pl.p, config.n, config.u_min, config.u_max)
    if res.x_star is not None and config.z_total > 0:
        res.switch_times = [time_to_reach(config.z_total, res.x_star, config.n * pl.lam * config.u_max)
                            if res.x_star > config.z_total else 0.0] * config.n
    return res


# ---------------------------------------------------------------------------
# vanishing discounts

def vanishing_threshold(params: PlayerParams, a_minus_i: float, u_min: float, u_max: float) -> float:
    """Small-discount switching state of a provider facing rival rate ``a_minus_i``.

    A monopolist (zero rival rate) always accelerates: the limit is 1.
    """
    if a_minus_i <= 0:
        return 1.0
    lam = params.lam
    x0 = 1.0 - (params.gamma / lam) / ((1.0 + lam * u_min / a_minus_i) * (1.0 + lam * u_max / a_minus_i))
    return min(max(x0, 0.0), 1.0)


def vanishing_threshold_grid(lam, gamma, a_minus, u_min, u_max) -> np.ndarray:
    a_minus = np.asarray(a_minus, dtype=float)
    safe = np.where(a_minus > 0, a_minus, 1.0)
    x0 = 1.0 - (gamma / lam) / ((1.0 + lam * u_min / safe) * (1.0 + lam * u_max / safe))
    return np.where(a_minus > 0, np.clip(x0, 0.0, 1.0), 1.0)


def epsilon_equilibrium(config: GameConfig, p: float | None = None) -> EquilibriumResult:
    """Threshold profile built by letting providers drop out in order of cost.

    Everyone starts at Max. The active provider with the lowest current
    small-discount threshold drops to Min when the state reaches it, after
    which the remaining thresholds are recomputed. The epsilon reported is
    the largest gain any provider could obtain by deviating unilaterally,
    measured by quadrature at discount ``p`` (the config's own discounts
    when ``p`` is None).
    """
    pls = config.players
    lam = pls[0].lam
    gammas = [pl.gamma for pl in pls]
    if any(pl.lam != lam for pl in pls):
        raise PreconditionError("all players must share lambda")
    if any(g1 <= g2 for g1, g2 in zip(gammas, gammas[1:])):
        raise PreconditionError("gammas must be strictly decreasing")
    if not lam > gammas[0]:
        raise PreconditionError("lambda must exceed the largest gamma")

    n = config.n
    levels = [MAX] * n
    x = config.z_total
    t = 0.0
    order, states, times = [], [math.nan] * n, [math.inf] * n
    rates = []
    while MAX in levels:
        a = sum(pl.lam * config.value(lv) for pl, lv in zip(pls, levels))
        active = [i for i in range(n) if levels[i] is MAX]
        thr = {i: vanishing_threshold(pls[i], a - pls[i].lam * config.u_max,
                                      config.u_min, config.u_max) for i in active}
        i_next = min(active, key=lambda i: (thr[i], i))
        x_sw = max(thr[i_next], x)
        if x_sw >= 1.0:
            break
        t += time_to_reach(x, x_sw, a)
        rates.append(a)
        x = x_sw
        levels[i_next] = MIN
        order.append(i_next)
        states[i_next] = x_sw
        times[i_next] = t
        a_new = a - pls[i_next].lam * (config.u_max - config.u_min)
        for j in range(n):
            if levels[j] is MIN:
                back = vanishing_threshold(pls[j], a_new - pls[j].lam * config.u_min,
                                           config.u_min, config.u_max)
                if back > x_sw:
                    raise OrderViolation(
                        f"player {j + 1} would switch back: threshold {back:.9f} > state {x_sw:.9f}")

    expected = sorted(range(n), key=lambda i: -gammas[i])
    profile = tuple(Strategy.threshold(s) if math.isfinite(s) else Strategy.constant(MAX)
                    for s in states)
    diag = {"order": order, "order_by_descending_gamma": order == expected[:len(order)],
            "stage_rates": rates}
    eval_config = config.with_discount(p) if p is not None else config
    improvements = unilateral_improvements(eval_config, profile)
    diag["improvements"] = improvements
    diag["p"] = p
    return EquilibriumResult(profile, EquilibriumKind.EPSILON_APPROX,
                             max(0.0, max(improvements)), None, None, times, diag)


def unilateral_improvements(config: GameConfig, profile: Sequence[Strategy],
                            workers: int = 1) -> list[float]:
    """Cost reduction each player could obtain by best-responding to ``profile``."""
    def one(i):
        br = best_response(config, i, profile)
        return cost_quadrature(config, profile, i).value - br.value
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, range(config.n)))
    return [one(i) for i in range(config.n)]


# ---------------------------------------------------------------------------
# general fallback

class NonConvergence(RuntimeError):
    def __init__(self, profile, trace):
        super().__init__(f"no fixed point after {len(trace)} rounds "
                         f"(last max improvement {trace[-1] if trace else math.nan:.3g})")
        self.profile = profile
        self.trace = trace


def best_response_iteration(config: GameConfig, initial: Sequence[Strategy] | None = None,
                            max_rounds: int = 50, tol: float = 1e-9,
                            jacobi: bool = False, workers: int = 1) -> EquilibriumResult:
    """Round-robin best replies until no player can gain more than ``tol``.

    Gauss-Seidel by default: each player replies to the freshest profile.
    With ``jacobi=True`` all players reply to the previous round's profile.
    """
    profile = list(initial) if initial is not None else list(all_min_profile(config.n))
    trace = []
    for rnd in range(1, max_rounds + 1):
        if jacobi:
            frozen = tuple(profile)
            def one(i):
                return best_response(config, i, frozen).strategy
            if workers > 1:
                with ThreadPoolExecutor(workers) as ex:
                    profile = list(ex.map(one, range(config.n)))
            else:
                profile = [one(i) for i in range(config.n)]
        else:
            for i in range(config.n):
                profile[i] = best_response(config, i, profile).strategy
        improvements = unilateral_improvements(config, profile, workers)
        worst = max(improvements)
        trace.append(worst)
        log.debug("round %d: max improvement %.3g", rnd, worst)
        if worst <= tol:
            return EquilibriumResult(tuple(profile), EquilibriumKind.ITERATION_FIXED_POINT,
                                     max(worst, 0.0),
                                     diagnostics={"rounds": rnd, "trace": trace,
                                                  "improvements": improvements})
    raise NonConvergence(tuple(profile), trace)
