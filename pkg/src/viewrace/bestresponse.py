"""Best response of one provider against fixed stationary opponents.

The value function is assembled backwards in the state, starting from the
interval next to saturation. There the player idles and the value has no
homogeneous component. Moving left, every opponent breakpoint and every
own switch starts a new closed-form piece. Its constant is fixed by
continuity, and the player's level on it is the one consistent with the
sign of the switching coefficient.

At a junction the candidate level is picked by comparing the slopes each
level would give the value through the HJB relation; the optimal control
is the one whose piece leaves the junction with the larger slope. This
agrees with the sign rule everywhere except at exact roots, where the
tie is broken by looking slightly to the left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from .dynamics import SATURATION_TOL, simulate
from .hjb import (ValueFunction, ValuePiece, make_piece, piece_constants,
                  switching_coefficient, value_eval)
from .model import ControlLevel, GameConfig, PlayerParams, Strategy

MIN, MAX = ControlLevel.MIN, ControlLevel.MAX

SNAP = 1e-10          # roots this close to an interval edge merge with the edge
ROOT_XTOL = 1e-12
SCAN_POINTS = 10_000


class NoSwitch(Exception):
    """The best response never accelerates. Carries the result."""

    def __init__(self, result):
        super().__init__(f"player {result.player + 1} never accelerates")
        self.result = result


class BracketFailure(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class VerificationFailed(AssertionError):
    def __init__(self, report, alternative=None):
        super().__init__(report.reason)
        self.report = report
        self.alternative = alternative


@dataclass
class BestResponseResult:
    player: int
    strategy: Strategy
    value_function: ValueFunction
    last_switch: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        """Optimal cost from the initial state."""
        vf = self.value_function
        return vf(vf.x_start)

    @property
    def accelerates(self) -> bool:
        return MAX in self.strategy.levels

    def rows(self):
        """Rows ``interval, x_lo, x_hi, level, K`` for the report CSV."""
        return [[k, pc.x_lo, pc.x_hi, pc.level.value if pc.level else "", pc.K]
                for k, pc in enumerate(self.value_function.pieces)]

    def summary(self) -> str:
        lines = [f"player {self.player + 1}: {self.strategy.describe()}",
                 f"  last switch x_inf = {self.last_switch:.9f}",
                 f"  V(z) = {self.value:.9f}",
                 f"  pieces = {len(self.value_function.pieces)}"]
        if self.diagnostics.get("degenerate"):
            lines.append("  lambda < gamma: acceleration never pays")
        if self.diagnostics.get("multi_switch"):
            lines.append("  note: strategy is not of single-threshold type")
        if not self.accelerates:
            lines.append("  no switch: player never accelerates")
        return "\n".join(lines)


def degenerate_check(params: PlayerParams) -> bool:
    """True when acceleration can never pay off, whatever the opponents do."""
    return params.lam < params.gamma


def _partition(config: GameConfig, profile: Sequence[Strategy], z: float, skip: int | None):
    cuts = sorted({b for j, s in enumerate(profile) if j != skip
                   for b in s.breakpoints if z < b < 1})
    return [z, *cuts, 1.0]


def _levels_on(profile, lo, hi):
    return [s.level_on(lo, hi) for s in profile]


def _rate_minus(config, levels, i):
    return math.fsum(pl.lam * config.value(lv)
                     for j, (pl, lv) in enumerate(zip(config.players, levels)) if j != i)


def policy_value(config: GameConfig, i: int, profile: Sequence[Strategy]) -> ValueFunction:
    """Value function of player ``i`` when everybody, i included, follows ``profile``."""
    pl = config.players[i]
    z = config.z_total
    edges = _partition(config, profile, z, None)
    pieces = []
    v_right = None
    for k in range(len(edges) - 2, -1, -1):
        lo, hi = edges[k], edges[k + 1]
        levels = _levels_on(profile, lo, hi)
        a, b, c = piece_constants(config, i, levels[i], _rate_minus(config, levels, i))
        if v_right is None:
            pc = make_piece(lo, hi, a, b, c, pl.p, K=0.0, level=levels[i])
        else:
            pc = make_piece(lo, hi, a, b, c, pl.p, through=(hi, v_right), level=levels[i])
        pieces.append(pc)
        v_right = value_eval(pc, lo)
    return ValueFunction(pieces, i)


def _slope(config, i, level, a_minus, x, v):
    pl = config.players[i]
    a, b, c = piece_constants(config, i, level, a_minus)
    y = 1.0 - x
    return (pl.p * v + b * y + c) / (a * y)


def best_response(config: GameConfig, i: int, profile: Sequence[Strategy], *,
                  n_grid: int = SCAN_POINTS, raise_on_no_switch: bool = False) -> BestResponseResult:
    """Best response of player ``i``; entry ``i`` of ``profile`` is ignored."""
    pl = config.players[i]
    if not pl.p > 0:
        raise ValueError("best_response needs p_i > 0")
    z = config.z_total
    if degenerate_check(pl):
        own = Strategy.constant(MIN)
        prof = list(profile)
        prof[i] = own
        vf = policy_value(config, i, prof)
        res = BestResponseResult(i, own, vf, z, {"degenerate": True, "brackets": [],
                                                 "continuity_defects": vf.continuity_defects(),
                                                 "multi_switch": False})
        if raise_on_no_switch:
            raise NoSwitch(res)
        return res

    lam, gam, p = pl.lam, pl.gamma, pl.p
    eps = 1e-11 * max(lam, gam)
    edges = _partition(config, profile, z, i)
    a_minus = []
    for k in range(len(edges) - 1):
        levels = _levels_on(profile, edges[k], edges[k + 1])
        a_minus.append(_rate_minus(config, levels, i))

    def build(level, k, R, vR):
        a, b, c = piece_constants(config, i, level, a_minus[k])
        return make_piece(edges[k], R, a, b, c, p, through=(R, vR), level=level)

    def margin(pc, x):
        phi = switching_coefficient(x, pc, lam, gam)
        return phi if pc.level is MAX else -phi

    pieces: list[ValuePiece] = []
    brackets = []

    # terminal interval: idle, no homogeneous part
    k = len(edges) - 2
    lo = edges[k]
    a, b, c = piece_constants(config, i, MIN, a_minus[k])
    coef = 1.0 - b / (a + p)
    x_root = 1.0 - gam / (lam * coef) if coef > 0 else -math.inf
    # a switch beyond the saturation tolerance is indistinguishable from never switching
    x_root = min(x_root, 1.0 - SATURATION_TOL)
    R = x_root if x_root > lo + SNAP else lo
    term = make_piece(R, 1.0, a, b, c, p, K=0.0, level=MIN)
    pieces.append(term)
    vR = value_eval(term, R)
    if R == lo:
        k -= 1
    else:
        brackets.append((x_root, x_root))

    while k >= 0 and R > z:
        lo = edges[k]
        # pick the level leaving the junction R to the left
        d_max = _slope(config, i, MAX, a_minus[k], R, vR)
        d_min = _slope(config, i, MIN, a_minus[k], R, vR)
        if abs(d_max - d_min) > 1e-8 * (1.0 + abs(d_max) + abs(d_min)):
            level = MAX if d_max > d_min else MIN
            pc = build(level, k, R, vR)
        else:
            h = min(1e-6, 0.5 * (R - lo))
            cands = [build(lv, k, R, vR) for lv in (MIN, MAX)]
            pc = max(cands, key=lambda c_: margin(c_, R - h))

        # scan leftwards for the first state where this level stops being optimal
        xs = np.linspace(R, lo, n_grid + 1)[1:]
        m = np.asarray(margin(pc, xs))
        bad = np.nonzero(m < -eps)[0]
        root = None
        if bad.size:
            j = bad[0]
            left = xs[j]
            right = xs[j - 1] if j > 0 else R
            g = lambda x: margin(pc, x) + eps  # noqa: E731
            if g(right) < 0:
                raise BracketFailure(
                    f"level {pc.level.value} inconsistent right at the junction x={R:.12g}",
                    {"pieces": pieces, "brackets": brackets})
            root = brentq(g, left, right, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
            brackets.append((left, right))
            if root >= R - SNAP:
                raise BracketFailure(f"no progress past x={R:.12g}",
                                     {"pieces": pieces, "brackets": brackets})
            if root <= lo + SNAP:
                root = None
        if root is None:
            pieces.append(ValuePiece(lo, R, pc.K, pc.a, pc.b, pc.c, pc.p, pc.level))
            vR = value_eval(pc, lo)
            R = lo
            k -= 1
        else:
            pieces.append(ValuePiece(root, R, pc.K, pc.a, pc.b, pc.c, pc.p, pc.level))
            vR = value_eval(pc, root)
            R = root

    vf = ValueFunction(pieces, i)
    strategy = _strategy_from_pieces(vf.pieces)
    switches_down = [b for b, lv in zip(strategy.breakpoints, strategy.levels[1:]) if lv is MIN]
    last_switch = switches_down[-1] if switches_down else (z if MIN == strategy.levels[0] else 1.0)
    diag = {
        "degenerate": False,
        "brackets": brackets,
        "continuity_defects": vf.continuity_defects(),
        "multi_switch": len(strategy.breakpoints) > 1,
        "x_inf": last_switch,
    }
    res = BestResponseResult(i, strategy, vf, last_switch, diag)
    if raise_on_no_switch and not res.accelerates:
        raise NoSwitch(res)
    return res


def _strategy_from_pieces(pieces: Sequence[ValuePiece]) -> Strategy:
    bps, lvs = [], [pieces[0].level]
    for pc in pieces[1:]:
        if pc.level is not lvs[-1]:
            bps.append(pc.x_lo)
            lvs.append(pc.level)
    return Strategy(tuple(bps), tuple(lvs))


# ---------------------------------------------------------------------------
# cost evaluation

class Cost(NamedTuple):
    value: float
    tail_bound: float


def cost_quadrature(config: GameConfig, profile: Sequence[Strategy], i: int) -> Cost:
    """Discounted cost of player ``i`` under ``profile``, integrated segment by segment.

    On a constant-control segment the integrand is a sum of exponentials,
    so each segment (including an unbounded last one) is integrated exactly
    and nothing is truncated.
    """
    pl = config.players[i]
    p, lam, gam = pl.p, pl.lam, pl.gamma
    traj = simulate(config, profile)
    total = 0.0
    for seg in traj.segments:
        u = config.value(seg.levels[i])
        dt = seg.t_end - seg.t_start
        y0 = 1.0 - seg.x_agg_start
        disc = math.exp(-p * seg.t_start)
        if disc == 0.0:
            break
        views = lam * u * y0 * disc * _one_minus_exp(seg.a + p, dt) / (seg.a + p)
        spend = 0.0
        if u > config.u_min:
            if p > 0:
                spend = gam * (u - config.u_min) * disc * _one_minus_exp(p, dt) / p
            else:
                spend = gam * (u - config.u_min) * dt
        total += spend - views
    return Cost(total, 0.0)


def _one_minus_exp(rate: float, dt: float) -> float:
    if math.isinf(dt):
        return 1.0
    return -math.expm1(-rate * dt)


# ---------------------------------------------------------------------------
# optimality spot checks

@dataclass
class VerificationReport:
    passed: bool
    reason: str
    value_gap: float
    cost: float
    best_alternative_cost: float
    n_alternatives: int
    best_alternative: Strategy | None = None


def random_strategies(rng: np.random.Generator, n: int) -> list[Strategy]:
    """Random thresholds and multi-breakpoint bang-bang strategies."""
    out = [Strategy.constant(MIN), Strategy.constant(MAX)]
    while len(out) < n:
        if rng.random() < 0.5:
            out.append(Strategy.threshold(float(rng.uniform(0.0, 1.0))))
        else:
            m = int(rng.integers(2, 5))
            bps = np.unique(rng.uniform(1e-6, 1 - 1e-6, m))
            first = MAX if rng.random() < 0.5 else MIN
            lvs = [first]
            for _ in bps:
                lvs.append(lvs[-1].other)
            out.append(Strategy(tuple(bps), tuple(lvs)))
    return out[:n]


def verify_best_response(config: GameConfig, i: int, profile: Sequence[Strategy],
                         result: BestResponseResult, n_alternatives: int = 200,
                         seed: int = 1, tol: float = 1e-6) -> VerificationReport:
    """Check value/quadrature agreement and that random deviations do no better."""
    prof = list(profile)
    prof[i] = result.strategy
    cost = cost_quadrature(config, prof, i).value
    gap = abs(cost - result.value)
    rng = np.random.default_rng(seed)
    best_alt, best_cost = None, math.inf
    for alt in random_strategies(rng, n_alternatives):
        prof[i] = alt
        c = cost_quadrature(config, prof, i).value
        if c < best_cost:
            best_alt, best_cost = alt, c
    if gap > tol:
        report = VerificationReport(False, f"quadrature {cost:.12g} differs from V(z) "
                                    f"{result.value:.12g} by {gap:.3g}",
                                    gap, cost, best_cost, n_alternatives, best_alt)
        raise VerificationFailed(report)
    if best_cost < cost - tol:
        report = VerificationReport(False, f"alternative {best_alt.describe()} costs "
                                    f"{best_cost:.12g} < {cost:.12g}",
                                    gap, cost, best_cost, n_alternatives, best_alt)
        raise VerificationFailed(report, best_alt)
    return VerificationReport(True, "ok", gap, cost, best_cost, n_alternatives, best_alt)
