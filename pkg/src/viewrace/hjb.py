"""Closed-form value pieces of the stationary HJB equation.

On a state interval where every control is frozen, the value of player i
solves the linear ODE

    p V - a (1 - x) V' + b (1 - x) + c = 0,

with ``a`` the aggregate rate, ``b = lambda_i u_i`` and
``c = gamma_i (u_min - u_i)``. Its general solution is

    V(x) = K (1 - x)^(-p/a) - b (1 - x) / (a + p) - c / p.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .dynamics import DomainError
from .model import ControlLevel, GameConfig, PlayerParams

X_CEILING = 1.0 - 1e-15
_EDGE_SLACK = 1e-12


def _power(x, p: float, a: float):
    """(1 - x)^(-p/a) computed through log1p."""
    return np.exp(-(p / a) * np.log1p(-np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class ValuePiece:
    x_lo: float
    x_hi: float
    K: float
    a: float
    b: float
    c: float
    p: float
    level: ControlLevel | None = None

    def check(self, x) -> None:
        x = np.asarray(x, dtype=float)
        hi = min(self.x_hi, X_CEILING) if self.x_hi < 1 else X_CEILING
        if np.any(x < self.x_lo - _EDGE_SLACK) or np.any(x > hi + _EDGE_SLACK):
            raise DomainError(f"x outside piece [{self.x_lo}, {self.x_hi})")


def value_eval(piece: ValuePiece, x):
    piece.check(x)
    y = 1.0 - np.asarray(x, dtype=float)
    out = piece.K * _power(x, piece.p, piece.a) - piece.b * y / (piece.a + piece.p) - piece.c / piece.p
    return float(out) if np.ndim(out) == 0 else out


def value_eval_combined(piece: ValuePiece, x):
    """Same value written as a single fraction; kept as a cross-check of ``value_eval``."""
    piece.check(x)
    y = 1.0 - np.asarray(x, dtype=float)
    p, a = piece.p, piece.a
    out = piece.K * _power(x, p, a) - (p * piece.b * y + (p + a) * piece.c) / (p * (p + a))
    return float(out) if np.ndim(out) == 0 else out


def value_derivative(piece: ValuePiece, x):
    piece.check(x)
    p, a = piece.p, piece.a
    out = (p / a) * piece.K * _power(x, p, a) / (1.0 - np.asarray(x, dtype=float)) + piece.b / (a + p)
    return float(out) if np.ndim(out) == 0 else out


def hjb_residual(piece: ValuePiece, x):
    """Defect p V - a (1-x) V' + b (1-x) + c of the piece at ``x``."""
    y = 1.0 - np.asarray(x, dtype=float)
    out = (piece.p * np.asarray(value_eval(piece, x)) - piece.a * y * np.asarray(value_derivative(piece, x))
           + piece.b * y + piece.c)
    return float(out) if np.ndim(out) == 0 else out


def switching_coefficient(x, piece: ValuePiece, lam: float, gamma: float):
    """lambda_i (1-x)(1 - V'(x)) - gamma_i; positive favours u_max."""
    y = 1.0 - np.asarray(x, dtype=float)
    out = lam * y * (1.0 - np.asarray(value_derivative(piece, x))) - gamma
    return float(out) if np.ndim(out) == 0 else out


def switching_function_T(u_candidate: ControlLevel, a_minus_i: float, K: float, x,
                         params: PlayerParams, config: GameConfig):
    """u_i times the bracket whose sign decides the best response.

    The constants ``a`` and ``b`` are those of the piece where player i
    plays ``u_candidate`` against rate ``a_minus_i``; with the same ``K`` as
    that piece this equals ``u_i * switching_coefficient / lambda_i``.
    """
    u = config.value(u_candidate)
    b = params.lam * u
    a = a_minus_i + b
    p = params.p
    y = 1.0 - np.asarray(x, dtype=float)
    out = u * ((1.0 - b / (p + a)) * y - (K * p / a) * _power(x, p, a) - params.gamma / params.lam)
    return float(out) if np.ndim(out) == 0 else out


def hamiltonian_argmax(piece: ValuePiece, x: float, lam: float, gamma: float) -> ControlLevel:
    """Level maximising u * [lambda (1-x)(1 - V') - gamma] with V' frozen; ties go to Min."""
    return ControlLevel.MAX if switching_coefficient(x, piece, lam, gamma) > 0 else ControlLevel.MIN


def piece_constants(config: GameConfig, i: int, level: ControlLevel, a_minus_i: float):
    pl = config.players[i]
    u = config.value(level)
    b = pl.lam * u
    return a_minus_i + b, b, pl.gamma * (config.u_min - u)


def glue_K(x0: float, v0: float, a: float, b: float, c: float, p: float) -> float:
    """Constant K making the piece pass through (x0, v0)."""
    y0 = 1.0 - x0
    return (v0 + b * y0 / (a + p) + c / p) * math.exp((p / a) * math.log1p(-x0))


def make_piece(x_lo, x_hi, a, b, c, p, *, through=None, K=0.0, level=None) -> ValuePiece:
    if through is not None:
        K = glue_K(through[0], through[1], a, b, c, p)
    return ValuePiece(x_lo, x_hi, K, a, b, c, p, level)


class ValueFunction:
    """Ordered pieces covering [z, 1) for one player."""

    def __init__(self, pieces, player: int):
        self.pieces = tuple(sorted(pieces, key=lambda pc: pc.x_lo))
        self.player = player
        self._starts = [pc.x_lo for pc in self.pieces]

    def piece_at(self, x: float) -> ValuePiece:
        k = max(bisect_right(self._starts, x) - 1, 0)
        return self.pieces[k]

    def index_at(self, x: float) -> int:
        return max(bisect_right(self._starts, x) - 1, 0)

    def __call__(self, x):
        if np.ndim(x) == 0:
            return value_eval(self.piece_at(float(x)), float(x))
        return np.array([self(v) for v in np.asarray(x).ravel()]).reshape(np.shape(x))

    def derivative(self, x: float) -> float:
        return value_derivative(self.piece_at(x), x)

    @property
    def x_start(self) -> float:
        return self.pieces[0].x_lo

    @property
    def terminal(self) -> ValuePiece:
        return self.pieces[-1]

    def boundaries(self) -> list[float]:
        return [pc.x_lo for pc in self.pieces[1:]]

    def continuity_defects(self) -> list[float]:
        return [abs(value_eval(left, right.x_lo) - value_eval(right, right.x_lo))
                for left, right in zip(self.pieces, self.pieces[1:])]

    def rows(self, n_per_piece: int = 50):
        """Rows ``x, V, DV, piece_index, K, a, b, c`` for CSV export."""
        out = []
        for k, pc in enumerate(self.pieces):
            hi = min(pc.x_hi, 1.0 - 1e-9)
            for x in np.linspace(pc.x_lo, hi, n_per_piece, endpoint=(pc.x_hi >= 1)):
                out.append([float(x), value_eval(pc, x), value_derivative(pc, x), k,
                            pc.K, pc.a, pc.b, pc.c])
        return out

    def bound(self, config: GameConfig) -> float:
        pl = config.players[self.player]
        return (config.u_max * pl.lam + pl.gamma * (config.u_max - config.u_min)) / pl.p
