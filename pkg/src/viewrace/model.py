"""Game primitives: player parameters, configurations and bang-bang strategies.

Everything here is immutable value data. Time is measured in days and the
state ``x`` is the fraction of the viewer base that has already watched one
of the competing contents.
"""

from __future__ import annotations

import configparser
import math
from bisect import bisect_left
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Sequence


class ScenarioError(Exception):
    """Scenario file missing or unparsable."""


class ControlLevel(Enum):
    MIN = "min"
    MAX = "max"

    @property
    def other(self) -> "ControlLevel":
        return ControlLevel.MAX if self is ControlLevel.MIN else ControlLevel.MIN


@dataclass(frozen=True)
class PlayerParams:
    """Per-provider parameters.

    lam   -- per-viewer view intensity (1/day)
    gamma -- cost rate per unit of acceleration above ``u_min``
    p     -- discount rate (1/day)
    z     -- initially watched fraction of this content
    """

    lam: float
    gamma: float
    p: float
    z: float = 0.0


@dataclass(frozen=True)
class GameConfig:
    players: tuple[PlayerParams, ...]
    u_min: float = 1.0
    u_max: float = 10.0
    horizon: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))

    @classmethod
    def symmetric(cls, n: int, lam: float, gamma: float, p: float,
                  u_min: float = 1.0, u_max: float = 10.0, z: float = 0.0,
                  horizon: float = math.inf) -> "GameConfig":
        player = PlayerParams(lam, gamma, p, z)
        return cls((player,) * n, u_min, u_max, horizon)

    @property
    def n(self) -> int:
        return len(self.players)

    @property
    def infinite(self) -> bool:
        return math.isinf(self.horizon)

    @property
    def z_total(self) -> float:
        return math.fsum(pl.z for pl in self.players)

    @property
    def is_symmetric(self) -> bool:
        first = self.players[0]
        return all((pl.lam, pl.gamma, pl.p) == (first.lam, first.gamma, first.p)
                   for pl in self.players)

    def value(self, level: ControlLevel) -> float:
        return self.u_max if level is ControlLevel.MAX else self.u_min

    def with_discount(self, p: float) -> "GameConfig":
        return replace(self, players=tuple(replace(pl, p=p) for pl in self.players))


def validate(config: GameConfig) -> list[str]:
    """Return the list of violated constraints; empty when the config is valid."""
    out = []
    if config.n < 1:
        out.append("players: at least one player required")
    if not config.u_min >= 1:
        out.append("u_min: u_min must be >= 1")
    if not config.u_max > config.u_min:
        out.append("u_max: u_max must be > u_min")
    if not math.isfinite(config.u_max):
        out.append("u_max: u_max must be finite")
    if not (config.horizon > 0):
        out.append("horizon: tau must be > 0")
    for k, pl in enumerate(config.players):
        tag = f"players[{k}]"
        if not pl.lam > 0:
            out.append(f"{tag}.lambda: lambda must be > 0")
        if not pl.gamma > 0:
            out.append(f"{tag}.gamma: gamma must be > 0")
        if not pl.p >= 0:
            out.append(f"{tag}.p: p must be >= 0")
        elif config.infinite and not pl.p > 0:
            out.append(f"{tag}.p: p>0 required for infinite horizon")
        if not 0 <= pl.z < 1:
            out.append(f"{tag}.z: z must lie in [0, 1)")
    if config.n and not config.z_total < 1:
        out.append("players.z: sum of z must be < 1")
    return out


def aggregate_rate(config: GameConfig, levels: Sequence[ControlLevel]) -> float:
    """Total adoption rate a = sum_i lambda_i u_i."""
    return math.fsum(pl.lam * config.value(lv) for pl, lv in zip(config.players, levels))


def rate_without(config: GameConfig, levels: Sequence[ControlLevel], i: int) -> float:
    """Rate of every player except ``i`` (a_{-i})."""
    return math.fsum(pl.lam * config.value(lv)
                     for k, (pl, lv) in enumerate(zip(config.players, levels)) if k != i)


@dataclass(frozen=True)
class Strategy:
    """Stationary state-feedback bang-bang strategy.

    ``levels[k]`` is played on the k-th sub-interval of [0, 1) cut at
    ``breakpoints``. A state sitting exactly on a breakpoint belongs to the
    interval on its left, so a threshold strategy plays Max at x == xhat.
    """

    breakpoints: tuple[float, ...] = ()
    levels: tuple[ControlLevel, ...] = (ControlLevel.MIN,)

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        lvs = tuple(self.levels)
        if len(lvs) != len(bps) + 1:
            raise ValueError("need exactly one level more than breakpoints")
        if any(not 0 < b < 1 for b in bps):
            raise ValueError("breakpoints must lie strictly inside (0, 1)")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        # merge runs of equal levels so the representation is canonical
        keep_b, keep_l = [], [lvs[0]]
        for b, lv in zip(bps, lvs[1:]):
            if lv is not keep_l[-1]:
                keep_b.append(b)
                keep_l.append(lv)
        object.__setattr__(self, "breakpoints", tuple(keep_b))
        object.__setattr__(self, "levels", tuple(keep_l))

    @classmethod
    def constant(cls, level: ControlLevel) -> "Strategy":
        return cls((), (level,))

    @classmethod
    def threshold(cls, xhat: float) -> "Strategy":
        """Max while x <= xhat, Min above."""
        if xhat <= 0:
            return cls.constant(ControlLevel.MIN)
        if xhat >= 1:
            return cls.constant(ControlLevel.MAX)
        return cls((xhat,), (ControlLevel.MAX, ControlLevel.MIN))

    def level_at(self, x: float) -> ControlLevel:
        return self.levels[bisect_left(self.breakpoints, x)]

    def level_on(self, lo: float, hi: float) -> ControlLevel:
        """Level held on the open interval (lo, hi), which must contain no breakpoint."""
        return self.level_at(0.5 * (lo + hi))

    @property
    def xhat(self) -> float | None:
        """Threshold value if this is a threshold strategy, else None."""
        if self.levels == (ControlLevel.MIN,):
            return 0.0
        if self.levels == (ControlLevel.MAX,):
            return 1.0
        if self.levels == (ControlLevel.MAX, ControlLevel.MIN):
            return self.breakpoints[0]
        return None

    def describe(self) -> str:
        if self.xhat is not None and len(self.breakpoints) == 1:
            return f"threshold {self.xhat:.6f}"
        parts = [self.levels[0].value]
        for b, lv in zip(self.breakpoints, self.levels[1:]):
            parts.append(f"|{b:.6f}|{lv.value}")
        return "".join(parts)


StrategyProfile = tuple[Strategy, ...]


def threshold_profile(thresholds: Sequence[float]) -> StrategyProfile:
    return tuple(Strategy.threshold(x) for x in thresholds)


def all_min_profile(n: int) -> StrategyProfile:
    return (Strategy.constant(ControlLevel.MIN),) * n


# ---------------------------------------------------------------------------
# scenario files

_PLAYER_KEYS = ("lambda", "gamma", "p", "z")


def _player_from_section(sec, fallback=None) -> PlayerParams:
    def get(key, default=None):
        if key in sec:
            return float(sec[key])
        if fallback is not None and key in fallback:
            return float(fallback[key])
        if default is None:
            raise ScenarioError(f"[{sec.name}] missing key '{key}'")
        return default
    return PlayerParams(lam=get("lambda"), gamma=get("gamma"), p=get("p"), z=get("z", 0.0))


def parse_scenario(text: str, source: str = "<string>") -> GameConfig:
    """Parse a scenario in INI form.

    A ``[game]`` section holds ``u_min``, ``u_max``, ``horizon`` (``infinite``
    or ``finite``), ``tau`` and optionally ``n_players``. Players come either
    from ``[player.1]`` ... ``[player.N]`` sections, or from a single
    ``[players]`` section replicated ``n_players`` times. Keys given in
    ``[players]`` also act as defaults for the per-player sections.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ScenarioError(f"{source}: {exc}") from exc
    game = cp["game"] if cp.has_section("game") else {}
    try:
        u_min = float(game.get("u_min", 1.0))
        u_max = float(game.get("u_max", 10.0))
        kind = str(game.get("horizon", "infinite")).strip().lower()
        if kind in ("infinite", "inf"):
            horizon = math.inf
        elif kind == "finite":
            if "tau" not in game:
                raise ScenarioError(f"{source}: finite horizon requires 'tau'")
            horizon = float(game["tau"])
        else:
            raise ScenarioError(f"{source}: horizon must be 'infinite' or 'finite'")

        shared = cp["players"] if cp.has_section("players") else None
        per_player = sorted(
            (s for s in cp.sections() if s.startswith("player.")),
            key=lambda s: int(s.split(".", 1)[1]),
        )
        if per_player:
            players = tuple(_player_from_section(cp[s], shared) for s in per_player)
        elif shared is not None:
            n = game.get("n_players", shared.get("n_players"))
            if n is None:
                raise ScenarioError(f"{source}: [players] shorthand needs n_players")
            players = (_player_from_section(shared),) * int(n)
        else:
            raise ScenarioError(f"{source}: no [players] or [player.K] sections")
    except ValueError as exc:
        raise ScenarioError(f"{source}: {exc}") from exc
    return GameConfig(players, u_min, u_max, horizon)


def load_scenario(path: str | Path) -> GameConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc.strerror}") from exc
    return parse_scenario(text, str(path))


def dump_scenario(config: GameConfig) -> str:
    lines = ["[game]", f"u_min = {config.u_min!r}", f"u_max = {config.u_max!r}"]
    if config.infinite:
        lines.append("horizon = infinite")
    else:
        lines += ["horizon = finite", f"tau = {config.horizon!r}"]
    for k, pl in enumerate(config.players, start=1):
        lines += ["", f"[player.{k}]", f"lambda = {pl.lam!r}", f"gamma = {pl.gamma!r}",
                  f"p = {pl.p!r}", f"z = {pl.z!r}"]
    return "\n".join(lines) + "\n"
