import math

import numpy as np
import pytest
from scipy.integrate import quad

from viewrace.bestresponse import (NoSwitch, VerificationFailed, best_response, cost_quadrature,
                                   degenerate_check, policy_value, random_strategies,
                                   verify_best_response)
from viewrace.dynamics import simulate
from viewrace.hjb import hjb_residual
from viewrace.model import (ControlLevel, GameConfig, PlayerParams, Strategy, all_min_profile,
                            threshold_profile)

MIN, MAX = ControlLevel.MIN, ControlLevel.MAX


def test_degenerate_check():
    assert degenerate_check(PlayerParams(50, 70, 1))
    assert not degenerate_check(PlayerParams(100, 70, 1))
    assert not degenerate_check(PlayerParams(70, 70, 1))


def test_fig2_best_reply_to_itself(fig2, fig2_profile):
    res = best_response(fig2, 0, fig2_profile)
    assert res.strategy.xhat == pytest.approx(0.23, abs=1e-9)
    assert res.last_switch == pytest.approx(0.23, abs=1e-9)
    assert res.value_function.terminal.K == 0.0
    assert max(res.diagnostics["continuity_defects"]) <= 1e-9
    assert abs(cost_quadrature(fig2, fig2_profile, 0).value - res.value) <= 1e-9


def test_degenerate_player_never_accelerates(degenerate):
    rng = np.random.default_rng(0)
    for _ in range(50):
        opponents = random_strategies(rng, 6)[2:]
        res = best_response(degenerate, 1, opponents)
        assert res.strategy.levels == (MIN,)
        assert not res.accelerates
    with pytest.raises(NoSwitch):
        best_response(degenerate, 0, all_min_profile(4), raise_on_no_switch=True)


def test_nearly_free_acceleration_switches_late():
    cfg = GameConfig((PlayerParams(100, 1e-6, 10), PlayerParams(100, 70, 10)))
    res = best_response(cfg, 0, all_min_profile(2))
    assert res.last_switch > 1 - 1e-6


def test_all_min_quadrature_matches_closed_form(fig2):
    assert cost_quadrature(fig2, all_min_profile(10), 0).value == pytest.approx(-1 / 11, abs=1e-15)


def test_huge_discount_gives_near_zero_cost():
    cfg = GameConfig.symmetric(10, 100, 70, 1e6)
    assert abs(cost_quadrature(cfg, threshold_profile([0.5] * 10), 0).value) <= 1e-3


def test_quadrature_against_numerical_integration():
    rng = np.random.default_rng(7)
    for _ in range(5):
        n = int(rng.integers(1, 4))
        cfg = GameConfig(tuple(PlayerParams(float(rng.uniform(50, 150)), float(rng.uniform(10, 90)),
                                            float(rng.uniform(1, 50))) for _ in range(n)),
                         1.0, 10.0)
        profile = random_strategies(rng, n + 2)[2:]
        traj = simulate(cfg, profile)
        pl = cfg.players[0]

        def integrand(t):
            seg = traj.segments[traj._locate(np.array([t]))[0]]
            u = cfg.value(seg.levels[0])
            y = 1 - seg.aggregate(t)
            return math.exp(-pl.p * t) * (-pl.lam * u * y + pl.gamma * (u - cfg.u_min))

        knots = [s.t_start for s in traj.segments] + [traj.t_saturation + 50 / pl.p]
        total = sum(quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
                    for a, b in zip(knots, knots[1:]))
        assert cost_quadrature(cfg, profile, 0).value == pytest.approx(total, abs=1e-8)


def test_policy_value_matches_quadrature_and_hjb():
    rng = np.random.default_rng(8)
    for _ in range(20):
        cfg = GameConfig(tuple(PlayerParams(float(rng.uniform(50, 150)), float(rng.uniform(10, 90)),
                                            float(rng.uniform(1, 100))) for _ in range(3)))
        profile = random_strategies(rng, 5)[2:]
        vf = policy_value(cfg, 1, profile)
        assert vf(0.0) == pytest.approx(cost_quadrature(cfg, profile, 1).value, abs=1e-9)
        for pc in vf.pieces:
            x = 0.5 * (pc.x_lo + min(pc.x_hi, 0.999))
            assert abs(hjb_residual(pc, x)) <= 1e-8 * max(1, abs(pc.c))


def test_best_response_invariants_on_random_games():
    rng = np.random.default_rng(11)
    for trial in range(40):
        n = int(rng.integers(1, 5))
        cfg = GameConfig(tuple(PlayerParams(float(rng.uniform(20, 200)), float(rng.uniform(5, 150)),
                                            float(10 ** rng.uniform(-1, 2.5))) for _ in range(n)),
                         1.0, float(rng.uniform(2, 12)))
        profile = random_strategies(rng, n + 2)[2:]
        i = int(rng.integers(n))
        res = best_response(cfg, i, profile)
        vf = res.value_function
        assert vf.terminal.K == 0.0 and vf.terminal.level is MIN
        assert max(vf.continuity_defects(), default=0.0) <= 1e-9
        assert res.strategy.level_at(min(res.last_switch + 1e-9, 1 - 1e-12)) is MIN
        assert len(res.strategy.breakpoints) <= 10
        bound = vf.bound(cfg)
        xs = np.linspace(vf.x_start, 1 - 1e-9, 200)
        assert np.all(np.abs(vf(xs)) <= bound)
        verify_best_response(cfg, i, profile, res, 60, seed=trial)


def test_verification_catches_perturbed_thresholds(fig2, fig2_profile):
    res = best_response(fig2, 0, fig2_profile)
    for delta in (-0.05, 0.05):
        wrong = threshold_profile([0.23 + delta] + [0.23] * 9)
        bad = best_response(fig2, 0, fig2_profile)
        bad.strategy = wrong[0]
        with pytest.raises(VerificationFailed):
            verify_best_response(fig2, 0, fig2_profile, bad, 200, seed=1)
    report = verify_best_response(fig2, 0, fig2_profile, res, 200, seed=1)
    assert report.passed


def test_degenerate_result_survives_verification(degenerate):
    res = best_response(degenerate, 0, all_min_profile(4))
    assert verify_best_response(degenerate, 0, all_min_profile(4), res, 200, seed=1).passed


def test_report_helpers(fig2, fig2_profile):
    res = best_response(fig2, 0, fig2_profile)
    assert "threshold 0.230000" in res.summary()
    assert [r[3] for r in res.rows()] == ["max", "min"]


def test_rejects_zero_discount():
    cfg = GameConfig((PlayerParams(100, 70, 0.0),), horizon=1.0)
    with pytest.raises(ValueError):
        best_response(cfg, 0, (Strategy.constant(MIN),))
