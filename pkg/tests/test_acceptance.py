"""End-to-end acceptance checks; each test prints one PASS/FAIL line.

Run alone with ``python3 -m pytest tests/test_acceptance.py -v -s``.
"""

import time

import numpy as np
import pytest
from scipy.optimize import bisect, brentq

from viewrace.bestresponse import best_response, verify_best_response
from viewrace.equilibrium import (best_response_iteration, epsilon_equilibrium,
                                  existence_margin, k_star_from_continuity,
                                  symmetric_equilibrium, symmetric_existence,
                                  symmetric_threshold, symmetric_value_function,
                                  vanishing_threshold)
from viewrace.finitehorizon import fh_first_interval, fh_propagate, fh_residual, first_piece
from viewrace.hjb import ValuePiece, hjb_residual, switching_coefficient, value_derivative, value_eval
from viewrace.model import (ControlLevel, GameConfig, PlayerParams, Strategy, all_min_profile,
                            threshold_profile)
from viewrace.montecarlo import McConfig, mc_convergence_report, mc_run, sup_error
from viewrace.sweeps import run_sweep

FIG2 = dict(lam=100.0, gamma=70.0, p=100.0, n=10, u_min=1.0, u_max=10.0)


@pytest.fixture
def report(request, capsys):
    def emit(checks: dict[str, bool], detail: str = ""):
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        line = f"{'PASS' if ok else 'FAIL'} {request.node.name}"
        if failed:
            line += "  [failed: " + "; ".join(failed) + "]"
        if detail:
            line += "  " + detail
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return emit


def test_criterion_01_symmetric_threshold(report):
    t0 = time.perf_counter()
    res = symmetric_equilibrium(**FIG2)
    idle = ValuePiece(0.0, 1.0, 0.0, 1000.0, 100.0, 0.0, 100.0)
    root = brentq(lambda x: switching_coefficient(x, idle, 100.0, 70.0), 0.0, 0.99, xtol=1e-15)
    dt = time.perf_counter() - t0
    report({"x* == 0.23": abs(res.x_star - 0.23) <= 1e-15,
            "independent root within 1e-9": abs(root - res.x_star) <= 1e-9,
            "runtime < 1 s": dt < 1.0},
           f"x*={res.x_star!r} root={root!r} t={dt:.3f}s")


def test_criterion_02_existence_boundary(report):
    margin = lambda g: existence_margin(100, g, 100, 10, 1)  # noqa: E731
    g_cross = bisect(margin, 70, 95, xtol=1e-12)
    report({"exists at 70": symmetric_existence(100, 70, 100, 10, 1),
            "absent at 95": not symmetric_existence(100, 95, 100, 10, 1),
            "margin(70) = +20.909": abs(margin(70) - 20.909) < 5e-4,
            "margin(95) = -4.091": abs(margin(95) + 4.091) < 5e-4,
            "crossover 1000/11 to 1e-9": abs(g_cross - 1000 / 11) <= 1e-9},
           f"crossover={g_cross!r}")


def test_criterion_03_k_star(report):
    rng = np.random.default_rng(2024)
    k_vals, defects = [], []
    while len(k_vals) < 100:
        lam, p = 10 ** rng.uniform(1, 3), 10 ** rng.uniform(-1, 3)
        n, u_min = int(rng.integers(2, 40)), rng.uniform(0.5, 2.0)
        u_max = u_min * rng.uniform(1.5, 20)
        gamma = rng.uniform(0.01, 1.0) * lam
        if not symmetric_existence(lam, gamma, p, n, u_min):
            continue
        x = symmetric_threshold(lam, gamma, p, n, u_min)
        if not 0 < x < 1:
            continue
        k = k_star_from_continuity(lam, gamma, p, n, u_min, u_max, x)
        vf = symmetric_value_function(lam, gamma, p, n, u_min, u_max, x, k)
        k_vals.append(k)
        defects.append(max(vf.continuity_defects()))
    n_pos = sum(k > 0 for k in k_vals)
    report({"K* > 0 on all draws": n_pos == 100,
            "continuity defect <= 1e-9": max(defects) <= 1e-9},
           f"positive {n_pos}/100, max defect {max(defects):.2e}")


def test_criterion_04_hjb_exactness(report):
    rng = np.random.default_rng(4)
    worst_r = worst_d = 0.0
    for _ in range(10_000):
        a = 10 ** rng.uniform(2, 4)
        lo = rng.uniform(0, 0.5)
        pc = ValuePiece(lo, rng.uniform(lo + 0.1, 1.0), rng.normal(0, 2), a,
                        rng.uniform(0, 0.5) * a, -rng.uniform(0, 500), 10 ** rng.uniform(-1, 2))
        x = rng.uniform(pc.x_lo + 1e-5, min(pc.x_hi, 0.99) - 1e-5)
        worst_r = max(worst_r, abs(hjb_residual(pc, x)))
        h = 1e-6
        fd = (value_eval(pc, x + h) - value_eval(pc, x - h)) / (2 * h)
        worst_d = max(worst_d, abs(fd - value_derivative(pc, x)) / max(1.0, abs(fd)))
    report({"residual <= 1e-8": worst_r <= 1e-8, "derivative vs FD <= 1e-5": worst_d <= 1e-5},
           f"residual {worst_r:.2e}, derivative {worst_d:.2e}")


def test_criterion_05_best_response_optimality(report):
    t0 = time.perf_counter()
    cases = {
        "symmetric": (GameConfig.symmetric(10, 100, 70, 100), threshold_profile([0.23] * 10)),
        "degenerate": (GameConfig.symmetric(4, 50, 70, 100), all_min_profile(4)),
        "asymmetric gamma": (GameConfig((PlayerParams(100, 70, 1), PlayerParams(100, 60, 1))),
                             threshold_profile([0.5, 0.9])),
    }
    checks, gaps = {}, []
    for name, (cfg, prof) in cases.items():
        res = best_response(cfg, 0, prof)
        rep = verify_best_response(cfg, 0, prof, res, n_alternatives=500, seed=5, tol=1e-6)
        checks[name] = rep.passed and rep.value_gap <= 1e-6
        gaps.append(rep.value_gap)
    dt = time.perf_counter() - t0
    checks["runtime < 30 s"] = dt < 30
    report(checks, f"max gap {max(gaps):.2e} t={dt:.2f}s")


def test_criterion_06_sweeps(report):
    t0 = time.perf_counter()
    a, b, c, d = (run_sweep(k) for k in ("fig2a", "fig2b", "fig2c", "fig2d"))
    dec = lambda v: bool(np.all(np.diff(v) < 0))  # noqa: E731
    ya, yb = next(iter(a.curves.values())), next(iter(b.curves.values()))
    stack_c = np.array(list(c.curves.values()))
    lo, hi = d.curves["lambda=100"], d.curves["lambda=200"]
    pl = PlayerParams(100, 70, 0.01)
    s9000, s900 = vanishing_threshold(pl, 9000, 1, 10), vanishing_threshold(pl, 900, 1, 10)
    dt = time.perf_counter() - t0
    report({"fig2a/b strictly decreasing": dec(ya) and dec(yb),
            "floor 0.3 within 1% at grid max": abs(ya[-1] - 0.3) <= 0.003 and abs(yb[-1] - 0.3) <= 0.003,
            "fig2c ordered in gamma/lambda": bool(np.all(np.diff(stack_c, axis=0) < 0)),
            "fig2d classes ordered": bool(np.all(hi > lo)),
            "x0(9000) = 0.37693": abs(s9000 - 0.37693) <= 1e-5,
            "x0(900) = 0.70158": abs(s900 - 0.70158) <= 1e-5,
            "runtime < 5 s": dt < 5},
           f"end values fig2a {ya[-1]:.5f} fig2b {yb[-1]:.5f}")


def test_criterion_07_epsilon_equilibrium(report):
    t0 = time.perf_counter()
    cfg = GameConfig((PlayerParams(100, 70, 1), PlayerParams(100, 60, 1)))
    eps, states_ok, order_ok, single = [], True, True, True
    for p in (1.0, 0.1, 0.01):
        res = epsilon_equilibrium(cfg, p)
        states_ok &= np.allclose(res.thresholds, [0.68182, 0.97273], atol=1e-5)
        order_ok &= res.diagnostics["order"] == [0, 1] and res.diagnostics["order_by_descending_gamma"]
        single &= all(s.levels == (ControlLevel.MAX, ControlLevel.MIN) for s in res.profile)
        eps.append(res.epsilon)
    dt = time.perf_counter() - t0
    report({"switch states": states_ok, "order by descending gamma": order_ok,
            "no switch-backs": single,
            "epsilon nonincreasing over p": all(b <= a for a, b in zip(eps, eps[1:])),
            "runtime < 60 s": dt < 60},
           "epsilon " + ", ".join(f"{e:.6f}" for e in eps))


def test_criterion_08_mean_field(report):
    t0 = time.perf_counter()
    cfg, prof = GameConfig.symmetric(10, 100, 70, 100), threshold_profile([0.23] * 10)
    errs = np.array([sup_error(p, cfg, prof) for p in mc_run(cfg, prof, McConfig(10_000, 100, 8))])
    conv = mc_convergence_report(cfg, prof, [10_000, 40_000], 100, 8)
    dt = time.perf_counter() - t0
    frac = float(np.mean(errs <= 0.05))
    report({">= 95% within 0.05": frac >= 0.95,
            "M to 4M ratio in [0.25, 1]": conv.ratios_ok,
            "runtime < 5 min": dt < 300},
           f"within {frac:.2f}, ratio {conv.ratios[0]:.3f}, t={dt:.1f}s")


def test_criterion_09_finite_horizon(report):
    rng = np.random.default_rng(9)
    a, b, c, p = 1000.0, 100.0, -630.0, 100.0
    xs = np.linspace(0, 0.999, 1001)
    init = float(np.max(np.abs(fh_first_interval(xs, 0.0, a, b, c, p))))
    pc = first_piece(a, b, c, p)
    res = float(np.max(np.abs(fh_residual(pc, rng.uniform(0, 0.99, 2000),
                                          rng.uniform(1e-4, 0.05, 2000)))))
    nxt = fh_propagate(pc, 0.002, 10 * a, 10 * b, c, y_floor=1e-40)
    report({"V(x,0) = 0 to 1e-12": init <= 1e-12, "PDE residual <= 1e-5": res <= 1e-5,
            "matching defect <= 1e-6": nxt.match_defect <= 1e-6},
           f"init {init:.1e}, residual {res:.2e}, match {nxt.match_defect:.2e}")


def test_criterion_10_cross_solver(report):
    cfg = GameConfig.symmetric(10, 100, 70, 100)
    target = symmetric_equilibrium(**FIG2).x_star
    it = best_response_iteration(cfg, all_min_profile(10), max_rounds=20)
    err = max(abs(x - target) for x in it.thresholds)
    report({"within 1e-6": err <= 1e-6, "<= 20 rounds": it.diagnostics["rounds"] <= 20},
           f"rounds {it.diagnostics['rounds']}, error {err:.2e}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
