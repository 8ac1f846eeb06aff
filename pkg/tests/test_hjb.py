import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from viewrace.dynamics import DomainError
from viewrace.hjb import (ValueFunction, ValuePiece, hamiltonian_argmax, hjb_residual,
                          make_piece, switching_coefficient, switching_function_T,
                          value_derivative, value_eval, value_eval_combined)
from viewrace.model import ControlLevel, GameConfig, PlayerParams

MIN, MAX = ControlLevel.MIN, ControlLevel.MAX


def last_piece(lam=100.0, p=100.0, n=10):
    return ValuePiece(0.0, 1.0, 0.0, n * lam, lam, 0.0, p, MIN)


def random_piece(rng):
    # rates as they arise in games: aggregate rate a at least as large as p
    a = 10 ** rng.uniform(2, 4)
    b = rng.uniform(0, 0.5) * a
    c = -rng.uniform(0, 500)
    p = 10 ** rng.uniform(-1, 2)
    lo = rng.uniform(0, 0.5)
    return ValuePiece(lo, rng.uniform(lo + 0.1, 1.0), rng.normal(0, 2), a, b, c, p)


def test_last_interval_value_and_slope():
    pc = last_piece()
    assert value_eval(pc, 0.0) == pytest.approx(-100 / 1100, abs=1e-15)
    assert value_derivative(pc, 0.37) == pytest.approx(1 / 11, abs=1e-15)
    assert abs(value_eval(pc, 1 - 1e-12)) < 1e-12


def test_two_forms_agree():
    rng = np.random.default_rng(1)
    for _ in range(200):
        pc = random_piece(rng)
        x = rng.uniform(pc.x_lo, min(pc.x_hi, 0.999))
        v1, v2 = value_eval(pc, x), value_eval_combined(pc, x)
        assert v1 == pytest.approx(v2, rel=1e-12, abs=1e-13)


def test_matches_ode_integration():
    rng = np.random.default_rng(2)
    for _ in range(5):
        pc = random_piece(rng)
        hi = min(pc.x_hi, 0.99)
        # p V - a y V' + b y + c = 0  =>  V' = (p V + b y + c) / (a y)
        sol = solve_ivp(lambda x, v: (pc.p * v + pc.b * (1 - x) + pc.c) / (pc.a * (1 - x)),
                        (pc.x_lo, hi), [value_eval(pc, pc.x_lo)], rtol=1e-12, atol=1e-13,
                        dense_output=True)
        xs = np.linspace(pc.x_lo, hi, 5)
        assert np.max(np.abs(sol.sol(xs)[0] - value_eval(pc, xs))) <= 1e-8


def test_residual_and_derivative_on_random_pieces():
    rng = np.random.default_rng(3)
    for _ in range(500):
        pc = random_piece(rng)
        x = rng.uniform(pc.x_lo + 1e-5, min(pc.x_hi, 0.99) - 1e-5)
        assert abs(hjb_residual(pc, x)) <= 1e-8
        h = 1e-6
        fd = (value_eval(pc, x + h) - value_eval(pc, x - h)) / (2 * h)
        assert abs(fd - value_derivative(pc, x)) <= 1e-5 * max(1.0, abs(fd))


def test_residual_structure():
    rng = np.random.default_rng(4)
    pc = random_piece(rng)
    x = 0.5 * (pc.x_lo + min(pc.x_hi, 0.99))
    bumped = ValuePiece(pc.x_lo, pc.x_hi, pc.K + 1e-3, pc.a, pc.b, pc.c, pc.p)
    assert abs(hjb_residual(bumped, x)) <= 1e-8 * max(1.0, abs(pc.c))
    # keep V and V' from the original piece, change b only in the residual
    d = 0.7
    shifted = ValuePiece(pc.x_lo, pc.x_hi, pc.K, pc.a, pc.b + d, pc.c, pc.p)
    y = 1 - x
    manual = (pc.p * value_eval(pc, x) - pc.a * y * value_derivative(pc, x)
              + (pc.b + d) * y + pc.c)
    assert manual - hjb_residual(pc, x) == pytest.approx(d * y, rel=1e-9)
    assert shifted.b == pc.b + d


def test_constant_derivative_when_k_zero():
    pc = ValuePiece(0.0, 1.0, 0.0, 500.0, 40.0, -30.0, 3.0)
    xs = np.linspace(0, 0.9, 7)
    assert np.allclose(value_derivative(pc, xs), 40 / 503, rtol=1e-14)


def test_domain_errors():
    pc = ValuePiece(0.2, 0.5, 0.0, 10.0, 1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        value_eval(pc, 0.1)
    with pytest.raises(DomainError):
        value_eval(pc, 0.6)
    assert np.isfinite(value_eval(pc, 0.5))


def test_switching_coefficient_root_is_symmetric_threshold():
    pc = last_piece()
    root = brentq(lambda x: switching_coefficient(x, pc, 100.0, 70.0), 0.0, 0.99, xtol=1e-15)
    assert root == pytest.approx(0.23, abs=1e-9)
    xs = np.linspace(0, 0.99, 50)
    assert np.allclose(switching_coefficient(xs, pc, 100, 70), 100 * (1 - xs) * 10 / 11 - 70)


def test_lambda_below_gamma_never_accelerates():
    pc = ValuePiece(0.0, 1.0, 0.0, 450.0, 50.0, 0.0, 100.0, MIN)
    xs = np.linspace(0, 0.999, 200)
    assert np.all(switching_coefficient(xs, pc, 50.0, 70.0) < 0)


def test_free_acceleration_always_pays():
    pc = last_piece()
    xs = np.linspace(0, 0.999, 200)
    assert np.all(switching_coefficient(xs, pc, 100.0, 0.0) > 0)


def test_switching_function_examples(fig2):
    pl = fig2.players[0]
    assert switching_function_T(MIN, 900.0, 0.0, 0.23, pl, fig2) == pytest.approx(0, abs=1e-12)
    slow = GameConfig.symmetric(3, 50, 70, 100)
    xs = np.linspace(0, 0.99, 100)
    for a_minus in (100.0, 1000.0, 1e5):
        assert np.all(switching_function_T(MAX, a_minus, 0.0, xs, slow.players[0], slow) < 0)
    impatient = PlayerParams(100.0, 70.0, 5000.0)
    near_one = [switching_function_T(MIN, 900.0, 2.0, 1 - 10.0 ** -k, impatient, fig2)
                for k in (3, 6, 9, 12)]
    assert all(b < a for a, b in zip(near_one, near_one[1:])) and near_one[-1] < -1e6


def test_sign_agreement_between_switching_forms():
    rng = np.random.default_rng(5)
    cfg = GameConfig.symmetric(3, 100.0, 40.0, 20.0)
    pl = cfg.players[0]
    for _ in range(300):
        level = MAX if rng.random() < 0.5 else MIN
        a_minus = rng.uniform(100, 3000)
        b = pl.lam * cfg.value(level)
        pc = make_piece(0.0, 1.0, a_minus + b, b, pl.gamma * (cfg.u_min - cfg.value(level)), pl.p,
                        K=rng.normal(0, 0.5))
        x = rng.uniform(0, 0.95)
        phi = switching_coefficient(x, pc, pl.lam, pl.gamma)
        T = switching_function_T(level, a_minus, pc.K, x, pl, cfg)
        if abs(phi) > 1e-9:
            assert np.sign(T) == np.sign(phi)
            assert hamiltonian_argmax(pc, x, pl.lam, pl.gamma) is (MAX if phi > 0 else MIN)


def test_value_function_helpers():
    right = ValuePiece(0.4, 1.0, 0.0, 1000.0, 100.0, 0.0, 10.0, MIN)
    left = make_piece(0.0, 0.4, 10000.0, 1000.0, -630.0, 10.0,
                      through=(0.4, value_eval(right, 0.4)), level=MAX)
    vf = ValueFunction([right, left], 0)
    assert vf.x_start == 0.0 and vf.terminal is right
    assert vf.boundaries() == [0.4]
    assert max(vf.continuity_defects()) <= 1e-12
    assert vf(0.4) == value_eval(right, 0.4)
    assert vf(0.39) == value_eval(left, 0.39)
    rows = vf.rows(10)
    assert len(rows) == 20 and len(rows[0]) == 8
