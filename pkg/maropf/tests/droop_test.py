import numpy as np

from maropf.droop import (
    DroopParameters,
    InconsistentActivation,
    activation,
    approx_to_exact,
    approximation_error,
    clip_to_capability,
    constant_impedance_equivalent,
    eval_approx_droop,
    eval_exact_droop,
    exact_to_approx,
)
from maropf.tests.cases import pv


def test_mapping_round_trip():
    params = DroopParameters(alpha_p=2.0, alpha_q=1.5, v0p=1.05, v0q=0.98, q_g0=0.1)
    curve = approx_to_exact(params, 1.1025)
    back = exact_to_approx(curve)
    for key, value in params.to_dict().items():
        assert np.isclose(back.to_dict()[key], value, rtol=1e-12), key
    assert np.isclose(curve.alpha_p_star, 2.0 * 2.0 * 1.05)


def test_linear_model_gap_is_quadratic():
    rng = np.random.default_rng(0)
    tau = 1.1025
    params = DroopParameters(alpha_p=3.0, alpha_q=2.0, v0p=1.0, v0q=1.0, q_g0=0.05)
    curve = approx_to_exact(params, tau)
    for V in rng.uniform(0.9, 1.1, 1000):
        v = V ** 2
        y = activation(params, v)
        p_lin, q_lin = eval_approx_droop(params, v, 0.5, y)
        p_exact, q_exact = eval_exact_droop(curve, V, 0.5)
        gap = (V - np.sqrt(tau)) ** 2
        assert abs(abs(q_lin - q_exact) - params.alpha_q * gap) <= 1e-12
        both_active = y == 1 and V > curve.vref_p_star
        if both_active:
            assert abs(abs(p_lin - p_exact) - params.alpha_p * gap) <= 1e-12
        elif y == 0:
            assert p_lin == p_exact == 0.5

    p_lin, q_lin = eval_approx_droop(params, tau, 0.5, 1)
    p_exact, q_exact = eval_exact_droop(curve, np.sqrt(tau), 0.5)
    assert abs(p_lin - p_exact) <= 1e-12 and abs(q_lin - q_exact) <= 1e-12


def test_approximation_error_signs():
    tau = 1.1025
    params = DroopParameters(alpha_p=3.0, alpha_q=2.0, v0p=1.0, v0q=0.98, q_g0=0.05)
    curve = approx_to_exact(params, tau)
    # the linear model switches on at sqrt(v0p), the exact curve only at vref_p_star
    assert np.sqrt(params.v0p) < curve.vref_p_star
    for V in np.linspace(0.9, 1.1, 1001):
        dp, dq = approximation_error(params, curve, V)
        gap = (V - np.sqrt(tau)) ** 2
        assert abs(dq + params.alpha_q * gap) <= 1e-12
        if V <= np.sqrt(params.v0p):
            assert dp == 0.0
        elif V <= curve.vref_p_star:
            assert abs(dp + params.alpha_p * (V ** 2 - params.v0p)) <= 1e-12
            assert dp < 0.0
        else:
            assert abs(dp + params.alpha_p * gap) <= 1e-12

    dp, dq = approximation_error(params, curve, np.sqrt(tau))
    assert abs(dp) <= 1e-12 and abs(dq) <= 1e-12


def test_activation_consistency():
    params = DroopParameters(1.0, 1.0, 1.0, 1.0, 0.0)
    try:
        eval_approx_droop(params, 0.95, 0.3, 1)
        assert False, "y=1 below v0p accepted"
    except InconsistentActivation:
        pass
    try:
        DroopParameters(-1.0, 1.0, 1.0, 1.0, 0.0)
        assert False, "negative slope accepted"
    except ValueError:
        pass


def test_impedance_split():
    params = DroopParameters(alpha_p=2.0, alpha_q=1.0, v0p=1.02, v0q=1.0, q_g0=0.1)
    power, admittance = constant_impedance_equivalent(params, 1, 0.4)
    v = 1.04
    p, q = eval_approx_droop(params, v, 0.4, 1)
    assert np.isclose(power.real - admittance.real * v, p)
    assert np.isclose(power.imag - admittance.imag * v, q)


def test_capability_clipping():
    unit = pv("pv", 1, p_max=1.0)
    p, q = clip_to_capability(1.5, 0.0, unit)
    assert p == 1.0 and q == 0.0
    # reactive output limited by the power-factor wedge
    p, q = clip_to_capability(0.2, 0.4, unit)
    assert np.isclose(q, 0.2 * unit.pf_slope)
    p, q = clip_to_capability(1.0, 0.45, unit)
    assert p ** 2 + q ** 2 <= unit.s_max ** 2 + 1e-12
