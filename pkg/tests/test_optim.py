"""Optimizer tests: descent/momentum baselines, the QuickProp case analysis,
the parabola diagnostic, and the quadratic-exactness properties."""

import numpy as np
import pytest

from qpbench.errors import DegenerateStepError, NumericError, ParameterError
from qpbench.optim import (
    OptimConfig,
    QuickPropState,
    StepCase,
    gd_step,
    make_optimizer,
    momentum_step,
    parabola_coefficients,
    quickprop_raw_step,
    quickprop_update,
    second_derivative_estimate,
)


# gradient descent


def test_gd_step_descends():
    assert gd_step(1.0, 2.0, 0.1) == pytest.approx(0.8)


def test_gd_step_zero_gradient():
    assert gd_step(1.0, 0.0, 0.1) == 1.0


def test_gd_contracts_on_quadratic():
    w, losses = 1.0, []
    for _ in range(10):
        losses.append(w * w)
        w = gd_step(w, 2.0 * w, 0.1)  # E(w) = w^2, contraction factor 0.8
        assert w == pytest.approx(losses and np.sqrt(losses[-1]) * 0.8)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_gd_decreases_any_stable_quadratic():
    rng = np.random.default_rng(0)
    for _ in range(50):
        alpha = rng.uniform(0.1, 10.0)
        lr = rng.uniform(0.0, 2.0) / (2.0 * alpha) * 0.999 + 1e-6
        w = rng.uniform(-5.0, 5.0)
        if abs(w) < 1e-6:
            continue
        w_next = gd_step(w, 2.0 * alpha * w, lr)
        assert alpha * w_next**2 < alpha * w**2


# momentum


def test_momentum_zero_reduces_to_gd():
    w, step = momentum_step(1.0, 2.0, 0.5, 0.1, 0.0)
    assert w == pytest.approx(gd_step(1.0, 2.0, 0.1))
    assert step == pytest.approx(-0.2)


def test_momentum_pure_inertia():
    _, step = momentum_step(0.0, 0.0, 0.1, 0.01, 0.9)
    assert step == pytest.approx(0.09)


def test_momentum_combines_terms():
    _, step = momentum_step(0.0, 1.0, 0.1, 0.01, 0.9)
    assert step == pytest.approx(0.08)


# secant second-derivative estimate


def test_secant_estimate_value():
    assert second_derivative_estimate(1.0, 2.0, -0.1) == pytest.approx(10.0)


def test_secant_estimate_zero_for_equal_gradients():
    assert second_derivative_estimate(1.5, 1.5, 0.3) == 0.0


def test_secant_estimate_exact_on_quadratics():
    rng = np.random.default_rng(1)
    for _ in range(50):
        alpha = rng.uniform(0.1, 10.0)
        w0, w1 = rng.uniform(-5, 5, size=2)
        if abs(w1 - w0) < 1e-6:
            continue
        est = second_derivative_estimate(2 * alpha * w1, 2 * alpha * w0, w1 - w0)
        assert est == pytest.approx(2.0 * alpha, rel=1e-9)


def test_secant_estimate_rejects_zero_step():
    with pytest.raises(DegenerateStepError):
        second_derivative_estimate(1.0, 2.0, 0.0)


# raw QuickProp step and its case dispatch


def test_raw_step_quadratic_case():
    dw, case = quickprop_raw_step(1.0, 2.0, -0.1, 1.75)
    assert case is StepCase.QUADRATIC
    assert dw == pytest.approx(-0.1, rel=1e-12)


def test_raw_step_reversal_case():
    dw, case = quickprop_raw_step(-1.0, 2.0, -0.1, 1.75)
    assert case is StepCase.REVERSAL
    assert dw == pytest.approx(1.0 / 30.0, rel=1e-12)


def test_raw_step_clamped_growing_gradient():
    dw, case = quickprop_raw_step(3.0, 2.0, -0.1, 1.75)
    assert case is StepCase.CLAMPED
    assert dw == pytest.approx(-0.175, rel=1e-12)


def test_raw_step_clamped_on_equal_gradients():
    dw, case = quickprop_raw_step(2.0, 2.0, 0.5, 1.75)
    assert case is StepCase.CLAMPED
    assert dw == pytest.approx(0.875)


def test_raw_step_clamps_oversized_quadratic_step():
    # same sign, shrinking, but the parabola jump is 99x the previous step
    dw, case = quickprop_raw_step(0.99, 1.0, 0.5, 1.75)
    assert case is StepCase.CLAMPED
    assert dw == pytest.approx(0.875)


def test_raw_step_keeps_previous_direction_when_clamped():
    dw, _ = quickprop_raw_step(3.0, 2.0, -0.1, 1.75)
    assert dw < 0  # raw factor -3 would have flipped the sign


def test_raw_step_rejects_zero_previous_step():
    with pytest.raises(DegenerateStepError):
        quickprop_raw_step(1.0, 2.0, 0.0, 1.75)


def test_reversal_step_lands_between_weights():
    rng = np.random.default_rng(2)
    for _ in range(100):
        g_t = rng.uniform(0.1, 5.0)
        g_prev = -rng.uniform(0.1, 5.0)
        dw_prev = rng.uniform(-2.0, 2.0)
        if dw_prev == 0:
            continue
        dw, case = quickprop_raw_step(g_t, g_prev, dw_prev, 1.75)
        assert case in (StepCase.REVERSAL, StepCase.CLAMPED)
        if case is StepCase.REVERSAL:
            assert abs(dw) < abs(dw_prev)  # backwards into the bracket


# parabola diagnostic


def test_parabola_coefficients_values():
    p = parabola_coefficients(5.0, 1.0, 2.0, -0.1)
    assert (p.a, p.b, p.c) == (pytest.approx(5.0), 1.0, 5.0)


def test_parabola_vertex_matches_update_step():
    p = parabola_coefficients(5.0, 1.0, 2.0, -0.1)
    dw, _ = quickprop_raw_step(1.0, 2.0, -0.1, 1e12)
    assert p.vertex_offset() == pytest.approx(dw, rel=1e-12)


def test_parabola_vertex_identity_randomized():
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(200):
        g_t, g_prev = rng.uniform(-4, 4, size=2)
        dw_prev = rng.uniform(-2, 2)
        if dw_prev == 0 or g_t == g_prev:
            continue
        p = parabola_coefficients(rng.uniform(0, 10), g_t, g_prev, dw_prev)
        if p.a <= 0:
            continue
        expected = g_t / (g_prev - g_t) * dw_prev
        assert p.vertex_offset() == pytest.approx(expected, rel=1e-12)
        checked += 1
    assert checked > 50


def test_parabola_flat_when_gradients_equal():
    p = parabola_coefficients(5.0, 1.0, 1.0, -0.1)
    assert p.a == 0.0
    with pytest.raises(DegenerateStepError):
        p.vertex_offset()


def test_parabola_rejects_zero_previous_step():
    with pytest.raises(DegenerateStepError):
        parabola_coefficients(5.0, 1.0, 2.0, 0.0)


# full update


def test_first_update_is_plain_descent():
    cfg = OptimConfig(learning_rate=0.01)
    state = QuickPropState.zeros(3)
    w = np.array([1.0, -2.0, 0.5])
    g = np.array([2.0, 4.0, 0.0])
    new_w = quickprop_update(w, g, state, cfg)
    np.testing.assert_allclose(new_w, w - 0.01 * g)
    assert state.ignited
    np.testing.assert_array_equal(state.prev_gradient, g)


def test_update_quadratic_case_with_gradient_addition():
    cfg = OptimConfig(learning_rate=0.01)
    state = QuickPropState(np.array([2.0]), np.array([-0.1]), ignited=True)
    new_w = quickprop_update(np.array([1.0]), np.array([1.0]), state, cfg)
    assert new_w[0] == pytest.approx(1.0 - 0.1 - 0.01)  # parabola step plus descent term


def test_update_gradient_addition_can_be_disabled():
    cfg = OptimConfig(learning_rate=0.01, gradient_addition=False)
    state = QuickPropState(np.array([2.0]), np.array([-0.1]), ignited=True)
    new_w = quickprop_update(np.array([1.0]), np.array([1.0]), state, cfg)
    assert new_w[0] == pytest.approx(0.9)


def test_update_tiny_gradient_falls_back_to_descent():
    cfg = OptimConfig(learning_rate=0.01)
    state = QuickPropState(np.array([2.0]), np.array([-0.1]), ignited=True)
    g = np.array([1e-16])
    new_w = quickprop_update(np.array([1.0]), g, state, cfg)
    assert new_w[0] == 1.0 - 0.01 * 1e-16


def test_update_zero_previous_step_falls_back_to_descent():
    cfg = OptimConfig(learning_rate=0.01)
    state = QuickPropState(np.array([2.0]), np.array([0.0]), ignited=True)
    new_w = quickprop_update(np.array([1.0]), np.array([1.0]), state, cfg)
    assert new_w[0] == pytest.approx(0.99)


def test_update_rejects_non_finite_gradient():
    cfg = OptimConfig()
    state = QuickPropState.zeros(3)
    with pytest.raises(NumericError, match="index 1"):
        quickprop_update(np.zeros(3), np.array([0.0, np.nan, 1.0]), state, cfg)


def test_update_matches_scalar_case_analysis():
    """Vectorized update must treat each weight exactly as the scalar rules do."""
    cfg = OptimConfig(learning_rate=0.02, mu=1.75)
    rng = np.random.default_rng(4)
    n = 64
    g_prev = np.where(rng.uniform(size=n) < 0.1, 0.0, rng.uniform(-3, 3, size=n))
    s_prev = np.where(rng.uniform(size=n) < 0.1, 0.0, rng.uniform(-0.5, 0.5, size=n))
    g = np.where(rng.uniform(size=n) < 0.1, 1e-16, rng.uniform(-3, 3, size=n))
    g[0] = g_prev[0]  # equal-gradient lane
    w = rng.uniform(-1, 1, size=n)

    state = QuickPropState(g_prev.copy(), s_prev.copy(), ignited=True)
    vec = quickprop_update(w, g, state, cfg)

    for i in range(n):
        if abs(g[i]) < cfg.gradient_threshold or s_prev[i] == 0.0:
            dw = -cfg.learning_rate * g[i]
        else:
            dw, _ = quickprop_raw_step(g[i], g_prev[i], s_prev[i], cfg.mu)
            if (g[i] > 0 and g_prev[i] > 0) or (g[i] < 0 and g_prev[i] < 0):
                dw = dw + -cfg.learning_rate * g[i]
        assert vec[i] == w[i] + dw, f"component {i}"
        assert state.prev_step[i] == dw


def test_update_clamp_bound_holds():
    cfg = OptimConfig(learning_rate=0.05, mu=1.75)
    rng = np.random.default_rng(5)
    state = QuickPropState.zeros(32)
    w = rng.uniform(-1, 1, size=32)
    g = rng.uniform(-2, 2, size=32)
    w = quickprop_update(w, g, state, cfg)
    for _ in range(200):
        prev = state.prev_step.copy()
        g = rng.uniform(-2, 2, size=32)
        new_w = quickprop_update(w, g, state, cfg)
        step = state.prev_step  # the update just taken
        bound = cfg.mu * np.abs(prev) + cfg.learning_rate * np.abs(g) + 1e-15
        assert (np.abs(step) <= bound).all()
        np.testing.assert_array_equal(new_w, w + step)
        w = new_w


def test_one_step_quadratic_exactness():
    """After a descent ignition on E(w) = alpha*(w - w*)^2, the parabola jump
    lands on the minimizer (heuristics disabled: no clamp, no descent term)."""
    rng = np.random.default_rng(6)
    for _ in range(100):
        alpha = rng.uniform(0.1, 10.0)
        w_star = rng.uniform(-5.0, 5.0)
        w0 = rng.uniform(-5.0, 5.0)
        if abs(w0 - w_star) < 1e-3:
            continue
        lr = rng.uniform(0.05, 0.95) / (2.0 * alpha)  # keeps 2*alpha*lr < 1
        cfg = OptimConfig(learning_rate=lr, mu=1e12, gradient_addition=False)
        state = QuickPropState.zeros(1)
        w = np.array([w0])
        w = quickprop_update(w, 2 * alpha * (w - w_star), state, cfg)
        w = quickprop_update(w, 2 * alpha * (w - w_star), state, cfg)
        assert abs(w[0] - w_star) < 1e-9


def test_component_isolation_between_runs():
    """Two interleaved optimizers never interact."""
    cfg = OptimConfig(learning_rate=0.1)
    a = QuickPropState.zeros(2)
    b = QuickPropState.zeros(2)
    wa = np.array([1.0, 1.0])
    wb = np.array([1.0, 1.0])
    rng = np.random.default_rng(7)
    for _ in range(10):
        g = rng.uniform(-1, 1, size=2)
        wa = quickprop_update(wa, g, a, cfg)
    for _ in range(10):
        g = np.random.default_rng(8).uniform(-1, 1, size=2)
        wb2 = quickprop_update(wb, g, b, cfg)
        wb = wb2
    assert np.isfinite(wa).all() and np.isfinite(wb).all()


# config validation and the optimizer factory


def test_config_rejects_bad_values():
    with pytest.raises(ParameterError):
        OptimConfig(learning_rate=0.0)
    with pytest.raises(ParameterError):
        OptimConfig(mu=-1.0)
    with pytest.raises(ParameterError):
        OptimConfig(momentum=1.0)
    with pytest.raises(ParameterError):
        OptimConfig(gradient_threshold=0.0)


def test_make_optimizer_names():
    cfg = OptimConfig()
    for name in ("gd", "momentum", "quickprop"):
        opt = make_optimizer(name, cfg, 4)
        w = opt.update(np.ones(4), np.full(4, 0.5))
        assert w.shape == (4,)
    with pytest.raises(ParameterError):
        make_optimizer("adam", cfg, 4)


def test_momentum_optimizer_accumulates_velocity():
    cfg = OptimConfig(learning_rate=0.1, momentum=0.5)
    opt = make_optimizer("momentum", cfg, 1)
    w = np.array([0.0])
    w = opt.update(w, np.array([1.0]))  # step -0.1
    assert w[0] == pytest.approx(-0.1)
    w = opt.update(w, np.array([0.0]))  # pure inertia: step -0.05
    assert w[0] == pytest.approx(-0.15)
