import math

import numpy as np
import pytest

from bsforecast.interp import fit_quadratic
from bsforecast.qr_solver import (
    SolverConfig,
    SolverError,
    apply_L,
    build_grid,
    functional,
    gradient,
    h2_norm,
    minimize,
    reversed_heat_norm,
    sample_reference,
    solve_wellposed_downward,
)

from conftest import make_inputs

TAU = 1 / 255


def const_inputs(c=2.5, s=(99.0, 101.0)):
    return make_inputs(bid=(c, c, c), ask=(c + 1e-12, c + 1e-12, c + 1e-12), s=s)


# -- config and grid ------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [dict(alpha=0.0), dict(alpha=1.0), dict(cg_rel_tol=0.0), dict(n_s=4), dict(n_t=20), dict(n_s=3), dict(cg_max_iters=0)],
)
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_grid_examples():
    inp = make_inputs(s=(10.0, 12.0))
    g = build_grid(inp, SolverConfig(n_s=5, n_t=5))
    np.testing.assert_array_equal(g.s_nodes, [10, 10.5, 11, 11.5, 12])
    np.testing.assert_allclose(g.t_nodes, [0, TAU / 2, TAU, 1.5 * TAU, 2 * TAU], rtol=0, atol=1e-18)
    assert g.t_nodes[-1] == 2 * TAU
    assert g.ds == 0.5 and g.dt == pytest.approx(TAU / 2)
    assert g.s_nodes[g.mid_s] == 11.0 and g.t_nodes[g.mid_t] == pytest.approx(TAU)
    free = g.free_mask()
    assert not free[:, 0].any() and not free[0].any() and not free[-1].any()
    assert free[1:-1, 1:].all()


# -- operator ---------------------------------------------------------------


@pytest.fixture
def grid5():
    return build_grid(make_inputs(), SolverConfig(n_s=5, n_t=5))


def test_L_constant_and_linear(grid5):
    g = grid5
    sigma = fit_quadratic(0.2, 0.25, 0.3, TAU)
    np.testing.assert_allclose(apply_L(np.full(g.shape, 3.0), g, sigma), 0.0, atol=1e-9)
    u = np.repeat(g.s_nodes[:, None], g.shape[1], axis=1)
    np.testing.assert_allclose(apply_L(u, g, sigma), 0.0, atol=1e-8)


def test_L_quadratic_in_s(grid5):
    g = grid5
    u = np.repeat((g.s_nodes**2)[:, None], g.shape[1], axis=1)
    r = apply_L(u, g, np.full(g.shape[1], 0.2))
    expected = 0.04 * g.s_nodes[1:-1, None] ** 2 * np.ones((1, g.shape[1] - 1))
    np.testing.assert_allclose(r[1:-1, :-1], expected, rtol=1e-9)
    # zero-filled outside the stencil's domain
    assert not r[0].any() and not r[-1].any() and not r[:, -1].any()


def test_L_shape_mismatch(grid5):
    with pytest.raises(ValueError):
        apply_L(np.zeros((4, 5)), grid5, 0.2)


# -- functional and gradient ------------------------------------------------


def test_functional_zero_for_constant_quotes():
    inp = const_inputs()
    g = build_grid(inp, SolverConfig())
    F = sample_reference(inp, g)
    assert functional(F, F, g, inp, 0.01) == pytest.approx(0.0, abs=1e-12)


def test_functional_at_F_is_residual_only(varied_inputs):
    g = build_grid(varied_inputs, SolverConfig(n_s=7, n_t=7))
    F = sample_reference(varied_inputs, g)
    r = apply_L(F, g, varied_inputs)
    expected = float(np.sum(r**2) * g.ds * g.dt)
    for alpha in (0.5, 0.01):
        assert functional(F, F, g, varied_inputs, alpha) == pytest.approx(expected, rel=1e-10)


def test_quadratic_homogeneity():
    inp = const_inputs()
    g = build_grid(inp, SolverConfig(n_s=7, n_t=7))
    F = sample_reference(inp, g)
    d = np.random.default_rng(0).standard_normal(g.shape)
    j1 = functional(F + d, F, g, inp, 0.01)
    j2 = functional(F + 2 * d, F, g, inp, 0.01)
    assert j1 > 0 and j2 == pytest.approx(4 * j1, rel=1e-12)


def test_second_difference_constancy(varied_inputs):
    g = build_grid(varied_inputs, SolverConfig(n_s=7, n_t=7))
    F = sample_reference(varied_inputs, g)
    rng = np.random.default_rng(1)
    d = rng.standard_normal(g.shape) * 1e-2

    def second(u):
        J = lambda v: functional(v, F, g, varied_inputs, 0.01)
        return J(u + 2 * d) - 2 * J(u + d) + J(u)

    ref = second(F)
    for _ in range(3):
        u = F + rng.standard_normal(g.shape) * 1e-2
        assert second(u) == pytest.approx(ref, rel=1e-8)


def test_nonnegative(varied_inputs):
    g = build_grid(varied_inputs, SolverConfig(n_s=7, n_t=7))
    F = sample_reference(varied_inputs, g)
    rng = np.random.default_rng(2)
    for _ in range(5):
        assert functional(F + rng.standard_normal(g.shape), F, g, varied_inputs, 0.3) >= 0


def fd_gradient_errors(inputs, alpha=0.01, h=1e-6, seed=3):
    g = build_grid(inputs, SolverConfig(n_s=5, n_t=5))
    F = sample_reference(inputs, g)
    u = F + 0.1 * np.random.default_rng(seed).standard_normal(g.shape)
    G = gradient(u, F, g, inputs, alpha)
    errs = []
    for i, j in zip(*np.nonzero(g.free_mask())):
        e = np.zeros(g.shape)
        e[i, j] = h
        fd = (functional(u + e, F, g, inputs, alpha) - functional(u - e, F, g, inputs, alpha)) / (2 * h)
        errs.append(abs(fd - G[i, j]) / abs(G[i, j]))
    return G, g, np.array(errs)


def test_gradient_matches_finite_differences(varied_inputs):
    G, g, errs = fd_gradient_errors(varied_inputs)
    assert len(errs) == g.free_mask().sum() == 12
    assert errs.max() <= 1e-5
    # pinned nodes are exactly zero
    assert np.all(G[~g.free_mask()] == 0.0)


# -- minimize ------------------------------------------------------------


def test_constant_quotes_minimizer():
    inp = make_inputs(bid=(2.5, 2.5, 2.5), ask=(2.5 + 1e-9,) * 3)
    res = minimize(inp)
    assert res.converged
    np.testing.assert_allclose(res.u, 2.5, atol=1e-8)
    assert res.value == pytest.approx(0.0, abs=1e-12)


def test_minimizer_unique_from_two_starts(varied_inputs):
    cfg = SolverConfig()
    grid = build_grid(varied_inputs, cfg)
    a = minimize(varied_inputs, cfg, start=np.zeros(grid.shape))
    b = minimize(varied_inputs, cfg, start=sample_reference(varied_inputs, grid))
    assert a.converged and b.converged
    assert np.max(np.abs(a.u - b.u)) <= 1e-8


def test_gradient_small_at_minimizer(varied_inputs):
    res = minimize(varied_inputs)
    G = gradient(res.u, res.F, res.grid, varied_inputs, 0.01)
    G0 = gradient(res.F, res.F, res.grid, varied_inputs, 0.01)
    assert np.linalg.norm(G) <= 1e-7 * np.linalg.norm(G0)


def test_constraints_bit_exact(varied_inputs):
    res = minimize(varied_inputs, start=np.ones((21, 21)) * 7.0)
    g = res.grid
    F = sample_reference(varied_inputs, g)
    np.testing.assert_array_equal(res.u[:, 0], F[:, 0])
    np.testing.assert_array_equal(res.u[0, :], varied_inputs.ub_poly(g.t_nodes))
    np.testing.assert_array_equal(res.u[-1, :], varied_inputs.ua_poly(g.t_nodes))


def test_price_scaling_linearity(varied_inputs):
    base = minimize(varied_inputs).u
    for lam in (0.5, 3.0):
        scaled = minimize(varied_inputs.scaled_quotes(lam)).u
        assert np.max(np.abs(scaled - lam * base)) <= 1e-8 * lam * np.max(np.abs(base))


def test_iteration_cap_is_reported(varied_inputs):
    res = minimize(varied_inputs, SolverConfig(cg_max_iters=3))
    assert not res.converged and res.iterations == 3


def test_determinism(varied_inputs):
    a = minimize(varied_inputs)
    b = minimize(varied_inputs)
    assert np.array_equal(a.u, b.u) and a.iterations == b.iterations


def test_stability_bound_shape(synthetic_inputs):
    ratios = []
    for alpha in (1e-1, 1e-2, 1e-3):
        res = minimize(synthetic_inputs, SolverConfig(alpha=alpha))
        assert res.converged
        ratios.append(h2_norm(res.u, res.grid) * math.sqrt(alpha) / h2_norm(res.F, res.grid))
    assert max(ratios) <= 10 * ratios[0]


# -- downward solve -----------------------------------------------------


def test_downward_constant():
    inp = const_inputs(c=2.5)
    g = build_grid(inp, SolverConfig())
    u = solve_wellposed_downward(np.full(g.shape[0], inp.u_b), inp, g)
    np.testing.assert_allclose(u, 2.5, atol=1e-11)


def test_downward_linear_in_s():
    inp = make_inputs(bid=(99.0,) * 3, ask=(101.0,) * 3)
    g = build_grid(inp, SolverConfig())
    u = solve_wellposed_downward(g.s_nodes.copy(), inp, g)
    np.testing.assert_allclose(u, np.repeat(g.s_nodes[:, None], g.shape[1], axis=1), rtol=1e-12)


def test_downward_has_zero_residual_and_maximum_principle(varied_inputs):
    g = build_grid(varied_inputs, SolverConfig())
    terminal = varied_inputs.ub_poly(2 * TAU) + np.sin(np.linspace(0, math.pi, g.shape[0])) * 0.3
    terminal[-1] = varied_inputs.ua_poly(2 * TAU)
    u = solve_wellposed_downward(terminal, varied_inputs, g)
    r = apply_L(u, g, varied_inputs)
    assert np.max(np.abs(r)) <= 1e-9 * np.max(np.abs(u)) / g.dt
    data = np.concatenate([terminal, u[0], u[-1]])
    assert data.min() - 1e-12 <= u.min() and u.max() <= data.max() + 1e-12


def test_downward_shape_error(varied_inputs):
    g = build_grid(varied_inputs, SolverConfig())
    with pytest.raises(ValueError):
        solve_wellposed_downward(np.zeros(3), varied_inputs, g)


# -- ill-posedness exhibit ---------------------------------------------


def test_reversed_heat_norm_examples():
    assert reversed_heat_norm([1.0], 0.3) == pytest.approx(math.pi / 2 * math.exp(0.6), rel=1e-14)
    f = [0.3, -1.2, 0.5]
    assert reversed_heat_norm(f, 0.0) == pytest.approx(math.pi / 2 * sum(x * x for x in f), rel=1e-14)
    ratio = reversed_heat_norm([0.0, 1.0], 0.1) / reversed_heat_norm([0.0, 1.0], 0.0)
    assert ratio == pytest.approx(math.exp(0.8), rel=1e-12)


def test_solver_error_type():
    assert issubclass(SolverError, RuntimeError)
