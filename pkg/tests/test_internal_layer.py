"""Tests for the internal transmission profile machinery."""

import numpy as np
import pytest
import sympy as sp

from llx.errors import NonContraction, ValidationError
from llx.fields import constant_per_side
from llx.full_model import F_rhs
from llx.geometry import LevelSets, build_domain
from llx.internal_layer import (E1, ExtendedLimit, F_pm, ProfileGrid,
                                extend_limit, make_profile_grid,
                                make_time_grid, march_transmission,
                                picard_profiles, profile_d1,
                                transmission_defect, weighted_profile_norm,
                                _picard_column)
from llx.limit_model import rhs_limit, simulate_limit


# --- meshes ---

def test_profile_grid_structure():
    pg = make_profile_grid(Y=15.0, cells=128)
    assert pg.n == 257
    assert pg.j0 == 128
    assert pg.y[pg.j0] == 0.0
    assert pg.y[0] == -15.0 and pg.y[-1] == 15.0
    np.testing.assert_allclose(pg.y, -pg.y[::-1], atol=0)
    w = np.diff(pg.y[pg.j0:])
    # widths grow away from the junction and cap at h_max
    assert np.all(np.diff(w) >= -1e-15)
    assert w[0] < 1e-4
    assert w[-1] <= 0.3125 + 1e-12
    assert abs(w.sum() - 15.0) < 1e-12


def test_profile_grid_h_max_override():
    pg = make_profile_grid(Y=6.0, cells=64, h_max=0.1875)
    assert np.diff(pg.y).max() <= 0.1875 + 1e-12


def test_profile_grid_validation():
    with pytest.raises(ValueError, match="cells >= 8"):
        make_profile_grid(Y=15.0, cells=4)
    with pytest.raises(ValueError, match="growth"):
        make_profile_grid(growth=1.0)
    with pytest.raises(ValueError, match="cannot cover"):
        make_profile_grid(Y=100.0, cells=8, h_max=0.5)


def test_time_grid_binary_ramp():
    dt = 2.5e-3
    tg = make_time_grid(0.02, dt=dt, ramp_cells=6)
    assert tg[0] == 0.0 and tg[-1] == 0.02
    steps = np.diff(tg)
    # opening steps: dt/64, dt/64, dt/32, ..., dt/2, then uniform dt
    expect = dt * np.array([1, 1, 2, 4, 8, 16, 32]) / 64.0
    np.testing.assert_allclose(steps[:7], expect, rtol=1e-12)
    np.testing.assert_allclose(steps[7:], dt, rtol=1e-12)
    # every multiple of dt is present
    mults = dt * np.arange(9)
    assert all(np.min(np.abs(tg - m)) < 1e-15 for m in mults)


def test_time_grid_ragged_end_and_validation():
    tg = make_time_grid(0.0212, dt=5e-3)
    assert tg[-1] == 0.0212
    assert np.all(np.diff(tg) > 0)
    with pytest.raises(ValueError, match="positive"):
        make_time_grid(-1.0)
    with pytest.raises(ValueError, match="positive"):
        make_time_grid(1.0, dt=0.0)


# --- extended limit states ---

@pytest.fixture(scope="module")
def jump_setup():
    domain = build_domain(cells_per_side=16)
    levelsets = LevelSets()
    data = constant_per_side((0.6, 0.8, 0.0), (-0.6, 0.8, 0.0))
    times = make_time_grid(0.05, dt=2.5e-3)
    ext = extend_limit(data, domain, levelsets, times)
    return domain, levelsets, data, times, ext


def test_extension_constant_data_closed_form(jump_setup):
    domain, levelsets, data, times, ext = jump_setup
    # per-side constants evolve by the pointwise limit flow; the jump
    # field must be chi(|x|) times their difference
    traj = simulate_limit(np.array([data(np.array([0.0]), "minus")[0],
                                    data(np.array([0.0]), "plus")[0]]),
                          T=float(times[-1]), dt=1e-3, t_eval=list(times))
    keep = np.isin(traj.times, times)
    c_minus = traj.values[keep][:, 0]
    c_plus = traj.values[keep][:, 1]
    chi = levelsets.chi_sigma(ext.x_param)
    expect = chi[None, :, None] * (c_plus - c_minus)[:, None, :]
    np.testing.assert_allclose(ext.delta, expect, atol=1e-13)
    # exact time derivative of the jump from the blended flow rates
    expect_dt = chi[None, :, None] * (rhs_limit(c_plus)
                                      - rhs_limit(c_minus))[:, None, :]
    np.testing.assert_allclose(ext.delta_dt, expect_dt, atol=1e-13)


def test_extension_vanishes_outside_interface_neighborhood(jump_setup):
    _, levelsets, _, _, ext = jump_setup
    outside = ~levelsets.in_v_sigma(ext.x_param)
    assert outside.any()
    assert np.max(np.abs(ext.delta[:, outside])) == 0.0
    assert np.max(np.abs(ext.delta_dt[:, outside])) == 0.0


def test_extension_blend_exact_at_neighbor_nodes(jump_setup):
    # constant data: the extension one node into the far side must be
    # exactly the chi blend of the two evolved constants
    domain, levelsets, data, times, ext = jump_setup
    i0 = int(np.argmin(np.abs(ext.x_param)))
    traj = simulate_limit(np.array([data(np.array([0.0]), "minus")[0],
                                    data(np.array([0.0]), "plus")[0]]),
                          T=float(times[-1]), dt=1e-3, t_eval=list(times))
    keep = np.isin(traj.times, times)
    c_minus = traj.values[keep][:, 0]
    c_plus = traj.values[keep][:, 1]
    h = float(ext.x_param[i0 + 1])
    chi_h = float(levelsets.chi_sigma(np.array([h]))[0])
    np.testing.assert_allclose(ext.u_plus[:, i0 - 1],
                               chi_h * c_plus + (1 - chi_h) * c_minus,
                               atol=1e-13)
    np.testing.assert_allclose(ext.u_minus[:, i0 + 1],
                               chi_h * c_minus + (1 - chi_h) * c_plus,
                               atol=1e-13)
    np.testing.assert_allclose(ext.u_plus[:, i0], c_plus, atol=1e-13)
    np.testing.assert_allclose(ext.u_minus[:, i0], c_minus, atol=1e-13)


def test_extension_symmetric_data_is_jump_free():
    domain = build_domain(cells_per_side=8)
    levelsets = LevelSets()
    same = constant_per_side((0.6, 0.8, 0.0), (0.6, 0.8, 0.0))
    times = make_time_grid(0.02, dt=5e-3)
    ext = extend_limit(same, domain, levelsets, times)
    assert np.max(np.abs(ext.delta)) == 0.0
    assert np.max(np.abs(ext.delta_dt)) == 0.0


def test_extension_rejects_nonzero_start():
    domain = build_domain(cells_per_side=8)
    data = constant_per_side((0.6, 0.8, 0.0), (-0.6, 0.8, 0.0))
    with pytest.raises(ValueError, match="start at 0"):
        extend_limit(data, domain, LevelSets(), np.array([0.1, 0.2]))


# --- layer nonlinearity ---

def test_F_pm_matches_direct_increment():
    # F_pm must equal F(u0+U, V, H0-(U.n)n) - F(u0, 0, H0) exactly
    rng = np.random.default_rng(7)
    for _ in range(100):
        U = rng.normal(size=3)
        V = rng.normal(size=3)
        u0 = rng.normal(size=3)
        H0 = rng.normal(size=3)
        direct = (F_rhs(u0 + U, V, H0 - U[0] * E1)
                  - F_rhs(u0, np.zeros(3), H0))
        np.testing.assert_allclose(F_pm(U, V, u0, H0), direct,
                                   atol=1e-12, rtol=1e-12)


def test_F_pm_general_normal():
    rng = np.random.default_rng(11)
    n = np.array([0.0, 0.6, 0.8])
    for _ in range(20):
        U, V, u0, H0 = rng.normal(size=(4, 3))
        direct = (F_rhs(u0 + U, V, H0 - (U @ n) * n)
                  - F_rhs(u0, np.zeros(3), H0))
        np.testing.assert_allclose(F_pm(U, V, u0, H0, n=n), direct,
                                   atol=1e-12, rtol=1e-12)


def test_F_pm_zero_input_is_zero():
    u0 = np.array([0.3, -0.4, 0.5])
    H0 = np.array([-0.3, 0.0, 0.0])
    z = np.zeros(3)
    assert np.max(np.abs(F_pm(z, z, u0, H0))) == 0.0


def test_profile_d1_exact_on_quadratics():
    pg = make_profile_grid(Y=6.0, cells=32)
    y = pg.y
    W = np.stack([1.5 * y * y - 0.3 * y + 2.0,
                  -0.7 * y * y + y,
                  0.1 * y * y], axis=-1)
    expect = np.stack([3.0 * y - 0.3, -1.4 * y + 1.0, 0.2 * y], axis=-1)
    np.testing.assert_allclose(profile_d1(y, W), expect,
                               rtol=1e-9, atol=1e-9)
    # batched input differentiates along axis -2
    Wb = np.broadcast_to(W, (4, y.size, 3))
    np.testing.assert_allclose(profile_d1(y, Wb)[2], expect,
                               rtol=1e-9, atol=1e-9)


# --- marching kernel conveyance (manufactured solution) ---

def _mms_pieces():
    """Manufactured profile with a second-derivative kink at y = 0.

    W_m = sin(t) g_s(y) v with g_s = (1 + s y^2 / 10) e^{-y^2} on the
    side s = sign(y): continuous with continuous slope at the junction,
    jumping curvature, so both one-sided forcing values matter.
    """
    yy = sp.symbols("yy")
    v = np.array([0.3, -0.5, 0.8])
    g = {}
    g2 = {}
    for s in (1, -1):
        expr = (1 + sp.Rational(s, 10) * yy**2) * sp.exp(-(yy**2))
        g[s] = sp.lambdify(yy, expr, "numpy")
        g2[s] = sp.lambdify(yy, sp.diff(expr, yy, 2), "numpy")
    return v, g, g2


def _mms_march(n_cells: int, dt: float, T: float = 0.5):
    """March the manufactured problem on a uniform grid; return errors."""
    v, g, g2 = _mms_pieces()
    Y = 6.0
    y = np.linspace(-Y, Y, 2 * n_cells + 1)
    pg = ProfileGrid(y=y, Y=Y, j0=n_cells)
    assert pg.y[pg.j0] == 0.0
    times = np.linspace(0.0, T, int(round(T / dt)) + 1)
    env = np.exp(-(y**2))
    coeff = np.empty((times.size, y.size, 3))
    coeff[..., 0] = np.cos(times)[:, None] * env[None, :]
    coeff[..., 1] = np.sin(times)[:, None] * env[None, :]
    coeff[..., 2] = 0.5 * env[None, :]

    def forcing(side):
        gv = g[side](y)[None, :, None]
        g2v = g2[side](y)[None, :, None]
        cross = np.cross(coeff, v[None, None, :])
        return (np.cos(times)[:, None, None] * gv * v
                - np.sin(times)[:, None, None] * g2v
                * (v[None, None, :] + cross))

    W = march_transmission(pg, times, coeff, forcing(-1), forcing(1))
    exact = np.where((y >= 0.0)[:, None], g[1](y)[:, None] * v,
                     g[-1](y)[:, None] * v) * np.sin(times[-1])
    return float(np.max(np.abs(W[-1] - exact)))


def test_march_mms_corefined_second_order():
    errs = [_mms_march(n, dt) for n, dt in
            [(24, 0.05), (48, 0.025), (96, 0.0125)]]
    rates = [np.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert min(rates) > 1.8, f"rates {rates}, errors {errs}"


def test_march_mms_spatial_order_at_small_dt():
    errs = [_mms_march(n, dt=2e-4, T=0.02) for n in (24, 48, 96)]
    rates = [np.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert min(rates) > 1.8, f"rates {rates}, errors {errs}"


def test_march_zero_forcing_stays_zero():
    pg = make_profile_grid(Y=6.0, cells=32)
    times = make_time_grid(0.05, dt=0.01)
    shape = (times.size, pg.n, 3)
    coeff = np.zeros(shape)
    coeff[..., 1] = 0.9
    zeros = np.zeros(shape)
    W = march_transmission(pg, times, coeff, zeros, zeros)
    assert np.max(np.abs(W)) == 0.0


def test_march_validates_shapes():
    pg = make_profile_grid(Y=6.0, cells=32)
    times = make_time_grid(0.05, dt=0.01)
    good = np.zeros((times.size, pg.n, 3))
    with pytest.raises(ValueError, match="coeff shape"):
        march_transmission(pg, times, good[:, :-1], good, good)
    with pytest.raises(ValueError, match="forcing"):
        march_transmission(pg, times, good, good[:-1], good)


# --- fixed point on the jump fixture ---

@pytest.fixture(scope="module")
def jump_profiles(jump_setup):
    _, levelsets, _, _, ext = jump_setup
    pgrid = make_profile_grid(Y=15.0, cells=128)
    return pgrid, picard_profiles(ext, levelsets, pgrid, tol=1e-8)


def test_picard_contracts_on_jump_fixture(jump_profiles):
    _, pair = jump_profiles
    marched = pair.iterations > 0
    assert marched.any()
    assert pair.iterations[marched].max() <= 10
    ratios = pair.contraction_ratios()
    assert ratios and max(ratios) < 1.0


def test_profiles_transmission_and_tails(jump_profiles):
    _, pair = jump_profiles
    value_gap, deriv_gap = pair.transmission_defect()
    assert value_gap == 0.0
    assert deriv_gap <= 1e-6
    assert pair.tail_max() <= 1e-6
    assert pair.support_defect() == 0.0
    pair.validate()


def test_profiles_start_from_zero_and_stay_bounded(jump_profiles):
    _, pair = jump_profiles
    assert np.max(np.abs(pair.W[0])) == 0.0
    assert np.max(np.abs(pair.W)) < np.max(np.abs(pair.delta))


def test_profiles_zero_jump_columns_are_exact_zero():
    domain = build_domain(cells_per_side=8)
    levelsets = LevelSets()
    same = constant_per_side((0.6, 0.8, 0.0), (0.6, 0.8, 0.0))
    times = make_time_grid(0.02, dt=5e-3)
    ext = extend_limit(same, domain, levelsets, times)
    pgrid = make_profile_grid(Y=15.0, cells=64)
    pair = picard_profiles(ext, levelsets, pgrid)
    assert np.max(np.abs(pair.W)) == 0.0
    assert np.all(pair.iterations == 0)
    pair.validate()


def test_profiles_deterministic(jump_setup):
    _, levelsets, _, _, ext = jump_setup
    pgrid = make_profile_grid(Y=6.0, cells=48)
    a = picard_profiles(ext, levelsets, pgrid, tol=1e-8)
    b = picard_profiles(ext, levelsets, pgrid, tol=1e-8)
    assert np.array_equal(a.W, b.W)


def test_profiles_box_halving_stable(jump_setup):
    # shrinking the profile box must not move the junction trace: the
    # profile decays exponentially, so |y| beyond ~7 carries nothing
    _, levelsets, _, _, ext = jump_setup
    big = picard_profiles(ext, levelsets,
                          make_profile_grid(Y=15.0, cells=128), tol=1e-8)
    small = picard_profiles(ext, levelsets,
                            make_profile_grid(Y=7.5, cells=128), tol=1e-8)
    gap = np.max(np.abs(big.junction_trace() - small.junction_trace()))
    assert gap <= 1e-4, f"junction trace moved {gap:.3e} under box halving"


def test_profile_column_independent_of_extension_width(jump_setup):
    # at x = 0 the column inputs are one-sided traces of the limit flow,
    # so the solved profile cannot depend on how far the blend reaches
    domain, _, data, times, _ = jump_setup
    ext_a = extend_limit(data, domain, LevelSets(), times)
    ext_b = extend_limit(
        data, domain,
        LevelSets(v_sigma_halfwidth=0.2, v_gamma_width=0.25,
                  theta_inner=0.125), times)
    i0 = int(np.argmin(np.abs(ext_a.x_param)))
    for name in ("u_plus", "u_minus", "du_plus", "du_minus"):
        assert np.array_equal(getattr(ext_a, name)[:, i0],
                              getattr(ext_b, name)[:, i0])
    pgrid = make_profile_grid(Y=6.0, cells=48)
    W_a, _ = _picard_column(pgrid, times, ext_a.delta[:, i0],
                            ext_a.delta_dt[:, i0], ext_a.u_plus[:, i0],
                            ext_a.u_minus[:, i0], 1e-8, 40, 0.0)
    W_b, _ = _picard_column(pgrid, times, ext_b.delta[:, i0],
                            ext_b.delta_dt[:, i0], ext_b.u_plus[:, i0],
                            ext_b.u_minus[:, i0], 1e-8, 40, 0.0)
    assert np.array_equal(W_a, W_b)


def test_picard_non_contraction_aborts():
    # a jump far off the unit sphere makes the quadratic terms dominate
    # and the frozen-coefficient sweep map expand
    pgrid = make_profile_grid(Y=6.0, cells=48)
    times = make_time_grid(0.05, dt=5e-3)
    nt = times.size
    delta = np.tile([40.0, 0.0, 0.0], (nt, 1))
    dzero = np.zeros((nt, 3))
    u0p = np.tile([-0.6, 0.8, 0.0], (nt, 1))
    u0m = np.tile([0.6, 0.8, 0.0], (nt, 1))
    with pytest.raises(NonContraction) as info:
        _picard_column(pgrid, times, delta, dzero, u0p, u0m,
                       tol=1e-8, max_iter=40, x_label=0.0)
    err = info.value
    assert 0.0 <= err.t_converged <= float(times[-1])
    assert err.ratios


def test_picard_max_iter_exhaustion_reports():
    pgrid = make_profile_grid(Y=6.0, cells=48)
    times = make_time_grid(0.05, dt=5e-3)
    nt = times.size
    delta = np.tile([-1.2, 0.0, 0.0], (nt, 1))
    dzero = np.zeros((nt, 3))
    u0p = np.tile([-0.6, 0.8, 0.0], (nt, 1))
    u0m = np.tile([0.6, 0.8, 0.0], (nt, 1))
    with pytest.raises(NonContraction, match="did not reach"):
        _picard_column(pgrid, times, delta, dzero, u0p, u0m,
                       tol=1e-14, max_iter=2, x_label=0.0)


def test_validate_flags_fat_tail(jump_profiles):
    _, pair = jump_profiles
    with pytest.raises(ValidationError, match="tail"):
        pair.validate(tail_tol=1e-9)


# --- weighted norms ---

def test_weighted_norm_closed_form():
    T, Y, lam = 1.0, 8.0, 2.0
    times = np.linspace(0.0, T, 201)
    x = np.linspace(-1.0, 1.0, 81)
    pg = make_profile_grid(Y=Y, cells=96)
    y = pg.y
    a = np.array([0.1, 0.2, 0.3])
    W = (np.exp(-times)[:, None, None, None]
         * np.cos(x)[None, :, None, None]
         * np.exp(-np.abs(y))[None, None, :, None] * a)

    it = (1.0 - np.exp(-2.0 * (lam + 1.0) * T)) / (2.0 * (lam + 1.0))
    ix = 1.0 + np.sin(2.0) / 2.0
    ixd = 1.0 - np.sin(2.0) / 2.0
    iy = 1.0 - np.exp(-2.0 * Y)
    a2 = float(a @ a)
    # |alpha| = 0 and the three first derivatives; d/dt and d/dy square
    # to the same profile, d/dx swaps cos^2 for sin^2
    expect = np.sqrt(a2 * it * iy * (3.0 * ix + ixd))
    got = weighted_profile_norm(times, x, y, W, m=1, lam=lam)
    assert abs(got - expect) / expect < 0.02


def test_weighted_norm_y_weight_closed_form():
    T, Y = 1.0, 12.0
    times = np.linspace(0.0, T, 101)
    x = np.array([0.0])
    pg = make_profile_grid(Y=Y, cells=96)
    y = pg.y
    a = np.array([1.0, 0.0, 0.0])
    W = np.broadcast_to(
        np.exp(-np.abs(y))[None, None, :, None] * a,
        (times.size, 1, y.size, 3)).copy()
    # m = 0, weight y: integral of y^2 e^{-2|y|} = 1/2 (up to tails)
    expect = np.sqrt(0.5 * (1.0 - np.exp(-2.0 * 1.0 * T)) / 2.0)
    got = weighted_profile_norm(times, x, y, W, m=0, lam=1.0, y_power=1)
    assert abs(got - expect) / expect < 0.02


def test_weighted_norm_monotone_in_lambda():
    times = np.linspace(0.0, 1.0, 41)
    x = np.linspace(-0.5, 0.5, 11)
    y = np.linspace(-4.0, 4.0, 33)
    rng = np.random.default_rng(3)
    W = rng.normal(size=(41, 11, 33, 3))
    vals = [weighted_profile_norm(times, x, y, W, m=1, lam=lam)
            for lam in (1.0, 4.0, 16.0, 64.0)]
    assert all(vals[k + 1] < vals[k] for k in range(3))


def test_weighted_norm_validation():
    times = np.linspace(0.0, 1.0, 5)
    x = np.array([0.0])
    y = np.linspace(-1.0, 1.0, 9)
    W = np.zeros((5, 1, 9, 3))
    with pytest.raises(ValueError, match="shape"):
        weighted_profile_norm(times, x, y[:-1], W)
    with pytest.raises(ValueError, match="m must be"):
        weighted_profile_norm(times, x, y, W, m=3)


def test_gain_from_forcing_decays_with_lambda():
    # the time-weighted response/forcing ratio must shrink as the weight
    # discounts late times harder
    Y = 6.0
    n = 48
    y = np.linspace(-Y, Y, 2 * n + 1)
    pg = ProfileGrid(y=y, Y=Y, j0=n)
    times = np.linspace(0.0, 1.0, 101)
    env = np.exp(-(y**2))
    f = (np.exp(-times)[:, None, None] * env[:, None]
         * np.array([0.2, -0.4, 0.5]))
    coeff = np.zeros((times.size, y.size, 3))
    W = march_transmission(pg, times, coeff, f, f)
    x = np.array([0.0])
    gains = []
    for lam in (1.0, 4.0, 16.0, 64.0):
        nw = weighted_profile_norm(times, x, y, W[:, None], m=0, lam=lam)
        nf = weighted_profile_norm(times, x, y, f[:, None], m=0, lam=lam)
        gains.append(nw / nf)
    assert all(gains[k + 1] < gains[k] for k in range(3))


def test_transmission_defect_helper_zero_for_smooth():
    pg = make_profile_grid(Y=6.0, cells=48)
    W = np.stack([np.exp(-pg.y**2), np.sin(pg.y) * 0.1,
                  np.zeros_like(pg.y)], axis=-1)
    assert transmission_defect(pg, W) < 1e-4
