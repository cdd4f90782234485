import math

import numpy as np
import pytest

from dealermodel.analytic import AnalyticProfile, harmonic_normalization, mean_transaction_interval
from dealermodel.core import GridSpec, ModelError, ModelParams, NumericalError, SimSchedule
from dealermodel.lattice import LatticeParams, lattice_steady_state
from dealermodel.mlsolver import (MLField, _operator, boundary_condition_check, current_diagnostics,
                                  field_to_csv, max_explicit_dt, ml_evolve, ml_steady, ml_steady_result,
                                  ml_step, richardson_ratio, sup_distance)
from dealermodel.simulator import RunConfig, run
from dealermodel.stats import DensityEstimate, l1_distance


def symmetric_field(grid, f, spread=2.0):
    x = MLField.from_function(grid, f, spread).density
    return MLField(grid, (x + x[::-1]) / 2)


def as_estimate(field):
    return DensityEstimate.from_density(field.grid, field.bin_values())


@pytest.fixture(scope="module")
def steady0():
    return ml_steady_result(ModelParams(), GridSpec())


@pytest.fixture(scope="module")
def steady1():
    return ml_steady_result(ModelParams(u2=1.0), GridSpec())


# --- fields and steps -----------------------------------------------------

def test_field_validation(grid):
    with pytest.raises(ModelError, match="nodes"):
        MLField(grid, np.ones(grid.n_bins))
    bad = np.zeros(grid.n_bins + 1)
    bad[300] = 1 / grid.dr
    bad[301] = -1e-9
    with pytest.raises(NumericalError, match="negative"):
        MLField(grid, bad)
    with pytest.raises(ModelError, match="mass"):
        MLField(grid, np.full(grid.n_bins + 1, 1.0))


def test_field_from_function_zero_outside_walls(grid):
    f = MLField.from_function(grid, lambda r: np.ones_like(r), 2.0)
    assert f.mass == pytest.approx(1.0, abs=1e-12)
    assert np.all(f.density[np.abs(f.nodes) >= 1.0 - 1e-9] == 0.0)


def test_explicit_step_stability_guard(grid, params):
    f = symmetric_field(grid, lambda r: 1 - np.abs(r))
    limit = max_explicit_dt(params, grid)
    assert limit == pytest.approx(0.25 * grid.dr**2 / params.sigma_cm2)
    ml_step(f, params, limit)
    with pytest.raises(ModelError, match="stability"):
        ml_step(f, params, 1.01 * limit)
    with pytest.raises(ModelError, match="stability"):
        ml_evolve(f, params, 1.01 * limit, 3)


def test_unknown_method(grid, params):
    f = symmetric_field(grid, lambda r: 1 - np.abs(r))
    with pytest.raises(ModelError, match="method"):
        ml_step(f, params, 1e-6, method="crank")
    with pytest.raises(ModelError, match="method"):
        ml_steady(params, grid, method="newton")


@pytest.mark.parametrize("u2", [0.0, 1.0])
def test_symmetry_is_bitwise(grid, u2):
    p = ModelParams(u2=u2)
    f = symmetric_field(grid, lambda r: np.exp(-8 * r * r) + 0.3)
    dt = max_explicit_dt(p, grid)
    g = f
    for _ in range(50):
        g = ml_step(g, p, dt)
        assert np.array_equal(g.density, g.density[::-1])
    h = ml_evolve(f, p, dt, 5000) if u2 == 0 else g
    assert np.array_equal(h.density, h.density[::-1])


def test_evolve_matches_repeated_steps(grid, params):
    f = MLField.from_function(grid, lambda r: np.exp(-(r - 0.2) ** 2 * 5), 2.0)
    dt = max_explicit_dt(params, grid)
    g = f
    for _ in range(40):
        g = ml_step(g, params, dt)
    h = ml_evolve(f, params, dt, 40)
    np.testing.assert_allclose(h.density, g.density, rtol=1e-14, atol=1e-14)
    assert h.time == pytest.approx(g.time)


@pytest.mark.parametrize("dr", [0.02, 0.01, 0.005])
def test_heat_kernel_before_flux_reaches_walls(dr, params):
    # a narrow Gaussian of variance s0 spreads to variance s0 + sigma_cm^2 t
    g = GridSpec(-3.0, 3.0, dr)
    s0 = 0.01
    f = MLField.from_function(g, lambda r: np.exp(-r * r / (2 * s0)), 2.0)
    dt = max_explicit_dt(params, g)
    out = ml_evolve(f, params, dt, int(round(0.02 / dt)))
    v = s0 + params.sigma_cm2 * out.time
    exact = np.exp(-g.edges**2 / (2 * v)) / math.sqrt(2 * math.pi * v)
    # second order: the error is about 2.2 dr^2
    assert np.max(np.abs(out.density - exact)) < 3.0 * dr**2


def test_implicit_steps_are_stable_and_reach_steady_state(grid, params):
    f = symmetric_field(grid, lambda r: np.ones_like(r))
    for _ in range(400):
        f = ml_step(f, params, 0.5, method="implicit")
    direct, _ = ml_steady(params, grid, method="direct")
    assert np.max(np.abs(f.density - direct.density)) < 1e-8


def test_implicit_close_to_explicit_for_small_dt(grid, params):
    f = MLField.from_function(grid, lambda r: np.exp(-(r - 0.2) ** 2 * 5), 2.0)
    dt = max_explicit_dt(params, grid)
    a = ml_evolve(f, params, dt, 200)
    b = f
    for _ in range(200):
        b = ml_step(b, params, dt, method="implicit")
    # both are first order in time; their gap is O(dt) relative to the change
    assert np.max(np.abs(a.density - b.density)) < 1e-3


def test_mass_conserved_over_a_million_steps(params):
    g = GridSpec(-3.0, 3.0, 0.1)
    f = MLField.from_function(g, lambda r: np.exp(-(r + 0.3) ** 2 * 4), 2.0)
    out = ml_evolve(f, params, max_explicit_dt(params, g), 1_000_000)
    assert abs(out.mass - 1.0) < 1e-10
    assert out.density.min() >= -1e-12


def test_tent_is_a_discrete_fixed_point(params):
    # the sampled tent is exact for the scheme, so the residual is rounding at every dr
    for dr in (0.04, 0.02, 0.01):
        g = GridSpec(-3.0, 3.0, dr)
        op = _operator(g, params)
        f = MLField.from_function(g, AnalyticProfile.tent(params), 2.0)
        assert np.max(np.abs(op.rate(op.active(f)))) < 1e-10


def test_dU_override_matches_harmonic(grid):
    p = ModelParams(u2=1.0)
    f = symmetric_field(grid, lambda r: np.exp(-4 * r * r))
    dt = max_explicit_dt(p, grid)
    a = ml_step(f, p, dt)
    b = ml_step(f, p, dt, dU=lambda r: 1.0 * r)
    np.testing.assert_allclose(a.density, b.density, rtol=0, atol=1e-13)


def test_dU_must_be_odd(grid, params):
    f = symmetric_field(grid, lambda r: np.ones_like(r))
    with pytest.raises(ModelError, match="odd"):
        ml_step(f, params, 1e-6, dU=lambda r: r * r)


def test_steep_potential_is_rejected(params):
    g = GridSpec(-3.0, 3.0, 0.25)
    f = symmetric_field(g, lambda r: np.ones_like(r))
    with pytest.raises(ModelError, match="steep"):
        ml_step(f, ModelParams(u2=50.0), 1e-6)


# --- steady state ---------------------------------------------------------

def test_steady_tent_sup_and_rate(steady0):
    params = ModelParams()
    cell_sup, nodal_sup = sup_distance(steady0.field, AnalyticProfile.tent(params))
    assert cell_sup < 0.02
    assert nodal_sup < 1e-8
    rate = steady0.diagnostics.implied_rate
    assert rate == pytest.approx(0.5, rel=0.02)
    assert abs(rate * mean_transaction_interval(2.0, 1.0) - 1.0) <= 2 * 0.01 / 2.0


def test_steady_diagnostics_invariants(steady0, steady1):
    for res in (steady0, steady1):
        d = res.diagnostics
        assert d.boundary_flux_plus >= 0 and d.boundary_flux_minus >= 0
        assert d.implied_rate == d.boundary_flux_plus + d.boundary_flux_minus
        assert d.boundary_flux_plus == pytest.approx(d.boundary_flux_minus, rel=1e-10)
        assert res.residual < 1e-9


def test_richardson_ratio_first_order():
    errors, ratios = richardson_ratio(ModelParams())
    assert errors[0] > errors[1] > errors[2]
    assert all(1.7 <= q <= 2.3 for q in ratios)


def test_steady_harmonic_matches_closed_form(steady1):
    p = ModelParams(u2=1.0)
    prof = AnalyticProfile.harmonic(p)
    assert l1_distance(as_estimate(steady1.field), prof) < 0.01
    assert sup_distance(steady1.field, prof)[0] < 0.02


def test_steady_harmonic_rate_matches_wall_slope(steady1):
    # the outflow through each wall is (sigma_cm^2 / 2) |phi'(L/2-)| of the closed form
    p = ModelParams(u2=1.0)
    prof = AnalyticProfile.harmonic(p)
    h = 1e-6
    slope = (prof(1.0 - h) - prof(1.0)) / h
    assert steady1.diagnostics.implied_rate == pytest.approx(2 * p.sigma_cm2 / 2 * slope, rel=0.02)


def test_explicit_and_direct_agree(steady0, steady1, grid):
    for res, u2 in ((steady0, 0.0), (steady1, 1.0)):
        direct, _ = ml_steady(ModelParams(u2=u2), grid, method="direct")
        assert np.max(np.abs(direct.density - res.field.density)) < 1e-8


def test_steady_non_convergence(grid, params):
    with pytest.raises(NumericalError, match="no convergence"):
        ml_steady(params, grid, max_steps=1000)
    with pytest.raises(ModelError):
        ml_steady(params, grid, tol=0.0)


def test_matches_lattice_when_dr_equals_spacing():
    params = ModelParams()
    for n_bar in (4, 10):
        lp = LatticeParams.diffusive(params.sigma_cm2, params.spread, n_bar)
        g = GridSpec(-3.0, 3.0, lp.l)
        lattice = lattice_steady_state(lp).density
        for method in ("direct", "explicit"):
            f, _ = ml_steady(params, g, method=method)
            inside = f.density[np.abs(f.nodes) < 1.0 - 1e-9]
            assert np.max(np.abs(inside - lattice)) < 1e-8


# --- boundary conditions --------------------------------------------------

def test_bc_on_sampled_tent_is_zero(grid, params):
    f = MLField.from_function(grid, AnalyticProfile.tent(params), 2.0)
    a, b = boundary_condition_check(f, 2.0)
    assert a < 1e-9 and b < 1e-12


def test_bc_on_converged_tent(steady0):
    a, b = boundary_condition_check(steady0.field, 2.0)
    tol = 5 * 0.01 * 4 / 2.0**2
    assert a < tol and b < tol


def test_bc_with_harmonic_potential(steady1):
    p = ModelParams(u2=1.0)
    prof = AnalyticProfile.harmonic(p)
    h = 1e-7
    slope0 = (prof(h) - prof(0.0)) / h
    # closed form: phi'(0+) = -(2 / sqrt(pi)) (u / sigma_cm) / Z
    Z = harmonic_normalization(2.0, math.sqrt(p.sigma_cm2), 1.0)
    assert slope0 == pytest.approx(-2 / math.sqrt(math.pi) / math.sqrt(p.sigma_cm2) / Z, rel=1e-5)
    a, _ = boundary_condition_check(steady1.field, 2.0)
    assert a < 5 * 0.01 * abs(slope0)


# --- output ---------------------------------------------------------------

def test_current_diagnostics_of_tent(grid, params):
    f = MLField.from_function(grid, AnalyticProfile.tent(params), 2.0)
    d = current_diagnostics(f, params)
    # j = -(sigma_cm^2 / 2) dP/dr = +0.25 on (0, 1) for the unit tent
    inside = (f.nodes > 0.05) & (f.nodes < 0.95)
    np.testing.assert_allclose(d.j_diffusive[inside], 0.25, rtol=1e-9)
    assert np.all(d.j_potential == 0)
    assert d.implied_rate == pytest.approx(0.5, rel=1e-12)


def test_field_csv_footer(tmp_path, steady0):
    path = field_to_csv(steady0.field, steady0.diagnostics, tmp_path / "ml.csv")
    lines = open(path).read().splitlines()
    assert lines[0] == "r,P(r),j_diffusive(r),j_potential(r)"
    assert len(lines) == steady0.field.grid.n_bins + 3
    footer = lines[-1]
    assert footer.startswith("# boundary_flux_plus=") and "implied_rate=" in footer
    rate = float(footer.split("implied_rate=")[1])
    assert rate == steady0.diagnostics.implied_rate


# --- against the Monte Carlo ----------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("u2", [0.0, 1.0])
def test_agrees_with_simulator(u2, grid):
    p = ModelParams(u2=u2)
    field, _ = ml_steady(p, grid)
    sim = run(RunConfig(p, SimSchedule(dt=1e-4, t_init=20.0, t_end=1e4, seed=2024), record_events=False))
    assert l1_distance(sim.pdf_r, as_estimate(field)) < 0.03
