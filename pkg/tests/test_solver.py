import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from censored_bernstein import (
    Grid,
    GridFunction,
    HypothesisViolation,
    NonConvergenceError,
    Stable,
    ValidationError,
    censored_integral,
    censored_integral_alt,
    lifetime_laplace,
    make_pair,
    mismatched_pair,
    solve_censored_ivp,
    solve_resolvent,
    solve_resolvent_inhom,
)
from censored_bernstein.kernels import _with_q

from oracles import cos_taylor, picard_ivp, resolvent_closed_form, stable_P

#: Relative slack on the a-priori term bounds.  Discrete terms carry the
#: grid's own discretization error, which is far above rounding.
BOUND_SLACK = 1e-6


@pytest.fixture(scope="module")
def grid():
    return Grid(1.0, 1024)


def test_ivp_matches_picard_for_constant(half, grid):
    sol = solve_censored_ivp(half, GridFunction.constant(grid, 1.0), 0.0)
    ref = picard_ivp(0.5, [1.0])(grid.x)
    assert np.max(np.abs(sol.phi.values - ref)) <= 1e-8
    assert sol.tail_bound <= 1e-9


def test_ivp_matches_picard_for_cosine(half, grid):
    sol = solve_censored_ivp(half, GridFunction.from_function(grid, np.cos), 0.0)
    ref = picard_ivp(0.5, cos_taylor())(grid.x)
    assert np.max(np.abs(sol.phi.values - ref)) <= 1e-6


@pytest.mark.parametrize("fn", [lambda s: np.ones_like(s), lambda s: s, np.cos])
def test_alternative_representation_agrees(half, grid, fn):
    g = GridFunction.from_function(grid, fn)
    a = censored_integral(half, g)
    b = censored_integral_alt(half, g)
    assert np.max(np.abs(a.values - b.values)) <= 1e-6


def test_alternative_representation_tight_for_constant(half, grid):
    g = GridFunction.constant(grid, 1.0)
    gap = np.max(np.abs(censored_integral(half, g).values - censored_integral_alt(half, g).values))
    assert gap <= 1e-9


def test_censored_integral_of_one_closed_form(half, grid):
    out = censored_integral(half, GridFunction.constant(grid, 1.0))
    np.testing.assert_allclose(out.values, stable_P(0.5, grid.x) / (1 - half.q), atol=1e-9)


def test_ivp_initial_value_and_residual(half, grid):
    sol = solve_censored_ivp(half, GridFunction.constant(grid, 2.0), 3.0)
    assert sol.phi.values[0] == 3.0
    assert sol.residual <= 1e-6


@settings(max_examples=10, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_censored_integral_linear(a, b):
    pair = make_pair(Stable(0.5))
    g = Grid(1.0, 128)
    u = GridFunction.from_function(g, np.cos)
    v = GridFunction.from_function(g, lambda s: s**2)
    lhs = censored_integral(pair, GridFunction(g, a * u.values + b * v.values)).values
    rhs = a * censored_integral(pair, u).values + b * censored_integral(pair, v).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-8 * (1 + abs(a) + abs(b))


def test_censored_integral_monotone(half):
    g = Grid(1.0, 256)
    small = censored_integral(half, GridFunction.from_function(g, lambda s: 1 + 0 * s)).values
    large = censored_integral(half, GridFunction.from_function(g, lambda s: 1 + s)).values
    assert np.all(large >= small - 1e-12)
    assert np.all(np.diff(small) > 0)


@pytest.mark.parametrize("lam", [-1.0, -0.25])
def test_resolvent(half, lam):
    sol = solve_resolvent(half, Grid(1.0, 2048), lam, 1.0)
    assert sol.residual <= 1e-4
    assert sol.bound_excess <= BOUND_SLACK
    ref = resolvent_closed_form(0.5, lam, sol.phi.x)
    assert np.max(np.abs(sol.phi.values - ref)) <= 1e-5


def test_resolvent_positive_lambda(half):
    sol = solve_resolvent(half, Grid(1.0, 512), 0.5, 2.0)
    ref = 2.0 * resolvent_closed_form(0.5, 0.5, sol.phi.x)
    np.testing.assert_allclose(sol.phi.values, ref, rtol=1e-5)
    assert sol.bound_excess <= BOUND_SLACK


def test_resolvent_lambda_zero_is_constant(half):
    sol = solve_resolvent(half, Grid(1.0, 64), 0.0, 4.0)
    assert np.all(sol.phi.values == 4.0)


def test_inhomogeneous_resolvent(half):
    g = Grid(1.0, 512)
    rhs = GridFunction.from_function(g, np.cos)
    sol = solve_resolvent_inhom(half, -0.5, 1.0, rhs)
    assert sol.residual <= 1e-4
    assert sol.bound_excess <= BOUND_SLACK
    # λ = 0 reduces to the IVP.
    ivp = solve_censored_ivp(half, rhs, 1.0)
    zero = solve_resolvent_inhom(half, 0.0, 1.0, rhs)
    assert np.max(np.abs(zero.phi.values - ivp.phi.values)) <= 1e-9


def test_lifetime_laplace(half):
    v = lifetime_laplace(half, -1.0, 1.0)
    assert v == pytest.approx(resolvent_closed_form(0.5, -1.0, np.array([1.0]))[0], abs=1e-5)
    assert lifetime_laplace(half, -1.0, 0.0) == 1.0
    assert lifetime_laplace(half, 0.0, 2.0) == 1.0
    with pytest.raises(ValidationError):
        lifetime_laplace(half, -1.0, -1.0)


def test_lifetime_laplace_decreasing_in_x(half):
    vals = [lifetime_laplace(half, -1.0, x, n=256) for x in (0.25, 0.5, 1.0, 2.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_q_guard(half):
    bad = _with_q(half, 1.0)
    g = GridFunction.constant(Grid(1.0, 32), 1.0)
    with pytest.raises(HypothesisViolation):
        censored_integral(bad, g)
    with pytest.raises(HypothesisViolation):
        solve_resolvent(bad, Grid(1.0, 32), -1.0)


def test_mismatched_pair_with_infinite_q_is_refused():
    pair = mismatched_pair(Stable(0.6), Stable(0.3))
    assert pair.q == float("inf")
    with pytest.raises(HypothesisViolation):
        censored_integral(pair, GridFunction.constant(Grid(1.0, 32), 1.0))


def test_max_terms_exhaustion(half):
    with pytest.raises(NonConvergenceError):
        censored_integral(half, GridFunction.constant(Grid(1.0, 64), 1.0), max_terms=3)


def test_non_grid_input_rejected(half):
    with pytest.raises(ValidationError):
        censored_integral(half, np.ones(5))


def test_solution_serialization(half, tmp_path):
    sol = solve_resolvent(half, Grid(1.0, 16), -0.5)
    sol.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "x,phi" and len(lines) == 18
    sol.to_json(tmp_path / "s.json")
    d = json.loads((tmp_path / "s.json").read_text())
    assert d["terms_used"] == sol.terms_used
