import math

import numpy as np
import pytest

from censored_bernstein import (
    DomainError,
    Grid,
    GridFunction,
    Stable,
    ValidationError,
    apply_K,
    censored_derivative,
    kernel_j_density,
    make_pair,
    operators_for,
    rl_derivative,
    rl_integral,
)
from censored_bernstein.ops import BOUNDARY_LAYER

from oracles import k2_brute_force, kappa, rl_integral_quad, stable_P

TEST_FUNCS = {
    "one": lambda s: np.ones_like(s),
    "s": lambda s: s,
    "s2": lambda s: s**2,
    "cos": np.cos,
}
#: Below this the error is at the rounding floor and has no meaningful order.
ROUNDOFF_FLOOR = 1e-12


def test_grid_validation():
    with pytest.raises(ValidationError):
        Grid(1.0, 1)
    with pytest.raises(ValidationError):
        Grid(-1.0, 10)
    with pytest.raises(ValidationError):
        GridFunction(Grid(1.0, 4), np.zeros(3))


def test_rl_integral_of_one_is_P(half):
    g = Grid(2.0, 64)
    out = rl_integral(half, GridFunction.constant(g, 1.0))
    np.testing.assert_allclose(out.values, stable_P(0.5, g.x), rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_rl_integral_of_cos_matches_quadrature(alpha):
    pair = make_pair(Stable(alpha))
    g = Grid(1.0, 256)
    out = rl_integral(pair, GridFunction.from_function(g, np.cos))
    for i in (16, 100, 256):
        assert out.values[i] == pytest.approx(rl_integral_quad(alpha, np.cos, g.x[i]), abs=1e-6)


@pytest.mark.parametrize("name", sorted(TEST_FUNCS))
def test_left_inverse_converges(half, name):
    errs = []
    for n in (512, 1024):
        g = GridFunction.from_function(Grid(1.0, n), TEST_FUNCS[name])
        back = rl_derivative(half, rl_integral(half, g))
        errs.append(float(np.max(np.abs(back.interior() - g.values[BOUNDARY_LAYER:]))))
    if max(errs) <= ROUNDOFF_FLOOR:
        return   # reproduced exactly by the singular basis
    assert math.log2(errs[0] / errs[1]) >= 0.9


def test_rl_derivative_of_basis(half):
    g = Grid(1.0, 128)
    P = GridFunction.from_function(g, lambda s: stable_P(0.5, s))
    out = rl_derivative(half, P)
    np.testing.assert_allclose(out.values[1:], 1.0, atol=1e-12)
    assert out.boundary_nodes == BOUNDARY_LAYER


def test_rl_derivative_infinite_at_origin(half):
    out = rl_derivative(half, GridFunction.constant(Grid(1.0, 16), 2.0))
    assert out.values[0] == math.inf


@pytest.mark.parametrize("c", [1.0, -3.0])
def test_censored_derivative_kills_constants(half, c):
    out = censored_derivative(half, GridFunction.constant(Grid(1.0, 1024), c))
    assert out.sup_norm() <= 1e-8


def test_censored_derivative_of_P_at_origin(half):
    g = Grid(1.0, 64)
    out = censored_derivative(half, GridFunction.from_function(g, lambda s: stable_P(0.5, s)))
    assert out.values[0] == pytest.approx(1 - half.q, abs=1e-12)
    np.testing.assert_allclose(out.values[1:], 1 - half.q, atol=1e-12)


@pytest.mark.parametrize("gamma_", [0.0, 0.5, 1.0, 2.0, 3.7])
def test_K_on_powers(half, gamma_):
    g = Grid(1.0, 512)
    out = apply_K(half, GridFunction.from_function(g, lambda s: s**gamma_))
    expect = kappa(0.5, gamma_) * g.x[1:] ** gamma_
    np.testing.assert_allclose(out.values[1:], expect, atol=2e-6)


def test_K_row_sums_and_positivity(half):
    ops = operators_for(half, Grid(1.0, 256))
    W = ops.K.effective_weights()
    np.testing.assert_allclose(W[1:].sum(axis=1), 1.0, atol=1e-12)
    assert np.all(ops.K.weights >= -1e-15)


def test_K_contracts_functions_vanishing_at_zero(half):
    g = Grid(1.0, 256)
    v = GridFunction.from_function(g, lambda s: np.sqrt(s))
    out = apply_K(half, v)
    # sup |K v| ≤ κ(1/2) sup |v| for this v.
    assert out.sup_norm(False) <= kappa(0.5, 0.5) * v.sup_norm(False) + 1e-8


def test_K_keeps_value_at_origin(half):
    g = GridFunction.constant(Grid(1.0, 8), 1.0)
    assert apply_K(half, g).values[0] == 1.0


@pytest.mark.parametrize("j", [1, 2, 3, 4, 5])
def test_kernel_density_mass(half, j):
    d = kernel_j_density(half, j, 1.0, 20)
    assert abs(d.mass - 1.0) <= 1e-6
    assert np.all(d.density > 0)
    assert np.all(np.diff(d.cdf) >= 0)


def test_k1_is_arcsine_density(half):
    d = kernel_j_density(half, 1, 1.0, 9)
    expect = 1 / (math.pi * np.sqrt(d.r * (1 - d.r)))
    np.testing.assert_allclose(d.density, expect, rtol=1e-13)


def test_k2_against_brute_force(half):
    d = kernel_j_density(half, 2, 1.0, 7)
    ref = np.array([k2_brute_force(0.5, 1.0, r) for r in d.r])
    np.testing.assert_allclose(d.density, ref, rtol=1e-7)


def test_kernel_density_arguments(half):
    with pytest.raises(DomainError):
        kernel_j_density(half, 0, 1.0, 5)
    with pytest.raises(DomainError):
        kernel_j_density(half, 1, -1.0, 5)
