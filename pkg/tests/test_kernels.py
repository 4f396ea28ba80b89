import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from censored_bernstein import (
    DomainError,
    ExplicitTriplet,
    Stable,
    TemperedStable,
    compute_q,
    eval_f,
    make_pair,
    mismatched_pair,
    verify_sonine,
)
from censored_bernstein.bernstein import StableDensity, TemperedStableDensity
from censored_bernstein.kernels import talbot, write_kernel_table

from oracles import stable_k, stable_mu_bar, stable_P

XS = np.array([1e-6, 1e-3, 0.1, 0.5, 1.0, 3.0])


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_stable_pair_matches_closed_forms(alpha):
    p = make_pair(Stable(alpha))
    np.testing.assert_allclose(p.mu_bar(XS), stable_mu_bar(alpha, XS), rtol=1e-14)
    np.testing.assert_allclose(p.k(XS), stable_k(alpha, XS), rtol=1e-14)
    np.testing.assert_allclose(p.P(XS), stable_P(alpha, XS), rtol=1e-14)
    assert p.provenance == "ClosedForm"


@pytest.mark.parametrize("alpha", np.linspace(0.1, 0.9, 9))
def test_q_extrapolation_matches_reflection_formula(alpha):
    q = compute_q(make_pair(Stable(alpha)), method="extrapolate")
    assert abs(q - math.sin(math.pi * alpha) / (math.pi * alpha)) <= 1e-10


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_sonine_identity_stable(alpha):
    assert verify_sonine(make_pair(Stable(alpha)), 1.0, 2048) <= 1e-6


def test_sonine_identity_tempered_and_explicit():
    assert verify_sonine(make_pair(TemperedStable(0.5, 1.0)), 1.0, 512) <= 1e-6
    explicit = make_pair(ExplicitTriplet(TemperedStableDensity(0.5, 2.0)))
    assert verify_sonine(explicit, 1.0, 256) <= 1e-6


def test_mismatched_pair_fails_sonine():
    p = mismatched_pair(Stable(0.3), Stable(0.6))
    assert verify_sonine(p, 1.0, 512) > 0.1
    assert p.provenance == "Mismatched"


def test_tempered_q_equals_stable_q():
    # Tempering does not change the behaviour at the origin.
    q = make_pair(TemperedStable(0.5, 3.0)).q
    assert q == pytest.approx(2 / math.pi, abs=1e-9)


def test_explicit_triplet_reproduces_stable_kernels():
    exact = make_pair(Stable(0.5))
    numeric = make_pair(ExplicitTriplet(StableDensity(0.5)))
    x = np.array([1e-4, 0.01, 0.3, 2.0])
    np.testing.assert_allclose(numeric.k(x), exact.k(x), rtol=1e-7)
    np.testing.assert_allclose(numeric.mu_bar(x), exact.mu_bar(x), rtol=1e-7)
    assert numeric.q == pytest.approx(exact.q, abs=1e-9)


def test_talbot_inverts_known_transform():
    # L{x^{α-1}/Γ(α)} = s^{-α}
    x = np.array([0.1, 1.0, 5.0])
    np.testing.assert_allclose(talbot(lambda s: s**-0.5, x), stable_k(0.5, x), rtol=1e-10)


@pytest.mark.parametrize("lam", [0.5, 2.0, 10.0])
def test_laplace_transform_of_k_is_reciprocal_of_f(lam):
    from scipy import integrate

    spec = TemperedStable(0.5, 1.0)
    p = make_pair(spec)
    # x = u^2 removes the x^{-1/2} singularity of k at the origin.
    integrand = lambda u: 2 * u * math.exp(-lam * u * u) * p.k(np.array([u * u]))[0]
    value, _ = integrate.quad(integrand, 1e-12, np.inf, epsabs=0, epsrel=1e-10, limit=200)
    assert value == pytest.approx(1 / eval_f(spec, lam), rel=1e-7)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 0.9))
def test_kernels_positive_and_monotone(alpha):
    p = make_pair(Stable(alpha))
    x = np.geomspace(1e-5, 10, 30)
    assert np.all(p.mu_bar(x) > 0) and np.all(np.diff(p.mu_bar(x)) < 0)
    assert np.all(p.k(x) > 0) and np.all(np.diff(p.k(x)) < 0)
    assert np.all(np.diff(p.P(x)) > 0)


def test_kernel_table_csv(tmp_path):
    p = make_pair(Stable(0.5))
    path = tmp_path / "k.csv"
    write_kernel_table(p, [0.5, 1.0], path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x", "mu_bar", "k", "M", "P"]
    assert float(rows[2][2]) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-15)
    with pytest.raises(DomainError):
        write_kernel_table(p, [0.0], path)


def test_verify_sonine_arguments():
    p = make_pair(Stable(0.5))
    with pytest.raises(DomainError):
        verify_sonine(p, 1.0, 1)
    with pytest.raises(DomainError):
        verify_sonine(p, -1.0, 10)


def test_explicit_with_drift_rejected():
    with pytest.raises(DomainError):
        make_pair(ExplicitTriplet(StableDensity(0.5), b=1.0))


@pytest.mark.parametrize("spec", [Stable(0.5), TemperedStable(0.5, 1.0)])
@pytest.mark.parametrize("lam", [1.0, 5.0, 10.0])
def test_laplace_transform_of_tail(spec, lam):
    from scipy import integrate

    p = make_pair(spec)
    integrand = lambda u: 2 * u * math.exp(-lam * u * u) * p.mu_bar(np.array([u * u]))[0]
    errs = []
    for X in (1.0, 4.0, 25.0):
        v, _ = integrate.quad(integrand, 1e-12, math.sqrt(X), epsabs=0, epsrel=1e-11, limit=200)
        errs.append(abs(v - eval_f(spec, lam) / lam))
    assert errs[0] > errs[1] > errs[2] or errs[2] < 1e-9
    assert errs[2] < 1e-8


def test_tempered_kernels_nonincreasing():
    p = make_pair(TemperedStable(0.5, 1.0))
    x = np.geomspace(1e-6, 1.0, 1000)
    assert np.all(np.diff(p.mu_bar(x)) <= 0)
    assert np.all(np.diff(p.k(x)) <= 0)
