"""Reference values computed independently of the package internals.

Everything here uses only closed forms, power series and ``scipy.integrate``.
None of it touches the product-integration engine it is meant to check.
"""

import math

import numpy as np
from scipy import integrate
from scipy.special import gamma


def stable_mu_bar(alpha, x):
    return np.power(x, -alpha) / gamma(1 - alpha)


def stable_k(alpha, x):
    return np.power(x, alpha - 1) / gamma(alpha)


def stable_P(alpha, x):
    return np.power(x, alpha) / gamma(1 + alpha)


def kappa(alpha, g):
    """``K x^g = kappa(g) x^g`` for the stable pair (a Beta integral)."""
    return gamma(1 - alpha + g) / (gamma(1 + g) * gamma(1 - alpha))


def resolvent_closed_form(alpha, lam, x, terms=400):
    """``Σ_j λ^j (I_c)^j 1`` for the stable pair as a power series in ``x^α``.

    ``I_c x^{γ} = c(γ) x^{γ+α}`` with ``c(γ) = Γ(γ+1) / (Γ(γ+α+1)(1 - κ(γ+α)))``.
    """
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    d = 1.0
    for j in range(1, terms):
        d *= gamma((j - 1) * alpha + 1) / gamma(j * alpha + 1) / (1 - kappa(alpha, j * alpha))
        t = lam**j * d * x ** (j * alpha)
        out = out + t
        if np.max(np.abs(t)) < 1e-18:
            break
    return out


class PowerSeries:
    """Finite sums ``Σ c_e x^e`` keyed by exponent."""

    def __init__(self, terms=None):
        self.terms = dict(terms or {})

    def __add__(self, other):
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return PowerSeries(out)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return sum(c * x**e for e, c in self.terms.items())


def picard_ivp(alpha, g_taylor, iters=400, tol=1e-14, max_exponent=80.0):
    """Fixed-point iteration ``φ ← I_f[g + φ μ̄]`` started from ``φ = 0``.

    Works on power series, so every step is exact up to dropping exponents
    above ``max_exponent`` (negligible on ``[0, 1]``).  ``g_taylor`` lists
    Taylor coefficients of ``g``.  Exponents are rounded to 12 digits so
    that equal powers merge.
    """
    def I_f(ps):
        out = {}
        for e, c in ps.terms.items():
            ne = round(e + alpha, 12)
            if ne <= max_exponent:
                out[ne] = out.get(ne, 0.0) + c * gamma(e + 1) / gamma(e + 1 + alpha)
        return PowerSeries(out)

    def times_mu(ps):
        return PowerSeries({round(e - alpha, 12): c / gamma(1 - alpha) for e, c in ps.terms.items()})

    g = PowerSeries({float(m): c for m, c in enumerate(g_taylor) if c != 0.0})
    phi = PowerSeries()
    for _ in range(iters):
        new = I_f(g + times_mu(phi))
        change = max((abs(new.terms.get(e, 0.0) - phi.terms.get(e, 0.0))
                      for e in set(new.terms) | set(phi.terms)), default=0.0)
        phi = new
        if change < tol:
            break
    return phi


def cos_taylor(n=40):
    return [(-1) ** (m // 2) / math.factorial(m) if m % 2 == 0 else 0.0 for m in range(n)]


def k2_brute_force(alpha, x, r):
    """``k_2(x, r) = ∫_r^x μ̄(s) k(x - s) μ̄(r) k(s - r) ds`` by adaptive quadrature.

    Both endpoint singularities of ``k`` go into the algebraic weight.
    """
    def smooth(s):
        return stable_mu_bar(alpha, s) * stable_mu_bar(alpha, r) / gamma(alpha) ** 2

    v, _ = integrate.quad(smooth, r, x, weight="alg", wvar=(alpha - 1, alpha - 1),
                          epsabs=0, epsrel=1e-12)
    return v


def mismatched_convolution(alpha_mu, alpha_k, x):
    """``∫_0^x μ̄_{α_mu}(s) k_{α_k}(x - s) ds`` by adaptive quadrature."""
    def integrand(s):
        return stable_mu_bar(alpha_mu, s) * stable_k(alpha_k, x - s)

    v1, _ = integrate.quad(integrand, 0, 0.5 * x, limit=400)
    v2, _ = integrate.quad(integrand, 0.5 * x, x, limit=400)
    return v1 + v2


def rl_integral_quad(alpha, g, x):
    """``∫_0^x g(s) k(x - s) ds`` by adaptive quadrature with the algebraic weight."""
    v, _ = integrate.quad(g, 0, x, weight="alg", wvar=(0, alpha - 1), epsabs=1e-14, epsrel=1e-13)
    return v / gamma(alpha)


def arcsine_cdf(r):
    return 2 / np.pi * np.arcsin(np.sqrt(r))


def ks_critical_1pct(n):
    """Asymptotic 1% critical value of the one-sample KS statistic."""
    return 1.628 / math.sqrt(n)


def ks_critical_1pct_two_sample(n, m):
    return 1.628 * math.sqrt((n + m) / (n * m))
