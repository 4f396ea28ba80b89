"""Series solvers for the censored initial-value and resolvent problems.

The censored integral ``I_c g = Σ_j K^j I_f g`` inverts the censored
derivative on functions vanishing at 0.  Resolvent problems are Neumann
series in ``λ I_c``.  Every solver certifies its truncation twice.  An
a-priori bound comes from the contraction constant ``q``.  An a-posteriori
check uses the measured ratio of consecutive terms.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisViolation, NonConvergenceError, ValidationError
from .kernels import KernelPair
from .ops import BOUNDARY_LAYER, FractionalOperators, Grid, GridFunction, operators_for

__all__ = [
    "SeriesSolution",
    "censored_integral",
    "censored_integral_alt",
    "solve_censored_ivp",
    "solve_resolvent",
    "solve_resolvent_inhom",
    "lifetime_laplace",
    "DEFAULT_TOL",
    "MAX_TERMS",
]

DEFAULT_TOL = 1e-10
#: Hard cap on the number of series terms.
MAX_TERMS = 10_000
#: Terms larger than this multiple of the final answer signal cancellation
#: that the grid accuracy cannot support.
CANCELLATION_LIMIT = 1e8


@dataclass(frozen=True, eq=False)
class SeriesSolution:
    """Solution of a censored problem with its truncation certificate.

    ``tail_bound`` bounds the sup norm of the dropped series tail and
    ``residual`` is the sup norm of the equation residual over non-boundary
    nodes.  ``bound_excess`` is the largest relative amount by which a
    retained term exceeds its a-priori bound (``≤ 0`` when every term obeys
    it).
    """

    phi: GridFunction
    terms_used: int
    tail_bound: float
    residual: float
    q_used: float
    lam: float
    phi0: float
    bound_excess: float = -math.inf
    diagnostics: dict = field(default_factory=dict)

    def diagnostics_dict(self) -> dict:
        out = {
            "terms_used": self.terms_used,
            "tail_bound": self.tail_bound,
            "residual": self.residual,
            "q": self.q_used,
            "lambda": self.lam,
            "phi0": self.phi0,
            "bound_excess": self.bound_excess,
        }
        out.update(self.diagnostics)
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "phi"])
            for xv, v in zip(self.phi.x, self.phi.values):
                w.writerow([repr(float(xv)), repr(float(v))])

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.diagnostics_dict(), fh, indent=2)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Censored integral
# ---------------------------------------------------------------------------


def _require_q(pair: KernelPair) -> float:
    q = pair.q
    if not (math.isfinite(q) and q < 1.0):
        raise HypothesisViolation("hypothesis q<1 violated", {"q": q})
    return q


def _ops(pair: KernelPair, g: GridFunction) -> FractionalOperators:
    if not isinstance(g, GridFunction):
        raise ValidationError("solvers act on GridFunction values")
    return operators_for(pair, g.grid)


def _k_series(ops: FractionalOperators, start: np.ndarray, q: float, scale: float,
              tol: float, max_terms: int):
    """``Σ_j K^j start`` with ``|K^j start| ≤ scale · q^j``.

    Returns ``(sum, terms, tail)``.  The a-priori tail after ``J`` terms is
    ``scale q^{J+1} / (1 - q)``.  The a-posteriori rule also asks the last
    term to be below ``tol (1 - ρ̂)`` with ``ρ̂`` the measured decay ratio.
    """
    total = start.copy()
    term = start
    prev_norm = float(np.max(np.abs(term)))
    j = 0
    while True:
        apriori = scale * q ** (j + 1) / (1.0 - q) if q > 0 else 0.0
        norm = float(np.max(np.abs(term)))
        rho = min(norm / prev_norm, 1.0 - 1e-12) if prev_norm > 0 and j > 0 else q
        aposteriori = norm * rho / (1.0 - rho)
        if apriori < tol and (norm == 0.0 or norm < tol * (1.0 - rho)):
            return total, j + 1, max(apriori, aposteriori)
        if j + 1 >= max_terms:
            raise NonConvergenceError(
                f"censored integral did not converge within {max_terms} terms",
                {"terms": j + 1, "apriori_tail": apriori, "last_term": norm, "q": q},
            )
        prev_norm = norm
        term = ops.apply_K(term)
        term[0] = 0.0
        total += term
        j += 1


def _censored_integral_values(pair, ops, v, tol, max_terms):
    q = _require_q(pair)
    Pt = float(pair.P(ops.grid.T))
    gnorm = float(np.max(np.abs(v)))
    start = ops.rl_integral(v)
    return _k_series(ops, start, q, gnorm * Pt, tol, max_terms)


def censored_integral(pair: KernelPair, g: GridFunction, tol: float = DEFAULT_TOL,
                      max_terms: int = MAX_TERMS) -> GridFunction:
    """``I_c g = Σ_{j≥0} K^j I_f g`` truncated with tail below ``tol``.

    Raises :class:`HypothesisViolation` when ``q ≥ 1`` and
    :class:`NonConvergenceError` beyond ``max_terms`` terms.
    """
    ops = _ops(pair, g)
    vals, _, _ = _censored_integral_values(pair, ops, np.asarray(g.values), tol, max_terms)
    return GridFunction(g.grid, vals)


def censored_integral_alt(pair: KernelPair, g: GridFunction, tol: float = DEFAULT_TOL,
                          max_terms: int = MAX_TERMS) -> GridFunction:
    """Equivalent form ``I_f[μ̄ Σ_j K^j (g / μ̄)]``.

    ``g / μ̄`` takes the limit 0 at the origin because ``μ̄(0+) = ∞``.
    """
    ops = _ops(pair, g)
    q = _require_q(pair)
    x = g.grid.x
    mu = pair.mu_bar(x[1:])
    w = np.zeros_like(x)
    w[1:] = np.asarray(g.values)[1:] / mu
    scale = float(np.max(np.abs(w)))
    s, _, _ = _k_series(ops, w, q, scale, tol * 1e-3, max_terms)
    inner = np.zeros_like(x)
    inner[1:] = mu * s[1:]
    # Near 0 the sum behaves like c_1 b_1, and μ̄ b_1 -> q.
    inner[0] = ops.coefficients(s)[0] * q
    return GridFunction(g.grid, ops.rl_integral(inner))


# ---------------------------------------------------------------------------
# IVP and resolvents
# ---------------------------------------------------------------------------


def _residual(ops: FractionalOperators, phi: np.ndarray, rhs: np.ndarray) -> float:
    r = ops.censored_derivative(phi) - rhs
    return float(np.max(np.abs(r[BOUNDARY_LAYER:]))) if len(r) > BOUNDARY_LAYER else 0.0


def solve_censored_ivp(pair: KernelPair, g: GridFunction, phi0: float,
                       tol: float = DEFAULT_TOL, max_terms: int = MAX_TERMS) -> SeriesSolution:
    """``φ = φ_0 + I_c g``: the solution of ``D^c φ = g`` with ``φ(0) = φ_0``."""
    ops = _ops(pair, g)
    v = np.asarray(g.values)
    ic, terms, tail = _censored_integral_values(pair, ops, v, tol, max_terms)
    phi = phi0 + ic
    phi[0] = phi0
    res = _residual(ops, phi, v)
    return SeriesSolution(GridFunction(g.grid, phi), terms, tail, res, pair.q, 0.0, float(phi0))


class _BoundFunctions:
    """Node values of ``b_j = I_f^{j-1} P`` for the resolvent bound.

    Closed forms are used while the pair provides them; beyond that the
    discrete ``I_f`` continues the sequence.
    """

    def __init__(self, pair: KernelPair, ops: FractionalOperators):
        self.pair, self.ops = pair, ops
        self.cache = {}

    def __call__(self, j: int) -> np.ndarray:
        if j not in self.cache:
            x = self.ops.grid.x
            try:
                b = np.zeros_like(x)
                b[1:] = self.pair.basis(j, x[1:])
            except Exception:
                b = self.ops.rl_integral(self(j - 1))
            self.cache[j] = b
        return self.cache[j]


def _neumann(pair, ops, start, lam, tol, max_terms, bound_scale, bound_shift, label):
    """``Σ_j (λ I_c)^j start`` with the bound
    ``|(λ I_c)^j start| ≤ bound_scale (|λ|/(1-q))^j b_{j+shift}``.
    """
    q = _require_q(pair)
    bounds = _BoundFunctions(pair, ops)
    r = abs(lam) / (1.0 - q)
    total = start.copy()
    term = start.copy()
    peak = float(np.max(np.abs(term)))
    excess = -math.inf
    inner_tol = tol * 1e-2
    inner_terms = 0
    j = 0
    while True:
        if lam == 0.0:
            return total, 1, 0.0, excess, inner_terms
        if j + 1 > max_terms:
            raise NonConvergenceError(
                f"{label}: series did not converge within {max_terms} terms; "
                "use a smaller T or |lambda|",
                {"terms": j, "last_term": float(np.max(np.abs(term)))},
            )
        ic, n_in, _ = _censored_integral_values(pair, ops, term, inner_tol, MAX_TERMS)
        inner_terms = max(inner_terms, n_in)
        term = lam * ic
        j += 1
        total += term
        B = bound_scale * r**j * bounds(j + bound_shift)
        Bmax = float(np.max(B))
        if Bmax > 0:
            excess = max(excess, float(np.max(np.abs(term) - B)) / Bmax)
        tnorm = float(np.max(np.abs(term)))
        peak = max(peak, tnorm)
        if not math.isfinite(tnorm):
            raise NonConvergenceError(f"{label}: series terms overflowed; use a smaller T or |lambda|",
                                      {"terms": j})
        if tnorm < tol and Bmax < tol:
            tail = _tail_of_bounds(bounds, r, j, bound_scale, bound_shift)
            scale = max(float(np.max(np.abs(total))), 1e-300)
            if peak > CANCELLATION_LIMIT * scale:
                raise NonConvergenceError(
                    f"{label}: cancellation between series terms exceeds the grid accuracy; "
                    "use a smaller T or |lambda|", {"peak_term": peak, "result": scale})
            return total, j + 1, tail, excess, inner_terms


def _tail_of_bounds(bounds, r, j, scale, shift, extra=60):
    """Sum of the a-priori bounds of the first dropped terms.

    ``b_j(T)`` decays factorially once ``j`` is large, so a fixed number of
    further terms (checked to be negligible) bounds the remainder.
    """
    tail = 0.0
    for i in range(j + 1, j + 1 + extra):
        t = scale * r**i * float(np.max(bounds(i + shift)))
        tail += t
        if t <= 1e-16 * tail:
            break
    return tail


def solve_resolvent(pair: KernelPair, grid: Grid, lam: float, phi0: float = 1.0,
                    tol: float = DEFAULT_TOL, max_terms: int = 500) -> SeriesSolution:
    """``φ = φ_0 Σ_j (λ I_c)^j 1``: the solution of ``D^c φ = λ φ``, ``φ(0) = φ_0``."""
    ops = operators_for(pair, grid)
    lam = float(lam)
    start = np.full(grid.n + 1, 1.0)
    s, terms, tail, excess, inner = _neumann(pair, ops, start, lam, tol / max(abs(phi0), 1.0),
                                             max_terms, 1.0, 0, "resolvent")
    phi = phi0 * s
    phi[0] = phi0
    res = _residual(ops, phi, lam * phi)
    return SeriesSolution(GridFunction(grid, phi), terms, abs(phi0) * tail, res, pair.q, lam,
                          float(phi0), excess, {"inner_terms": inner})


def solve_resolvent_inhom(pair: KernelPair, lam: float, phi0: float, g: GridFunction,
                          tol: float = DEFAULT_TOL, max_terms: int = 500) -> SeriesSolution:
    """``φ = φ_0 Σ (λ I_c)^j 1 + Σ λ^j (I_c)^{j+1} g``, solving ``D^c φ = λφ + g``."""
    ops = _ops(pair, g)
    grid = g.grid
    lam = float(lam)
    q = _require_q(pair)
    v = np.asarray(g.values)
    gnorm = float(np.max(np.abs(v)))
    hom = solve_resolvent(pair, grid, lam, phi0, tol / 2, max_terms)
    icg, n_in, _ = _censored_integral_values(pair, ops, v, tol * 1e-2, MAX_TERMS)
    s, terms, tail, excess, inner = _neumann(pair, ops, icg, lam, tol / 2, max_terms,
                                             gnorm / (1.0 - q), 1, "inhomogeneous resolvent")
    phi = hom.phi.values + s
    phi[0] = phi0
    res = _residual(ops, phi, lam * phi + v)
    return SeriesSolution(GridFunction(grid, phi), max(terms, hom.terms_used),
                          hom.tail_bound + tail, res, q, lam, float(phi0),
                          max(excess, hom.bound_excess), {"inner_terms": max(inner, n_in)})


#: Grid size used by :func:`lifetime_laplace`.
LIFETIME_GRID = 1024


def lifetime_laplace(pair: KernelPair, lam: float, x: float, tol: float = DEFAULT_TOL,
                     n: int = LIFETIME_GRID) -> float:
    """``Σ_j λ^j (I_c)^j 1`` evaluated at ``x``.

    For ``λ ≤ 0`` this is the Laplace transform ``E^x[e^{λ τ_∞}]`` of the
    lifetime and must lie in ``[0, 1]``; a value outside that range by more
    than the tolerance is reported as a numerical error.
    """
    if not (isinstance(x, (int, float)) and math.isfinite(x) and x >= 0):
        raise ValidationError(f"x must be finite and >= 0, got {x!r}")
    if x == 0 or lam == 0:
        return 1.0
    sol = solve_resolvent(pair, Grid(float(x), n), lam, 1.0, tol)
    val = float(sol.phi.values[-1])
    slack = 1e-6
    if lam < 0 and not (-slack <= val <= 1.0 + slack):
        raise NonConvergenceError("lifetime Laplace transform left [0, 1]",
                                  {"value": val, "lambda": lam, "x": x})
    if lam > 0 and val < 1.0 - slack:
        raise NonConvergenceError("lifetime moment generating function below 1",
                                  {"value": val, "lambda": lam, "x": x})
    return val
