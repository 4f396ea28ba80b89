"""Cell-wise product integration for convolutions of two singular factors.

All routines integrate ``∫_0^{x_i} L(r) R(x_i - r) φ(r) dr`` on the uniform
grid ``x_i = i h``, where ``L`` behaves like ``r^{eL}`` at 0, ``R`` like
``u^{eR}`` at 0 and ``φ`` is piecewise linear.  Ordinary cells use
Gauss–Legendre.  In the two cells touching a singular endpoint the
singular factor is integrated against Legendre polynomials on a dyadically
refined rule (a Gauss–Jacobi piece absorbs the leading power in the last
dyadic interval).  Those modified moments become weights on the ordinary
Gauss nodes, so the smooth partner is sampled at only ``nq`` points.  Row 1,
where both singularities share one cell, uses the refined rule directly.

Dependence of ``R(x_i - r)`` on ``(i - c, node)`` makes the ordinary-cell
evaluations Toeplitz, so each factor is evaluated only ``O(n · nq)`` times.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

DEFAULT_NQ = 16


#: Dyadic refinement levels toward a singular cell endpoint.  The final
#: Gauss–Jacobi piece absorbs the leading power only; sub-leading powers (such as the x^α
#: corrections of tempered kernels) are resolved by the geometric pieces.
DYADIC_LEVELS = 60


@lru_cache(maxsize=64)
def _gauss(nq: int):
    return roots_legendre(nq)


@lru_cache(maxsize=256)
def _singular_rule(nq: int, e: float, levels: int = DYADIC_LEVELS):
    """Rule ``(s, ω)`` with ``∫_0^1 g ≈ Σ ω g(s)`` for ``g ~ s^e`` at 0.

    The weights already contain ``s^{-e}``, so callers pass the raw singular
    integrand.
    """
    tg, wg = _gauss(nq)
    nodes, weights = [], []
    for k in range(levels):
        a, b = 2.0 ** -(k + 1), 2.0**-k
        nodes.append(a + (b - a) * 0.5 * (1.0 + tg))
        weights.append(0.5 * (b - a) * wg)
    eps = 2.0**-levels
    # roots_jacobi(n, a, b) uses weight (1-t)^a (1+t)^b; scipy emits a
    # spurious 0/0 warning inside its recurrence when a = 0.
    with np.errstate(invalid="ignore"):
        tj, wj = roots_jacobi(nq, 0.0, e)
    sj = eps * 0.5 * (1.0 + tj)
    nodes.append(sj)
    weights.append(wj * (0.5 * eps) ** (1.0 + e) * sj ** (-e))
    return np.concatenate(nodes), np.concatenate(weights)


def _both_rule(nq: int, eL: float, eR: float):
    """Row-1 rule: ``[0, 1/2]`` singular at 0, ``[1/2, 1]`` singular at 1.

    Returns positions ``s`` and distances ``1 - s`` separately so that the
    distance to the right endpoint keeps full relative precision.
    """
    sl, wl = _singular_rule(nq, eL)
    so, wr = _singular_rule(nq, eR)
    pos = np.concatenate((0.5 * sl, 1.0 - 0.5 * so))
    dist = np.concatenate((1.0 - 0.5 * sl, 0.5 * so))
    return pos, dist, np.concatenate((0.5 * wl, 0.5 * wr))


@lru_cache(maxsize=64)
def _legendre_vandermonde(nq: int):
    tg, _ = _gauss(nq)
    return np.polynomial.legendre.legvander(tg, nq - 1).T      # V[p, g] = P_p(t_g)


def _moment_weights(F, e: float, h: float, nq: int):
    """Weights ``ω`` on the Gauss nodes ``s_g`` with
    ``Σ ω_g φ(s_g) = ∫_0^1 F(h s) φ(s) ds`` for every polynomial ``φ`` of
    degree < ``nq``.  ``F ~ s^e`` at 0 is integrated on the refined rule
    (modified moments against Legendre polynomials), so the smooth partner
    ``φ`` is only needed at ``nq`` points.
    """
    s_ref, w_ref = _singular_rule(nq, e)
    moments = np.polynomial.legendre.legvander(2.0 * s_ref - 1.0, nq - 1).T @ (F(h * s_ref) * w_ref)
    return np.linalg.solve(_legendre_vandermonde(nq), moments)


def _pieces(L, R, eL, eR, n, h, nq):
    """Evaluate every factor sample the table and row builders need."""
    tg, wg = _gauss(nq)
    x = np.arange(n + 1) * h
    sg = 0.5 * (1.0 + tg)

    # Ordinary cells: r = c h + h s, u = x_i - r = h (d - s), d = i - c.
    r_gen = x[:n, None] + h * sg[None, :]
    Lg = L(r_gen) * (0.5 * h * wg)[None, :]                 # (n, nq), row c
    d = np.arange(n + 1)[:, None]
    with np.errstate(all="ignore"):
        Rg = np.where(d >= 2, R(np.maximum(h * (d - sg[None, :]), 1e-300)), 0.0)  # row d
    Lg[0] = 0.0                                              # cell 0 is special

    # Cell touching r = 0 (rows i >= 2): L singular, R(x_i - r) smooth.
    wl = _moment_weights(L, float(eL), h, nq)
    left_vals = R(x[2:, None] - h * sg[None, :]) * (h * wl)[None, :]

    # Cell touching r = x_i (rows i >= 2): R singular at u = h·so.
    wr = _moment_weights(R, float(eR), h, nq)
    sr = 1.0 - sg
    right_vals = L(x[1:n, None] + h * sr[None, :]) * (h * wr)[None, :]

    # Row 1: both singular endpoints in one cell; full refined rule.
    sb, db, wb = _both_rule(nq, float(eL), float(eR))
    first_vals = L(h * sb) * R(h * db) * h * wb

    return dict(sg=sg, Lg=Lg, Rg=Rg, sl=sg, left_vals=left_vals, sr=sr,
                right_vals=right_vals, sb=sb, first_vals=first_vals)


def convolution_table(L, R, eL: float, eR: float, n: int, h: float, nq: int = DEFAULT_NQ):
    """Weights ``W[i, j] = ∫_0^{x_i} L(r) R(x_i - r) hat_j(r) dr``.

    ``hat_j`` is the piecewise-linear nodal basis.  Row 0 is left zero; the
    caller decides the branch value at ``x = 0``.
    """
    p = _pieces(L, R, eL, eR, n, h, nq)
    W = np.zeros((n + 1, n + 1))
    if n >= 3:
        i_idx = np.arange(n + 1)[:, None]
        c_idx = np.arange(n)[None, :]
        D = i_idx - c_idx
        valid = (D >= 2) & (c_idx >= 1)
        D = np.where(valid, D, 0)
        Wl = np.zeros((n + 1, n))
        Wr = np.zeros((n + 1, n))
        for t, s in enumerate(p["sg"]):
            prod = p["Lg"][None, :, t] * p["Rg"][D, t]
            Wl += prod * (1.0 - s)
            Wr += prod * s
        W[:, :n] += Wl
        W[:, 1:] += Wr
    if n >= 2:
        rows = np.arange(2, n + 1)
        lv = p["left_vals"]
        W[rows, 0] += lv @ (1.0 - p["sl"])
        W[rows, 1] += lv @ p["sl"]
        rv = p["right_vals"]
        W[rows, rows - 1] += rv @ (1.0 - p["sr"])
        W[rows, rows] += rv @ p["sr"]
    fv = p["first_vals"]
    W[1, 0] += fv @ (1.0 - p["sb"])
    W[1, 1] += fv @ p["sb"]
    return W


def convolution_rows(L, R, eL: float, eR: float, n: int, h: float, nq: int = DEFAULT_NQ):
    """Node values ``∫_0^{x_i} L(r) R(x_i - r) dr`` (no smooth factor).

    Row sums of :func:`convolution_table` without forming the table; the
    ordinary cells reduce to one discrete convolution per quadrature node.
    """
    p = _pieces(L, R, eL, eR, n, h, nq)
    out = np.zeros(n + 1)
    if n >= 3:
        for t in range(len(p["sg"])):
            out += np.convolve(p["Lg"][:, t], p["Rg"][:, t])[: n + 1]
    if n >= 2:
        out[2:] += p["left_vals"].sum(axis=1) + p["right_vals"].sum(axis=1)
    out[1] += p["first_vals"].sum()
    return out
