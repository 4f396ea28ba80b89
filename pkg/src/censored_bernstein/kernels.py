"""Sonine pairs ``(μ̄, k)`` built from a Bernstein function.

``μ̄`` is the Lévy tail, ``k`` the potential density; they satisfy
``∫_0^x μ̄(s) k(x - s) ds = 1``.  The stable family is handled in closed
form.  Otherwise every kernel and primitive is recovered from its Laplace
transform by the fixed Talbot contour:

====================  ====================
function              transform
====================  ====================
``μ̄``                 ``f(s)/s``
``M = ∫μ̄``            ``f(s)/s²``
``M2 = ∫M``           ``f(s)/s³``
``k``                 ``1/f(s)``
``P = ∫k``            ``1/(s f(s))``
``P2 = ∫P``           ``1/(s² f(s))``
``b_m = I_f^m 1``     ``1/(s f(s)^m)``
====================  ====================

The ``b_m`` are the singular basis functions used by the grid operators to
represent the ``x^{mα}`` behaviour of solutions at the origin.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import interpolate, special

from .bernstein import (
    BernsteinSpec,
    ExplicitTriplet,
    Stable,
    TemperedStable,
    eval_f_complex,
)
from .errors import DomainError, NumericalError
from .quadrature import convolution_rows

__all__ = [
    "KernelPair",
    "PairOptions",
    "talbot",
    "make_pair",
    "mismatched_pair",
    "compute_q",
    "verify_sonine",
    "write_kernel_table",
    "stable_q",
]

# 24 nodes minimise the total error in double precision: truncation error
# falls like 10^{-0.6 M} while roundoff grows like e^{0.4 M}.
DEFAULT_TALBOT_NODES = 24


# ---------------------------------------------------------------------------
# Talbot inversion
# ---------------------------------------------------------------------------


def _talbot_contour(t, nodes):
    t = np.asarray(t, dtype=float)
    theta = np.pi * np.arange(1, nodes) / nodes
    cot = 1.0 / np.tan(theta)
    r = 2.0 * nodes / (5.0 * t)                                  # (N,)
    s = r[:, None] * np.concatenate(([1.0 + 0j], theta * (cot + 1j)))[None, :]
    sigma = theta + (theta * cot - 1.0) * cot
    gamma = np.concatenate(([0.5 + 0j], 1.0 + 1j * sigma))
    return s, gamma, r


def talbot(F: Callable, t, nodes: int = DEFAULT_TALBOT_NODES):
    """Invert the Laplace transform ``F`` at times ``t > 0``.

    Fixed Talbot contour (Abate–Valkó) with ``nodes`` points; ``F`` receives
    a complex array of shape ``(len(t), nodes)``.  The method is scale-free:
    relative accuracy is the same at every ``t``.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr <= 0.0):
        raise DomainError("Talbot inversion needs t > 0")
    s, gamma, r = _talbot_contour(t_arr, nodes)
    with np.errstate(all="ignore"):
        ex = np.exp(t_arr[:, None] * s)
        vals = F(s)
        terms = ex * vals * gamma[None, :]
        # Left-end nodes carry e^{t Re s} below 1e-300 and may overflow in F;
        # their contribution is exactly negligible.
        terms = np.where(np.abs(ex) == 0.0, 0.0, terms)
    out = (r / nodes) * np.real(terms.sum(axis=1))
    return out.reshape(np.shape(t)) if np.ndim(t) else float(out[0])


def talbot_error(F: Callable, t, nodes: int = DEFAULT_TALBOT_NODES, fewer: int = 8):
    """Relative difference between ``nodes`` and ``nodes - fewer`` inversions.

    The coarser inversion is less accurate, so this over-estimates the error
    of the ``nodes`` result (more nodes would be dominated by roundoff).
    """
    a = np.asarray(talbot(F, t, nodes - fewer))
    b = np.asarray(talbot(F, t, nodes))
    return np.abs(a - b) / np.maximum(np.abs(b), 1e-300)


# ---------------------------------------------------------------------------
# Log-log tabulation for slowly evaluated transforms
# ---------------------------------------------------------------------------


class LogLogInterpolant:
    """Positive function tabulated on a log grid; cubic in ``(log x, log g)``
    with power-law extension outside the table."""

    def __init__(self, x, values):
        lx, lv = np.log(x), np.log(values)
        self._spline = interpolate.CubicSpline(lx, lv)
        self._lo, self._hi = lx[0], lx[-1]
        self._slope_lo = float(self._spline(self._lo, 1))
        self._slope_hi = float(self._spline(self._hi, 1))
        self._v_lo, self._v_hi = lv[0], lv[-1]

    def __call__(self, x):
        lx = np.log(np.asarray(x, dtype=float))
        inside = np.clip(lx, self._lo, self._hi)
        out = self._spline(inside)
        out = np.where(lx < self._lo, self._v_lo + self._slope_lo * (lx - self._lo), out)
        out = np.where(lx > self._hi, self._v_hi + self._slope_hi * (lx - self._hi), out)
        return np.exp(out)


# ---------------------------------------------------------------------------
# KernelPair
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairOptions:
    """Knobs for numerically inverted pairs.

    ``x_max`` bounds the tabulated range of explicit triplets (beyond it the
    tables extend by power laws), ``points_per_decade`` sets their density,
    ``inversion_tol`` is the accepted relative Talbot discrepancy between
    ``talbot_nodes`` and ``talbot_nodes - 8`` at probe points.
    """

    talbot_nodes: int = DEFAULT_TALBOT_NODES
    x_min: float = 1e-10
    x_max: float = 10.0
    points_per_decade: int = 12
    inversion_tol: float = 1e-8
    max_basis: int = 7


@dataclass(frozen=True, eq=False)
class KernelPair:
    """Sonine pair with primitives and the contraction constant ``q``.

    ``e_mu`` and ``e_k`` are the power exponents of ``μ̄`` and ``k`` at the
    origin; they select the singular rules of the quadrature engine.
    ``basis(m, x)`` evaluates ``b_m = I_f^m 1`` (``b_1 = P``), which behaves
    like ``x^{m β}`` with ``β = 1 + e_k``.
    """

    mu_bar: Callable
    k: Callable
    M: Callable
    P: Callable
    M2: Callable
    P2: Callable
    basis: Callable
    q: float
    e_mu: float
    e_k: float
    provenance: str
    provenance_params: dict = field(default_factory=dict)
    spec: BernsteinSpec | None = None
    precise_mu_bar: Callable | None = None
    precise_P: Callable | None = None

    @property
    def beta(self) -> float:
        return 1.0 + self.e_k

    @property
    def q_ok(self) -> bool:
        """``True`` when the solver hypothesis ``q < 1`` holds."""
        return bool(self.q < 1.0)

    def b(self, m: int, x):
        """``b_m(x)`` with ``b_0 ≡ 1``."""
        if m == 0:
            return np.ones_like(np.asarray(x, dtype=float))
        return self.basis(m, x)


def stable_q(alpha: float) -> float:
    """``1/(Γ(1-α)Γ(1+α)) = sin(πα)/(πα)``."""
    return math.sin(math.pi * alpha) / (math.pi * alpha)


def _stable_pair(spec: Stable) -> KernelPair:
    a = spec.alpha
    g1a, ga = special.gamma(1 - a), special.gamma(a)
    g2a, g3a = special.gamma(2 - a), special.gamma(3 - a)
    gp1, gp2 = special.gamma(1 + a), special.gamma(2 + a)

    def basis(m, x):
        return np.power(x, m * a) / special.gamma(1 + m * a)

    return KernelPair(
        mu_bar=lambda x: np.power(x, -a) / g1a,
        k=lambda x: np.power(x, a - 1) / ga,
        M=lambda x: np.power(x, 1 - a) / g2a,
        P=lambda x: np.power(x, a) / gp1,
        M2=lambda x: np.power(x, 2 - a) / g3a,
        P2=lambda x: np.power(x, 1 + a) / gp2,
        basis=basis,
        q=1.0 / (g1a * gp1),
        e_mu=-a,
        e_k=a - 1.0,
        provenance="ClosedForm",
        spec=spec,
    )


def _transforms(fvals, s, options):
    """All transforms of the table above, given ``f`` on contour points."""
    out = {
        "mu_bar": fvals / s,
        "M": fvals / s**2,
        "M2": fvals / s**3,
        "k": 1.0 / fvals,
        "P": 1.0 / (s * fvals),
        "P2": 1.0 / (s**2 * fvals),
    }
    for m in range(2, options.max_basis + 1):
        out[f"b{m}"] = 1.0 / (s * fvals**m)
    return out


def _inverse_family(fcomplex, options):
    """Direct Talbot handles for a cheap complex ``f``."""
    nodes = options.talbot_nodes

    def handle(name):
        def fn(x):
            x_arr = np.asarray(x, dtype=float)
            flat = x_arr.ravel()
            s, _, _ = _talbot_contour(flat, nodes)
            tr = _transforms(fcomplex(s), s, options)[name]
            return talbot(lambda _s: tr, flat, nodes).reshape(x_arr.shape)
        return fn

    names = ["mu_bar", "M", "M2", "k", "P", "P2"] + [f"b{m}" for m in range(2, options.max_basis + 1)]
    return {n: handle(n) for n in names}


def _check_inversion(fcomplex, options, probe, diagnostics_name):
    F_k = lambda s: 1.0 / fcomplex(s)
    err = talbot_error(F_k, probe, options.talbot_nodes)
    worst = float(np.max(err))
    if not np.isfinite(worst) or worst > options.inversion_tol:
        raise NumericalError(
            f"Talbot inversion of 1/f failed its accuracy budget for {diagnostics_name}",
            {
                "contour": "fixed Talbot",
                "nodes": options.talbot_nodes,
                "probe_x": [float(v) for v in probe],
                "relative_discrepancy": [float(v) for v in err],
                "budget": options.inversion_tol,
            },
        )
    return worst


def _local_exponent(fn, x1=1e-10, x2=1e-9):
    v1, v2 = float(fn(x1)), float(fn(x2))
    return math.log(v2 / v1) / math.log(x2 / x1)


def _numeric_pair(spec, options, fcomplex, tabulate: bool) -> KernelPair:
    probe = np.geomspace(options.x_min, options.x_max, 9)
    worst = _check_inversion(fcomplex, options, probe, spec.family)
    direct = _inverse_family(fcomplex, options)

    if isinstance(spec, TemperedStable):
        a, th = spec.alpha, spec.theta
        g1a = special.gamma(1 - a)

        def mu_bar(x):
            x = np.asarray(x, dtype=float)
            return np.power(x, -a) * np.exp(-th * x) / g1a - th**a * special.gammaincc(1 - a, th * x)

        funcs = dict(direct, mu_bar=mu_bar)
        e_mu, e_k = -a, a - 1.0
    else:
        funcs = direct
        e_mu = _local_exponent(direct["mu_bar"])
        e_k = _local_exponent(direct["k"])

    precise_mu_bar, precise_P = funcs["mu_bar"], funcs["P"]
    if tabulate:
        # One batch of f evaluations on all contour points of a log grid,
        # shared by every transform, then log-log splines.
        decades = math.log10(options.x_max / options.x_min)
        npts = int(math.ceil(decades * options.points_per_decade)) + 1
        xs = np.geomspace(options.x_min, options.x_max, npts)
        s, _, _ = _talbot_contour(xs, options.talbot_nodes)
        trs = _transforms(fcomplex(s), s, options)
        tables = {}
        for name, tr in trs.items():
            vals = talbot(lambda _s, tr=tr: tr, xs, options.talbot_nodes)
            if np.any(vals <= 0.0) or np.any(~np.isfinite(vals)):
                raise NumericalError(
                    f"inverted {name} is not positive on the table",
                    {"x": xs.tolist(), "values": vals.tolist()},
                )
            tables[name] = LogLogInterpolant(xs, vals)
        funcs = tables

    max_basis = options.max_basis

    def basis(m, x, funcs=funcs):
        if m == 1:
            return funcs["P"](x)
        if not 1 <= m <= max_basis:
            raise DomainError(f"basis index must be in 1..{max_basis}, got {m}")
        return funcs[f"b{m}"](x)

    pair = KernelPair(
        mu_bar=funcs["mu_bar"], k=funcs["k"], M=funcs["M"], P=funcs["P"],
        M2=funcs["M2"], P2=funcs["P2"], basis=basis, q=math.nan,
        e_mu=e_mu, e_k=e_k, provenance="NumericInversion",
        provenance_params={
            "method": "fixed Talbot contour",
            "nodes": options.talbot_nodes,
            "max_probe_discrepancy": worst,
            "tabulated": tabulate,
        },
        spec=spec, precise_mu_bar=precise_mu_bar, precise_P=precise_P,
    )
    return _with_q(pair, compute_q(pair))


def _with_q(pair: KernelPair, q: float) -> KernelPair:
    from dataclasses import replace

    return replace(pair, q=q)


def make_pair(spec: BernsteinSpec, options: PairOptions | None = None) -> KernelPair:
    """Build the Sonine pair of ``spec``.

    The stable family is exact.  The tempered stable family uses the closed
    Lévy tail and direct Talbot inversion for everything else.  Explicit
    triplets (no drift, no killing) are inverted once on a log grid and
    interpolated, because each evaluation of their ``f`` is a quadrature.
    """
    options = options or PairOptions()
    if isinstance(spec, Stable):
        return _stable_pair(spec)
    if isinstance(spec, TemperedStable):
        return _numeric_pair(spec, options, lambda s: eval_f_complex(spec, s), tabulate=False)
    if isinstance(spec, ExplicitTriplet):
        if spec.a != 0.0 or spec.b != 0.0:
            raise DomainError(
                "kernels are only built for triplets without killing or drift (a = b = 0); "
                "use classify_triplet for the general case"
            )
        return _numeric_pair(spec, options, lambda s: eval_f_complex(spec, s), tabulate=True)
    raise DomainError(f"unsupported spec {spec!r}")


def mismatched_pair(mu_spec: BernsteinSpec, k_spec: BernsteinSpec,
                    options: PairOptions | None = None) -> KernelPair:
    """Pair whose ``μ̄`` comes from ``mu_spec`` and ``k`` from ``k_spec``.

    It is not a Sonine pair unless the specs coincide; it serves as a
    negative control for :func:`verify_sonine` and the solver guards.
    """
    pm, pk = make_pair(mu_spec, options), make_pair(k_spec, options)
    pair = KernelPair(
        mu_bar=pm.mu_bar, k=pk.k, M=pm.M, P=pk.P, M2=pm.M2, P2=pk.P2,
        basis=pk.basis, q=math.nan, e_mu=pm.e_mu, e_k=pk.e_k,
        provenance="Mismatched",
        provenance_params={"mu_from": mu_spec.family, "k_from": k_spec.family},
        spec=None, precise_mu_bar=pm.precise_mu_bar or pm.mu_bar,
        precise_P=pk.precise_P or pk.P,
    )
    return _with_q(pair, compute_q(pair))


# ---------------------------------------------------------------------------
# q and the Sonine identity
# ---------------------------------------------------------------------------

Q_LEVELS = range(10, 31)
Q_AGREEMENT = 1e-9


def _aitken(seq):
    a0, a1, a2 = seq[:-2], seq[1:-1], seq[2:]
    d1, d2 = a1 - a0, a2 - a1
    den = d2 - d1
    safe = np.abs(den) > 1e-300
    return np.where(safe, a2 - d2 * d2 / np.where(safe, den, 1.0), a2)


def compute_q(pair: KernelPair, method: str = "auto") -> float:
    """``q = lim_{x→0} μ̄(x) P(x)``.

    ``method="auto"`` uses the closed form for stable pairs and the
    extrapolation otherwise; ``method="extrapolate"`` forces the numeric
    limit.  The sequence is sampled at ``x = 2^{-j}``, ``j = 10..30``.  Since
    ``μ̄P - q`` is a sum of powers of ``x``, the samples form a sum of
    geometric sequences; repeated Aitken Δ² steps remove them one at a
    time.  The deepest column whose last three entries agree within 1e-9 is
    accepted.  A sequence that grows geometrically past 1 has limit ``+∞``.
    """
    if method == "auto" and pair.provenance == "ClosedForm":
        return float(pair.q)
    mu = pair.precise_mu_bar or pair.mu_bar
    P = pair.precise_P or pair.P
    xs = np.array([2.0**-j for j in Q_LEVELS])
    seq = np.asarray(mu(xs), dtype=float) * np.asarray(P(xs), dtype=float)
    if not np.all(np.isfinite(seq)):
        raise NumericalError("non-finite samples of mu_bar*P", {"x": xs.tolist(), "sequence": seq.tolist()})
    ratios = seq[1:] / seq[:-1]
    if seq[-1] > 1.0 and np.all(ratios[-5:] > 1.0 + 1e-3):
        return math.inf

    columns = [seq]
    while len(columns[-1]) >= 5:
        columns.append(_aitken(columns[-1]))
    for col in reversed(columns):
        if len(col) < 3:
            continue
        last = col[-3:]
        if np.max(last) - np.min(last) <= Q_AGREEMENT:
            # μ̄P > 0, so a slightly negative extrapolant is rounding noise.
            return max(float(last[-1]), 0.0)
    raise NumericalError(
        "extrapolation of mu_bar(x)*P(x) did not converge",
        {"x": xs.tolist(), "sequence": seq.tolist(),
         "columns_tail": [c[-3:].tolist() for c in columns if len(c) >= 3]},
    )


def verify_sonine(pair: KernelPair, T: float, n: int, nq: int = 16) -> float:
    """Max over nodes ``x_i > 0`` of ``|(μ̄ ∗ k)(x_i) - 1|``."""
    if n < 2:
        raise DomainError("verify_sonine needs n >= 2")
    if not T > 0:
        raise DomainError("verify_sonine needs T > 0")
    rows = convolution_rows(pair.mu_bar, pair.k, pair.e_mu, pair.e_k, n, T / n, nq)
    dev = np.abs(rows[1:] - 1.0)
    if not np.all(np.isfinite(dev)):
        raise NumericalError("overflow in the Sonine convolution", {"T": T, "n": n})
    return float(dev.max())


def write_kernel_table(pair: KernelPair, x, path) -> None:
    """CSV with columns ``x, mu_bar, k, M, P``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise DomainError("kernel tables are defined for x > 0")
    cols = [x, pair.mu_bar(x), pair.k(x), pair.M(x), pair.P(x)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "mu_bar", "k", "M", "P"])
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
