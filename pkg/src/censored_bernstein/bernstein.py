"""Complete Bernstein functions: specification, evaluation, conjugation and
the triplet classification of their Sonine pairs.

A Bernstein function is written ``f(λ) = a + bλ + ∫(1 - e^{-λt}) m(t) dt``
with killing ``a``, drift ``b`` and Lévy density ``m``.  Three families are
supported:

* :class:`Stable`          ``f(λ) = λ^α``
* :class:`TemperedStable`  ``f(λ) = (λ + θ)^α - θ^α``
* :class:`ExplicitTriplet` arbitrary ``(a, b, m)`` evaluated by quadrature

Every spec is an immutable dataclass that round-trips through a JSON object
``{"family": ..., params...}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericalError, ValidationError

__all__ = [
    "Stable",
    "TemperedStable",
    "ExplicitTriplet",
    "BernsteinSpec",
    "StableDensity",
    "TemperedStableDensity",
    "ExponentialDensity",
    "SumDensity",
    "Conjugate",
    "TripletClassification",
    "eval_f",
    "eval_f_complex",
    "conjugate",
    "classify_triplet",
    "spec_from_dict",
    "spec_to_dict",
    "DIVERGENCE_EPS",
]


# ---------------------------------------------------------------------------
# Lévy densities usable inside ExplicitTriplet.  They accept complex t so the
# Laplace exponent can be continued off the real axis by ray rotation.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StableDensity:
    """``m(t) = α t^{-1-α} / Γ(1-α)``, the Lévy density of ``λ^α``."""

    alpha: float

    def __call__(self, t):
        a = self.alpha
        return a * np.power(t, -1.0 - a) / special.gamma(1.0 - a)

    def moments(self) -> tuple[float, float]:
        return math.inf, math.inf

    def to_dict(self) -> dict:
        return {"kind": "stable", "alpha": self.alpha}


@dataclass(frozen=True)
class TemperedStableDensity:
    """``m(t) = α t^{-1-α} e^{-θt} / Γ(1-α)``."""

    alpha: float
    theta: float

    def __call__(self, t):
        a = self.alpha
        return a * np.power(t, -1.0 - a) * np.exp(-self.theta * t) / special.gamma(1.0 - a)

    def moments(self) -> tuple[float, float]:
        return math.inf, self.alpha * self.theta ** (self.alpha - 1.0)

    def to_dict(self) -> dict:
        return {"kind": "tempered_stable", "alpha": self.alpha, "theta": self.theta}


@dataclass(frozen=True)
class ExponentialDensity:
    """``m(t) = c e^{-βt}``: compound Poisson with exponential jumps."""

    scale: float
    rate: float

    def __call__(self, t):
        return self.scale * np.exp(-self.rate * np.asarray(t))

    def moments(self) -> tuple[float, float]:
        return self.scale / self.rate, self.scale / self.rate**2

    def to_dict(self) -> dict:
        return {"kind": "exponential", "scale": self.scale, "rate": self.rate}


@dataclass(frozen=True)
class SumDensity:
    """Sum of densities; complete monotonicity is preserved under sums."""

    terms: tuple

    def __call__(self, t):
        return sum(term(t) for term in self.terms)

    def moments(self) -> tuple[float, float]:
        m0 = sum(term.moments()[0] for term in self.terms)
        m1 = sum(term.moments()[1] for term in self.terms)
        return m0, m1

    def to_dict(self) -> dict:
        return {"kind": "sum", "terms": [term.to_dict() for term in self.terms]}


def density_from_dict(d: dict):
    """Build a named Lévy density from its JSON description."""
    if not isinstance(d, dict) or "kind" not in d:
        raise ValidationError(f"density must be an object with a 'kind' key, got {d!r}")
    kind = d["kind"]
    allowed = {
        "stable": {"kind", "alpha"},
        "tempered_stable": {"kind", "alpha", "theta"},
        "exponential": {"kind", "scale", "rate"},
        "sum": {"kind", "terms"},
    }
    if kind not in allowed:
        raise ValidationError(f"unknown density kind {kind!r}")
    extra = set(d) - allowed[kind]
    if extra:
        raise ValidationError(f"unknown keys for density {kind!r}: {sorted(extra)}")
    try:
        if kind == "stable":
            _check_alpha(d["alpha"])
            return StableDensity(float(d["alpha"]))
        if kind == "tempered_stable":
            _check_alpha(d["alpha"])
            _check_positive("theta", d["theta"])
            return TemperedStableDensity(float(d["alpha"]), float(d["theta"]))
        if kind == "exponential":
            _check_positive("scale", d["scale"])
            _check_positive("rate", d["rate"])
            return ExponentialDensity(float(d["scale"]), float(d["rate"]))
        return SumDensity(tuple(density_from_dict(t) for t in d["terms"]))
    except KeyError as exc:
        raise ValidationError(f"density {kind!r} is missing key {exc.args[0]!r}") from None


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------


def _check_alpha(alpha) -> None:
    if isinstance(alpha, bool) or not isinstance(alpha, (int, float)):
        raise ValidationError(f"alpha must be a real number, got {alpha!r}")
    if not (0.0 < float(alpha) < 1.0):
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")


def _check_positive(name, value) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a real number, got {value!r}")
    if not (float(value) > 0.0 and math.isfinite(float(value))):
        raise ValidationError(f"{name} must be finite and > 0, got {value}")


@dataclass(frozen=True)
class Stable:
    """Stable subordinator, ``f(λ) = λ^α``."""

    alpha: float
    family: str = field(default="stable", init=False)

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def a(self) -> float:
        return 0.0

    @property
    def b(self) -> float:
        return 0.0

    @property
    def levy_density(self) -> StableDensity:
        return StableDensity(self.alpha)


@dataclass(frozen=True)
class TemperedStable:
    """Tempered stable subordinator, ``f(λ) = (λ + θ)^α - θ^α``."""

    alpha: float
    theta: float
    family: str = field(default="tempered_stable", init=False)

    def __post_init__(self):
        _check_alpha(self.alpha)
        _check_positive("theta", self.theta)

    @property
    def a(self) -> float:
        return 0.0

    @property
    def b(self) -> float:
        return 0.0

    @property
    def levy_density(self) -> TemperedStableDensity:
        return TemperedStableDensity(self.alpha, self.theta)


@dataclass(frozen=True)
class ExplicitTriplet:
    """General triplet ``(a, b, m)``.

    ``levy_density`` is any callable ``m(t)`` for ``t > 0``.  If it also
    accepts complex arguments in the right half plane the Laplace exponent
    can be continued analytically (needed for kernel construction).
    ``m0``/``m1`` override the automatic finiteness decisions of
    :func:`classify_triplet` when given (use ``math.inf`` for divergence).
    """

    levy_density: Callable
    a: float = 0.0
    b: float = 0.0
    m0: float | None = None
    m1: float | None = None
    family: str = field(default="explicit", init=False)

    def __post_init__(self):
        for name in ("a", "b"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v >= 0.0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be a finite real >= 0, got {v!r}")
        if not callable(self.levy_density):
            raise ValidationError("levy_density must be callable")


BernsteinSpec = Union[Stable, TemperedStable, ExplicitTriplet]


def spec_from_dict(d: dict) -> BernsteinSpec:
    """Parse ``{"family": ..., params...}``; unknown keys are rejected."""
    if not isinstance(d, dict) or "family" not in d:
        raise ValidationError("spec must be an object with a 'family' key")
    fam = d["family"]
    allowed = {
        "stable": {"family", "alpha"},
        "tempered_stable": {"family", "alpha", "theta"},
        "explicit": {"family", "a", "b", "density", "m0", "m1"},
    }
    if fam not in allowed:
        raise ValidationError(f"unknown family {fam!r}; expected one of {sorted(allowed)}")
    extra = set(d) - allowed[fam]
    if extra:
        raise ValidationError(f"unknown keys for family {fam!r}: {sorted(extra)}")
    try:
        if fam == "stable":
            return Stable(d["alpha"])
        if fam == "tempered_stable":
            return TemperedStable(d["alpha"], d["theta"])
        return ExplicitTriplet(
            levy_density=density_from_dict(d["density"]),
            a=float(d.get("a", 0.0)),
            b=float(d.get("b", 0.0)),
            m0=_parse_moment(d.get("m0")),
            m1=_parse_moment(d.get("m1")),
        )
    except KeyError as exc:
        raise ValidationError(f"family {fam!r} is missing key {exc.args[0]!r}") from None


def _parse_moment(v):
    if v is None:
        return None
    if v == "inf":
        return math.inf
    if isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0:
        return float(v)
    raise ValidationError(f"moment override must be a positive number or 'inf', got {v!r}")


def _json_number(v: float):
    return "inf" if math.isinf(v) else v


def spec_to_dict(spec: BernsteinSpec) -> dict:
    """Inverse of :func:`spec_from_dict` (named densities only)."""
    if isinstance(spec, Stable):
        return {"family": "stable", "alpha": spec.alpha}
    if isinstance(spec, TemperedStable):
        return {"family": "tempered_stable", "alpha": spec.alpha, "theta": spec.theta}
    if not hasattr(spec.levy_density, "to_dict"):
        raise ValidationError("only named densities can be serialized")
    out = {"family": "explicit", "a": spec.a, "b": spec.b, "density": spec.levy_density.to_dict()}
    if spec.m0 is not None:
        out["m0"] = _json_number(spec.m0)
    if spec.m1 is not None:
        out["m1"] = _json_number(spec.m1)
    return out


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
RAY_CUTOFF = 300.0


def _levy_integral_real(m: Callable, lam: float, limit: int) -> tuple[float, float]:
    # Split at t = 1.  On (0, 1] use -expm1(-λt), which behaves like λt and
    # tames the t^{-1-α} singularity; on [1, ∞) the integrand is bounded.
    def integrand(t):
        return -math.expm1(-lam * t) * float(m(t))

    v1, e1 = integrate.quad(integrand, 0.0, 1.0, limit=limit, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL)
    v2, e2 = integrate.quad(integrand, 1.0, np.inf, limit=limit, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL)
    return v1 + v2, e1 + e2


def eval_f(spec: BernsteinSpec, lam, *, quad_limit: int = 200, max_error: float = 1e-8):
    """Evaluate ``f(λ)`` for real ``λ > 0`` (scalar or array)."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(~np.isfinite(lam_arr)) or np.any(lam_arr <= 0.0):
        raise DomainError(f"eval_f requires lambda > 0, got {lam!r}")
    if isinstance(spec, Stable):
        out = np.power(lam_arr, spec.alpha)
    elif isinstance(spec, TemperedStable):
        a, th = spec.alpha, spec.theta
        # (λ+θ)^α - θ^α written as θ^α·expm1(α·log1p(λ/θ)) to avoid
        # cancellation at small λ.
        out = th**a * np.expm1(a * np.log1p(lam_arr / th))
    else:
        flat = []
        for lv in lam_arr.ravel():
            val, err = _levy_integral_real(spec.levy_density, float(lv), quad_limit)
            if not np.isfinite(val) or err > max_error * max(1.0, abs(val)):
                raise NumericalError(
                    "Lévy integral did not converge within budget",
                    {"lambda": float(lv), "value": val, "error_estimate": err},
                )
            flat.append(spec.a + spec.b * lv + val)
        out = np.asarray(flat).reshape(lam_arr.shape)
    return float(out) if np.ndim(out) == 0 else out


def eval_f_complex(spec: BernsteinSpec, s, *, quad_limit: int = 200):
    """Evaluate ``f(s)`` for complex ``s`` off the negative real axis.

    Closed forms are used for the built-in families.  For an explicit
    triplet the Lévy integral is taken along the rotated ray
    ``t = τ e^{-iψ}`` with ``ψ = arg(s)/2``, on which both ``e^{-st}`` and a
    completely monotone ``m`` decay; this is the analytic continuation of
    the real-axis integral.
    """
    s_arr = np.asarray(s, dtype=complex)
    if isinstance(spec, Stable):
        return np.power(s_arr, spec.alpha)
    if isinstance(spec, TemperedStable):
        a, th = spec.alpha, spec.theta
        return th**a * np.expm1(a * np.log1p(s_arr / th))
    flat = s_arr.ravel()
    rot = np.exp(-0.5j * np.angle(flat))
    m = spec.levy_density

    # τ ∈ (0, 1] is mapped by τ = e^{-v}; v is cut at RAY_CUTOFF where the
    # neglected piece is O(|s| e^{-RAY_CUTOFF (1 - α_loc)}).
    def inner(v):
        tau = math.exp(-v)
        t = tau * rot
        return -np.expm1(-flat * t) * m(t) * rot * tau

    def outer(tau):
        t = tau * rot
        return -np.expm1(-flat * t) * m(t) * rot

    kw = dict(epsabs=1e-14, epsrel=1e-12, norm="max", limit=quad_limit * 50)
    with np.errstate(all="ignore"):
        v1, e1 = integrate.quad_vec(inner, 0.0, RAY_CUTOFF, **kw)
        v2, e2 = integrate.quad_vec(outer, 1.0, np.inf, **kw)
    val = spec.a + spec.b * flat + v1 + v2
    if not np.all(np.isfinite(val)):
        raise NumericalError("complex Lévy integral produced non-finite values",
                             {"error_estimate": float(e1 + e2)})
    return val.reshape(s_arr.shape)


class Conjugate:
    """Callable ``f*(λ) = λ / f(λ)``.

    ``spec`` holds the conjugate's own spec when it has a closed form
    (``Stable(α)`` conjugates to ``Stable(1 - α)``), otherwise ``None``.
    """

    def __init__(self, base: BernsteinSpec):
        self.base = base
        self.spec = Stable(1.0 - base.alpha) if isinstance(base, Stable) else None

    def __call__(self, lam):
        lam_arr = np.asarray(lam, dtype=float)
        if np.any(~np.isfinite(lam_arr)) or np.any(lam_arr <= 0.0):
            raise DomainError(f"conjugate requires lambda > 0, got {lam!r}")
        if self.spec is not None:
            return eval_f(self.spec, lam)
        f = np.asarray(eval_f(self.base, lam_arr))
        if np.any(f <= 0.0):
            raise DomainError("f vanishes at a sampled lambda; the conjugate is undefined")
        out = lam_arr / f
        return float(out) if np.ndim(out) == 0 else out


def conjugate(spec: BernsteinSpec) -> Conjugate:
    """Return the conjugate Bernstein function ``λ ↦ λ / f(λ)``."""
    return Conjugate(spec)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

#: Half-width of the undecided band around the critical power exponent.
DIVERGENCE_EPS = 0.05
#: Windows on which local power exponents of ``m`` are measured.
SMALL_T_WINDOW = (1e-10, 1e-8, 1e-6)
LARGE_T_WINDOW = (1e6, 1e8, 1e10)


@dataclass(frozen=True)
class TripletClassification:
    """Row of the Sonine-pair table with the conjugate characteristics.

    ``status`` is ``"ok"`` or ``"indeterminate"``; in the latter case
    ``row``, ``a_star`` and ``b_star`` are ``None`` and ``reason`` says which
    moment could not be decided.
    """

    row: int | None
    a_star: float | None
    b_star: float | None
    m0: float | None
    m1: float | None
    status: str = "ok"
    reason: str = ""

    def to_dict(self) -> dict:
        def enc(v):
            if v is None:
                return None
            return _json_number(v)

        out = {
            "row": self.row,
            "a_star": enc(self.a_star),
            "b_star": enc(self.b_star),
            "m0": enc(self.m0),
            "m1": enc(self.m1),
            "status": self.status,
        }
        if self.reason:
            out["reason"] = self.reason
        return out


def _local_exponent(m: Callable, window) -> float | None:
    """Least-squares slope of ``-log m`` against ``log t`` on ``window``.

    Returns ``inf`` if ``m`` underflows to 0 on the window (faster than any
    power) and ``None`` if the samples are not usable.
    """
    t = np.asarray(window, dtype=float)
    with np.errstate(all="ignore"):
        v = np.asarray([float(m(tt)) for tt in t])
    if np.all(v == 0.0):
        return math.inf
    if np.any(~np.isfinite(v)) or np.any(v <= 0.0):
        return None
    slope = np.polyfit(np.log(t), np.log(v), 1)[0]
    return float(-slope)


def _moment(m: Callable, power: int, budget: int) -> tuple[float | None, str]:
    """Decide and compute ``∫ t^power m(t) dt``; ``None`` means undecided."""
    if power == 0:
        # Integrability at infinity is implied by ∫min(1,t)m < ∞; the
        # question is the behaviour at 0, where m ~ t^{-p} needs p < 1.
        p = _local_exponent(m, SMALL_T_WINDOW)
        critical = 1.0
        if p is None:
            return None, "density not evaluable near t = 0"
        if math.isinf(p):
            pass                 # m vanishes at 0 faster than any power
        elif p >= critical + DIVERGENCE_EPS:
            return math.inf, ""
        if p > critical - DIVERGENCE_EPS:
            return None, f"local exponent {p:.4f} at t -> 0 too close to 1"
    else:
        # t·m(t) ~ t^{1-p} at infinity needs p > 2.
        p = _local_exponent(m, LARGE_T_WINDOW)
        critical = 2.0
        if p is None:
            return None, "density not evaluable at large t"
        if p <= critical - DIVERGENCE_EPS:
            return math.inf, ""
        if p < critical + DIVERGENCE_EPS:
            return None, f"local exponent {p:.4f} at t -> inf too close to 2"

    def integrand(t):
        return t**power * float(m(t))

    v1, e1 = integrate.quad(integrand, 0.0, 1.0, limit=budget, epsabs=1e-14, epsrel=1e-13)
    v2, e2 = integrate.quad(integrand, 1.0, np.inf, limit=budget, epsabs=1e-14, epsrel=1e-13)
    val, err = v1 + v2, e1 + e2
    if not np.isfinite(val) or err > 1e-10 * max(1.0, abs(val)):
        return None, f"quadrature of moment {power} did not reach budget (error {err:.3g})"
    return val, ""


def _recip(v: float) -> float:
    if v == 0.0:
        raise DomainError("reciprocal of a vanishing moment sum")
    return 0.0 if math.isinf(v) else 1.0 / v


def classify_triplet(spec: BernsteinSpec, quad_budget: int = 400,
                     m0: float | None = None, m1: float | None = None) -> TripletClassification:
    """Place ``spec`` in the eight-row table and compute ``(a*, b*)``.

    ``a* = 1/(b + m1)`` when ``a = 0`` and ``b* = 1/(a + m0)`` when
    ``b = 0`` (with ``1/∞ = 0``); the other one vanishes.  Explicit moment
    values passed here, or stored on the spec, override the automatic
    divergence heuristic.
    """
    a, b = float(spec.a), float(spec.b)
    dens = spec.levy_density
    reason = []

    if m0 is None and isinstance(spec, ExplicitTriplet):
        m0 = spec.m0
    if m1 is None and isinstance(spec, ExplicitTriplet):
        m1 = spec.m1
    if (m0 is None or m1 is None) and isinstance(spec, (Stable, TemperedStable)):
        c0, c1 = dens.moments()
        m0 = c0 if m0 is None else m0
        m1 = c1 if m1 is None else m1
    if m0 is None:
        m0, why = _moment(dens, 0, quad_budget)
        if why:
            reason.append("m0: " + why)
    if m1 is None:
        m1, why = _moment(dens, 1, quad_budget)
        if why:
            reason.append("m1: " + why)

    # The density is nonnegative, so either moment vanishing means m = 0 a.e.
    if a == 0.0 and b == 0.0 and (m0 == 0.0 or m1 == 0.0):
        raise DomainError("f vanishes identically; no Sonine pair exists")

    # The row depends only on the facts listed in the table; a moment that
    # the row does not condition on may stay undecided for the row itself.
    if a == 0.0 and b == 0.0:
        if m1 is None:
            row = None
        elif math.isinf(m1):
            row = 1
        elif m0 is None:
            row = None
        else:
            row = 2 if math.isinf(m0) else 3
    elif a > 0.0 and b == 0.0:
        row = None if m0 is None else (4 if math.isinf(m0) else 5)
    elif a == 0.0 and b > 0.0:
        row = None if m1 is None else (6 if math.isinf(m1) else 7)
    else:
        row = 8

    a_star = 0.0 if a > 0.0 else (None if m1 is None else _recip(b + m1))
    b_star = 0.0 if b > 0.0 else (None if m0 is None else _recip(a + m0))

    if row is None or a_star is None or b_star is None:
        return TripletClassification(None, None, None, m0, m1, "indeterminate", "; ".join(reason))
    return TripletClassification(row, a_star, b_star, m0, m1, "ok", "; ".join(reason))
