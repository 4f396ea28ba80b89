"""Monte Carlo engine for the censored subordinator.

Two samplers are provided.

*Path mode* (stable family) advances ``x - S_t`` in fixed time steps until a
step would cross 0.  It then restarts from the last level, which is the
undershoot.  Every step is scaled with the current level,
``h = dt (y/x0)^α``.  By self-similarity the chance of crossing within one
step is then the same at every level.  The missed pre-crossing jumps stay a
fixed small fraction of the level, even when the level approaches 0.

*Exact chain* mode samples only the space marginals.  Given the level ``y``,
the next undershoot has density ``k_1(y, ·) = μ̄(·) k(y - ·)``.  For the
stable family ``r / y ~ Beta(1-α, α)`` exactly.  Other pairs invert a
tabulated CDF of the ratio ``r / y`` on log-spaced levels.

Every path draws from its own counter-based stream
``Philox(key=seed, counter=[0, 0, 0, path_index])``.  Results are therefore
identical for any number of worker threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .bernstein import BernsteinSpec, Stable
from .errors import DomainError, NumericalError, ValidationError
from .kernels import KernelPair
from .ops import GridFunction, kernel_j_density

__all__ = [
    "SimConfig",
    "CensoredPath",
    "CensoringChain",
    "Estimate",
    "path_stream",
    "sample_stable_subordinator_value",
    "sample_stable",
    "sample_sigma_marginal",
    "simulate_censored_path",
    "run_paths",
    "sample_chain",
    "run_chains",
    "estimate_lifetime_mean",
    "estimate_potential",
    "estimate_censored_functional",
    "estimate_lifetime_laplace",
    "estimate_lifetime_mean_paths",
    "PathBatch",
    "ChainBatch",
    "write_path_dump",
    "DEFAULT_DT",
    "LEVEL_FLOOR",
]

DEFAULT_DT = 1e-2
#: Paths and chains stop once the level falls below ``LEVEL_FLOOR · x0``.
LEVEL_FLOOR = 1e-9
DEFAULT_MAX_CYCLES = 10**6
MODES = ("path", "chain")


def path_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for path ``index``."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(index)]))


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------


def _stable_alpha(spec) -> float:
    if not isinstance(spec, Stable):
        raise DomainError("path mode and exact stable sampling need the Stable family")
    return float(spec.alpha)


@dataclass(frozen=True)
class SimConfig:
    spec: BernsteinSpec
    x0: float
    dt: float = DEFAULT_DT
    n_paths: int = 10_000
    seed: int = 0
    max_cycles: int = DEFAULT_MAX_CYCLES
    mode: str = "path"
    level_floor: float | None = None

    def __post_init__(self):
        for name in ("x0", "dt"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be a finite number > 0, got {v!r}")
        for name in ("n_paths", "max_cycles"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ValidationError(f"{name} must be an integer >= 1, got {v!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be an integer in [0, 2^64), got {self.seed!r}")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "path":
            _stable_alpha(self.spec)
        if self.level_floor is not None and not (0 < self.level_floor < self.x0):
            raise ValidationError("level_floor must lie in (0, x0)")

    @property
    def floor(self) -> float:
        return LEVEL_FLOOR * self.x0 if self.level_floor is None else float(self.level_floor)


@dataclass(frozen=True)
class CensoredPath:
    """One simulated trajectory: cycle durations, undershoots, lifetime."""

    cycle_count: int
    sigma: np.ndarray
    undershoots: np.ndarray
    tau_inf: float
    terminated: bool
    functional_acc: float | None = None


@dataclass(frozen=True)
class CensoringChain:
    """Exact space-marginal chain ``y_0 = x0 > y_1 > ...`` with ``U(y_j)``."""

    levels: np.ndarray
    expected_cycle_times: np.ndarray
    terminated: bool


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo estimate with its standard error and run metadata."""

    estimate: float
    stderr: float
    n: int
    mode: str
    dt: float | None
    seed: int
    n_terminated: int
    extra: dict = field(default_factory=dict)

    @property
    def terminated_fraction(self) -> float:
        return self.n_terminated / self.n if self.n else 0.0

    def to_dict(self) -> dict:
        out = {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n": self.n,
            "mode": self.mode,
            "dt": self.dt,
            "seed": self.seed,
            "n_terminated": self.n_terminated,
            "terminated_fraction": self.terminated_fraction,
        }
        out.update(self.extra)
        return out


def _mean_stderr(v: np.ndarray) -> tuple[float, float]:
    n = len(v)
    if n == 0:
        return math.nan, math.nan
    m = float(np.mean(v))
    s = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return m, s


# ---------------------------------------------------------------------------
# Compiled kernels
# ---------------------------------------------------------------------------


@numba.njit(nogil=True, cache=True)
def _stable_unit(rng, alpha):
    """Kanter's representation of ``S_1`` with ``E e^{-λ S_1} = e^{-λ^α}``."""
    u = 0.0
    while u == 0.0:
        u = math.pi * rng.random()
    e = rng.standard_exponential()
    a = math.sin(alpha * u) / math.sin(u) ** (1.0 / alpha)
    b = (math.sin((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha)
    return a * b


@numba.njit(nogil=True, cache=True)
def _fill_stable(rng, alpha, scale, out):
    for i in range(out.shape[0]):
        out[i] = scale * _stable_unit(rng, alpha)


@numba.njit(nogil=True, cache=True)
def _discount(lam, t, h):
    """``∫_t^{t+h} e^{λ s} ds`` without cancellation."""
    if lam == 0.0:
        return h
    return math.exp(lam * t) * math.expm1(lam * h) / lam


@numba.njit(nogil=True, cache=True)
def _path_kernel(rng, alpha, x0, dt, floor, max_cycles, lam, gx, gv, first_only,
                 sig_out, und_out):
    """Simulate one censored path.

    Returns ``(cycles, tau, functional, terminated)``.  ``sig_out`` and
    ``und_out`` receive the first ``len(sig_out)`` cycles.  ``gx, gv`` hold
    the functional ``g`` for linear interpolation (``gx`` empty: no
    functional).
    """
    use_g = gx.shape[0] > 0
    inv_alpha = 1.0 / alpha
    level = x0
    t = 0.0
    acc = 0.0
    cycles = 0
    nrec = sig_out.shape[0]
    while level >= floor:
        if cycles >= max_cycles:
            return cycles, t, acc, False
        y = level
        sigma = 0.0
        gy = np.interp(y, gx, gv) if use_g else 0.0
        while True:
            h = dt * (y / x0) ** alpha
            inc = h**inv_alpha * _stable_unit(rng, alpha)
            if inc >= y:
                # The crossing happens somewhere inside this step.
                if use_g:
                    acc += gy * _discount(lam, t + sigma, 0.5 * h)
                sigma += 0.5 * h
                break
            if use_g:
                acc += gy * _discount(lam, t + sigma, h)
            y -= inc
            sigma += h
            if use_g:
                gy = np.interp(y, gx, gv)
        if cycles < nrec:
            sig_out[cycles] = sigma
            und_out[cycles] = y
        t += sigma
        level = y
        cycles += 1
        if first_only:
            return cycles, t, acc, True
    return cycles, t, acc, True


@numba.njit(nogil=True, cache=True)
def _stable_chain_kernel(rng, alpha, x0, floor, max_cycles, out):
    """Exact chain for the stable family; ``out`` receives the levels."""
    level = x0
    n = 0
    cap = out.shape[0]
    s = 0.0
    g1 = math.gamma(1.0 + alpha)
    while level >= floor and n < max_cycles:
        if n < cap:
            out[n] = level
        s += level**alpha / g1
        level *= rng.beta(1.0 - alpha, alpha)
        n += 1
    return n, s, level < floor


@numba.njit(nogil=True, cache=True)
def _ratio_quantile(u, mesh, cdf):
    """Invert a CDF tabulated on ``mesh`` by linear interpolation."""
    lo = 0
    hi = cdf.shape[0] - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cdf[mid] <= u:
            lo = mid
        else:
            hi = mid
    d = cdf[hi] - cdf[lo]
    w = (u - cdf[lo]) / d if d > 0 else 0.5
    return mesh[lo] + w * (mesh[hi] - mesh[lo])


@numba.njit(nogil=True, cache=True)
def _table_chain_kernel(rng, log_levels, mesh, cdfs, x0, floor, max_cycles, out):
    """Chain for tabulated pairs; ratio quantiles interpolated in ``log y``."""
    level = x0
    n = 0
    cap = out.shape[0]
    nl = log_levels.shape[0]
    while level >= floor and n < max_cycles:
        if n < cap:
            out[n] = level
        u = rng.random()
        ly = math.log(level)
        if ly <= log_levels[0]:
            i, w = 0, 0.0
        elif ly >= log_levels[nl - 1]:
            i, w = nl - 2, 1.0
        else:
            i = np.searchsorted(log_levels, ly) - 1
            w = (ly - log_levels[i]) / (log_levels[i + 1] - log_levels[i])
        r0 = _ratio_quantile(u, mesh, cdfs[i])
        r1 = _ratio_quantile(u, mesh, cdfs[i + 1])
        ratio = (1.0 - w) * r0 + w * r1
        if ratio <= 0.0:
            ratio = 1e-300
        elif ratio >= 1.0:
            ratio = 1.0 - 1e-16
        level *= ratio
        n += 1
    return n, level < floor


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def sample_stable_subordinator_value(alpha: float, t: float, rng: np.random.Generator) -> float:
    """One draw of ``S_t`` for ``f(λ) = λ^α``, using ``S_t = t^{1/α} S_1``."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if not t > 0:
        raise DomainError("t must be > 0")
    return float(t ** (1.0 / alpha) * _stable_unit(rng, float(alpha)))


def sample_stable(alpha: float, t: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent draws of ``S_t``."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if not t > 0:
        raise DomainError("t must be > 0")
    out = np.empty(int(size))
    _fill_stable(rng, float(alpha), t ** (1.0 / alpha), out)
    return out


def sample_sigma_marginal(alpha: float, y: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Exact draws of a cycle duration from level ``y``: ``(y / S_1)^α``."""
    return (y / sample_stable(alpha, 1.0, rng, size)) ** alpha


def _g_arrays(g):
    if g is None:
        return np.empty(0), np.empty(0)
    if not isinstance(g, GridFunction):
        raise ValidationError("g must be a GridFunction")
    return np.ascontiguousarray(g.x), np.ascontiguousarray(g.values)


def _check_g_covers(g, x0):
    if g is not None and g.grid.T < x0 * (1 - 1e-12):
        raise ValidationError("g must be defined on [0, x0]")


def simulate_censored_path(config: SimConfig, lam: float | None = None, g: GridFunction | None = None,
                           rng_stream: np.random.Generator | int = 0, record: int = 4096) -> CensoredPath:
    """Simulate one path in path mode.

    ``rng_stream`` is a generator or a path index into the configured seed.
    The first ``record`` cycles are returned.
    """
    alpha = _stable_alpha(config.spec)
    _check_g_covers(g, config.x0)
    rng = rng_stream if isinstance(rng_stream, np.random.Generator) else path_stream(config.seed, rng_stream)
    gx, gv = _g_arrays(g)
    sig = np.empty(record)
    und = np.empty(record)
    c, tau, acc, term = _path_kernel(rng, alpha, float(config.x0), float(config.dt), config.floor,
                                     int(config.max_cycles), float(lam or 0.0), gx, gv, False, sig, und)
    k = min(c, record)
    return CensoredPath(int(c), sig[:k].copy(), und[:k].copy(), float(tau), bool(term),
                        float(acc) if g is not None else None)


@dataclass(frozen=True)
class PathBatch:
    """Per-path results of :func:`run_paths`, in path-index order."""

    cycles: np.ndarray
    tau: np.ndarray
    functional: np.ndarray
    terminated: np.ndarray
    sigma: np.ndarray        # (n, record) leading cycle durations, NaN-padded
    undershoots: np.ndarray  # (n, record)


def _split(n, threads):
    threads = max(1, min(int(threads), n))
    edges = np.linspace(0, n, threads + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_paths(config: SimConfig, lam: float = 0.0, g: GridFunction | None = None,
              threads: int = 1, first_only: bool = False, record: int = 1) -> PathBatch:
    """Simulate ``config.n_paths`` paths; ``record`` cycles kept per path."""
    alpha = _stable_alpha(config.spec)
    _check_g_covers(g, config.x0)
    n = config.n_paths
    gx, gv = _g_arrays(g)
    cycles = np.zeros(n, dtype=np.int64)
    tau = np.zeros(n)
    func = np.zeros(n)
    term = np.zeros(n, dtype=bool)
    sig = np.full((n, record), np.nan)
    und = np.full((n, record), np.nan)
    args = (alpha, float(config.x0), float(config.dt), config.floor, int(config.max_cycles),
            float(lam), gx, gv, bool(first_only))

    def work(lo, hi):
        for i in range(lo, hi):
            rng = path_stream(config.seed, i)
            cycles[i], tau[i], func[i], term[i] = _path_kernel(rng, *args, sig[i], und[i])

    _run_workers(work, n, threads)
    return PathBatch(cycles, tau, func, term, sig, und)


def _run_workers(work, n, threads):
    parts = _split(n, threads)
    if len(parts) == 1:
        work(*parts[0])
        return
    with ThreadPoolExecutor(max_workers=len(parts)) as ex:
        for f in [ex.submit(work, a, b) for a, b in parts]:
            f.result()


# -- exact chains ------------------------------------------------------------

#: Ratio tables for non-stable pairs use this many levels per decade.
TABLE_LEVELS_PER_DECADE = 4


class _RatioTable:
    """CDF of ``r / y`` under ``k_1(y, ·)`` on log-spaced levels ``y``."""

    def __init__(self, pair: KernelPair, x0: float, floor: float):
        decades = max(1.0, math.log10(x0 / floor))
        nl = int(math.ceil(decades * TABLE_LEVELS_PER_DECADE)) + 1
        levels = np.geomspace(floor, x0, nl)
        mesh, cdfs = None, []
        for y in levels:
            d = kernel_j_density(pair, 1, float(y), 1)
            if not (abs(d.mass - 1.0) < 1e-4) or not np.all(np.diff(d.cdf) >= -1e-15):
                raise NumericalError("inverse-CDF table failed: k_1 is not a probability density",
                                     {"level": float(y), "mass": float(d.mass)})
            ratio = d.cdf_r / y
            if mesh is None:
                mesh = ratio
            elif len(ratio) != len(mesh) or not np.allclose(ratio, mesh, rtol=1e-9, atol=1e-15):
                raise NumericalError("inverse-CDF table failed: level meshes differ", {"level": float(y)})
            c = np.maximum.accumulate(d.cdf / d.cdf[-1])
            cdfs.append(c)
        self.log_levels = np.log(levels)
        self.mesh = np.ascontiguousarray(mesh)
        self.cdfs = np.ascontiguousarray(np.array(cdfs))


_TABLES: dict = {}


def _ratio_table(pair, x0, floor):
    key = (id(pair), float(x0), float(floor))
    if key not in _TABLES:
        _TABLES.clear()
        _TABLES[key] = (_RatioTable(pair, x0, floor), pair)
    return _TABLES[key][0]


def _chain_levels(pair, x0, rng, floor, max_cycles, buf):
    spec = pair.spec
    if isinstance(spec, Stable):
        n, _, term = _stable_chain_kernel(rng, float(spec.alpha), float(x0), floor, max_cycles, buf)
    else:
        t = _ratio_table(pair, x0, floor)
        n, term = _table_chain_kernel(rng, t.log_levels, t.mesh, t.cdfs, float(x0), floor, max_cycles, buf)
    return int(n), bool(term)


def sample_chain(pair: KernelPair, x0: float, rng_stream: np.random.Generator | int = 0,
                 level_floor: float | None = None, seed: int = 0,
                 max_cycles: int = DEFAULT_MAX_CYCLES) -> CensoringChain:
    """Exact space-marginal chain from ``x0`` until the level drops below the floor."""
    if not x0 > 0:
        raise ValidationError("x0 must be > 0")
    floor = LEVEL_FLOOR * x0 if level_floor is None else float(level_floor)
    rng = rng_stream if isinstance(rng_stream, np.random.Generator) else path_stream(seed, rng_stream)
    buf = np.empty(1 << 16)
    n, term = _chain_levels(pair, x0, rng, floor, max_cycles, buf)
    levels = buf[: min(n, len(buf))].copy()
    return CensoringChain(levels, np.asarray(pair.P(levels)), term)


@dataclass(frozen=True)
class ChainBatch:
    lengths: np.ndarray
    lifetime_mean: np.ndarray   # Σ_j U(y_j) per chain
    first: np.ndarray           # y_1 per chain
    terminated: np.ndarray


def run_chains(pair: KernelPair, x0: float, n: int, seed: int = 0, threads: int = 1,
               level_floor: float | None = None, max_cycles: int = DEFAULT_MAX_CYCLES) -> ChainBatch:
    """Run ``n`` exact chains with per-chain streams."""
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ValidationError("number of chains must be an integer >= 1")
    floor = LEVEL_FLOOR * x0 if level_floor is None else float(level_floor)
    lengths = np.zeros(n, dtype=np.int64)
    sums = np.zeros(n)
    first = np.full(n, np.nan)
    term = np.zeros(n, dtype=bool)
    if not isinstance(pair.spec, Stable):
        _ratio_table(pair, x0, floor)            # build once, before threads start

    def work(lo, hi):
        buf = np.empty(1 << 16)
        for i in range(lo, hi):
            m, t = _chain_levels(pair, x0, path_stream(seed, i), floor, max_cycles, buf)
            k = min(m, len(buf))
            lengths[i], term[i] = m, t
            sums[i] = float(np.sum(pair.P(buf[:k])))
            if k > 1:
                first[i] = buf[1]
            elif m == 1:
                first[i] = 0.0

    _run_workers(work, n, threads)
    return ChainBatch(lengths, sums, first, term)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def estimate_lifetime_mean(pair: KernelPair, x0: float, n_chains: int, seed: int = 0,
                           threads: int = 1) -> Estimate:
    """``E^x[τ_∞]`` as the chain average of ``Σ_j U(y_j)`` (no time discretisation)."""
    b = run_chains(pair, x0, n_chains, seed, threads)
    m, s = _mean_stderr(b.lifetime_mean[b.terminated])
    return Estimate(m, s, int(n_chains), "chain", None, int(seed), int(b.terminated.sum()))


def _path_config(pair, x0, n_paths, seed, dt):
    return SimConfig(pair.spec, float(x0), float(dt), int(n_paths), int(seed))


def estimate_potential(pair: KernelPair, g: GridFunction, x0: float, n_paths: int, seed: int = 0,
                       dt: float = DEFAULT_DT, threads: int = 1) -> Estimate:
    """First-cycle functional ``E^x[∫_0^{τ_1} g(x - S_s) ds]`` in path mode."""
    cfg = _path_config(pair, x0, n_paths, seed, dt)
    b = run_paths(cfg, 0.0, g, threads, first_only=True)
    m, s = _mean_stderr(b.functional)
    return Estimate(m, s, cfg.n_paths, "path", cfg.dt, cfg.seed, int(b.terminated.sum()))


def estimate_censored_functional(pair: KernelPair, g: GridFunction, x0: float, lam: float,
                                 n_paths: int, seed: int = 0, dt: float = DEFAULT_DT,
                                 threads: int = 1) -> Estimate:
    """``E^x[∫_0^{τ_∞} e^{λt} g(S^c_t) dt]``; non-terminated paths are excluded and counted."""
    cfg = _path_config(pair, x0, n_paths, seed, dt)
    b = run_paths(cfg, float(lam), g, threads)
    m, s = _mean_stderr(b.functional[b.terminated])
    return Estimate(m, s, cfg.n_paths, "path", cfg.dt, cfg.seed, int(b.terminated.sum()),
                    {"lambda": float(lam)})


def estimate_lifetime_laplace(pair: KernelPair, x0: float, lam: float, n_paths: int, seed: int = 0,
                              dt: float = DEFAULT_DT, threads: int = 1) -> Estimate:
    """``E^x[e^{λ τ_∞}]`` in path mode."""
    cfg = _path_config(pair, x0, n_paths, seed, dt)
    b = run_paths(cfg, 0.0, None, threads)
    m, s = _mean_stderr(np.exp(lam * b.tau[b.terminated]))
    return Estimate(m, s, cfg.n_paths, "path", cfg.dt, cfg.seed, int(b.terminated.sum()),
                    {"lambda": float(lam)})


def estimate_lifetime_mean_paths(pair: KernelPair, x0: float, n_paths: int, seed: int = 0,
                                 dt: float = DEFAULT_DT, threads: int = 1) -> Estimate:
    """``E^x[τ_∞]`` in path mode."""
    cfg = _path_config(pair, x0, n_paths, seed, dt)
    b = run_paths(cfg, 0.0, None, threads)
    m, s = _mean_stderr(b.tau[b.terminated])
    return Estimate(m, s, cfg.n_paths, "path", cfg.dt, cfg.seed, int(b.terminated.sum()))


def write_path_dump(batch: PathBatch, path) -> None:
    """CSV ``path_id, cycle, sigma, undershoot`` for the recorded cycles."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "cycle", "sigma", "undershoot"])
        for i in range(batch.sigma.shape[0]):
            k = int(min(batch.cycles[i], batch.sigma.shape[1]))
            for c in range(k):
                w.writerow([i, c + 1, repr(float(batch.sigma[i, c])), repr(float(batch.undershoots[i, c]))])
