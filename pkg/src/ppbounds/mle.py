"""Grid maximum likelihood on finite supports and the Hellinger-rate check.

A parametric family is a table of probability vectors f_theta over a finite
support with a designated true parameter theta0 (f_theta0 > 0 everywhere).
The transformed likelihood-ratio class g_theta = sqrt(f_theta / f_theta0) - 1
carries the metrics d1 = E|g_i - g_j| and d2 = L2(f_theta0) distance; its
chaining functionals control the rate at which the squared Hellinger
distance of the grid MLE decays, and every ingredient here is an exact
finite sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError
from .bernstein import clopper_pearson_upper
from .chaining import EXHAUSTIVE_CAP, FiniteMetricSpace, exact_gamma, greedy_gamma
from .seeding import derive_seed

__all__ = [
    "ParametricFamily",
    "bernoulli_grid",
    "categorical_family",
    "hellinger_squared",
    "fit",
    "fit_counts",
    "GClass",
    "g_class",
    "MleRateReport",
    "verify_rate",
]

PROB_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ParametricFamily:
    """Finite-support densities f_theta over an ordered parameter grid."""

    support: tuple[float, ...]
    thetas: tuple[float, ...]
    densities: np.ndarray  # (n_theta, n_support)
    theta0_index: int

    def __post_init__(self):
        dens = np.asarray(self.densities, dtype=float)
        n_t, n_s = len(self.thetas), len(self.support)
        if dens.shape != (n_t, n_s):
            raise ConfigurationError(f"densities must be ({n_t}, {n_s})")
        if np.any(dens < 0):
            raise ConfigurationError("densities must be nonnegative")
        if np.any(np.abs(dens.sum(axis=1) - 1.0) > PROB_TOL):
            raise ConfigurationError("each f_theta must sum to 1 within 1e-12")
        if not 0 <= self.theta0_index < n_t:
            raise ConfigurationError("theta0_index out of range")
        if np.any(dens[self.theta0_index] <= 0):
            raise ConfigurationError("f_theta0 must be strictly positive on the support")
        dens.flags.writeable = False
        object.__setattr__(self, "densities", dens)

    @property
    def f0(self) -> np.ndarray:
        return self.densities[self.theta0_index]

    def __len__(self) -> int:
        return len(self.thetas)


def bernoulli_grid(thetas, theta0: float) -> ParametricFamily:
    """Bernoulli densities on support (0, 1) over a parameter grid."""
    thetas = tuple(float(t) for t in thetas)
    if any(not 0 < t < 1 for t in thetas):
        raise ConfigurationError("Bernoulli parameters must lie in (0, 1)")
    dens = np.array([[1 - t, t] for t in thetas])
    gaps = np.abs(np.asarray(thetas) - float(theta0))
    idx = int(np.argmin(gaps))
    if gaps[idx] > 1e-9:
        raise ConfigurationError(f"theta0={theta0} is not on the parameter grid")
    return ParametricFamily((0.0, 1.0), thetas, dens, idx)


def categorical_family(support, density_rows, theta0_index: int) -> ParametricFamily:
    """Explicit density table over an arbitrary finite support."""
    rows = np.asarray(density_rows, dtype=float)
    thetas = tuple(float(i) for i in range(rows.shape[0]))
    return ParametricFamily(tuple(float(s) for s in support), thetas, rows, theta0_index)


def hellinger_squared(f, g) -> float:
    """Squared Hellinger distance 1 - sum_i sqrt(f_i g_i) between probability
    vectors on a shared support; symmetric, in [0, 1], zero iff f = g."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape or f.ndim != 1:
        raise DataError("hellinger_squared needs two vectors on the same support")
    for v, name in ((f, "f"), (g, "g")):
        if np.any(v < 0) or abs(float(v.sum()) - 1.0) > PROB_TOL:
            raise DataError(f"{name} is not a probability vector")
    return float(min(1.0, max(0.0, 1.0 - np.sqrt(f * g).sum())))


def _support_indices(support: tuple[float, ...], values) -> np.ndarray:
    arr = np.asarray(support, dtype=float)
    vals = np.asarray(values, dtype=float)
    sorter = np.argsort(arr)
    pos = np.searchsorted(arr[sorter], vals)
    pos = np.minimum(pos, arr.size - 1)
    idx = sorter[pos]
    if np.any(arr[idx] != vals):
        raise DataError("sample value outside the support")
    return idx


def fit_counts(counts: np.ndarray, family: ParametricFamily) -> int:
    """Grid MLE from the sufficient statistic (per-support-point counts).

    Parameters hitting a zero density on an observed point are excluded;
    ties go to the smallest grid index (np.argmax takes the first maximum).
    """
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (len(family.support),) or counts.sum() <= 0:
        raise DataError("counts must cover the support and be non-empty")
    # log 1 = 0 placeholders keep zero-density points inert where counts are 0
    logf = np.log(np.where(family.densities > 0, family.densities, 1.0))
    excluded = np.any((family.densities <= 0) & (counts > 0), axis=1)
    loglik = np.where(excluded, -np.inf, counts @ logf.T)
    if np.all(np.isneginf(loglik)):
        raise DataError("every theta is excluded by a zero-density observation")
    return int(np.argmax(loglik))


def fit(sample, family: ParametricFamily) -> int:
    """Grid MLE from raw support values; see ``fit_counts``."""
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise DataError("sample must be non-empty")
    idx = _support_indices(family.support, sample)
    counts = np.bincount(idx, minlength=len(family.support)).astype(float)
    return fit_counts(counts, family)


@dataclass(frozen=True, eq=False)
class GClass:
    """Tabulated g_theta = sqrt(f_theta / f_theta0) - 1 with its metrics and
    the smallest moment-growth constant."""

    table: np.ndarray  # (n_theta, n_support)
    d1: FiniteMetricSpace
    d2: FiniteMetricSpace
    k_hat: float
    binding_theta: int
    m_max: int


def g_class(family: ParametricFamily, m_max: int = 8) -> GClass:
    """Build the likelihood-ratio class and certify its moment conditions.

    d1(i, j) = E0|g_i - g_j|, d2(i, j) = sqrt(E0 (g_i - g_j)^2); the
    condition constant is the smallest K with E0|g| <= K and
    E0|g|^m <= (m!/2) K^(m-2) E0 g^2 for all thetas up to m_max.
    """
    if m_max < 3:
        raise ConfigurationError("m_max must be >= 3")
    f0 = family.f0
    g = np.sqrt(family.densities / f0) - 1.0
    n_t = len(family)
    d1 = np.zeros((n_t, n_t))
    d2 = np.zeros((n_t, n_t))
    for i in range(n_t):
        for j in range(i + 1, n_t):
            diff = g[i] - g[j]
            d1[i, j] = d1[j, i] = float(f0.dot(np.abs(diff)))
            d2[i, j] = d2[j, i] = math.sqrt(float(f0.dot(diff**2)))
    names = tuple(f"g({t})" for t in family.thetas)
    k_hat, binding = 0.0, family.theta0_index
    for i in range(n_t):
        absg = np.abs(g[i])
        second = float(f0.dot(absg**2))
        k_theta = float(f0.dot(absg))
        for m in range(3, m_max + 1):
            mom = float(f0.dot(absg**m))
            if mom > 0:
                if second <= 0:
                    raise ConfigurationError("positive |g| moment with zero second moment")
                k_theta = max(k_theta, (2.0 * mom / (math.factorial(m) * second)) ** (1.0 / (m - 2)))
        if k_theta > k_hat:
            k_hat, binding = k_theta, i
    return GClass(
        table=g,
        d1=FiniteMetricSpace(names, d1, check_triangle=False, check_distinct=False),
        d2=FiniteMetricSpace(names, d2, check_triangle=False, check_distinct=False),
        k_hat=k_hat,
        binding_theta=binding,
        m_max=m_max,
    )


@dataclass(frozen=True)
class MleRateReport:
    """Hellinger-rate campaign over a grid of sample sizes."""

    n_grid: tuple[int, ...]
    u_grid: tuple[float, ...]
    replicates: int
    gamma1: float
    gamma2: float
    k_hat: float
    gamma_solver: str
    medians: tuple[float, ...]
    means: tuple[float, ...]
    quantiles: tuple[tuple[float, float, float], ...]  # (q10, q50, q90) per n
    medians_nonincreasing: bool
    decaying_range: tuple[int, ...]       # n values over which the median strictly decays
    loglog_slope: float | None
    fitted_c: float
    proof_inequality_violations: int
    tail_rows: tuple[tuple[float, float, float, float, float], ...]  # (n, u, emp, cp99, envelope)


def _envelope(c: float, beta: float) -> float:
    """c * exp(-beta / c) with infinities resolved the conservative way."""
    if c <= 0:
        return 1.0
    if not math.isfinite(beta):
        return 0.0
    if not math.isfinite(c):
        return math.inf
    return c * math.exp(-beta / c)


def _solve_c(target: float, beta: float, c_hi: float = 1e12) -> float:
    """Smallest c with c * exp(-beta / c) >= target (the map is increasing)."""
    if target <= 0:
        return 0.0
    lo, hi = 1e-12, c_hi
    if hi * math.exp(-beta / hi) < target:
        return math.inf
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if mid * math.exp(-beta / mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def verify_rate(
    family: ParametricFamily,
    n_grid: list[int],
    u_grid: list[float],
    replicates: int,
    seed: int,
    m_max: int = 8,
    max_points: int = EXHAUSTIVE_CAP,
) -> MleRateReport:
    """Monte Carlo distribution of h^2(f_thetahat, f_theta0) over n_grid.

    Per replicate the sample reduces to its per-support-point counts (one
    multinomial draw), the MLE is fitted on the grid, and the pathwise
    proof inequality

        (1/n) sum_i g_thetahat(x_i) + h^2 >= h^2

    is checked exactly.  The fitted constant is the smallest C with every
    CP99 upper bound below C exp(-n u / (2 C (sqrt(n) gamma2 + gamma1))).
    """
    gc = g_class(family, m_max=m_max)
    solver = "exact" if len(family) <= max_points else "greedy"
    if solver == "exact":
        g1 = exact_gamma(gc.d1, 1.0, max_points)
        g2 = exact_gamma(gc.d2, 2.0, max_points)
    else:
        g1 = greedy_gamma(gc.d1, 1.0)
        g2 = greedy_gamma(gc.d2, 2.0)

    h2_of_theta = np.array(
        [hellinger_squared(family.densities[i], family.f0) for i in range(len(family))]
    )
    f0 = family.f0
    medians, means = [], []
    violations = 0
    tail_rows: list[tuple[float, float, float, float, float]] = []
    per_point_c: list[float] = []
    u_arr = np.asarray(sorted(u_grid), dtype=float)
    for n_idx, n in enumerate(n_grid):
        h2_samples = np.empty(replicates)
        for i in range(replicates):
            rng = np.random.Generator(np.random.PCG64(derive_seed(seed, n_idx * replicates + i)))
            counts = rng.multinomial(n, f0).astype(float)
            theta_hat = fit_counts(counts, family)
            h2 = float(h2_of_theta[theta_hat])
            h2_samples[i] = h2
            lhs = float(counts.dot(gc.table[theta_hat])) / n + h2
            if lhs < h2 - 1e-12:
                violations += 1
        medians.append(float(np.median(h2_samples)))
        means.append(float(h2_samples.mean()))
        sorted_h2 = np.sort(h2_samples)
        for u in u_arr:
            hits = replicates - int(np.searchsorted(sorted_h2, u, side="left"))
            cp = clopper_pearson_upper(hits, replicates)
            denom = 2.0 * (math.sqrt(n) * g2.value + g1.value)
            beta = n * u / denom if denom > 0 else math.inf
            per_point_c.append(_solve_c(cp, beta) if hits > 0 or denom > 0 else 0.0)
            tail_rows.append((float(n), float(u), hits / replicates, cp, beta))
    fitted_c = max(per_point_c) if per_point_c else 0.0
    rows = tuple(
        (n, u, emp, cp, _envelope(fitted_c, beta))
        for (n, u, emp, cp, beta) in tail_rows
    )

    med = np.asarray(medians)
    nonincreasing = bool(np.all(np.diff(med) <= 1e-15))
    decaying: list[int] = []
    for i, n in enumerate(n_grid):
        if med[i] <= 0:
            break
        if i == 0 or med[i] < med[i - 1]:
            decaying.append(n)
        else:
            break
    slope = None
    if len(decaying) >= 2:
        xs = np.log(np.asarray(decaying, dtype=float))
        ys = np.log(med[: len(decaying)])
        xs = xs - xs.mean()
        slope = float((xs * ys).sum() / (xs * xs).sum())
    return MleRateReport(
        n_grid=tuple(int(n) for n in n_grid),
        u_grid=tuple(float(u) for u in u_arr),
        replicates=replicates,
        gamma1=g1.value,
        gamma2=g2.value,
        k_hat=gc.k_hat,
        gamma_solver=solver,
        medians=tuple(medians),
        means=tuple(means),
        medians_nonincreasing=nonincreasing,
        decaying_range=tuple(decaying),
        loglog_slope=slope,
        fitted_c=float(fitted_c),
        proof_inequality_violations=violations,
        tail_rows=rows,
    )
