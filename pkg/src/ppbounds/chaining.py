"""Generic-chaining gamma functionals and the uniform tail verifier.

gamma_alpha(Psi, d) is the infimum over admissible partition sequences of
sup_psi sum_n 2^(n/alpha) diam(A_n(psi)), where level 0 is pinned to the
whole space and level n holds at most 2^(2^n) cells.  ``exact_gamma``
enumerates admissible sequences exhaustively on small spaces (with rigorous
dominance pruning: once a level may hold every singleton, refining straight
to singletons is never worse); ``greedy_gamma`` builds an admissible witness
by farthest-point splitting, so its value is always an upper bound.

``verify_uniform`` estimates the tail of sup over a finite integrand family
of |W*(mu - nu)_T| against c * u * (gamma_2 + gamma_1) and fits the smallest
constant c for which the Clopper-Pearson envelope stays below c * exp(-u/2).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DivergenceError, SizeError
from .bernstein import clopper_pearson_upper, minimal_k
from .point_process import (
    CompensatorModel,
    PredictableIntegrand,
    characteristics,
    difference_integrand,
    pathwise_integral,
    simulate,
)
from .seeding import derive_seed

__all__ = [
    "FiniteMetricSpace",
    "PartitionSequence",
    "GammaResult",
    "exact_gamma",
    "greedy_gamma",
    "chain_tail",
    "UniformReport",
    "verify_uniform",
    "family_metrics",
]

EXHAUSTIVE_CAP = 6
CHAIN_TAIL_THRESHOLD = 4 * math.log(2)


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """n labelled points with a distance matrix.

    Symmetry, zero diagonal, and nonnegativity are always enforced.  The
    triangle inequality and the implication d(i, j) = 0 => i = j can be
    waived for pseudometrics built from function classes.
    """

    points: tuple[str, ...]
    d: np.ndarray
    check_triangle: bool = True
    check_distinct: bool = True

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        n = len(self.points)
        if d.shape != (n, n):
            raise ConfigurationError(f"distance matrix must be ({n}, {n})")
        if np.any(d < 0):
            raise ConfigurationError("distances must be nonnegative")
        if np.any(np.abs(np.diagonal(d)) > 0):
            raise ConfigurationError("diagonal must be zero")
        if np.max(np.abs(d - d.T)) > 1e-12:
            raise ConfigurationError("distance matrix must be symmetric")
        if self.check_triangle:
            slack = d[:, :, None] + d[None, :, :] - d[:, None, :]
            # slack[i, j, k] = d(i,j) + d(j,k) - d(i,k)
            if slack.min() < -1e-12:
                raise ConfigurationError("triangle inequality violated")
        if self.check_distinct:
            off = d + np.eye(n)
            if np.any(off == 0):
                raise ConfigurationError("distinct points at distance zero")
        d = 0.5 * (d + d.T)
        d.flags.writeable = False
        object.__setattr__(self, "d", d)

    def __len__(self) -> int:
        return len(self.points)

    def diameter(self, cell=None) -> float:
        if cell is None:
            return float(self.d.max()) if len(self) else 0.0
        idx = np.fromiter(cell, dtype=int)
        if idx.size <= 1:
            return 0.0
        return float(self.d[np.ix_(idx, idx)].max())

    def scale(self, c: float) -> "FiniteMetricSpace":
        return FiniteMetricSpace(
            self.points, c * self.d,
            check_triangle=self.check_triangle, check_distinct=self.check_distinct,
        )

    def restrict(self, indices) -> "FiniteMetricSpace":
        idx = list(indices)
        return FiniteMetricSpace(
            tuple(self.points[i] for i in idx), self.d[np.ix_(idx, idx)],
            check_triangle=self.check_triangle, check_distinct=self.check_distinct,
        )

    def to_json(self) -> str:
        return json.dumps({"points": list(self.points), "matrix": self.d.tolist()})

    @staticmethod
    def from_json(text: str) -> "FiniteMetricSpace":
        obj = json.loads(text)
        return FiniteMetricSpace(tuple(obj["points"]), np.asarray(obj["matrix"]))


Cell = tuple[int, ...]
Partition = tuple[Cell, ...]


def _canon(cells) -> Partition:
    return tuple(sorted(tuple(sorted(c)) for c in cells))


@dataclass(frozen=True)
class PartitionSequence:
    """Nested partitions (level 0 = whole space) with doubly-exponential caps."""

    levels: tuple[Partition, ...]

    def validate(self, n_points: int) -> None:
        """Independent admissibility check: caps, refinement, level-0 cell,
        singleton final level."""
        if not self.levels:
            raise ConfigurationError("empty partition sequence")
        if self.levels[0] != (tuple(range(n_points)),):
            raise ConfigurationError("level 0 must be the whole space")
        for n, level in enumerate(self.levels):
            if len(level) > 2 ** (2**n):
                raise ConfigurationError(f"level {n} exceeds 2^(2^{n}) cells")
            covered = sorted(i for cell in level for i in cell)
            if covered != list(range(n_points)):
                raise ConfigurationError(f"level {n} is not a partition")
            if n > 0:
                parents = {}
                for ci, cell in enumerate(self.levels[n - 1]):
                    for i in cell:
                        parents[i] = ci
                for cell in level:
                    if len({parents[i] for i in cell}) != 1:
                        raise ConfigurationError(f"level {n} does not refine level {n-1}")
        if any(len(c) != 1 for c in self.levels[-1]):
            raise ConfigurationError("final level must be all singletons")

    def cell_of(self, level: int, point: int) -> Cell:
        for cell in self.levels[level]:
            if point in cell:
                return cell
        raise ConfigurationError(f"point {point} missing at level {level}")

    def to_json(self) -> str:
        return json.dumps([[list(c) for c in level] for level in self.levels])


@dataclass(frozen=True)
class GammaResult:
    """gamma value, the admissible witness achieving it, and per-point sums."""

    value: float
    witness: PartitionSequence
    per_point: dict[str, float]


def _gamma_of_sequence(space: FiniteMetricSpace, levels: tuple[Partition, ...], alpha: float):
    per_point = {}
    for p, name in enumerate(space.points):
        total = 0.0
        for n, level in enumerate(levels):
            cell = next(c for c in level if p in c)
            total += 2 ** (n / alpha) * space.diameter(cell)
        per_point[name] = total
    value = max(per_point.values()) if per_point else 0.0
    return value, per_point


def _set_partitions(elements: Cell):
    """All set partitions of ``elements`` in a deterministic order."""
    if not elements:
        yield ()
        return
    first, rest = elements[0], elements[1:]
    for sub in _set_partitions(rest):
        # put first into each existing cell, then alone
        for i in range(len(sub)):
            yield _canon(sub[:i] + ((first,) + sub[i],) + sub[i + 1:])
        yield _canon(sub + ((first,),))


def _refinements(partition: Partition, max_cells: int):
    """All refinements of ``partition`` with at most ``max_cells`` cells,
    canonically ordered, deduplicated."""
    per_cell = [sorted(set(_set_partitions(cell))) for cell in partition]
    seen = set()

    def rec(i, acc, count):
        if count > max_cells:
            return
        if i == len(per_cell):
            cand = _canon([c for part in acc for c in part])
            if cand not in seen:
                seen.add(cand)
                yield cand
            return
        for sub in per_cell[i]:
            yield from rec(i + 1, acc + [sub], count + len(sub))

    yield from rec(0, [], 0)


def _singletons(n: int) -> Partition:
    return tuple((i,) for i in range(n))


def exact_gamma(space: FiniteMetricSpace, alpha: float, max_points: int = EXHAUSTIVE_CAP) -> GammaResult:
    """Exact gamma_alpha by exhaustive enumeration of admissible sequences.

    Refuses spaces above ``max_points``.  Branches are cut by two rigorous
    prunings: a partial sum already at or above the incumbent cannot win
    (all remaining terms are nonnegative), and once the level cap admits
    every singleton the best continuation is to take them immediately.
    Ties are broken by first minimum in the canonical enumeration order.
    """
    n = len(space)
    if n > max_points:
        raise SizeError(f"exact solver capped at {max_points} points, got {n}")
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    root: Partition = (tuple(range(n)),)
    singles = _singletons(n)
    best_value = math.inf
    best_levels: tuple[Partition, ...] | None = None

    def max_diam(partition: Partition) -> float:
        return max(space.diameter(c) for c in partition)

    def rec(levels: list[Partition], partial: float):
        nonlocal best_value, best_levels
        level_n = len(levels)  # index of the next level to choose
        current = levels[-1]
        if all(len(c) == 1 for c in current):
            if partial < best_value:
                best_value = partial
                best_levels = tuple(levels)
            return
        cap = 2 ** (2**level_n)
        if cap >= n:
            # dominance: completing with singletons adds exactly 0
            cand = partial
            if cand < best_value:
                best_value = cand
                best_levels = tuple(levels) + (singles,)
            return
        for ref in _refinements(current, cap):
            add = 2 ** (level_n / alpha) * max_diam(ref)
            if partial + add < best_value:
                rec(levels + [ref], partial + add)

    rec([root], max_diam(root))
    witness = PartitionSequence(best_levels)
    witness.validate(n)
    value, per_point = _gamma_of_sequence(space, best_levels, alpha)
    return GammaResult(value, witness, per_point)


def _farthest_split(space: FiniteMetricSpace, cell: Cell) -> tuple[Cell, Cell]:
    """Split a cell in two by farthest-pair seeding; deterministic ties."""
    idx = np.fromiter(cell, dtype=int)
    sub = space.d[np.ix_(idx, idx)]
    i, j = np.unravel_index(int(np.argmax(sub)), sub.shape)
    if i > j:
        i, j = j, i
    a, b = [cell[i]], [cell[j]]
    for pos, p in enumerate(cell):
        if pos in (i, j):
            continue
        # ties go to the first seed
        (a if sub[pos, i] <= sub[pos, j] else b).append(p)
    return tuple(sorted(a)), tuple(sorted(b))


def greedy_gamma(space: FiniteMetricSpace, alpha: float) -> GammaResult:
    """Admissible witness by diameter-first farthest-point splitting.

    Each level starts from the previous one and keeps splitting its largest-
    diameter cell in two until the 2^(2^n) budget (or all singletons) is
    reached.  The value is an upper bound for exact_gamma by admissibility.
    """
    n = len(space)
    if n < 1:
        raise ConfigurationError("space must have at least one point")
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    levels: list[Partition] = [(tuple(range(n)),)]
    while any(len(c) > 1 and space.diameter(c) > 0 for c in levels[-1]):
        level_n = len(levels)
        budget = 2 ** (2**level_n)
        cells = list(levels[-1])
        while len(cells) < budget:
            splittable = [c for c in cells if len(c) > 1 and space.diameter(c) > 0]
            if not splittable:
                break
            target = max(splittable, key=lambda c: (space.diameter(c), c))
            cells.remove(target)
            cells.extend(_farthest_split(space, target))
        levels.append(_canon(cells))
    if any(len(c) > 1 for c in levels[-1]):
        # zero-diameter cells remain: finish with singletons (free)
        while True:
            level_n = len(levels)
            if 2 ** (2**level_n) >= n:
                levels.append(_singletons(n))
                break
            levels.append(levels[-1])
    witness = PartitionSequence(tuple(levels))
    witness.validate(n)
    value, per_point = _gamma_of_sequence(space, tuple(levels), alpha)
    return GammaResult(value, witness, per_point)


def chain_tail(u: float, tolerance: float = 1e-12) -> float:
    """p(u) = sum_{n>=1} 2 * 2^(2^(n+1)) * exp(-u 2^(n-1)), summed until the
    next term drops below ``tolerance``.  Diverges for u <= 4 ln 2."""
    if not u > CHAIN_TAIL_THRESHOLD:
        raise DivergenceError(f"chain tail series diverges for u <= 4 ln 2 = {CHAIN_TAIL_THRESHOLD}")
    total = 0.0
    n = 1
    while True:
        log_term = math.log(2.0) * (1 + 2 ** (n + 1)) - u * 2 ** (n - 1)
        term = math.exp(log_term)
        total += term
        if term < tolerance:
            return total
        n += 1


# ---------------------------------------------------------------------------
# uniform verification
# ---------------------------------------------------------------------------

def family_metrics(
    family: list[PredictableIntegrand],
    model: CompensatorModel,
    horizon: float,
    names: list[str] | None = None,
) -> tuple[FiniteMetricSpace, FiniteMetricSpace]:
    """(d1, d2) metric spaces over the family from pairwise differences.

    d1 is the cumulative scale functional Xi(W_i - W_j) at the horizon and
    d2 the square root of the quadratic characteristic C(W_i - W_j); both
    are exact (deterministic) for state-independent kernels, which is the
    supported case here.
    """
    names = names or [w.name for w in family]
    m = len(family)
    d1 = np.zeros((m, m))
    d2 = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            diff = difference_integrand(family[i], family[j])
            ch = characteristics(diff, model, None, horizon, 3)
            d1[i, j] = d1[j, i] = ch.xi_cumulative
            d2[i, j] = d2[j, i] = math.sqrt(ch.c)
    space1 = FiniteMetricSpace(tuple(names), d1, check_triangle=False, check_distinct=False)
    space2 = FiniteMetricSpace(tuple(names), d2, check_triangle=False, check_distinct=False)
    return space1, space2


def sup_chunk(
    family: list[PredictableIntegrand],
    model: CompensatorModel,
    horizon: float,
    seed: int,
    lo: int,
    hi: int,
) -> tuple[np.ndarray, np.ndarray]:
    """(sup |X^psi_T|, sup X^psi_T) per replicate over indices [lo, hi)."""
    sup_abs = np.empty(hi - lo)
    sup_signed = np.empty(hi - lo)
    for i in range(lo, hi):
        stream = simulate(model, horizon, derive_seed(seed, i))
        vals = [pathwise_integral(w, model, stream, horizon) for w in family]
        sup_abs[i - lo] = max(abs(v) for v in vals)
        sup_signed[i - lo] = max(vals)
    return sup_abs, sup_signed


@dataclass(frozen=True)
class UniformReport:
    """Fitted-constant verification of the uniform chaining bound."""

    gamma1: float
    gamma2: float
    common_k: float
    conditioned: bool
    u_grid: tuple[float, ...]
    fitted_c: float
    hits: tuple[int, ...]          # at the fitted c
    empirical: tuple[float, ...]
    cp99: tuple[float, ...]
    envelope: tuple[float, ...]    # fitted_c * exp(-u/2)
    mean_sup: float
    mean_bound_constant: float     # mean_sup / (gamma2 + gamma1 scale)
    tail_log_slope: float | None
    replicates: int
    gamma_solver: str


def _fit_smallest_c(
    sup_values: np.ndarray, u_grid: np.ndarray, scale: float,
    c_lo: float = 1e-9, c_hi: float = 1e9,
) -> float:
    """Smallest c with CP99(P(sup >= c u scale)) <= c exp(-u/2) on the grid.

    Raising c raises thresholds (fewer hits) and raises the envelope, so
    feasibility is monotone and bisection applies.
    """
    n = sup_values.size
    sorted_sup = np.sort(sup_values)

    def feasible(c: float) -> bool:
        for u in u_grid:
            hits = n - int(np.searchsorted(sorted_sup, c * u * scale, side="left"))
            if clopper_pearson_upper(hits, n) > c * math.exp(-u / 2):
                return False
        return True

    if not feasible(c_hi):
        return math.inf
    if feasible(c_lo):
        return c_lo
    for _ in range(200):
        mid = math.sqrt(c_lo * c_hi)
        if feasible(mid):
            c_hi = mid
        else:
            c_lo = mid
    return c_hi


def _tail_log_slope(u_grid: np.ndarray, empirical: np.ndarray) -> float | None:
    """Least-squares slope of log(empirical tail) against u where the tail
    is strictly inside (0, 1)."""
    mask = (empirical > 0) & (empirical < 1)
    if mask.sum() < 2:
        return None
    x = u_grid[mask]
    y = np.log(empirical[mask])
    x = x - x.mean()
    return float((x * y).sum() / (x * x).sum())


def verify_uniform(
    family: list[PredictableIntegrand],
    model: CompensatorModel,
    horizon: float,
    replicates: int,
    u_grid: list[float],
    seed: int,
    m_max: int = 8,
    mode: str = "instantaneous",
    max_points: int = EXHAUSTIVE_CAP,
    condition_form: str = "q",
) -> UniformReport:
    """Estimate P(sup |X^psi_T| >= c u (gamma2 + gamma1)) and fit minimal c.

    Conditions: every member must pass minimal_k with a common K
    (``condition_form="q"``; the literal form replaces the moment condition
    with C^m <= (m!/2) K^(m-2) C, which constrains C itself).  gamma values
    come from the exact solver when the family fits under ``max_points``,
    else from the greedy witness.
    """
    if not family:
        raise ConfigurationError("family must be non-empty")
    if condition_form not in ("q", "literal"):
        raise ConfigurationError(f"unknown condition_form {condition_form!r}")
    u_arr = np.asarray(sorted(u_grid), dtype=float)
    verdicts = [minimal_k(w, model, horizon, m_max=m_max, mode=mode) for w in family]
    common_k = max(v.k_hat for v in verdicts)
    conditioned = all(v.feasible for v in verdicts)
    if condition_form == "literal":
        for w in family:
            ch = characteristics(w, model, None, horizon, 3)
            for m in range(3, m_max + 1):
                need = (2.0 * ch.c ** (m - 1) / math.factorial(m)) ** (1.0 / (m - 2)) if ch.c > 0 else 0.0
                common_k = max(common_k, need)

    d1_space, d2_space = family_metrics(family, model, horizon)
    solver = "exact" if len(family) <= max_points else "greedy"
    if solver == "exact":
        gamma1 = exact_gamma(d1_space, 1.0, max_points)
        gamma2 = exact_gamma(d2_space, 2.0, max_points)
    else:
        gamma1 = greedy_gamma(d1_space, 1.0)
        gamma2 = greedy_gamma(d2_space, 2.0)
    scale = gamma2.value + gamma1.value

    sup_abs, sup_signed = sup_chunk(family, model, horizon, seed, 0, replicates)

    fitted_c = _fit_smallest_c(sup_abs, u_arr, scale) if scale > 0 else 0.0
    if math.isfinite(fitted_c) and fitted_c > 0:
        hits = np.array([int(np.count_nonzero(sup_abs >= fitted_c * u * scale)) for u in u_arr])
    else:
        hits = np.array([int(np.count_nonzero(sup_abs >= u * scale)) for u in u_arr])
    emp = hits / replicates
    cp = np.array([clopper_pearson_upper(int(h), replicates) for h in hits])
    env = fitted_c * np.exp(-u_arr / 2) if math.isfinite(fitted_c) else np.full_like(u_arr, np.inf)
    mean_sup = float(sup_signed.mean())
    return UniformReport(
        gamma1=gamma1.value,
        gamma2=gamma2.value,
        common_k=common_k,
        conditioned=conditioned,
        u_grid=tuple(float(u) for u in u_arr),
        fitted_c=float(fitted_c),
        hits=tuple(int(h) for h in hits),
        empirical=tuple(float(e) for e in emp),
        cp99=tuple(float(v) for v in cp),
        envelope=tuple(float(v) for v in env),
        mean_sup=mean_sup,
        mean_bound_constant=mean_sup / scale if scale > 0 else 0.0,
        tail_log_slope=_tail_log_slope(u_arr, emp),
        replicates=replicates,
        gamma_solver=solver,
    )
