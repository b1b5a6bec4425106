"""Functional-index empirical processes for finite-state time series.

A bounded function psi of an adapted stationary series (Y_k) induces the
discrete-time martingale

    X_n = sum_{k<=n} (psi(Y_k) - E[psi(Y_k) | F_{k-1}]),

which is exactly the compensated integral of psi under the lattice
embedding T_k = k, a = 1, mark kernel = the series law.  The module builds
that embedding, computes the per-step metrics d1/d2 of a finite function
class, checks the raw-moment growth conditions on psi and -psi, and runs
the tail verifications: single-psi dominance via the Bernstein verifier and
the uniform bound with the sqrt(n) gamma_2 + n gamma_1 scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError
from .bernstein import TailReport, clopper_pearson_upper, mc_tail_verify
from .chaining import (
    EXHAUSTIVE_CAP,
    FiniteMetricSpace,
    _fit_smallest_c,
    _tail_log_slope,
    exact_gamma,
    greedy_gamma,
)
from .point_process import (
    AtomModel,
    EventStream,
    MarkSpace,
    PredictableIntegrand,
    simulate,
    table_integrand,
)
from .seeding import derive_seed

__all__ = [
    "TimeSeriesModel",
    "FunctionClass",
    "simulate_series",
    "index_process",
    "ClassMetrics",
    "class_metrics",
    "ConditionReport",
    "check_conditions",
    "verify_tail",
    "verify_uniform_tail",
    "UniformTailReport",
]

STATIONARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TimeSeriesModel:
    """Finite-alphabet series: i.i.d. (probability vector) or Markov
    (row-stochastic transition matrix).

    Markov chains start from ``initial`` when given, else from the
    stationary distribution (power iteration to 1e-12).
    """

    alphabet: tuple[float, ...]
    law: np.ndarray
    initial: np.ndarray | None = None

    def __post_init__(self):
        alphabet = tuple(float(a) for a in self.alphabet)
        if len(set(alphabet)) != len(alphabet) or not alphabet:
            raise ConfigurationError("alphabet must be non-empty with distinct values")
        object.__setattr__(self, "alphabet", alphabet)
        law = np.asarray(self.law, dtype=float)
        n = len(alphabet)
        if law.ndim == 1:
            _check_prob(law, n, "law")
        elif law.ndim == 2 and law.shape == (n, n):
            for row in law:
                _check_prob(row, n, "transition row")
        else:
            raise ConfigurationError("law must be a probability vector or square matrix")
        law.flags.writeable = False
        object.__setattr__(self, "law", law)
        if self.initial is not None:
            init = np.asarray(self.initial, dtype=float)
            _check_prob(init, n, "initial distribution")
            init.flags.writeable = False
            object.__setattr__(self, "initial", init)

    @property
    def is_markov(self) -> bool:
        return self.law.ndim == 2

    def stationary(self) -> np.ndarray:
        """Stationary distribution (the law itself for i.i.d. models)."""
        if not self.is_markov:
            return self.law
        pi = np.full(len(self.alphabet), 1.0 / len(self.alphabet))
        for _ in range(100000):
            nxt = pi @ self.law
            if np.max(np.abs(nxt - pi)) <= STATIONARY_TOL:
                return nxt / nxt.sum()
            pi = nxt
        raise ConfigurationError("stationary distribution did not converge to 1e-12")

    def start_distribution(self) -> np.ndarray:
        return self.initial if self.initial is not None else self.stationary()

    def conditional_rows(self) -> tuple[np.ndarray, list[float | None]]:
        """Per-step conditional laws and the states they condition on.

        Markov models: the transition rows of states carrying positive
        stationary (or initial) mass; i.i.d. models: the single law.
        """
        if not self.is_markov:
            return self.law[None, :], [None]
        start = self.start_distribution()
        reachable = (start > 0) | (self.stationary() > 0)
        states = [self.alphabet[i] for i in np.flatnonzero(reachable)]
        return self.law[np.flatnonzero(reachable)], states

    def to_atom_model(self) -> AtomModel:
        """Lattice embedding: unit spacing, sure events, kernel = law."""
        space = MarkSpace(self.alphabet)
        if self.is_markov:
            return AtomModel(1.0, 1.0, space, self.law, initial_state=self.start_distribution())
        return AtomModel(1.0, 1.0, space, self.law)


def _check_prob(v: np.ndarray, n: int, what: str) -> None:
    if v.shape != (n,):
        raise ConfigurationError(f"{what} must have length {n}")
    if np.any(v < 0) or abs(float(v.sum()) - 1.0) > STATIONARY_TOL:
        raise ConfigurationError(f"{what} is not a probability vector to 1e-12")


@dataclass(frozen=True, eq=False)
class FunctionClass:
    """Named functions alphabet -> reals with a shared uniform bound."""

    names: tuple[str, ...]
    table: np.ndarray  # (members, alphabet values)
    bound: float

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.ndim != 2 or table.shape[0] != len(self.names):
            raise ConfigurationError("table must be (members, alphabet) with one row per name")
        if np.any(np.abs(table) > self.bound * (1 + 1e-12)):
            raise ConfigurationError("a member exceeds the declared uniform bound")
        table.flags.writeable = False
        object.__setattr__(self, "table", table)

    def __len__(self) -> int:
        return len(self.names)

    def integrands(self, ts_model: TimeSeriesModel) -> list[PredictableIntegrand]:
        space = MarkSpace(ts_model.alphabet)
        return [
            table_integrand(space, row, name=name)
            for name, row in zip(self.names, self.table)
        ]

    @staticmethod
    def thresholds(ts_model: TimeSeriesModel, taus: list[float]) -> "FunctionClass":
        """Indicator members 1{y >= tau} for each threshold."""
        table = np.array([[1.0 if y >= tau else 0.0 for y in ts_model.alphabet] for tau in taus])
        return FunctionClass(tuple(f"thr({t})" for t in taus), table, 1.0)


def simulate_series(ts_model: TimeSeriesModel, n: int, seed: int) -> EventStream:
    """Y_1..Y_n drawn through the lattice embedding (one shared code path
    with the point-process simulator; marks are the series values)."""
    return simulate(ts_model.to_atom_model(), float(n), seed)


def _value_indices(alphabet: tuple[float, ...], values: np.ndarray) -> np.ndarray:
    arr = np.asarray(alphabet, dtype=float)
    sorter = np.argsort(arr)
    pos = np.searchsorted(arr[sorter], values)
    pos = np.minimum(pos, arr.size - 1)
    idx = sorter[pos]
    if np.any(arr[idx] != values):
        raise DataError("series value outside the alphabet")
    return idx


def index_process(
    series: np.ndarray | EventStream,
    psi: np.ndarray,
    ts_model: TimeSeriesModel,
    initial_state: float | None = None,
) -> np.ndarray:
    """Path X_0..X_n of the compensated partial sums, computed directly.

    ``psi`` is the value table over the alphabet.  The conditional mean is
    exact: the law itself for i.i.d. series, the transition row of the
    previous value for Markov series (the first step conditions on the
    recorded initial state).
    """
    if isinstance(series, EventStream):
        initial_state = series.initial_state if initial_state is None else initial_state
        values = series.marks
    else:
        values = np.asarray(series, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (len(ts_model.alphabet),):
        raise ConfigurationError("psi must tabulate the alphabet")
    idx = _value_indices(ts_model.alphabet, values)
    if not ts_model.is_markov:
        comp = float(ts_model.law.dot(psi))
        steps = psi[idx] - comp
    else:
        if values.size and initial_state is None:
            raise DataError("Markov series needs the initial state")
        cond = ts_model.law.dot(psi)  # per-state conditional means
        prev = np.empty(values.size, dtype=int)
        if values.size:
            prev[0] = _value_indices(ts_model.alphabet, np.array([initial_state]))[0]
            prev[1:] = idx[:-1]
        steps = psi[idx] - cond[prev]
    return np.concatenate(([0.0], np.cumsum(steps)))


@dataclass(frozen=True)
class ClassMetrics:
    """Per-step metrics of a function class; d1 is symmetrized with the raw
    asymmetric matrix kept alongside."""

    d1: FiniteMetricSpace
    d2: FiniteMetricSpace
    d1_raw: np.ndarray


def class_metrics(fclass: FunctionClass, ts_model: TimeSeriesModel, n: int = 1) -> ClassMetrics:
    """d1(i, j) = max over conditioning states of E[max(0, psi_i - psi_j)],
    d2(i, j) = max over states of sqrt(E[(psi_i - psi_j)^2]).

    The L-infinity norm over outcomes is a maximum over conditioning states,
    exact for these models; stationarity makes the step index irrelevant, so
    ``n`` only needs to be >= 1.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    rows, _ = ts_model.conditional_rows()
    m = len(fclass)
    raw = np.zeros((m, m))
    d2 = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            diff = fclass.table[i] - fclass.table[j]
            raw[i, j] = float(np.max(rows.dot(np.maximum(diff, 0.0))))
            if i < j:
                v = math.sqrt(float(np.max(rows.dot(diff**2))))
                d2[i, j] = d2[j, i] = v
    d1 = np.maximum(raw, raw.T)
    return ClassMetrics(
        d1=FiniteMetricSpace(fclass.names, d1, check_triangle=False, check_distinct=False),
        d2=FiniteMetricSpace(fclass.names, d2, check_triangle=False, check_distinct=False),
        d1_raw=raw,
    )


@dataclass(frozen=True)
class ConditionReport:
    """Raw-moment growth conditions checked on psi and -psi per state."""

    k_hat: float
    feasible: bool
    binding_member: str
    m_max: int


def check_conditions(fclass: FunctionClass, ts_model: TimeSeriesModel, m_max: int = 8) -> ConditionReport:
    """Smallest K with E[max(0, +-psi)|state] <= K and
    E[max(0, +-psi)^m|state] <= (m!/2) K^(m-2) E[psi^2|state] for all
    members, states, and 3 <= m <= m_max."""
    if m_max < 3:
        raise ConfigurationError("m_max must be >= 3")
    rows, _ = ts_model.conditional_rows()
    k_hat, binding = 0.0, fclass.names[0] if len(fclass) else ""
    for name, row_vals in zip(fclass.names, fclass.table):
        for signed in (row_vals, -row_vals):
            pos = np.maximum(signed, 0.0)
            sq = rows.dot(signed**2)
            first = rows.dot(pos)
            k_member = float(first.max())
            for m in range(3, m_max + 1):
                mom = rows.dot(pos**m)
                with np.errstate(divide="ignore", invalid="ignore"):
                    need = np.where(
                        mom > 0,
                        (2.0 * mom / (math.factorial(m) * np.where(sq > 0, sq, 1.0))) ** (1.0 / (m - 2)),
                        0.0,
                    )
                if np.any((mom > 0) & (sq <= 0)):
                    raise ConfigurationError("positive moment with zero conditional variance")
                k_member = max(k_member, float(need.max()))
            if k_member > k_hat:
                k_hat, binding = k_member, name
    return ConditionReport(k_hat=k_hat, feasible=True, binding_member=binding, m_max=m_max)


def verify_tail(
    psi: np.ndarray,
    ts_model: TimeSeriesModel,
    n: int,
    x: float,
    y2: float,
    k: float,
    replicates: int,
    seed: int,
    sided: str = "one",
    m_max: int = 8,
) -> TailReport:
    """Single-psi tail dominance through the lattice embedding."""
    model = ts_model.to_atom_model()
    space = MarkSpace(ts_model.alphabet)
    w = table_integrand(space, np.asarray(psi, dtype=float), name="psi")
    if n == 0:
        # X_0 = 0: only a nonpositive threshold is hit, at sigma = 0
        hits = replicates if x <= 0 else 0
        return TailReport.build(x, y2, k, sided, replicates, hits, conditioned=True)
    return mc_tail_verify(w, model, float(n), x, y2, k, replicates, seed, sided=sided, m_max=m_max)


def class_sup_chunk(
    fclass: FunctionClass,
    ts_model: TimeSeriesModel,
    n: int,
    seed: int,
    lo: int,
    hi: int,
) -> np.ndarray:
    """sup over the class of |X_n^psi| per replicate over indices [lo, hi)."""
    sups = np.empty(hi - lo)
    for i in range(lo, hi):
        stream = simulate_series(ts_model, n, derive_seed(seed, i))
        paths = [index_process(stream, row, ts_model)[-1] for row in fclass.table]
        sups[i - lo] = max(abs(v) for v in paths)
    return sups


@dataclass(frozen=True)
class UniformTailReport:
    """Uniform tail verification with the sqrt(n) gamma_2 + n gamma_1 scale."""

    n: int
    gamma1: float
    gamma2: float
    scale: float              # sqrt(n) gamma2 + n gamma1
    common_k: float
    conditioned: bool
    u_grid: tuple[float, ...]
    fitted_c: float
    hits: tuple[int, ...]
    empirical: tuple[float, ...]
    cp99: tuple[float, ...]
    envelope: tuple[float, ...]
    tail_log_slope: float | None
    replicates: int
    gamma_solver: str
    scaling_identity_error: float


def verify_uniform_tail(
    fclass: FunctionClass,
    ts_model: TimeSeriesModel,
    n: int,
    u_grid: list[float],
    replicates: int,
    seed: int,
    m_max: int = 8,
    max_points: int = EXHAUSTIVE_CAP,
) -> UniformTailReport:
    """Estimate P(sup_psi |X_n^psi| >= c u (sqrt(n) gamma2 + n gamma1)) on the
    u grid and fit the smallest c with every CP99 below c exp(-u/2).

    Also asserts the exact-solver homogeneity identities
    gamma2(sqrt(n) d2) = sqrt(n) gamma2(d2) and gamma1(n d1) = n gamma1(d1)
    whenever the class fits under the exhaustive cap.
    """
    conditions = check_conditions(fclass, ts_model, m_max=m_max)
    metrics = class_metrics(fclass, ts_model)
    m = len(fclass)
    solver = "exact" if m <= max_points else "greedy"
    identity_err = 0.0
    if solver == "exact":
        g1 = exact_gamma(metrics.d1, 1.0, max_points)
        g2 = exact_gamma(metrics.d2, 2.0, max_points)
        g1n = exact_gamma(metrics.d1.scale(float(n)), 1.0, max_points)
        g2n = exact_gamma(metrics.d2.scale(math.sqrt(n)), 2.0, max_points)
        identity_err = max(
            abs(g1n.value - n * g1.value), abs(g2n.value - math.sqrt(n) * g2.value)
        )
    else:
        g1 = greedy_gamma(metrics.d1, 1.0)
        g2 = greedy_gamma(metrics.d2, 2.0)
    scale = math.sqrt(n) * g2.value + n * g1.value

    sups = class_sup_chunk(fclass, ts_model, n, seed, 0, replicates)

    u_arr = np.asarray(sorted(u_grid), dtype=float)
    fitted_c = _fit_smallest_c(sups, u_arr, scale) if scale > 0 else 0.0
    thr_c = fitted_c if (math.isfinite(fitted_c) and fitted_c > 0) else 1.0
    hits = np.array([int(np.count_nonzero(sups >= thr_c * u * scale)) for u in u_arr])
    emp = hits / replicates
    cp = np.array([clopper_pearson_upper(int(h), replicates) for h in hits])
    env = fitted_c * np.exp(-u_arr / 2) if math.isfinite(fitted_c) else np.full_like(u_arr, np.inf)
    return UniformTailReport(
        n=n,
        gamma1=g1.value,
        gamma2=g2.value,
        scale=scale,
        common_k=conditions.k_hat,
        conditioned=conditions.feasible,
        u_grid=tuple(float(u) for u in u_arr),
        fitted_c=float(fitted_c),
        hits=tuple(int(h) for h in hits),
        empirical=tuple(float(e) for e in emp),
        cp99=tuple(float(v) for v in cp),
        envelope=tuple(float(v) for v in env),
        tail_log_slope=_tail_log_slope(u_arr, emp),
        replicates=replicates,
        gamma_solver=solver,
        scaling_identity_error=identity_err,
    )
