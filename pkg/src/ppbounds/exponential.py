"""Doleans-Dade exponentials and the exponential-martingale compensator.

For a pure-jump finite-variation path Y (no continuous martingale part) the
Doleans-Dade exponential reduces to

    E(Y)_t = exp(Y^cont_t) * prod_{s <= t} (1 + dY_s),

and the compensating process S(lambda) built from a predictable integrand W
and compensator nu makes exp(lambda * X) / E(S(lambda)) a mean-one local
martingale, X = W*(mu - nu).  This module computes S(lambda) exactly (finite
mark sums, exact Poisson time integrals for piecewise-constant W), evaluates
Doleans exponentials in log space when every factor is positive, and exposes
the martingale ratio together with a Monte Carlo mean check whose standard
error is computed in closed form for state-independent models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegeneratePathError
from .seeding import derive_seed
from .point_process import (
    AtomModel,
    CompensatorModel,
    EventStream,
    PoissonModel,
    PredictableIntegrand,
    atom_states,
    pathwise_integral,
    simulate,
    _poisson_segments,
)

__all__ = [
    "JumpPath",
    "doleans",
    "s_lambda",
    "s_lambda_path",
    "martingale_ratio",
    "deterministic_log_doleans",
    "exact_ratio_variance",
    "ratio_moments",
    "MartingaleMeanResult",
    "martingale_mean_check",
]


@dataclass(frozen=True, eq=False)
class JumpPath:
    """Finite-variation path started at 0: linear drift segments plus jumps.

    ``drift_segments`` is a tuple of (t0, t1, increment): the continuous part
    rises linearly by ``increment`` over [t0, t1].  Jump times are strictly
    increasing.
    """

    drift_segments: tuple[tuple[float, float, float], ...] = ()
    jump_times: np.ndarray = None
    jump_sizes: np.ndarray = None

    def __post_init__(self):
        jt = np.asarray(self.jump_times if self.jump_times is not None else [], dtype=float)
        js = np.asarray(self.jump_sizes if self.jump_sizes is not None else [], dtype=float)
        if jt.shape != js.shape or jt.ndim != 1:
            raise ConfigurationError("jump_times and jump_sizes must be 1-d of equal length")
        if jt.size and np.any(np.diff(jt) <= 0):
            raise ConfigurationError("jump times must be strictly increasing")
        jt.flags.writeable = False
        js.flags.writeable = False
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "jump_sizes", js)
        for t0, t1, _ in self.drift_segments:
            if not t1 >= t0:
                raise ConfigurationError("drift segment must have t1 >= t0")

    def continuous_part(self, t: float) -> float:
        total = 0.0
        for t0, t1, inc in self.drift_segments:
            if t <= t0:
                continue
            frac = 1.0 if t >= t1 else (t - t0) / (t1 - t0)
            total += inc * frac
        return total

    def value(self, t: float) -> float:
        mask = self.jump_times <= t * (1 + 1e-12)
        return self.continuous_part(t) + float(self.jump_sizes[mask].sum())


def doleans(path: JumpPath, t: float) -> float:
    """Doleans-Dade exponential of a finite-variation jump path at time t.

    Computed as exp(continuous part) times the product of (1 + jump); the
    product is accumulated in log space when all factors are positive,
    otherwise directly (negative factors are legal, callers interpret).
    """
    mask = path.jump_times <= t * (1 + 1e-12)
    factors = 1.0 + path.jump_sizes[mask]
    cont = path.continuous_part(t)
    if factors.size == 0:
        return math.exp(cont)
    if np.all(factors > 0):
        return math.exp(cont + float(np.log(factors).sum()))
    return math.exp(cont) * float(np.prod(factors))


def _phi(u: np.ndarray | float) -> np.ndarray | float:
    """exp(u) - 1 - u, stable for small |u|."""
    return np.expm1(u) - u


def _atom_jump(
    w: PredictableIntegrand, model: AtomModel, lam: float, t: float, state: float | None
) -> float:
    """Increment of S(lambda) contributed by the atom at time t."""
    a = model.atom_probability
    row = model.kernel_row(state)
    vals = w.table(model.mark_space, t, state)
    hw = a * float(row.dot(vals))
    atom_int = a * float(row.dot(_phi(lam * (vals - hw))))
    return atom_int + (1 - a) * float(_phi(-lam * hw))


def s_lambda_path(
    w: PredictableIntegrand,
    model: CompensatorModel,
    stream: EventStream | None,
    lam: float,
    t: float,
) -> JumpPath:
    """S(lambda) as a JumpPath: atom increments are jumps, the Poisson part is drift."""
    if not lam > 0:
        raise ConfigurationError(f"lambda must be > 0, got {lam}")
    if isinstance(model, PoissonModel):
        segs = []
        for start, length in _poisson_segments(w, t):
            vals = w.table(model.mark_space, start, None)
            rate_phi = model.rate * float(model.mark_law.dot(_phi(lam * vals)))
            segs.append((start, start + length, rate_phi * length))
        return JumpPath(tuple(segs), np.empty(0), np.empty(0))
    states = atom_states(w, model, stream, t)
    atoms = model.atom_times(t)
    if states is None and not w.time_breakpoints:
        jump = _atom_jump(w, model, lam, model.spacing, None) if atoms.size else 0.0
        return JumpPath((), atoms, np.full(atoms.size, jump))
    state_iter = states if states is not None else [None] * atoms.size
    jumps = np.array([_atom_jump(w, model, lam, s, st) for s, st in zip(atoms, state_iter)])
    return JumpPath((), atoms, jumps)


def s_lambda(
    w: PredictableIntegrand,
    model: CompensatorModel,
    stream: EventStream | None,
    lam: float,
    t: float,
    k: float | None = None,
) -> float:
    """Value of the compensating process S(lambda) at time t.

    S(lambda)_t = int (exp(lam (W - W-hat)) - 1 - lam (W - W-hat)) dnu
                + sum_{atoms s <= t} (1 - a_s)(exp(-lam W-hat_s) - 1 + lam W-hat_s),

    every mark integral an exact finite sum.  If a condition constant ``k``
    is supplied, lambda must satisfy lam < 1/k.
    """
    if not lam > 0:
        raise ConfigurationError(f"lambda must be > 0, got {lam}")
    if k is not None and k > 0 and not lam < 1.0 / k:
        raise ConfigurationError(f"lambda={lam} must be < 1/K = {1.0 / k}")
    return s_lambda_path(w, model, stream, lam, t).value(t)


def martingale_ratio(
    w: PredictableIntegrand,
    model: CompensatorModel,
    stream: EventStream,
    lam: float,
    t: float,
    k: float | None = None,
) -> float:
    """exp(lam * X_t) / E(S(lambda))_t along one path."""
    if k is not None and k > 0 and not lam < 1.0 / k:
        raise ConfigurationError(f"lambda={lam} must be < 1/K = {1.0 / k}")
    x = pathwise_integral(w, model, stream, t)
    denom = doleans(s_lambda_path(w, model, stream, lam, t), t)
    if denom == 0.0:
        raise DegeneratePathError("Doleans exponential of S(lambda) vanished")
    return math.exp(lam * x) / denom


def deterministic_log_doleans(
    w: PredictableIntegrand, model: CompensatorModel, lam: float, t: float
) -> float:
    """log E(S(lambda))_t for models whose S(lambda) is path-independent.

    Valid for Poisson models and for atom models with state-independent
    kernel and state-free W.
    """
    if isinstance(model, AtomModel) and (model.is_state_dependent or w.depends_on_state):
        raise ConfigurationError("S(lambda) is path-dependent for state-dependent models")
    path = s_lambda_path(w, model, None, lam, t)
    if isinstance(model, PoissonModel):
        return path.continuous_part(t)
    factors = 1.0 + path.jump_sizes
    return float(np.log(factors).sum())


def exact_ratio_variance(
    w: PredictableIntegrand, model: CompensatorModel, lam: float, t: float
) -> float:
    """Var of the martingale ratio, in closed form for state-independent models.

    Independence across atoms (or Poisson increments) gives
    E exp(lam X_t) = E(S(lambda))_t, hence
    Var(ratio) = E(S(2 lam))_t / E(S(lambda))_t^2 - 1.
    """
    log_e2 = deterministic_log_doleans(w, model, 2 * lam, t)
    log_e1 = deterministic_log_doleans(w, model, lam, t)
    return math.exp(log_e2 - 2 * log_e1) - 1.0


@dataclass(frozen=True)
class MartingaleMeanResult:
    """Monte Carlo check that the martingale ratio has unit mean."""

    lam: float
    t: float
    replicates: int
    sample_mean: float
    sample_std: float
    exact_std: float | None  # closed form when available, else None
    se: float                # standard error actually used for the verdict
    se_kind: str             # "exact" or "sample"
    passed: bool             # |mean - 1| <= 3 se


def ratio_moments(
    w: PredictableIntegrand,
    model: CompensatorModel,
    lambdas: tuple[float, ...],
    t: float,
    seed: int,
    lo: int,
    hi: int,
    k: float | None = None,
) -> np.ndarray:
    """(sum, sum of squares) of the ratio per lambda over replicates [lo, hi).

    Each replicate simulates one stream and evaluates every lambda on it;
    replicate i always uses derive_seed(seed, i), so chunked evaluation
    merges deterministically.
    """
    deterministic = not (
        isinstance(model, AtomModel) and (model.is_state_dependent or w.depends_on_state)
    )
    lams = tuple(float(l) for l in lambdas)
    if deterministic:
        log_den = np.array([deterministic_log_doleans(w, model, l, t) for l in lams])
    out = np.zeros((len(lams), 2))
    for i in range(lo, hi):
        stream = simulate(model, t, derive_seed(seed, i))
        if deterministic:
            x = pathwise_integral(w, model, stream, t)
            r = np.exp(np.asarray(lams) * x - log_den)
        else:
            r = np.array([martingale_ratio(w, model, stream, l, t, k) for l in lams])
        out[:, 0] += r
        out[:, 1] += r * r
    return out


def martingale_mean_check(
    w: PredictableIntegrand,
    model: CompensatorModel,
    lam: float,
    t: float,
    replicates: int,
    master_seed: int,
    k: float | None = None,
    moments: np.ndarray | None = None,
) -> MartingaleMeanResult:
    """Simulate ``replicates`` ratios and test |mean - 1| <= 3 SE.

    For state-independent models the standard error uses the exact ratio
    variance: the ratio distribution is extremely heavy-tailed for large
    lambda and the sample standard deviation then underestimates the true
    one so badly that a sample-SE test rejects a true unit mean.
    ``moments`` may supply precomputed (sum, sum of squares) for the lambda.
    """
    deterministic = not (
        isinstance(model, AtomModel) and (model.is_state_dependent or w.depends_on_state)
    )
    if moments is None:
        moments = ratio_moments(w, model, (lam,), t, master_seed, 0, replicates, k)[0]
    total, total_sq = float(moments[0]), float(moments[1])
    mean = total / replicates
    var = max(0.0, total_sq / replicates - mean**2)
    sample_std = math.sqrt(var)
    exact_std = None
    if deterministic:
        exact_std = math.sqrt(exact_ratio_variance(w, model, lam, t))
    se_kind = "exact" if exact_std is not None else "sample"
    std = exact_std if exact_std is not None else sample_std
    se = std / math.sqrt(replicates)
    return MartingaleMeanResult(
        lam=lam,
        t=t,
        replicates=replicates,
        sample_mean=mean,
        sample_std=sample_std,
        exact_std=exact_std,
        se=se,
        se_kind=se_kind,
        passed=bool(abs(mean - 1.0) <= 3 * se),
    )
