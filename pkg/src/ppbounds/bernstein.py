"""Bernstein-type tail bound: evaluation, condition constants, MC verification.

The bound for the compensated integral X = W*(mu - nu) reads

    P(X_t >= x and C(W)_t <= y^2 for some t) <= exp(-x^2 / (2 (x K + y^2)))

whenever the scale condition Xi(W) <= K and the moment growth condition
Q(W, m) <= (m!/2) K^(m-2) C(W) hold.  ``minimal_k`` finds the smallest such
K (closed form for state-independent kernels, audited path ensemble
otherwise), and ``mc_tail_verify`` checks by simulation that the
Clopper-Pearson 99% upper confidence bound of the stopped-event frequency
stays below the bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as _beta

from .errors import ConfigurationError
from .point_process import (
    AtomModel,
    CompensatorModel,
    EventStream,
    PoissonModel,
    PredictableIntegrand,
    abs_integrand,
    atom_states,
    simulate,
    step_moments,
    _poisson_segments,
)
from .seeding import derive_seed

__all__ = [
    "bound",
    "clopper_pearson_upper",
    "ConditionVerdict",
    "minimal_k",
    "TailReport",
    "mc_tail_verify",
    "mc_tail_grid",
    "grid_hits",
    "terminal_exceedance",
    "path_profile",
]

CP_CONFIDENCE = 0.99


def bound(x: float, y2: float, k: float) -> float:
    """min(1, exp(-x^2 / (2 (x K + y^2)))); equals 1 at x = 0."""
    if x < 0 or y2 < 0 or k < 0:
        raise ConfigurationError("bound requires x, y2, K >= 0")
    if x == 0:
        return 1.0
    denom = x * k + y2
    if denom == 0:
        raise ConfigurationError("bound is degenerate: x > 0 with x*K + y^2 = 0")
    return min(1.0, math.exp(-(x * x) / (2.0 * denom)))


def clopper_pearson_upper(hits: int, n: int, confidence: float = CP_CONFIDENCE) -> float:
    """Exact one-sided upper confidence bound for a binomial proportion."""
    if not 0 <= hits <= n or n <= 0:
        raise ConfigurationError("need 0 <= hits <= n, n > 0")
    if hits == n:
        return 1.0
    return float(_beta.ppf(confidence, hits + 1, n - hits))


# ---------------------------------------------------------------------------
# minimal condition constant
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionVerdict:
    """Smallest feasible condition constant and which constraint fixed it."""

    k_hat: float
    feasible: bool
    binding_constraint: str  # "xi" or "m=<m>"
    mode: str                # "instantaneous" | "cumulative"
    exact: bool              # closed form (True) or audited ensemble (False)
    audited_paths: int | None = None
    m_max: int = 8


def _k_from_moments(c: float, q: dict[int, float]) -> tuple[float, str]:
    """Smallest K with q[m] <= (m!/2) K^(m-2) c for every m, and the binding m."""
    k_best, which = 0.0, "xi"
    for m, qm in sorted(q.items()):
        if qm <= 0:
            continue
        if c <= 0:
            raise ConfigurationError("q[m] > 0 with c = 0: infeasible moment condition")
        km = (2.0 * qm / (math.factorial(m) * c)) ** (1.0 / (m - 2))
        if km > k_best:
            k_best, which = km, f"m={m}"
    return k_best, which


def minimal_k(
    w: PredictableIntegrand,
    model: CompensatorModel,
    horizon: float,
    m_max: int = 8,
    mode: str = "instantaneous",
    audit_paths: int = 64,
    seed: int = 0,
) -> ConditionVerdict:
    """Smallest K >= 0 with Xi <= K (per ``mode``) and Q(m) <= (m!/2) K^(m-2) C.

    The constraints are audited at every atom prefix (atom models) or
    segment endpoint (Poisson: C and Q grow linearly between breakpoints, so
    the moment ratio is extremal at endpoints).  State-independent kernels
    need no simulation; state-dependent models are audited over a simulated
    path ensemble whose size is reported in the verdict.
    """
    if m_max < 3:
        raise ConfigurationError(f"m_max must be >= 3, got {m_max}")
    if mode not in ("instantaneous", "cumulative"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    ms = range(3, m_max + 1)
    state_dependent = isinstance(model, AtomModel) and (
        model.is_state_dependent or w.depends_on_state
    )

    def fold(path_steps) -> tuple[float, str]:
        """Max requirement over one profile of (weight, step_moments) pairs."""
        k_best, which = 0.0, "xi"
        xi_cum = c = 0.0
        q = {m: 0.0 for m in ms}
        for weight, step, has_atom in path_steps:
            xi_cum += weight * step["xi"]
            c += weight * step["c"]
            for m in ms:
                q[m] += weight * step["q"][m]
            if mode == "instantaneous" and has_atom and step["xi"] > k_best:
                k_best, which = step["xi"], "xi"
            k_t, which_t = _k_from_moments(c, q)
            if k_t > k_best:
                k_best, which = k_t, which_t
        if mode == "cumulative" and xi_cum > k_best:
            k_best, which = xi_cum, "xi"
        return k_best, which

    if isinstance(model, PoissonModel):
        steps = [
            (length, step_moments(w, model, m_max, t=start), False)
            for start, length in _poisson_segments(w, horizon)
        ]
        k_hat, which = fold(steps)
        return ConditionVerdict(k_hat, True, which, mode, True, None, m_max)

    if not state_dependent:
        atoms = model.atom_times(horizon)
        if not w.time_breakpoints:
            # identical atoms: per-step ratios carry all the information
            step = step_moments(w, model, m_max)
            steps = [(1.0, step, True)] if atoms.size else []
            k_hat, which = fold(steps)
            if mode == "cumulative" and atoms.size:
                xi_cum = atoms.size * step["xi"]
                if xi_cum > k_hat:
                    k_hat, which = xi_cum, "xi"
        else:
            steps = [(1.0, step_moments(w, model, m_max, t=s), True) for s in atoms]
            k_hat, which = fold(steps)
        return ConditionVerdict(k_hat, True, which, mode, True, None, m_max)

    k_hat, which = 0.0, "xi"
    for i in range(audit_paths):
        stream = simulate(model, horizon, derive_seed(seed, i))
        atoms = model.atom_times(horizon)
        states = atom_states(w, model, stream, horizon)
        steps = [
            (1.0, step_moments(w, model, m_max, t=s, state=st), True)
            for s, st in zip(atoms, states)
        ]
        k_path, which_path = fold(steps)
        if k_path > k_hat:
            k_hat, which = k_path, which_path
    return ConditionVerdict(k_hat, True, which, mode, False, audit_paths, m_max)


# ---------------------------------------------------------------------------
# path profiles and first passage
# ---------------------------------------------------------------------------

def _mark_indices(space_marks: tuple[float, ...], marks: np.ndarray) -> np.ndarray:
    vals = np.asarray(space_marks, dtype=float)
    sorter = np.argsort(vals)
    pos = np.searchsorted(vals[sorter], marks)
    return sorter[np.minimum(pos, vals.size - 1)]


def path_profile(
    w: PredictableIntegrand,
    model: CompensatorModel,
    stream: EventStream,
    horizon: float,
):
    """(epoch times, X at epochs, C at epochs) along one path.

    Atom models: epochs are the atom times; X and C are constant between
    them.  Poisson models: epochs are the event times (values right after
    the jump); between events X drifts linearly with slope -rate * E[W] and
    C grows at rate * E[W^2].
    """
    if isinstance(model, AtomModel):
        atoms = model.atom_times(horizon)
        states = atom_states(w, model, stream, horizon)
        n = atoms.size
        jumps = np.zeros(n)
        c_inc = np.zeros(n)
        a = model.atom_probability
        ev_atom = np.round(stream.times / model.spacing).astype(int) - 1
        ev_mark = _mark_indices(model.mark_space.marks, stream.marks)
        if states is None and not w.time_breakpoints:
            vals = w.table(model.mark_space, model.spacing, None)
            row = model.kernel_row(None)
            hw = a * float(row.dot(vals))
            c_inc[:] = a * float(row.dot((vals - hw) ** 2)) + (1 - a) * hw**2
            jumps[:] = -hw
            jumps[ev_atom] = vals[ev_mark] - hw
        else:
            mark_at = dict(zip(ev_atom.tolist(), ev_mark.tolist()))
            for i, (s, st) in enumerate(zip(atoms, states or [None] * n)):
                row = model.kernel_row(st)
                vals = w.table(model.mark_space, s, st)
                hw = a * float(row.dot(vals))
                c_inc[i] = a * float(row.dot((vals - hw) ** 2)) + (1 - a) * hw**2
                j = mark_at.get(i)
                jumps[i] = (vals[j] if j is not None else 0.0) - hw
        return atoms, np.cumsum(jumps), np.cumsum(c_inc)

    # Poisson walker is exact for time-constant W
    if w.time_breakpoints:
        raise ConfigurationError("Poisson path profiles require time-constant W")
    vals = w.table(model.mark_space, 0.0, None)
    law = model.mark_law
    drift = model.rate * float(law.dot(vals))
    jump_vals = vals[_mark_indices(model.mark_space.marks, stream.marks)]
    times = stream.times
    x_at = np.cumsum(jump_vals) - drift * times
    c_rate = model.rate * float(law.dot(vals**2))
    return times, x_at, c_rate * times


@dataclass(frozen=True)
class _Records:
    """First-passage records: contiguous level ranges (lo, hi] with the
    characteristic value at passage interpolating linearly from c_lo to c_hi."""

    lvl_lo: np.ndarray
    lvl_hi: np.ndarray
    c_lo: np.ndarray
    c_hi: np.ndarray

    def c_at(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(reached mask, C at first passage) for query levels x > 0."""
        reached = np.zeros(x.shape, dtype=bool)
        c_val = np.full(x.shape, np.nan)
        if self.lvl_hi.size == 0:
            return reached, c_val
        j = np.searchsorted(self.lvl_hi, x, side="left")
        ok = j < self.lvl_hi.size
        reached[ok] = True
        jj = j[ok]
        span = self.lvl_hi[jj] - self.lvl_lo[jj]
        frac = np.where(span > 0, (x[ok] - self.lvl_lo[jj]) / np.where(span > 0, span, 1.0), 1.0)
        c_val[ok] = self.c_lo[jj] + (self.c_hi[jj] - self.c_lo[jj]) * frac
        return reached, c_val


def _first_passage(
    w: PredictableIntegrand,
    model: CompensatorModel,
    stream: EventStream,
    horizon: float,
    sided: str,
) -> _Records:
    """Exact first-passage records of X (or |X|) along one path."""
    times, xs, cs = path_profile(w, model, stream, horizon)
    if isinstance(model, AtomModel):
        level = np.abs(xs) if sided == "two" else xs
        run = np.maximum.accumulate(level) if level.size else level
        rec = np.flatnonzero(run > np.concatenate(([0.0], run[:-1]))) if level.size else np.empty(0, int)
        hi = run[rec]
        lo = np.concatenate(([0.0], hi[:-1]))
        c_rec = cs[rec]
        return _Records(lo, hi, c_rec, c_rec)

    vals = w.table(model.mark_space, 0.0, None)
    slope = -model.rate * float(model.mark_law.dot(vals))
    c_rate = model.rate * float(model.mark_law.dot(vals**2))
    if slope == 0.0:
        # no inter-event drift: passage happens at jumps only
        level = np.abs(xs) if sided == "two" else xs
        run = np.maximum.accumulate(level) if level.size else level
        rec = np.flatnonzero(run > np.concatenate(([0.0], run[:-1]))) if level.size else np.empty(0, int)
        hi = run[rec]
        lo = np.concatenate(([0.0], hi[:-1]))
        c_rec = c_rate * times[rec]
        return _Records(lo, hi, c_rec, c_rec)
    lo_l, hi_l, clo_l, chi_l = [], [], [], []
    best = 0.0
    prev_t, prev_x = 0.0, 0.0

    def add(level_hi: float, c_lo_val: float, c_hi_val: float):
        nonlocal best
        lo_l.append(best)
        hi_l.append(level_hi)
        clo_l.append(c_lo_val)
        chi_l.append(c_hi_val)
        best = level_hi

    seq = list(zip(times, xs)) + [(horizon, None)]
    for t_next, x_post in seq:
        x_pre = prev_x + slope * (t_next - prev_t)
        seg_hi = max(prev_x, x_pre) if sided == "one" else max(abs(prev_x), abs(x_pre))
        if seg_hi > best and slope != 0.0:
            # first passage of level u in (best, seg_hi] happens on this
            # drift segment at t(u) = prev_t + (sgn*u - prev_x)/slope, linear
            # in u, and C is linear in t, so records interpolate exactly
            sgn = 1.0
            if sided == "two" and abs(x_pre) >= abs(prev_x):
                sgn = 1.0 if x_pre >= 0 else -1.0
            t_lo = min(max(prev_t + (sgn * best - prev_x) / slope, prev_t), t_next)
            t_hi = prev_t + (sgn * seg_hi - prev_x) / slope
            add(seg_hi, c_rate * t_lo, c_rate * t_hi)
        if x_post is not None:
            lvl = abs(x_post) if sided == "two" else x_post
            if lvl > best:
                add(lvl, c_rate * t_next, c_rate * t_next)
            prev_t, prev_x = t_next, x_post
    return _Records(np.asarray(lo_l), np.asarray(hi_l), np.asarray(clo_l), np.asarray(chi_l))


@dataclass(frozen=True)
class TailReport:
    """One Monte Carlo dominance check of the tail bound."""

    x: float
    y2: float
    k: float
    sided: str
    replicates: int
    empirical_hits: int
    empirical_prob: float
    cp99_upper: float
    bound_value: float
    conditioned: bool
    passed: bool | None  # None when the report is unconditioned

    @staticmethod
    def build(x, y2, k, sided, replicates, hits, conditioned) -> "TailReport":
        emp = hits / replicates
        cp = clopper_pearson_upper(hits, replicates)
        bv = bound(x, y2, k)
        return TailReport(
            x=x, y2=y2, k=k, sided=sided, replicates=replicates,
            empirical_hits=hits, empirical_prob=emp, cp99_upper=cp,
            bound_value=bv, conditioned=conditioned,
            passed=bool(cp <= bv) if conditioned else None,
        )


def _validate_k(
    w: PredictableIntegrand,
    model: CompensatorModel,
    horizon: float,
    k: float,
    sided: str,
    m_max: int,
    mode: str,
) -> bool:
    """A supplied K is valid when it dominates minimal_k (on |W| if two-sided)."""
    target = abs_integrand(w) if sided == "two" else w
    verdict = minimal_k(target, model, horizon, m_max=m_max, mode=mode)
    return bool(verdict.feasible and k >= verdict.k_hat * (1 - 1e-12))


def mc_tail_verify(
    w: PredictableIntegrand,
    model: CompensatorModel,
    horizon: float,
    x: float,
    y2: float,
    k: float,
    replicates: int,
    seed: int,
    sided: str = "one",
    m_max: int = 8,
    mode: str = "instantaneous",
) -> TailReport:
    """Monte Carlo check of one (x, y^2) pair; see ``mc_tail_grid``."""
    return mc_tail_grid(w, model, horizon, [(x, y2)], k, replicates, seed, sided, m_max, mode)[0]


def grid_hits(
    w: PredictableIntegrand,
    model: CompensatorModel,
    horizon: float,
    pairs: list[tuple[float, float]],
    sided: str,
    seed: int,
    lo: int,
    hi: int,
) -> np.ndarray:
    """Stopped-event hit counts per (x, y^2) pair over replicates [lo, hi).

    Replicate i always uses derive_seed(seed, i), so any partition of the
    index range merges to identical totals.
    """
    xs = np.array([p[0] for p in pairs], dtype=float)
    y2s = np.array([p[1] for p in pairs], dtype=float)
    trivial = xs <= 0
    hits = np.zeros(len(pairs), dtype=int)
    for i in range(lo, hi):
        stream = simulate(model, horizon, derive_seed(seed, i))
        records = _first_passage(w, model, stream, horizon, sided)
        reached, c_val = records.c_at(xs)
        ok = trivial | (reached & (c_val <= y2s * (1 + 1e-12)))
        hits += ok
    return hits


def mc_tail_grid(
    w: PredictableIntegrand,
    model: CompensatorModel,
    horizon: float,
    pairs: list[tuple[float, float]],
    k: float,
    replicates: int,
    seed: int,
    sided: str = "one",
    m_max: int = 8,
    mode: str = "instantaneous",
) -> list[TailReport]:
    """Simulate one path ensemble and verify every (x, y^2) pair against it.

    A replicate hits pair (x, y^2) when sigma = inf{t : X_t >= x} (|X| for
    the two-sided event) satisfies sigma <= horizon and C(W)_sigma <= y^2.
    If the supplied K fails validation against minimal_k the reports are
    marked unconditioned and the pass verdict is withheld.
    """
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    if sided not in ("one", "two"):
        raise ConfigurationError(f"unknown sidedness {sided!r}")
    conditioned = _validate_k(w, model, horizon, k, sided, m_max, mode)
    hits = grid_hits(w, model, horizon, pairs, sided, seed, 0, replicates)
    return [
        TailReport.build(float(x), float(y2), k, sided, replicates, int(h), conditioned)
        for (x, y2), h in zip(pairs, hits)
    ]


def terminal_exceedance(
    w: PredictableIntegrand,
    model: CompensatorModel,
    horizon: float,
    thresholds: list[float],
    replicates: int,
    seed: int,
    sided: str = "two",
) -> np.ndarray:
    """Hit counts of X_horizon >= threshold (|X| if two-sided) at terminal time.

    Shares the replicate seeding of ``mc_tail_grid`` so singleton uniform
    campaigns can be cross-checked hit-for-hit against the same paths.
    """
    thr = np.asarray(thresholds, dtype=float)
    hits = np.zeros(thr.size, dtype=int)
    for i in range(replicates):
        stream = simulate(model, horizon, derive_seed(seed, i))
        times, xs, _ = path_profile(w, model, stream, horizon)
        if isinstance(model, PoissonModel):
            vals = w.table(model.mark_space, 0.0, None)
            drift = model.rate * float(model.mark_law.dot(vals))
            last_t = float(times[-1]) if times.size else 0.0
            last_x = float(xs[-1]) if xs.size else 0.0
            x_t = last_x - drift * (horizon - last_t)
        else:
            x_t = float(xs[-1]) if xs.size else 0.0
        v = abs(x_t) if sided == "two" else x_t
        hits += v >= thr
    return hits
