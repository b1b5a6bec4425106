"""Multivariate point processes with analytically known predictable compensators.

Two model families are supported:

* ``PoissonModel`` - a homogeneous (compound) Poisson process: continuous
  time, exponential inter-arrivals, i.i.d. marks, no compensator atoms.
* ``AtomModel`` - a discrete-time lattice process: at each atom time
  ``k * spacing`` an event occurs with predictable probability ``a``; the
  mark is drawn from a probability vector or from a finite Markov kernel
  conditioned on the previous realized mark.

Mark spaces are finite, so all integrals against the mark kernel are exact
finite sums and every path functional below is computed without quadrature
error.  Given a bounded predictable integrand W the module computes the
compensator averages W-hat, the compensator integral W*nu, the compensated
integral X = W*(mu - nu), and the scale / variance / higher-moment
characteristics that drive the Bernstein-type tail bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DataError

__all__ = [
    "MarkSpace",
    "PoissonModel",
    "AtomModel",
    "EventStream",
    "PredictableIntegrand",
    "Characteristics",
    "simulate",
    "hat_w",
    "compensator_integral",
    "pathwise_integral",
    "characteristics",
    "step_moments",
    "identity_integrand",
    "constant_integrand",
    "threshold_integrand",
    "table_integrand",
    "abs_integrand",
    "negate_integrand",
    "difference_integrand",
]

_ATOL = 1e-9  # lattice snap tolerance for atom times
PROB_TOL = 1e-12  # probability vectors must sum to one within this


def _as_prob_vector(v, n: int, what: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (n,):
        raise ConfigurationError(f"{what} must have length {n}, got shape {arr.shape}")
    if np.any(arr < 0):
        raise ConfigurationError(f"{what} has negative entries")
    if abs(arr.sum() - 1.0) > PROB_TOL:
        raise ConfigurationError(f"{what} sums to {arr.sum()!r}, not 1 within {PROB_TOL}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class MarkSpace:
    """Finite ordered set of real mark values, optionally labelled."""

    marks: tuple[float, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        marks = tuple(float(m) for m in self.marks)
        if not marks:
            raise ConfigurationError("mark space must be non-empty")
        if len(set(marks)) != len(marks):
            raise ConfigurationError("marks must be pairwise distinct")
        if self.labels is not None and len(self.labels) != len(marks):
            raise ConfigurationError("labels must match marks in length")
        object.__setattr__(self, "marks", marks)

    def __len__(self) -> int:
        return len(self.marks)

    @property
    def values(self) -> np.ndarray:
        arr = np.asarray(self.marks, dtype=float)
        arr.flags.writeable = False
        return arr

    def index_of(self, mark: float) -> int:
        try:
            return self.marks.index(float(mark))
        except ValueError:
            raise DataError(f"mark {mark!r} not in mark space") from None


@dataclass(frozen=True, eq=False)
class PoissonModel:
    """Homogeneous compound Poisson process: rate > 0, i.i.d. marks.

    The compensator is nu(dt, dx) = rate * dt * mark_law(dx); it has no
    atoms, so a_t = 0 and W-hat = 0 identically.
    """

    rate: float
    mark_space: MarkSpace
    mark_law: np.ndarray

    def __post_init__(self):
        if not self.rate > 0:
            raise ConfigurationError(f"rate must be > 0, got {self.rate}")
        object.__setattr__(
            self, "mark_law", _as_prob_vector(self.mark_law, len(self.mark_space), "mark_law")
        )

    @property
    def is_state_dependent(self) -> bool:
        return False

    def atom_times(self, t: float) -> np.ndarray:
        return np.empty(0, dtype=float)

    def atom_probability_at(self, t: float) -> float:
        return 0.0


KernelArray = np.ndarray  # (n,) probability vector or (n, n) row-stochastic matrix


@dataclass(frozen=True, eq=False)
class AtomModel:
    """Lattice point process with compensator atoms of mass ``atom_probability``.

    At each atom time k * spacing (k = 1, 2, ...) an event occurs with
    probability ``atom_probability``, independently given the history.  The
    mark is drawn from ``mark_kernel``: either a fixed probability vector or
    a row-stochastic matrix whose row is selected by the previous realized
    mark (the canonical predictable state).  Markov kernels require an
    ``initial_state``: a mark value, or a probability vector from which the
    time-zero state is drawn once per path.
    """

    spacing: float
    atom_probability: float
    mark_space: MarkSpace
    mark_kernel: KernelArray
    initial_state: Union[float, np.ndarray, None] = None

    def __post_init__(self):
        if not self.spacing > 0:
            raise ConfigurationError(f"spacing must be > 0, got {self.spacing}")
        if not 0 < self.atom_probability <= 1:
            raise ConfigurationError(
                f"atom_probability must be in (0, 1], got {self.atom_probability}"
            )
        n = len(self.mark_space)
        kernel = np.asarray(self.mark_kernel, dtype=float)
        if kernel.ndim == 1:
            kernel = _as_prob_vector(kernel, n, "mark_kernel")
        elif kernel.ndim == 2:
            if kernel.shape != (n, n):
                raise ConfigurationError(f"Markov mark_kernel must be ({n}, {n})")
            kernel = np.vstack([_as_prob_vector(row, n, "mark_kernel row") for row in kernel])
            kernel.flags.writeable = False
            if self.initial_state is None:
                raise ConfigurationError("Markov mark_kernel requires initial_state")
        else:
            raise ConfigurationError("mark_kernel must be a vector or a square matrix")
        object.__setattr__(self, "mark_kernel", kernel)
        if self.initial_state is not None and not np.isscalar(self.initial_state):
            dist = _as_prob_vector(self.initial_state, n, "initial_state")
            object.__setattr__(self, "initial_state", dist)
        elif self.initial_state is not None:
            self.mark_space.index_of(float(self.initial_state))

    @property
    def is_state_dependent(self) -> bool:
        return self.mark_kernel.ndim == 2

    def n_atoms(self, t: float) -> int:
        return max(0, int(math.floor(t / self.spacing + _ATOL)))

    def atom_times(self, t: float) -> np.ndarray:
        return self.spacing * np.arange(1, self.n_atoms(t) + 1, dtype=float)

    def is_atom_time(self, t: float) -> bool:
        k = round(t / self.spacing)
        return k >= 1 and abs(t - k * self.spacing) <= _ATOL * max(1.0, abs(t))

    def atom_probability_at(self, t: float) -> float:
        return self.atom_probability if self.is_atom_time(t) else 0.0

    def kernel_row(self, state: float | None) -> np.ndarray:
        """Mark distribution at an atom, given the predictable state."""
        if self.mark_kernel.ndim == 1:
            return self.mark_kernel
        if state is None:
            raise ConfigurationError("Markov kernel needs a predictable state")
        return self.mark_kernel[self.mark_space.index_of(state)]


CompensatorModel = Union[PoissonModel, AtomModel]


@dataclass(frozen=True, eq=False)
class EventStream:
    """One realization: strictly increasing event times with marks.

    ``initial_state`` records the time-zero predictable state drawn for
    Markov kernels; it is None otherwise.
    """

    times: np.ndarray
    marks: np.ndarray
    horizon: float
    initial_state: float | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        marks = np.asarray(self.marks, dtype=float)
        if times.shape != marks.shape or times.ndim != 1:
            raise DataError("times and marks must be 1-d arrays of equal length")
        if times.size and (np.any(np.diff(times) <= 0) or times[0] <= 0):
            raise DataError("event times must be strictly increasing and positive")
        if times.size and times[-1] > self.horizon * (1 + 1e-12):
            raise DataError("event times must not exceed the horizon")
        times.flags.writeable = False
        marks.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marks", marks)

    def __len__(self) -> int:
        return int(self.times.size)

    def to_csv(self) -> str:
        """Rows ``time,mark`` for inspection."""
        lines = ["time,mark"]
        lines += [f"{t!r},{m!r}" for t, m in zip(self.times, self.marks)]
        return "\n".join(lines) + "\n"


def _previous_mark(state: float | None, mark: float) -> float:
    """Canonical predictable-state update: remember the last realized mark."""
    return mark


@dataclass(frozen=True, eq=False)
class PredictableIntegrand:
    """Bounded predictable function W(t, x, state) with a declared sup bound.

    ``time_breakpoints`` lists the times where a piecewise-constant time
    dependence changes; an empty tuple means W is constant in t, which keeps
    the Poisson time integral exact.  ``depends_on_state`` marks integrands
    that read the predictable state, which forces pathwise evaluation of
    compensator integrals under Markov kernels.
    """

    eval: Callable[[float, float, float | None], float]
    bound: float
    state_update: Callable[[float | None, float], float] = _previous_mark
    time_breakpoints: tuple[float, ...] = ()
    depends_on_state: bool = False
    name: str = "W"

    def __post_init__(self):
        if not self.bound >= 0 or not np.isfinite(self.bound):
            raise ConfigurationError(f"bound must be a finite nonnegative real, got {self.bound}")
        object.__setattr__(
            self, "time_breakpoints", tuple(sorted(float(b) for b in self.time_breakpoints))
        )

    def __call__(self, t: float, x: float, state: float | None = None) -> float:
        return self.eval(t, x, state)

    def table(self, space: MarkSpace, t: float = 0.0, state: float | None = None) -> np.ndarray:
        """Values over the finite mark space at (t, state), bound-checked."""
        vals = np.array([self.eval(t, x, state) for x in space.marks], dtype=float)
        if np.any(np.abs(vals) > self.bound * (1 + 1e-12) + 1e-300):
            raise ConfigurationError(
                f"integrand {self.name} exceeds its declared bound {self.bound}"
            )
        return vals


class _Table:
    """Picklable table lookup used by the named integrand constructors."""

    def __init__(self, marks: tuple[float, ...], values: tuple[float, ...]):
        self.lookup = dict(zip(marks, values))

    def __call__(self, t, x, state):
        return self.lookup[x]


class _Identity:
    def __call__(self, t, x, state):
        return x


class _Constant:
    def __init__(self, c: float):
        self.c = c

    def __call__(self, t, x, state):
        return self.c


class _Threshold:
    def __init__(self, tau: float):
        self.tau = tau

    def __call__(self, t, x, state):
        return 1.0 if x >= self.tau else 0.0


class _Abs:
    def __init__(self, w: PredictableIntegrand):
        self.w = w

    def __call__(self, t, x, state):
        return abs(self.w.eval(t, x, state))


class _Neg:
    def __init__(self, w: PredictableIntegrand):
        self.w = w

    def __call__(self, t, x, state):
        return -self.w.eval(t, x, state)


class _Diff:
    def __init__(self, w1: PredictableIntegrand, w2: PredictableIntegrand):
        self.w1, self.w2 = w1, w2

    def __call__(self, t, x, state):
        return self.w1.eval(t, x, state) - self.w2.eval(t, x, state)


def identity_integrand(space: MarkSpace) -> PredictableIntegrand:
    b = float(np.max(np.abs(space.values)))
    return PredictableIntegrand(_Identity(), bound=b, name="identity")


def constant_integrand(c: float) -> PredictableIntegrand:
    return PredictableIntegrand(_Constant(float(c)), bound=abs(float(c)), name=f"const({c})")


def threshold_integrand(tau: float) -> PredictableIntegrand:
    return PredictableIntegrand(_Threshold(float(tau)), bound=1.0, name=f"thr({tau})")


def table_integrand(space: MarkSpace, values: Sequence[float], name: str = "table") -> PredictableIntegrand:
    vals = tuple(float(v) for v in values)
    if len(vals) != len(space):
        raise ConfigurationError("table must have one value per mark")
    return PredictableIntegrand(_Table(space.marks, vals), bound=max(abs(v) for v in vals) if vals else 0.0, name=name)


def abs_integrand(w: PredictableIntegrand) -> PredictableIntegrand:
    return PredictableIntegrand(
        _Abs(w), bound=w.bound, state_update=w.state_update,
        time_breakpoints=w.time_breakpoints, depends_on_state=w.depends_on_state,
        name=f"|{w.name}|",
    )


def negate_integrand(w: PredictableIntegrand) -> PredictableIntegrand:
    return PredictableIntegrand(
        _Neg(w), bound=w.bound, state_update=w.state_update,
        time_breakpoints=w.time_breakpoints, depends_on_state=w.depends_on_state,
        name=f"-{w.name}",
    )


def difference_integrand(w1: PredictableIntegrand, w2: PredictableIntegrand) -> PredictableIntegrand:
    return PredictableIntegrand(
        _Diff(w1, w2), bound=w1.bound + w2.bound,
        time_breakpoints=tuple(sorted(set(w1.time_breakpoints) | set(w2.time_breakpoints))),
        depends_on_state=w1.depends_on_state or w2.depends_on_state,
        name=f"{w1.name}-{w2.name}",
    )


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def simulate(model: CompensatorModel, horizon: float, seed: int) -> EventStream:
    """Draw one realization of the point process on (0, horizon].

    Deterministic given ``seed``.  The draw protocol is fixed: Poisson paths
    use exponential inter-arrival gaps then one uniform per event for the
    mark; atom paths draw one occurrence uniform and one mark uniform per
    atom (the mark uniform is consumed even when no event occurs, and is
    what keeps replicate streams bit-reproducible across integrands).
    """
    if not horizon > 0:
        raise ConfigurationError(f"horizon must be > 0, got {horizon}")
    rng = np.random.Generator(np.random.PCG64(seed))
    if isinstance(model, PoissonModel):
        # exponential inter-arrival gaps drawn in fixed-size blocks; the
        # block size depends only on (rate, horizon), keeping the protocol
        # deterministic per seed
        mean_n = model.rate * horizon
        block = max(8, int(mean_n + 6.0 * math.sqrt(mean_n) + 8))
        gaps = rng.exponential(1.0 / model.rate, block)
        times = np.cumsum(gaps)
        while times[-1] <= horizon:
            gaps = rng.exponential(1.0 / model.rate, block)
            times = np.concatenate((times, times[-1] + np.cumsum(gaps)))
        times = times[times <= horizon]
        cdf = np.cumsum(model.mark_law)
        idx = np.searchsorted(cdf, rng.random(times.size), side="right")
        idx = np.minimum(idx, len(model.mark_space) - 1)
        marks = np.asarray(model.mark_space.marks, dtype=float)[idx]
        return EventStream(times, marks, horizon)

    n_atoms = model.n_atoms(horizon)
    occur = rng.random(n_atoms) < model.atom_probability
    u_mark = rng.random(n_atoms)
    marks_arr = np.asarray(model.mark_space.marks, dtype=float)
    atom_grid = model.atom_times(horizon)
    if not model.is_state_dependent:
        cdf = np.cumsum(model.mark_kernel)
        idx = np.minimum(np.searchsorted(cdf, u_mark, side="right"), len(marks_arr) - 1)
        times = atom_grid[occur]
        marks = marks_arr[idx[occur]]
        return EventStream(times, marks, horizon)

    if isinstance(model.initial_state, np.ndarray):
        cdf0 = np.cumsum(model.initial_state)
        s_idx = min(int(np.searchsorted(cdf0, rng.random(), side="right")), len(marks_arr) - 1)
    else:
        s_idx = model.mark_space.index_of(float(model.initial_state))
    init_state = float(marks_arr[s_idx])
    row_cdfs = np.cumsum(model.mark_kernel, axis=1)
    times, marks = [], []
    for k in range(n_atoms):
        if occur[k]:
            j = min(int(np.searchsorted(row_cdfs[s_idx], u_mark[k], side="right")), len(marks_arr) - 1)
            times.append(atom_grid[k])
            marks.append(marks_arr[j])
            s_idx = j
    return EventStream(np.asarray(times), np.asarray(marks), horizon, initial_state=init_state)


# ---------------------------------------------------------------------------
# predictable state bookkeeping
# ---------------------------------------------------------------------------

def _needs_states(w: PredictableIntegrand, model: CompensatorModel) -> bool:
    return isinstance(model, AtomModel) and (model.is_state_dependent or w.depends_on_state)


def atom_states(
    w: PredictableIntegrand, model: AtomModel, stream: EventStream | None, t: float
) -> list[float] | None:
    """Predictable state just before each atom time <= t, walked along the stream.

    Returns None when neither the kernel nor W reads the state (every atom
    then behaves identically and callers may use a single tabulation).
    """
    if not _needs_states(w, model):
        return None
    if stream is None:
        raise ConfigurationError(
            "state-dependent evaluation needs a stream supplying the realized state path"
        )
    _check_stream_grid(model, stream)
    states: list[float] = []
    state = stream.initial_state
    ev_times, ev_marks = stream.times, stream.marks
    j = 0
    for s in model.atom_times(t):
        states.append(state)
        while j < len(ev_times) and ev_times[j] <= s * (1 + 1e-12):
            state = w.state_update(state, float(ev_marks[j]))
            j += 1
    return states


def _check_stream_grid(model: CompensatorModel, stream: EventStream) -> None:
    if isinstance(model, AtomModel) and stream.times.size:
        k = np.round(stream.times / model.spacing)
        if np.any(k < 1) or np.any(np.abs(stream.times - k * model.spacing) > _ATOL):
            raise ConfigurationError("stream events are off the model's atom grid")


# ---------------------------------------------------------------------------
# path functionals
# ---------------------------------------------------------------------------

def hat_w(
    w: PredictableIntegrand,
    model: CompensatorModel,
    t: float,
    state: float | None = None,
) -> float:
    """Compensator atom average W-hat(t) = integral of W against nu({t} x dx).

    Zero for Poisson models and at non-atom times; at an atom it is
    a * sum_x W(t, x, state) kernel(x | state).
    """
    if t < 0:
        raise ConfigurationError("t must be >= 0")
    if isinstance(model, PoissonModel) or not model.is_atom_time(t):
        return 0.0
    row = model.kernel_row(state)
    vals = w.table(model.mark_space, t, state)
    return float(model.atom_probability * row.dot(vals))


def _poisson_segments(w: PredictableIntegrand, t: float):
    """(start, length) pieces of [0, t] on which W is constant in time."""
    cuts = [0.0] + [b for b in w.time_breakpoints if 0.0 < b < t] + [t]
    return [(cuts[i], cuts[i + 1] - cuts[i]) for i in range(len(cuts) - 1)]


def compensator_integral(
    w: PredictableIntegrand,
    model: CompensatorModel,
    t: float,
    stream: EventStream | None = None,
) -> float:
    """Exact integral of W against the compensator over (0, t].

    Poisson: rate * sum over constant-in-time segments of
    segment_length * E_law[W].  Atom models: sum of W-hat over atoms, with
    the predictable state path taken from ``stream`` when needed.
    """
    if isinstance(model, PoissonModel):
        total = 0.0
        for start, length in _poisson_segments(w, t):
            vals = w.table(model.mark_space, start, None)
            total += model.rate * length * float(model.mark_law.dot(vals))
        return total
    states = atom_states(w, model, stream, t)
    atoms = model.atom_times(t)
    if states is None:
        if not atoms.size:
            return 0.0
        per_atom = np.array([hat_w(w, model, s, None) for s in _unique_times(w, atoms)])
        return float(_sum_over_atoms(w, atoms, per_atom))
    return float(sum(hat_w(w, model, s, st) for s, st in zip(atoms, states)))


def _unique_times(w: PredictableIntegrand, atoms: np.ndarray) -> np.ndarray:
    """Atom times needing separate evaluation (one per breakpoint segment)."""
    if not w.time_breakpoints:
        return atoms[:1]
    return atoms


def _sum_over_atoms(w: PredictableIntegrand, atoms: np.ndarray, per_atom: np.ndarray) -> float:
    if not w.time_breakpoints:
        return per_atom[0] * atoms.size
    return per_atom.sum()


def pathwise_integral(
    w: PredictableIntegrand,
    model: CompensatorModel,
    stream: EventStream,
    t: float,
) -> float:
    """X_t = W*(mu - nu)_t: jump sum along the stream minus the compensator."""
    _check_stream_grid(model, stream)
    jump_sum = 0.0
    state = stream.initial_state
    for tk, xk in zip(stream.times, stream.marks):
        if tk > t * (1 + 1e-12):
            break
        jump_sum += w.eval(float(tk), float(xk), state)
        state = w.state_update(state, float(xk))
    return jump_sum - compensator_integral(w, model, t, stream)


@dataclass(frozen=True)
class Characteristics:
    """Scale, variance, and higher-moment characteristics up to time t.

    ``xi_cumulative`` is the running integral of max(0, W - W-hat) against nu
    plus the accumulated (1 - a) max(0, -W-hat) terms; ``xi_instantaneous_max``
    is the largest single-atom version of the same quantity (the per-step
    reading, used as the default Bernstein scale condition).  ``c`` is the
    predictable quadratic characteristic of W*(mu - nu); ``q[m]`` the
    higher-moment analogues for 3 <= m <= m_max.
    """

    xi_cumulative: float
    xi_instantaneous_max: float
    c: float
    q: dict[int, float] = field(default_factory=dict)


def step_moments(
    w: PredictableIntegrand,
    model: CompensatorModel,
    m_max: int,
    t: float = 0.0,
    state: float | None = None,
) -> dict[str, float | dict[int, float]]:
    """Per-atom (or per-unit-time, for Poisson) characteristic increments.

    For atom models this is the exact single-atom contribution at an atom
    with the given predictable state; for Poisson models it is the density
    per unit time (W-hat = 0, no (1-a) terms).
    """
    if isinstance(model, PoissonModel):
        vals = w.table(model.mark_space, t, None)
        law = model.mark_law
        pos = np.maximum(vals, 0.0)
        out = {
            "xi": model.rate * float(law.dot(pos)),
            "c": model.rate * float(law.dot(vals**2)),
        }
        out["q"] = {m: model.rate * float(law.dot(pos**m)) for m in range(3, m_max + 1)}
        return out
    a = model.atom_probability
    row = model.kernel_row(state)
    vals = w.table(model.mark_space, t if t else model.spacing, state)
    hw = a * float(row.dot(vals))
    centered = vals - hw
    pos = np.maximum(centered, 0.0)
    neg_hat = max(0.0, -hw)
    out = {
        "xi": a * float(row.dot(pos)) + (1 - a) * neg_hat,
        "c": a * float(row.dot(centered**2)) + (1 - a) * hw**2,
    }
    out["q"] = {
        m: a * float(row.dot(pos**m)) + (1 - a) * neg_hat**m for m in range(3, m_max + 1)
    }
    return out


def characteristics(
    w: PredictableIntegrand,
    model: CompensatorModel,
    stream: EventStream | None,
    t: float,
    m_max: int = 8,
) -> Characteristics:
    """Compute Xi (both readings), C, and Q(m) for 3 <= m <= m_max at time t.

    ``stream`` may be None whenever the characteristics are deterministic
    (Poisson models, or atom models whose kernel and W ignore the state).
    """
    if m_max < 3:
        raise ConfigurationError(f"m_max must be >= 3, got {m_max}")
    ms = range(3, m_max + 1)
    if isinstance(model, PoissonModel):
        xi = c = 0.0
        q = {m: 0.0 for m in ms}
        for start, length in _poisson_segments(w, t):
            step = step_moments(w, model, m_max, t=start)
            xi += length * step["xi"]
            c += length * step["c"]
            for m in ms:
                q[m] += length * step["q"][m]
        return Characteristics(xi, 0.0, c, q)

    states = atom_states(w, model, stream, t)
    atoms = model.atom_times(t)
    xi_cum = c = 0.0
    xi_inst = 0.0
    q = {m: 0.0 for m in ms}
    if states is None and not w.time_breakpoints:
        if atoms.size:
            step = step_moments(w, model, m_max)
            n = atoms.size
            xi_cum = n * step["xi"]
            xi_inst = step["xi"]
            c = n * step["c"]
            q = {m: n * step["q"][m] for m in ms}
        return Characteristics(xi_cum, xi_inst, c, q)
    state_iter = states if states is not None else [None] * atoms.size
    for s, st in zip(atoms, state_iter):
        step = step_moments(w, model, m_max, t=s, state=st)
        xi_cum += step["xi"]
        xi_inst = max(xi_inst, step["xi"])
        c += step["c"]
        for m in ms:
            q[m] += step["q"][m]
    return Characteristics(xi_cum, xi_inst, c, q)
