import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import beta, binom

from ppbounds.bernstein import (
    bound,
    clopper_pearson_upper,
    mc_tail_grid,
    mc_tail_verify,
    minimal_k,
    path_profile,
    terminal_exceedance,
)
from ppbounds.errors import ConfigurationError
from ppbounds.point_process import (
    AtomModel,
    MarkSpace,
    PoissonModel,
    constant_integrand,
    identity_integrand,
    pathwise_integral,
    simulate,
    table_integrand,
)
from ppbounds.seeding import derive_seed

PM = MarkSpace((-1.0, 1.0))
RADEMACHER = AtomModel(1.0, 1.0, PM, [0.5, 0.5])
IDENT = identity_integrand(PM)


def exact_max_probability(n: int, x: int) -> float:
    """Reflection oracle: P(max_{k<=n} S_k >= x) for the simple +-1 walk."""
    half = Fraction(1, 2**n)
    if (x + n) % 2:
        p_eq = Fraction(0)
        k_gt = (x + n) // 2 + 1
    else:
        k_eq = (x + n) // 2
        p_eq = math.comb(n, k_eq) * half
        k_gt = k_eq + 1
    p_gt = sum(math.comb(n, k) for k in range(k_gt, n + 1)) * half
    return float(2 * p_gt + p_eq)


def test_bound_examples():
    assert bound(0.0, 5.0, 1.0) == 1.0
    assert bound(1.0, 1.0, 1.0) == pytest.approx(math.exp(-0.25), abs=1e-12)
    assert bound(20.0, 100.0, 1.0) == pytest.approx(math.exp(-5.0 / 3.0), abs=1e-12)


def test_bound_degenerate():
    with pytest.raises(ConfigurationError):
        bound(1.0, 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        bound(-1.0, 1.0, 1.0)


@settings(deadline=None, max_examples=60)
@given(
    x=st.floats(0.01, 50.0),
    dx=st.floats(0.0, 10.0),
    y2=st.floats(0.01, 200.0),
    dy=st.floats(0.0, 50.0),
    k=st.floats(0.0, 5.0),
    dk=st.floats(0.0, 2.0),
)
def test_bound_monotonicity(x, dx, y2, dy, k, dk):
    # nonincreasing in x, nondecreasing in y2 and K
    assert bound(x + dx, y2, k) <= bound(x, y2, k) + 1e-15
    assert bound(x, y2 + dy, k) >= bound(x, y2, k) - 1e-15
    assert bound(x, y2, k + dk) >= bound(x, y2, k) - 1e-15


def test_clopper_pearson_definition():
    # upper bound u solves P(Bin(n, u) <= k) = 0.01
    for k, n in ((0, 100), (3, 50), (17, 200), (199, 200)):
        u = clopper_pearson_upper(k, n)
        if k == n:
            assert u == 1.0
        else:
            assert binom.cdf(k, n, u) == pytest.approx(0.01, abs=1e-9)
    assert clopper_pearson_upper(0, 1000) == pytest.approx(1 - 0.01 ** (1 / 1000))


def test_minimal_k_examples():
    zero = constant_integrand(0.0)
    assert minimal_k(zero, RADEMACHER, 10.0).k_hat == 0.0
    verdict = minimal_k(IDENT, RADEMACHER, 10.0, m_max=8)
    assert verdict.k_hat == pytest.approx(0.5)
    assert verdict.binding_constraint == "xi"
    assert verdict.exact
    # fully compensated constant integrand
    assert minimal_k(constant_integrand(-1.0), RADEMACHER, 10.0).k_hat == 0.0


def test_minimal_k_moment_only_for_poisson():
    # no compensator atoms: the instantaneous scale constraint is vacuous and
    # the binding constraint is the m = 4 moment ratio (1/m!)^(1/(m-2))
    poisson = PoissonModel(1.0, PM, [0.5, 0.5])
    verdict = minimal_k(IDENT, poisson, 50.0, m_max=8)
    assert verdict.binding_constraint == "m=4"
    assert verdict.k_hat == pytest.approx((1.0 / 24.0) ** 0.5)


def test_minimal_k_monotone_in_m_max():
    poisson = PoissonModel(1.0, PM, [0.5, 0.5])
    prev = 0.0
    for m_max in range(3, 10):
        k = minimal_k(IDENT, poisson, 50.0, m_max=m_max).k_hat
        assert k >= prev - 1e-15
        prev = k


def test_minimal_k_cumulative_mode_grows_with_horizon():
    k10 = minimal_k(IDENT, RADEMACHER, 10.0, mode="cumulative").k_hat
    k20 = minimal_k(IDENT, RADEMACHER, 20.0, mode="cumulative").k_hat
    assert k10 == pytest.approx(5.0)  # n * E max(0, x) = 10 * 0.5
    assert k20 == pytest.approx(10.0)


def test_minimal_k_markov_audit_reports_paths():
    markov = AtomModel(1.0, 1.0, PM, [[0.9, 0.1], [0.2, 0.8]], initial_state=-1.0)
    verdict = minimal_k(IDENT, markov, 20.0, audit_paths=16, seed=5)
    assert not verdict.exact
    assert verdict.audited_paths == 16
    assert verdict.k_hat > 0


def test_mc_tail_trivial_threshold():
    rep = mc_tail_verify(IDENT, RADEMACHER, 10.0, 0.0, 5.0, 0.5, 500, 42)
    assert rep.empirical_prob == 1.0
    assert rep.bound_value == 1.0
    assert rep.passed


def test_mc_tail_unreachable_threshold():
    # |X_t| <= B * atoms + compensator = 10 here, so x = 50 is unreachable;
    # y2 keeps the bound above the zero-hit Clopper-Pearson floor
    rep = mc_tail_verify(IDENT, RADEMACHER, 10.0, 50.0, 2500.0, 0.5, 500, 42)
    assert rep.empirical_hits == 0
    assert rep.passed


def test_mc_tail_reflection_oracle():
    exact = exact_max_probability(100, 20)
    assert exact == pytest.approx(0.046044066929342806, abs=1e-15)
    bnd = bound(20.0, 100.0, 0.5)
    assert exact <= bnd
    reps = 20_000
    rep = mc_tail_verify(IDENT, RADEMACHER, 100.0, 20.0, 100.0, 0.5, reps, 314)
    # two-sided 99% Clopper-Pearson interval covers the exact probability
    k, n = rep.empirical_hits, rep.replicates
    lo = beta.ppf(0.005, k, n - k + 1) if k > 0 else 0.0
    hi = beta.ppf(0.995, k + 1, n - k) if k < n else 1.0
    assert lo <= exact <= hi
    assert rep.passed


def test_one_sided_hits_never_exceed_two_sided():
    pairs = [(2.0, 50.0), (4.0, 100.0), (6.0, 30.0)]
    one = mc_tail_grid(IDENT, RADEMACHER, 50.0, pairs, 0.5, 2000, 77, sided="one")
    two = mc_tail_grid(IDENT, RADEMACHER, 50.0, pairs, 0.5, 2000, 77, sided="two")
    for r1, r2 in zip(one, two):
        assert r1.empirical_hits <= r2.empirical_hits


def test_invalid_k_marks_report_unconditioned():
    rep = mc_tail_verify(IDENT, RADEMACHER, 20.0, 5.0, 20.0, 0.1, 200, 9)
    assert not rep.conditioned
    assert rep.passed is None


def test_two_sided_reading_fails_at_small_x():
    # With |W| = 1 fully compensated (K = 0 is valid for the two-sided
    # conditions), the two-sided event at x = 2 is near-certain while the
    # bound is exp(-4/200): the verifier must detect the violation.
    rep = mc_tail_verify(IDENT, RADEMACHER, 100.0, 2.0, 100.0, 0.0, 2000, 11, sided="two")
    assert rep.conditioned
    assert rep.empirical_prob > 0.99
    assert rep.bound_value == pytest.approx(math.exp(-4.0 / 200.0))
    assert rep.passed is False


def _brute_force_hit(model, w, stream, horizon, x, y2, sided):
    """Independent first-passage check on a dense time grid plus exact jumps."""
    times, xs, cs = path_profile(w, model, stream, horizon)
    if isinstance(model, AtomModel):
        level = np.abs(xs) if sided == "two" else xs
        for lv, c in zip(level, cs):
            if lv >= x:
                return c <= y2 * (1 + 1e-12)
        return False
    vals = w.table(model.mark_space, 0.0, None)
    drift = model.rate * float(model.mark_law.dot(vals))
    c_rate = model.rate * float(model.mark_law.dot(vals**2))
    prev_t, prev_x = 0.0, 0.0
    seq = list(zip(times, xs)) + [(horizon, None)]
    for t_next, x_post in seq:
        # scan the drift segment analytically
        x_pre = prev_x - drift * (t_next - prev_t)
        for sgn in (1.0,) if sided == "one" else (1.0, -1.0):
            target = sgn * x
            if (prev_x - target) * (x_pre - target) <= 0 and prev_x != x_pre:
                t_hit = prev_t + (target - prev_x) / (-drift)
                if prev_t <= t_hit <= t_next and (sgn * target >= sgn * prev_x or True):
                    lv = x_pre if sgn == 1.0 else -x_pre
                    if (sgn == 1.0 and x_pre >= target) or (sgn == -1.0 and x_pre <= target):
                        return c_rate * t_hit <= y2 * (1 + 1e-12)
        if x_post is None:
            break
        lv = abs(x_post) if sided == "two" else x_post
        if lv >= x:
            return c_rate * t_next <= y2 * (1 + 1e-12)
        prev_t, prev_x = t_next, x_post
    return False


@pytest.mark.parametrize("sided", ["one", "two"])
def test_poisson_first_passage_matches_brute_force_with_drift(sided):
    # asymmetric marks give a nonzero compensator drift between jumps
    space = MarkSpace((-1.0, 2.0))
    model = PoissonModel(1.5, space, [0.7, 0.3])
    w = identity_integrand(space)
    pairs = [(0.8, 4.0), (1.5, 10.0), (2.5, 3.0), (4.0, 30.0)]
    reports = mc_tail_grid(w, model, 8.0, pairs, 10.0, 400, 2024, sided=sided)
    brute = np.zeros(len(pairs), dtype=int)
    for i in range(400):
        stream = simulate(model, 8.0, derive_seed(2024, i))
        for j, (x, y2) in enumerate(pairs):
            brute[j] += _brute_force_hit(model, w, stream, 8.0, x, y2, sided)
    for rep, b in zip(reports, brute):
        assert rep.empirical_hits == b


def test_terminal_exceedance_matches_direct_evaluation():
    thresholds = [1.0, 3.0, 5.0]
    reps = 300
    counts = terminal_exceedance(IDENT, RADEMACHER, 20.0, thresholds, reps, 55, sided="two")
    direct = np.zeros(len(thresholds), dtype=int)
    for i in range(reps):
        stream = simulate(RADEMACHER, 20.0, derive_seed(55, i))
        xt = pathwise_integral(IDENT, RADEMACHER, stream, 20.0)
        direct += np.abs(xt) >= np.asarray(thresholds)
    assert np.array_equal(counts, direct)


def test_dominance_on_small_grid():
    pairs = [(x, y2) for x in (5.0, 8.0, 12.0) for y2 in (25.0, 50.0)]
    k = minimal_k(IDENT, RADEMACHER, 50.0).k_hat
    reports = mc_tail_grid(IDENT, RADEMACHER, 50.0, pairs, k, 4000, 1234)
    assert all(r.conditioned for r in reports)
    assert all(r.passed for r in reports)
