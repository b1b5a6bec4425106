import math

import numpy as np
import pytest

from ppbounds.bernstein import mc_tail_verify, terminal_exceedance
from ppbounds.chaining import exact_gamma
from ppbounds.empirical import (
    ClassMetrics,
    FunctionClass,
    TimeSeriesModel,
    check_conditions,
    class_metrics,
    class_sup_chunk,
    index_process,
    simulate_series,
    verify_tail,
    verify_uniform_tail,
)
from ppbounds.errors import ConfigurationError, DataError
from ppbounds.point_process import (
    AtomModel,
    MarkSpace,
    identity_integrand,
    pathwise_integral,
    simulate,
    table_integrand,
)
from ppbounds.seeding import derive_seed

IID = TimeSeriesModel((-1.0, 1.0), np.array([0.5, 0.5]))
MARKOV = TimeSeriesModel((-1.0, 1.0), np.array([[0.9, 0.1], [0.2, 0.8]]))
IDENTITY = np.array([-1.0, 1.0])


def test_model_validation():
    with pytest.raises(ConfigurationError):
        TimeSeriesModel((1.0, 1.0), np.array([0.5, 0.5]))
    with pytest.raises(ConfigurationError):
        TimeSeriesModel((-1.0, 1.0), np.array([0.6, 0.6]))
    with pytest.raises(ConfigurationError):
        TimeSeriesModel((-1.0, 1.0), np.array([[0.9, 0.1], [0.3, 0.6]]))


def test_stationary_distribution():
    pi = MARKOV.stationary()
    assert np.allclose(pi, [2.0 / 3.0, 1.0 / 3.0], atol=1e-10)
    assert np.allclose(pi @ MARKOV.law, pi, atol=1e-11)
    assert np.allclose(IID.stationary(), IID.law, atol=0)


def test_index_process_constant_psi_vanishes():
    series = np.array([1.0, -1.0, 1.0, 1.0])
    path = index_process(series, np.array([2.5, 2.5]), IID)
    assert np.allclose(path, 0.0, atol=0)


def test_index_process_iid_example():
    path = index_process(np.array([1.0, 1.0, -1.0]), IDENTITY, IID)
    assert path[-1] == pytest.approx(1.0)
    assert np.allclose(path, [0.0, 1.0, 2.0, 1.0])


def test_index_process_markov_hand_computed():
    # rows: from -1 the conditional mean is -0.8, from +1 it is +0.6
    series = np.array([-1.0, 1.0, 1.0])
    path = index_process(series, IDENTITY, MARKOV, initial_state=-1.0)
    assert np.allclose(path, [0.0, -0.2, 1.6, 2.0], atol=1e-12)


def test_index_process_rejects_foreign_symbols():
    with pytest.raises(DataError):
        index_process(np.array([0.5]), IDENTITY, IID)


def test_index_process_matches_pathwise_integral_bitwise():
    # dyadic law and marks: both code paths are exact, so equality is bitwise
    stream = simulate_series(IID, 40, 17)
    path = index_process(stream, IDENTITY, IID)
    model = IID.to_atom_model()
    w = identity_integrand(MarkSpace(IID.alphabet))
    for k in (1, 7, 23, 40):
        assert path[k] == pathwise_integral(w, model, stream, float(k))


def test_index_process_matches_pathwise_integral_markov():
    stream = simulate_series(MARKOV, 30, 23)
    path = index_process(stream, IDENTITY, MARKOV)
    model = MARKOV.to_atom_model()
    w = identity_integrand(MarkSpace(MARKOV.alphabet))
    for k in (1, 11, 30):
        assert path[k] == pytest.approx(pathwise_integral(w, model, stream, float(k)), abs=1e-12)


def test_simulate_series_shares_simulate_code_path():
    stream = simulate_series(IID, 25, 5)
    direct = simulate(IID.to_atom_model(), 25.0, 5)
    assert np.array_equal(stream.times, direct.times)
    assert np.array_equal(stream.marks, direct.marks)


def test_class_metrics_examples():
    fclass = FunctionClass(("identity", "zero"), np.array([[-1.0, 1.0], [0.0, 0.0]]), 1.0)
    metrics = class_metrics(fclass, IID)
    assert metrics.d1.d[0, 1] == pytest.approx(0.5)
    assert metrics.d2.d[0, 1] == pytest.approx(1.0)
    assert metrics.d1_raw[0, 1] == pytest.approx(0.5)
    assert metrics.d1_raw[1, 0] == pytest.approx(0.5)
    same = FunctionClass(("a", "b"), np.array([[0.3, -0.2], [0.3, -0.2]]), 1.0)
    m2 = class_metrics(same, IID)
    assert m2.d1.d[0, 1] == 0.0 and m2.d2.d[0, 1] == 0.0


def test_d2_satisfies_triangle_inequality():
    rng = np.random.default_rng(3)
    table = rng.uniform(-1, 1, size=(5, 4))
    fclass = FunctionClass(tuple(f"f{i}" for i in range(5)), table, 1.0)
    ts = TimeSeriesModel((0.0, 1.0, 2.0, 3.0), np.array([0.1, 0.2, 0.3, 0.4]))
    d2 = class_metrics(fclass, ts).d2.d
    n = len(fclass)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                assert d2[i, j] <= d2[i, k] + d2[k, j] + 1e-12


def test_check_conditions_rademacher():
    fclass = FunctionClass(("identity",), IDENTITY[None, :], 1.0)
    rep = check_conditions(fclass, IID)
    assert rep.k_hat == pytest.approx(0.5)
    assert rep.feasible


def test_verify_tail_matches_direct_bernstein_verifier():
    model = IID.to_atom_model()
    w = table_integrand(MarkSpace(IID.alphabet), IDENTITY, name="psi")
    direct = mc_tail_verify(w, model, 64.0, 6.0, 64.0, 0.5, 800, 99)
    embedded = verify_tail(IDENTITY, IID, 64, 6.0, 64.0, 0.5, 800, 99)
    assert embedded.empirical_hits == direct.empirical_hits
    assert embedded.passed == direct.passed


def test_verify_tail_zero_psi_and_zero_horizon():
    zero = np.zeros(2)
    rep = verify_tail(zero, IID, 32, 1.0, 32.0, 0.5, 200, 1)
    assert rep.empirical_hits == 0
    rep0 = verify_tail(IDENTITY, IID, 0, 1.0, 4.0, 0.5, 200, 1)
    assert rep0.empirical_hits == 0


def test_martingale_mean_and_variance_identity_markov():
    reps, n = 8000, 24
    pi = MARKOV.stationary()
    cond_mean = MARKOV.law.dot(IDENTITY)
    cond_var = MARKOV.law.dot(IDENTITY**2) - cond_mean**2
    exact_var = n * float(pi.dot(cond_var))
    finals = np.empty(reps)
    for i in range(reps):
        stream = simulate_series(MARKOV, n, derive_seed(13, i))
        finals[i] = index_process(stream, IDENTITY, MARKOV)[-1]
    assert abs(finals.mean()) <= 3 * finals.std() / math.sqrt(reps)
    sq = finals**2
    assert abs(sq.mean() - exact_var) <= 3 * sq.std() / math.sqrt(reps)


def test_uniform_singleton_matches_terminal_counts():
    fclass = FunctionClass(("identity",), IDENTITY[None, :], 1.0)
    sups = class_sup_chunk(fclass, IID, 32, 77, 0, 400)
    model = IID.to_atom_model()
    w = table_integrand(MarkSpace(IID.alphabet), IDENTITY, name="psi")
    for thr in (2.0, 4.0):
        counts = terminal_exceedance(w, model, 32.0, [thr], 400, 77, sided="two")
        assert int(np.count_nonzero(sups >= thr)) == int(counts[0])


def test_scaling_identities_exact():
    taus = [0.5 + t for t in range(4)]
    ts = TimeSeriesModel((0.0, 1.0, 2.0, 3.0), np.array([0.25] * 4))
    fclass = FunctionClass.thresholds(ts, taus)
    metrics = class_metrics(fclass, ts)
    for n in (4, 16, 64):
        g1 = exact_gamma(metrics.d1, 1.0, 6)
        g1n = exact_gamma(metrics.d1.scale(float(n)), 1.0, 6)
        assert g1n.value == n * g1.value
        g2 = exact_gamma(metrics.d2, 2.0, 6)
        g2n = exact_gamma(metrics.d2.scale(math.sqrt(n)), 2.0, 6)
        assert g2n.value == math.sqrt(n) * g2.value


def test_verify_uniform_tail_threshold_class():
    alphabet = tuple(float(v) for v in range(8))
    ts = TimeSeriesModel(alphabet, np.array([1.0 / 8] * 8))
    fclass = FunctionClass.thresholds(ts, [t + 0.5 for t in range(8)])
    report = verify_uniform_tail(fclass, ts, 64, [1.0, 1.5, 2.0, 2.5, 3.0, 4.0], 3000, 5, max_points=8)
    assert report.conditioned
    assert math.isfinite(report.fitted_c) and report.fitted_c > 0
    assert report.scaling_identity_error <= 1e-12
    assert report.tail_log_slope is not None and report.tail_log_slope <= -0.4
    assert all(cp <= env + 1e-12 for cp, env in zip(report.cp99, report.envelope))
