"""Experiment orchestration: configs, seeding, dispatch, report emission.

Experiments are described by a single TOML file (key-value tree with nested
tables; unknown keys are errors).  Every campaign derives one seed per
replicate from the master seed, evaluates replicates in fixed-size chunks,
and merges chunk results in index order with order-insensitive reductions
(counts, sums, maxima, concatenation), so reports are byte-identical for
identical (config, master_seed) pairs regardless of the worker count.

Outputs per run: ``report.jsonl`` (one row per case, sorted keys),
``summary.csv`` (same rows as CSV), optional ``tail_curve.csv`` for
campaigns with a u grid, plus ``run_meta.json`` carrying the config echo
and wall clock (kept out of report.jsonl on purpose).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .errors import ConfigurationError, PPBoundsError
from .seeding import derive_seed
from .point_process import (
    AtomModel,
    CompensatorModel,
    MarkSpace,
    PoissonModel,
    PredictableIntegrand,
    constant_integrand,
    identity_integrand,
    simulate,
    table_integrand,
    threshold_integrand,
)
from . import bernstein as _bernstein
from . import chaining as _chaining
from . import empirical as _empirical
from . import exponential as _exponential
from . import mle as _mle

__all__ = [
    "derive_seed",
    "ExperimentConfig",
    "VerificationReport",
    "load_config",
    "run",
    "EXPERIMENT_KINDS",
]

EXPERIMENT_KINDS = ("simulate", "bernstein", "martingale", "gamma", "chaining", "empirical", "mle")
DEFAULT_CHUNK_SIZE = 4096

_TOP_KEYS = {
    "kind": str,
    "master_seed": int,
    "replicates": int,
    "out_dir": str,
    "format": str,
    "workers": int,
    "chunk_size": int,
}
_MODEL_KEYS = {
    "type": str, "rate": (int, float), "spacing": (int, float),
    "atom_probability": (int, float), "marks": list, "kernel": list,
    "initial_state": (int, float, list),
}
_INTEGRAND_KEYS = {"type": str, "value": (int, float), "tau": (int, float), "values": list, "bound": (int, float)}
_SECTION_KEYS = {
    "simulate": {"horizon": (int, float), "paths": int},
    "bernstein": {
        "horizon": (int, float), "x_grid": list, "y2_grid": list, "pairs": list,
        "k": (int, float, str), "m_max": int, "mode": str, "sided": str,
    },
    "martingale": {"horizon": (int, float), "lambdas": list, "k": (int, float)},
    "gamma": {"points": list, "matrix": list, "alphas": list, "solver": str, "max_points": int},
    "chaining": {
        "horizon": (int, float), "thresholds": list, "u_grid": list, "m_max": int,
        "mode": str, "max_points": int, "slope_max": (int, float), "include_zero": bool,
    },
    "empirical": {
        "alphabet": list, "law": list, "initial": list, "experiment": str, "n": int,
        "psi": list, "x": (int, float), "y2": (int, float), "k": (int, float, str),
        "sided": str, "thresholds": list, "u_grid": list, "m_max": int,
        "max_points": int, "slope_max": (int, float),
    },
    "mle": {
        "family": str, "thetas": list, "theta0": (int, float), "support": list,
        "densities": list, "theta0_index": int, "n_grid": list, "u_grid": list,
        "m_max": int, "max_points": int, "slope_band": list,
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (one kind, one nested table each)."""

    kind: str
    master_seed: int
    replicates: int
    out_dir: str | None
    format: str
    workers: int
    chunk_size: int
    model: dict | None
    integrand: dict | None
    params: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _check_keys(table: dict, allowed: dict, where: str) -> None:
    for key, value in table.items():
        if key not in allowed:
            raise ConfigurationError(f"unknown config key {where}.{key}")
        expected = allowed[key]
        if not isinstance(value, expected if isinstance(expected, tuple) else (expected,)):
            raise ConfigurationError(f"config key {where}.{key} has the wrong type")


def parse_config(data: dict, kind_override: str | None = None) -> ExperimentConfig:
    top = {k: v for k, v in data.items() if not isinstance(v, dict)}
    _check_keys(top, _TOP_KEYS, "")
    kind = kind_override or top.get("kind")
    if kind is None:
        raise ConfigurationError("config must declare 'kind' (or pass a CLI command)")
    if "kind" in top and kind_override and top["kind"] != kind_override:
        raise ConfigurationError(
            f"config kind {top['kind']!r} does not match the CLI command {kind_override!r}"
        )
    if kind not in EXPERIMENT_KINDS:
        raise ConfigurationError(f"unknown experiment kind {kind!r}")
    sections = {k: v for k, v in data.items() if isinstance(v, dict)}
    allowed_sections = {"model", "integrand", kind}
    for name in sections:
        if name not in allowed_sections:
            raise ConfigurationError(f"unknown config section [{name}] for kind {kind!r}")
    if "model" in sections:
        _check_keys(sections["model"], _MODEL_KEYS, "model")
    if "integrand" in sections:
        _check_keys(sections["integrand"], _INTEGRAND_KEYS, "integrand")
    if kind in sections:
        _check_keys(sections[kind], _SECTION_KEYS[kind], kind)
    params = sections.get(kind, {})
    replicates = int(top.get("replicates", 1000))
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    return ExperimentConfig(
        kind=kind,
        master_seed=int(top.get("master_seed", 0)),
        replicates=replicates,
        out_dir=top.get("out_dir"),
        format=top.get("format", "json"),
        workers=int(top.get("workers", 1)),
        chunk_size=int(top.get("chunk_size", DEFAULT_CHUNK_SIZE)),
        model=sections.get("model"),
        integrand=sections.get("integrand"),
        params=params,
        raw=data,
    )


def load_config(path: str | Path, kind_override: str | None = None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file is not valid TOML: {exc}") from None
    return parse_config(data, kind_override)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_model(section: dict | None) -> CompensatorModel:
    if not section:
        raise ConfigurationError("experiment needs a [model] section")
    mtype = section.get("type")
    marks = section.get("marks")
    if marks is None:
        raise ConfigurationError("model.marks is required")
    space = MarkSpace(tuple(float(m) for m in marks))
    if mtype == "poisson":
        kernel = section.get("kernel", [1.0 / len(space)] * len(space))
        return PoissonModel(float(section.get("rate", 1.0)), space, np.asarray(kernel, dtype=float))
    if mtype == "atom":
        kernel = np.asarray(section.get("kernel", [1.0 / len(space)] * len(space)), dtype=float)
        init = section.get("initial_state")
        if isinstance(init, list):
            init = np.asarray(init, dtype=float)
        return AtomModel(
            float(section.get("spacing", 1.0)),
            float(section.get("atom_probability", 1.0)),
            space,
            kernel,
            initial_state=init,
        )
    raise ConfigurationError(f"unknown model type {mtype!r}")


def build_integrand(section: dict | None, model: CompensatorModel) -> PredictableIntegrand:
    if not section:
        raise ConfigurationError("experiment needs an [integrand] section")
    itype = section.get("type", "identity")
    space = model.mark_space
    if itype == "identity":
        return identity_integrand(space)
    if itype == "constant":
        return constant_integrand(float(section.get("value", 1.0)))
    if itype == "threshold":
        return threshold_integrand(float(section.get("tau", 0.0)))
    if itype == "table":
        values = section.get("values")
        if values is None:
            raise ConfigurationError("table integrand needs 'values'")
        return table_integrand(space, [float(v) for v in values])
    raise ConfigurationError(f"unknown integrand type {itype!r}")


def _build_ts_model(params: dict) -> _empirical.TimeSeriesModel:
    alphabet = params.get("alphabet")
    law = params.get("law")
    if alphabet is None or law is None:
        raise ConfigurationError("[empirical] needs 'alphabet' and 'law'")
    initial = params.get("initial")
    return _empirical.TimeSeriesModel(
        tuple(float(a) for a in alphabet),
        np.asarray(law, dtype=float),
        np.asarray(initial, dtype=float) if initial is not None else None,
    )


def _build_mle_family(params: dict) -> _mle.ParametricFamily:
    fam = params.get("family", "bernoulli_grid")
    if fam == "bernoulli_grid":
        thetas = params.get("thetas")
        theta0 = params.get("theta0")
        if thetas is None or theta0 is None:
            raise ConfigurationError("bernoulli_grid needs 'thetas' and 'theta0'")
        return _mle.bernoulli_grid([float(t) for t in thetas], float(theta0))
    if fam == "categorical":
        support = params.get("support")
        densities = params.get("densities")
        idx = params.get("theta0_index")
        if support is None or densities is None or idx is None:
            raise ConfigurationError("categorical needs 'support', 'densities', 'theta0_index'")
        return _mle.categorical_family(support, densities, int(idx))
    raise ConfigurationError(f"unknown mle family {fam!r}")


# ---------------------------------------------------------------------------
# chunked evaluation
# ---------------------------------------------------------------------------

def _chunks(replicates: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk_size, replicates)) for lo in range(0, replicates, chunk_size)]


def _call(job):
    fn, args, lo, hi = job
    return fn(*args, lo, hi)


def map_chunked(fn, args: tuple, replicates: int, chunk_size: int, workers: int) -> list:
    """Evaluate fn(*args, lo, hi) over fixed chunks; results in chunk order.

    The chunk layout depends only on (replicates, chunk_size), and each
    replicate's seed depends only on its index, so the merged output is
    independent of the worker count.
    """
    jobs = [(fn, args, lo, hi) for lo, hi in _chunks(replicates, chunk_size)]
    if workers <= 1 or len(jobs) == 1:
        return [_call(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))


# ---------------------------------------------------------------------------
# experiment drivers (each returns a list of report rows)
# ---------------------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def _run_simulate(cfg: ExperimentConfig, out: Path | None):
    model = build_model(cfg.model)
    horizon = float(cfg.params.get("horizon", 10.0))
    n_paths = int(cfg.params.get("paths", 1))
    rows = []
    lines = ["replicate,time,mark"]
    for i in range(n_paths):
        stream = simulate(model, horizon, derive_seed(cfg.master_seed, i))
        for t, m in zip(stream.times, stream.marks):
            lines.append(f"{i},{t!r},{m!r}")
        rows.append({
            "case": f"stream[{i}]", "events": len(stream), "horizon": horizon,
            "verdict": "info",
        })
    if out is not None:
        (out / "streams.csv").write_text("\n".join(lines) + "\n")
    return rows, None


def _resolve_k(kval, w, model, horizon, m_max, mode, sided) -> float:
    if kval == "auto" or kval is None:
        target = _bernstein.abs_integrand(w) if sided == "two" else w
        return _bernstein.minimal_k(target, model, horizon, m_max=m_max, mode=mode).k_hat
    return float(kval)


def _run_bernstein(cfg: ExperimentConfig, out: Path | None):
    model = build_model(cfg.model)
    w = build_integrand(cfg.integrand, model)
    p = cfg.params
    horizon = float(p.get("horizon", 100.0))
    m_max = int(p.get("m_max", 8))
    mode = p.get("mode", "instantaneous")
    sided = p.get("sided", "one")
    if "pairs" in p:
        pairs = [(float(x), float(y2)) for x, y2 in p["pairs"]]
    else:
        xs = [float(v) for v in p.get("x_grid", [])]
        y2s = [float(v) for v in p.get("y2_grid", [])]
        if not xs or not y2s:
            raise ConfigurationError("[bernstein] needs 'pairs' or 'x_grid' and 'y2_grid'")
        pairs = [(x, y2) for x in xs for y2 in y2s]
    k = _resolve_k(p.get("k", "auto"), w, model, horizon, m_max, mode, sided)
    conditioned = _bernstein._validate_k(w, model, horizon, k, sided, m_max, mode)
    partials = map_chunked(
        _bernstein.grid_hits, (w, model, horizon, pairs, sided, cfg.master_seed),
        cfg.replicates, cfg.chunk_size, cfg.workers,
    )
    hits = np.sum(partials, axis=0)
    rows = []
    for (x, y2), h in zip(pairs, hits):
        rep = _bernstein.TailReport.build(x, y2, k, sided, cfg.replicates, int(h), conditioned)
        rows.append({
            "case": f"x={x},y2={y2}", "x": x, "y2": y2, "k": k, "sided": sided,
            "hits": rep.empirical_hits, "empirical": rep.empirical_prob,
            "cp99": rep.cp99_upper, "bound": rep.bound_value,
            "verdict": "unconditioned" if not conditioned else ("pass" if rep.passed else "fail"),
        })
    return rows, None


def _run_martingale(cfg: ExperimentConfig, out: Path | None):
    model = build_model(cfg.model)
    w = build_integrand(cfg.integrand, model)
    p = cfg.params
    horizon = float(p.get("horizon", 50.0))
    lambdas = tuple(float(l) for l in p.get("lambdas", [0.2, 1.0, 1.8]))
    k = p.get("k")
    partials = map_chunked(
        _exponential.ratio_moments, (w, model, lambdas, horizon, cfg.master_seed),
        cfg.replicates, cfg.chunk_size, cfg.workers,
    )
    moments = np.sum(partials, axis=0)
    rows = []
    for lam, mom in zip(lambdas, moments):
        res = _exponential.martingale_mean_check(
            w, model, lam, horizon, cfg.replicates, cfg.master_seed,
            k=float(k) if k is not None else None, moments=mom,
        )
        rows.append({
            "case": f"lambda={lam}", "lambda": lam, "t": horizon,
            "mean": res.sample_mean, "sample_std": res.sample_std,
            "exact_std": res.exact_std, "se": res.se, "se_kind": res.se_kind,
            "verdict": "pass" if res.passed else "fail",
        })
    return rows, None


def _run_gamma(cfg: ExperimentConfig, out: Path | None):
    p = cfg.params
    points = p.get("points")
    matrix = p.get("matrix")
    if points is None or matrix is None:
        raise ConfigurationError("[gamma] needs 'points' and 'matrix'")
    space = _chaining.FiniteMetricSpace(tuple(str(s) for s in points), np.asarray(matrix, dtype=float))
    solver = p.get("solver", "both")
    max_points = int(p.get("max_points", _chaining.EXHAUSTIVE_CAP))
    rows = []
    for alpha in [float(a) for a in p.get("alphas", [1.0, 2.0])]:
        res = {}
        if solver in ("exact", "both") and len(space) <= max_points:
            res["exact"] = _chaining.exact_gamma(space, alpha, max_points)
        if solver in ("greedy", "both"):
            res["greedy"] = _chaining.greedy_gamma(space, alpha)
        verdict = "info"
        if "exact" in res and "greedy" in res:
            verdict = "pass" if res["greedy"].value >= res["exact"].value - 1e-12 else "fail"
        row = {"case": f"alpha={alpha}", "alpha": alpha, "verdict": verdict}
        for name, g in res.items():
            row[f"gamma_{name}"] = g.value
            row[f"witness_{name}"] = json.loads(g.witness.to_json())
        rows.append(row)
    return rows, None


def _threshold_family(model, thresholds, include_zero):
    family = [threshold_integrand(float(t)) for t in thresholds]
    if include_zero:
        family.append(constant_integrand(0.0))
    return family


def _run_chaining(cfg: ExperimentConfig, out: Path | None):
    model = build_model(cfg.model)
    p = cfg.params
    horizon = float(p.get("horizon", 64.0))
    thresholds = p.get("thresholds")
    if thresholds is None:
        raise ConfigurationError("[chaining] needs 'thresholds'")
    family = _threshold_family(model, thresholds, bool(p.get("include_zero", False)))
    u_grid = [float(u) for u in p.get("u_grid", [1, 2, 3, 4, 5, 6])]
    report = _chaining.verify_uniform(
        family, model, horizon, cfg.replicates, u_grid, cfg.master_seed,
        m_max=int(p.get("m_max", 8)), mode=p.get("mode", "instantaneous"),
        max_points=int(p.get("max_points", _chaining.EXHAUSTIVE_CAP)),
    )
    slope_max = float(p.get("slope_max", -0.4))
    ok = (
        report.conditioned and math.isfinite(report.fitted_c)
        and (report.tail_log_slope is None or report.tail_log_slope <= slope_max)
    )
    rows = [{
        "case": "uniform", "gamma1": report.gamma1, "gamma2": report.gamma2,
        "common_k": report.common_k, "fitted_c": report.fitted_c,
        "mean_sup": report.mean_sup, "mean_bound_constant": report.mean_bound_constant,
        "tail_log_slope": report.tail_log_slope, "solver": report.gamma_solver,
        "verdict": "pass" if ok else ("unconditioned" if not report.conditioned else "fail"),
    }]
    for u, h, e, cp, env in zip(report.u_grid, report.hits, report.empirical, report.cp99, report.envelope):
        rows.append({
            "case": f"u={u}", "u": u, "hits": h, "empirical": e, "cp99": cp,
            "envelope": env, "verdict": "pass" if cp <= env else "fail",
        })
    curve = [(u, e, cp, env) for u, e, cp, env in zip(report.u_grid, report.empirical, report.cp99, report.envelope)]
    return rows, curve


def _run_empirical(cfg: ExperimentConfig, out: Path | None):
    p = cfg.params
    ts_model = _build_ts_model(p)
    experiment = p.get("experiment", "uniform")
    n = int(p.get("n", 64))
    if experiment == "tail":
        psi = p.get("psi")
        if psi is None:
            raise ConfigurationError("[empirical] tail experiment needs 'psi'")
        psi = np.asarray([float(v) for v in psi])
        x = float(p.get("x", 1.0))
        y2 = float(p.get("y2", float(n)))
        sided = p.get("sided", "one")
        m_max = int(p.get("m_max", 8))
        kval = p.get("k", "auto")
        model = ts_model.to_atom_model()
        w = table_integrand(model.mark_space, psi, name="psi")
        k = _resolve_k(kval, w, model, float(n), m_max, "instantaneous", sided)
        rep = _empirical.verify_tail(
            psi, ts_model, n, x, y2, k, cfg.replicates, cfg.master_seed, sided=sided, m_max=m_max
        )
        rows = [{
            "case": f"x={x},y2={y2}", "x": x, "y2": y2, "k": k, "sided": sided,
            "hits": rep.empirical_hits, "empirical": rep.empirical_prob,
            "cp99": rep.cp99_upper, "bound": rep.bound_value,
            "verdict": "unconditioned" if not rep.conditioned else ("pass" if rep.passed else "fail"),
        }]
        return rows, None
    if experiment != "uniform":
        raise ConfigurationError(f"unknown empirical experiment {experiment!r}")
    thresholds = p.get("thresholds")
    if thresholds is None:
        raise ConfigurationError("[empirical] uniform experiment needs 'thresholds'")
    fclass = _empirical.FunctionClass.thresholds(ts_model, [float(t) for t in thresholds])
    u_grid = [float(u) for u in p.get("u_grid", [0.5, 1, 1.5, 2, 2.5, 3])]
    report = _empirical.verify_uniform_tail(
        fclass, ts_model, n, u_grid, cfg.replicates, cfg.master_seed,
        m_max=int(p.get("m_max", 8)),
        max_points=int(p.get("max_points", max(len(fclass), _chaining.EXHAUSTIVE_CAP))),
    )
    slope_max = float(p.get("slope_max", -0.4))
    ok = (
        report.conditioned and math.isfinite(report.fitted_c)
        and report.scaling_identity_error <= 1e-12
        and (report.tail_log_slope is None or report.tail_log_slope <= slope_max)
    )
    rows = [{
        "case": f"uniform,n={n}", "n": n, "gamma1": report.gamma1, "gamma2": report.gamma2,
        "scale": report.scale, "common_k": report.common_k, "fitted_c": report.fitted_c,
        "tail_log_slope": report.tail_log_slope, "solver": report.gamma_solver,
        "scaling_identity_error": report.scaling_identity_error,
        "verdict": "pass" if ok else ("unconditioned" if not report.conditioned else "fail"),
    }]
    for u, h, e, cp, env in zip(report.u_grid, report.hits, report.empirical, report.cp99, report.envelope):
        rows.append({
            "case": f"u={u}", "u": u, "hits": h, "empirical": e, "cp99": cp,
            "envelope": env, "verdict": "pass" if cp <= env else "fail",
        })
    curve = [(u, e, cp, env) for u, e, cp, env in zip(report.u_grid, report.empirical, report.cp99, report.envelope)]
    return rows, curve


def _run_mle(cfg: ExperimentConfig, out: Path | None):
    p = cfg.params
    family = _build_mle_family(p)
    n_grid = [int(n) for n in p.get("n_grid", [50, 100, 200, 400])]
    u_grid = [float(u) for u in p.get("u_grid", [0.0005, 0.001, 0.002, 0.005])]
    report = _mle.verify_rate(
        family, n_grid, u_grid, cfg.replicates, cfg.master_seed,
        m_max=int(p.get("m_max", 8)),
        max_points=int(p.get("max_points", _chaining.EXHAUSTIVE_CAP)),
    )
    band = p.get("slope_band", [-1.3, -0.7])
    slope_ok = report.loglog_slope is None or (band[0] <= report.loglog_slope <= band[1])
    ok = (
        report.medians_nonincreasing and report.proof_inequality_violations == 0
        and math.isfinite(report.fitted_c) and slope_ok
    )
    rows = [{
        "case": "rate", "gamma1": report.gamma1, "gamma2": report.gamma2,
        "k_hat": report.k_hat, "fitted_c": report.fitted_c,
        "medians": list(report.medians), "means": list(report.means),
        "loglog_slope": report.loglog_slope,
        "proof_inequality_violations": report.proof_inequality_violations,
        "solver": report.gamma_solver,
        "verdict": "pass" if ok else "fail",
    }]
    for n, u, emp, cp, env in report.tail_rows:
        rows.append({
            "case": f"n={int(n)},u={u}", "n": int(n), "u": u, "empirical": emp,
            "cp99": cp, "envelope": env,
            "verdict": "pass" if cp <= env else "fail",
        })
    curve = [(u, emp, cp, env) for (_, u, emp, cp, env) in report.tail_rows]
    return rows, curve


_DRIVERS = {
    "simulate": _run_simulate,
    "bernstein": _run_bernstein,
    "martingale": _run_martingale,
    "gamma": _run_gamma,
    "chaining": _run_chaining,
    "empirical": _run_empirical,
    "mle": _run_mle,
}


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationReport:
    """Everything one run produced, plus reproducibility metadata."""

    version: str
    kind: str
    master_seed: int
    config_echo: dict
    rows: list[dict]
    summary_pass: bool
    wall_clock: float

    @property
    def exit_code(self) -> int:
        return 0 if self.summary_pass else 1

    def to_jsonl(self) -> str:
        return "".join(json.dumps(row, sort_keys=True) + "\n" for row in self.rows)

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        keys = sorted({k for row in self.rows for k in row})
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(keys)
        for row in self.rows:
            writer.writerow([_csv_cell(row.get(k)) for k in keys])
        return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True)
    return "" if v is None else v


def _config_hash(data: dict) -> str:
    canon = json.dumps(_jsonable(data), sort_keys=True).encode()
    return hashlib.sha256(canon).hexdigest()[:12]


def run(config: ExperimentConfig, out_dir: str | Path | None = None) -> VerificationReport:
    """Dispatch one experiment, write its reports, return the summary.

    Rows are reproducible from (config, master_seed); the wall clock lives
    only in run_meta.json so report.jsonl stays byte-identical across runs.
    """
    started = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else (
        Path(config.out_dir) if config.out_dir else None
    )
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    driver = _DRIVERS[config.kind]
    rows, curve = driver(config, out)
    rows = [_jsonable(row) for row in rows]
    summary_pass = all(row.get("verdict") in ("pass", "info") for row in rows)
    report = VerificationReport(
        version=f"ppbounds-{__version__}+cfg.{_config_hash(config.raw)}",
        kind=config.kind,
        master_seed=config.master_seed,
        config_echo=_jsonable(config.raw),
        rows=rows,
        summary_pass=summary_pass,
        wall_clock=time.perf_counter() - started,
    )
    if out is not None:
        (out / "report.jsonl").write_text(report.to_jsonl())
        (out / "summary.csv").write_text(report.to_csv())
        if curve:
            lines = ["u,empirical,cp99,bound"]
            lines += [f"{u!r},{e!r},{cp!r},{b!r}" for u, e, cp, b in curve]
            (out / "tail_curve.csv").write_text("\n".join(lines) + "\n")
        meta = {
            "version": report.version,
            "kind": report.kind,
            "master_seed": report.master_seed,
            "summary_pass": report.summary_pass,
            "wall_clock_seconds": report.wall_clock,
            "config": report.config_echo,
        }
        (out / "run_meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return report
