"""Monte Carlo harness: data generation, replication driver, and metric
aggregation (selection frequencies, classification frequencies, interval
coverage and width per method).

Replications are independent: replication r derives its seed from the
master seed and r, so a run produces byte-identical reports whether the
replications execute serially or across a process pool.  Replications
whose fits fail numerically are dropped and counted.
"""

from __future__ import annotations

import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._rng import mix_seed
from .errors import WsiError
from .glm_core import Dataset, GlmFamily, MleFit, fit_mle, make_dataset
from .inference import (
    METHOD_ABSENT,
    METHOD_DEBIASED,
    IntervalSet,
    bootstrap_ci,
    ci_strong,
    debiased_quantities,
    old_two_step_ci,
    two_step_ci,
    ci_mle,
)
from .onestep_lasso import one_step_fit, select_lambda
from .selection_prob import selection_profile
from .signal_id import Thresholds, calibrate_delta2, classify

METHODS_DEFAULT = ("two_step", "old_two_step", "mle")
METHODS_KNOWN = ("two_step", "old_two_step", "mle", "debiased", "bootstrap")

SCHEMA_VERSION = 1
TSV_SIG_DIGITS = 6


@dataclass(frozen=True)
class DgpConfig:
    """Data-generating process: rows are correlated normal covariates
    (AR(1) correlation rho^|j-k|), standardized, with the response drawn
    from ``family`` at mu = alpha0 + x' beta0.

    The default coefficient vector is (1, 1, 0.5, theta, 0.3 repeated q
    times, 0 elsewhere): two large effects, one moderate effect, one
    varying effect, q moderate-weak effects, and p - 4 - q true zeros.
    ``beta0_override`` replaces the template wholesale when set.
    """

    n: int
    p: int
    rho: float = 0.0
    alpha0: float = 0.5
    theta: float = 0.0
    q: int = 0
    family: GlmFamily = field(default_factory=lambda: GlmFamily("logistic"))
    seed: int = 0
    beta0_override: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.p < 4 + self.q or self.q < 0:
            raise ValueError("need p >= 4 + q and q >= 0")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.n <= self.p:
            raise ValueError("need n > p")
        if self.beta0_override is not None and len(self.beta0_override) != self.p:
            raise ValueError("beta0_override must have length p")

    def beta0(self) -> np.ndarray:
        if self.beta0_override is not None:
            return np.asarray(self.beta0_override, dtype=float)
        beta = np.zeros(self.p)
        beta[:3] = (1.0, 1.0, 0.5)
        beta[3] = self.theta
        beta[4 : 4 + self.q] = 0.3
        return beta


@dataclass(frozen=True)
class SimulationReport:
    """Aggregated Monte Carlo results.

    Per coordinate: selection frequency, classification frequency triple
    (strong, weak, noise; each row sums to 1), and per requested method the
    interval count, coverage rate, and mean width.  Coverage and width for
    a coordinate are computed only over replications where the method
    produced an interval; with zero intervals they are NaN (serialized as
    null), not 0.
    """

    config: dict
    n_reps: int
    n_failed: int
    beta_true: np.ndarray
    selection_freq: np.ndarray
    class_freq: np.ndarray
    n_intervals: dict[str, np.ndarray]
    coverage: dict[str, np.ndarray]
    mean_width: dict[str, np.ndarray]
    lambdas: np.ndarray
    delta2s: np.ndarray


def generate_dataset(cfg: DgpConfig, rep_seed: int) -> Dataset:
    """Draw one dataset: correlated normal rows via the Cholesky factor of
    the AR(1) correlation, column standardization, then the response at
    mu = alpha0 + x_std' beta0.  Deterministic for a fixed seed."""
    rng = np.random.default_rng(rep_seed)
    z = rng.standard_normal((cfg.n, cfg.p))
    if cfg.rho != 0.0:
        idx = np.arange(cfg.p)
        corr = cfg.rho ** np.abs(idx[:, None] - idx[None, :])
        z = z @ np.linalg.cholesky(corr).T
    x_raw = z
    # the coefficient vector lives on the standardized scale, so the mean
    # uses the standardized columns
    col_means = x_raw.mean(axis=0)
    col_sds = x_raw.std(axis=0, ddof=1)
    x_std = (x_raw - col_means) / col_sds
    mu = cfg.alpha0 + x_std @ cfg.beta0()
    family = cfg.family
    if family.kind == "logistic":
        y = rng.binomial(1, 1.0 / (1.0 + np.exp(-mu))).astype(float)
    elif family.kind == "poisson":
        y = rng.poisson(np.exp(mu)).astype(float)
    else:
        sigma2 = 1.0 if family.sigma2 is None else family.sigma2
        y = mu + rng.normal(0.0, np.sqrt(sigma2), size=cfg.n)
    return make_dataset(x_raw, y, family)


def _mle_interval_set(mle: MleFit, p: int, alpha: float) -> IntervalSet:
    lower = np.empty(p)
    upper = np.empty(p)
    for j in range(p):
        lower[j], upper[j] = ci_mle(mle, j, alpha)
    return IntervalSet(lower, upper, tuple(["mle"] * p), alpha)


def _debiased_interval_set(onestep, dq, p: int, alpha: float) -> IntervalSet:
    lower = np.full(p, np.nan)
    upper = np.full(p, np.nan)
    method = [METHOD_ABSENT] * p
    if dq is not None:
        for j in onestep.active_set:
            lower[j], upper[j] = ci_strong(onestep, dq, int(j), alpha)
            method[j] = METHOD_DEBIASED
    return IntervalSet(lower, upper, tuple(method), alpha)


def _one_replication(
    cfg: DgpConfig,
    thresholds: Thresholds,
    methods: Sequence[str],
    n_boot: int,
    grid_size: int,
    folds: int,
    rep_index: int,
) -> dict:
    """Run one replication end to end; returns plain arrays for merging."""
    rep_seed = mix_seed(cfg.seed, rep_index)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            data = generate_dataset(cfg, rep_seed)
            mle = fit_mle(cfg.family, data)
            lam = select_lambda(
                cfg.family,
                data,
                grid_size=grid_size,
                folds=folds,
                seed=mix_seed(rep_seed, 1),
                mle=mle,
            ).value
            fit1 = one_step_fit(mle, data, lam)
            profile = selection_profile(mle, data, lam)
            delta2 = calibrate_delta2(profile, fit1, thresholds.tau)
            # the quantile can exceed delta1 when even unselected
            # coordinates carry high probabilities; the partition needs
            # delta2 strictly below delta1
            delta2 = min(delta2, np.nextafter(thresholds.delta1, 0.0))
            th = Thresholds(
                delta1=thresholds.delta1,
                delta2=delta2,
                tau=thresholds.tau,
                alpha=thresholds.alpha,
            )
            cls = classify(profile, th)
            dq = (
                debiased_quantities(mle, fit1, data, lam)
                if fit1.active_set.size
                else None
            )
            intervals: dict[str, IntervalSet] = {}
            for name in methods:
                if name == "two_step":
                    intervals[name] = two_step_ci(mle, fit1, dq, cls, thresholds.alpha)
                elif name == "old_two_step":
                    intervals[name] = old_two_step_ci(
                        mle, fit1, dq, cls, thresholds.alpha
                    )
                elif name == "mle":
                    intervals[name] = _mle_interval_set(mle, data.p, thresholds.alpha)
                elif name == "debiased":
                    intervals[name] = _debiased_interval_set(
                        fit1, dq, data.p, thresholds.alpha
                    )
                elif name == "bootstrap":
                    intervals[name] = bootstrap_ci(
                        cfg.family,
                        data,
                        n_boot=n_boot,
                        alpha=thresholds.alpha,
                        seed=mix_seed(rep_seed, 2),
                    )
                else:
                    raise ValueError(f"unknown interval method {name!r}")
    except WsiError as exc:
        return {"ok": False, "error": type(exc).__name__}
    class_code = np.full(cfg.p, 2, dtype=np.int64)  # 0 strong, 1 weak, 2 noise
    class_code[cls.strong] = 0
    class_code[cls.weak] = 1
    return {
        "ok": True,
        "selected": fit1.gamma1[1:] != 0.0,
        "class_code": class_code,
        "lambda": lam,
        "delta2": delta2,
        "lower": {name: iv.lower for name, iv in intervals.items()},
        "upper": {name: iv.upper for name, iv in intervals.items()},
    }


def _worker_count(workers: int | None, reps: int) -> int:
    cap = os.environ.get("WSI_THREADS")
    cap = int(cap) if cap else None
    if workers is None:
        workers = os.cpu_count() or 1
    if cap is not None:
        workers = min(workers, cap)
    return max(1, min(workers, reps))


def run_monte_carlo(
    cfg: DgpConfig,
    reps: int,
    methods: Sequence[str] = METHODS_DEFAULT,
    thresholds: Thresholds | None = None,
    n_boot: int = 1000,
    grid_size: int = 100,
    folds: int = 5,
    workers: int | None = None,
) -> SimulationReport:
    """Run ``reps`` replications of the full pipeline and aggregate.

    Each replication generates data, fits, tunes the penalty, classifies,
    and builds intervals for every requested method.  ``workers`` defaults
    to the CPU count; the WSI_THREADS environment variable caps it.  The
    report is identical for any worker count.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    unknown = [m for m in methods if m not in METHODS_KNOWN]
    if unknown:
        raise ValueError(f"unknown interval method(s) {unknown}")
    thresholds = thresholds if thresholds is not None else Thresholds()
    workers = _worker_count(workers, reps)
    args = [
        (cfg, thresholds, tuple(methods), n_boot, grid_size, folds, r)
        for r in range(reps)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    _one_replication,
                    *zip(*args),
                    chunksize=max(1, reps // (workers * 4)),
                )
            )
    else:
        results = [_one_replication(*a) for a in args]

    ok = [r for r in results if r["ok"]]
    n_failed = reps - len(ok)
    p = cfg.p
    beta_true = cfg.beta0()
    if not ok:
        nan_p = np.full(p, np.nan)
        return SimulationReport(
            config=_config_echo(cfg, thresholds, methods, reps, n_boot, grid_size, folds),
            n_reps=reps,
            n_failed=n_failed,
            beta_true=beta_true,
            selection_freq=nan_p,
            class_freq=np.full((p, 3), np.nan),
            n_intervals={m: np.zeros(p, dtype=np.int64) for m in methods},
            coverage={m: nan_p.copy() for m in methods},
            mean_width={m: nan_p.copy() for m in methods},
            lambdas=np.empty(0),
            delta2s=np.empty(0),
        )

    selected = np.vstack([r["selected"] for r in ok])
    class_codes = np.vstack([r["class_code"] for r in ok])
    class_freq = np.stack(
        [(class_codes == code).mean(axis=0) for code in (0, 1, 2)], axis=1
    )
    n_intervals: dict[str, np.ndarray] = {}
    coverage: dict[str, np.ndarray] = {}
    mean_width: dict[str, np.ndarray] = {}
    for name in methods:
        lower = np.vstack([r["lower"][name] for r in ok])
        upper = np.vstack([r["upper"][name] for r in ok])
        have = ~np.isnan(lower)
        counts = have.sum(axis=0)
        with np.errstate(invalid="ignore"):
            covered = (lower <= beta_true[None, :]) & (beta_true[None, :] <= upper)
        coverage[name] = np.where(
            counts > 0, np.where(have, covered, False).sum(axis=0) / np.maximum(counts, 1), np.nan
        )
        width = np.where(have, upper - lower, 0.0)
        mean_width[name] = np.where(
            counts > 0, width.sum(axis=0) / np.maximum(counts, 1), np.nan
        )
        n_intervals[name] = counts.astype(np.int64)
    return SimulationReport(
        config=_config_echo(cfg, thresholds, methods, reps, n_boot, grid_size, folds),
        n_reps=reps,
        n_failed=n_failed,
        beta_true=beta_true,
        selection_freq=selected.mean(axis=0),
        class_freq=class_freq,
        n_intervals=n_intervals,
        coverage=coverage,
        mean_width=mean_width,
        lambdas=np.array([r["lambda"] for r in ok]),
        delta2s=np.array([r["delta2"] for r in ok]),
    )


def _config_echo(cfg, thresholds, methods, reps, n_boot, grid_size, folds) -> dict:
    return {
        "n": cfg.n,
        "p": cfg.p,
        "rho": cfg.rho,
        "alpha0": cfg.alpha0,
        "theta": cfg.theta,
        "q": cfg.q,
        "family": cfg.family.kind,
        "sigma2": cfg.family.sigma2,
        "seed": cfg.seed,
        "beta0_override": (
            list(cfg.beta0_override) if cfg.beta0_override is not None else None
        ),
        "reps": reps,
        "methods": list(methods),
        "delta1": thresholds.delta1,
        "tau": thresholds.tau,
        "alpha": thresholds.alpha,
        "n_boot": n_boot,
        "grid_size": grid_size,
        "folds": folds,
    }


def empirical_selection_prob(report: SimulationReport, j: int) -> float:
    """Fraction of successful replications whose penalized fit kept
    coordinate j."""
    return float(report.selection_freq[j])


def coverage_summary(report: SimulationReport) -> list[dict]:
    """Rows (method, coordinate, coverage, mean width x100, intervals).

    Coordinates are reported 1-based to match the column labels x1..xp;
    a method/coordinate pair with no intervals reports None, not 0.
    """
    rows = []
    for name in report.coverage:
        for j in range(report.beta_true.size):
            cov = report.coverage[name][j]
            width = report.mean_width[name][j]
            rows.append(
                {
                    "method": name,
                    "coordinate": j + 1,
                    "coverage": None if np.isnan(cov) else float(cov),
                    "mean_width_x100": None if np.isnan(width) else float(width) * 100.0,
                    "n_intervals": int(report.n_intervals[name][j]),
                }
            )
    return rows


def _nan_to_none(values: np.ndarray) -> list:
    return [None if np.isnan(v) else float(v) for v in np.asarray(values, float)]


def report_to_json(report: SimulationReport) -> str:
    """Serialize a report to a stable JSON document."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": report.config,
        "n_reps": report.n_reps,
        "n_failed": report.n_failed,
        "beta_true": [float(b) for b in report.beta_true],
        "selection_freq": _nan_to_none(report.selection_freq),
        "classification_freq": {
            "strong": _nan_to_none(report.class_freq[:, 0]),
            "weak": _nan_to_none(report.class_freq[:, 1]),
            "noise": _nan_to_none(report.class_freq[:, 2]),
        },
        "methods": {
            name: {
                "n_intervals": [int(c) for c in report.n_intervals[name]],
                "coverage": _nan_to_none(report.coverage[name]),
                "mean_width": _nan_to_none(report.mean_width[name]),
            }
            for name in report.coverage
        },
        "lambda_median": (
            float(np.median(report.lambdas)) if report.lambdas.size else None
        ),
        "lambdas": [float(v) for v in report.lambdas],
        "delta2_median": (
            float(np.median(report.delta2s)) if report.delta2s.size else None
        ),
    }
    return json.dumps(doc, indent=2)


def _tsv_num(value) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "NA"
    return f"{value:.{TSV_SIG_DIGITS}g}"


def report_to_tsv(report: SimulationReport) -> str:
    """One row per method and coordinate, tab-separated, 6 significant
    digits, suitable for plotting."""
    header = [
        "method",
        "coordinate",
        "beta_true",
        "selection_freq",
        "strong_freq",
        "weak_freq",
        "noise_freq",
        "n_intervals",
        "coverage",
        "mean_width_x100",
    ]
    lines = ["\t".join(header)]
    for row in coverage_summary(report):
        j = row["coordinate"] - 1
        lines.append(
            "\t".join(
                [
                    row["method"],
                    str(row["coordinate"]),
                    _tsv_num(float(report.beta_true[j])),
                    _tsv_num(float(report.selection_freq[j])),
                    _tsv_num(float(report.class_freq[j, 0])),
                    _tsv_num(float(report.class_freq[j, 1])),
                    _tsv_num(float(report.class_freq[j, 2])),
                    str(row["n_intervals"]),
                    _tsv_num(row["coverage"]),
                    _tsv_num(row["mean_width_x100"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"
