"""Command-line driver: ``fit``, ``identify``, ``infer``, and ``simulate``
subcommands over CSV input, emitting JSON (or TSV for simulation reports).

Exit codes: 0 on success, 1 on a data error, 2 on a numerical failure.
Diagnostics and warnings go to the error stream; results go to --output or
standard output.  All randomness flows from --seed; when a command needs
randomness and --seed is omitted, a seed is generated and printed so the
run can be reproduced.
"""

from __future__ import annotations

import argparse
import csv
import json
import secrets
import sys
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    EmptyData,
    MissingResponse,
    NonNumericCell,
    NumericalError,
    ParseError,
    WsiError,
)
from .glm_core import Dataset, GlmFamily, MleFit, fit_mle, make_dataset, refit_at
from .inference import (
    METHOD_ABSENT,
    IntervalSet,
    bootstrap_ci,
    ci_mle,
    debiased_quantities,
    old_two_step_ci,
    two_step_ci,
)
from .onestep_lasso import OneStepFit, SelectedLambda, one_step_fit, select_lambda
from .selection_prob import selection_profile
from .signal_id import Thresholds, calibrate_delta2, classify
from .sim_harness import (
    METHODS_DEFAULT,
    METHODS_KNOWN,
    SCHEMA_VERSION,
    DgpConfig,
    report_to_json,
    report_to_tsv,
    run_monte_carlo,
)

CI_METHODS = ("two_step", "old_two_step", "mle", "bootstrap")


class _Parser(argparse.ArgumentParser):
    """Argument errors are user-input problems, so they exit with the data
    error code instead of argparse's default of 2 (reserved for numerical
    failures)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def load_csv(path: str, response: str = "y") -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Parse a UTF-8 CSV with a header row into a covariate matrix, the
    response vector, and the covariate column names (header order).

    Every cell must be a finite number; "NaN" and infinities are rejected.
    Reported byte offsets point at the start of the offending line.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        bad_line = raw[: exc.start].count(b"\n") + 1
        raise ParseError(bad_line, 0, exc.start, "invalid UTF-8") from exc

    lines = text.split("\n")
    offsets: list[int] = []
    pos = 0
    for ln in lines:
        offsets.append(pos)
        pos += len(ln.encode("utf-8")) + 1

    # drop a trailing newline's empty remnant
    if lines and lines[-1] == "":
        lines.pop()
        offsets.pop()
    if not lines:
        raise EmptyData("input file is empty")

    def parse_row(i: int) -> list[str]:
        ln = lines[i].rstrip("\r")
        try:
            rows = list(csv.reader([ln]))
        except csv.Error as exc:
            raise ParseError(i + 1, 1, offsets[i], str(exc)) from exc
        return rows[0] if rows else []

    header = [h.strip() for h in parse_row(0)]
    if len(set(header)) != len(header):
        dup = next(h for h in header if header.count(h) > 1)
        raise ParseError(1, header.index(dup) + 1, offsets[0], f"duplicate column {dup!r}")
    if response not in header:
        raise MissingResponse(response)
    y_pos = header.index(response)
    names = [h for k, h in enumerate(header) if k != y_pos]
    if not names:
        raise EmptyData("no covariate columns besides the response")

    x_rows: list[list[float]] = []
    y_vals: list[float] = []
    for i in range(1, len(lines)):
        if lines[i].strip() == "":
            raise ParseError(i + 1, 1, offsets[i], "blank row")
        fields = parse_row(i)
        if len(fields) != len(header):
            raise ParseError(
                i + 1,
                min(len(fields), len(header)) + 1,
                offsets[i],
                f"expected {len(header)} fields, found {len(fields)}",
            )
        row: list[float] = []
        for k, cell in enumerate(fields):
            try:
                value = float(cell.strip())
            except ValueError:
                raise NonNumericCell(i + 1, k + 1, cell.strip()) from None
            if not np.isfinite(value):
                raise NonNumericCell(i + 1, k + 1, cell.strip())
            row.append(value)
        y_vals.append(row.pop(y_pos))
        x_rows.append(row)
    if not x_rows:
        raise EmptyData("no data rows after the header")
    return np.asarray(x_rows, dtype=float), np.asarray(y_vals, dtype=float), names


def _family_from_args(args) -> GlmFamily:
    sigma2 = getattr(args, "sigma2", None)
    if args.family != "gaussian" and sigma2 is not None:
        raise DataError("--sigma2 applies to the gaussian family only")
    return GlmFamily(args.family, sigma2)


def _parse_lambda(value: str) -> str | float:
    if value == "auto":
        return "auto"
    try:
        lam = float(value)
    except ValueError:
        raise DataError(f"--lambda must be 'auto' or a positive number, got {value!r}") from None
    if not np.isfinite(lam) or lam <= 0.0:
        raise DataError("--lambda must be positive")
    return lam


def _resolve_seed(args, needed: bool) -> int | None:
    seed = getattr(args, "seed", None)
    if seed is None and needed:
        seed = secrets.randbelow(2**31)
        print(f"seed: {seed}", file=sys.stderr)
    return seed


def _resolve_lambda(
    args, family: GlmFamily, data: Dataset, mle: MleFit, seed: int | None
) -> SelectedLambda:
    lam = _parse_lambda(args.lam)
    if lam == "auto":
        return select_lambda(
            family,
            data,
            grid_size=args.grid_size,
            folds=args.folds,
            seed=seed,
            mle=mle,
        )
    return SelectedLambda(float(lam), float("nan"), float("nan"))


def _lambda_doc(sel: SelectedLambda, mode: str) -> dict:
    return {
        "mode": mode,
        "value": sel.value,
        "bic": None if np.isnan(sel.bic) else sel.bic,
        "cv": None if np.isnan(sel.cv) else sel.cv,
    }


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json_dump(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _needs_seed(args) -> bool:
    if args.command == "simulate":
        return True
    if args.command == "infer":
        if args.ci_method == "bootstrap":
            return True
        if args.ci_method == "mle":
            return False
    if args.command == "identify" and getattr(args, "fit", None):
        return False
    return _parse_lambda(args.lam) == "auto"


def _load_fit_doc(path: str, family: GlmFamily, data: Dataset, names: list[str]):
    """Reconstitute the model state stored by ``fit`` against the same CSV."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read fit file {path}: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError("fit file has an unsupported schema_version")
    if doc.get("family") != family.kind:
        raise DataError("fit file family does not match --family")
    if doc.get("n") != data.n or doc.get("p") != data.p or doc.get("columns") != names:
        raise DataError("fit file does not match the input data")
    stored_family = family
    if family.kind == "gaussian":
        stored_family = GlmFamily("gaussian", float(doc["sigma2"]))
    gamma0 = np.array([doc["mle"]["intercept"]] + list(doc["mle"]["beta"]), dtype=float)
    mle = refit_at(stored_family, data, gamma0)
    sel = SelectedLambda(
        float(doc["lambda"]["value"]),
        float("nan") if doc["lambda"]["bic"] is None else float(doc["lambda"]["bic"]),
        float("nan") if doc["lambda"]["cv"] is None else float(doc["lambda"]["cv"]),
    )
    return mle, sel, doc["lambda"]["mode"]


def _identify_state(args, family: GlmFamily, data: Dataset, names: list[str], seed):
    """Shared fit -> tune -> classify pipeline for identify and infer."""
    if getattr(args, "fit", None):
        mle, sel, lam_mode = _load_fit_doc(args.fit, family, data, names)
    else:
        mle = fit_mle(family, data)
        sel = _resolve_lambda(args, family, data, mle, seed)
        lam_mode = "auto" if args.lam == "auto" else "fixed"
    fit1 = one_step_fit(mle, data, sel.value)
    profile = selection_profile(mle, data, sel.value)
    delta2 = calibrate_delta2(profile, fit1, args.tau)
    # keep the partition valid when the calibrated quantile reaches delta1
    delta2 = min(delta2, float(np.nextafter(args.delta1, 0.0)))
    thresholds = Thresholds(
        delta1=args.delta1, delta2=delta2, tau=args.tau, alpha=args.alpha
    )
    cls = classify(profile, thresholds)
    return mle, sel, lam_mode, fit1, profile, thresholds, cls


def _category_labels(p: int, cls) -> list[str]:
    labels = ["noise"] * p
    for j in cls.weak:
        labels[j] = "weak"
    for j in cls.strong:
        labels[j] = "strong"
    return labels


def cmd_fit(args) -> None:
    family = _family_from_args(args)
    x_raw, y, names = load_csv(args.input, args.response)
    data = make_dataset(x_raw, y, family)
    seed = _resolve_seed(args, _needs_seed(args))
    mle = fit_mle(family, data)
    sel = _resolve_lambda(args, family, data, mle, seed)
    fit1 = one_step_fit(mle, data, sel.value)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "family": family.kind,
        "sigma2": mle.family.sigma2,
        "response": args.response,
        "columns": names,
        "n": data.n,
        "p": data.p,
        "seed": seed,
        "lambda": _lambda_doc(sel, "auto" if args.lam == "auto" else "fixed"),
        "mle": {
            "intercept": float(mle.gamma0[0]),
            "beta": [float(b) for b in mle.gamma0[1:]],
            "se": [float(s) for s in np.sqrt(np.diag(mle.cov))[1:]],
            "loglik": mle.loglik,
            "converged": mle.converged,
            "n_iter": mle.n_iter,
        },
        "onestep": {
            "intercept": float(fit1.gamma1[0]),
            "beta": [float(b) for b in fit1.gamma1[1:]],
            "active": [int(j) + 1 for j in fit1.active_set],
        },
    }
    _emit(_json_dump(doc), args.output)


def cmd_identify(args) -> None:
    family = _family_from_args(args)
    x_raw, y, names = load_csv(args.input, args.response)
    data = make_dataset(x_raw, y, family)
    seed = _resolve_seed(args, _needs_seed(args))
    mle, sel, lam_mode, fit1, profile, thresholds, cls = _identify_state(
        args, family, data, names, seed
    )
    labels = _category_labels(data.p, cls)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "identify",
        "family": family.kind,
        "response": args.response,
        "columns": names,
        "n": data.n,
        "p": data.p,
        "seed": seed,
        "lambda": _lambda_doc(sel, lam_mode),
        "delta1": thresholds.delta1,
        "delta2": thresholds.delta2,
        "tau": thresholds.tau,
        "alpha": thresholds.alpha,
        "coordinates": [
            {
                "index": j + 1,
                "name": names[j],
                "beta_mle": float(mle.gamma0[j + 1]),
                "beta_onestep": float(fit1.gamma1[j + 1]),
                "p_hat": float(profile.p_hat[j]),
                "category": labels[j],
            }
            for j in range(data.p)
        ],
    }
    _emit(_json_dump(doc), args.output)


def _interval_records(
    names: list[str], mle: MleFit, iv: IntervalSet
) -> list[dict]:
    records = []
    for j, name in enumerate(names):
        method = iv.method[j]
        if method == METHOD_ABSENT:
            estimate = lower = upper = None
        else:
            lower = float(iv.lower[j])
            upper = float(iv.upper[j])
            if method == "bootstrap":
                estimate = float(mle.gamma0[j + 1])
            else:
                estimate = (lower + upper) / 2.0
        records.append(
            {
                "index": j + 1,
                "name": name,
                "estimate": estimate,
                "lower": lower,
                "upper": upper,
                "method": method,
            }
        )
    return records


def cmd_infer(args) -> None:
    family = _family_from_args(args)
    x_raw, y, names = load_csv(args.input, args.response)
    data = make_dataset(x_raw, y, family)
    seed = _resolve_seed(args, _needs_seed(args))
    lam_doc = None
    if args.ci_method in ("two_step", "old_two_step"):
        mle, sel, lam_mode, fit1, profile, thresholds, cls = _identify_state(
            args, family, data, names, seed
        )
        dq = (
            debiased_quantities(mle, fit1, data, sel.value)
            if fit1.active_set.size
            else None
        )
        if args.ci_method == "two_step":
            iv = two_step_ci(mle, fit1, dq, cls, args.alpha)
        else:
            iv = old_two_step_ci(mle, fit1, dq, cls, args.alpha)
        lam_doc = _lambda_doc(sel, lam_mode)
    elif args.ci_method == "mle":
        mle = fit_mle(family, data)
        lower = np.empty(data.p)
        upper = np.empty(data.p)
        for j in range(data.p):
            lower[j], upper[j] = ci_mle(mle, j, args.alpha)
        iv = IntervalSet(lower, upper, tuple(["mle"] * data.p), args.alpha)
    else:
        mle = fit_mle(family, data)
        iv = bootstrap_ci(
            family, data, n_boot=args.bootstrap_b, alpha=args.alpha, seed=seed
        )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "infer",
        "family": family.kind,
        "response": args.response,
        "columns": names,
        "n": data.n,
        "p": data.p,
        "seed": seed,
        "ci_method": args.ci_method,
        "alpha": args.alpha,
        "lambda": lam_doc,
        "intervals": _interval_records(names, mle, iv),
    }
    _emit(_json_dump(doc), args.output)


def cmd_simulate(args) -> None:
    family = _family_from_args(args)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    unknown = [m for m in methods if m not in METHODS_KNOWN]
    if unknown:
        raise DataError(
            f"unknown method(s) {', '.join(unknown)}; choose from {', '.join(METHODS_KNOWN)}"
        )
    seed = _resolve_seed(args, True)
    cfg = DgpConfig(
        n=args.n,
        p=args.p,
        rho=args.rho,
        alpha0=args.alpha0,
        theta=args.theta,
        q=args.q,
        family=family,
        seed=seed,
    )
    thresholds = Thresholds(delta1=args.delta1, tau=args.tau, alpha=args.alpha)
    report = run_monte_carlo(
        cfg,
        reps=args.reps,
        methods=methods,
        thresholds=thresholds,
        n_boot=args.bootstrap_b,
        grid_size=args.grid_size,
        folds=args.folds,
        workers=args.workers,
    )
    text = report_to_tsv(report) if args.format == "tsv" else report_to_json(report) + "\n"
    _emit(text, args.output)
    if args.figures:
        from .figures import render_report_figures

        for path in render_report_figures(report, args.figures):
            print(f"figure: {path}", file=sys.stderr)


def _add_common_model_flags(sub, with_lambda: bool = True) -> None:
    sub.add_argument("--input", required=True, help="CSV file with a header row")
    sub.add_argument(
        "--response",
        default="y",
        help="name of the response column (default: y)",
    )
    sub.add_argument(
        "--family",
        required=True,
        choices=("gaussian", "logistic", "poisson"),
        help="response family",
    )
    sub.add_argument(
        "--sigma2",
        type=float,
        default=None,
        help="gaussian error variance; estimated from residuals when omitted",
    )
    if with_lambda:
        sub.add_argument(
            "--lambda",
            dest="lam",
            default="auto",
            help="penalty level: 'auto' (BIC/CV average) or a positive number",
        )
        sub.add_argument(
            "--grid-size",
            type=int,
            default=100,
            help="penalty grid size for auto tuning (default: 100)",
        )
        sub.add_argument(
            "--folds",
            type=int,
            default=5,
            help="cross-validation folds for auto tuning (default: 5)",
        )
    sub.add_argument("--seed", type=int, default=None, help="master random seed")
    sub.add_argument("--output", default=None, help="write output here instead of stdout")


def _add_threshold_flags(sub) -> None:
    sub.add_argument(
        "--delta1",
        type=float,
        default=0.99,
        help="strong-signal threshold (default: 0.99)",
    )
    sub.add_argument(
        "--tau",
        type=float,
        default=0.1,
        help="target false-positive rate for the noise threshold (default: 0.1)",
    )
    sub.add_argument(
        "--alpha",
        type=float,
        default=0.05,
        help="interval miscoverage level (default: 0.05)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="wsi",
        description=(
            "Weak-signal identification and inference for generalized "
            "linear models"
        ),
    )
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser(
        "fit",
        help="maximum-likelihood and one-step penalized estimates",
        description="Fit the model and report MLE and one-step penalized estimates.",
    )
    _add_common_model_flags(fit)
    fit.set_defaults(func=cmd_fit)

    identify = subs.add_parser(
        "identify",
        help="classify covariates as strong, weak, or noise",
        description="Estimate selection probabilities and classify each covariate.",
    )
    _add_common_model_flags(identify)
    identify.add_argument(
        "--fit",
        default=None,
        help="reuse a stored fit (JSON from the fit subcommand) instead of refitting",
    )
    _add_threshold_flags(identify)
    identify.set_defaults(func=cmd_identify)

    infer = subs.add_parser(
        "infer",
        help="confidence intervals for every covariate",
        description="Build per-covariate confidence intervals.",
    )
    _add_common_model_flags(infer)
    infer.add_argument(
        "--ci-method",
        default="two_step",
        choices=CI_METHODS,
        help="interval construction (default: two_step)",
    )
    infer.add_argument(
        "--bootstrap-b",
        type=int,
        default=1000,
        help="bootstrap replicates for --ci-method bootstrap (default: 1000)",
    )
    _add_threshold_flags(infer)
    infer.set_defaults(func=cmd_infer)

    sim = subs.add_parser(
        "simulate",
        help="Monte Carlo study of coverage, width, and classification",
        description="Run a Monte Carlo study and report aggregate metrics.",
    )
    sim.add_argument("--n", type=int, required=True, help="rows per replication")
    sim.add_argument("--p", type=int, required=True, help="covariate count")
    sim.add_argument("--rho", type=float, default=0.0, help="AR(1) correlation")
    sim.add_argument("--theta", type=float, default=0.0, help="varying coefficient")
    sim.add_argument("--q", type=int, default=0, help="number of extra 0.3 effects")
    sim.add_argument("--alpha0", type=float, default=0.5, help="true intercept")
    sim.add_argument(
        "--family",
        default="logistic",
        choices=("gaussian", "logistic", "poisson"),
        help="response family (default: logistic)",
    )
    sim.add_argument("--sigma2", type=float, default=None, help="gaussian error variance")
    sim.add_argument("--reps", type=int, required=True, help="number of replications")
    sim.add_argument(
        "--methods",
        default=",".join(METHODS_DEFAULT),
        help="comma-separated interval methods "
        f"(default: {','.join(METHODS_DEFAULT)}; known: {','.join(METHODS_KNOWN)})",
    )
    sim.add_argument(
        "--bootstrap-b",
        type=int,
        default=1000,
        help="bootstrap replicates when 'bootstrap' is requested (default: 1000)",
    )
    _add_threshold_flags(sim)
    sim.add_argument("--grid-size", type=int, default=100, help="penalty grid size")
    sim.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    sim.add_argument("--seed", type=int, default=None, help="master random seed")
    sim.add_argument(
        "--workers",
        type=int,
        default=None,
        help="process count (default: CPU count, capped by WSI_THREADS)",
    )
    sim.add_argument(
        "--format",
        default="json",
        choices=("json", "tsv"),
        help="report format (default: json)",
    )
    sim.add_argument(
        "--figures",
        default=None,
        metavar="DIR",
        help="also render report figures as PNG files into DIR",
    )
    sim.add_argument("--output", default=None, help="write output here instead of stdout")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except DataError as exc:
        print(f"wsi: data error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"wsi: numerical failure: {exc}", file=sys.stderr)
        return 2
    except WsiError as exc:
        print(f"wsi: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # configuration objects validate their own fields; surface those
        # as user-input problems rather than tracebacks
        print(f"wsi: invalid value: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
