"""End-to-end tests for the command-line driver: CSV parsing, subcommand
schemas, exit codes, and reproducibility."""

from __future__ import annotations

import contextlib
import io
import json
import math

import numpy as np
import pytest

from wsi.cli import load_csv, main
from wsi.errors import (
    EmptyData,
    MissingResponse,
    NonNumericCell,
    ParseError,
)
from wsi.sim_harness import DgpConfig, generate_dataset

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def run_cli(argv: list[str]) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def strong_csv(tmp_path_factory) -> str:
    """A logistic dataset whose fourth covariate carries a strong signal."""
    cfg = DgpConfig(n=350, p=25, rho=0.0, theta=0.95, seed=19)
    data = generate_dataset(cfg, cfg.seed)
    header = ",".join([f"x{j + 1}" for j in range(cfg.p)] + ["y"])
    rows = [
        ",".join([repr(float(v)) for v in row] + [str(int(yv))])
        for row, yv in zip(data.x_raw, data.y)
    ]
    path = tmp_path_factory.mktemp("data") / "strong.csv"
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def gaussian_csv(tmp_path_factory) -> str:
    rng = np.random.default_rng(33)
    x = rng.standard_normal((30, 2))
    y = 0.5 + 1.2 * x[:, 0] + rng.standard_normal(30)
    lines = ["x1,x2,y"] + [
        f"{repr(float(a))},{repr(float(b))},{repr(float(v))}"
        for (a, b), v in zip(x, y)
    ]
    path = tmp_path_factory.mktemp("data") / "gaussian.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


class TestLoadCsv:
    def test_well_formed_three_by_two(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,y\n1,10\n2,20\n3,30\n")
        x, y, names = load_csv(str(path))
        assert x.shape == (3, 1)
        assert np.array_equal(x[:, 0], [1.0, 2.0, 3.0])
        assert np.array_equal(y, [10.0, 20.0, 30.0])
        assert names == ["x1"]

    def test_header_only_is_empty(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,y\n")
        with pytest.raises(EmptyData):
            load_csv(str(path))

    def test_nan_cell_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,y\n1,2\nNaN,4\n")
        with pytest.raises(NonNumericCell) as err:
            load_csv(str(path))
        assert err.value.line == 3
        assert err.value.column == 1
        assert err.value.value == "NaN"

    def test_infinite_cell_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,y\n1,inf\n")
        with pytest.raises(NonNumericCell) as err:
            load_csv(str(path))
        assert (err.value.line, err.value.column) == (2, 2)

    def test_duplicate_header_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,x1,y\n1,2,3\n")
        with pytest.raises(ParseError) as err:
            load_csv(str(path))
        assert err.value.line == 1
        assert err.value.column == 1
        assert err.value.byte_offset == 0

    def test_blank_row_rejected_with_line_offset(self, tmp_path):
        content = "x1,y\n1,2\n\n3,4\n"
        path = tmp_path / "d.csv"
        path.write_text(content)
        with pytest.raises(ParseError) as err:
            load_csv(str(path))
        assert err.value.line == 3
        assert err.value.byte_offset == len("x1,y\n1,2\n")

    def test_field_count_mismatch_rejected(self, tmp_path):
        content = "x1,x2,y\n1,2,3\n4,5\n"
        path = tmp_path / "d.csv"
        path.write_text(content)
        with pytest.raises(ParseError) as err:
            load_csv(str(path))
        assert err.value.line == 3
        assert err.value.column == 3
        assert err.value.byte_offset == len("x1,x2,y\n1,2,3\n")

    def test_invalid_utf8_reports_byte_offset(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_bytes(b"x1,y\n1,2\n\xff,3\n")
        with pytest.raises(ParseError) as err:
            load_csv(str(path))
        assert err.value.line == 3
        assert err.value.byte_offset == 9

    def test_missing_response_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,x2\n1,2\n")
        with pytest.raises(MissingResponse) as err:
            load_csv(str(path))
        assert err.value.name == "y"
        # the response name is configurable
        x, y, names = load_csv(str(path), response="x2")
        assert names == ["x1"]
        assert np.array_equal(y, [2.0])

    def test_response_without_covariates_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("y\n1\n2\n")
        with pytest.raises(EmptyData):
            load_csv(str(path))

    def test_column_order_follows_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("b,y,a\n1,2,3\n4,5,6\n")
        x, y, names = load_csv(str(path))
        assert names == ["b", "a"]
        assert np.array_equal(x, [[1.0, 3.0], [4.0, 6.0]])
        assert np.array_equal(y, [2.0, 5.0])

    def test_crlf_line_endings_accepted(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_bytes(b"x1,y\r\n1,2\r\n3,4\r\n")
        x, y, names = load_csv(str(path))
        assert x.shape == (2, 1)
        assert np.array_equal(y, [2.0, 4.0])


class TestExitCodes:
    def test_success_is_zero(self, gaussian_csv):
        code, out, _ = run_cli(
            ["fit", "--family", "gaussian", "--input", gaussian_csv,
             "--lambda", "0.1"]
        )
        assert code == 0
        assert json.loads(out)["schema_version"] == 1

    def test_missing_file_is_data_error(self):
        code, _, err = run_cli(
            ["fit", "--family", "gaussian", "--input", "/nonexistent.csv",
             "--lambda", "0.1"]
        )
        assert code == 1
        assert "data error" in err

    def test_bad_cell_is_data_error(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,y\nok,2\n")
        code, _, err = run_cli(
            ["fit", "--family", "gaussian", "--input", str(path),
             "--lambda", "0.1"]
        )
        assert code == 1
        assert "data error" in err

    def test_separated_input_is_numerical_failure(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,y\n-2,0\n-1,0\n1,1\n2,1\n")
        code, _, err = run_cli(
            ["fit", "--family", "logistic", "--input", str(path),
             "--lambda", "0.1"]
        )
        assert code == 2
        assert "numerical failure" in err

    def test_usage_errors_exit_one(self, gaussian_csv):
        with pytest.raises(SystemExit) as exc:
            run_cli(["fit", "--family", "gaussian", "--input", gaussian_csv,
                     "--no-such-flag"])
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            run_cli(["fit", "--input", gaussian_csv])  # --family required
        assert exc.value.code == 1

    def test_sigma2_restricted_to_gaussian(self, strong_csv):
        code, _, err = run_cli(
            ["fit", "--family", "logistic", "--input", strong_csv,
             "--sigma2", "1.0", "--lambda", "0.1"]
        )
        assert code == 1
        assert "gaussian" in err

    def test_bad_penalty_values_rejected(self, gaussian_csv):
        for bad in ("nope", "-0.5", "0"):
            code, _, err = run_cli(
                ["fit", "--family", "gaussian", "--input", gaussian_csv,
                 "--lambda", bad]
            )
            assert code == 1

    def test_config_validation_surfaces_cleanly(self, gaussian_csv):
        code, _, err = run_cli(
            ["simulate", "--n", "50", "--p", "3", "--reps", "1", "--seed", "1"]
        )
        assert code == 1
        assert "invalid value" in err
        code, _, err = run_cli(
            ["identify", "--family", "gaussian", "--input", gaussian_csv,
             "--lambda", "0.1", "--delta1", "0.9"]
        )
        assert code == 1


class TestFitCommand:
    def test_document_schema(self, gaussian_csv):
        code, out, _ = run_cli(
            ["fit", "--family", "gaussian", "--input", gaussian_csv,
             "--lambda", "0.1"]
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["command"] == "fit"
        assert doc["columns"] == ["x1", "x2"]
        assert (doc["n"], doc["p"]) == (30, 2)
        assert doc["lambda"] == {"mode": "fixed", "value": 0.1, "bic": None, "cv": None}
        assert len(doc["mle"]["beta"]) == 2
        assert len(doc["mle"]["se"]) == 2
        assert doc["mle"]["converged"] is True
        assert isinstance(doc["mle"]["loglik"], float)
        assert len(doc["onestep"]["beta"]) == 2
        assert set(doc["onestep"]["active"]) <= {1, 2}

    def test_output_flag_writes_file(self, gaussian_csv, tmp_path):
        target = tmp_path / "fit.json"
        code, out, _ = run_cli(
            ["fit", "--family", "gaussian", "--input", gaussian_csv,
             "--lambda", "0.1", "--output", str(target)]
        )
        assert code == 0
        assert out == ""
        assert json.loads(target.read_text())["command"] == "fit"

    def test_generated_seed_is_printed_for_auto_tuning(self, gaussian_csv):
        code, _, err = run_cli(
            ["fit", "--family", "gaussian", "--input", gaussian_csv]
        )
        assert code == 0
        seed_lines = [l for l in err.splitlines() if l.startswith("seed: ")]
        assert len(seed_lines) == 1
        int(seed_lines[0].split(":")[1])

    def test_explicit_seed_is_not_printed(self, gaussian_csv):
        code, _, err = run_cli(
            ["fit", "--family", "gaussian", "--input", gaussian_csv,
             "--seed", "11"]
        )
        assert code == 0
        assert "seed:" not in err


class TestIdentifyCommand:
    def test_strong_signal_tagged_strong(self, strong_csv):
        code, out, err = run_cli(
            ["identify", "--family", "logistic", "--input", strong_csv,
             "--lambda", "0.04"]
        )
        assert code == 0
        assert "seed:" not in err  # fixed penalty needs no randomness
        doc = json.loads(out)
        coords = doc["coordinates"]
        assert len(coords) == 25
        assert coords[3]["category"] == "strong"
        assert all(c["category"] in ("strong", "weak", "noise") for c in coords)
        assert all(0.0 < c["p_hat"] < 1.0 for c in coords)
        assert doc["delta2"] < doc["delta1"]

    def test_reported_probability_recomputable_from_dumped_fit(
        self, strong_csv, tmp_path
    ):
        # rebuild coordinate 4's selection probability with plain numpy
        # from the dumped estimates and the raw file
        lam = 0.04
        fit_path = tmp_path / "fit.json"
        code, _, _ = run_cli(
            ["fit", "--family", "logistic", "--input", strong_csv,
             "--lambda", str(lam), "--output", str(fit_path)]
        )
        assert code == 0
        fit_doc = json.loads(fit_path.read_text())
        code, out, _ = run_cli(
            ["identify", "--family", "logistic", "--input", strong_csv,
             "--lambda", str(lam)]
        )
        reported = json.loads(out)["coordinates"][3]["p_hat"]

        raw = np.loadtxt(strong_csv, delimiter=",", skiprows=1)
        x_raw, n = raw[:, :25], raw.shape[0]
        xs = (x_raw - x_raw.mean(axis=0)) / x_raw.std(axis=0, ddof=1)
        gamma = np.array([fit_doc["mle"]["intercept"]] + fit_doc["mle"]["beta"])
        eta = gamma[0] + xs @ gamma[1:]
        prob = 1.0 / (1.0 + np.exp(-eta))
        d = prob * (1.0 - prob)
        j = 3
        xj = xs[:, j]
        s_d = d.sum()
        s_dx = (d * xj).sum()
        s_dxx = (d * xj * xj).sum()
        t_hat = math.sqrt(n * lam * s_d / (s_dxx * s_d - s_dx**2))
        x_tilde = np.column_stack([np.ones(n), xs])
        cov = np.linalg.inv(x_tilde.T @ (d[:, None] * x_tilde))
        s_hat = math.sqrt(cov[j + 1, j + 1])
        from scipy.special import ndtr

        expected = ndtr((-t_hat + gamma[j + 1]) / s_hat) + ndtr(
            (-t_hat - gamma[j + 1]) / s_hat
        )
        assert reported == pytest.approx(expected, abs=1e-10)

    def test_round_trip_through_stored_fit(self, strong_csv, tmp_path):
        fit_path = tmp_path / "fit.json"
        code, _, _ = run_cli(
            ["fit", "--family", "logistic", "--input", strong_csv,
             "--seed", "3", "--output", str(fit_path)]
        )
        assert code == 0
        lam = json.loads(fit_path.read_text())["lambda"]["value"]

        code, out_reused, _ = run_cli(
            ["identify", "--family", "logistic", "--input", strong_csv,
             "--fit", str(fit_path)]
        )
        assert code == 0
        code, out_direct, _ = run_cli(
            ["identify", "--family", "logistic", "--input", strong_csv,
             "--lambda", repr(lam)]
        )
        assert code == 0
        reused = json.loads(out_reused)
        direct = json.loads(out_direct)
        assert reused["coordinates"] == direct["coordinates"]
        assert reused["delta2"] == direct["delta2"]

    def test_stored_fit_must_match_input(self, strong_csv, gaussian_csv, tmp_path):
        fit_path = tmp_path / "fit.json"
        run_cli(
            ["fit", "--family", "gaussian", "--input", gaussian_csv,
             "--lambda", "0.1", "--output", str(fit_path)]
        )
        code, _, err = run_cli(
            ["identify", "--family", "logistic", "--input", strong_csv,
             "--fit", str(fit_path)]
        )
        assert code == 1
        assert "data error" in err


class TestInferCommand:
    def test_two_step_schema_and_method_tags(self, strong_csv):
        code, out, _ = run_cli(
            ["infer", "--family", "logistic", "--input", strong_csv,
             "--lambda", "0.04", "--alpha", "0.05"]
        )
        assert code == 0
        doc = json.loads(out)
        records = doc["intervals"]
        assert len(records) == 25
        assert set(r["method"] for r in records) <= {"debiased_onestep", "mle"}
        assert records[3]["method"] == "debiased_onestep"
        assert doc["alpha"] == 0.05
        assert doc["lambda"]["value"] == 0.04
        for r in records:
            assert r["lower"] < r["upper"]
            assert r["estimate"] == pytest.approx((r["lower"] + r["upper"]) / 2.0)

    def test_old_two_step_leaves_noise_without_intervals(self, strong_csv):
        code, out, _ = run_cli(
            ["infer", "--family", "logistic", "--input", strong_csv,
             "--lambda", "0.04", "--ci-method", "old_two_step"]
        )
        assert code == 0
        records = json.loads(out)["intervals"]
        absent = [r for r in records if r["method"] == "absent"]
        assert absent
        for r in absent:
            assert r["estimate"] is None
            assert r["lower"] is None
            assert r["upper"] is None

    def test_mle_intervals_carry_no_penalty(self, strong_csv):
        code, out, err = run_cli(
            ["infer", "--family", "logistic", "--input", strong_csv,
             "--ci-method", "mle"]
        )
        assert code == 0
        assert "seed:" not in err
        doc = json.loads(out)
        assert doc["lambda"] is None
        assert all(r["method"] == "mle" for r in doc["intervals"])

    def test_bootstrap_is_seed_deterministic(self, strong_csv):
        argv = ["infer", "--family", "logistic", "--input", strong_csv,
                "--ci-method", "bootstrap", "--bootstrap-b", "60",
                "--seed", "5"]
        code1, out1, err1 = run_cli(argv)
        code2, out2, _ = run_cli(argv)
        assert (code1, code2) == (0, 0)
        assert out1 == out2
        assert "seed:" not in err1
        records = json.loads(out1)["intervals"]
        assert all(r["method"] == "bootstrap" for r in records)
        for r in records:
            assert r["lower"] <= r["estimate"] <= r["upper"]

    def test_bootstrap_without_seed_prints_one(self, strong_csv):
        code, _, err = run_cli(
            ["infer", "--family", "logistic", "--input", strong_csv,
             "--ci-method", "bootstrap", "--bootstrap-b", "40"]
        )
        assert code == 0
        assert sum(l.startswith("seed: ") for l in err.splitlines()) == 1


class TestSimulateCommand:
    def test_repeat_run_is_byte_identical(self):
        argv = ["simulate", "--n", "350", "--p", "25", "--rho", "0",
                "--theta", "0.95", "--reps", "200", "--seed", "7"]
        code1, out1, _ = run_cli(argv)
        code2, out2, _ = run_cli(argv)
        assert (code1, code2) == (0, 0)
        assert out1 == out2

    def test_tsv_format(self):
        code, out, _ = run_cli(
            ["simulate", "--n", "60", "--p", "5", "--reps", "2",
             "--methods", "mle", "--seed", "1", "--format", "tsv"]
        )
        assert code == 0
        lines = out.strip().split("\n")
        assert lines[0].startswith("method\tcoordinate\tbeta_true")
        assert len(lines) == 1 + 5
        assert all(len(l.split("\t")) == 10 for l in lines[1:])

    def test_figures_are_rendered_alongside_output(self, tmp_path):
        figdir = tmp_path / "figs"
        out_path = tmp_path / "report.json"
        code, out, err = run_cli(
            ["simulate", "--n", "60", "--p", "5", "--reps", "2",
             "--methods", "mle", "--seed", "1",
             "--output", str(out_path), "--figures", str(figdir)]
        )
        assert code == 0
        assert out == ""
        assert json.loads(out_path.read_text())["config"]["n"] == 60
        pngs = sorted(p.name for p in figdir.iterdir())
        assert pngs == [
            "interval_coverage.png",
            "interval_width.png",
            "selection_probability.png",
            "signal_classification.png",
        ]
        for p in figdir.iterdir():
            assert p.read_bytes()[:8] == PNG_MAGIC
        assert sum(l.startswith("figure: ") for l in err.splitlines()) == 4

    def test_unknown_method_rejected(self):
        code, _, err = run_cli(
            ["simulate", "--n", "60", "--p", "5", "--reps", "1",
             "--methods", "wald", "--seed", "1"]
        )
        assert code == 1
        assert "data error" in err

    def test_generated_seed_is_printed(self):
        code, _, err = run_cli(
            ["simulate", "--n", "60", "--p", "5", "--reps", "1",
             "--methods", "mle"]
        )
        assert code == 0
        assert sum(l.startswith("seed: ") for l in err.splitlines()) == 1
