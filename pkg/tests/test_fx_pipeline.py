"""
Tests for exchange-rate ingestion, artifacts, the end-to-end pipeline and the CLI.
"""

import json
import logging

import numpy as np
import pandas as pd
import pytest

from app.cli import EXIT_DEGENERATE, EXIT_ERROR, EXIT_OK, main
from app.models.data_models import LMSeries, PipelineOptions
from app.services.artifact_io import read_series, sidecar_path, write_series
from app.services.exceptions import DataIngestionError, DegenerateTestError, InsufficientDataError, PipelineStageError
from app.services.fx_ingestion import FxIngestionService, ingest_fx, qq_data
from app.services.kernel_variance import get_kernel, sigma2_grid
from app.services.limit_laws import kappa2_block_bootstrap, kappa2_summands
from app.services.lm_simulation import gen_fgn
from app.services.regression import fit_lse
from app.services.service_manager import ServiceManager
from app.services.whittle import local_whittle


def write_rates(path, dates, values):
    lines = ["date,value"] + [f"{d},{v}" for d, v in zip(dates, values)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def rate_walk(steps, start=1.5):
    return start * np.exp(np.cumsum(np.concatenate([[0.0], steps])))


@pytest.fixture
def rate_files(tmp_path):
    """Daily x and y rate files whose log differences follow y = 0.5 x + noise."""
    rng = np.random.default_rng(2024)
    n = 300
    dates = pd.date_range("2001-01-02", periods=n + 1, freq="D").strftime("%Y-%m-%d")
    dx = 0.01 * rng.standard_normal(n)
    dy = 0.5 * dx + 0.005 * np.sqrt(1.0 + (dx / 0.01) ** 2) * rng.standard_normal(n)
    x_file = write_rates(tmp_path / "x.csv", dates, [repr(v) for v in rate_walk(dx)])
    y_file = write_rates(tmp_path / "y.csv", dates, [repr(v) for v in rate_walk(dy, 110.0)])
    return x_file, y_file


@pytest.fixture
def squared_rate_files(tmp_path):
    """y rates are the squared x rates, so the log differences satisfy y = 2x exactly."""
    rng = np.random.default_rng(7)
    dates = pd.date_range("2001-01-02", periods=201, freq="D").strftime("%Y-%m-%d")
    rates = rate_walk(0.01 * rng.standard_normal(200))
    x_file = write_rates(tmp_path / "x.csv", dates, [repr(v) for v in rates])
    y_file = write_rates(tmp_path / "y.csv", dates, [repr(v) for v in rates ** 2])
    return x_file, y_file


class TestIngestion:

    def test_log_differences(self, tmp_path):
        path = write_rates(tmp_path / "r.csv", ["2000-01-03", "2000-01-04", "2000-01-05"], [1.0, repr(np.e), repr(np.e ** 2)])
        series = ingest_fx(path)
        assert series.values == pytest.approx([1.0, 1.0], rel=1e-12)
        assert series.kind == "ingested"

    def test_missing_markers_are_skipped(self, tmp_path):
        dates = ["2000-01-03", "2000-01-04", "2000-01-05", "2000-01-06", "2000-01-07"]
        path = write_rates(tmp_path / "r.csv", dates, [1.0, "ND", repr(np.e), "", repr(np.e ** 2)])
        assert ingest_fx(path).values == pytest.approx([1.0, 1.0], rel=1e-12)

    def test_custom_missing_markers(self, tmp_path):
        dates = ["2000-01-03", "2000-01-04", "2000-01-05", "2000-01-06"]
        path = write_rates(tmp_path / "r.csv", dates, [1.0, "NA", 2.0, 4.0])
        frame = FxIngestionService(missing_markers=["NA"]).read_rates(path)
        assert list(frame["rate"]) == [1.0, 2.0, 4.0]

    def test_too_few_rows(self, tmp_path):
        path = write_rates(tmp_path / "r.csv", ["2000-01-03", "2000-01-04", "2000-01-05"], [1.0, "ND", 2.0])
        with pytest.raises(InsufficientDataError):
            ingest_fx(path)

    def test_dates_must_increase(self, tmp_path):
        path = write_rates(tmp_path / "r.csv", ["2000-01-03", "2000-01-05", "2000-01-04"], [1.0, 2.0, 3.0])
        with pytest.raises(DataIngestionError):
            ingest_fx(path)

    def test_duplicate_dates(self, tmp_path):
        path = write_rates(tmp_path / "r.csv", ["2000-01-03", "2000-01-03", "2000-01-04"], [1.0, 2.0, 3.0])
        with pytest.raises(DataIngestionError):
            ingest_fx(path)

    def test_non_positive_rate(self, tmp_path):
        path = write_rates(tmp_path / "r.csv", ["2000-01-03", "2000-01-04", "2000-01-05"], [1.0, 0.0, 3.0])
        with pytest.raises(DataIngestionError):
            ingest_fx(path)

    def test_unparseable_rate(self, tmp_path):
        path = write_rates(tmp_path / "r.csv", ["2000-01-03", "2000-01-04", "2000-01-05"], [1.0, "abc", 3.0])
        with pytest.raises(DataIngestionError):
            ingest_fx(path)

    def test_missing_column(self, tmp_path):
        path = write_rates(tmp_path / "r.csv", ["2000-01-03", "2000-01-04", "2000-01-05"], [1.0, 2.0, 3.0])
        with pytest.raises(DataIngestionError):
            ingest_fx(path, column="rate")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIngestionError):
            ingest_fx(tmp_path / "absent.csv")

    def test_monthly_keeps_last_observation(self, tmp_path):
        dates = ["2000-01-30", "2000-01-31", "2000-02-01", "2000-02-28", "2000-03-31"]
        path = write_rates(tmp_path / "r.csv", dates, [1.0, 2.0, 3.0, 4.0, 5.0])
        frame = FxIngestionService().read_rates(path, monthly=True)
        assert list(frame["rate"]) == [2.0, 4.0, 5.0]

    def test_pair_aligns_on_common_dates(self, tmp_path):
        dates = ["2000-01-03", "2000-01-04", "2000-01-05", "2000-01-06", "2000-01-07"]
        x_file = write_rates(tmp_path / "x.csv", dates, [1.0, 2.0, 4.0, 8.0, 16.0])
        y_file = write_rates(tmp_path / "y.csv", dates, [1.0, 3.0, "ND", 27.0, 81.0])
        pair = FxIngestionService().ingest_pair(x_file, y_file)
        assert list(pair.columns) == ["x", "y"]
        assert len(pair) == 3
        assert pair["x"].to_numpy() == pytest.approx(np.log([2.0, 4.0, 2.0]))
        assert pair["y"].to_numpy() == pytest.approx(np.log([3.0, 9.0, 3.0]))


class TestArtifacts:

    def test_series_file_round_trip(self, tmp_path):
        series = gen_fgn(257, 0.7, seed=3)
        path = write_series(tmp_path / "fgn.csv", series)
        restored = read_series(path)
        assert np.array_equal(restored.values, series.values)
        assert restored.kind == "fgn"
        assert restored.params.h == 0.7
        assert restored.seed == 3
        assert "n=257" in sidecar_path(path).read_text()

    def test_series_without_sidecar(self, tmp_path):
        path = tmp_path / "plain.csv"
        path.write_text("value\n1.5\n-2.0\n", encoding="utf-8")
        series = read_series(path)
        assert series.kind == "ingested"
        assert series.params is None
        assert list(series.values) == [1.5, -2.0]

    def test_no_temporary_files_left(self, tmp_path):
        write_series(tmp_path / "s.csv", LMSeries(values=np.arange(5.0), kind="ingested"))
        assert sorted(p.name for p in tmp_path.iterdir()) == ["s.csv", "s.csv.meta"]


class TestQQ:

    def test_lengths_and_order(self):
        series = gen_fgn(200, 0.6, seed=1)
        frame = qq_data(series, 0.6, seed=9)
        assert list(frame.columns) == ["sample", "fgn"]
        assert len(frame) == 200
        assert frame["sample"].is_monotonic_increasing
        assert frame["fgn"].is_monotonic_increasing

    def test_deterministic(self):
        values = np.random.default_rng(0).standard_normal(64)
        assert qq_data(values, 0.7, seed=4).equals(qq_data(values, 0.7, seed=4))

    def test_constant_series_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            frame = qq_data(np.full(32, 3.0), 0.7, seed=2)
        assert np.all(frame["sample"] == 0.0)
        assert "constant" in caplog.text


class TestPipeline:

    def test_report(self, rate_files):
        x_file, y_file = rate_files
        report = ServiceManager().run_pipeline(x_file, y_file)
        assert report.x_stats.n == 300
        assert report.fit["beta_hat"][1] == pytest.approx(0.5, abs=0.15)
        assert report.bandwidth == pytest.approx(3.0 * 300 ** -0.2)
        assert report.whittle_x.m == 37
        assert report.decision == ("reject" if report.gof.reject else "fail_to_reject")
        assert len(report.provenance["x_sha256"]) == 64
        assert report.provenance["x_file"] == "x.csv"

    def test_standardized_whittle_uses_kernel_sigma(self, rate_files):
        x_file, y_file = rate_files
        report = ServiceManager().run_pipeline(x_file, y_file)
        pair = FxIngestionService().ingest_pair(x_file, y_file)
        x, y = pair["x"].to_numpy(), pair["y"].to_numpy()
        residuals = fit_lse(x, y).residuals
        sigma2 = sigma2_grid(x, x, residuals, report.bandwidth, get_kernel("cosine"))
        expected = local_whittle(residuals / np.sqrt(sigma2), m=report.whittle_residuals.m)
        assert report.whittle_standardized.H_hat == pytest.approx(expected.H_hat, abs=1e-12)
        assert report.whittle_standardized.G_hat == pytest.approx(expected.G_hat, rel=1e-9)

    def test_report_is_deterministic(self, rate_files):
        x_file, y_file = rate_files
        options = PipelineOptions(m=30, alpha=0.1)
        first = ServiceManager().run_pipeline(x_file, y_file, options).model_dump(mode="json")
        second = ServiceManager().run_pipeline(x_file, y_file, options).model_dump(mode="json")
        assert first == second
        assert first["gof"]["alpha"] == 0.1

    def test_degenerate_residuals(self, squared_rate_files):
        x_file, y_file = squared_rate_files
        manager = ServiceManager()
        with pytest.raises(PipelineStageError) as excinfo:
            manager.run_pipeline(x_file, y_file)
        assert excinfo.value.stage == "residual_check"
        assert isinstance(excinfo.value.cause, DegenerateTestError)
        assert manager._pipelines_failed == 1

    def test_ingest_stage_failure(self, tmp_path, rate_files):
        x_file, _ = rate_files
        with pytest.raises(PipelineStageError) as excinfo:
            ServiceManager().run_pipeline(x_file, tmp_path / "absent.csv")
        assert excinfo.value.stage == "ingest"


class TestCli:

    def test_simulate_then_whittle(self, tmp_path, capsys):
        assert main(["--seed", "5", "--out", str(tmp_path), "simulate", "--kind", "fgn", "--n", "512", "--h", "0.7"]) == EXIT_OK
        assert (tmp_path / "fgn.csv").exists()
        capsys.readouterr()
        assert main(["whittle", "--series", str(tmp_path / "fgn.csv")]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert 0.5 < payload["H_hat"] < 1.0

    def test_simulate_is_reproducible(self, tmp_path):
        for name in ("a", "b"):
            assert main(["--seed", "11", "--out", str(tmp_path / name), "simulate", "--kind", "farima_ma", "--n", "100", "--H", "0.8"]) == EXIT_OK
        first = (tmp_path / "a" / "farima_ma.csv").read_bytes()
        assert first == (tmp_path / "b" / "farima_ma.csv").read_bytes()

    def test_goftest_writes_knots(self, tmp_path, heteroscedastic_sample):
        x, y = heteroscedastic_sample
        write_series(tmp_path / "x.csv", LMSeries(values=x, kind="ingested"))
        write_series(tmp_path / "y.csv", LMSeries(values=y, kind="ingested"))
        code = main(["--out", str(tmp_path / "out"), "goftest", "--x", str(tmp_path / "x.csv"), "--y", str(tmp_path / "y.csv")])
        assert code == EXIT_OK
        assert (tmp_path / "out" / "goftest.json").exists()
        knots = pd.read_csv(tmp_path / "out" / "knots.csv")
        assert list(knots.columns) == ["knot", "vtilde", "jhat"]

    def test_goftest_exact_fit_is_degenerate(self, tmp_path, rng):
        x = rng.standard_normal(100)
        write_series(tmp_path / "x.csv", LMSeries(values=x, kind="ingested"))
        write_series(tmp_path / "y.csv", LMSeries(values=2.0 * x, kind="ingested"))
        assert main(["goftest", "--x", str(tmp_path / "x.csv"), "--y", str(tmp_path / "y.csv")]) == EXIT_DEGENERATE

    def test_z2_writes_single_column_draws(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["--seed", "4", "--out", str(out), "z2", "--H", "0.9", "--h", "0.9", "--draws", "200"]) == EXIT_OK
        draws = pd.read_csv(out / "z2_Z2_independent.csv")
        assert list(draws.columns) == ["draw"]
        assert len(draws) == 200
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_draws"] == 200
        assert payload["seed"] == 4

    def test_z2_is_reproducible(self, tmp_path):
        for name in ("a", "b"):
            assert main(["--seed", "8", "--out", str(tmp_path / name), "z2", "--H", "0.85", "--h", "0.8", "--kind", "Z2_star", "--draws", "64"]) == EXIT_OK
        first = (tmp_path / "a" / "z2_Z2_star.csv").read_bytes()
        assert first == (tmp_path / "b" / "z2_Z2_star.csv").read_bytes()

    def test_z2_short_memory_is_an_error(self):
        assert main(["z2", "--H", "0.7", "--h", "0.7", "--draws", "10"]) == EXIT_ERROR

    def test_kappa2(self, tmp_path, capsys, heteroscedastic_sample):
        x, y = heteroscedastic_sample
        write_series(tmp_path / "x.csv", LMSeries(values=x, kind="ingested"))
        write_series(tmp_path / "y.csv", LMSeries(values=y, kind="ingested"))
        out = tmp_path / "out"
        args = ["--seed", "2", "--out", str(out), "kappa2", "--x", str(tmp_path / "x.csv"), "--y", str(tmp_path / "y.csv"), "--B", "50"]
        assert main(args) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        expected = kappa2_block_bootstrap(kappa2_summands(x, fit_lse(x, y).residuals), 8, 50, 2)
        assert payload["block_len"] == 8
        assert payload["kappa2"] == pytest.approx(expected, rel=1e-12)
        assert json.loads((out / "kappa2.json").read_text())["kappa2"] == payload["kappa2"]

    def test_kappa2_weighted(self, tmp_path, capsys, heteroscedastic_sample):
        x, y = heteroscedastic_sample
        write_series(tmp_path / "x.csv", LMSeries(values=x, kind="ingested"))
        write_series(tmp_path / "y.csv", LMSeries(values=y, kind="ingested"))
        args = ["--seed", "2", "kappa2", "--x", str(tmp_path / "x.csv"), "--y", str(tmp_path / "y.csv"), "--B", "20", "--weighted"]
        assert main(args) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["weighted"] is True
        assert payload["kappa2"] >= 0.0

    def test_pipeline(self, tmp_path, rate_files):
        x_file, y_file = rate_files
        out = tmp_path / "out"
        assert main(["--seed", "3", "--out", str(out), "pipeline", "--x-file", str(x_file), "--y-file", str(y_file)]) == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["decision"] in ("reject", "fail_to_reject")
        assert len(pd.read_csv(out / "qq.csv")) == 300

    def test_pipeline_degenerate_exit_code(self, squared_rate_files):
        x_file, y_file = squared_rate_files
        assert main(["pipeline", "--x-file", str(x_file), "--y-file", str(y_file)]) == EXIT_DEGENERATE

    def test_missing_input_exit_code(self, tmp_path):
        assert main(["ingest", "--file", str(tmp_path / "absent.csv")]) == EXIT_ERROR

    def test_ingest(self, tmp_path, rate_files, capsys):
        x_file, _ = rate_files
        assert main(["--out", str(tmp_path / "out"), "ingest", "--file", str(x_file), "--name", "uk"]) == EXIT_OK
        assert read_series(tmp_path / "out" / "uk.csv").n == 300
        assert json.loads(capsys.readouterr().out)["n"] == 300

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["--version"])
        assert excinfo.value.code == 0
        assert "numpy" in capsys.readouterr().out
