import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from advkern.config import Settings
from advkern.core.configs import (
    AttackConfig,
    BenchmarkConfig,
    BoundsConfig,
    FitConfig,
    FitMethod,
    NoiseSweepConfig,
    PredictConfig,
    RateSweepConfig,
    SensitivityConfig,
    parse_attack,
    parse_kernel,
    resolve_delta,
)
from advkern.core.context import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_SOLVER,
    ContextManager,
    RunContext,
    exit_code_for,
)
from advkern.core.experiments import (
    fit_rate,
    load_model,
    run_attack,
    run_benchmark,
    run_bounds,
    run_fit,
    run_noise_sweep,
    run_predict,
    run_rate_sweep,
    run_sensitivity,
)
from advkern.core.mkl import MklModel
from advkern.core.solver import DEFAULT_LAMBDA_GRID
from advkern.core.specs import KernelFamily, Norm, SyntheticTarget
from advkern.exceptions import ConfigurationError, DataError, DataIOError, KernelError, SingularSystemError
from advkern.utils.io import ProvenanceCsv, read_csv, write_json
from advkern.utils.parallel import ordered_map, spawn_seeds


class TestParsing:
    def test_kernel_notation(self):
        assert parse_kernel("Matern:nu=1.5,gamma=0.1") == {"family": "matern", "nu": 1.5, "gamma": 0.1}
        assert parse_kernel("polynomial:degree=3") == {"family": "polynomial", "degree": 3}

    def test_malformed_kernel_parameter(self):
        with pytest.raises(ValueError):
            parse_kernel("gaussian:gamma")

    def test_attack_notation(self):
        assert parse_attack("linf:0.1") == {"norm": "linf", "radius": 0.1}
        with pytest.raises(ValueError):
            parse_attack("l2")

    def test_auto_delta(self):
        assert resolve_delta("auto", 100) == pytest.approx(0.1)
        assert resolve_delta(0.3, 100) == 0.3


class TestConfigs:
    def test_fit_defaults(self):
        config = FitConfig(synthetic=SyntheticTarget.SINE)
        assert config.method == FitMethod.ADVERSARIAL
        assert config.kernels[0].family == KernelFamily.GAUSSIAN
        assert config.delta == "auto"

    def test_needs_exactly_one_source(self, tmp_path):
        with pytest.raises(ValidationError):
            FitConfig()
        with pytest.raises(ValidationError):
            FitConfig(synthetic=SyntheticTarget.SINE, data=tmp_path / "x.csv")

    def test_single_kernel_methods(self):
        with pytest.raises(ValidationError):
            FitConfig(synthetic=SyntheticTarget.SINE, kernels=["gaussian", "laplacian"])
        config = FitConfig(synthetic=SyntheticTarget.SINE, method="mkl", kernels=["gaussian", "laplacian"])
        assert len(config.kernels) == 2

    def test_unknown_keys_are_rejected(self):
        with pytest.raises(ValidationError):
            FitConfig(synthetic=SyntheticTarget.SINE, dleta=0.1)

    def test_unknown_kernel_family(self):
        with pytest.raises(ValidationError):
            RateSweepConfig(kernel="bessel")

    def test_rate_grid_must_ascend(self):
        with pytest.raises(ValidationError):
            RateSweepConfig(n_grid=[64, 32])

    def test_benchmark_attacks_parse(self, tmp_path):
        config = BenchmarkConfig(data=tmp_path / "d.csv", attacks=["l2:0.5", "linf:0.01"])
        assert [a.norm for a in config.attacks] == [Norm.L2, Norm.LINF]

    def test_bounds_delta_must_be_positive(self):
        with pytest.raises(ValidationError):
            BoundsConfig(synthetic=SyntheticTarget.SINE, delta_grid=[0.0])


class TestRunContext:
    def test_file_sections_are_overridden_by_options(self, tmp_path):
        path = write_json(tmp_path / "config.json", {"fit": {"n": 50, "method": "krr"}})
        ctx = RunContext(out_dir=tmp_path, config_file=path, settings=Settings())
        merged = ctx.merge("fit", {"n": 80, "method": None, "kernels": []})
        assert merged == {"n": 80, "method": "krr"}

    def test_config_file_must_be_an_object(self, tmp_path):
        path = write_json(tmp_path / "config.json", [1, 2])
        with pytest.raises(ConfigurationError):
            RunContext(config_file=path)

    def test_threads_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            RunContext(threads=0)

    def test_output_creates_the_directory(self, tmp_path):
        ctx = RunContext(out_dir=tmp_path / "nested" / "out")
        assert ctx.output("a.json").parent.is_dir()

    def test_settings_from_environment(self, monkeypatch):
        monkeypatch.setenv("ADVKERN_THREADS", "3")
        monkeypatch.setenv("ADVKERN_MAX_ITER", "7")
        ctx = RunContext()
        assert ctx.threads == 3
        assert ctx.settings.max_iter == 7

    def test_malformed_environment(self, monkeypatch):
        monkeypatch.setenv("ADVKERN_MC_SAMPLES", "many")
        with pytest.raises(ConfigurationError):
            Settings()

    @pytest.mark.parametrize("value", ["nan", "inf", "-inf"])
    def test_non_finite_tolerance(self, monkeypatch, value):
        monkeypatch.setenv("ADVKERN_TOL", value)
        with pytest.raises(ConfigurationError):
            Settings()

    def test_single_monte_carlo_draw(self, monkeypatch):
        monkeypatch.setenv("ADVKERN_MC_SAMPLES", "1")
        with pytest.raises(ConfigurationError):
            Settings()


class TestExitCodes:
    @pytest.mark.parametrize("error, code", [
        (ConfigurationError("bad"), EXIT_CONFIG),
        (KernelError("bad"), EXIT_CONFIG),
        (SingularSystemError("bad", n=3), EXIT_SOLVER),
        (DataError("bad"), EXIT_CONFIG),
        (DataIOError("unreadable"), EXIT_IO),
    ])
    def test_mapping(self, error, code):
        assert exit_code_for(error) == code

    def test_unknown_errors_propagate(self):
        with pytest.raises(KeyError):
            exit_code_for(KeyError("x"))

    def test_context_manager_returns_codes(self, tmp_path):
        manager = ContextManager(RunContext(out_dir=tmp_path))
        assert manager.run("ok", lambda: None) == EXIT_OK

        def fail():
            raise DataError("no rows")

        assert manager.run("fail", fail) == EXIT_CONFIG

        def unreadable():
            raise DataIOError("missing file")

        assert manager.run("unreadable", unreadable) == EXIT_IO


class TestParallel:
    def test_seeds_are_deterministic_and_distinct(self):
        seeds = spawn_seeds(7, 5)
        assert seeds == spawn_seeds(7, 5)
        assert len(set(seeds)) == 5

    def test_order_is_kept(self):
        assert ordered_map(lambda x: x * x, list(range(10)), threads=4) == [x * x for x in range(10)]


class TestRunFit:
    @pytest.mark.parametrize("method", ["adversarial", "krr", "krr-cv", "input"])
    def test_synthetic_methods(self, method):
        config = FitConfig(synthetic=SyntheticTarget.SINE, n=40, method=method, kernels=["gaussian:gamma=10"],
                           gamma_grid=[10.0], epochs=20, folds=3)
        outcome = run_fit(config, seed=0)
        assert outcome.summary["n_train"] == 32
        assert outcome.summary["n_test"] == 8
        assert len(outcome.train_rows) == 32
        assert outcome.stats is None
        assert sorted(outcome.split["train"] + outcome.split["test"]) == list(range(40))

    def test_auto_delta(self):
        config = FitConfig(synthetic=SyntheticTarget.SINE, n=25, test_fraction=0.0)
        outcome = run_fit(config, seed=1)
        assert outcome.split is None
        assert outcome.summary["delta"] == pytest.approx(0.2)

    def test_mkl(self):
        config = FitConfig(synthetic=SyntheticTarget.SINE, n=30, method="mkl",
                           kernels=["gaussian:gamma=10", "matern:nu=1.5"], delta=0.05)
        outcome = run_fit(config, seed=0)
        assert isinstance(outcome.model, MklModel)
        assert len(outcome.summary["kernels"]) == 2

    def test_csv_is_standardized(self, regression_csv):
        config = FitConfig(data=regression_csv, target_column="target", kernels=["gaussian:gamma=0.5"])
        outcome = run_fit(config, seed=0)
        assert outcome.stats is not None
        assert outcome.summary["test_r2"] is not None


class TestPredictAndAttack:
    @pytest.fixture
    def fitted(self, tmp_path, regression_csv):
        config = FitConfig(data=regression_csv, target_column="target", kernels=["gaussian:gamma=0.5"],
                           test_fraction=0.0)
        outcome = run_fit(config, seed=0)
        model_path = write_json(tmp_path / "model.json", outcome.model.to_dict())
        stats_path = write_json(tmp_path / "standardization.json", outcome.stats.to_dict())
        return outcome, model_path, stats_path

    def test_predict_reproduces_training_predictions(self, fitted, regression_csv):
        outcome, model_path, stats_path = fitted
        rows = run_predict(PredictConfig(model=model_path, data=regression_csv, drop_column="target",
                                         standardization=stats_path))
        np.testing.assert_allclose([r["prediction"] for r in rows],
                                   [r["prediction"] for r in outcome.train_rows], rtol=1e-9, atol=1e-12)

    def test_load_model_detects_kind(self, fitted, tmp_path):
        _, model_path, _ = fitted
        assert not isinstance(load_model(model_path), MklModel)

    def test_attack_summary(self, fitted, regression_csv):
        _, model_path, stats_path = fitted
        config = AttackConfig(model=model_path, data=regression_csv, target_column="target",
                              standardization=stats_path, attack="l2:0.1")
        rows, summary = run_attack(config, seed=0)
        assert len(rows) == 40
        assert summary["attack"] == "l2:0.1"
        assert summary["attacked_mse"] >= summary["clean_mse"]
        assert summary["attacked_mse"] <= summary["certified_loss"] * (1 + 1e-9)
        assert all(r["perturbation_norm"] <= 0.1 + 1e-12 for r in rows)


class TestSweeps:
    def test_rate_sweep_rows(self):
        config = RateSweepConfig(n_grid=[16, 32], reps=2, test_size=50, kernel="gaussian:gamma=10", folds=3)
        emitted = []
        result = run_rate_sweep(config, seed=0, on_rows=emitted.extend)
        assert [(r["n"], r["method"], r["rep"]) for r in emitted] == [
            (n, method, rep) for n in (16, 32) for rep in (0, 1) for method in ("adv_kern", "ridge_cv")
        ]
        assert emitted[0]["param"] == pytest.approx(0.25)
        assert all(r["param"] in DEFAULT_LAMBDA_GRID for r in emitted if r["method"] == "ridge_cv")
        assert [(r["n"], r["method"]) for r in result.summary_rows] == [
            (16, "adv_kern"), (16, "ridge_cv"), (32, "adv_kern"), (32, "ridge_cv"),
        ]
        assert set(result.rates) == {"adv_kern", "ridge_cv"}
        assert all(math.isfinite(rate.slope) for rate in result.rates.values())

    def test_rate_sweep_single_method(self):
        config = RateSweepConfig(n_grid=[16, 32], reps=2, test_size=50, kernel="gaussian:gamma=10",
                                 methods=["ridge_cv"], folds=3)
        emitted = []
        result = run_rate_sweep(config, seed=0, on_rows=emitted.extend)
        assert {r["method"] for r in emitted} == {"ridge_cv"}
        assert list(result.rates) == ["ridge_cv"]

    def test_rate_sweep_methods_share_draws(self):
        base = dict(n_grid=[16, 32], reps=2, test_size=50, kernel="gaussian:gamma=10", folds=3)
        both = run_rate_sweep(RateSweepConfig(**base), seed=2)
        alone = run_rate_sweep(RateSweepConfig(**base, methods=["adv_kern"]), seed=2)
        assert [r for r in both.summary_rows if r["method"] == "adv_kern"] == alone.summary_rows

    def test_rate_sweep_sizes_must_cover_the_folds(self):
        with pytest.raises(ValidationError):
            RateSweepConfig(n_grid=[3, 8], folds=5)
        assert RateSweepConfig(n_grid=[3, 8], folds=5, methods=["adv_kern"]).n_grid == [3, 8]

    def test_rate_sweep_is_thread_independent(self):
        config = RateSweepConfig(n_grid=[16, 32], reps=3, test_size=50, kernel="gaussian:gamma=10")
        serial = run_rate_sweep(config, seed=4, threads=1)
        threaded = run_rate_sweep(config, seed=4, threads=3)
        assert serial.summary_rows == threaded.summary_rows

    def test_fit_rate_recovers_slope(self):
        ns = np.array([32, 64, 128, 256])
        rate = fit_rate(ns, 3.0 * ns ** -0.8)
        assert rate.slope == pytest.approx(-0.8)
        assert not rate.degenerate

    def test_fit_rate_flags_round_off(self):
        assert fit_rate([10, 20], [1e-3, 0.0]).degenerate

    def test_noise_sweep_rows(self):
        config = NoiseSweepConfig(targets=["sine", "linear"], sigma_grid=[0.1], n=30, reps=1, test_size=50, folds=3)
        blocks = []
        rows = run_noise_sweep(config, seed=0, on_rows=blocks.append)
        assert len(blocks) == 2
        assert len(rows) == 6
        assert {r["method"] for r in rows} == {"adv_kern", "ridge_cv", "ridge"}
        assert all(r["mse"] >= 0 for r in rows)

    def test_sensitivity_rows(self):
        config = SensitivityConfig(n=30, reps=2, delta_grid=[0.01, 0.1], lambda_grid=[1e-3, 1e-1, 1.0],
                                   test_size=50, folds=3)
        blocks = []
        rows = run_sensitivity(config, seed=0, on_rows=blocks.append)
        assert len(blocks) == 2
        assert len(rows) == 2 * (2 + 3 + 1)
        assert [(r["method"], r["param"]) for r in blocks[0][:5]] == [
            ("adv_kern", 0.01), ("adv_kern", 0.1), ("ridge", 1e-3), ("ridge", 1e-1), ("ridge", 1.0),
        ]
        cv_rows = [r for r in rows if r["method"] == "ridge_cv"]
        assert [r["rep"] for r in cv_rows] == [0, 1]
        assert all(r["param"] in (1e-3, 1e-1, 1.0) for r in cv_rows)
        assert all(r["mse"] >= 0 for r in rows)

    def test_sensitivity_ridge_cv_matches_its_fixed_row(self):
        config = SensitivityConfig(n=30, reps=1, delta_grid=[0.1], lambda_grid=[1e-3, 1.0], test_size=50, folds=3)
        rows = run_sensitivity(config, seed=1)
        cv = next(r for r in rows if r["method"] == "ridge_cv")
        fixed = next(r for r in rows if r["method"] == "ridge" and r["param"] == cv["param"])
        assert cv["mse"] == pytest.approx(fixed["mse"])

    def test_sensitivity_large_weight_underfits(self):
        config = SensitivityConfig(n=60, reps=1, delta_grid=[0.05, 10.0], lambda_grid=[1e-4, 10.0], test_size=200,
                                   folds=3)
        mse = {(r["method"], r["param"]): r["mse"] for r in run_sensitivity(config, seed=0)}
        assert mse[("adv_kern", 10.0)] > mse[("adv_kern", 0.05)]
        assert mse[("ridge", 10.0)] > mse[("ridge", 1e-4)]

    def test_sensitivity_is_thread_independent(self):
        config = SensitivityConfig(n=30, reps=3, delta_grid=[0.1], lambda_grid=[1e-2], test_size=50, folds=3)
        assert run_sensitivity(config, seed=5, threads=1) == run_sensitivity(config, seed=5, threads=3)

    @pytest.mark.parametrize("options", [
        {"delta_grid": [0.0]},
        {"lambda_grid": [-1.0]},
        {"n": 4, "folds": 5},
    ])
    def test_sensitivity_rejects_bad_config(self, options):
        with pytest.raises(ValidationError):
            SensitivityConfig(**options)


class TestBenchmarkAndBounds:
    def test_benchmark_rows(self, regression_csv):
        config = BenchmarkConfig(data=regression_csv, target_column="target", methods=["adv_auto", "ridge_cv"],
                                 attacks=["l2:0.1"], bootstrap_reps=20, folds=3)
        result = run_benchmark(config, seed=0)
        assert {(r["method"], r["attack"]) for r in result.rows} == {
            ("adv_kern_auto", "clean"), ("adv_kern_auto", "l2:0.1"), ("ridge_cv", "clean"), ("ridge_cv", "l2:0.1"),
        }
        for row in result.rows:
            assert row["q1"] <= row["median"] <= row["q3"]
        assert result.selections["n_test"] == 8

    def test_bounds_report(self):
        config = BoundsConfig(synthetic=SyntheticTarget.SINE, n=64, mc_samples=200, sigma_grid=[1.0],
                              R_grid=[1.0], delta_grid=[0.1, 0.5])
        report = run_bounds(config, seed=0)
        assert report["complexity"]["gamma_bar_analytic"] == pytest.approx(1 / 8)
        assert len(report["bounds"]) == 4
        assert json.loads(json.dumps(report))["dataset"] == "synthetic-sine"


class TestProvenanceCsv:
    def test_rows_survive_with_provenance_line(self, tmp_path):
        path = tmp_path / "table.csv"
        with ProvenanceCsv(path, ["n", "mse"], "abc", 3) as table:
            table.append([{"n": 1, "mse": 0.5}])
            table.append([{"n": 2, "mse": 0.25}])
        assert path.read_text().splitlines()[0] == "# config_sha256=abc, seed=3"
        frame = read_csv(path)
        assert frame["n"].tolist() == [1, 2]


@pytest.mark.slow
class TestReproduction:
    def test_matern_rate_on_smooth_target(self):
        config = RateSweepConfig(target=SyntheticTarget.SINE, kernel="matern:nu=2.5")
        result = run_rate_sweep(config, seed=0, threads=4)
        assert -1.3 <= result.rates["adv_kern"].slope <= -0.8
        assert result.rates["ridge_cv"].slope < -0.5

    def test_fixed_radius_beats_ridge_under_linf_attack(self, abalone_csv):
        config = BenchmarkConfig(data=abalone_csv, methods=["ridge_cv", "adv_fixed"], fixed_deltas=[0.1],
                                 attacks=["linf:0.1"], bootstrap_reps=50)
        rows = run_benchmark(config, seed=0, threads=4).rows
        attacked = {r["method"]: r["median"] for r in rows if r["attack"] == "linf:0.1"}
        assert attacked["adv_kern_delta=0.1"] >= attacked["ridge_cv"] + 0.2
