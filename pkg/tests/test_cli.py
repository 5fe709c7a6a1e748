import csv
import json
from pathlib import Path

import numpy as np
import pytest

from lqmfg.cli import (
    load_config,
    main,
    run_experiment,
    run_nagent_validation,
)
from lqmfg.errors import CrossFieldError, ParseError, SchemaError

REPO_CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = """\
[model]
A = 0.4
A_bar = 0.4
B1 = 0.4
B1_bar = 0.4
B2 = 0.3
B2_bar = 0.3
Q = 0.4
Q_bar = 0.4
R1 = 0.4
R1_bar = 0.4
R2 = 0.4
R2_bar = 0.4
gamma = {gamma}

[noise]
init_common = uniform(-1, 1)
init_idio = uniform(-1, 1)
step_common = gaussian(0, 0.01)
step_idio = gaussian(0, 0.01)

[optimizer]
T = {T}

{extra}
[experiment]
method = {method}
oracle = {oracle}
repeats = {repeats}
output_dir = {outdir}
master_seed = {seed}
"""


def write_config(tmp_path, *, gamma=0.9, T=20, method="gda", oracle="exact",
                 repeats=1, seed=7, extra="", name="exp.cfg"):
    path = tmp_path / name
    path.write_text(BASE.format(gamma=gamma, T=T, method=method,
                                oracle=oracle, repeats=repeats,
                                outdir=tmp_path / "out", seed=seed,
                                extra=extra))
    return path


class TestLoadConfig:
    def test_shipped_gda_exact_defaults(self):
        cfg = load_config(REPO_CONFIGS / "table1_gda_exact.cfg")
        assert cfg.method == "gda"
        assert cfg.oracle == "exact"
        assert cfg.optimizer.T == 2000
        assert cfg.optimizer.eta1 == 0.1
        assert cfg.optimizer.eta2 == 0.1
        theta0 = cfg.optimizer.theta0
        for name in ("K1", "L1", "K2", "L2"):
            assert getattr(theta0, name)[0, 0] == 0.0

    def test_shipped_sampled_config(self):
        cfg = load_config(REPO_CONFIGS / "table1_gda_sampled.cfg")
        assert cfg.oracle == "sampled"
        assert cfg.estimator.M == 10000
        assert cfg.estimator.horizon == 50
        assert cfg.estimator.tau == 0.1
        assert cfg.repeats == 5

    def test_sampled_without_estimator_section(self, tmp_path):
        path = write_config(tmp_path, oracle="sampled")
        with pytest.raises(CrossFieldError):
            load_config(path)

    def test_estimator_with_exact_oracle(self, tmp_path):
        path = write_config(tmp_path, extra="[estimator]\nM = 100\n")
        with pytest.raises(CrossFieldError):
            load_config(path)

    def test_unit_discount_rejected_via_model_validation(self, tmp_path):
        path = write_config(tmp_path, gamma=1.0)
        with pytest.raises(SchemaError):
            load_config(path)

    def test_unknown_field(self, tmp_path):
        path = write_config(tmp_path, extra="[validation]\nbogus = 1\n")
        with pytest.raises(SchemaError):
            load_config(path)

    def test_missing_model_field(self, tmp_path):
        path = write_config(tmp_path)
        text = path.read_text().replace("Q_bar = 0.4\n", "")
        path.write_text(text)
        with pytest.raises(SchemaError):
            load_config(path)

    def test_unparseable_number(self, tmp_path):
        path = write_config(tmp_path, gamma="zero.9")
        with pytest.raises(ParseError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_config(tmp_path / "absent.cfg")

    def test_syntax_error(self, tmp_path):
        path = tmp_path / "broken.cfg"
        path.write_text("not a section header\n[model]\n")
        with pytest.raises(ParseError):
            load_config(path)

    def test_matrix_syntax(self, tmp_path):
        path = write_config(tmp_path)
        text = path.read_text().replace("A = 0.4", "A = 0.3,0.0;0.0,0.2")
        text = text.replace("A_bar = 0.4", "A_bar = 0.1,0.0;0.0,0.1")
        text = text.replace("Q = 0.4\n", "Q = 0.4,0.0;0.0,0.4\n")
        text = text.replace("Q_bar = 0.4\n", "Q_bar = 0.1,0.0;0.0,0.1\n")
        text = text.replace("B1 = 0.4\n", "B1 = 0.4;0.1\n")
        text = text.replace("B1_bar = 0.4\n", "B1_bar = 0.0;0.0\n")
        text = text.replace("B2 = 0.3\n", "B2 = 0.3;0.0\n")
        text = text.replace("B2_bar = 0.3\n", "B2_bar = 0.0;0.0\n")
        text = text.replace("[model]", "[model]\nd = 2")
        path.write_text(text)
        cfg = load_config(path)
        assert cfg.model.d == 2
        assert cfg.model.A.shape == (2, 2)
        assert cfg.model.B1.shape == (2, 1)

    def test_distribution_variants(self, tmp_path):
        path = write_config(tmp_path)
        text = path.read_text().replace("init_common = uniform(-1, 1)",
                                        "init_common = point_mass(0.5)")
        text = text.replace("step_common = gaussian(0, 0.01)",
                            "step_common = point(0)")
        path.write_text(text)
        cfg = load_config(path)
        assert cfg.model.noise.init_common.kind == "point"
        assert cfg.model.noise.init_common.p1 == 0.5


class TestRunExperiment:
    def test_artifacts_written(self, tmp_path):
        cfg = load_config(write_config(tmp_path, T=10))
        summary = run_experiment(cfg)
        out = Path(cfg.output_dir)
        for name in ("benchmark.json", "run_0.csv", "convergence.csv",
                     "summary.json", "timing.json"):
            assert (out / name).is_file(), name
        assert summary["termination_per_run"] == ["completed"]
        bench = json.loads((out / "benchmark.json").read_text())
        assert bench["cost_star"] == pytest.approx(0.76448, abs=5e-5)

    def test_constant_curve_with_zero_rate(self, tmp_path):
        extra = ""
        path = write_config(tmp_path, T=8)
        text = path.read_text().replace("T = 8", "T = 8\neta1 = 0.0\neta2 = 0.0")
        path.write_text(text)
        cfg = load_config(path)
        run_experiment(cfg)
        with open(Path(cfg.output_dir) / "convergence.csv") as fh:
            rows = list(csv.reader(fh))[1:]
        means = {row[1] for row in rows}
        assert len(means) == 1

    def test_parallel_workers_match_sequential(self, tmp_path):
        est = "[estimator]\nM = 40\nhorizon = 10\n"
        cfg_a = load_config(write_config(tmp_path, T=6, oracle="sampled",
                                         repeats=2, extra=est, name="a.cfg"))
        run_experiment(cfg_a, workers=1)
        seq = (Path(cfg_a.output_dir) / "summary.json").read_text()
        from dataclasses import replace

        cfg_b = replace(cfg_a, output_dir=str(tmp_path / "out_b"))
        run_experiment(cfg_b, workers=2)
        par = (Path(cfg_b.output_dir) / "summary.json").read_text()
        assert seq == par


class TestNAgentValidation:
    def test_zero_noise_gaps_are_zero(self, tmp_path):
        path = write_config(tmp_path)
        text = path.read_text()
        for key in ("init_common", "init_idio"):
            text = text.replace(f"{key} = uniform(-1, 1)", f"{key} = point(0)")
        for key in ("step_common", "step_idio"):
            text = text.replace(f"{key} = gaussian(0, 0.01)", f"{key} = point(0)")
        path.write_text(text)
        cfg = load_config(path)
        payload = run_nagent_validation(cfg, Ns=(2, 5), reps=20, horizon=10)
        assert all(row["rel_gap"] == 0.0 for row in payload["rows"])

    def test_csv_schema(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        run_nagent_validation(cfg, Ns=(3, 9), reps=50, horizon=10)
        with open(Path(cfg.output_dir) / "nagent_validation.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["N", "mean", "stderr", "rel_gap"]
        assert [row[0] for row in rows[1:]] == ["3", "9"]
        for row in rows[1:]:
            assert np.isfinite(float(row[1]))


class TestMainEntry:
    def test_benchmark_verb(self, tmp_path, capsys):
        path = write_config(tmp_path)
        rc = main(["benchmark", "--config", str(path)])
        assert rc == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed["cost_star"] == pytest.approx(0.76448, abs=5e-5)

    def test_optimize_verb_with_overrides(self, tmp_path, capsys):
        path = write_config(tmp_path, T=5)
        out = tmp_path / "cli_out"
        rc = main(["optimize", "--config", str(path), "--out", str(out),
                   "--seed", "123"])
        assert rc == 0
        assert (out / "summary.json").is_file()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["master_seed"] == 123

    def test_config_error_exit_code(self, tmp_path, capsys):
        rc = main(["optimize", "--config", str(tmp_path / "nope.cfg")])
        assert rc == 2
        printed = json.loads(capsys.readouterr().out)
        assert printed["error"] == "ParseError"

    def test_numerical_error_exit_code(self, tmp_path, capsys):
        path = write_config(tmp_path)
        text = path.read_text().replace("A = 0.4", "A = 2.0")
        text = text.replace("B1 = 0.4\n", "B1 = 0.01\n")
        text = text.replace("B1_bar = 0.4\n", "B1_bar = 0.0\n")
        text = text.replace("B2 = 0.3\n", "B2 = 0.01\n")
        text = text.replace("B2_bar = 0.3\n", "B2_bar = 0.0\n")
        path.write_text(text)
        rc = main(["benchmark", "--config", str(path)])
        assert rc == 3
        printed = json.loads(capsys.readouterr().out)
        assert "error" in printed

    def test_simulate_verb(self, tmp_path, capsys):
        path = write_config(tmp_path)
        out = tmp_path / "sim_out"
        rc = main(["simulate", "--config", str(path), "--out", str(out),
                   "--paths", "2", "--horizon", "6"])
        assert rc == 0
        files = sorted(out.glob("trajectory_*.csv"))
        assert len(files) == 2
        rows = files[0].read_text().strip().splitlines()
        assert len(rows) == 7

    def test_validate_nagent_verb(self, tmp_path, capsys):
        path = write_config(tmp_path)
        rc = main(["validate-nagent", "--config", str(path), "--ns", "2,4",
                   "--reps", "30", "--horizon", "8"])
        assert rc == 0
        printed = json.loads(capsys.readouterr().out)
        assert set(printed["gaps"]) == {"2", "4"}


class TestDeterminism:
    def test_benchmark_rerun_bit_identical(self, tmp_path):
        """Re-running only the benchmark step reproduces the benchmark
        artifact of a full experiment bit for bit."""
        from lqmfg.cli import write_benchmark

        cfg = load_config(write_config(tmp_path, T=5))
        run_experiment(cfg)
        full = (Path(cfg.output_dir) / "benchmark.json").read_bytes()
        solo_dir = tmp_path / "solo"
        write_benchmark(cfg, solo_dir)
        assert (solo_dir / "benchmark.json").read_bytes() == full

    def test_artifacts_byte_identical(self, tmp_path):
        est = "[estimator]\nM = 30\nhorizon = 10\n"
        path = write_config(tmp_path, T=6, oracle="sampled", repeats=2,
                            extra=est)
        cfg = load_config(path)
        from dataclasses import replace

        cfg_a = replace(cfg, output_dir=str(tmp_path / "a"))
        cfg_b = replace(cfg, output_dir=str(tmp_path / "b"))
        run_experiment(cfg_a)
        run_experiment(cfg_b)
        for name in ("benchmark.json", "summary.json", "run_0.csv",
                     "run_1.csv", "convergence.csv"):
            a = (Path(cfg_a.output_dir) / name).read_bytes()
            b = (Path(cfg_b.output_dir) / name).read_bytes()
            assert a == b, name
