"""CLI subcommands, exit codes, and reproducible CSV output."""

import csv
import json

import numpy as np

from dmhe.cli import main


def write_config(tmp_path, raw, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw), encoding="utf-8")
    return str(path)


def toy_model_file(tmp_path):
    model = {"subsystems": [{
        "index": 1, "A_self": [[0.5]], "B_self": [[1.0]], "C_self": [[1.0]],
    }]}
    path = tmp_path / "toy_model.json"
    path.write_text(json.dumps(model), encoding="utf-8")
    return str(path)


def benchmark_raw(tmp_path, out="out", **overrides):
    raw = {
        "model": "benchmark",
        "schedule": {"horizon": 3, "iterations": 2, "mode": "cmhe-reference"},
        "weights": {"prior": 0.1, "disturbance": 1e-4, "noise": 1e-4},
        "noise": {"sigma_w": 0.01, "sigma_v": 0.01, "seed": 5},
        "evaluation": {"runs": 2, "samples": 12, "horizons": [2, 3]},
        "output_dir": str(tmp_path / out),
    }
    raw.update(overrides)
    return raw


class TestCheck:
    def test_benchmark_default_weights_fail_iteration_certificate(self, tmp_path):
        config = write_config(tmp_path, benchmark_raw(tmp_path))
        assert main(["check", "--config", config]) == 1
        rows = list(csv.reader(open(tmp_path / "out" / "conditions.csv")))
        assert rows[0][0] == "name"
        assert len(rows) == 5
        satisfied = {row[0]: row[1] for row in rows[1:]}
        assert satisfied["dmhe1_iteration_convergence"] == "false"
        assert satisfied["dmhe1_error_stability"] == "true"

    def test_single_subsystem_toy_certificates_all_hold(self, tmp_path):
        raw = {
            "model": {"file": toy_model_file(tmp_path)},
            "schedule": {"horizon": 1, "iterations": 1, "mode": "dmhe1"},
            "weights": {"prior": 1.0, "disturbance": 1.0, "noise": 1.0},
            "noise": {"sigma_w": 0.0, "sigma_v": 0.0, "seed": 0},
            "evaluation": {"runs": 1, "samples": 4, "horizons": [1]},
            "output_dir": str(tmp_path / "toy_out"),
        }
        config = write_config(tmp_path, raw)
        assert main(["check", "--config", config]) == 0
        report = json.loads((tmp_path / "toy_out" / "conditions.json").read_text())
        assert report["all_satisfied"] is True
        # a single subsystem has no cross coupling at all
        iteration = report["certificates"][0]
        assert iteration["value"] == 0.0

    def test_malformed_weights_exit_nonzero(self, tmp_path, capsys):
        raw = benchmark_raw(tmp_path)
        raw["weights"] = {"prior": -3.0}
        config = write_config(tmp_path, raw)
        assert main(["check", "--config", config]) == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_subcommand_prints_usage(self, capsys):
        assert main(["frobnicate"]) != 0
        assert "usage" in capsys.readouterr().err.lower()


class TestEstimate:
    def test_trajectory_csv_layout_and_determinism(self, tmp_path):
        raw = benchmark_raw(tmp_path, out="run_a")
        config = write_config(tmp_path, raw)
        assert main(["estimate", "--config", config]) == 0
        path_a = tmp_path / "run_a" / "trajectory.csv"
        rows = list(csv.reader(open(path_a)))
        assert rows[0] == ["k", "subsystem", "component", "prior", "estimate",
                           "truth"]
        # 12 samples, horizon 3: 9 instants, 9 state rows each
        assert len(rows) == 1 + 9 * 9
        # rerun into another directory: byte-identical numbers
        raw_b = benchmark_raw(tmp_path, out="run_b")
        config_b = write_config(tmp_path, raw_b, name="config_b.json")
        assert main(["estimate", "--config", config_b]) == 0
        body_a = path_a.read_text().splitlines()
        body_b = (tmp_path / "run_b" / "trajectory.csv").read_text().splitlines()
        assert body_a == body_b

    def test_seventeen_digit_round_trip(self, tmp_path):
        config = write_config(tmp_path, benchmark_raw(tmp_path))
        assert main(["estimate", "--config", config]) == 0
        rows = list(csv.reader(open(tmp_path / "out" / "trajectory.csv")))
        values = [float(row[4]) for row in rows[1:]]
        # formatting must be lossless for doubles
        assert all(float(format(v, ".17g")) == v for v in values)

    def test_constrained_mode_emits_feasible_mass_fractions(self, tmp_path):
        raw = benchmark_raw(tmp_path, out="boxed")
        raw["schedule"] = {"horizon": 5, "iterations": 2, "mode": "dmhe2"}
        raw["boxes"] = {"benchmark-physical": True, "disturbance_bound": 0.1}
        raw["noise"] = {"sigma_w": 0.01, "sigma_v": 0.01, "w_bound": 0.1,
                        "seed": 2}
        raw["evaluation"] = {"runs": 1, "samples": 14, "horizons": [5]}
        config = write_config(tmp_path, raw)
        assert main(["estimate", "--config", config]) == 0
        rows = list(csv.reader(open(tmp_path / "boxed" / "trajectory.csv")))
        mass_fraction_rows = [row for row in rows[1:] if int(row[2]) != 2]
        estimates = np.array([float(row[4]) for row in mass_fraction_rows])
        # physical mass fractions reconstructed from clamped scaled estimates
        assert np.all(estimates >= -1e-12)
        assert np.all(estimates <= 1 + 1e-12)

    def test_published_tuning_layout(self, tmp_path):
        # five rounds at horizon ten with the published tuning: the recursion
        # diverges numerically, but the trajectory layout contract holds and
        # every number round-trips
        raw = benchmark_raw(tmp_path, out="published")
        raw["schedule"] = {"horizon": 10, "iterations": 5, "mode": "dmhe1"}
        raw["weights"] = {"prior": 0.1, "disturbance": 1e-4, "noise": 1e-4}
        raw["evaluation"] = {"runs": 1, "samples": 15, "horizons": [10]}
        config = write_config(tmp_path, raw)
        assert main(["estimate", "--config", config]) == 0
        rows = list(csv.reader(open(tmp_path / "published" / "trajectory.csv")))
        instants = sorted({row[0] for row in rows[1:]}, key=int)
        assert instants == [str(k) for k in range(10, 15)]
        per_instant = [row for row in rows[1:] if row[0] == "10"]
        assert len(per_instant) == 9  # one estimate row per state component
        assert all(np.isfinite(float(row[4])) for row in rows[1:])

    def test_cli_overrides_change_schedule(self, tmp_path):
        config = write_config(tmp_path, benchmark_raw(tmp_path))
        assert main(["estimate", "--config", config, "--horizon", "4",
                     "--iters", "1", "--mode", "dmhe1", "--seed", "9"]) == 0
        rows = list(csv.reader(open(tmp_path / "out" / "trajectory.csv")))
        ks = {row[0] for row in rows[1:]}
        assert min(int(k) for k in ks) == 4


class TestMonteCarloAndSweep:
    def test_montecarlo_outputs(self, tmp_path):
        config = write_config(tmp_path, benchmark_raw(tmp_path))
        assert main(["montecarlo", "--config", config]) == 0
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["runs"] == 2
        assert len(summary["rmse_trajectory_scaled"]) == 9
        rows = list(csv.reader(open(tmp_path / "out" / "rmse_vs_k.csv")))
        assert rows[0] == ["instant", "rmse_scaled", "rmse_physical"]
        assert len(rows) == 10

    def test_sweep_row_per_horizon(self, tmp_path):
        config = write_config(tmp_path, benchmark_raw(tmp_path))
        assert main(["sweep", "--config", config, "--runs", "1"]) == 0
        rows = list(csv.reader(open(tmp_path / "out" / "horizon_table.csv")))
        assert len(rows) == 3
        assert [row[0] for row in rows[1:]] == ["2", "3"]
        assert not (tmp_path / "out" / "rmse_vs_sigma.csv").exists()

    def test_sweep_emits_sigma_table_when_configured(self, tmp_path):
        raw = benchmark_raw(tmp_path)
        raw["evaluation"] = {"runs": 1, "samples": 12, "horizons": [3],
                             "sigma_sweep": [0.005, 0.02]}
        config = write_config(tmp_path, raw)
        assert main(["sweep", "--config", config]) == 0
        rows = list(csv.reader(open(tmp_path / "out" / "rmse_vs_sigma.csv")))
        assert rows[0][0] == "sigma_w"
        assert len(rows) == 3
        assert [float(row[0]) for row in rows[1:]] == [0.005, 0.02]

    def test_default_config_is_benchmark(self, tmp_path):
        # no --config: bundled benchmark defaults, overridden to stay fast
        assert main(["check", "--out", str(tmp_path / "d")]) in (0, 1)
        assert (tmp_path / "d" / "conditions.csv").exists()
