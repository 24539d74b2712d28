import csv
import json

import numpy as np
import pytest

from lorentzgas import report
from lorentzgas.billiard import PhasePoint, flow
from lorentzgas.cli import main
from lorentzgas.harness import ResultRow
from lorentzgas.poisson import sample_configuration
from lorentzgas.streams import block_generator

TINY_CONFIG = {
    "eps_list": [0.08, 0.05],
    "t_eval": [0.5],
    "n_configs": 400,
    "n_particles": 400,
    "T": 1.0,
    "seed": 4242,
}


def write_config(tmp_path, **overrides):
    raw = dict(TINY_CONFIG)
    raw.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestBadInvocations:
    def test_unknown_flag_exits_2(self, capsys):
        assert main(["--frobnicate", "sample"]) == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_subcommand_exits_2(self):
        assert main(["warble"]) == 2

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        path = write_config(tmp_path, not_a_key=1)
        code = main(["--config", path, "--out-dir", str(tmp_path / "o"), "converge"])
        assert code == 2
        assert "not_a_key" in capsys.readouterr().err

    def test_runtime_error_exits_3(self, tmp_path):
        # Expected obstacle count far beyond the resource cap.
        code = main(["--out-dir", str(tmp_path), "sample",
                     "--eps", "0.05", "--intensity", "1e9", "--radius", "100"])
        assert code == 3


class TestSampleAndTrace:
    def test_sample_writes_centers_and_metadata(self, tmp_path):
        assert main(["--out-dir", str(tmp_path), "--seed", "5", "sample",
                     "--eps", "0.05", "--radius", "1.5"]) == 0
        rows = read_csv(tmp_path / "sample_centers.csv")
        assert rows[0] == ["id", "x1", "x2"]
        meta = json.loads((tmp_path / "sample_meta.json").read_text())
        assert meta["n_centers"] == len(rows) - 1
        assert meta["package_version"]

    def test_trace_with_zero_intensity_has_no_collision_rows(self, tmp_path):
        assert main(["--out-dir", str(tmp_path), "trace",
                     "--eps", "0.05", "--intensity", "0", "--time", "1.0"]) == 0
        rows = read_csv(tmp_path / "trace.csv")
        assert rows[0] == ["sample_id", "j", "tau_j", "obstacle_id", "x1", "x2", "v1", "v2"]
        assert len(rows) == 1

    def test_trace_rows_replay_matches_flow_endpoint(self, tmp_path):
        rng = block_generator(6, 0, 0)
        config = sample_configuration(2, 25.0, 2.0, rng)
        z = PhasePoint(np.zeros(2), np.array([1.0, 0.0]))
        result = flow(z, 1.5, config, 0.05)
        assert result.n_collisions >= 1
        rows = report.trajectory_rows(z, result, config, 0.05)
        assert len(rows) == result.n_collisions
        last = rows[-1]
        x_last, v_last = np.array(last[4:6]), np.array(last[6:8])
        tau_last = last[2]
        drift = x_last + (1.5 - tau_last) * v_last
        assert np.allclose(drift, result.endpoint.x, atol=1e-9)


class TestGreenAndBoltzmannCommands:
    def test_green_estimate_schema(self, tmp_path):
        assert main(["--out-dir", str(tmp_path), "green", "--mode", "estimate",
                     "--eps", "0.08", "--t", "0.5", "--n", "150"]) == 0
        rows = read_csv(tmp_path / "green_results.csv")
        assert rows[0] == ["eps", "t", "observable", "estimate", "stderr", "n_samples", "seed"]
        assert len(rows) == 10  # 8 observables + mass + header

    def test_green_j1j2_and_gap(self, tmp_path):
        assert main(["--out-dir", str(tmp_path), "green", "--mode", "j1j2",
                     "--eps", "0.08", "--t", "0.5", "--n", "120"]) == 0
        names = {r[2] for r in read_csv(tmp_path / "green_results.csv")[1:]}
        assert names == {"J1_mass", "J2_mass"}
        assert main(["--out-dir", str(tmp_path), "green", "--mode", "gap",
                     "--eps", "0.08", "--t", "0.5", "--n", "120"]) == 0
        names = {r[2] for r in read_csv(tmp_path / "green_results.csv")[1:]}
        assert names == {"recollision_gap"}

    def test_green_inteq_unknown_observable_exits_2(self, tmp_path):
        code = main(["--out-dir", str(tmp_path), "green", "--mode", "inteq",
                     "--observable", "nope", "--n", "50"])
        assert code == 2

    def test_boltzmann_jump_outputs(self, tmp_path):
        assert main(["--out-dir", str(tmp_path), "boltzmann", "--mode", "jump",
                     "--n", "200", "--t-grid", "0.25,0.5"]) == 0
        snaps = read_csv(tmp_path / "boltzmann_snapshots.csv")
        assert snaps[0] == ["t", "x1", "x2", "v1", "v2"]
        assert len(snaps) == 1 + 2 * 200
        series = read_csv(tmp_path / "boltzmann_series.csv")
        assert series[0] == ["t", "observable", "estimate", "stderr"]

    def test_boltzmann_deflection_stats(self, tmp_path):
        assert main(["--out-dir", str(tmp_path), "boltzmann", "--mode", "deflection",
                     "--n", "20000"]) == 0
        stats = json.loads((tmp_path / "deflection_stats.json").read_text())
        assert stats["pvalue"] > 0.01


class TestConvergeMassPlot:
    def test_converge_outputs_and_check_passes(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["--config", path, "--out-dir", str(out), "converge", "--check"]) == 0
        assert (out / "convergence_results.csv").exists()
        assert (out / "convergence_meta.json").exists()
        assert (out / "gaps_vs_eps.svg").exists()
        rows = report.read_rows_csv(str(out / "convergence_results.csv"))
        assert any(r.estimator == "gap" for r in rows)

    def test_converge_csv_bit_identical_across_threads(self, tmp_path):
        path = write_config(tmp_path)
        outs = []
        for threads, name in ((1, "a"), (4, "b"), (8, "c")):
            out = tmp_path / name
            assert main(["--config", path, "--out-dir", str(out),
                         "--threads", str(threads), "converge"]) == 0
            outs.append((out / "convergence_results.csv").read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_check_failure_exits_4(self, tmp_path):
        # A tiny fixed intensity makes the finite side nearly free transport
        # while the limit process scatters at full rate: the bump gaps dwarf
        # 3 SE and the check must fail.
        path = write_config(tmp_path, eps_list=[0.05], t_eval=[1.0],
                            n_configs=2000, n_particles=2000,
                            intensity_override=0.01)
        out = tmp_path / "out"
        assert main(["--config", path, "--out-dir", str(out), "converge", "--check"]) == 4

    def test_mass_outputs(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["--config", path, "--out-dir", str(out), "mass"]) == 0
        rows = report.read_rows_csv(str(out / "mass_results.csv"))
        assert {r.estimator for r in rows} >= {"limit", "unfiltered", "restricted"}
        assert (out / "mass_deficiency.svg").exists()

    def test_plot_is_pure_function_of_csv(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["--config", path, "--out-dir", str(out), "converge"]) == 0
        plots_a = tmp_path / "pa"
        plots_b = tmp_path / "pb"
        csv_path = str(out / "convergence_results.csv")
        assert main(["--out-dir", str(plots_a), "plot", "--input", csv_path]) == 0
        assert main(["--out-dir", str(plots_b), "plot", "--input", csv_path]) == 0
        files_a = sorted(p.name for p in plots_a.glob("*.svg"))
        assert files_a
        for name in files_a:
            assert (plots_a / name).read_bytes() == (plots_b / name).read_bytes()

    def test_env_var_thread_fallback(self, tmp_path, monkeypatch):
        path = write_config(tmp_path)
        monkeypatch.setenv("LORENTZ_BG_THREADS", "2")
        out = tmp_path / "out"
        assert main(["--config", path, "--out-dir", str(out), "converge"]) == 0
        ref = tmp_path / "ref"
        monkeypatch.delenv("LORENTZ_BG_THREADS")
        assert main(["--config", path, "--out-dir", str(ref), "converge"]) == 0
        assert (out / "convergence_results.csv").read_bytes() == (
            ref / "convergence_results.csv"
        ).read_bytes()


class TestReportRoundTrip:
    def test_rows_csv_round_trip_exact(self, tmp_path):
        rows = [
            ResultRow(0.05, 1.0, "v1", "unfiltered", 0.1234567890123456, 0.001, 100, 7),
            ResultRow(0.0, 1.0, "v1", "limit", -1.5e-17, 0.0, 50, 7),
        ]
        path = str(tmp_path / "rows.csv")
        report.write_rows_csv(rows, path)
        assert report.read_rows_csv(path) == rows
