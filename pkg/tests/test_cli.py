"""CLI contract: subcommands, determinism, exit codes, diagnostics."""

import os

import pytest

from hotfringe.cli import main
from hotfringe.pipeline import THREADS_ENV_VAR

EXAMPLE_CONFIG = "configs/example_experiment.yaml"


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSimulate:
    def test_byte_identical_reruns(self, tmp_path, capsys):
        argv = ["simulate", "--scenario", "fig4a", "--seed", "1",
                "--ensemble-size", "24"]
        code1, _, _ = run_cli(argv + ["--out", str(tmp_path / "a")], capsys)
        code2, _, _ = run_cli(argv + ["--out", str(tmp_path / "b")], capsys)
        assert code1 == code2 == 0
        a = (tmp_path / "a" / "fig4a_visibility.csv").read_bytes()
        b = (tmp_path / "b" / "fig4a_visibility.csv").read_bytes()
        assert a == b

    def test_thread_count_does_not_change_rows(self, tmp_path, capsys):
        base = ["simulate", "--scenario", "fig4b", "--seed", "2",
                "--ensemble-size", "24"]
        run_cli(base + ["--threads", "1", "--out", str(tmp_path / "t1")],
                capsys)
        run_cli(base + ["--threads", "8", "--out", str(tmp_path / "t8")],
                capsys)
        a = (tmp_path / "t1" / "fig4b_visibility.csv").read_bytes()
        b = (tmp_path / "t8" / "fig4b_visibility.csv").read_bytes()
        assert a == b

    def test_custom_without_config_fails_with_diagnostic(self, tmp_path,
                                                         capsys):
        code, out, err = run_cli(["simulate", "--scenario", "custom",
                                  "--out", str(tmp_path)], capsys)
        assert code == 1
        assert "error" in err.lower()
        assert "config" in err.lower()

    def test_unknown_scenario_rejected_by_parser(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--scenario", "nope"])
        assert exc.value.code == 2

    def test_custom_config_runs(self, tmp_path, capsys):
        code, out, err = run_cli(
            ["simulate", "--scenario", "custom", "--config", EXAMPLE_CONFIG,
             "--ensemble-size", "8", "--out", str(tmp_path)], capsys)
        assert code == 0
        assert (tmp_path / "custom_visibility.csv").exists()

    def test_missing_config_file_fails(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["simulate", "--scenario", "custom", "--config",
             str(tmp_path / "nothing.yaml"), "--out", str(tmp_path)], capsys)
        assert code == 1
        assert "error" in err.lower()

    def test_env_thread_override_only_without_flag(self, tmp_path, capsys,
                                                   monkeypatch):
        monkeypatch.setenv(THREADS_ENV_VAR, "zebra")
        code, _, err = run_cli(["simulate", "--scenario", "fig4a",
                                "--ensemble-size", "4",
                                "--out", str(tmp_path)], capsys)
        assert code == 1
        assert THREADS_ENV_VAR in err
        code, _, _ = run_cli(["simulate", "--scenario", "fig4a",
                              "--ensemble-size", "4", "--threads", "2",
                              "--out", str(tmp_path)], capsys)
        assert code == 0


class TestOtherSubcommands:
    def test_spectrum_writes_csv(self, tmp_path, capsys):
        code, out, _ = run_cli(["spectrum", "--temperatures", "2500",
                                "--out", str(tmp_path)], capsys)
        assert code == 0
        assert (tmp_path / "fig3_spectrum.csv").exists()

    def test_scan_reports_visibility(self, tmp_path, capsys):
        code, out, _ = run_cli(["scan", "--scenario", "fig4a", "--power",
                                "0", "--ensemble-size", "8",
                                "--out", str(tmp_path)], capsys)
        assert code == 0
        assert "V=47.00%" in out
        assert (tmp_path / "fig4a_scan_0W.csv").exists()

    def test_fit_runs_on_observation_file(self, tmp_path, capsys):
        obs = tmp_path / "obs.txt"
        obs.write_text("# power velocity yield err\n"
                       "6.0 140 0.15 0.01\n6.0 190 0.085 0.01\n"
                       "10.0 140 0.32 0.02\n10.0 190 0.22 0.02\n")
        code, out, _ = run_cli(["fit", "--observations", str(obs),
                                "--n-molecules", "16",
                                "--out", str(tmp_path)], capsys)
        assert code == 0
        assert "triplet_sigma_cm2=" in out

    def test_fit_with_unreadable_observations(self, tmp_path, capsys):
        code, _, err = run_cli(["fit", "--observations",
                                str(tmp_path / "none.txt")], capsys)
        assert code == 1
        assert "error" in err.lower()

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
