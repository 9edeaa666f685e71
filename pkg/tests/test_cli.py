"""CLI parsing, dispatch, exit codes, and output determinism."""

import json
from pathlib import Path

import pytest

from mvnsdde.cli import main, parse

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


SMALL_SIM = """
subcommand = simulate
model = example51
delta = 0.00390625
tau = 0.03125
particles = 8
horizon = 0.25
seed = 42
"""


class TestParse:
    def test_defaults_filled_in(self, tmp_path):
        cfg = parse(
            write_cfg(tmp_path, "seed = 5\n"), subcommand="validate"
        )
        assert cfg.model == "example51"
        assert cfg.alpha == 0.5
        assert cfg.taming is True
        assert cfg.seed == 5

    def test_flag_overrides_file(self, tmp_path):
        path = write_cfg(tmp_path, "seed = 5\ndelta = 0.0009765625\n")
        cfg = parse(path, {"delta": "0.00048828125"}, subcommand="simulate")
        assert cfg.delta == 2.0**-11

    def test_missing_seed_rejected(self, tmp_path):
        path = write_cfg(tmp_path, "model = example51\n")
        with pytest.raises(Exception, match="seed"):
            parse(path, subcommand="simulate")

    def test_unknown_key_lists_valid(self, tmp_path):
        path = write_cfg(tmp_path, "seed = 1\nstepsize = 0.5\n")
        with pytest.raises(Exception, match="valid keys"):
            parse(path, subcommand="simulate")

    def test_comments_and_blank_lines(self, tmp_path):
        path = write_cfg(tmp_path, "# a comment\n\nseed = 9  # trailing\n")
        cfg = parse(path, subcommand="validate")
        assert cfg.seed == 9

    def test_subcommand_from_file(self, tmp_path):
        path = write_cfg(tmp_path, "subcommand = validate\nseed = 1\n")
        assert parse(path).subcommand == "validate"

    def test_missing_subcommand(self, tmp_path):
        path = write_cfg(tmp_path, "seed = 1\n")
        with pytest.raises(Exception, match="subcommand"):
            parse(path)

    def test_list_parsing(self, tmp_path):
        path = write_cfg(tmp_path, "seed = 1\nxis = 2,4, 8\n")
        cfg = parse(path, subcommand="validate")
        assert cfg.xis == (2, 4, 8)

    def test_outdir_env_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MVNSDDE_OUTDIR", str(tmp_path / "envout"))
        cfg = parse(None, {"seed": 1}, subcommand="validate")
        assert cfg.outdir == str(tmp_path / "envout")


class TestExitCodes:
    def test_validate_ok(self, tmp_path, capsys):
        rc = main(
            ["validate", "--seed", "3", "--outdir", str(tmp_path / "o")]
        )
        assert rc == 0
        assert "ok" in capsys.readouterr().out

    def test_validate_shipped_configs(self, tmp_path):
        for name in (
            "figure1.cfg", "chaos.cfg", "taming.cfg", "simulate_small.cfg",
            "meanfield_oracle.cfg",
        ):
            rc = main(
                [
                    "validate", "--config", str(CONFIGS / name),
                    "--outdir", str(tmp_path / name),
                ]
            )
            assert rc == 0, name

    def test_validation_failure_is_2(self, tmp_path):
        rc = main(
            [
                "validate", "--seed", "3", "--tau", "0.03",
                "--outdir", str(tmp_path / "o"),
            ]
        )
        assert rc == 2

    def test_simulate_bad_grid_is_2(self, tmp_path):
        rc = main(
            [
                "simulate", "--seed", "3", "--tau", "0.03",
                "--outdir", str(tmp_path / "o"),
            ]
        )
        assert rc == 2

    def test_missing_seed_is_1(self, tmp_path):
        rc = main(["simulate", "--outdir", str(tmp_path / "o")])
        assert rc == 1

    def test_unknown_flag_is_1(self):
        assert main(["simulate", "--frobnicate", "1"]) == 1

    def test_unknown_subcommand_is_1(self):
        assert main(["meditate", "--seed", "1"]) == 1

    def test_untamed_overflow_is_3(self, tmp_path):
        out = tmp_path / "o"
        rc = main(
            [
                "simulate", "--model", "cubic_no_mf", "--x0", "5.0",
                "--delta", "0.25", "--tau", "0.5", "--horizon", "4.0",
                "--particles", "10", "--seed", "11", "--no-taming",
                "--outdir", str(out),
            ]
        )
        assert rc == 3
        assert (out / "grid.partial.csv").exists()

    def test_taming_compare_divergence_is_0(self, tmp_path):
        out = tmp_path / "o"
        rc = main(
            [
                "taming-compare", "--config", str(CONFIGS / "taming.cfg"),
                "--particles", "50", "--outdir", str(out),
            ]
        )
        assert rc == 0
        report = json.loads((out / "taming_compare.summary.json").read_text())
        assert report["report"]["untamed_divergence_fraction"] >= 0.99

    def test_degenerate_fit_is_1(self, tmp_path):
        out = tmp_path / "o"
        rc = main(
            [
                "convergence-dt", "--seed", "5", "--particles", "4",
                "--delta-ref", "0.0078125", "--deltas", "0.0078125",
                "--horizon", "0.25", "--outdir", str(out),
            ]
        )
        assert rc == 1
        # outputs still written for inspection
        assert (out / "convergence_dt.csv").exists()
        summary = json.loads((out / "convergence_dt.summary.json").read_text())
        assert summary["slope"] is None

    def test_measure_independent_chaos_is_degenerate(self, tmp_path):
        out = tmp_path / "o"
        rc = main(
            [
                "convergence-particles", "--model", "cubic_no_mf", "--x0",
                "1.0", "--seed", "5", "--xis", "4,8", "--delta", "0.0078125",
                "--horizon", "0.25", "--outdir", str(out),
            ]
        )
        assert rc == 1


class TestOutputs:
    def test_simulate_writes_grid(self, tmp_path):
        out = tmp_path / "o"
        cfg = write_cfg(tmp_path, SMALL_SIM)
        rc = main(["--config", str(cfg), "--outdir", str(out)])
        assert rc == 0
        lines = (out / "grid.csv").read_text().strip().split("\n")
        assert lines[0] == "t,particle,comp0"
        assert len(lines) == 1 + 8 * (8 + 64 + 1)

    def test_config_echo_reruns_identically(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cfg = write_cfg(tmp_path, SMALL_SIM)
        assert main(["--config", str(cfg), "--outdir", str(out1)]) == 0
        assert (
            main(
                [
                    "--config", str(out1 / "config.echo"),
                    "--outdir", str(out2),
                ]
            )
            == 0
        )
        assert (out1 / "grid.csv").read_bytes() == (out2 / "grid.csv").read_bytes()
        echo1 = (out1 / "config.echo").read_text()
        echo2 = (out2 / "config.echo").read_text()
        assert [
            line for line in echo1.splitlines() if not line.startswith("outdir")
        ] == [line for line in echo2.splitlines() if not line.startswith("outdir")]

    def test_echo_contains_every_key(self, tmp_path):
        out = tmp_path / "o"
        cfg = write_cfg(tmp_path, SMALL_SIM)
        main(["--config", str(cfg), "--outdir", str(out)])
        echo = (out / "config.echo").read_text()
        for key in (
            "subcommand", "model", "delta", "deltas", "xis", "seed",
            "taming", "workers", "outdir", "mc_reps",
        ):
            assert f"{key} = " in echo

    def test_worker_count_does_not_change_outputs(self, tmp_path):
        outs = []
        cfg = write_cfg(tmp_path, SMALL_SIM)
        for workers in ("1", "8"):
            out = tmp_path / f"w{workers}"
            rc = main(
                [
                    "--config", str(cfg), "--workers", workers,
                    "--outdir", str(out),
                ]
            )
            assert rc == 0
            outs.append((out / "grid.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_convergence_dt_outputs(self, tmp_path):
        out = tmp_path / "o"
        rc = main(
            [
                "convergence-dt", "--seed", "77", "--particles", "30",
                "--delta-ref", "0.001953125",
                "--deltas", "0.00390625,0.0078125",
                "--horizon", "0.25", "--outdir", str(out),
            ]
        )
        assert rc == 0
        for suffix in (".csv", ".summary.json", ".gp"):
            assert (out / f"convergence_dt{suffix}").exists()
        summary = json.loads((out / "convergence_dt.summary.json").read_text())
        assert summary["config"]["seed"] == 77
        assert isinstance(summary["slope"], float)

    def test_empirical_rate_outputs(self, tmp_path):
        out = tmp_path / "o"
        rc = main(
            [
                "empirical-rate", "--seed", "3", "--dim", "1",
                "--xis", "8,32", "--mc-reps", "10", "--outdir", str(out),
            ]
        )
        assert rc == 0
        table = (out / "empirical_rate.csv").read_text().strip().split("\n")
        assert len(table) == 3

    def test_empirical_rate_d5_records_proxy(self, tmp_path):
        out = tmp_path / "o"
        rc = main(
            [
                "empirical-rate", "--seed", "3", "--dim", "5",
                "--xis", "8,16", "--mc-reps", "4", "--outdir", str(out),
            ]
        )
        assert rc == 0
        summary = json.loads((out / "empirical_rate.summary.json").read_text())
        assert "proxy" in summary["notes"]

    def test_outdir_env_fallback_run(self, tmp_path, monkeypatch):
        envdir = tmp_path / "from-env"
        monkeypatch.setenv("MVNSDDE_OUTDIR", str(envdir))
        monkeypatch.chdir(tmp_path)
        cfg = write_cfg(tmp_path, SMALL_SIM)
        assert main(["--config", str(cfg)]) == 0
        assert (envdir / "grid.csv").exists()


class TestReplicatesFlag:
    def test_forwarded_to_experiment(self, tmp_path):
        out = tmp_path / "o"
        rc = main(
            [
                "convergence-dt", "--seed", "77", "--particles", "10",
                "--delta-ref", "0.001953125", "--deltas", "0.0078125,0.015625",
                "--horizon", "0.25", "--replicates", "2",
                "--outdir", str(out),
            ]
        )
        assert rc == 0
        rows = (out / "convergence_dt.csv").read_text().strip().split("\n")[1:]
        assert all(row.endswith(",20") for row in rows)

    def test_zero_rejected(self, tmp_path):
        rc = main(
            [
                "convergence-dt", "--seed", "1", "--replicates", "0",
                "--outdir", str(tmp_path / "o"),
            ]
        )
        assert rc == 1
