"""Tests for the experiment driver, serialization, CLI, and self-test."""

import json
import os

import numpy as np
import pytest

import qdialogue.quantum as quantum
from qdialogue.cli import load_config_file, main
from qdialogue.harness import (
    CSV_COLUMNS,
    ConfigError,
    ExperimentConfig,
    formulas_text,
    run_experiment,
    run_trial,
    selftest,
    sweep,
    to_csv,
    to_json,
    trial_rng,
)
from qdialogue.quantum import BitPair


class TestConfigValidation:
    def test_unknown_attack(self):
        with pytest.raises(ConfigError, match="unknown attack"):
            ExperimentConfig(attack="mitm").validate()

    def test_c_range(self):
        with pytest.raises(ConfigError, match="strictly between"):
            ExperimentConfig(c=1.0).validate()

    def test_beta2_required(self):
        with pytest.raises(ConfigError, match="requires --beta2"):
            ExperimentConfig(attack="entangle-measure").validate()

    def test_beta2_range(self):
        with pytest.raises(ConfigError, match="beta2"):
            ExperimentConfig(attack="entangle-measure", beta2=0.9).validate()

    def test_beta2_spurious(self):
        with pytest.raises(ConfigError, match="only applies"):
            ExperimentConfig(attack="none", beta2=0.1).validate()

    def test_trials_positive(self):
        with pytest.raises(ConfigError, match="trials"):
            ExperimentConfig(trials=0).validate()

    def test_policy_name(self):
        with pytest.raises(ConfigError, match="detection-policy"):
            ExperimentConfig(detection_policy="halt").validate()

    def test_seed_non_negative(self):
        with pytest.raises(ConfigError, match="seed"):
            ExperimentConfig(master_seed=-1).validate()

    def test_format_name(self):
        with pytest.raises(ConfigError, match="format"):
            ExperimentConfig(format="xml").validate()


class TestDeterminism:
    BASE = dict(attack="entangle-measure", beta2=0.25, c=0.5, n_pairs=8, trials=120, master_seed=31)

    def test_trial_stream_derivation_is_stable(self):
        a = trial_rng(7, 3).integers(0, 1 << 30, size=4)
        b = trial_rng(7, 3).integers(0, 1 << 30, size=4)
        c = trial_rng(7, 4).integers(0, 1 << 30, size=4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_run_trial_reproducible(self):
        cfg = ExperimentConfig(**self.BASE)
        assert run_trial(cfg, 5) == run_trial(cfg, 5)
        assert run_trial(cfg, 5) != run_trial(cfg, 6)

    def test_serial_equals_parallel_bytes(self):
        serial = to_json(run_experiment(ExperimentConfig(**self.BASE, workers=1)))
        parallel = to_json(run_experiment(ExperimentConfig(**self.BASE, workers=3)))
        assert serial == parallel

    def test_rerun_identical(self):
        a = to_json(run_experiment(ExperimentConfig(**self.BASE)))
        b = to_json(run_experiment(ExperimentConfig(**self.BASE)))
        assert a == b

    def test_csv_identical_too(self):
        a = to_csv(run_experiment(ExperimentConfig(**self.BASE, workers=1)))
        b = to_csv(run_experiment(ExperimentConfig(**self.BASE, workers=3)))
        assert a == b


class TestResultsDocument:
    def test_schema_and_pairing(self):
        doc = run_experiment(ExperimentConfig(attack="none", trials=40, n_pairs=4, master_seed=1))
        assert doc["schema"] == "qdialogue-results/1"
        assert doc["comparisons"], "document must pair empirical values with references"
        for comp in doc["comparisons"]:
            assert set(comp) >= {"name", "empirical", "reference", "source", "tolerance", "within"}
        assert isinstance(doc["all_within_tolerance"], bool)

    def test_verbose_embeds_trials(self):
        doc = run_experiment(
            ExperimentConfig(attack="none", trials=10, n_pairs=4, master_seed=1, verbose=True)
        )
        assert len(doc["trial_reports"]) == 10

    def test_attack_free_reference_values(self):
        doc = run_experiment(ExperimentConfig(attack="none", trials=60, n_pairs=4, master_seed=2))
        comps = {c["name"]: c for c in doc["comparisons"]}
        assert comps["message_fidelity"]["empirical"] == 1.0
        assert comps["per_cm_detection"]["empirical"] == 0.0
        assert doc["analytic"]["per_cm_oracle"] == 0.0
        assert doc["all_within_tolerance"]

    def test_oracle_vs_claim_discrepancy_is_reported(self):
        doc = run_experiment(
            ExperimentConfig(attack="disturb-measure", trials=60, n_pairs=4, master_seed=3)
        )
        assert doc["analytic"]["per_cm_oracle"] == 0.5
        assert doc["analytic"]["per_cm_claimed"] == 0.75


class TestSweep:
    def test_sweep_over_beta2(self):
        cfg = ExperimentConfig(
            attack="entangle-measure", beta2=0.1, c=0.5, n_pairs=4, trials=60, master_seed=5
        )
        doc = sweep(cfg, "beta2", [0.1, 0.25, 0.5])
        assert doc["schema"] == "qdialogue-sweep/1"
        assert [row["value"] for row in doc["curve"]] == [0.1, 0.25, 0.5]
        oracle = [row["per_cm_oracle"] for row in doc["curve"]]
        assert oracle == pytest.approx([0.1, 0.25, 0.5], abs=1e-12)
        bounds = [row["entropy_bound_bits"] for row in doc["curve"]]
        assert bounds == sorted(bounds)

    def test_sweep_over_n_pairs_monotone_reference(self):
        cfg = ExperimentConfig(
            attack="entangle-measure", beta2=0.25, c=0.5, n_pairs=4, trials=40, master_seed=6
        )
        doc = sweep(cfg, "n_pairs", [1, 2, 4, 8])
        refs = [row["analytic_exact"] for row in doc["curve"]]
        assert refs == sorted(refs)

    def test_empty_values_rejected(self):
        with pytest.raises(ConfigError, match="at least one"):
            sweep(ExperimentConfig(), "c", [])

    def test_unknown_parameter_rejected(self):
        with pytest.raises(ConfigError, match="sweep over"):
            sweep(ExperimentConfig(), "trials", [1, 2])


class TestCsv:
    def test_columns_and_rows(self):
        doc = run_experiment(ExperimentConfig(attack="none", trials=30, n_pairs=4, master_seed=7))
        text = to_csv(doc)
        lines = text.strip().split("\n")
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + len(doc["comparisons"])


class TestSelfTest:
    def test_passes_on_healthy_build(self):
        import time

        t0 = time.perf_counter()
        ok, lines = selftest()
        elapsed = time.perf_counter() - t0
        assert ok
        assert all(line.startswith("PASS") for line in lines)
        assert elapsed < 60.0

    def test_corrupted_phase_table_is_caught_and_named(self, monkeypatch):
        cell = (BitPair(0, 1), BitPair(1, 0))
        patched = dict(quantum._COMPOSE_PHASE)
        patched[cell] = -1j  # wrong sign
        monkeypatch.setattr(quantum, "_COMPOSE_PHASE", patched)
        ok, lines = selftest()
        assert not ok
        failing = [line for line in lines if line.startswith("FAIL")]
        assert any("second=(0, 1) first=(1, 0)" in line for line in failing)


class TestFormulasText:
    def test_tables_present(self):
        text = formulas_text()
        assert "cumulative detection" in text
        assert "entropy bound" in text
        assert "DISAGREES with claim" in text  # the documented discrepancies
        assert "intercept-resend-blind" in text


class TestCli:
    def test_run_writes_json_and_exits_zero(self, tmp_path):
        out = tmp_path / "doc.json"
        code = main(
            [
                "run",
                "--attack",
                "none",
                "--trials",
                "30",
                "--n-pairs",
                "4",
                "--seed",
                "3",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["schema"] == "qdialogue-results/1"

    def test_stdout_when_no_out(self, capsys):
        code = main(["run", "--attack", "none", "--trials", "10", "--n-pairs", "2", "--seed", "1"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["config"]["trials"] == 10

    def test_csv_format(self, tmp_path):
        out = tmp_path / "doc.csv"
        code = main(
            ["run", "--attack", "none", "--trials", "10", "--n-pairs", "2", "--seed", "1",
             "--format", "csv", "--out", str(out)]
        )
        assert code == 0
        assert out.read_text().startswith(",".join(CSV_COLUMNS[:3]))

    def test_config_error_exit_2(self, capsys):
        assert main(["run", "--attack", "nosuch"]) == 2
        assert "unknown attack" in capsys.readouterr().err

    def test_c_out_of_range_exit_2(self):
        assert main(["run", "--c", "1.5"]) == 2

    def test_unwritable_output_exit_2(self, capsys):
        code = main(
            ["run", "--attack", "none", "--trials", "2", "--n-pairs", "2",
             "--out", "/proc/definitely/not/writable.json"]
        )
        assert code == 2
        assert "cannot write" in capsys.readouterr().err

    def test_statistical_failure_exit_1(self, monkeypatch):
        # negative control: force a wrong analytic reference
        import qdialogue.harness as harness

        monkeypatch.setattr(harness, "per_cm_detection_oracle", lambda s: 0.9)
        code = main(["run", "--attack", "none", "--trials", "20", "--n-pairs", "4", "--seed", "2"])
        assert code == 1

    def test_selftest_subcommand(self, capsys):
        assert main(["selftest"]) == 0
        assert "selftest: PASS" in capsys.readouterr().out

    def test_formulas_subcommand(self, capsys):
        assert main(["formulas"]) == 0
        assert "oracle" in capsys.readouterr().out

    def test_sweep_subcommand(self, tmp_path):
        out = tmp_path / "sweep.json"
        code = main(
            ["sweep", "--attack", "entangle-measure", "--beta2", "0.25", "--trials", "20",
             "--n-pairs", "2", "--seed", "4", "--vary", "beta2", "--values", "0.1,0.5",
             "--out", str(out)]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["vary"] == "beta2"
        assert len(doc["points"]) == 2

    def test_bad_sweep_values_exit_2(self):
        assert main(
            ["sweep", "--vary", "c", "--values", "0.1,zebra", "--trials", "5", "--n-pairs", "2"]
        ) == 2


class TestConfigFile:
    def test_file_values_and_flag_overrides(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(
            "# experiment\n"
            "attack = entangle-measure\n"
            "beta2 = 0.25\n"
            "c = 0.5\n"
            "n-pairs = 4\n"
            "seed = 12\n"
            "trials = 8\n"
        )
        values = load_config_file(str(cfg))
        assert values["attack"] == "entangle-measure"
        assert values["n_pairs"] == 4
        assert values["master_seed"] == 12

        out = tmp_path / "doc.json"
        code = main(["run", "--config", str(cfg), "--trials", "5", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["config"]["trials"] == 5  # flag wins
        assert doc["config"]["beta2"] == 0.25

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("qubits = 9\n")
        with pytest.raises(ConfigError, match="unknown key"):
            load_config_file(str(cfg))

    def test_bad_value_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("trials = many\n")
        with pytest.raises(ConfigError, match="bad value"):
            load_config_file(str(cfg))

    def test_missing_file_is_config_error(self):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config_file("/no/such/file.cfg")


class TestOutputDirEnv:
    def test_relative_out_lands_in_env_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("QDIALOGUE_OUT_DIR", str(tmp_path))
        code = main(
            ["run", "--attack", "none", "--trials", "5", "--n-pairs", "2", "--seed", "1",
             "--out", "nested/doc.json"]
        )
        assert code == 0
        assert (tmp_path / "nested" / "doc.json").exists()

    def test_absolute_out_ignores_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("QDIALOGUE_OUT_DIR", "/nonexistent")
        out = tmp_path / "doc.json"
        code = main(
            ["run", "--attack", "none", "--trials", "5", "--n-pairs", "2", "--seed", "1",
             "--out", str(out)]
        )
        assert code == 0
        assert out.exists()
