import datetime as dt
import json

import numpy as np
import pytest
from click.testing import CliRunner

from reofair import TrafficSource, records_from_arrays, sample_records, write_logs
from reofair.cli import main
from reofair.synthetic import SimulationConfig

D, R = TrafficSource.DEFAULT, TrafficSource.RANDOM


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def pivot_logs(tmp_path_factory):
    """Unfair pivot-table encoding: Δ_REO = 1/3, utility ratio 0.5."""
    root = tmp_path_factory.mktemp("pivot")
    day = dt.date(2024, 4, 18)
    default_rows = [
        *(_record(D, True, 1, day) for _ in range(100)),
        *(_record(D, True, 2, day) for _ in range(100)),
    ]
    random_rows = [
        *(_record(R, True, 1, day) for _ in range(200)),
        *(_record(R, True, 2, day) for _ in range(100)),
        *(_record(R, False, 1, day) for _ in range(99_900)),
    ]
    default_path = root / "default.csv"
    random_path = root / "random.csv"
    write_logs(default_path, default_rows)
    write_logs(random_path, random_rows)
    return str(default_path), str(random_path)


def _record(source, label, group, day):
    from reofair import TrafficRecord

    return TrafficRecord(source=source, label=label, group=group, date=day)


class TestEstimate:
    def test_pivot_table_report(self, runner, pivot_logs):
        default_path, random_path = pivot_logs
        result = runner.invoke(
            main, ["estimate", "--default-log", default_path, "--random-log", random_path]
        )
        assert result.exit_code == 0
        envelope = json.loads(result.output)
        report = envelope["report"]
        assert report["delta_reo"]["estimate"] == pytest.approx(1 / 3, abs=1e-12)
        utilities = [u["estimate"] for u in report["utilities"]]
        assert utilities[0] / utilities[1] == 0.5
        assert report["std_divisor"] == "K"
        # The 2/3 figure is recorded as an erratum in the report notes.
        assert any("2/3" in note and "erratum" in note for note in envelope["notes"])

    def test_byte_identical_reruns(self, runner, pivot_logs):
        default_path, random_path = pivot_logs
        args = ["estimate", "--default-log", default_path, "--random-log", random_path]
        first = runner.invoke(main, args)
        second = runner.invoke(main, args)
        assert first.output == second.output

    def test_out_file_and_csv(self, runner, pivot_logs, tmp_path):
        default_path, random_path = pivot_logs
        out = tmp_path / "report.csv"
        result = runner.invoke(
            main,
            [
                "estimate", "--default-log", default_path, "--random-log", random_path,
                "--format", "csv", "--out", str(out),
            ],
        )
        assert result.exit_code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "metric,group,estimate,se,ci_low,ci_high"
        assert any(line.startswith("delta_reo") for line in lines)

    def test_verbose_includes_diagnostics(self, runner, pivot_logs):
        default_path, random_path = pivot_logs
        result = runner.invoke(
            main,
            ["estimate", "--default-log", default_path, "--random-log", random_path, "--verbose"],
        )
        diagnostics = json.loads(result.output)["report"]["diagnostics"]
        assert "sigma" in diagnostics and "gamma" in diagnostics and "xi" in diagnostics

    def test_bootstrap_methods(self, runner, pivot_logs):
        default_path, random_path = pivot_logs
        for method in ("bootstrap", "bca"):
            result = runner.invoke(
                main,
                [
                    "estimate", "--default-log", default_path, "--random-log", random_path,
                    "--method", method, "--bootstrap-size", "30", "--seed", "5",
                ],
            )
            assert result.exit_code == 0
            report = json.loads(result.output)["report"]
            assert report["method"] == method
            assert report["delta_reo"]["ci_low"] is not None

    def test_thread_count_does_not_change_bytes(self, runner, pivot_logs):
        default_path, random_path = pivot_logs
        args = [
            "estimate", "--default-log", default_path, "--random-log", random_path,
            "--method", "bootstrap", "--bootstrap-size", "30", "--seed", "5",
        ]
        serial = runner.invoke(main, args, env={"REOFAIR_THREADS": "1"})
        pooled = runner.invoke(main, args, env={"REOFAIR_THREADS": "4"})
        assert serial.output == pooled.output

    def test_degenerate_random_log_is_a_data_error(self, runner, tmp_path, pivot_logs):
        default_path, _ = pivot_logs
        # Randomized traffic with no group-2 positives.
        bad = tmp_path / "bad_random.csv"
        day = dt.date(2024, 4, 18)
        write_logs(bad, [_record(R, True, 1, day) for _ in range(50)])
        result = runner.invoke(
            main, ["estimate", "--default-log", default_path, "--random-log", str(bad)]
        )
        assert result.exit_code == 1

    def test_bad_k_is_a_config_error(self, runner, pivot_logs):
        default_path, random_path = pivot_logs
        result = runner.invoke(
            main,
            ["estimate", "--default-log", default_path, "--random-log", random_path, "--k", "0"],
        )
        assert result.exit_code == 2

    def test_missing_file_is_a_usage_error(self, runner):
        result = runner.invoke(
            main, ["estimate", "--default-log", "nope.csv", "--random-log", "nope.csv"]
        )
        assert result.exit_code == 2


@pytest.fixture(scope="module")
def monitor_logs(tmp_path_factory):
    """14 daily logs, fair except an injected spike on day 8."""
    root = tmp_path_factory.mktemp("monitor")
    quiet = SimulationConfig(k=2, p=(0.01, 0.05), q=(0.05, 0.25))   # equal utilities
    spike = SimulationConfig(k=2, p=(0.01, 0.05), q=(0.1, 0.25))    # penalty 1/3
    start = dt.date(2024, 4, 18)
    default_rows = []
    children = np.random.SeedSequence(123).spawn(15)
    for day_index in range(14):
        cfg = spike if day_index == 7 else quiet
        rec, _ = sample_records(cfg, 20_000, 1, np.random.default_rng(children[day_index]))
        default_rows.extend(
            records_from_arrays(rec, D, start + dt.timedelta(days=day_index))
        )
    _, rand = sample_records(quiet, 1, 30_000, np.random.default_rng(children[14]))
    random_rows = records_from_arrays(rand, R, start)
    default_path = root / "default.csv"
    random_path = root / "random.csv"
    write_logs(default_path, default_rows)
    write_logs(random_path, random_rows)
    return str(default_path), str(random_path), start


class TestMonitor:
    def test_threshold_flags_only_on_spike_day(self, runner, monitor_logs):
        default_path, random_path, start = monitor_logs
        result = runner.invoke(
            main, ["monitor", "--default-log", default_path, "--random-log", random_path]
        )
        assert result.exit_code == 0
        days = json.loads(result.output)["days"]
        assert len(days) == 14
        flagged = [row["date"] for row in days if row["exceeds_threshold"]]
        assert flagged == [(start + dt.timedelta(days=7)).isoformat()]
        # Shared randomized traffic backs every day.
        assert {row["n_rand"] for row in days} == {30_000}
        for row in days:
            assert row["ci_low"] <= row["delta_reo"] <= row["ci_high"]

    def test_csv_rows(self, runner, monitor_logs):
        default_path, random_path, _ = monitor_logs
        result = runner.invoke(
            main,
            ["monitor", "--default-log", default_path, "--random-log", random_path,
             "--format", "csv"],
        )
        lines = result.output.splitlines()
        assert lines[0].startswith("date,n_rec,n_rand,delta_reo")
        assert len(lines) == 15


class TestAbtest:
    def test_identical_arms_not_significant(self, runner, pivot_logs):
        default_path, random_path = pivot_logs
        result = runner.invoke(
            main,
            [
                "abtest", "--control-log", default_path, "--treatment-log", default_path,
                "--random-log", random_path,
            ],
        )
        assert result.exit_code == 0
        report = json.loads(result.output)["report"]
        assert report["d_reo"]["estimate"] == 0.0
        assert report["d_reo"]["significant"] is False
        assert report["method"] == "delta"

    @pytest.mark.parametrize("method", ["partition", "bootstrap", "bca"])
    def test_other_methods_run_and_are_deterministic(self, runner, pivot_logs, method):
        default_path, random_path = pivot_logs
        args = [
            "abtest", "--control-log", default_path, "--treatment-log", default_path,
            "--random-log", random_path, "--method", method,
            "--folds", "4", "--bootstrap-size", "30", "--seed", "3",
        ]
        first = runner.invoke(main, args)
        assert first.exit_code == 0, first.output
        second = runner.invoke(main, args)
        assert first.output == second.output
        report = json.loads(first.output)["report"]
        assert report["method"] == method
        assert report["d_reo"]["ci_low"] <= report["d_reo"]["ci_high"]


class TestSimulate:
    def test_writes_round_trippable_logs(self, runner, tmp_path):
        out_default = tmp_path / "sim_default.csv"
        out_random = tmp_path / "sim_random.csv"
        result = runner.invoke(
            main,
            [
                "simulate", "--setting", "1", "--n-default", "5000", "--n-random", "4000",
                "--days", "2", "--seed", "9",
                "--out-default", str(out_default), "--out-random", str(out_random),
            ],
        )
        assert result.exit_code == 0
        envelope = json.loads(result.output)
        assert envelope["files"][0]["rows"] == 10_000
        assert envelope["files"][1]["rows"] == 4000
        estimate = runner.invoke(
            main, ["estimate", "--default-log", str(out_default), "--random-log", str(out_random)]
        )
        assert estimate.exit_code == 0
        value = json.loads(estimate.output)["report"]["delta_reo"]["estimate"]
        assert 0.15 <= value <= 0.5  # near the true 1/3 at this size

    def test_seeded_files_are_byte_identical(self, runner, tmp_path):
        paths = []
        for tag in ("a", "b"):
            out_default = tmp_path / f"{tag}_default.csv"
            out_random = tmp_path / f"{tag}_random.csv"
            result = runner.invoke(
                main,
                [
                    "simulate", "--setting", "1", "--n-default", "2000", "--n-random", "2000",
                    "--seed", "4",
                    "--out-default", str(out_default), "--out-random", str(out_random),
                ],
            )
            assert result.exit_code == 0
            paths.append((out_default.read_bytes(), out_random.read_bytes()))
        assert paths[0] == paths[1]

    def test_boost_changes_group_shares(self, runner, tmp_path):
        common = [
            "simulate", "--setting", "1", "--n-default", "20000", "--n-random", "100",
            "--seed", "6",
        ]
        plain_default = tmp_path / "plain.csv"
        boosted_default = tmp_path / "boosted.csv"
        runner.invoke(
            main,
            common + ["--out-default", str(plain_default), "--out-random", str(tmp_path / "r1.csv")],
        )
        result = runner.invoke(
            main,
            common
            + [
                "--boost", "1:2,2:1",
                "--out-default", str(boosted_default),
                "--out-random", str(tmp_path / "r2.csv"),
            ],
        )
        assert result.exit_code == 0
        # Boosting halves the file by default and overrepresents group 1
        # (young_adult=1 in the published schema).
        plain_lines = plain_default.read_text().splitlines()[1:]
        boosted_lines = boosted_default.read_text().splitlines()[1:]
        assert len(boosted_lines) == len(plain_lines) // 2
        share_plain = sum(",1,default" in line for line in plain_lines) / len(plain_lines)
        share_boosted = sum(",1,default" in line for line in boosted_lines) / len(boosted_lines)
        assert share_boosted > share_plain

    def test_requires_setting_or_rates(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["simulate", "--n-default", "10", "--n-random", "10",
             "--out-default", str(tmp_path / "d.csv"), "--out-random", str(tmp_path / "r.csv")],
        )
        assert result.exit_code == 2


class TestStudyCommands:
    def test_mse_study_csv(self, runner):
        result = runner.invoke(
            main,
            ["mse-study", "--setting", "1", "--sizes", "1000,10000", "--reps", "10",
             "--seed", "2", "--format", "csv"],
        )
        assert result.exit_code == 0
        lines = result.output.splitlines()
        assert lines[0] == "n,mse,mse_se,failures"
        assert len(lines) == 3

    def test_mse_study_json_has_slope_and_truth(self, runner):
        result = runner.invoke(
            main,
            ["mse-study", "--setting", "1", "--sizes", "1000,10000", "--reps", "10", "--seed", "2"],
        )
        envelope = json.loads(result.output)
        assert envelope["ground_truth"] == pytest.approx(1 / 3, abs=1e-12)
        assert envelope["slope"] < 0

    def test_unestimable_sizes_serialize_as_null(self, runner):
        # Setting 3 at n=100 fails every replicate; the JSON must stay valid
        # with nulls, and the failures column carries the reason.
        result = runner.invoke(
            main,
            ["mse-study", "--setting", "3", "--sizes", "100", "--reps", "5", "--seed", "0"],
        )
        assert result.exit_code == 0
        envelope = json.loads(result.output)  # would raise on bare NaN
        row = envelope["rows"][0]
        assert row["mse"] is None
        assert row["failures"] == 1.0
        csv_result = runner.invoke(
            main,
            ["mse-study", "--setting", "3", "--sizes", "100", "--reps", "5", "--seed", "0",
             "--format", "csv"],
        )
        assert csv_result.output.splitlines()[1] == "100,,,1.0"

    def test_plan_csv(self, runner):
        result = runner.invoke(
            main,
            ["plan", "--k", "2", "--epsilon", "0.1", "--delta", "0.05", "--format", "csv"],
        )
        lines = result.output.splitlines()
        assert lines[0] == "n,n_rec,n_rand,guarantee,conservative"
        assert lines[1].startswith("1476,1476,1476,uniform,true")

    def test_demo_identifiability(self, runner):
        result = runner.invoke(
            main, ["demo-identifiability", "--k", "2", "--m0", "100", "--positives", "100,100"]
        )
        assert result.exit_code == 0
        envelope = json.loads(result.output)
        assert envelope["fair"]["penalty_computed"] <= 1e-12
        assert envelope["unfair"]["penalty_predicted"] == pytest.approx(1 / 3, abs=1e-15)
        assert envelope["unfair"]["penalty_computed"] == pytest.approx(1 / 3, abs=1e-12)
        assert envelope["unfair"]["utilities_predicted"] == [0.5, 1.0]
        assert any("erratum" in note for note in envelope["notes"])

    def test_demo_identifiability_trivial_subset_is_data_error(self, runner):
        result = runner.invoke(
            main, ["demo-identifiability", "--k", "2", "--m0", "5", "--positives", "0,0"]
        )
        assert result.exit_code == 1
