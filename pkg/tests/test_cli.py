"""CSV ingestion, golden command outputs, and end-to-end determinism."""

import math

import numpy as np
import pytest

import adafilter as af
from adafilter.cli import RunConfig, cmd_curve, cmd_test, ingest_csv, main
from adafilter.errors import (
    DuplicateIdentifier,
    OutOfRangeEntry,
    ParseError,
    ValidationError,
)

TOY_CSV = "id,s1,s2\ng1,0.03,0.04\ng2,0.2,0.9\n"

TINY_SCENARIO = """\
M = 200
n = 2
r = 2
pi0 = 0.9
pi_rn = 0.02
rho = 0.5
block_size = 10
replications = 4
master_seed = 9
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestIngestCsv:
    def test_reads_matrix_with_ids(self, tmp_path):
        mat = ingest_csv(write(tmp_path, "toy.csv", TOY_CSV))
        assert mat.ids == ("g1", "g2")
        # file rows become hypothesis columns
        np.testing.assert_array_equal(mat.values, [[0.03, 0.2], [0.04, 0.9]])

    def test_na_token_means_missing(self, tmp_path):
        mat = ingest_csv(
            write(tmp_path, "m.csv", "id,s1,s2\ng1,NA,0.9\ng2,0.1,0.2\n")
        )
        assert math.isnan(mat.values[0, 0])
        assert mat.n_per_hyp.tolist() == [1, 2]

    def test_out_of_range_cell(self, tmp_path):
        with pytest.raises(OutOfRangeEntry) as exc:
            ingest_csv(write(tmp_path, "m.csv", "id,s1\ng1,0.5\ng2,1.5\n"))
        assert (exc.value.row, exc.value.column) == (2, 1)

    def test_unparseable_cell(self, tmp_path):
        with pytest.raises(ParseError, match="line 2"):
            ingest_csv(write(tmp_path, "m.csv", "id,s1\ng1,abc\n"))

    def test_ragged_row(self, tmp_path):
        with pytest.raises(ParseError, match="line 3"):
            ingest_csv(write(tmp_path, "m.csv", "id,s1,s2\ng1,0.1,0.2\ng2,0.3\n"))

    def test_duplicate_ids(self, tmp_path):
        with pytest.raises(DuplicateIdentifier):
            ingest_csv(write(tmp_path, "m.csv", "id,s1\ng1,0.1\ng1,0.2\n"))

    def test_header_only_or_empty(self, tmp_path):
        with pytest.raises(ParseError, match="no data rows"):
            ingest_csv(write(tmp_path, "m.csv", "id,s1\n"))
        with pytest.raises(ParseError):
            ingest_csv(write(tmp_path, "m.csv", ""))
        with pytest.raises(ParseError, match="header"):
            ingest_csv(write(tmp_path, "m.csv", "id\ng1\n"))

    def test_blank_lines_skipped(self, tmp_path):
        mat = ingest_csv(write(tmp_path, "m.csv", "id,s1,s2\n\ng1,0.1,0.2\n\n"))
        assert mat.n_hypotheses == 1


class TestCmdTest:
    def run(self, tmp_path, csv_text, **kwargs):
        out = tmp_path / "out.tsv"
        config = RunConfig(
            subcommand="test",
            input_path=write(tmp_path, "in.csv", csv_text),
            output_path=str(out),
            **kwargs,
        )
        assert cmd_test(config) == 0
        return out.read_bytes()

    def test_adaptive_bh_golden_output(self, tmp_path, capsys):
        got = self.run(tmp_path, TOY_CSV, method="adafilter-bh", r=2, alpha=0.05)
        assert got == (
            b"id\tfilter_p\tselect_p\trejected\tuntestable\n"
            b"g1\t0.03\t0.04\t1\t0\n"
            b"g2\t0.2\t0.9\t0\t0\n"
        )
        out = capsys.readouterr().out
        assert "gamma0 = 0.05" in out
        assert "rejections = 1" in out
        assert "filtered_m" not in out

    def test_adaptive_bonferroni_reports_filter_count(self, tmp_path, capsys):
        self.run(tmp_path, TOY_CSV, method="adafilter-bonferroni", r=2)
        out = capsys.readouterr().out
        assert "gamma0 = 0.05" in out
        assert "filtered_m = 1" in out
        assert "rejections = 1" in out

    def test_direct_method_adds_pc_column(self, tmp_path, capsys):
        got = self.run(
            tmp_path,
            TOY_CSV,
            method="direct-bonferroni",
            combiner="bonferroni",
            r=2,
        )
        assert got == (
            b"id\tfilter_p\tselect_p\tpc_pvalue\trejected\tuntestable\n"
            b"g1\t0.03\t0.04\t0.04\t0\t0\n"
            b"g2\t0.2\t0.9\t0.9\t0\t0\n"
        )
        assert "gamma0 = 0.025" in capsys.readouterr().out

    def test_reported_pvalues_capped_and_na(self, tmp_path):
        csv_text = "id,s1,s2,s3\ng1,0.9,0.95,0.99\ng2,0.01,0.02,NA\ng3,0.5,NA,NA\n"
        got = self.run(tmp_path, csv_text, method="adafilter-bonferroni", r=2)
        lines = got.decode().splitlines()
        assert lines[1] == "g1\t1\t1\t0\t0"  # raw 1.8/1.9 capped for display
        assert lines[2].startswith("g2\t0.01\t0.02\t")  # n_j=2 means multiplier 1
        assert lines[3] == "g3\tNA\tNA\t0\t1"

    def test_empty_rejection_set_is_success(self, tmp_path, capsys):
        self.run(
            tmp_path,
            "id,s1,s2\ng1,0.5,0.6\n",
            method="adafilter-bh",
            r=2,
        )
        assert "rejections = 0" in capsys.readouterr().out

    def test_combiner_flag_pairing(self, tmp_path):
        out = str(tmp_path / "o.tsv")
        path = write(tmp_path, "in.csv", TOY_CSV)
        with pytest.raises(ValidationError, match="requires --combiner"):
            cmd_test(
                RunConfig(
                    subcommand="test",
                    input_path=path,
                    output_path=out,
                    method="direct-bh",
                    r=2,
                )
            )
        with pytest.raises(ValidationError, match="does not take"):
            cmd_test(
                RunConfig(
                    subcommand="test",
                    input_path=path,
                    output_path=out,
                    method="adafilter-bh",
                    combiner="simes",
                    r=2,
                )
            )

    def test_decisions_match_library(self, tmp_path):
        rng = np.random.default_rng(101)
        lines = ["id,s1,s2,s3"]
        for j in range(40):
            cells = [f"h{j}"] + [
                "NA" if rng.random() < 0.1 else format(rng.random() ** 2, ".6f")
                for _ in range(3)
            ]
            lines.append(",".join(cells))
        csv_text = "\n".join(lines) + "\n"
        got = self.run(tmp_path, csv_text, method="adafilter-bh", r=2, alpha=0.1)

        mat = ingest_csv(write(tmp_path, "again.csv", csv_text))
        res = af.adafilter_bh(af.compute_filter_select(mat, 2), 0.1)
        rows = got.decode().splitlines()[1:]
        for j, row in enumerate(rows):
            cells = row.split("\t")
            assert cells[3] == ("1" if res.rejected[j] else "0")
            assert cells[4] == ("1" if res.untestable[j] else "0")

    def test_round_trip_significant_digits(self, tmp_path):
        value = 1 / 3
        csv_text = f"id,s1,s2\ng1,{value!r},0.9\n"
        got = self.run(tmp_path, csv_text, method="adafilter-bonferroni", r=2)
        reported = got.decode().splitlines()[1].split("\t")[1]
        assert float(reported) == pytest.approx(value, rel=1e-12)


class TestCmdCurve:
    def test_default_grid_with_alpha(self, tmp_path, capsys):
        out = tmp_path / "curve.tsv"
        config = RunConfig(
            subcommand="curve",
            input_path=write(tmp_path, "in.csv", TOY_CSV),
            output_path=str(out),
            r=2,
            alpha=0.05,
        )
        assert cmd_curve(config) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "gamma\tv_hat\tfdp_hat"
        assert lines[1] == "0\t0\t0"
        assert "0.05\t0.05\t0.05" in lines
        assert len(lines) == 1 + 104
        assert "grid_points = 104" in capsys.readouterr().out

    def test_breakpoints_only_without_alpha(self, tmp_path):
        out = tmp_path / "curve.tsv"
        config = RunConfig(
            subcommand="curve",
            input_path=write(tmp_path, "in.csv", TOY_CSV),
            output_path=str(out),
            r=2,
        )
        cmd_curve(config)
        gammas = [row.split("\t")[0] for row in out.read_text().splitlines()[1:]]
        assert gammas == ["0", "0.03", "0.04", "0.2", "0.9"]

    def test_grid_collapses_to_zero_when_everything_exceeds_one(self, tmp_path):
        csv_text = "id,s1,s2,s3\ng1,0.9,0.95,0.99\n"  # F=1.8, S=1.9
        out = tmp_path / "curve.tsv"
        config = RunConfig(
            subcommand="curve",
            input_path=write(tmp_path, "in.csv", csv_text),
            output_path=str(out),
            r=2,
        )
        cmd_curve(config)
        assert out.read_text() == "gamma\tv_hat\tfdp_hat\n0\t0\t0\n"

    def test_null_matrix_curve_crosses_alpha_at_threshold(self, tmp_path):
        # on a simulated complete-null matrix, v_hat at the selected
        # threshold gamma0 = alpha/m stays at or below alpha by construction
        rng = np.random.default_rng(7)
        m = 200
        p = rng.random((2, m))
        lines = ["id,s1,s2"] + [
            f"h{j},{float(p[0, j])!r},{float(p[1, j])!r}" for j in range(m)
        ]
        out = tmp_path / "curve.tsv"
        config = RunConfig(
            subcommand="curve",
            input_path=write(tmp_path, "in.csv", "\n".join(lines) + "\n"),
            output_path=str(out),
            r=2,
            alpha=0.05,
        )
        cmd_curve(config)
        mat = af.validate_matrix(p)
        stats = af.compute_filter_select(mat, 2)
        res = af.adafilter_bonferroni(stats, 0.05)
        rows = [row.split("\t") for row in out.read_text().splitlines()[1:]]
        table = {float(g): float(v) for g, v, _ in rows}
        assert table[res.gamma0] <= 0.05 + 1e-12


class TestMainEntry:
    def test_test_subcommand_end_to_end(self, tmp_path, capsys):
        out = tmp_path / "o.tsv"
        code = main(
            [
                "test",
                "--input",
                write(tmp_path, "in.csv", TOY_CSV),
                "--output",
                str(out),
                "--method",
                "adafilter-bonferroni",
                "--r",
                "2",
            ]
        )
        assert code == 0
        assert out.exists()
        assert "gamma0 = 0.05" in capsys.readouterr().out

    def test_error_exit_with_diagnostic(self, tmp_path, capsys):
        code = main(
            [
                "test",
                "--input",
                write(tmp_path, "in.csv", TOY_CSV),
                "--output",
                str(tmp_path / "o.tsv"),
                "--method",
                "adafilter-bh",
                "--r",
                "5",
            ]
        )
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert "replicability level" in err

    def test_missing_input_file(self, tmp_path, capsys):
        code = main(
            [
                "test",
                "--input",
                str(tmp_path / "nope.csv"),
                "--output",
                str(tmp_path / "o.tsv"),
                "--method",
                "adafilter-bh",
                "--r",
                "2",
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_method_rejected_by_parser(self, tmp_path):
        with pytest.raises(SystemExit):
            main(
                [
                    "test",
                    "--input",
                    "x.csv",
                    "--output",
                    "y.tsv",
                    "--method",
                    "magic",
                    "--r",
                    "2",
                ]
            )

    def test_direct_without_combiner_fails_cleanly(self, tmp_path, capsys):
        code = main(
            [
                "test",
                "--input",
                write(tmp_path, "in.csv", TOY_CSV),
                "--output",
                str(tmp_path / "o.tsv"),
                "--method",
                "direct-bh",
                "--r",
                "2",
            ]
        )
        assert code == 1
        assert "requires --combiner" in capsys.readouterr().err


class TestCmdSimulate:
    def simulate(self, tmp_path, out_name, extra=(), scenario_text=TINY_SCENARIO):
        scenario_path = write(tmp_path, "tiny.scenario", scenario_text)
        out = tmp_path / out_name
        code = main(
            ["simulate", "--scenario", scenario_path, "--output", str(out), *extra]
        )
        assert code == 0
        return out.read_bytes()

    def test_byte_identical_across_runs_and_threads(self, tmp_path, capsys):
        first = self.simulate(tmp_path, "a.tsv")
        second = self.simulate(tmp_path, "b.tsv")
        threaded = self.simulate(tmp_path, "c.tsv", extra=["--threads", "4"])
        assert first == second == threaded
        assert "master_seed = 9" in capsys.readouterr().out

    def test_seed_override_echoed_and_changes_output(self, tmp_path, capsys):
        base = self.simulate(tmp_path, "a.tsv")
        other = self.simulate(tmp_path, "b.tsv", extra=["--seed", "77"])
        assert "master_seed = 77" in capsys.readouterr().out
        assert base != other

    def test_alpha_override_changes_panel_levels(self, tmp_path):
        got = self.simulate(tmp_path, "a.tsv", extra=["--alpha", "0.1"])
        rows = got.decode().splitlines()[1:]
        header = got.decode().splitlines()[0].split("\t")
        alpha_col = header.index("alpha")
        assert {row.split("\t")[alpha_col] for row in rows} == {"0.1"}

    def test_threads_env_fallback(self, tmp_path, monkeypatch):
        base = self.simulate(tmp_path, "a.tsv")
        monkeypatch.setenv("ADAFILTER_THREADS", "3")
        via_env = self.simulate(tmp_path, "b.tsv")
        assert base == via_env

    def test_bad_threads_env(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("ADAFILTER_THREADS", "many")
        scenario_path = write(tmp_path, "tiny.scenario", TINY_SCENARIO)
        code = main(
            ["simulate", "--scenario", scenario_path, "--output", str(tmp_path / "o.tsv")]
        )
        assert code == 1
        assert "ADAFILTER_THREADS" in capsys.readouterr().err

    def test_invalid_scenario_fails_cleanly(self, tmp_path, capsys):
        text = TINY_SCENARIO.replace("replications = 4", "replications = 0")
        scenario_path = write(tmp_path, "bad.scenario", text)
        code = main(
            ["simulate", "--scenario", scenario_path, "--output", str(tmp_path / "o.tsv")]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_row_layout(self, tmp_path, capsys):
        got = self.simulate(
            tmp_path,
            "grid.tsv",
            scenario_text=TINY_SCENARIO.replace("pi0 = 0.9", "pi0 = 0.8, 0.9"),
        )
        lines = got.decode().splitlines()
        assert len(lines) == 1 + 2 * 8  # two scenarios, eight panel procedures
        out = capsys.readouterr().out
        assert "scenarios = 2" in out
        assert "rows = 16" in out
