"""End-to-end tests for the command-line surface.

Every test drives main() in-process on a small synthetic dataset
(4 bars, 100 lattice steps) so the full parse-enrich-solve-write path
runs in well under a minute.
"""

from __future__ import annotations

import hashlib
import json

import pytest

from chainopt.cli import RunConfig, load_config_file, main, make_config
from chainopt.errors import InvalidConfig


def run_cli(capsys, *args: str) -> tuple[int, str, str]:
    code = main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    code = main(
        ["synth", "--out", str(root), "--seed", "11", "--set", "bars=4", "--set", "steps=100"]
    )
    assert code == 0
    return root


def chain_args(data_dir, out_dir, **extra: object) -> list[str]:
    args = [
        "--out",
        str(out_dir),
        "--set",
        f"chain_path={data_dir / 'chain.csv'}",
        "--set",
        f"spot_path={data_dir / 'spot.csv'}",
        "--set",
        "steps=100",
    ]
    for key, value in extra.items():
        args.extend(["--set", f"{key}={value}"])
    return args


def read_rows(path) -> tuple[list[str], list[list[str]]]:
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def sha256(path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestConfigResolution:
    def test_defaults_without_any_input(self):
        config = make_config({}, {})
        assert config == RunConfig()

    def test_file_values_parsed_with_comments(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# pricing\nsteps = 250\nrate = 0.03\nabsolute = true\n\nk = 5\n"
        )
        config = make_config(load_config_file(path), {})
        assert config.steps == 250
        assert config.rate == 0.03
        assert config.absolute is True
        assert config.k == 5

    def test_overrides_win_over_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("steps = 250\n")
        config = make_config(load_config_file(path), {"steps": "99"})
        assert config.steps == 99

    def test_unknown_key_rejected_by_name(self):
        with pytest.raises(InvalidConfig, match="frobnicate"):
            make_config({"frobnicate": "1"}, {})

    def test_unparsable_value_names_the_field(self):
        with pytest.raises(InvalidConfig, match="steps"):
            make_config({"steps": "abc"}, {})

    def test_malformed_line_reports_location(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("steps 250\n")
        with pytest.raises(InvalidConfig, match=":1"):
            load_config_file(path)

    def test_none_token_clears_optional_field(self):
        config = make_config({"target_return": "none"}, {})
        assert config.target_return is None

    def test_out_of_range_value_rejected(self):
        with pytest.raises(InvalidConfig, match="k must be"):
            make_config({"k": "0"}, {})

    def test_bool_tokens(self):
        assert make_config({"absolute": "yes"}, {}).absolute is True
        assert make_config({"absolute": "0"}, {}).absolute is False
        with pytest.raises(InvalidConfig, match="absolute"):
            make_config({"absolute": "maybe"}, {})


class TestExitCodes:
    def test_empty_chain_file_reports_no_rows(self, capsys, tmp_path, data_dir):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        code, _, err = run_cli(
            capsys,
            "iv",
            "--out",
            str(tmp_path / "out"),
            "--set",
            f"chain_path={empty}",
            "--set",
            f"spot_path={data_dir / 'spot.csv'}",
        )
        assert code == 1
        assert "no rows" in err

    def test_header_only_chain_reports_no_rows(self, capsys, tmp_path, data_dir):
        header_only = tmp_path / "header.csv"
        header_only.write_text((data_dir / "chain.csv").read_text().splitlines()[0] + "\n")
        code, _, err = run_cli(
            capsys,
            "iv",
            "--out",
            str(tmp_path / "out"),
            "--set",
            f"chain_path={header_only}",
            "--set",
            f"spot_path={data_dir / 'spot.csv'}",
        )
        assert code == 1
        assert "no rows" in err

    def test_missing_column_is_named(self, capsys, tmp_path, data_dir):
        truncated = tmp_path / "narrow.csv"
        lines = (data_dir / "chain.csv").read_text().splitlines()
        truncated.write_text("\n".join(",".join(line.split(",")[:25]) for line in lines) + "\n")
        code, _, err = run_cli(
            capsys,
            "iv",
            "--out",
            str(tmp_path / "out"),
            "--set",
            f"chain_path={truncated}",
            "--set",
            f"spot_path={data_dir / 'spot.csv'}",
        )
        assert code == 1
        assert "Contract Type" in err

    def test_missing_input_file_names_the_field(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys,
            "iv",
            "--out",
            str(tmp_path / "out"),
            "--set",
            "chain_path=/nonexistent/chain.csv",
            "--set",
            "spot_path=/nonexistent/spot.csv",
        )
        assert code == 1
        assert "chain_path" in err

    def test_unknown_backtest_strategy_rejected(self, capsys, tmp_path, data_dir):
        code, _, err = run_cli(
            capsys,
            "backtest",
            *chain_args(data_dir, tmp_path / "out", strategy="kelly"),
        )
        assert code == 1
        assert "strategy" in err

    def test_unknown_config_key_via_set(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys, "selfcheck", "--set", "nonsense=1", "--out", str(tmp_path)
        )
        assert code == 1
        assert "nonsense" in err

    def test_set_without_equals_rejected(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "selfcheck", "--set", "steps100")
        assert code == 1
        assert "KEY=VALUE" in err


class TestSynth:
    def test_writes_chain_spot_and_truth(self, data_dir):
        header, rows = read_rows(data_dir / "chain.csv")
        assert header[0] == "#RIC"
        assert len(rows) == 54 * 4
        _, truth = read_rows(data_dir / "truth.csv")
        assert len(truth) == 54
        assert all(0.2 <= float(sigma) <= 0.5 for _, sigma in truth)

    def test_same_seed_reproduces_bytes(self, capsys, tmp_path):
        for name in ("a", "b"):
            code, _, _ = run_cli(
                capsys,
                "synth",
                "--out",
                str(tmp_path / name),
                "--seed",
                "3",
                "--set",
                "bars=2",
                "--set",
                "steps=50",
            )
            assert code == 0
        assert sha256(tmp_path / "a" / "chain.csv") == sha256(tmp_path / "b" / "chain.csv")
        assert sha256(tmp_path / "a" / "spot.csv") == sha256(tmp_path / "b" / "spot.csv")

    def test_seed_changes_the_chain(self, capsys, tmp_path):
        for name, seed in (("a", "1"), ("b", "2")):
            run_cli(
                capsys,
                "synth",
                "--out",
                str(tmp_path / name),
                "--seed",
                seed,
                "--set",
                "bars=2",
                "--set",
                "steps=50",
            )
        assert sha256(tmp_path / "a" / "chain.csv") != sha256(tmp_path / "b" / "chain.csv")


class TestIvCommand:
    def test_round_trip_recovers_truth(self, capsys, tmp_path, data_dir):
        code, _, _ = run_cli(capsys, "iv", *chain_args(data_dir, tmp_path))
        assert code == 0
        header, rows = read_rows(tmp_path / "iv.csv")
        assert header == [
            "ric",
            "timestamp",
            "market_mid",
            "iv",
            "iterations",
            "method",
            "converged",
        ]
        assert len(rows) == 54 * 4
        assert all(row[6] == "true" for row in rows)
        truth = dict(read_rows(data_dir / "truth.csv")[1])
        for row in rows:
            assert abs(float(row[3]) - float(truth[row[0]])) <= 1e-4

    def test_inputs_not_mutated(self, capsys, tmp_path, data_dir):
        before = sha256(data_dir / "chain.csv"), sha256(data_dir / "spot.csv")
        run_cli(capsys, "iv", *chain_args(data_dir, tmp_path))
        after = sha256(data_dir / "chain.csv"), sha256(data_dir / "spot.csv")
        assert before == after

    def test_writes_exclusion_report(self, capsys, tmp_path, data_dir):
        run_cli(capsys, "iv", *chain_args(data_dir, tmp_path))
        header, _ = read_rows(tmp_path / "exclusions.csv")
        assert header == ["ric", "reason", "detail"]


class TestGreeksCommand:
    def test_schema_and_ranges(self, capsys, tmp_path, data_dir):
        code, _, _ = run_cli(capsys, "greeks", *chain_args(data_dir, tmp_path))
        assert code == 0
        header, rows = read_rows(tmp_path / "greeks.csv")
        assert header == [
            "ric",
            "timestamp",
            "iv",
            "delta",
            "gamma",
            "theta",
            "vega",
            "rho",
            "region",
        ]
        assert len(rows) == 54 * 4
        for row in rows:
            assert row[8] in ("stopping", "continuation")
            assert -1.0 <= float(row[3]) <= 1.0


class TestSelectCommand:
    def test_two_k_rows_per_bar(self, capsys, tmp_path, data_dir):
        code, _, _ = run_cli(capsys, "select", *chain_args(data_dir, tmp_path, k=2))
        assert code == 0
        header, rows = read_rows(tmp_path / "select.csv")
        assert header == ["timestamp", "ric", "score", "side", "rank"]
        assert len(rows) == 4 * 4
        stamps = {row[0] for row in rows}
        assert len(stamps) == 4
        for stamp in stamps:
            sides = [row[3] for row in rows if row[0] == stamp]
            assert sides.count("top") == 2
            assert sides.count("bottom") == 2

    def test_top_scores_dominate_bottom(self, capsys, tmp_path, data_dir):
        run_cli(capsys, "select", *chain_args(data_dir, tmp_path, k=2))
        _, rows = read_rows(tmp_path / "select.csv")
        stamp = rows[0][0]
        top = [float(r[2]) for r in rows if r[0] == stamp and r[3] == "top"]
        bottom = [float(r[2]) for r in rows if r[0] == stamp and r[3] == "bottom"]
        assert min(top) >= max(bottom)


class TestOptimizeCommand:
    def test_box_weights_feasible(self, capsys, tmp_path, data_dir):
        code, _, _ = run_cli(
            capsys,
            "optimize",
            *chain_args(data_dir, tmp_path, k=2, strategy="box", upper="0.6"),
        )
        assert code == 0
        header, rows = read_rows(tmp_path / "optimize.csv")
        assert header == ["timestamp", "ric", "weight", "strategy", "objective_value"]
        weights = [float(row[2]) for row in rows]
        assert sum(weights) == pytest.approx(1.0, abs=1e-8)
        assert all(0.01 - 1e-9 <= w <= 0.6 + 1e-9 for w in weights)
        assert all(row[3] == "box" for row in rows)

    def test_long_short_not_an_optimizer(self, capsys, tmp_path, data_dir):
        code, _, err = run_cli(
            capsys,
            "optimize",
            *chain_args(data_dir, tmp_path, strategy="long_short"),
        )
        assert code == 1
        assert "strategy" in err


class TestBacktestCommand:
    def test_long_short_weights_are_plus_minus_one_over_2k(
        self, capsys, tmp_path, data_dir
    ):
        code, _, _ = run_cli(
            capsys,
            "backtest",
            *chain_args(data_dir, tmp_path, strategy="long_short", k=3),
        )
        assert code == 0
        _, rows = read_rows(tmp_path / "weights.csv")
        assert rows
        assert all(abs(float(row[2])) == pytest.approx(1.0 / 6.0) for row in rows)

    def test_equity_starts_at_one(self, capsys, tmp_path, data_dir):
        run_cli(capsys, "backtest", *chain_args(data_dir, tmp_path, strategy="long_short"))
        _, rows = read_rows(tmp_path / "equity.csv")
        assert float(rows[0][1]) == 1.0
        assert len(rows) == 4

    def test_rerun_is_byte_identical_modulo_timestamp(self, capsys, tmp_path, data_dir):
        args = chain_args(data_dir, tmp_path, strategy="long_short", k=2)
        snapshots = []
        for _ in range(2):
            code, _, _ = run_cli(capsys, "backtest", *args)
            assert code == 0
            report = json.loads((tmp_path / "report.json").read_text())
            report.pop("generated_at")
            snapshots.append(
                (
                    sha256(tmp_path / "equity.csv"),
                    sha256(tmp_path / "weights.csv"),
                    report,
                )
            )
        assert snapshots[0] == snapshots[1]

    def test_dynamic_two_asset_universe_infeasible(self, capsys, tmp_path, data_dir):
        code, _, err = run_cli(
            capsys,
            "backtest",
            *chain_args(data_dir, tmp_path, strategy="dynamic", k=1),
        )
        assert code == 1
        assert "cannot sum to 1" in err

    def test_dynamic_with_relaxed_bounds_runs(self, capsys, tmp_path, data_dir):
        code, _, _ = run_cli(
            capsys,
            "backtest",
            *chain_args(
                data_dir,
                tmp_path,
                strategy="dynamic",
                k=1,
                upper="0.9",
                estimation_window=2,
            ),
        )
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["config"]["estimation_window"] == 2

    def test_report_echoes_resolved_config(self, capsys, tmp_path, data_dir):
        run_cli(
            capsys,
            "backtest",
            *chain_args(data_dir, tmp_path, strategy="long_short", k=2),
        )
        config = json.loads((tmp_path / "report.json").read_text())["config"]
        assert config["strategy"] == "long_short"
        assert config["k"] == 2
        assert config["steps"] == 100
        assert config["seed"] == 0
        assert config["chain_path"].endswith("chain.csv")

    def test_shrinkage_static_strategy_runs(self, capsys, tmp_path, data_dir):
        code, _, _ = run_cli(
            capsys,
            "backtest",
            *chain_args(data_dir, tmp_path, strategy="shrinkage", k=2),
        )
        assert code == 0
        _, rows = read_rows(tmp_path / "weights.csv")
        weights = [float(row[2]) for row in rows]
        assert sum(weights) == pytest.approx(1.0, abs=1e-8)


class TestSelfcheck:
    def test_all_checks_pass_at_default_steps(self, capsys):
        code, out, _ = run_cli(capsys, "selfcheck")
        assert code == 0
        passes = [line for line in out.splitlines() if line.endswith(": PASS")]
        assert len(passes) >= 10
        assert "FAIL" not in out

    def test_debug_steps_five_fails_convergence(self, capsys):
        code, out, _ = run_cli(capsys, "selfcheck", "--debug-steps", "5")
        assert code != 0
        assert "lattice_converges_to_closed_form: FAIL" in out

    def test_checks_are_named(self, capsys):
        _, out, _ = run_cli(capsys, "selfcheck")
        assert "iv_round_trip" in out
        assert "put_call_parity" in out
        assert "frontier_monotone" in out
