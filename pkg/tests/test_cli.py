"""CLI subcommands: files written, exit codes, reproducibility."""

import json
from pathlib import Path

import yaml

from screenopt.cli import main
from conftest import INSTANCE_DIR

TWO_TYPE = str(INSTANCE_DIR / "two_type.yaml")
SINGLE = str(INSTANCE_DIR / "single_agent.yaml")
BAD = str(INSTANCE_DIR / "bad_increasing_price.yaml")

ARTIFACTS = ("report.json", "menu.csv", "allocation.csv", "trace.csv")


def _read_artifacts(out_dir: Path) -> dict[str, bytes]:
    return {name: (out_dir / name).read_bytes() for name in ARTIFACTS}


class TestSolveCommand:
    def test_writes_all_outputs(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["solve", TWO_TYPE, "--seed", "7", "--menu-size", "2",
                     "--restarts", "2", "--out", str(out)])
        assert code == 0
        for name in ARTIFACTS + ("manifest.json",):
            assert (out / name).exists(), name
        report = json.loads((out / "report.json").read_text())
        assert report["seed"] == 7
        assert report["best_profit"] >= 0.0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "solve"
        assert manifest["request"]["config"]["seed"] == 7
        assert sorted(manifest["outputs"]) == sorted(ARTIFACTS)
        assert "profit=" in capsys.readouterr().out

    def test_repeated_runs_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        args = ["solve", TWO_TYPE, "--seed", "7", "--menu-size", "2", "--restarts", "2"]
        assert main(args + ["--out", str(out_a)]) == 0
        assert main(args + ["--out", str(out_b)]) == 0
        assert _read_artifacts(out_a) == _read_artifacts(out_b)

    def test_worker_count_does_not_change_artifacts(self, tmp_path):
        out_a, out_b = tmp_path / "w1", tmp_path / "w8"
        args = ["solve", TWO_TYPE, "--seed", "7", "--menu-size", "2", "--restarts", "4"]
        assert main(args + ["--workers", "1", "--out", str(out_a)]) == 0
        assert main(args + ["--workers", "8", "--out", str(out_b)]) == 0
        assert _read_artifacts(out_a) == _read_artifacts(out_b)

    def test_menu_size_zero_reports_null_profit(self, tmp_path):
        out = tmp_path / "null"
        assert main(["solve", TWO_TYPE, "--menu-size", "0", "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["best_profit"] == 0.0
        assert len(report["menu"]) == 1

    def test_refusal_exits_one(self, tmp_path, capsys):
        code = main(["solve", BAD, "--out", str(tmp_path / "x")])
        assert code == 1
        assert "not strictly decreasing" in capsys.readouterr().err

    def test_config_file_overrides_and_first_best(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(yaml.safe_dump({"menu_size": 1, "restarts": 3}))
        out = tmp_path / "cfg-run"
        assert main(["solve", SINGLE, "--seed", "5", "--config", str(cfg),
                     "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["request"]["config"]["menu_size"] == 1
        report = json.loads((out / "report.json").read_text())
        assert report["best_profit"] >= 0.499  # analytic optimum is 0.5


class TestValidateCommand:
    def test_pass_exits_zero(self, tmp_path, capsys):
        out = tmp_path / "v"
        code = main(["validate", str(INSTANCE_DIR / "coercive_quadratic.yaml"),
                     "--samples", "400", "--out", str(out)])
        assert code == 0
        body = json.loads((out / "assumptions.json").read_text())
        assert body["all_pass"] is True
        assert "A7: pass" in capsys.readouterr().out

    def test_assumption_failure_exits_one(self, tmp_path, capsys):
        code = main(["validate", BAD, "--samples", "200", "--out", str(tmp_path / "v")])
        assert code == 1
        assert "A2" in capsys.readouterr().out

    def test_schema_error_exits_two(self, tmp_path, capsys):
        broken = tmp_path / "broken.yaml"
        data = yaml.safe_load(Path(TWO_TYPE).read_text())
        del data["prices"]
        broken.write_text(yaml.safe_dump(data))
        code = main(["validate", str(broken), "--out", str(tmp_path / "v")])
        assert code == 2
        assert "prices" in capsys.readouterr().err

    def test_missing_file_exits_two(self, tmp_path):
        assert main(["validate", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "v")]) == 2

    def test_report_bytes_reproducible(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        args = ["validate", str(INSTANCE_DIR / "two_type.yaml"), "--samples", "300", "--seed", "9"]
        assert main(args + ["--out", str(out_a)]) == 0
        assert main(args + ["--out", str(out_b)]) == 0
        assert (out_a / "assumptions.json").read_bytes() == (out_b / "assumptions.json").read_bytes()


class TestOracleCommand:
    def test_single_agent_optimum(self, tmp_path):
        cfg = tmp_path / "grids.yaml"
        cfg.write_text(yaml.safe_dump({
            "product_grid": [{"min": 0.0, "max": 2.0, "count": 9}],
            "price_grid": {"min": 0.0, "max": 2.0, "count": 21},
            "max_menu_size": 1,
        }))
        out = tmp_path / "oracle"
        assert main(["oracle", SINGLE, "--config", str(cfg), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["best_profit"] == 0.5

    def test_budget_exceeded_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "grids.yaml"
        cfg.write_text(yaml.safe_dump({
            "product_grid": [{"min": 0.0, "max": 2.0, "count": 101}],
            "price_grid": {"min": 0.0, "max": 2.0, "count": 101},
            "max_menu_size": 3,
        }))
        code = main(["oracle", TWO_TYPE, "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "guard" in capsys.readouterr().err


class TestCheckCommand:
    def test_solver_menu_passes(self, tmp_path, capsys):
        out = tmp_path / "solve"
        assert main(["solve", TWO_TYPE, "--seed", "7", "--menu-size", "1",
                     "--restarts", "2", "--out", str(out)]) == 0
        code = main(["check", TWO_TYPE, str(out / "menu.csv"), "--out", str(tmp_path / "chk")])
        assert code == 0
        assert "participation: pass" in capsys.readouterr().out

    def test_tampered_null_fails_participation(self, tmp_path, capsys):
        menu = tmp_path / "menu.csv"
        menu.write_text("y_1,price,is_null\n0,3,true\n1.8,1.62,false\n")
        code = main(["check", TWO_TYPE, str(menu), "--out", str(tmp_path / "chk")])
        assert code == 1
        body = json.loads((tmp_path / "chk" / "check.json").read_text())
        rows = {row["name"]: row["status"] for row in body["checks"]}
        assert rows["participation"] == "fail"

    def test_null_only_menu_passes(self, tmp_path):
        menu = tmp_path / "menu.csv"
        menu.write_text("y_1,price,is_null\n0,0,true\n")
        assert main(["check", TWO_TYPE, str(menu), "--out", str(tmp_path / "chk")]) == 0

    def test_unreadable_menu_exits_two(self, tmp_path):
        assert main(["check", TWO_TYPE, str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "chk")]) == 2


def test_log_env_var_accepted(tmp_path, monkeypatch):
    monkeypatch.setenv("SCREENOPT_LOG", "debug")
    out = tmp_path / "log-run"
    assert main(["solve", SINGLE, "--menu-size", "0", "--out", str(out)]) == 0
