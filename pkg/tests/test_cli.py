import json

import pytest

from app import cli
from app.config import dump_config
from app.models.report import SandwichReport, SandwichRow


@pytest.fixture
def config_file(tmp_path, config):
    path = tmp_path / "run.txt"
    path.write_text(dump_config(config), encoding="utf-8")
    return str(path)


@pytest.fixture
def run_dir(tmp_path):
    return tmp_path / "run"


def _last_err_line(capsys) -> str:
    # logs também vão para stderr
    return capsys.readouterr().err.strip().splitlines()[-1]


def test_gen_data_writes_dataset(config_file, tmp_path, capsys):
    out = tmp_path / "data.mimds"
    assert cli.main(["gen-data", "--config", config_file, "--out", str(out)]) == cli.EXIT_OK
    assert out.exists()
    assert json.loads(capsys.readouterr().out) == {"path": str(out), "images": 8, "classes": 2}


def test_pretrain_probe_and_plot(config_file, run_dir, capsys):
    assert cli.main(["pretrain", "--config", config_file]) == cli.EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["epochs"] == 2
    assert (run_dir / "metrics.csv").exists()
    assert (run_dir / "checkpoints" / "epoch-0002.ckpt").exists()

    assert cli.main(["probe", "--config", config_file]) == cli.EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert 0.0 <= result["accuracy"] <= 1.0

    assert cli.main(["plot", "--config", config_file]) == cli.EXIT_OK
    assert (run_dir / "plots" / "rec.svg").exists()


def test_probe_without_checkpoint_is_domain_error(config_file, capsys):
    assert cli.main(["probe", "--config", config_file]) == cli.EXIT_DOMAIN
    assert _last_err_line(capsys).startswith("mimae: ContractError:")


def test_probe_random_init(config_file, capsys):
    assert cli.main(["probe", "--config", config_file, "--random-init"]) == cli.EXIT_OK
    assert "accuracy" in capsys.readouterr().out


def test_bad_config_key_is_one_line_error(config_file, capsys):
    assert cli.main(["pretrain", "--config", config_file, "--set", "bogus=1"]) == cli.EXIT_DOMAIN
    line = _last_err_line(capsys)
    assert line.startswith("mimae: ConfigError:")
    assert "bogus" in line


def test_missing_config_file_is_io_error(tmp_path, capsys):
    assert cli.main(["pretrain", "--config", str(tmp_path / "nope.txt")]) == cli.EXIT_IO
    assert _last_err_line(capsys).startswith("mimae: FileNotFoundError:")


def test_mi_bench_strict_exit_code(config_file, run_dir, monkeypatch, capsys):
    report = SandwichReport(
        rows=[SandwichRow(rho=0.5, dim=1, true_mi=0.14, club=0.0, infonce=0.1, pass_club=False, pass_infonce=True)],
        failures=["rho=0.5: CLUB abaixo da MI verdadeira"],
    )
    monkeypatch.setattr(cli, "sandwich_report", lambda cfg: report)
    assert cli.main(["mi-bench", "--config", config_file]) == cli.EXIT_OK
    assert cli.main(["mi-bench", "--config", config_file, "--strict"]) == cli.EXIT_STRICT
    assert "CLUB abaixo" in capsys.readouterr().err
    assert (run_dir / "mi_report.csv").exists()


def test_ratio_sweep_rejects_bad_ratios(config_file, capsys):
    assert cli.main(["ratio-sweep", "--config", config_file, "--ratios", "half"]) == cli.EXIT_DOMAIN
    assert "--ratios" in capsys.readouterr().err
