import pytest

from app.errors import FormatError
from app.io.metrics import (
    METRICS_COLUMNS,
    read_metrics,
    read_mi_report,
    read_sweep,
    write_metrics,
    write_mi_report,
    write_sweep,
)
from app.models.report import MetricsRow, SandwichReport, SandwichRow, SweepRow


def _row(epoch, probe=None):
    return MetricsRow(
        epoch=epoch,
        step=epoch * 2,
        lr=0.1 / 3,
        rec=0.7,
        max_mi=2.5,
        min_mi=-0.01,
        approx=1.25,
        gate_open=epoch > 1,
        probe_acc=probe,
    )


def test_metrics_roundtrip_is_exact(tmp_path):
    rows = [_row(1), _row(2, probe=0.625)]
    path = write_metrics(tmp_path / "metrics.csv", rows)
    assert read_metrics(path) == rows
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(METRICS_COLUMNS)
    assert lines[1].endswith(",false,")
    assert lines[2].endswith(",true,0.625")


def test_empty_metrics_keeps_header(tmp_path):
    path = write_metrics(tmp_path / "metrics.csv", [])
    assert path.read_text() == ",".join(METRICS_COLUMNS) + "\n"
    assert read_metrics(path) == []


def test_bad_header(tmp_path):
    path = tmp_path / "metrics.csv"
    path.write_text("epoch,step\n1,2\n")
    with pytest.raises(FormatError) as info:
        read_metrics(path)
    assert info.value.row == 0


def test_bad_column_count_and_value(tmp_path):
    path = write_metrics(tmp_path / "metrics.csv", [_row(1)])
    text = path.read_text()
    path.write_text(text + "2,4\n")
    with pytest.raises(FormatError) as info:
        read_metrics(path)
    assert info.value.row == 2
    path.write_text(text.replace("0.7", "abc"))
    with pytest.raises(FormatError) as info:
        read_metrics(path)
    assert info.value.row == 1 and "rec" in str(info.value)


def test_mi_report_and_sweep_roundtrip(tmp_path):
    report = SandwichReport(
        rows=[
            SandwichRow(rho=0.5, dim=1, true_mi=0.14, club=0.3, infonce=0.1, pass_club=True, pass_infonce=True),
            SandwichRow(
                rho=0.9, dim=1, true_mi=0.83, club=0.2, infonce=0.5, pass_club=False, pass_infonce=True, club_reliable=False
            ),
        ],
        failures=["rho=0.9"],
    )
    assert read_mi_report(write_mi_report(tmp_path / "mi.csv", report)) == report.rows
    sweep = [SweepRow(ratio=0.75, strategy="complete", num_masks=4, epochs=2, probe_acc=0.5)]
    assert read_sweep(write_sweep(tmp_path / "sweep.csv", sweep)) == sweep
