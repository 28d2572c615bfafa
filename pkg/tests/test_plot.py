import pytest

from app.errors import ContractError, FormatError
from app.io.metrics import write_metrics, write_sweep
from app.io.plot import THRESHOLD_GID, plot_metrics, plot_metrics_csv, plot_sweep_csv, render_metric_svg
from app.models.report import MetricsRow, SweepRow


def _rows(with_probe=False):
    return [
        MetricsRow(
            epoch=e,
            step=e * 2,
            lr=0.001,
            rec=1.0 / e,
            max_mi=2.0,
            min_mi=0.1,
            approx=1.0,
            gate_open=e > 1,
            probe_acc=0.5 if with_probe else None,
        )
        for e in (1, 2, 3)
    ]


def test_rec_plot_has_threshold_line():
    svg = render_metric_svg(_rows(), "rec", eps_l=0.4)
    assert svg.lstrip().startswith("<?xml")
    assert THRESHOLD_GID in svg


def test_other_metrics_have_no_threshold_line():
    assert THRESHOLD_GID not in render_metric_svg(_rows(), "max_mi")


def test_rendering_is_byte_stable():
    assert render_metric_svg(_rows(), "rec") == render_metric_svg(_rows(), "rec")


def test_render_errors():
    with pytest.raises(ContractError):
        render_metric_svg(_rows(), "accuracy")
    with pytest.raises(ContractError):
        render_metric_svg(_rows(), "probe_acc")
    with pytest.raises(FormatError):
        render_metric_svg([], "rec")


def test_plot_metrics_skips_missing_probe(tmp_path):
    written = plot_metrics(_rows(), tmp_path / "plots")
    assert sorted(p.name for p in written) == ["approx.svg", "lr.svg", "max_mi.svg", "min_mi.svg", "rec.svg"]
    written = plot_metrics(_rows(with_probe=True), tmp_path / "plots")
    assert "probe_acc.svg" in {p.name for p in written}


def test_plot_from_csv(tmp_path):
    csv_path = write_metrics(tmp_path / "metrics.csv", _rows())
    assert len(plot_metrics_csv(csv_path, tmp_path / "plots")) == 5
    empty = write_metrics(tmp_path / "empty.csv", [])
    with pytest.raises(FormatError):
        plot_metrics_csv(empty, tmp_path / "plots")


def test_sweep_chart(tmp_path):
    rows = [
        SweepRow(ratio=r, strategy=s, num_masks=4, epochs=2, probe_acc=0.5)
        for s in ("complete", "fixed4")
        for r in (0.5, 0.75)
    ]
    out = plot_sweep_csv(write_sweep(tmp_path / "sweep.csv", rows), tmp_path / "plots" / "sweep.svg")
    assert out.read_text().lstrip().startswith("<?xml")
