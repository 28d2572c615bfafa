# io/plot.py
import io
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

from app.errors import ContractError, FormatError  # noqa: E402
from app.io.metrics import read_metrics, read_sweep  # noqa: E402
from app.models.report import MetricsRow, SweepRow  # noqa: E402

logger = logging.getLogger(__name__)

matplotlib.rcParams["svg.hashsalt"] = "mimae"

PathLike = Union[str, Path]

PLOT_METRICS = ("rec", "max_mi", "min_mi", "approx", "lr", "probe_acc")
THRESHOLD_GID = "eps-threshold"

_TITULOS = {
    "rec": "Perda de reconstrução",
    "max_mi": "InfoNCE entre máscaras (max MI)",
    "min_mi": "Cota CLUB (min MI)",
    "approx": "NLL da rede de aproximação",
    "lr": "Taxa de aprendizado",
    "probe_acc": "Acurácia do probe linear",
}


def _svg(fig: Figure) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def render_metric_svg(rows: Sequence[MetricsRow], metric: str, eps_l: float = 0.5) -> str:
    """
    Gráfico de linha de uma métrica por época.

    O gráfico de rec leva a linha horizontal do limiar ε_l (gid `eps-threshold`).

    Raises:
        ContractError: Métrica desconhecida ou sem valores
        FormatError: Sem linhas de dados
    """
    if metric not in PLOT_METRICS:
        raise ContractError(f"métrica desconhecida: {metric}")
    if not rows:
        raise FormatError("CSV de métricas sem linhas de dados", row=1)
    points = [(r.epoch, getattr(r, metric)) for r in rows if getattr(r, metric) is not None]
    if not points:
        raise ContractError(f"nenhum valor de {metric} no CSV")
    epochs, values = zip(*points)

    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot(1, 1, 1)
    ax.plot(epochs, values, marker="o", markersize=3, label=metric)
    if metric == "rec":
        ax.axhline(eps_l, linestyle="--", color="tab:red", label=f"ε_l = {eps_l}", gid=THRESHOLD_GID)
    ax.set_xlabel("época")
    ax.set_ylabel(metric)
    ax.set_title(_TITULOS[metric])
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _svg(fig)


def plot_metrics(rows: Sequence[MetricsRow], out_dir: PathLike, eps_l: float = 0.5) -> List[Path]:
    """Um SVG por métrica presente; probe_acc só se alguma época tiver probe."""
    if not rows:
        raise FormatError("CSV de métricas sem linhas de dados", row=1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in PLOT_METRICS:
        if metric == "probe_acc" and all(r.probe_acc is None for r in rows):
            continue
        path = out / f"{metric}.svg"
        path.write_text(render_metric_svg(rows, metric, eps_l), encoding="utf-8")
        written.append(path)
    logger.info("%d gráficos gravados em %s", len(written), out)
    return written


def plot_metrics_csv(csv_path: PathLike, out_dir: PathLike, eps_l: float = 0.5) -> List[Path]:
    rows = read_metrics(csv_path)
    if not rows:
        raise FormatError("CSV de métricas sem linhas de dados", path=str(csv_path), row=1)
    return plot_metrics(rows, out_dir, eps_l)


def render_sweep_svg(rows: Sequence[SweepRow]) -> str:
    """Acurácia do probe por razão de máscara, uma curva por estratégia."""
    if not rows:
        raise FormatError("CSV da varredura sem linhas de dados", row=1)
    series: Dict[str, List[SweepRow]] = {}
    for row in rows:
        series.setdefault(row.strategy, []).append(row)
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot(1, 1, 1)
    for strategy, items in series.items():
        items = sorted(items, key=lambda r: r.ratio)
        ax.plot([r.ratio for r in items], [r.probe_acc for r in items], marker="o", label=strategy)
    ax.set_xlabel("razão de máscara")
    ax.set_ylabel("acurácia do probe")
    ax.set_title("Ablação da razão de máscara")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _svg(fig)


def plot_sweep_csv(csv_path: PathLike, out_path: PathLike) -> Path:
    rows = read_sweep(csv_path)
    if not rows:
        raise FormatError("CSV da varredura sem linhas de dados", path=str(csv_path), row=1)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_sweep_svg(rows), encoding="utf-8")
    return out
