# storage.py
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from app.config import dump_config, get_output_dir
from app.io.checkpoint import Checkpoint, read_scalars, save_checkpoint
from app.io.metrics import read_metrics, read_mi_report, read_sweep, write_metrics, write_mi_report, write_sweep
from app.models.config import RunConfig
from app.models.report import CheckpointInfo, MetricsRow, SandwichReport, SandwichRow, SweepRow

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.txt"
METRICS_FILE = "metrics.csv"
MI_FILE = "mi_report.csv"
SWEEP_FILE = "ratio_sweep.csv"


class RunStorage:
    """
    Layout de um diretório de execução.

        config.txt, metrics.csv, mi_report.csv, ratio_sweep.csv,
        checkpoints/epoch-XXXX.ckpt, plots/, diagnostics/step-N.json
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    @property
    def checkpoints_dir(self) -> Path:
        return self.root / "checkpoints"

    @property
    def plots_dir(self) -> Path:
        return self.root / "plots"

    @property
    def diagnostics_dir(self) -> Path:
        return self.root / "diagnostics"

    @property
    def config_path(self) -> Path:
        return self.root / CONFIG_FILE

    @property
    def metrics_path(self) -> Path:
        return self.root / METRICS_FILE

    @property
    def mi_path(self) -> Path:
        return self.root / MI_FILE

    @property
    def sweep_path(self) -> Path:
        return self.root / SWEEP_FILE

    def init(self) -> "RunStorage":
        for d in (self.root, self.checkpoints_dir, self.plots_dir):
            d.mkdir(parents=True, exist_ok=True)
        return self

    # configuração ------------------------------------------------------------------

    def write_config(self, config: RunConfig) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        self.config_path.write_text(dump_config(config), encoding="utf-8")
        return self.config_path

    def read_config_text(self) -> Optional[str]:
        if not self.config_path.exists():
            return None
        return self.config_path.read_text(encoding="utf-8")

    # métricas --------------------------------------------------------------------

    def has_metrics(self) -> bool:
        return self.metrics_path.exists()

    def write_metrics(self, rows: Sequence[MetricsRow]) -> Path:
        return write_metrics(self.metrics_path, rows)

    def read_metrics(self) -> List[MetricsRow]:
        return read_metrics(self.metrics_path)

    def write_mi_report(self, report: SandwichReport) -> Path:
        return write_mi_report(self.mi_path, report)

    def read_mi_report(self) -> List[SandwichRow]:
        return read_mi_report(self.mi_path)

    def write_sweep(self, rows: Sequence[SweepRow]) -> Path:
        return write_sweep(self.sweep_path, rows)

    def read_sweep(self) -> List[SweepRow]:
        return read_sweep(self.sweep_path)

    # checkpoints -----------------------------------------------------------------

    def checkpoint_path(self, epoch: int) -> Path:
        return self.checkpoints_dir / f"epoch-{epoch:04d}.ckpt"

    def save_checkpoint(self, epoch: int, ckpt: Checkpoint) -> Path:
        return save_checkpoint(self.checkpoint_path(epoch), ckpt)

    def checkpoint_names(self) -> List[str]:
        if not self.checkpoints_dir.exists():
            return []
        return sorted(p.name for p in self.checkpoints_dir.glob("epoch-*.ckpt"))

    def find_checkpoint(self, name: str) -> Optional[Path]:
        """Caminho do checkpoint pelo nome (com ou sem `.ckpt`), só dentro do diretório."""
        if not name.endswith(".ckpt"):
            name += ".ckpt"
        return self.checkpoints_dir / name if name in self.checkpoint_names() else None

    def latest_checkpoint(self) -> Optional[Path]:
        names = self.checkpoint_names()
        return self.checkpoints_dir / names[-1] if names else None

    def checkpoint_info(self, path: Path) -> CheckpointInfo:
        scalars = read_scalars(path)
        return CheckpointInfo(
            name=path.name,
            epoch=scalars["epoch"],
            global_step=scalars["global_step"],
            gate_open=scalars["gate_open"],
            gate_epoch=scalars.get("gate_epoch"),
            size_bytes=path.stat().st_size,
        )

    def list_checkpoints(self) -> List[CheckpointInfo]:
        return [self.checkpoint_info(self.checkpoints_dir / n) for n in self.checkpoint_names()]

    # diagnóstico -------------------------------------------------------------------

    def write_diagnostics(self, step: int, snapshot: Dict[str, Any]) -> Path:
        self.diagnostics_dir.mkdir(parents=True, exist_ok=True)
        path = self.diagnostics_dir / f"step-{step}.json"
        path.write_text(json.dumps(snapshot, indent=2, sort_keys=True, default=str), encoding="utf-8")
        return path


def get_storage() -> RunStorage:
    """Dependência do FastAPI: o diretório de saída configurado no ambiente."""
    return RunStorage(get_output_dir())

