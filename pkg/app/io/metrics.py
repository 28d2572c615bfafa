# io/metrics.py
import csv
import logging
from pathlib import Path
from typing import List, Sequence, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from app.errors import FormatError
from app.models.report import MetricsRow, SandwichReport, SandwichRow, SweepRow

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Row = TypeVar("Row", bound=BaseModel)

METRICS_COLUMNS = ["epoch", "step", "lr", "rec", "max_mi", "min_mi", "approx", "gate_open", "probe_acc"]
MI_COLUMNS = ["rho", "dim", "true_mi", "club", "infonce", "pass_club", "pass_infonce", "club_reliable"]
SWEEP_COLUMNS = ["ratio", "strategy", "num_masks", "epochs", "probe_acc"]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows(path: PathLike, columns: Sequence[str], rows: Sequence[BaseModel]) -> Path:
    """CSV com cabeçalho sempre presente; floats em repr para leitura exata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(getattr(row, c)) for c in columns])
    return path


def read_rows(path: PathLike, columns: Sequence[str], model: Type[Row]) -> List[Row]:
    """
    Raises:
        FormatError: Cabeçalho diferente, número de colunas errado ou valor inválido (com a linha)
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(columns):
            raise FormatError(f"cabeçalho inesperado {header}", path=str(path), row=0)
        rows: List[Row] = []
        for number, cells in enumerate(reader, start=1):
            if len(cells) != len(columns):
                raise FormatError(
                    f"{len(cells)} colunas, esperado {len(columns)}",
                    path=str(path),
                    row=number,
                )
            data = {c: (v if v != "" else None) for c, v in zip(columns, cells)}
            try:
                rows.append(model.model_validate(data))
            except ValidationError as exc:
                erro = exc.errors()[0]
                raise FormatError(
                    f"coluna {erro['loc'][0]}: {erro['msg']}",
                    path=str(path),
                    row=number,
                ) from exc
    return rows


def write_metrics(path: PathLike, rows: Sequence[MetricsRow]) -> Path:
    return write_rows(path, METRICS_COLUMNS, rows)


def read_metrics(path: PathLike) -> List[MetricsRow]:
    return read_rows(path, METRICS_COLUMNS, MetricsRow)


def write_mi_report(path: PathLike, report: SandwichReport) -> Path:
    return write_rows(path, MI_COLUMNS, report.rows)


def read_mi_report(path: PathLike) -> List[SandwichRow]:
    return read_rows(path, MI_COLUMNS, SandwichRow)


def write_sweep(path: PathLike, rows: Sequence[SweepRow]) -> Path:
    return write_rows(path, SWEEP_COLUMNS, rows)


def read_sweep(path: PathLike) -> List[SweepRow]:
    return read_rows(path, SWEEP_COLUMNS, SweepRow)
