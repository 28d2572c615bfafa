# models/report.py
from typing import List, Optional

from pydantic import BaseModel, Field


class LossReport(BaseModel):
    """
    Valores das quatro perdas de um passo e o total ponderado.

    Attributes:
        rec (float): Erro de reconstrução nos patches mascarados
        max_mi (float): InfoNCE entre máscaras ortogonais
        min_mi (float): Cota CLUB
        approx (float): NLL da rede de aproximação (nunca entra no total)
        gate_open (bool): Se as perdas de MI entraram no total
        total (float): λ1·rec (+ λ2·max_mi + λ3·min_mi com o gate aberto)
    """

    rec: float
    max_mi: float
    min_mi: float
    approx: float
    gate_open: bool
    total: float


class MetricsRow(BaseModel):
    """Linha por época do CSV de métricas."""

    epoch: int
    step: int
    lr: float
    rec: float
    max_mi: float
    min_mi: float
    approx: float
    gate_open: bool
    probe_acc: Optional[float] = None


class ProbeResult(BaseModel):
    """Acurácia top-1 do probe linear no conjunto separado."""

    accuracy: float = Field(..., ge=0, le=1)
    train_size: int
    test_size: int
    num_classes: int
    final_loss: float


class SandwichRow(BaseModel):
    """Uma linha do relatório InfoNCE ≤ MI verdadeira ≤ CLUB."""

    rho: float
    dim: int
    true_mi: float
    club: float
    infonce: float
    pass_club: bool
    pass_infonce: bool
    club_reliable: bool = True


class SandwichReport(BaseModel):
    rows: List[SandwichRow]
    failures: List[str] = []

    @property
    def passed(self) -> bool:
        return not self.failures


class SweepRow(BaseModel):
    """Resultado de uma razão de máscara na varredura de ablação."""

    ratio: float
    strategy: str
    num_masks: int
    epochs: int
    probe_acc: float


class CheckpointInfo(BaseModel):
    """Metadados de um checkpoint salvo, sem os tensores."""

    name: str
    epoch: int
    global_step: int
    gate_open: bool
    gate_epoch: Optional[int] = None
    size_bytes: int
