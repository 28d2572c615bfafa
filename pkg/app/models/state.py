# models/state.py
from dataclasses import dataclass, field
from typing import List, Optional

from app.autodiff.optim import OptimizerState
from app.models.config import OptimizerConfig, TrainConfig


def optimizer_state(cfg: OptimizerConfig) -> OptimizerState:
    return OptimizerState(
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        weight_decay=cfg.weight_decay,
        eps=cfg.adam_eps,
    )


@dataclass
class TrainState:
    """
    Estado mutável do pré-treino (os parâmetros vivem nos módulos).

    A aleatoriedade é derivada de (seed, época, passo), então não há estado
    de gerador a salvar: contadores, gate e momentos bastam para retomar.

    Attributes:
        epoch (int): Épocas completas
        global_step (int): Passos de otimização já dados
        gate_open (bool): Se as perdas de MI entram no total
        gate_epoch (Optional[int]): Época em que o gate abriu
        running_rec (Optional[float]): Média de rec da última época completa
        epoch_rec (List[float]): rec de cada passo da época corrente
        last_lr (float): Taxa usada no último passo do encoder/decoder
    """

    optimizer: OptimizerState
    approx_optimizer: OptimizerState
    epoch: int = 0
    global_step: int = 0
    gate_open: bool = False
    gate_epoch: Optional[int] = None
    running_rec: Optional[float] = None
    epoch_rec: List[float] = field(default_factory=list)
    last_lr: float = 0.0

    @classmethod
    def fresh(cls, train: TrainConfig) -> "TrainState":
        return cls(
            optimizer=optimizer_state(train.optimizer),
            approx_optimizer=optimizer_state(train.approx_optimizer),
            gate_open=train.force_gate_open,
            gate_epoch=0 if train.force_gate_open else None,
        )
