# autodiff/optim.py
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Set, Tuple

import numpy as np

from app.autodiff.tensor import Tensor
from app.errors import ContractError
from app.models.config import LrSchedule

NamedParams = Iterable[Tuple[str, Tensor]]


@dataclass
class OptimizerState:
    """
    Momentos do AdamW por parâmetro.

    Attributes:
        m (Dict[str, np.ndarray]): Primeiro momento
        v (Dict[str, np.ndarray]): Segundo momento
        t (int): Passos já dados
        no_decay (Set[str]): Parâmetros sem weight decay
    """

    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.05
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    no_decay: Set[str] = field(default_factory=set)


def adamw_step(params: NamedParams, state: OptimizerState, lr: float) -> None:
    """
    Um passo de AdamW com weight decay desacoplado.

    O decaimento p ← p − lr·wd·p vem antes da atualização de Adam, que usa
    correção de viés nos dois momentos.

    Raises:
        ContractError: Se algum parâmetro não tiver gradiente
    """
    params = list(params)
    for name, p in params:
        if p.grad is None:
            raise ContractError(f"parâmetro sem gradiente: {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params:
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay and name not in state.no_decay:
            p.data -= lr * state.weight_decay * p.data
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def cosine_lr(step: int, sched: LrSchedule) -> float:
    """
    Aquecimento linear de 0 a base_lr e depois decaimento cosseno até min_lr.

    Raises:
        ContractError: Se step estiver fora de [0, total_steps]
    """
    if not 0 <= step <= sched.total_steps:
        raise ContractError(f"passo {step} fora de [0, {sched.total_steps}]")
    if step < sched.warmup_steps:
        return sched.base_lr * step / sched.warmup_steps
    progress = (step - sched.warmup_steps) / (sched.total_steps - sched.warmup_steps)
    return sched.min_lr + (sched.base_lr - sched.min_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class SgdState:
    momentum: float = 0.9
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)


def sgd_step(params: NamedParams, state: SgdState, lr: float, weight_decay: Optional[float] = 0.0) -> None:
    """SGD com momento (usado pelo probe linear)."""
    for name, p in params:
        if p.grad is None:
            raise ContractError(f"parâmetro sem gradiente: {name}")
        g = p.grad + weight_decay * p.data if weight_decay else p.grad
        if state.momentum:
            buf = state.buffers.get(name)
            buf = g.copy() if buf is None else state.momentum * buf + g
            state.buffers[name] = buf
            g = buf
        p.data -= lr * g
