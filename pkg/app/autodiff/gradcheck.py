# autodiff/gradcheck.py
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from app.autodiff.tensor import Tensor, backward, precision


class GradCheckReport(BaseModel):
    """
    Resultado de uma verificação por diferenças centrais.

    Attributes:
        max_rel_error (float): Maior |a−n| / max(|a|, |n|, floor)
        max_abs_error (float): Maior |a−n|
        checked (int): Coordenadas verificadas
        worst (str): Onde o maior erro relativo ocorreu
        passed (bool): max_rel_error < tol
    """

    max_rel_error: float
    max_abs_error: float
    checked: int
    worst: str = ""
    passed: bool


def _rel(analytic: float, numeric: float, floor: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    f: Callable[[Tensor], Tensor],
    point: np.ndarray,
    h: float = 1e-5,
    tol: float = 1e-3,
    floor: float = 1e-6,
) -> GradCheckReport:
    """
    Compara o gradiente do backward com (f(x+h) − f(x−h)) / 2h em cada coordenada.

    A avaliação roda em float64.

    Args:
        f: Função escalar de um tensor
        point (np.ndarray): Ponto de avaliação
        h (float): Passo da diferença central
        tol (float): Erro relativo máximo aceito
        floor (float): Piso do denominador do erro relativo
    """
    with precision(np.float64):
        base = np.array(point, dtype=np.float64)
        x = Tensor(base, requires_grad=True)
        backward(f(x))
        analytic = x.grad if x.grad is not None else np.zeros_like(base)
        worst_rel, worst_abs, worst_at = 0.0, 0.0, ""
        for i in range(base.size):
            plus, minus = base.copy(), base.copy()
            plus.flat[i] += h
            minus.flat[i] -= h
            numeric = (f(Tensor(plus)).item() - f(Tensor(minus)).item()) / (2 * h)
            rel = _rel(float(analytic.flat[i]), numeric, floor)
            worst_abs = max(worst_abs, abs(float(analytic.flat[i]) - numeric))
            if rel > worst_rel:
                worst_rel, worst_at = rel, f"[{i}]"
    return GradCheckReport(
        max_rel_error=worst_rel,
        max_abs_error=worst_abs,
        checked=base.size,
        worst=worst_at,
        passed=worst_rel < tol,
    )


def grad_check_params(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tuple[str, Tensor]],
    h: float = 1e-5,
    tol: float = 1e-3,
    floor: float = 1e-6,
    coords_per_param: Optional[int] = 4,
    seed: int = 0,
) -> GradCheckReport:
    """
    Verifica gradientes de parâmetros de modelo perturbando-os no lugar.

    Para ser significativo, o modelo deve ter sido criado sob
    `precision(np.float64)`. Cada parâmetro tem `coords_per_param`
    coordenadas sorteadas (None verifica todas).
    """
    rng = np.random.default_rng(seed)
    for _, p in params:
        p.grad = None
    backward(loss_fn())
    worst_rel, worst_abs, worst_at, checked = 0.0, 0.0, "", 0
    for name, p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        if coords_per_param is None or coords_per_param >= p.size:
            coords = np.arange(p.size)
        else:
            coords = rng.choice(p.size, size=coords_per_param, replace=False)
        for i in coords:
            original = p.data.flat[i]
            p.data.flat[i] = original + h
            up = loss_fn().item()
            p.data.flat[i] = original - h
            down = loss_fn().item()
            p.data.flat[i] = original
            numeric = (up - down) / (2 * h)
            a = float(analytic.flat[i])
            rel = _rel(a, numeric, floor)
            worst_abs = max(worst_abs, abs(a - numeric))
            checked += 1
            if rel > worst_rel:
                worst_rel, worst_at = rel, f"{name}[{int(i)}]"
    return GradCheckReport(
        max_rel_error=worst_rel,
        max_abs_error=worst_abs,
        checked=checked,
        worst=worst_at,
        passed=worst_rel < tol,
    )
