# objectives.py
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from app.autodiff.functional import concat, l2_normalize, log1p_sumexp
from app.autodiff.tensor import Tensor, as_tensor
from app.errors import ContractError, ShapeError
from app.masking import MASKED
from app.models.config import LossWeights
from app.models.report import LossReport
from app.nn.approx import GaussianPosterior, gaussian_log_prob


@dataclass
class LossParts:
    rec: Tensor
    max_mi: Tensor
    min_mi: Tensor
    approx: Tensor


def normalize_patches(target: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Normaliza cada patch pela própria média e variância (alvo norm-pix)."""
    mean = target.mean(axis=-1, keepdims=True)
    var = target.var(axis=-1, keepdims=True)
    return (target - mean) / np.sqrt(var + eps)


def rec_loss(pred: Tensor, target, mask: np.ndarray) -> Tensor:
    """
    Erro quadrático médio só nos pixels dos patches mascarados.

    Args:
        pred (Tensor): B×P×K
        target: B×P×K
        mask (np.ndarray): P ou B×P, 1 = mascarado

    Raises:
        ContractError: Se nenhum patch estiver mascarado
    """
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"rec_loss: pred {pred.shape} != alvo {target.shape}")
    mask = np.broadcast_to(np.asarray(mask), pred.shape[:2])
    weight = (mask == MASKED).astype(np.float64)[:, :, None]
    count = float(weight.sum()) * pred.shape[2]
    if count == 0:
        raise ContractError("rec_loss sem nenhum patch mascarado")
    diff = pred - target
    return (diff * diff * weight).sum() * (1.0 / count)


def info_nce_pair(latents: Tensor, i: int, k: int, tau: float) -> Tensor:
    """
    −log[exp(sim(ẑ_i, ẑ_k)/τ) / Σ_{c≠i} exp(sim(ẑ_i, ẑ_c)/τ)] com similaridade de cosseno.

    Args:
        latents (Tensor): NB×D, todos os latentes do lote (todas as máscaras × imagens)
        i (int): Âncora
        k (int): Positivo, k ≠ i
        tau (float): Temperatura

    Raises:
        ContractError: k == i, τ ≤ 0 ou vetor de norma zero
    """
    if i == k:
        raise ContractError("info_nce_pair exige k != i")
    if tau <= 0:
        raise ContractError("tau precisa ser positivo")
    nb, d = latents.shape
    zn = l2_normalize(latents)
    sims = (zn @ zn[i].reshape(d, 1)).reshape(nb) * (1.0 / tau)
    negatives = np.ones(nb, dtype=bool)
    negatives[[i, k]] = False
    # relativo ao positivo: log(1 + Σ_{c≠i,k} exp(s_c − s_k))
    return log1p_sumexp(sims - sims[k], axis=0, where=negatives)


def _pair_indices(num_masks: int, batch: int) -> Tuple[np.ndarray, np.ndarray]:
    rows, cols = [], []
    for i in range(num_masks):
        for k in range(num_masks):
            if i == k:
                continue
            for b in range(batch):
                rows.append(i * batch + b)
                cols.append(k * batch + b)
    return np.array(rows), np.array(cols)


def max_mi_loss(latents: Sequence[Tensor], tau: float) -> Tensor:
    """
    (1/N²) Σ_i Σ_{k≠i} InfoNCE(ẑ_i, ẑ_k), média no lote.

    Args:
        latents: N tensores B×D, um por máscara; a linha b de cada um é a mesma imagem

    Raises:
        ContractError: Com menos de duas máscaras
    """
    n = len(latents)
    if n < 2:
        raise ContractError(f"max_mi_loss exige N ≥ 2, recebeu {n}")
    batch = latents[0].shape[0]
    z = l2_normalize(concat(latents, axis=0))
    sims = (z @ z.transpose(1, 0)) * (1.0 / tau)
    rows, cols = _pair_indices(n, batch)
    columns = np.arange(n * batch)[None, :]
    negatives = (columns != rows[:, None]) & (columns != cols[:, None])
    relative = sims[rows] - sims[rows, cols].reshape(len(rows), 1)
    terms = log1p_sumexp(relative, axis=1, where=negatives)
    return terms.sum() * (1.0 / (n * n * batch))


def approx_loss(posteriors: Sequence[GaussianPosterior], latents: Sequence[Tensor]) -> Tensor:
    """
    (1/N) Σ_j média_lote[−log q_θ(ẑ_j|X_j)].

    Os latentes são destacados aqui: esta perda só treina θ.
    """
    n = len(posteriors)
    terms = [(-gaussian_log_prob(post, z.detach())).mean() for post, z in zip(posteriors, latents)]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / n)


def min_mi_loss(posteriors: Sequence[GaussianPosterior], latents: Sequence[Tensor]) -> Tensor:
    """
    Estimador CLUB: (1/N) Σ_j [log q(ẑ_j|X_j) − (1/N) Σ_k log q(ẑ_k|X_j)], média no lote.

    O contraste são as N máscaras da mesma imagem. θ fica constante:
    o gradiente só chega ao encoder via ẑ.
    """
    n = len(posteriors)
    total = None
    for j in range(n):
        post = posteriors[j].detach()
        positive = gaussian_log_prob(post, latents[j])
        contrast = gaussian_log_prob(post, latents[0])
        for k in range(1, n):
            contrast = contrast + gaussian_log_prob(post, latents[k])
        term = (positive - contrast * (1.0 / n)).mean()
        total = term if total is None else total + term
    return total * (1.0 / n)


def combined_loss(parts: LossParts, weights: LossWeights, gate_open: bool) -> Tuple[Tensor, LossReport]:
    """
    Total ponderado com gate.

    Gate fechado: λ1·rec. Gate aberto: λ1·rec + λ2·max_mi + λ3·min_mi.
    approx é reportada mas treina θ em separado.

    Raises:
        ContractError: Se alguma parte não for finita
    """
    values = {name: getattr(parts, name).item() for name in ("rec", "max_mi", "min_mi", "approx")}
    bad = [name for name, v in values.items() if not math.isfinite(v)]
    if bad:
        raise ContractError(f"perdas não finitas: {', '.join(bad)}")
    total = parts.rec * weights.lambda1
    if gate_open:
        total = total + parts.max_mi * weights.lambda2 + parts.min_mi * weights.lambda3
    report = LossReport(gate_open=gate_open, total=total.item(), **values)
    return total, report
