# mi_verify.py
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from app.autodiff.functional import activation, l2_normalize, logsumexp
from app.autodiff.optim import OptimizerState, adamw_step
from app.autodiff.tensor import Tensor
from app.errors import ContractError
from app.models.config import GaussianPairSpec, MiBenchConfig
from app.models.report import SandwichReport, SandwichRow
from app.nn.approx import ApproxNet, gaussian_log_prob
from app.nn.layers import Linear, Module

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-4


def gen_correlated_gaussian(spec: GaussianPairSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    z_d = ρ·x_d + √(1−ρ²)·ruído_d, com x e ruído normais padrão independentes.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (x, z), ambos n×d float64
    """
    rng = np.random.default_rng(spec.seed)
    x = rng.standard_normal((spec.samples, spec.dim))
    noise = rng.standard_normal((spec.samples, spec.dim))
    z = spec.rho * x + math.sqrt(1.0 - spec.rho**2) * noise
    return x, z


def true_gaussian_mi(rho: float, dim: int = 1) -> float:
    """
    −(d/2)·ln(1−ρ²) em nats.

    Raises:
        ContractError: |ρ| ≥ 1
    """
    if abs(rho) >= 1:
        raise ContractError(f"|rho| precisa ser menor que 1, recebido {rho}")
    return -0.5 * dim * math.log(1.0 - rho**2)


def analytic_club_value(rho: float, dim: int = 1) -> float:
    """
    Limite do estimador CLUB quando q é a condicional verdadeira N(ρx, 1−ρ²): d·ρ²/(1−ρ²).

    É maior ou igual à MI verdadeira, com igualdade só em ρ = 0.
    """
    if abs(rho) >= 1:
        raise ContractError(f"|rho| precisa ser menor que 1, recebido {rho}")
    return dim * rho**2 / (1.0 - rho**2)


def club_from_posterior(mu: np.ndarray, sigma: np.ndarray, z: np.ndarray) -> float:
    """
    média_i log q(z_i|x_i) − média_{i,k} log q(z_k|x_i) para q gaussiana diagonal.

    A média sobre todos os pares (i, k) sai em forma fechada pelos dois
    primeiros momentos de z, sem montar a matriz n×n. Os termos de
    normalização se cancelam.
    """
    mu, sigma, z = (np.asarray(a, dtype=np.float64) for a in (mu, sigma, z))
    m1 = z.mean(axis=0)
    m2 = (z * z).mean(axis=0)
    positive = (z - mu) ** 2
    contrast = m2 - 2.0 * mu * m1 + mu * mu
    return float(((contrast - positive) / (2.0 * sigma * sigma)).sum(axis=1).mean())


def nll_plateaued(history: Sequence[float], rel_tol: float = 0.02) -> bool:
    """
    A NLL parou de cair: a média da última janela (10% dos passos) não é
    muito menor que a da janela anterior.
    """
    if len(history) < 20:
        return False
    w = max(10, len(history) // 10)
    if len(history) < 2 * w:
        return False
    last = float(np.mean(history[-w:]))
    previous = float(np.mean(history[-2 * w : -w]))
    return previous - last <= rel_tol * max(1.0, abs(last))


@dataclass
class ClubResult:
    estimate: float
    reliable: bool
    final_nll: float


def club_estimate(x: np.ndarray, z: np.ndarray, cfg: MiBenchConfig, seed: int = 0) -> ClubResult:
    """
    Treina a rede de aproximação (mesma arquitetura do pré-treino, input_dim = d)
    por NLL e avalia o estimador CLUB sobre todas as amostras.

    Returns:
        ClubResult: Estimativa em nats e se a NLL chegou a um platô
    """
    n, d = x.shape
    net = ApproxNet(d, cfg.hidden, z.shape[1], SIGMA_FLOOR, np.random.default_rng([seed, 2]))
    opt = OptimizerState(beta2=0.999, weight_decay=0.0)
    rng = np.random.default_rng([seed, 3])
    batch = min(cfg.batch, n)
    history: List[float] = []
    for _ in range(cfg.steps):
        idx = rng.choice(n, size=batch, replace=False)
        loss = (-gaussian_log_prob(net(Tensor(x[idx])), Tensor(z[idx]))).mean()
        net.zero_grad()
        loss.backward()
        adamw_step(net.named_parameters(), opt, cfg.lr)
        history.append(loss.item())
    post = net(Tensor(x))
    estimate = club_from_posterior(post.mu.data, post.sigma.data, z)
    reliable = nll_plateaued(history)
    if not reliable:
        logger.warning("NLL da rede de aproximação não estabilizou; estimativa CLUB pouco confiável")
    return ClubResult(estimate=estimate, reliable=reliable, final_nll=history[-1] if history else float("nan"))


class Critic(Module):
    """Projeções g(x) e h(z) comparadas por similaridade de cosseno."""

    def __init__(self, x_dim: int, z_dim: int, hidden: int, rng: np.random.Generator):
        self.gx1 = Linear(x_dim, hidden, rng)
        self.gx2 = Linear(hidden, hidden, rng)
        self.gz1 = Linear(z_dim, hidden, rng)
        self.gz2 = Linear(hidden, hidden, rng)

    def scores(self, x: Tensor, z: Tensor, tau: float) -> Tensor:
        """B×B com scores[i, j] = cos(g(x_i), h(z_j)) / τ."""
        gx = l2_normalize(self.gx2(activation(self.gx1(x), "gelu")))
        hz = l2_normalize(self.gz2(activation(self.gz1(z), "gelu")))
        return (gx @ hz.transpose(1, 0)) * (1.0 / tau)


def infonce_loss(scores: Tensor) -> Tensor:
    """média_i [logsumexp_j scores_ij − scores_ii], sempre ≥ 0."""
    b = scores.shape[0]
    return (logsumexp(scores, axis=1) - scores[np.arange(b), np.arange(b)]).mean()


def infonce_estimate(x: np.ndarray, z: np.ndarray, cfg: MiBenchConfig, seed: int = 0) -> float:
    """
    log(B) − perda InfoNCE média, com o crítico treinado numa metade das
    amostras e avaliado na outra.

    Raises:
        ContractError: batch < 2 ou metade de avaliação menor que um lote
    """
    batch = cfg.batch
    if batch < 2:
        raise ContractError("infonce_estimate exige batch ≥ 2")
    n = x.shape[0]
    order = np.random.default_rng([seed, 4]).permutation(n)
    train, held = order[: n // 2], order[n // 2 :]
    if len(held) < batch or len(train) < batch:
        raise ContractError(f"{n} amostras não formam um lote de {batch} em cada metade")

    critic = Critic(x.shape[1], z.shape[1], cfg.hidden, np.random.default_rng([seed, 5]))
    opt = OptimizerState(beta2=0.999, weight_decay=0.0)
    rng = np.random.default_rng([seed, 6])
    for _ in range(cfg.steps):
        idx = rng.choice(train, size=batch, replace=False)
        loss = infonce_loss(critic.scores(Tensor(x[idx]), Tensor(z[idx]), cfg.tau))
        critic.zero_grad()
        loss.backward()
        adamw_step(critic.named_parameters(), opt, cfg.lr)

    losses = []
    for start in range(0, len(held) - batch + 1, batch):
        idx = held[start : start + batch]
        losses.append(infonce_loss(critic.scores(Tensor(x[idx]), Tensor(z[idx]), cfg.tau)).item())
    return math.log(batch) - float(np.mean(losses))


def sandwich_row(rho: float, cfg: MiBenchConfig, index: int = 0) -> SandwichRow:
    """Oráculo e os dois estimadores para um ρ; a semente depende de (seed, índice)."""
    seed = cfg.seed * 1000 + index
    spec = GaussianPairSpec(dim=cfg.dim, rho=rho, samples=cfg.samples, seed=seed)
    x, z = gen_correlated_gaussian(spec)
    true_mi = true_gaussian_mi(rho, cfg.dim)
    club = club_estimate(x, z, cfg, seed)
    infonce = infonce_estimate(x, z, cfg, seed)
    row = SandwichRow(
        rho=rho,
        dim=cfg.dim,
        true_mi=true_mi,
        club=club.estimate,
        infonce=infonce,
        pass_club=club.estimate >= true_mi - cfg.delta,
        pass_infonce=infonce - cfg.delta <= true_mi,
        club_reliable=club.reliable,
    )
    logger.info(
        "rho %.2f: infonce %.4f ≤ verdadeira %.4f ≤ club %.4f",
        rho,
        row.infonce,
        row.true_mi,
        row.club,
    )
    return row


def sandwich_report(cfg: MiBenchConfig) -> SandwichReport:
    """
    InfoNCE − δ ≤ MI verdadeira e CLUB ≥ MI verdadeira − δ para cada ρ.

    Falhas são listadas por ρ, não lançadas. Com `workers > 1` cada ρ roda
    numa thread própria, com rede e gerador próprios.
    """
    jobs = list(enumerate(cfg.rhos))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(lambda job: sandwich_row(job[1], cfg, job[0]), jobs))
    else:
        rows = [sandwich_row(rho, cfg, i) for i, rho in jobs]

    failures = []
    for row in rows:
        if not row.pass_club:
            failures.append(f"rho={row.rho}: club {row.club:.4f} < {row.true_mi:.4f} - {cfg.delta}")
        if not row.pass_infonce:
            failures.append(f"rho={row.rho}: infonce {row.infonce:.4f} > {row.true_mi:.4f} + {cfg.delta}")
    for failure in failures:
        logger.warning("sanduíche falhou: %s", failure)
    return SandwichReport(rows=rows, failures=failures)
