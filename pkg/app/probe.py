# probe.py
import logging
import math

import numpy as np

from app.autodiff.functional import logsumexp
from app.autodiff.optim import SgdState, cosine_lr, sgd_step
from app.autodiff.tensor import Tensor
from app.errors import ContractError, ShapeError
from app.io.dataset import ImageDataset
from app.models.config import LrSchedule, ProbeConfig
from app.models.report import ProbeResult
from app.nn.layers import Linear
from app.nn.mae import MaskedAutoencoder

logger = logging.getLogger(__name__)

FEATURE_BATCH = 256


def extract_features(model: MaskedAutoencoder, images: np.ndarray, batch_size: int = FEATURE_BATCH) -> np.ndarray:
    """Latente ẑ de imagens sem máscara, em lotes, com o modelo congelado."""
    chunks = [model.features(images[i : i + batch_size]) for i in range(0, len(images), batch_size)]
    return np.concatenate(chunks, axis=0)


def split_holdout(n: int, holdout: float, seed: int):
    order = np.random.default_rng(seed).permutation(n)
    test = min(n - 1, max(1, int(round(n * holdout))))
    return order[test:], order[:test]


def fit_linear_probe(features: np.ndarray, labels: np.ndarray, cfg: ProbeConfig) -> ProbeResult:
    """
    Classificador linear com entropia cruzada, SGD com momento e decaimento cosseno.

    As features são padronizadas com média e desvio do conjunto de treino.

    Raises:
        ShapeError: features e rótulos com contagens diferentes
        ContractError: Menos de duas classes ou menos de duas amostras
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise ShapeError(f"features {features.shape} e rótulos {labels.shape} incompatíveis")
    classes, y = np.unique(labels, return_inverse=True)
    if len(classes) < 2:
        raise ContractError("o probe linear precisa de ao menos duas classes")
    if len(labels) < 2:
        raise ContractError("o probe linear precisa de ao menos duas amostras")

    train_idx, test_idx = split_holdout(len(labels), cfg.holdout, cfg.seed)
    mean = features[train_idx].mean(axis=0)
    std = features[train_idx].std(axis=0)
    std[std < 1e-8] = 1.0
    x = (features - mean) / std

    rng = np.random.default_rng([cfg.seed, 1])
    head = Linear(x.shape[1], len(classes), rng)
    params = list(head.named_parameters())
    state = SgdState(momentum=cfg.momentum)
    per_epoch = math.ceil(len(train_idx) / cfg.batch_size)
    schedule = LrSchedule(base_lr=cfg.lr, warmup_steps=0, total_steps=cfg.epochs * per_epoch)

    step, last_loss = 0, float("nan")
    for epoch in range(cfg.epochs):
        order = rng.permutation(train_idx)
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            logits = head(Tensor(x[idx]))
            picked = logits[np.arange(len(idx)), y[idx]]
            loss = (logsumexp(logits, axis=1) - picked).mean()
            head.zero_grad()
            loss.backward()
            sgd_step(params, state, cosine_lr(step, schedule))
            losses.append(loss.item())
            step += 1
        last_loss = float(np.mean(losses))

    scores = x[test_idx] @ head.weight.data + head.bias.data
    accuracy = float(np.mean(scores.argmax(axis=1) == y[test_idx]))
    logger.debug("probe linear: acurácia %.4f em %d amostras", accuracy, len(test_idx))
    return ProbeResult(
        accuracy=accuracy,
        train_size=len(train_idx),
        test_size=len(test_idx),
        num_classes=len(classes),
        final_loss=last_loss,
    )


def linear_probe(model: MaskedAutoencoder, dataset: ImageDataset, cfg: ProbeConfig) -> ProbeResult:
    """Acurácia top-1 de um classificador linear sobre o latente congelado das imagens sem máscara."""
    features = extract_features(model, dataset.images)
    return fit_linear_probe(features, dataset.labels, cfg)
