# trainer.py
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.autodiff.optim import adamw_step, cosine_lr
from app.autodiff.tensor import Tensor, backward
from app.config import dump_config, parse_config
from app.errors import ContractError, NonFiniteError
from app.io.checkpoint import Checkpoint, load_checkpoint
from app.io.dataset import ImageDataset, steps_per_epoch
from app.masking import apply_mask, generate_batch_masks, mask_count, mask_pixels
from app.models.config import LrSchedule, RunConfig, TrainConfig
from app.models.report import LossReport, MetricsRow, SweepRow
from app.models.state import TrainState
from app.nn.approx import ApproxNet, GaussianPosterior
from app.nn.mae import MaskedAutoencoder, build_models
from app.objectives import (
    LossParts,
    approx_loss,
    combined_loss,
    max_mi_loss,
    min_mi_loss,
    normalize_patches,
    rec_loss,
)
from app.probe import linear_probe

logger = logging.getLogger(__name__)


def no_decay_names(model: MaskedAutoencoder) -> set:
    """Vieses, ganhos de LayerNorm e tokens aprendíveis ficam sem weight decay."""
    return {name for name, p in model.named_parameters() if p.ndim < 2 or "token" in name}


@dataclass
class StepForward:
    """Tudo o que uma passada para frente produz, antes de combinar as perdas."""

    parts: LossParts
    latents: List[Tensor]
    posteriors: List[GaussianPosterior]


class Trainer:
    """
    Dono do estado mutável do pré-treino: modelos, otimizadores e gate.

    Um único backward de (total + approx) entrega as três atualizações
    roteadas: o CLUB usa posteriores destacadas, approx usa latentes
    destacados e as perdas de MI não alcançam o decoder.
    """

    def __init__(
        self,
        config: RunConfig,
        steps_per_epoch: int = 1,
        mae: Optional[MaskedAutoencoder] = None,
        approx: Optional[ApproxNet] = None,
        state: Optional[TrainState] = None,
    ):
        self.config = config
        if mae is None or approx is None:
            mae, approx = build_models(config.model, config.train.seed)
        self.mae = mae
        self.approx = approx
        self.state = state or TrainState.fresh(config.train)
        self.state.optimizer.no_decay = no_decay_names(mae)
        self.steps_per_epoch = steps_per_epoch
        total = max(2, config.train.epochs * steps_per_epoch)
        self.schedule = LrSchedule.from_optimizer(config.train.optimizer, total)
        self.approx_schedule = LrSchedule.from_optimizer(config.train.approx_optimizer, total)

    @property
    def train_config(self) -> TrainConfig:
        return self.config.train

    # máscaras e passada para frente --------------------------------------------

    def batch_masks(self, batch_size: int, step: Optional[int] = None) -> np.ndarray:
        """N×B×P, semeado por (seed, passo global)."""
        cfg = self.train_config
        step = self.state.global_step if step is None else step
        return generate_batch_masks(
            batch_size,
            self.config.model.num_patches,
            cfg.mask_ratio,
            cfg.mask_strategy,
            cfg.mask_generation,
            [cfg.seed, step],
        )

    def forward(self, images: np.ndarray, masks: np.ndarray) -> StepForward:
        """
        Codifica as N vistas mascaradas, reconstrói cada uma e avalia as quatro perdas.

        Args:
            images (np.ndarray): B×C×H×W
            masks (np.ndarray): N×B×P
        """
        cfg = self.train_config
        tokens = self.mae.patch_embed(images)
        patches = self.mae.patchify(images).data
        target = normalize_patches(patches) if cfg.norm_pix_loss else patches

        recs, latents, posteriors = [], [], []
        for j, mask in enumerate(masks):
            visible, _ = apply_mask(tokens, mask)
            latent = self.mae.encode(visible, mask_id=j)
            recs.append(rec_loss(self.mae.decode(latent, mask), target, mask))
            latents.append(latent.z_vec)
            posteriors.append(self.approx(Tensor(mask_pixels(patches, mask))))

        rec = recs[0]
        for r in recs[1:]:
            rec = rec + r
        parts = LossParts(
            rec=rec * (1.0 / len(recs)),
            max_mi=max_mi_loss(latents, cfg.weights.tau),
            min_mi=min_mi_loss(posteriors, latents),
            approx=approx_loss(posteriors, latents),
        )
        return StepForward(parts=parts, latents=latents, posteriors=posteriors)

    def zero_grad(self) -> None:
        self.mae.zero_grad()
        self.approx.zero_grad()

    # passo de treino -------------------------------------------------------------

    def train_step(self, images: np.ndarray) -> LossReport:
        """
        Um passo do pré-treino com as três atualizações roteadas.

        encoder ← ∇(λ1·rec + gate·(λ2·max_mi + λ3·min_mi))
        decoder ← ∇(λ1·rec)
        approx  ← ∇approx

        Raises:
            ContractError: Lote com menos de 2 imagens
            NonFiniteError: Perda ou ativação não finita (com snapshot diagnóstico)
        """
        if len(images) < 2:
            raise ContractError("train_step exige lotes com ao menos 2 imagens")
        st = self.state
        masks = self.batch_masks(len(images))
        self.zero_grad()
        try:
            out = self.forward(images, masks)
            rec = out.parts.rec.item()
            if self._gate_per_batch:
                self._set_gate(rec < self.train_config.weights.eps_l, rec)
            total, report = combined_loss(out.parts, self.train_config.weights, st.gate_open)
            backward(total + out.parts.approx)
        except NonFiniteError as exc:
            raise NonFiniteError(str(exc), snapshot=self.snapshot()) from exc

        step = min(st.global_step, self.schedule.total_steps)
        lr = cosine_lr(step, self.schedule)
        adamw_step(self.mae.named_parameters(), st.optimizer, lr)
        adamw_step(self.approx.named_parameters(), st.approx_optimizer, cosine_lr(step, self.approx_schedule))
        st.global_step += 1
        st.last_lr = lr
        st.epoch_rec.append(report.rec)
        return report

    @property
    def _gate_per_batch(self) -> bool:
        return self.train_config.gate_mode == "per_batch" and not self.train_config.force_gate_open

    def step_gate(self, rec: float) -> bool:
        """Gate usado por um passo cujo lote tem perda de reconstrução `rec`."""
        if self._gate_per_batch:
            return rec < self.train_config.weights.eps_l
        return self.state.gate_open

    def _set_gate(self, open_: bool, rec: float) -> None:
        st = self.state
        if open_ and not st.gate_open:
            st.gate_epoch = st.epoch + 1 if st.gate_epoch is None else st.gate_epoch
            logger.info("gate aberto na época %d (rec %.4f)", st.epoch + 1, rec)
        st.gate_open = open_

    def end_epoch(self) -> float:
        """
        Fecha a época: rec médio da janela e trava do gate.

        Returns:
            float: Média de rec na época
        """
        st = self.state
        if not st.epoch_rec:
            raise ContractError("época sem nenhum passo")
        st.running_rec = float(np.mean(st.epoch_rec))
        st.epoch_rec = []
        cfg = self.train_config
        if cfg.gate_mode == "latch" and not st.gate_open and st.running_rec < cfg.weights.eps_l:
            self._set_gate(True, st.running_rec)
        st.epoch += 1
        return st.running_rec

    def snapshot(self) -> Dict[str, object]:
        """Estado escalar e normas dos parâmetros para diagnóstico."""
        st = self.state
        norms = {name: float(np.linalg.norm(p.data)) for name, p in self.mae.named_parameters()}
        norms.update({f"approx.{n}": float(np.linalg.norm(p.data)) for n, p in self.approx.named_parameters()})
        return {
            "epoch": st.epoch,
            "global_step": st.global_step,
            "gate_open": st.gate_open,
            "running_rec": st.running_rec,
            "epoch_rec": list(st.epoch_rec),
            "param_norms": norms,
        }

    # persistência ----------------------------------------------------------------

    def to_checkpoint(self) -> Checkpoint:
        st = self.state
        tensors: Dict[str, np.ndarray] = {}
        for name, p in self.mae.named_parameters():
            tensors[f"mae/{name}"] = p.data
        for name, p in self.approx.named_parameters():
            tensors[f"approx/{name}"] = p.data
        for prefix, opt in (("opt", st.optimizer), ("approx_opt", st.approx_optimizer)):
            for name in opt.m:
                tensors[f"{prefix}/m/{name}"] = opt.m[name]
                tensors[f"{prefix}/v/{name}"] = opt.v[name]
        scalars = {
            "epoch": st.epoch,
            "global_step": st.global_step,
            "gate_open": st.gate_open,
            "gate_epoch": st.gate_epoch,
            "running_rec": st.running_rec,
            "epoch_rec": list(st.epoch_rec),
            "last_lr": st.last_lr,
            "optimizer_t": st.optimizer.t,
            "approx_optimizer_t": st.approx_optimizer.t,
        }
        return Checkpoint(config_text=dump_config(self.config), scalars=scalars, tensors=tensors)

    @classmethod
    def from_checkpoint(
        cls,
        ckpt: Checkpoint,
        steps_per_epoch: int = 1,
        config: Optional[RunConfig] = None,
    ) -> "Trainer":
        """
        Reconstrói modelos, otimizadores e contadores.

        Raises:
            ContractError: Se `config` tiver arquitetura diferente da salva
        """
        saved = parse_config(ckpt.config_text)
        if config is None:
            config = saved
        elif config.model != saved.model:
            raise ContractError("a arquitetura do checkpoint difere da configuração atual")
        trainer = cls(config, steps_per_epoch)
        groups: Dict[str, Dict[str, np.ndarray]] = {}
        for key, value in ckpt.tensors.items():
            prefix, name = key.split("/", 1)
            groups.setdefault(prefix, {})[name] = value
        trainer.mae.load_state_dict(groups.get("mae", {}))
        trainer.approx.load_state_dict(groups.get("approx", {}))

        st, s = trainer.state, ckpt.scalars
        for prefix, opt, t_key in (
            ("opt", st.optimizer, "optimizer_t"),
            ("approx_opt", st.approx_optimizer, "approx_optimizer_t"),
        ):
            moments = groups.get(prefix, {})
            opt.t = int(s[t_key])
            opt.m = {n[2:]: v.copy() for n, v in moments.items() if n.startswith("m/")}
            opt.v = {n[2:]: v.copy() for n, v in moments.items() if n.startswith("v/")}
        st.epoch = int(s["epoch"])
        st.global_step = int(s["global_step"])
        st.gate_open = bool(s["gate_open"])
        st.gate_epoch = s["gate_epoch"]
        st.running_rec = s["running_rec"]
        st.epoch_rec = [float(v) for v in s["epoch_rec"]]
        st.last_lr = float(s["last_lr"])
        return trainer


def routed_gradients(trainer: Trainer, images: np.ndarray) -> Dict[str, Dict[str, np.ndarray]]:
    """
    As três atualizações calculadas em passadas de backward separadas.

    Usa as mesmas máscaras do próximo `train_step` e não altera parâmetros.

    Returns:
        Dict[str, Dict[str, np.ndarray]]: grupo → nome do parâmetro → gradiente
    """
    weights = trainer.train_config.weights
    masks = trainer.batch_masks(len(images))
    encoder_names = {n for n, _ in trainer.mae.encoder_parameters()}

    def run(select) -> Dict[str, np.ndarray]:
        trainer.zero_grad()
        parts = trainer.forward(images, masks).parts
        backward(select(parts))
        named = list(trainer.mae.named_parameters()) + [(f"approx.{n}", p) for n, p in trainer.approx.named_parameters()]
        return {n: p.grad.copy() for n, p in named}

    def encoder_loss(parts: LossParts) -> Tensor:
        loss = parts.rec * weights.lambda1
        if trainer.step_gate(parts.rec.item()):
            loss = loss + parts.max_mi * weights.lambda2 + parts.min_mi * weights.lambda3
        return loss

    enc = run(encoder_loss)
    dec = run(lambda parts: parts.rec * weights.lambda1)
    apx = run(lambda parts: parts.approx)
    trainer.zero_grad()
    return {
        "encoder": {n: g for n, g in enc.items() if n in encoder_names},
        "decoder": {n: g for n, g in dec.items() if not n.startswith("approx.") and n not in encoder_names},
        "approx": {n[len("approx.") :]: g for n, g in apx.items() if n.startswith("approx.")},
    }


# laço externo ------------------------------------------------------------------


@dataclass
class PretrainResult:
    trainer: Trainer
    rows: List[MetricsRow] = field(default_factory=list)


def run_pretrain(
    config: RunConfig,
    dataset: ImageDataset,
    storage=None,
    resume_from: Optional[Union[str, Path]] = None,
) -> PretrainResult:
    """
    Laço de épocas com agenda cosseno, métricas por época e checkpoints.

    Com `storage` (RunStorage), grava metrics.csv a cada época, checkpoints na
    cadência configurada (a última época sempre) e um diagnóstico JSON se
    alguma perda deixar de ser finita.

    Raises:
        ContractError: Conjunto com menos de 2 imagens
        NonFiniteError: Treino divergiu
    """
    cfg = config.train
    spe = steps_per_epoch(len(dataset), cfg.batch_size)
    rows: List[MetricsRow] = []
    if resume_from is not None:
        trainer = Trainer.from_checkpoint(load_checkpoint(resume_from), spe, config)
        if storage is not None and storage.has_metrics():
            rows = [r for r in storage.read_metrics() if r.epoch <= trainer.state.epoch]
        logger.info("retomando da época %d (passo %d)", trainer.state.epoch, trainer.state.global_step)
    else:
        trainer = Trainer(config, spe)
    if storage is not None:
        storage.write_config(config)

    st = trainer.state
    for epoch in range(st.epoch, cfg.epochs):
        sums = {"rec": 0.0, "max_mi": 0.0, "min_mi": 0.0, "approx": 0.0}
        count = 0
        for batch in dataset.batches(cfg.batch_size, [cfg.seed, epoch]):
            try:
                report = trainer.train_step(batch)
            except NonFiniteError as exc:
                if storage is not None:
                    path = storage.write_diagnostics(st.global_step, exc.snapshot)
                    logger.error("perda não finita no passo %d, diagnóstico em %s", st.global_step, path)
                raise
            for key in sums:
                sums[key] += getattr(report, key)
            count += 1
        trainer.end_epoch()

        probe_acc = None
        if cfg.probe_every and st.epoch % cfg.probe_every == 0:
            probe_acc = linear_probe(trainer.mae, dataset, config.probe).accuracy
        row = MetricsRow(
            epoch=st.epoch,
            step=st.global_step,
            lr=st.last_lr,
            gate_open=st.gate_open,
            probe_acc=probe_acc,
            **{k: v / count for k, v in sums.items()},
        )
        rows.append(row)
        logger.info(
            "época %d/%d: rec %.4f max_mi %.4f min_mi %.4f approx %.4f gate %s",
            st.epoch,
            cfg.epochs,
            row.rec,
            row.max_mi,
            row.min_mi,
            row.approx,
            "aberto" if row.gate_open else "fechado",
        )
        if storage is not None:
            storage.write_metrics(rows)
            due = cfg.checkpoint_every and st.epoch % cfg.checkpoint_every == 0
            if due or st.epoch == cfg.epochs:
                storage.save_checkpoint(st.epoch, trainer.to_checkpoint())
    return PretrainResult(trainer=trainer, rows=rows)


# varredura de razões de máscara ------------------------------------------------------


def _sweep_config(config: RunConfig, ratio: float, strategy: str) -> Tuple[RunConfig, int, int]:
    n = mask_count(ratio, strategy)
    epochs = max(1, int(round(config.train.epochs * 4 / n)))
    base = config.train.model_dump()
    base.update(
        mask_ratio=ratio,
        mask_strategy=strategy,
        epochs=epochs,
        checkpoint_every=0,
        probe_every=0,
    )
    generation = base["mask_generation"]
    p = config.model.num_patches
    if generation == "orthogonal" and strategy == "fixed4":
        visible = int(round(p * (1 - ratio)))
        if n * visible > p:
            logger.warning("fixed4 ortogonal impossível para razão %.2f; usando máscaras independentes", ratio)
            base["mask_generation"] = "independent"
    train = TrainConfig.model_validate(base)
    run = RunConfig(model=config.model, train=train, data=config.data, probe=config.probe, mi=config.mi)
    return run, n, epochs


def run_ratio_sweep(
    config: RunConfig,
    dataset: ImageDataset,
    ratios: Sequence[float] = (0.5, 0.75, 0.9),
    strategies: Sequence[str] = ("complete", "fixed4"),
) -> List[SweepRow]:
    """
    Ablação da razão de máscara com orçamento constante de amostras mascaradas.

    As épocas são reescaladas por 4/N, então épocas·N fica igual ao caso
    N = 4 da configuração base.
    """
    rows: List[SweepRow] = []
    for strategy in strategies:
        for ratio in ratios:
            run, n, epochs = _sweep_config(config, ratio, strategy)
            result = run_pretrain(run, dataset)
            acc = linear_probe(result.trainer.mae, dataset, config.probe).accuracy
            rows.append(SweepRow(ratio=ratio, strategy=strategy, num_masks=n, epochs=epochs, probe_acc=acc))
            logger.info("varredura %s razão %.2f (N=%d, %d épocas): probe %.3f", strategy, ratio, n, epochs, acc)
    return rows
