# models/config.py
from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.masking import mask_count


class _Secao(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class ModelConfig(_Secao):
    """
    Arquitetura do autoencoder mascarado e da rede de aproximação.

    Attributes:
        image_size (int): Lado da imagem quadrada, em pixels
        channels (int): Canais da imagem
        patch_size (int): Lado do patch; precisa dividir image_size
        embed_dim (int): Largura do encoder
        encoder_depth (int): Número de blocos do encoder
        decoder_dim (int): Largura do decoder
        decoder_depth (int): Número de blocos do decoder
        num_heads (int): Cabeças de atenção (encoder e decoder)
        mlp_ratio (int): Expansão do MLP dentro de cada bloco
        latent_dim (int): Dimensão do latente ẑ (igual a embed_dim)
        approx_hidden_dim (int): Largura escondida da rede de aproximação
        sigma_floor (float): Piso somado ao desvio padrão previsto
        pooling (str): cls (token de classe) ou mean (média dos tokens)
    """

    image_size: int = Field(32, ge=1)
    channels: int = Field(1, ge=1)
    patch_size: int = Field(8, ge=1)
    embed_dim: int = Field(64, ge=4)
    encoder_depth: int = Field(4, ge=1)
    decoder_dim: int = Field(32, ge=4)
    decoder_depth: int = Field(2, ge=1)
    num_heads: int = Field(4, ge=1)
    mlp_ratio: int = Field(4, ge=1)
    latent_dim: int = Field(64, ge=1)
    approx_hidden_dim: int = Field(128, ge=1)
    sigma_floor: float = Field(1e-4, gt=0)
    pooling: Literal["cls", "mean"] = "cls"

    @model_validator(mode="after")
    def _checar_dimensoes(self) -> "ModelConfig":
        if self.image_size % self.patch_size:
            raise ValueError("image_size precisa ser divisível por patch_size")
        for nome in ("embed_dim", "decoder_dim"):
            largura = getattr(self, nome)
            if largura % self.num_heads:
                raise ValueError(f"{nome} precisa ser divisível por num_heads")
            if largura % 4:
                raise ValueError(f"{nome} precisa ser múltiplo de 4 (embedding seno-cosseno 2-D)")
        if self.latent_dim != self.embed_dim:
            raise ValueError("latent_dim precisa ser igual a embed_dim")
        return self

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size**2

    @property
    def patch_dim(self) -> int:
        return self.patch_size**2 * self.channels

    @property
    def input_dim(self) -> int:
        return self.num_patches * self.patch_dim


class LossWeights(_Secao):
    """Pesos λ, temperatura τ e limiar ε_l do gate."""

    lambda1: float = Field(1.0, ge=0)
    lambda2: float = Field(1.0, ge=0)
    lambda3: float = Field(10.0, ge=0)
    tau: float = Field(0.07, gt=0)
    eps_l: float = 0.5


class OptimizerConfig(_Secao):
    """AdamW + agenda cosseno com aquecimento linear."""

    base_lr: float = Field(1.5e-3, ge=0)
    min_lr: float = Field(0.0, ge=0)
    warmup_fraction: float = Field(0.1, ge=0, lt=1)
    weight_decay: float = Field(0.05, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.95, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)

    @model_validator(mode="after")
    def _checar_lr(self) -> "OptimizerConfig":
        if self.min_lr > self.base_lr:
            raise ValueError("min_lr não pode exceder base_lr")
        return self


def _otimizador_aproximacao() -> OptimizerConfig:
    return OptimizerConfig(base_lr=1e-3, weight_decay=0.0)


class LrSchedule(_Secao):
    """Parâmetros de `cosine_lr` em passos absolutos."""

    base_lr: float = Field(..., ge=0)
    warmup_steps: int = Field(..., ge=0)
    total_steps: int = Field(..., ge=1)
    min_lr: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _checar(self) -> "LrSchedule":
        if self.warmup_steps >= self.total_steps:
            raise ValueError("warmup_steps precisa ser menor que total_steps")
        if self.min_lr > self.base_lr:
            raise ValueError("min_lr não pode exceder base_lr")
        return self

    @classmethod
    def from_optimizer(cls, cfg: OptimizerConfig, total_steps: int) -> "LrSchedule":
        warmup = min(int(round(cfg.warmup_fraction * total_steps)), total_steps - 1)
        return cls(
            base_lr=cfg.base_lr,
            warmup_steps=warmup,
            total_steps=total_steps,
            min_lr=cfg.min_lr,
        )


class TrainConfig(_Secao):
    """
    Laço de pré-treino.

    Attributes:
        mask_strategy (str): complete (N = max(2, round(1/(1-ratio)))) ou fixed4
        mask_generation (str): orthogonal ou independent
        gate_mode (str): latch (trava aberto) ou per_batch
        force_gate_open (bool): Liga as perdas de MI desde o primeiro passo
        checkpoint_every (int): Épocas entre checkpoints (o último sempre é salvo)
        probe_every (int): Épocas entre probes lineares (0 desliga)
    """

    epochs: int = Field(50, ge=1)
    batch_size: int = Field(64, ge=2)
    mask_ratio: float = Field(0.75, gt=0, lt=1)
    mask_strategy: Literal["complete", "fixed4"] = "complete"
    mask_generation: Literal["orthogonal", "independent"] = "orthogonal"
    seed: int = Field(0, ge=0)
    checkpoint_every: int = Field(10, ge=0)
    gate_mode: Literal["latch", "per_batch"] = "latch"
    force_gate_open: bool = False
    norm_pix_loss: bool = False
    probe_every: int = Field(0, ge=0)
    weights: LossWeights = Field(default_factory=LossWeights)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    approx_optimizer: OptimizerConfig = Field(default_factory=_otimizador_aproximacao)

    @property
    def num_masks(self) -> int:
        return mask_count(self.mask_ratio, self.mask_strategy)


class DataConfig(_Secao):
    """
    Conjunto sintético (ou importado de IDX) usado no pré-treino e no probe.

    As dimensões da imagem vêm de ModelConfig.
    """

    path: Optional[str] = None
    num_images: int = Field(512, ge=1)
    class_count: int = Field(4, ge=1, le=65535)
    seed: int = Field(0, ge=0)
    idx_images: Optional[str] = None
    idx_labels: Optional[str] = None


class ProbeConfig(_Secao):
    """Classificador linear sobre o token de classe congelado (SGD + cosseno)."""

    epochs: int = Field(100, ge=1)
    lr: float = Field(0.1, gt=0)
    batch_size: int = Field(64, ge=1)
    holdout: float = Field(0.2, gt=0, lt=1)
    momentum: float = Field(0.9, ge=0, lt=1)
    seed: int = Field(0, ge=0)


class MiBenchConfig(_Secao):
    """Bancada de verificação com gaussianas correlacionadas."""

    rhos: Tuple[float, ...] = (0.0, 0.3, 0.6, 0.9)
    dim: int = Field(1, ge=1)
    samples: int = Field(10000, ge=100)
    steps: int = Field(1500, ge=1)
    batch: int = Field(128, ge=2)
    hidden: int = Field(64, ge=1)
    lr: float = Field(3e-3, gt=0)
    tau: float = Field(0.07, gt=0)
    delta: float = Field(0.1, ge=0)
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _checar_rhos(self) -> "MiBenchConfig":
        if not self.rhos:
            raise ValueError("rhos não pode ser vazio")
        if any(abs(r) >= 1 for r in self.rhos):
            raise ValueError("todo rho precisa satisfazer |rho| < 1")
        return self


class RunConfig(_Secao):
    """Configuração completa de uma execução (todas as seções)."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    probe: ProbeConfig = Field(default_factory=ProbeConfig)
    mi: MiBenchConfig = Field(default_factory=MiBenchConfig)
    output_dir: str = "runs/default"

    @model_validator(mode="after")
    def _checar_mascaras(self) -> "RunConfig":
        n = self.train.num_masks
        p = self.model.num_patches
        if self.train.mask_generation == "orthogonal":
            if p < n:
                raise ValueError(f"{n} máscaras ortogonais exigem ao menos {n} patches (há {p})")
            if self.train.mask_strategy == "fixed4":
                visiveis = int(round(p * (1 - self.train.mask_ratio)))
                if n * visiveis > p:
                    raise ValueError(
                        "fixed4 ortogonal impossível para esta razão; use mask_generation = independent"
                    )
        return self


class GaussianPairSpec(_Secao):
    """
    Pares (x, z) gaussianos com correlação ρ por dimensão, independentes entre dimensões.

    Attributes:
        dim (int): Dimensão d de x e z
        rho (float): Correlação, |ρ| < 1
        samples (int): Número de pares n
        seed (int): Semente do gerador
    """

    dim: int = Field(1, ge=1)
    rho: float = Field(..., gt=-1, lt=1)
    samples: int = Field(10000, ge=100)
    seed: int = Field(0, ge=0)
