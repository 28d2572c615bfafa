# nn/approx.py
import math
from dataclasses import dataclass

import numpy as np

from app.autodiff.functional import activation
from app.autodiff.tensor import Tensor
from app.errors import ContractError, ShapeError
from app.nn.layers import Linear, Module

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GaussianPosterior:
    """
    q_θ(ẑ|X) gaussiana diagonal.

    Attributes:
        mu (Tensor): B×latent_dim
        sigma (Tensor): B×latent_dim, desvio padrão ≥ sigma_floor
        sigma_floor (float): Piso aplicado pela rede
    """

    mu: Tensor
    sigma: Tensor
    sigma_floor: float

    def detach(self) -> "GaussianPosterior":
        return GaussianPosterior(self.mu.detach(), self.sigma.detach(), self.sigma_floor)


def gaussian_log_prob(post: GaussianPosterior, z: Tensor) -> Tensor:
    """
    log N(z; μ, σ²) por amostra: −½ Σ_d [(z−μ)²/σ² + log σ² + log 2π].

    Raises:
        ShapeError: Shapes diferentes
        ContractError: σ abaixo do piso
    """
    if z.shape != post.mu.shape or post.sigma.shape != post.mu.shape:
        raise ShapeError(f"log_prob: z {z.shape}, mu {post.mu.shape}, sigma {post.sigma.shape}")
    # tolerância de arredondamento do float32 na soma do piso
    if np.any(post.sigma.data < post.sigma_floor * (1 - 1e-3)):
        raise ContractError(f"sigma abaixo do piso {post.sigma_floor}")
    var = post.sigma * post.sigma
    diff = z - post.mu
    per_dim = diff * diff / var + var.log() + LOG_2PI
    return per_dim.sum(axis=-1) * -0.5


class ApproxNet(Module):
    """
    Rede de aproximação variacional com dois ramos.

    μ: FC → GELU → FC → FC → LeakyReLU
    σ: FC → GELU → FC → FC → ReLU, depois σ + sigma_floor

    O viés da última camada do ramo σ começa em 1 para σ não nascer no piso.
    """

    def __init__(
        self,
        input_dim: int,
        hidden_dim: int,
        latent_dim: int,
        sigma_floor: float,
        rng: np.random.Generator,
    ):
        if sigma_floor <= 0:
            raise ContractError("sigma_floor precisa ser positivo")
        self.input_dim = input_dim
        self.sigma_floor = sigma_floor
        self.mu_fc1 = Linear(input_dim, hidden_dim, rng)
        self.mu_fc2 = Linear(hidden_dim, hidden_dim, rng)
        self.mu_head = Linear(hidden_dim, latent_dim, rng)
        self.sigma_fc1 = Linear(input_dim, hidden_dim, rng)
        self.sigma_fc2 = Linear(hidden_dim, hidden_dim, rng)
        self.sigma_head = Linear(hidden_dim, latent_dim, rng, bias_init=1.0)

    def __call__(self, x_masked: Tensor) -> GaussianPosterior:
        return self.approx_forward(x_masked)

    def approx_forward(self, x_masked: Tensor) -> GaussianPosterior:
        """
        Args:
            x_masked (Tensor): B×input_dim, imagem achatada com patches mascarados zerados
        """
        if x_masked.ndim != 2 or x_masked.shape[1] != self.input_dim:
            raise ShapeError(f"ApproxNet espera B×{self.input_dim}, recebeu {x_masked.shape}")
        h = self.mu_fc2(activation(self.mu_fc1(x_masked), "gelu"))
        mu = activation(self.mu_head(h), "leaky_relu")
        s = self.sigma_fc2(activation(self.sigma_fc1(x_masked), "gelu"))
        sigma = activation(self.sigma_head(s), "relu") + self.sigma_floor
        return GaussianPosterior(mu, sigma, self.sigma_floor)
