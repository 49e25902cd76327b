"""Diagonal-Gaussian latent heads, reparameterized sampling and KL terms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import torch
import torch.nn as nn

from .errors import ShapeError

LOG_SIGMA_MIN = -8.0
LOG_SIGMA_MAX = 8.0


@dataclass
class GaussianParams:
    mu: torch.Tensor
    log_sigma: torch.Tensor

    def __post_init__(self):
        if self.mu.shape != self.log_sigma.shape:
            raise ShapeError(f"mu {tuple(self.mu.shape)} vs log_sigma {tuple(self.log_sigma.shape)}")
        self.log_sigma = self.log_sigma.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX)

    @property
    def sigma(self) -> torch.Tensor:
        return self.log_sigma.exp()

    @property
    def dim(self) -> int:
        return self.mu.shape[-1]

    def detach(self) -> "GaussianParams":
        return GaussianParams(self.mu.detach(), self.log_sigma.detach())

    def __getitem__(self, idx) -> "GaussianParams":
        return GaussianParams(self.mu[idx], self.log_sigma[idx])

    @classmethod
    def standard(cls, like: torch.Tensor) -> "GaussianParams":
        return cls(torch.zeros_like(like), torch.zeros_like(like))


@dataclass
class LatentSample:
    value: torch.Tensor
    eps: torch.Tensor


class LatentHead(nn.Module):
    """Concatenates two H-dim inputs and emits mu and log-sigma with separate linears."""

    def __init__(self, hidden_dim: int, latent_dim: int):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.mu = nn.Linear(2 * hidden_dim, latent_dim)
        self.log_sigma = nn.Linear(2 * hidden_dim, latent_dim)

    def forward(self, h_image: torch.Tensor, h_cond: torch.Tensor) -> GaussianParams:
        if h_image.shape[-1] != self.hidden_dim or h_cond.shape[-1] != self.hidden_dim:
            raise ShapeError(f"latent head expects two {self.hidden_dim}-dim inputs, got "
                             f"{h_image.shape[-1]} and {h_cond.shape[-1]}")
        x = torch.cat([h_image, h_cond], dim=-1)
        return GaussianParams(self.mu(x), self.log_sigma(x))


def _generator(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


def standard_normal(shape, seed: Optional[int] = None, generator: Optional[torch.Generator] = None,
                    dtype=torch.float32) -> torch.Tensor:
    if generator is None:
        generator = _generator(0 if seed is None else seed)
    return torch.randn(shape, generator=generator, dtype=dtype)


def reparameterize(p: GaussianParams, eps: Union[torch.Tensor, int, None] = None,
                   generator: Optional[torch.Generator] = None) -> LatentSample:
    """``mu + sigma * eps``; ``eps`` is a tensor, a seed, or drawn from ``generator``."""
    if eps is None or isinstance(eps, int):
        eps = standard_normal(p.mu.shape, seed=eps, generator=generator, dtype=p.mu.dtype)
    else:
        eps = torch.as_tensor(eps, dtype=p.mu.dtype)
        if eps.shape != p.mu.shape:
            raise ShapeError(f"eps shape {tuple(eps.shape)} != {tuple(p.mu.shape)}")
        eps = eps.detach()
    return LatentSample(p.mu + p.sigma * eps, eps)


def kl_between(p: GaussianParams, q: GaussianParams) -> torch.Tensor:
    """KL(p || q) for diagonal Gaussians, summed over the last dimension."""
    if p.mu.shape[-1] != q.mu.shape[-1]:
        raise ShapeError(f"KL between {p.mu.shape[-1]}-dim and {q.mu.shape[-1]}-dim Gaussians")
    var_ratio = torch.exp(2 * (p.log_sigma - q.log_sigma))
    mean_term = (p.mu - q.mu) ** 2 * torch.exp(-2 * q.log_sigma)
    return (q.log_sigma - p.log_sigma + 0.5 * (var_ratio + mean_term) - 0.5).sum(-1)


def kl_to_standard_normal(p: GaussianParams) -> torch.Tensor:
    return kl_between(p, GaussianParams.standard(p.mu))


def log_density(p: GaussianParams, x: torch.Tensor) -> torch.Tensor:
    """Log-density of ``x`` under ``p``, summed over the last dimension."""
    z = (x - p.mu) * torch.exp(-p.log_sigma)
    return (-0.5 * z ** 2 - p.log_sigma - 0.5 * math.log(2 * math.pi)).sum(-1)
