"""Loss assembly, reconstruction heads, gradient routing and the model-variant registry."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

import torch
import torch.nn as nn

from .errors import ConfigError, ShapeError
from .latent import LatentSample

LOSS_TERMS = ("L_MLE", "L_i", "L_a", "L_t", "L_prior_z", "L_prior_t")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.01       # answer reconstruction
    lambda2: float = 0.001      # image reconstruction
    lambda3: float = 0.005      # t-space KL against z-space
    lambda_prior: float = 0.001  # unit-normal prior KLs
    mle: float = 1.0            # zeroed only by routing probes

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"loss weight {f.name} must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ModelVariant:
    name: str
    uses_answer_input: bool
    uses_category_input: bool
    variational: bool
    recon_answer: bool
    recon_image: bool
    has_t_space: bool

    @property
    def decode_space(self) -> str:
        """Latent space the decoder is trained from."""
        return "z" if self.uses_answer_input else "t"

    @property
    def spaces(self) -> tuple:
        out = [self.decode_space]
        if self.has_t_space and "t" not in out:
            out.append("t")
        return tuple(out)

    @property
    def inference_space(self) -> str:
        """Space used when only image and category are known."""
        return "t" if "t" in self.spaces else "z"


def _v(name, *flags):
    return ModelVariant(name, *flags)


VARIANTS = {v.name: v for v in (
    #    name          answer category variat. rec_a  rec_i  t_space
    _v("OURS",        True,  True,  True,  True,  True,  True),
    _v("OURS_WO_A",   True,  True,  True,  False, True,  True),
    _v("OURS_WO_C",   True,  False, True,  True,  True,  False),
    _v("OURS_WO_AC",  True,  False, True,  False, True,  False),
    _v("IA2Q",        True,  False, False, False, False, False),
    _v("V_IA2Q",      True,  False, True,  False, False, False),
    _v("IC2Q",        False, True,  False, False, False, False),
    _v("V_IC2Q",      False, True,  True,  False, False, False),
)}


def get_variant(name) -> ModelVariant:
    if isinstance(name, ModelVariant):
        return name
    try:
        return VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; valid: {', '.join(VARIANTS)}") from None


@dataclass
class LossBreakdown:
    L_MLE: torch.Tensor
    L_i: torch.Tensor
    L_a: torch.Tensor
    L_t: torch.Tensor
    L_prior_z: torch.Tensor
    L_prior_t: torch.Tensor
    total: Optional[torch.Tensor] = None

    def terms(self) -> dict:
        return {k: getattr(self, k) for k in LOSS_TERMS}

    def as_floats(self) -> dict:
        return {k: float(v.detach()) for k, v in {**self.terms(), "total": self.total}.items()}


def active_terms(variant: ModelVariant) -> dict:
    return {
        "L_MLE": True,
        "L_i": variant.recon_image,
        "L_a": variant.recon_answer,
        "L_t": variant.has_t_space,
        "L_prior_z": variant.variational,
        "L_prior_t": variant.has_t_space,
    }


class ReconstructionHeads(nn.Module):
    """Linear maps from a latent sample back to h_i and h_a."""

    def __init__(self, latent_dim: int, hidden_dim: int, image: bool = True, answer: bool = True):
        super().__init__()
        self.latent_dim = latent_dim
        self.image = nn.Linear(latent_dim, hidden_dim) if image else None
        self.answer = nn.Linear(latent_dim, hidden_dim) if answer else None

    def forward(self, z) -> tuple:
        z = z.value if isinstance(z, LatentSample) else z
        if z.shape[-1] != self.latent_dim:
            raise ShapeError(f"reconstruction expects a {self.latent_dim}-dim latent, got {z.shape[-1]}")
        h_i_hat = self.image(z) if self.image is not None else None
        h_a_hat = self.answer(z) if self.answer is not None else None
        return h_i_hat, h_a_hat


def reconstruction_error(target: torch.Tensor, pred: torch.Tensor) -> torch.Tensor:
    if target.shape != pred.shape:
        raise ShapeError(f"reconstruction shape {tuple(pred.shape)} != target {tuple(target.shape)}")
    # mean over dimensions, then over the batch
    return ((pred - target.detach()) ** 2).mean()


def recon_losses(h_i, h_a, h_i_hat, h_a_hat) -> tuple:
    """Per-dimension squared error of the reconstructions; targets are detached."""
    return reconstruction_error(h_i, h_i_hat), reconstruction_error(h_a, h_a_hat)


def total_loss(parts: LossBreakdown, weights: LossWeights, variant: ModelVariant) -> LossBreakdown:
    on = active_terms(variant)
    zero = torch.zeros((), dtype=parts.L_MLE.dtype)
    t = {k: (v if on[k] else zero) for k, v in parts.terms().items()}
    total = (weights.mle * t["L_MLE"]
             + weights.lambda1 * t["L_a"]
             + weights.lambda2 * t["L_i"]
             + weights.lambda3 * t["L_t"]
             + weights.lambda_prior * (t["L_prior_z"] + t["L_prior_t"]))
    return LossBreakdown(**t, total=total)


@dataclass(frozen=True)
class GradientRoutes:
    """Which parameter groups each loss term may update.

    Groups: image_encoder, answer_encoder, category_encoder, z_head, t_head,
    decoder, recon_image, recon_answer.
    """
    routes: dict

    def receives(self, term: str) -> set:
        return set(self.routes.get(term, ()))

    def sources(self, group: str) -> set:
        return {t for t, gs in self.routes.items() if group in gs}


def gradient_routes(variant, lt_updates_z: bool = True) -> GradientRoutes:
    variant = get_variant(variant)
    on = active_terms(variant)
    dec_head = "z_head" if variant.decode_space == "z" else "t_head"
    cond_enc = "answer_encoder" if variant.uses_answer_input else "category_encoder"
    routes = {"L_MLE": {"image_encoder", cond_enc, dec_head, "decoder"}}
    if on["L_i"]:
        routes["L_i"] = {dec_head, "recon_image"}
    if on["L_a"]:
        routes["L_a"] = {dec_head, "recon_answer"}
    if on["L_prior_z"]:
        routes["L_prior_z"] = {dec_head}
    if on["L_t"]:
        routes["L_t"] = {"t_head"} | ({"z_head"} if lt_updates_z else set())
        routes["L_prior_t"] = {"t_head"}
    return GradientRoutes({k: frozenset(v) for k, v in routes.items()})
