"""The dual-latent question generator and its per-batch loss computation."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import torch
import torch.nn as nn

from .corpus import Batch
from .encoders import AnswerEncoder, CategoryEncoder, ImageEncoder
from .errors import ConfigError, DataError
from .generator import DEFAULT_MAX_LEN, QuestionDecoder, sample_questions
from .latent import (GaussianParams, LatentHead, LatentSample, kl_between,
                     kl_to_standard_normal, reparameterize)
from .objective import (LOSS_TERMS, LossBreakdown, LossWeights, ReconstructionHeads, get_variant,
                        reconstruction_error, total_loss)


@dataclass(frozen=True)
class ModelDims:
    feature_dim: int
    vocab_size: int
    num_categories: int
    hidden_dim: int = 64
    latent_dim: int = 16

    def to_dict(self) -> dict:
        return asdict(self)


class VQGModel(nn.Module):
    """Encoders, latent heads, reconstruction heads and decoder for one variant.

    Only the modules a variant uses are instantiated.  Auxiliary losses
    (reconstruction, t-space KL, priors) see detached encoder outputs, so the
    encoders learn from the question likelihood alone.
    """

    def __init__(self, dims: ModelDims, variant="OURS", lt_updates_z: bool = True):
        super().__init__()
        self.dims = dims
        self.variant = get_variant(variant)
        self.lt_updates_z = lt_updates_z
        v, H, Z = self.variant, dims.hidden_dim, dims.latent_dim
        self.image_encoder = ImageEncoder(dims.feature_dim, H)
        self.answer_encoder = AnswerEncoder(dims.vocab_size, H) if v.uses_answer_input else None
        self.category_encoder = CategoryEncoder(dims.num_categories, H) if v.uses_category_input else None
        self.z_head = LatentHead(H, Z) if "z" in v.spaces else None
        self.t_head = LatentHead(H, Z) if "t" in v.spaces else None
        self.recon = (ReconstructionHeads(Z, H, image=v.recon_image, answer=v.recon_answer)
                      if (v.recon_image or v.recon_answer) else None)
        self.decoder = QuestionDecoder(dims.vocab_size, H, Z)

    def parameter_groups(self) -> dict:
        groups = {}
        for name in ("image_encoder", "answer_encoder", "category_encoder", "z_head", "t_head",
                     "decoder"):
            mod = getattr(self, name)
            if mod is not None:
                groups[name] = list(mod.parameters())
        if self.recon is not None:
            if self.recon.image is not None:
                groups["recon_image"] = list(self.recon.image.parameters())
            if self.recon.answer is not None:
                groups["recon_answer"] = list(self.recon.answer.parameters())
        return groups

    # -- encoding -------------------------------------------------------------

    def encode(self, batch: Batch) -> dict:
        h = {"i": self.image_encoder(batch.features)}
        if self.answer_encoder is not None:
            h["a"] = self.answer_encoder(batch.answer, batch.answer_lengths)
        if self.category_encoder is not None:
            h["c"] = self.category_encoder(batch.category_onehot)
        return h

    def posterior(self, batch: Batch, space: str, h: Optional[dict] = None) -> GaussianParams:
        if space not in self.variant.spaces:
            raise ConfigError(f"variant {self.variant.name} has no {space}-space")
        h = self.encode(batch) if h is None else h
        if space == "z":
            return self.z_head(h["i"], h["a"])
        return self.t_head(h["i"], h["c"])

    # -- training loss --------------------------------------------------------

    def compute_losses(self, batch: Batch, weights: LossWeights,
                       eps: Optional[torch.Tensor] = None,
                       generator: Optional[torch.Generator] = None) -> LossBreakdown:
        v = self.variant
        if v.uses_answer_input and batch.answer.numel() == 0:
            raise DataError(f"variant {v.name} requires answers")
        h = self.encode(batch)
        space = v.decode_space
        head = self.z_head if space == "z" else self.t_head
        cond = h["a"] if space == "z" else h["c"]

        post = head(h["i"], cond)
        if v.variational:
            if eps is None:
                eps = torch.randn(post.mu.shape, generator=generator, dtype=post.mu.dtype)
            latent = reparameterize(post, eps).value
        else:
            latent = post.mu
        zero = torch.zeros((), dtype=latent.dtype)
        parts = dict(L_MLE=self.decoder.mle_loss(latent, batch.question), L_i=zero, L_a=zero,
                     L_t=zero, L_prior_z=zero, L_prior_t=zero)

        # same values as `post`, but gradients stop at the head's inputs
        h_i, cond_d = h["i"].detach(), cond.detach()
        aux = head(h_i, cond_d)
        aux_latent = reparameterize(aux, eps).value if v.variational else aux.mu
        if self.recon is not None:
            h_i_hat, h_a_hat = self.recon(aux_latent)
            if v.recon_image:
                parts["L_i"] = reconstruction_error(h_i, h_i_hat)
            if v.recon_answer:
                parts["L_a"] = reconstruction_error(h["a"], h_a_hat)
        if v.variational:
            parts["L_prior_z"] = kl_to_standard_normal(aux).mean()
        if v.has_t_space:
            t_post = self.t_head(h_i, h["c"].detach())
            z_post = aux if self.lt_updates_z else aux.detach()
            parts["L_t"] = kl_between(z_post, t_post).mean()
            parts["L_prior_t"] = kl_to_standard_normal(t_post).mean()
        return total_loss(LossBreakdown(**parts), weights, v)

    # -- inference ------------------------------------------------------------

    @torch.no_grad()
    def decode_mean(self, batch: Batch, space: Optional[str] = None,
                    max_len: int = DEFAULT_MAX_LEN) -> list:
        space = space or self.variant.inference_space
        return self.decoder.decode_greedy(self.posterior(batch, space).mu, max_len)

    @torch.no_grad()
    def sample(self, batch: Batch, n: int, seed: int, space: Optional[str] = None,
               max_len: int = DEFAULT_MAX_LEN, temperature: float = 1.0) -> list:
        """``n`` sampled questions per batch row; seeds are derived per row."""
        space = space or self.variant.inference_space
        post = self.posterior(batch, space)
        if not self.variant.variational:
            post = GaussianParams(post.mu, torch.full_like(post.mu, -8.0))
        return [sample_questions(self.decoder, post[i], n, seed + i, max_len, temperature)
                for i in range(len(batch))]


def build_model(dims: ModelDims, variant="OURS", seed: int = 0, lt_updates_z: bool = True,
                dtype=torch.float32) -> VQGModel:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = VQGModel(dims, variant, lt_updates_z)
    return model.to(dtype)


def group_grad_norms(model: VQGModel) -> dict:
    """L2 norm of the current ``.grad`` per parameter group (missing grads count as 0)."""
    out = {}
    for name, params in model.parameter_groups().items():
        sq = sum(float((p.grad ** 2).sum()) for p in params if p.grad is not None)
        out[name] = sq ** 0.5
    return out


def term_gradient_norms(model: VQGModel, batch: Batch, weights: LossWeights,
                        eps: Optional[torch.Tensor] = None, seed: int = 0) -> dict:
    """Backpropagate each loss term on its own and report per-group gradient norms.

    Inactive terms are constants, so their rows are all zeros.
    """
    if eps is None and model.variant.variational:
        g = torch.Generator()
        g.manual_seed(seed)
        eps = torch.randn(len(batch), model.dims.latent_dim, generator=g,
                          dtype=next(model.parameters()).dtype)
    out = {}
    for term in LOSS_TERMS:
        model.zero_grad(set_to_none=True)
        loss = getattr(model.compute_losses(batch, weights, eps=eps), term)
        if loss.requires_grad:
            loss.backward()
        out[term] = group_grad_norms(model)
    model.zero_grad(set_to_none=True)
    return out
