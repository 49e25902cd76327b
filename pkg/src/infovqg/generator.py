"""LSTM question decoder conditioned on a latent sample through its initial state."""

from __future__ import annotations

from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .corpus import BOS, EOS, PAD
from .errors import DataError, ShapeError
from .latent import GaussianParams, LatentSample, reparameterize, standard_normal

DEFAULT_MAX_LEN = 20


def _value(latent) -> torch.Tensor:
    return latent.value if isinstance(latent, LatentSample) else latent


class QuestionDecoder(nn.Module):

    def __init__(self, vocab_size: int, hidden_dim: int, latent_dim: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.latent_dim = latent_dim
        self.embed = nn.Embedding(vocab_size, hidden_dim, padding_idx=PAD)
        self.init_h = nn.Linear(latent_dim, hidden_dim)
        self.init_c = nn.Linear(latent_dim, hidden_dim)
        self.lstm = nn.LSTM(hidden_dim, hidden_dim, batch_first=True)
        self.out = nn.Linear(hidden_dim, vocab_size)

    def initial_state(self, z: torch.Tensor) -> tuple:
        if z.shape[-1] != self.latent_dim:
            raise ShapeError(f"decoder expects a {self.latent_dim}-dim latent, got {z.shape[-1]}")
        return self.init_h(z).unsqueeze(0), self.init_c(z).unsqueeze(0)

    def logits(self, latent, question: torch.Tensor) -> torch.Tensor:
        """Teacher-forced logits for predicting ``question[:, 1:]``."""
        z = _value(latent)
        if question.dim() == 1:
            question, z = question.unsqueeze(0), z.unsqueeze(0)
        if int(question.max()) >= self.vocab_size or int(question.min()) < 0:
            raise DataError(f"token id outside vocabulary of size {self.vocab_size}")
        out, _ = self.lstm(self.embed(question[:, :-1]), self.initial_state(z))
        return self.out(out)

    def mle_loss(self, latent, question: torch.Tensor) -> torch.Tensor:
        """Mean negative log-likelihood per non-PAD target token."""
        if question.dim() == 1:
            question = question.unsqueeze(0)
        logits = self.logits(latent, question)
        targets = question[:, 1:]
        return F.cross_entropy(logits.reshape(-1, self.vocab_size), targets.reshape(-1),
                               ignore_index=PAD, reduction="mean")

    @torch.no_grad()
    def step_distributions(self, latent, question: torch.Tensor) -> torch.Tensor:
        return F.softmax(self.logits(latent, question), dim=-1)

    @torch.no_grad()
    def decode_greedy(self, latent, max_len: int = DEFAULT_MAX_LEN) -> list:
        """Argmax decoding; returns one token-id list per row (no BOS/EOS)."""
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        z = _value(latent)
        single = z.dim() == 1
        if single:
            z = z.unsqueeze(0)
        state = self.initial_state(z)
        tok = torch.full((z.shape[0], 1), BOS, dtype=torch.long)
        done = torch.zeros(z.shape[0], dtype=torch.bool)
        seqs = [[] for _ in range(z.shape[0])]
        for _ in range(max_len):
            out, state = self.lstm(self.embed(tok), state)
            tok = self.out(out).argmax(-1)
            for i, t in enumerate(tok[:, 0].tolist()):
                if done[i]:
                    continue
                if t == EOS:
                    done[i] = True
                else:
                    seqs[i].append(t)
            if bool(done.all()):
                break
        return seqs[0] if single else seqs


def mle_loss(decoder: QuestionDecoder, latent, question: torch.Tensor) -> torch.Tensor:
    return decoder.mle_loss(latent, question)


def decode_greedy(decoder: QuestionDecoder, latent, max_len: int = DEFAULT_MAX_LEN) -> list:
    return decoder.decode_greedy(latent, max_len)


def sample_questions(decoder: QuestionDecoder, params: GaussianParams, n: int, seed: int,
                     max_len: int = DEFAULT_MAX_LEN, temperature: float = 1.0) -> list:
    """Draw ``n`` latents from a single Gaussian and greedily decode each.

    ``temperature`` scales the unit noise; 1.0 samples the posterior as is.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if params.mu.dim() != 1:
        raise ShapeError("sample_questions expects the parameters of a single Gaussian")
    eps = temperature * standard_normal((n, params.dim), seed=seed, dtype=params.mu.dtype)
    stacked = GaussianParams(params.mu.expand(n, -1), params.log_sigma.expand(n, -1))
    return decoder.decode_greedy(reparameterize(stacked, eps), max_len)
