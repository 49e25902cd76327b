"""Encoders producing the dense vectors h_i, h_a and h_c."""

from __future__ import annotations

import torch
import torch.nn as nn

from .corpus import PAD
from .errors import ShapeError


class ImageEncoder(nn.Module):
    """Trainable two-layer tanh adapter over frozen scene features."""

    def __init__(self, feature_dim: int, hidden_dim: int):
        super().__init__()
        self.feature_dim = feature_dim
        self.fc1 = nn.Linear(feature_dim, hidden_dim)
        self.fc2 = nn.Linear(hidden_dim, hidden_dim)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if features.shape[-1] != self.feature_dim:
            raise ShapeError(f"expected {self.feature_dim} features, got {features.shape[-1]}")
        return torch.tanh(self.fc2(torch.tanh(self.fc1(features))))

    def lipschitz_bound(self) -> float:
        # tanh is 1-Lipschitz, so the product of spectral norms bounds the map
        with torch.no_grad():
            return float(torch.linalg.matrix_norm(self.fc1.weight, ord=2)
                         * torch.linalg.matrix_norm(self.fc2.weight, ord=2))


class AnswerEncoder(nn.Module):
    """Single-layer LSTM over answer tokens; h_a is the state at the last real token."""

    def __init__(self, vocab_size: int, hidden_dim: int):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, hidden_dim, padding_idx=PAD)
        self.lstm = nn.LSTM(hidden_dim, hidden_dim, batch_first=True)

    def forward(self, tokens: torch.Tensor, lengths: torch.Tensor = None) -> torch.Tensor:
        if tokens.dim() == 1:
            return self.forward(tokens.unsqueeze(0), lengths).squeeze(0)
        if tokens.shape[1] == 0:
            raise ShapeError("cannot encode an empty answer")
        if lengths is None:
            lengths = (tokens != PAD).sum(dim=1)
        if (lengths < 1).any():
            raise ShapeError("cannot encode an empty answer")
        out, _ = self.lstm(self.embed(tokens))
        # the LSTM is causal, so positions past the true length never feed back
        idx = (lengths - 1).view(-1, 1, 1).expand(-1, 1, out.shape[-1])
        return out.gather(1, idx).squeeze(1)


class CategoryEncoder(nn.Module):
    """Linear map of a one-hot category; returns the matching embedding row."""

    def __init__(self, num_categories: int, hidden_dim: int):
        super().__init__()
        self.num_categories = num_categories
        self.proj = nn.Linear(num_categories, hidden_dim, bias=False)

    def forward(self, one_hot: torch.Tensor) -> torch.Tensor:
        if one_hot.shape[-1] != self.num_categories:
            raise ShapeError(f"expected {self.num_categories} categories, got {one_hot.shape[-1]}")
        binary = (one_hot == 0) | (one_hot == 1)
        if not bool(binary.all()) or not bool((one_hot.sum(-1) == 1).all()):
            raise ValueError("category input must be one-hot")
        return self.proj(one_hot)

    @property
    def table(self) -> torch.Tensor:
        """Embedding matrix with one row per category."""
        return self.proj.weight.t()
