"""Latent-code extraction and MLP probes measuring retained category/answer information."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from ..corpus import Vocabulary, collate
from ..errors import ConfigError, DataError, DegenerateDataError


@dataclass(frozen=True)
class ProbeConfig:
    hidden: tuple = (64, 64)
    epochs: int = 300
    lr: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if len(self.hidden) != 2:
            raise ConfigError("the probe has exactly two hidden layers and one output layer")


@dataclass(frozen=True)
class ProbeResult:
    accuracy: float     # percent on the test codes
    chance: float       # 100 / number of classes
    num_classes: int


def _unwrap(source):
    """Accept a checkpoint or a bare model; return (model, vocab-or-None)."""
    if hasattr(source, "state") and hasattr(source, "model"):
        return source.model(), source.vocab
    return source, None


@torch.no_grad()
def extract_codes(source, examples: Sequence, space: str, batch_size: int = 256) -> tuple:
    """Posterior means for ``examples`` in the given space.

    Returns ``(codes, category_labels, answer_labels)`` with codes of shape N x Z.
    """
    model, vocab = _unwrap(source)
    if space not in ("z", "t"):
        raise ConfigError(f"unknown space {space!r}")
    if space not in model.variant.spaces:
        raise ConfigError(f"variant {model.variant.name} has no {space}-space")
    if not examples:
        raise DataError("no examples to embed")
    if space == "z" and any(e.answer is None for e in examples):
        raise DataError("z-space codes require answers")
    model.eval()
    codes = []
    for start in range(0, len(examples), batch_size):
        batch = collate(examples[start:start + batch_size], model.dims.num_categories)
        codes.append(model.posterior(batch, space).mu.double().numpy())
    cats = np.array([e.category for e in examples])
    if isinstance(vocab, Vocabulary):
        answers = np.array([vocab.decode(e.answer) for e in examples])
    else:
        answers = np.array([" ".join(map(str, e.answer)) for e in examples])
    return np.concatenate(codes), cats, answers


class _MLP(nn.Module):
    def __init__(self, in_dim, hidden, out_dim):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden[0]), nn.ReLU(),
            nn.Linear(hidden[0], hidden[1]), nn.ReLU(),
            nn.Linear(hidden[1], out_dim),
        )

    def forward(self, x):
        return self.net(x)


def encode_labels(train_labels, test_labels) -> tuple:
    """Map arbitrary labels to contiguous ids; unseen test labels get id -1."""
    classes = sorted(set(np.asarray(train_labels).tolist()))
    index = {c: i for i, c in enumerate(classes)}
    y_tr = np.array([index[c] for c in np.asarray(train_labels).tolist()])
    y_te = np.array([index.get(c, -1) for c in np.asarray(test_labels).tolist()])
    return y_tr, y_te, len(classes)


def probe_accuracy(train_codes, train_labels, test_codes, test_labels,
                   config: ProbeConfig = ProbeConfig(), num_classes: int = None) -> ProbeResult:
    """Fit a three-layer MLP on train codes and report test accuracy in percent."""
    y_tr, y_te, seen = encode_labels(train_labels, test_labels)
    if seen < 2:
        raise DegenerateDataError("probe training labels contain a single class")
    num_classes = max(seen, num_classes or 0)
    x_tr = np.asarray(train_codes, dtype=np.float64)
    x_te = np.asarray(test_codes, dtype=np.float64)
    mean, std = x_tr.mean(0), x_tr.std(0) + 1e-8
    x_tr = torch.as_tensor((x_tr - mean) / std, dtype=torch.float32)
    x_te = torch.as_tensor((x_te - mean) / std, dtype=torch.float32)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        mlp = _MLP(x_tr.shape[1], config.hidden, seen)
    opt = torch.optim.Adam(mlp.parameters(), lr=config.lr)
    target = torch.as_tensor(y_tr)
    for _ in range(config.epochs):
        opt.zero_grad()
        nn.functional.cross_entropy(mlp(x_tr), target).backward()
        opt.step()
    with torch.no_grad():
        pred = mlp(x_te).argmax(-1).numpy()
    acc = 100.0 * float(np.mean(pred == y_te))
    return ProbeResult(acc, 100.0 / num_classes, num_classes)
