"""Deterministic training loop, learning-rate schedule, checkpoints and loss history."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import struct
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .corpus import QAExample, Vocabulary, make_batches
from .errors import ConfigError, DataError, FormatError, NonFiniteLossError
from .model import ModelDims, VQGModel, build_model, term_gradient_norms
from .objective import LOSS_TERMS, LossWeights, active_terms, get_variant, gradient_routes

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"INFOVQG\x00"
CHECKPOINT_VERSION = 1
HISTORY_COLUMNS = ("epoch", "split") + LOSS_TERMS + ("total", "lr")


@dataclass
class TrainConfig:
    variant: str = "OURS"
    hidden_dim: int = 64
    latent_dim: int = 16
    feature_dim: int = 0       # filled from data when 0
    vocab_size: int = 0        # filled from the vocabulary when 0
    num_categories: int = 0    # filled from the category list when 0
    weights: LossWeights = field(default_factory=LossWeights)
    lr0: float = 0.001
    lr_decay_factor: float = 0.5
    lr_decay_every: int = 4
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    optimizer: str = "adam"
    clip_norm: Optional[float] = 5.0
    lt_updates_z: bool = True
    max_steps: Optional[int] = None
    probe_routing: bool = True

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        get_variant(self.variant)
        if not self.lr0 > 0:
            raise ConfigError("lr0 must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0 < self.lr_decay_factor <= 1:
            raise ConfigError("lr_decay_factor must be in (0, 1]")
        if self.lr_decay_every < 1:
            raise ConfigError("lr_decay_every must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    @property
    def dims(self) -> ModelDims:
        return ModelDims(self.feature_dim, self.vocab_size, self.num_categories,
                         self.hidden_dim, self.latent_dim)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = self.weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.lr0 * config.lr_decay_factor ** (epoch // config.lr_decay_every)


@dataclass
class Checkpoint:
    state: dict
    vocab: Vocabulary
    config: TrainConfig
    categories: list
    epoch: int
    history: list = field(default_factory=list)

    @property
    def variant(self):
        return get_variant(self.config.variant)

    def model(self) -> VQGModel:
        m = VQGModel(self.config.dims, self.config.variant, self.config.lt_updates_z)
        m.load_state_dict(self.state)
        m.eval()
        return m


def _finite_check(parts, step):
    for name in LOSS_TERMS:
        if not math.isfinite(float(getattr(parts, name).detach())):
            raise NonFiniteLossError(name, step)


def _check_routing(model: VQGModel, norms: dict) -> None:
    routes = gradient_routes(model.variant, model.lt_updates_z)
    on = active_terms(model.variant)
    for term, groups in norms.items():
        allowed = routes.receives(term) if on[term] else set()
        for group, norm in groups.items():
            if group not in allowed and norm != 0.0:
                raise RuntimeError(f"{term} leaked gradient into {group} (norm {norm:.3g})")


def _check_inputs(config: TrainConfig, examples: Sequence[QAExample], label: str) -> None:
    if not examples:
        raise DataError(f"{label} set is empty")
    v = get_variant(config.variant)
    for e in examples[:1]:
        if e.features.shape[-1] != config.feature_dim:
            raise DataError(f"{label} features have dim {e.features.shape[-1]}, "
                            f"expected {config.feature_dim}")
    if v.uses_category_input and any(not 0 <= e.category < config.num_categories for e in examples):
        raise DataError(f"{label} set has category indices outside [0, {config.num_categories})")


def _mean_rows(acc: dict, n: int) -> dict:
    return {k: v / n for k, v in acc.items()}


def evaluate_losses(model: VQGModel, examples: Sequence[QAExample], config: TrainConfig,
                    seed: int) -> dict:
    g = torch.Generator()
    g.manual_seed(seed)
    acc = {k: 0.0 for k in LOSS_TERMS + ("total",)}
    n = 0
    with torch.no_grad():
        for batch in make_batches(examples, config.batch_size, seed, config.num_categories,
                                  shuffle=False):
            parts = model.compute_losses(batch, config.weights, generator=g)
            for k, v in parts.as_floats().items():
                acc[k] += v * len(batch)
            n += len(batch)
    return _mean_rows(acc, n)


def train(config: TrainConfig, train_set: Sequence[QAExample], val_set: Sequence[QAExample],
          vocab: Optional[Vocabulary] = None, categories: Optional[Sequence[str]] = None,
          on_epoch: Optional[Callable[[int, dict], None]] = None) -> Checkpoint:
    """Optimize ``total_loss`` for the configured variant.

    Returns the final checkpoint; its history holds per-epoch means for the
    train and validation splits.
    """
    if not train_set:
        raise DataError("training set is empty")
    updates = {}
    if config.feature_dim == 0:
        updates["feature_dim"] = int(train_set[0].features.shape[-1])
    if config.vocab_size == 0:
        if vocab is None:
            raise ConfigError("vocab_size is unset and no vocabulary was given")
        updates["vocab_size"] = len(vocab)
    if config.num_categories == 0:
        if categories is None:
            raise ConfigError("num_categories is unset and no category list was given")
        updates["num_categories"] = len(categories)
    config = replace(config, **updates)
    _check_inputs(config, train_set, "training")
    if val_set:
        _check_inputs(config, val_set, "validation")

    model = build_model(config.dims, config.variant, seed=config.seed,
                        lt_updates_z=config.lt_updates_z)
    params = [p for p in model.parameters()]
    if config.optimizer == "adam":
        opt = torch.optim.Adam(params, lr=config.lr0)
    else:
        opt = torch.optim.SGD(params, lr=config.lr0)
    noise = torch.Generator()
    noise.manual_seed(config.seed)

    history = []
    step = 0
    epoch = 0
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config)
        for group in opt.param_groups:
            group["lr"] = lr
        model.train()
        acc = {k: 0.0 for k in LOSS_TERMS + ("total",)}
        seen = 0
        for bi, batch in enumerate(make_batches(train_set, config.batch_size, config.seed,
                                                config.num_categories, epoch=epoch)):
            if config.probe_routing and bi == 0:
                _check_routing(model, term_gradient_norms(model, batch, config.weights,
                                                          seed=config.seed + epoch))
            parts = model.compute_losses(batch, config.weights, generator=noise)
            _finite_check(parts, step)
            opt.zero_grad(set_to_none=True)
            parts.total.backward()
            if config.clip_norm is not None:
                torch.nn.utils.clip_grad_norm_(params, config.clip_norm)
            opt.step()
            step += 1
            for k, v in parts.as_floats().items():
                acc[k] += v * len(batch)
            seen += len(batch)
            if config.max_steps is not None and step >= config.max_steps:
                break
        rows = [{"epoch": epoch, "split": "train", **_mean_rows(acc, seen), "lr": lr}]
        if val_set:
            model.eval()
            rows.append({"epoch": epoch, "split": "val",
                         **evaluate_losses(model, val_set, config, seed=config.seed + 7919 * (epoch + 1)),
                         "lr": lr})
        history.extend(rows)
        log.info("epoch %d lr %.2e train L_MLE %.4f total %.4f", epoch, lr,
                 rows[0]["L_MLE"], rows[0]["total"])
        if on_epoch is not None:
            on_epoch(epoch, rows)
        if config.max_steps is not None and step >= config.max_steps:
            break

    model.eval()
    state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    if vocab is None:
        vocab = Vocabulary([])
    return Checkpoint(state, vocab, config, list(categories or []), epoch, history)


def write_history_csv(history: Sequence[dict], path) -> None:
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=HISTORY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: (repr(float(row[k])) if k not in ("epoch", "split") else row[k])
                        for k in HISTORY_COLUMNS})


# -- checkpoint archive ---------------------------------------------------------
#
# layout: magic (8 bytes) | header length (uint64 LE) | JSON header | tensor data
# tensor data is little-endian float32, laid out in header["tensors"] order.


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    blobs, manifest, offset = [], [], 0
    for name, tensor in ckpt.state.items():
        arr = tensor.detach().cpu().numpy().astype("<f4", copy=False)
        raw = arr.tobytes(order="C")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    data = b"".join(blobs)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": ckpt.config.to_dict(),
        "categories": list(ckpt.categories),
        "vocab": list(ckpt.vocab.id_to_token),
        "vocab_hash": ckpt.vocab.content_hash(),
        "epoch": ckpt.epoch,
        "history": ckpt.history,
        "tensors": manifest,
        "data_sha256": hashlib.sha256(data).hexdigest(),
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    _atomic_write(path, CHECKPOINT_MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + data)


def load_checkpoint(path, expected_vocab_hash: Optional[str] = None) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    if 16 + hlen > len(raw):
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16:16 + hlen])
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: corrupt header ({e})") from None
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported format version {header.get('format_version')!r}")
    data = raw[16 + hlen:]
    if hashlib.sha256(data).hexdigest() != header["data_sha256"]:
        raise FormatError(f"{path}: tensor data is truncated or corrupt")
    vocab = Vocabulary(header["vocab"])
    if vocab.content_hash() != header["vocab_hash"]:
        raise FormatError(f"{path}: vocabulary hash mismatch")
    if expected_vocab_hash is not None and expected_vocab_hash != header["vocab_hash"]:
        raise FormatError(f"{path}: checkpoint vocabulary differs from the expected one")
    state = {}
    for t in header["tensors"]:
        chunk = data[t["offset"]:t["offset"] + t["nbytes"]]
        arr = np.frombuffer(chunk, dtype="<f4").reshape(t["shape"]).astype(np.float32)
        state[t["name"]] = torch.from_numpy(arr.copy())
    config = TrainConfig.from_dict(header["config"])
    return Checkpoint(state, vocab, config, header["categories"], header["epoch"], header["history"])
