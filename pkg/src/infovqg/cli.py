"""Command-line entry point: gen-data, train, generate, evaluate, probe, report.

Exit codes: 0 success, 2 bad arguments or data, 3 I/O failure or missing
checkpoint, 4 training aborted on a non-finite loss.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .corpus import build_vocabulary, read_jsonl, to_examples
from .errors import (ConfigError, DataError, FormatError, InfoVQGError, NonFiniteLossError,
                     SchemaError, ShapeError)
from .evalsuite.probe import ProbeConfig, extract_codes
from .evalsuite.relevance import generate_for_records
from .evalsuite.report import (DIVERSITY_COLUMNS, TABLE_COLUMNS, diversity_rows,
                               evaluate_checkpoint, merge_reports, probe_space, table_rows,
                               write_csv)
from .objective import VARIANTS, LossWeights
from .synthworld import WorldConfig, emit_dataset
from .trainer import (TrainConfig, load_checkpoint, save_checkpoint, train,
                      write_history_csv)

log = logging.getLogger("infovqg")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NAN = 0, 2, 3, 4
SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
DATA_ENV = "VQG_DATA_DIR"


class UsageError(InfoVQGError):
    pass


# -- experiment configuration ----------------------------------------------------

_WORLD_KEYS = {f.name for f in fields(WorldConfig)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"feature_dim", "vocab_size",
                                                        "num_categories"}
_PROBE_KEYS = {"probe_" + f.name for f in fields(ProbeConfig)}
_PATH_KEYS = {"data", "checkpoints", "reports"}


@dataclass
class ExperimentConfig:
    """Flat union of world, training and probe settings plus paths.

    Probe keys carry a ``probe_`` prefix because ``epochs``, ``lr`` and ``seed``
    would otherwise collide with the training keys.
    """
    world: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    probe: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    variants: list = field(default_factory=list)

    @classmethod
    def from_flat(cls, d: dict) -> "ExperimentConfig":
        cfg = cls()
        for key, value in d.items():
            if key in _WORLD_KEYS:
                cfg.world[key] = value
            elif key in _TRAIN_KEYS:
                cfg.train[key] = value
            elif key in _PROBE_KEYS:
                cfg.probe[key[len("probe_"):]] = tuple(value) if key == "probe_hidden" else value
            elif key in _PATH_KEYS:
                cfg.paths[key] = value
            elif key == "variants":
                cfg.variants = list(value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return cfg

    def world_config(self) -> WorldConfig:
        w = WorldConfig.from_dict(self.world)
        w.validate()
        return w

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict(dict(self.train))

    def probe_config(self) -> ProbeConfig:
        return ProbeConfig(**self.probe)

    def to_dict(self) -> dict:
        return {"world": self.world_config().to_dict(), "train": self.train_config().to_dict(),
                "probe": {k: list(v) if isinstance(v, tuple) else v
                          for k, v in vars(self.probe_config()).items()},
                "paths": dict(self.paths), "variants": list(self.variants)}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def read_config_file(path) -> dict:
    """Read a JSON object or flat ``key = value`` lines (values parsed as JSON when possible)."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return data
    data = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        data[key] = _parse_value(value)
    return data


# flag name -> config key, for flags that override config values
_OVERRIDES = {"seed": "seed", "variant": "variant", "epochs": "epochs", "batch_size": "batch_size",
              "lr": "lr0", "hidden": "hidden_dim", "latent": "latent_dim"}


def experiment_config(args) -> ExperimentConfig:
    """Defaults, then the config file, then explicit CLI flags."""
    flat = read_config_file(args.config) if getattr(args, "config", None) else {}
    for flag, key in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            flat[key] = value
    if getattr(args, "data", None) is not None:
        flat["data"] = args.data
    cfg = ExperimentConfig.from_flat(flat)
    cfg.paths.setdefault("data", os.environ.get(DATA_ENV, "data"))
    return cfg


# -- helpers -------------------------------------------------------------------------

def _split_path(data, split: str) -> Path:
    """A split file inside a data directory, or ``data`` itself when it is a file."""
    p = Path(data)
    if p.is_dir():
        return p / f"{split}.jsonl"
    if p.suffix == ".jsonl":
        return p
    return p / f"{split}.jsonl"


def _read_split(data, split: str, limit: Optional[int] = None) -> list:
    path = _split_path(data, split)
    try:
        records = read_jsonl(path)
    except FileNotFoundError:
        raise OSError(f"data file not found: {path}") from None
    if not records:
        raise DataError(f"{path} has no records")
    return records[:limit] if limit else records


def _load_ckpt(path):
    if path is None:
        raise UsageError("--checkpoint is required")
    if not Path(path).is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sidecar(path, cfg: dict) -> None:
    """Echo the effective configuration next to an artifact that has no room for it."""
    p = Path(path)
    _write_json(p.with_name(p.name + ".config.json"), cfg)


def _split_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def _check_space(ckpt, space: Optional[str]) -> str:
    space = space or ckpt.variant.inference_space
    if space not in ckpt.variant.spaces:
        raise ConfigError(f"variant {ckpt.variant.name} has no {space}-space "
                          f"(available: {', '.join(ckpt.variant.spaces)})")
    return space


# -- commands ------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    if args.out is None:
        raise UsageError("--out is required")
    cfg = experiment_config(args)
    world = cfg.world_config()
    seed = cfg.train.get("seed", 0)
    if args.n < 3:
        raise UsageError("--n must be at least 3 (one record per split)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sizes = [int(args.n * f) for f in SPLIT_FRACTIONS[1:]]
    sizes = [args.n - sum(sizes)] + sizes
    splits = {}
    for k, (split, n) in enumerate(zip(SPLITS, sizes)):
        manifest = emit_dataset(max(n, 1), world, _split_seed(seed, k), out / f"{split}.jsonl")
        splits[split] = manifest.to_dict()
    _write_json(out / "manifest.json", {"n": args.n, "seed": seed,
                                        "config_hash": world.config_hash(),
                                        "splits": splits, "config": cfg.to_dict()})
    log.info("wrote %s", ", ".join(f"{s}={m['n']}" for s, m in splits.items()))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = experiment_config(args)
    world = cfg.world_config()
    tcfg = cfg.train_config()
    data = cfg.paths["data"]
    train_records = _read_split(data, "train", args.limit)
    val_path = _split_path(data, "val")
    # a single JSONL file as --data has no separate validation split
    val_records = read_jsonl(val_path) if Path(data).is_dir() and val_path.exists() else []
    vocab = build_vocabulary(train_records + val_records)
    categories = list(world.categories)
    train_set = to_examples(train_records, vocab, categories)
    val_set = to_examples(val_records, vocab, categories)

    out = Path(args.out or Path(cfg.paths.get("checkpoints", "checkpoints")) / f"{tcfg.variant}.ckpt")
    out.parent.mkdir(parents=True, exist_ok=True)
    ckpt = train(tcfg, train_set, val_set, vocab, categories)
    save_checkpoint(ckpt, out)
    history = out.with_name(out.stem + ".history.csv")
    write_history_csv(ckpt.history, history)
    effective = cfg.to_dict()
    effective["train"] = ckpt.config.to_dict()
    _sidecar(history, effective)
    log.info("saved %s (%d epochs)", out, ckpt.epoch + 1)
    return EXIT_OK


def _generation_records(records: list, space: str, category: Optional[str]) -> list:
    """Copies of ``records`` with the requested category and placeholder text where needed."""
    out = []
    for r in records:
        r = dict(r)
        if category is not None:
            r["category"] = category
        if r.get("question") is None:
            r["question"] = "?"     # never read when decoding
        if r.get("answer") is None:
            if space == "z":
                raise DataError(f"record {r.get('id')!r} has no answer; z-space needs answers")
            r["answer"] = "<unk>"
        out.append(r)
    return out


def cmd_generate(args) -> int:
    cfg = experiment_config(args)
    ckpt = _load_ckpt(args.checkpoint)
    space = _check_space(ckpt, args.space)
    if args.category is not None and args.category not in ckpt.categories:
        raise ConfigError(f"unknown category {args.category!r}; expected one of {ckpt.categories}")
    records = _generation_records(_read_split(cfg.paths["data"], args.split, args.limit),
                                  space, args.category)
    seed = cfg.train.get("seed", 0)
    questions = generate_for_records(ckpt.model(), ckpt.vocab, records, ckpt.categories,
                                     space, args.n, seed)
    out = Path(args.out or "generated.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w") as f:
        for r, qs in zip(records, questions):
            f.write(json.dumps({"id": r.get("id", ""), "category": r["category"],
                                "questions": qs}, separators=(",", ":")) + "\n")
    _sidecar(out, {**cfg.to_dict(), "checkpoint": str(args.checkpoint), "space": space,
                   "n": args.n, "category": args.category})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = experiment_config(args)
    ckpt = _load_ckpt(args.checkpoint)
    spaces = [_check_space(ckpt, args.space)] if args.space else None
    test = _read_split(cfg.paths["data"], args.split, args.limit)
    training_questions = [r["question"] for r in _read_split(cfg.paths["data"], "train")]
    rep = evaluate_checkpoint(ckpt, test, training_questions, cfg.world_config(), spaces,
                              n_draws=args.n, seed=cfg.train.get("seed", 0))
    rep["config"] = {**cfg.to_dict(), "checkpoint": str(args.checkpoint), "n": args.n}
    _write_json(args.out or f"{ckpt.variant.name}.eval.json", rep)
    return EXIT_OK


def cmd_probe(args) -> int:
    cfg = experiment_config(args)
    ckpt = _load_ckpt(args.checkpoint)
    spaces = [_check_space(ckpt, args.space)] if args.space else list(ckpt.variant.spaces)
    train_records = _read_split(cfg.paths["data"], "train", args.limit)
    test_records = _read_split(cfg.paths["data"], args.split, args.limit)
    pcfg = cfg.probe_config()
    rep = {"variant": ckpt.variant.name,
           "spaces": {s: probe_space(ckpt, train_records, test_records, s, pcfg) for s in spaces},
           "config": {**cfg.to_dict(), "checkpoint": str(args.checkpoint)}}
    _write_json(args.out or f"{ckpt.variant.name}.probe.json", rep)
    return EXIT_OK


def project_2d(codes: np.ndarray) -> np.ndarray:
    """Project codes onto their top two principal directions."""
    x = np.asarray(codes, dtype=np.float64)
    x = x - x.mean(0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    basis = vt[:2].T
    if basis.shape[1] < 2:
        basis = np.pad(basis, ((0, 0), (0, 2 - basis.shape[1])))
    return x @ basis


def scatter_plot(codes: np.ndarray, labels, path, title: str = "") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xy = project_2d(codes)
    fig, ax = plt.subplots(figsize=(5, 5))
    for label in sorted(set(labels)):
        m = np.asarray(labels) == label
        ax.scatter(xy[m, 0], xy[m, 1], s=6, label=str(label))
    ax.set_title(title)
    ax.legend(markerscale=2, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_report(args) -> int:
    if not args.inputs:
        raise UsageError("report needs at least one evaluation or probe JSON")
    cfg = experiment_config(args)
    reports = merge_reports(args.inputs)
    out = Path(args.out or cfg.paths.get("reports", "reports"))
    out.mkdir(parents=True, exist_ok=True)
    write_csv(table_rows(reports), TABLE_COLUMNS, out / "table.csv")
    write_csv(diversity_rows(reports), DIVERSITY_COLUMNS, out / "diversity.csv")
    effective = {**cfg.to_dict(), "inputs": [str(p) for p in args.inputs]}
    _sidecar(out / "table.csv", effective)
    _sidecar(out / "diversity.csv", effective)
    if args.plot:
        ckpt = _load_ckpt(args.checkpoint)
        space = _check_space(ckpt, args.space)
        records = _read_split(cfg.paths["data"], "test", args.limit)
        codes, cats, _ = extract_codes(ckpt, to_examples(records, ckpt.vocab, ckpt.categories),
                                       space)
        scatter_plot(codes, [ckpt.categories[c] for c in cats], args.plot,
                     f"{ckpt.variant.name} {space}-space")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON object or key = value file")
    common.add_argument("--seed", type=int)
    common.add_argument("--data", help=f"data directory or JSONL file (default ${DATA_ENV} or ./data)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="infovqg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="write train/val/test JSONL splits")
    g.add_argument("--n", type=int, default=5000, help="total records over all splits")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="train one variant")
    t.add_argument("--variant", help=f"one of {', '.join(VARIANTS)}")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--hidden", type=int)
    t.add_argument("--latent", type=int)
    t.add_argument("--limit", type=int, help="use only the first N training records")
    t.set_defaults(func=cmd_train)

    def with_ckpt(parser, space_default_help):
        parser.add_argument("--checkpoint", required=True)
        parser.add_argument("--space", choices=("z", "t"), help=space_default_help)
        parser.add_argument("--split", default="test")
        parser.add_argument("--limit", type=int)

    gen = sub.add_parser("generate", parents=[common], help="decode questions from a checkpoint")
    with_ckpt(gen, "latent space (default: the variant's inference space)")
    gen.add_argument("--category", help="request this category for every record")
    gen.add_argument("--n", type=int, default=1, help="1 = mean decode, N > 1 = N samples")
    gen.set_defaults(func=cmd_generate)

    ev = sub.add_parser("evaluate", parents=[common], help="language, relevance and diversity")
    with_ckpt(ev, "evaluate one space (default: all)")
    ev.add_argument("--n", type=int, default=20, help="sampled draws per record for diversity")
    ev.set_defaults(func=cmd_evaluate)

    pr = sub.add_parser("probe", parents=[common], help="latent-code MLP probes")
    with_ckpt(pr, "probe one space (default: all)")
    pr.set_defaults(func=cmd_probe)

    rp = sub.add_parser("report", parents=[common], help="merge JSON reports into CSV tables")
    rp.add_argument("inputs", nargs="*")
    rp.add_argument("--plot", help="write a 2-D scatter of latent codes to this image path")
    rp.add_argument("--checkpoint", help="checkpoint whose codes are plotted")
    rp.add_argument("--space", choices=("z", "t"))
    rp.add_argument("--limit", type=int, default=1000)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NonFiniteLossError as e:
        print(f"error: training aborted: {e}", file=sys.stderr)
        return EXIT_NAN
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DataError, SchemaError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
