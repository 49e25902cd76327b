import numpy as np
import pytest
import torch

from infovqg import synthworld as sw
from infovqg.corpus import build_vocabulary, collate, to_examples
from infovqg.model import ModelDims, build_model


@pytest.fixture(scope="session")
def world():
    return sw.WorldConfig()


@pytest.fixture(scope="session")
def records_600(world):
    return [sw.make_record(world, 1, i) for i in range(600)]


@pytest.fixture(scope="session")
def vocab_600(records_600):
    return build_vocabulary(records_600)


@pytest.fixture(scope="session")
def examples_600(records_600, vocab_600, world):
    return to_examples(records_600, vocab_600, world.categories)


def micro_setup(variant, dtype=torch.float64, batch=2, hidden=4, latent=4, vocab=8,
                features=5, categories=3, seed=0):
    """A tiny model plus one hand-built batch whose token ids stay below ``vocab``."""
    from infovqg.corpus import QAExample

    rng = np.random.default_rng(seed)
    examples = []
    for b in range(batch):
        q = [1] + rng.integers(4, vocab, size=3 + b).tolist() + [2]
        a = [1] + rng.integers(4, vocab, size=1 + b).tolist() + [2]
        examples.append(QAExample(rng.normal(size=features).astype(np.float32), q, a,
                                  int(rng.integers(categories))))
    model = build_model(ModelDims(features, vocab, categories, hidden, latent), variant,
                        seed=seed, dtype=dtype)
    return model, collate(examples, categories).to(dtype)


# criterion number -> (passed, detail), filled by the acceptance suite
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
