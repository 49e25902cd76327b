import math

import pytest
import torch

from infovqg.corpus import BOS, EOS, PAD
from infovqg.errors import DataError
from infovqg.generator import QuestionDecoder, decode_greedy, mle_loss, sample_questions
from infovqg.latent import GaussianParams


def uniform_decoder(v=9, h=4, z=3):
    dec = QuestionDecoder(v, h, z)
    torch.nn.init.zeros_(dec.out.weight)
    torch.nn.init.zeros_(dec.out.bias)
    return dec


def test_uniform_logits_give_log_v():
    dec = uniform_decoder()
    q = torch.tensor([[BOS, 5, 6, 7, EOS]])
    assert mle_loss(dec, torch.zeros(1, 3), q).item() == pytest.approx(math.log(9))


def test_trailing_pad_identical():
    torch.manual_seed(0)
    dec = QuestionDecoder(9, 4, 3)
    z = torch.randn(1, 3)
    a = dec.mle_loss(z, torch.tensor([[BOS, 5, 6, EOS]]))
    b = dec.mle_loss(z, torch.tensor([[BOS, 5, 6, EOS, PAD, PAD]]))
    assert torch.equal(a, b)


def test_out_of_range_token():
    with pytest.raises(DataError):
        QuestionDecoder(9, 4, 3).mle_loss(torch.zeros(1, 3), torch.tensor([[BOS, 12, EOS]]))


def test_mle_matches_manual_cross_entropy():
    torch.manual_seed(1)
    dec = QuestionDecoder(9, 4, 3)
    z = torch.randn(2, 3)
    q = torch.tensor([[BOS, 5, 6, EOS, PAD], [BOS, 4, 7, 8, EOS]])
    with torch.no_grad():
        logp = torch.log_softmax(dec.logits(z, q), -1)
    nll = [-logp[b, t, q[b, t + 1]] for b in range(2) for t in range(4) if q[b, t + 1] != PAD]
    with torch.no_grad():
        loss = dec.mle_loss(z, q).item()
    assert loss == pytest.approx(float(sum(nll) / len(nll)), rel=1e-6)


def overfit(steps=500):
    torch.manual_seed(0)
    dec = QuestionDecoder(12, 16, 4)
    z = torch.randn(1, 4)
    q = torch.tensor([[BOS, 5, 9, 4, 11, EOS]])
    opt = torch.optim.Adam(dec.parameters(), lr=0.01)
    losses = []
    for _ in range(steps):
        loss = dec.mle_loss(z, q)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    return dec, z, q, losses


def test_overfit_single_example():
    dec, z, q, losses = overfit()
    assert dec.mle_loss(z, q).item() < 0.1
    checkpoints = losses[::100] + [dec.mle_loss(z, q).item()]
    assert all(b <= a + 1e-3 for a, b in zip(checkpoints, checkpoints[1:]))
    assert decode_greedy(dec, z[0]) == q[0, 1:-1].tolist()


def test_greedy_deterministic_and_max_len():
    torch.manual_seed(2)
    dec = QuestionDecoder(9, 4, 3)
    z = torch.randn(3)
    assert dec.decode_greedy(z) == dec.decode_greedy(z)
    assert len(dec.decode_greedy(z, max_len=1)) <= 1
    with pytest.raises(ValueError):
        dec.decode_greedy(z, max_len=0)


def test_step_distributions_normalized():
    torch.manual_seed(3)
    dec = QuestionDecoder(9, 4, 3)
    p = dec.step_distributions(torch.randn(2, 3), torch.tensor([[BOS, 5, 6, EOS]] * 2))
    assert torch.allclose(p.sum(-1), torch.ones(2, 3), atol=1e-6)


def test_sample_questions_seeded():
    torch.manual_seed(4)
    dec = QuestionDecoder(9, 8, 3)
    p = GaussianParams(torch.zeros(3), torch.zeros(3))
    assert sample_questions(dec, p, 5, seed=1) == sample_questions(dec, p, 5, seed=1)
    assert len(sample_questions(dec, p, 5, seed=1)) == 5


def test_sample_questions_vanishing_noise_equals_mean():
    torch.manual_seed(5)
    dec = QuestionDecoder(9, 8, 3)
    mu = torch.randn(3)
    p = GaussianParams(mu, torch.full((3,), -8.0))
    assert sample_questions(dec, p, 5, seed=2) == [dec.decode_greedy(mu)] * 5
