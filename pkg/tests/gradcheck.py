"""Central finite-difference oracle for the routed training objective."""

import torch

from infovqg.objective import LossWeights

ENCODERS = ("image_encoder", "answer_encoder", "category_encoder")


def _objective(model, batch, weights, eps, encoder_param: bool) -> float:
    with torch.no_grad():
        parts = model.compute_losses(batch, weights, eps=eps)
    # encoders are trained only from L_MLE; every auxiliary term sees detached encodings
    return float(weights.mle * parts.L_MLE) if encoder_param else float(parts.total)


def check_gradients(model, batch, weights=LossWeights(), h=1e-6, rtol=1e-3, atol=1e-7, seed=0):
    """Return ``(worst_relative_error, n_checked, failures)`` over every trainable scalar."""
    g = torch.Generator().manual_seed(seed)
    eps = torch.randn(len(batch), model.dims.latent_dim, generator=g, dtype=torch.float64)
    model.zero_grad(set_to_none=True)
    model.compute_losses(batch, weights, eps=eps).total.backward()
    owner = {id(p): name for name, ps in model.parameter_groups().items() for p in ps}
    worst, checked, failures = 0.0, 0, []
    for pname, p in model.named_parameters():
        analytic = torch.zeros_like(p) if p.grad is None else p.grad.detach().clone()
        is_enc = owner.get(id(p)) in ENCODERS
        flat = p.data.view(-1)
        for j in range(flat.numel()):
            old = flat[j].item()
            flat[j] = old + h
            up = _objective(model, batch, weights, eps, is_enc)
            flat[j] = old - h
            down = _objective(model, batch, weights, eps, is_enc)
            flat[j] = old
            fd = (up - down) / (2 * h)
            a = analytic.view(-1)[j].item()
            err = abs(a - fd)
            scale = max(abs(a), abs(fd))
            rel = err / scale if scale > 0 else 0.0
            if err > atol:
                worst = max(worst, rel)
            if err > rtol * scale + atol:
                failures.append((pname, j, a, fd))
            checked += 1
    return worst, checked, failures
