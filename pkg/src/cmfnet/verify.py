"""Finite-difference gradient suites for every trainable component."""

import numpy as np

from .attention import AttentionBlock, AttentionKind
from .gradcheck import grad_check
from .losses import LossConfig, edge_loss, ps_loss, total_loss
from .model import CMFNet, CmfnetConfig, ResidualAttentionModule, msc_forward
from .nn import Parameter
from .tensor import Tensor

BLOCK_TOL = 1e-4
MODEL_TOL = 1e-3


def _jitter(module, rng, scale=0.1):
    # move off the zero-bias / shared-slope init so every path carries signal
    for p in module.parameters():
        p.data = (p.data + rng.normal(0.0, scale, p.shape)).astype(np.float32)
    return module


def _projection(rng, shape):
    w = Tensor(rng.standard_normal(shape))
    return lambda out: (out * w).sum()


def check_block(kind, width=4, size=8, seed=0):
    rng = np.random.default_rng(seed)
    block = _jitter(AttentionBlock(width, kind, rng=rng), rng)
    x = Tensor(rng.standard_normal((2, width, size, size)))
    proj = _projection(rng, x.shape)
    return grad_check(lambda t: proj(block(t)), [x], wrt=block.parameters())


def check_ram(width=4, size=8, seed=0):
    rng = np.random.default_rng(seed)
    ram = _jitter(ResidualAttentionModule(width, rng), rng)
    f = Tensor(rng.standard_normal((1, width, size, size)))
    img = Tensor(rng.random((1, 3, size, size)))
    pf, pi = _projection(rng, f.shape), _projection(rng, img.shape)

    def fn(a, b):
        feats, image = ram(a, b)
        return pf(feats) + pi(image)

    return grad_check(fn, [f, img], wrt=ram.parameters())


def check_msc(size=8, seed=0):
    rng = np.random.default_rng(seed)
    images = [Tensor(rng.random((1, 3, size, size))) for _ in range(3)]
    theta = Parameter(rng.normal(0.0, 1.0, 1))
    proj = _projection(rng, images[0].shape)
    return grad_check(lambda c, p, s, th: proj(msc_forward(c, p, s, th)), images + [theta])


def _loss_inputs(rng, size):
    y = rng.random((1, 3, size, size))
    x = np.clip(y + rng.normal(0.0, 0.1, y.shape), 0, 1)
    return Tensor(x), Tensor(y)


def check_ps_loss(size=16, seed=0):
    x, y = _loss_inputs(np.random.default_rng(seed), size)
    return grad_check(lambda a, b: ps_loss(a, b), [x, y])


def check_edge_loss(size=16, seed=0):
    x, y = _loss_inputs(np.random.default_rng(seed), size)
    return grad_check(lambda a, b: edge_loss(a, b), [x, y])


def check_total_loss(size=16, seed=0):
    x, y = _loss_inputs(np.random.default_rng(seed), size)
    return grad_check(lambda a: total_loss(a, y, LossConfig()), [x])


def check_model(width=4, size=8, seed=0, coords=2):
    rng = np.random.default_rng(seed)
    model = _jitter(CMFNet(CmfnetConfig(width=width), rng=rng), rng, 0.05)
    x = Tensor(rng.random((1, 3, size, size)))
    proj = _projection(rng, x.shape)
    return grad_check(lambda t: proj(model(t)), [x], wrt=model.parameters(), coords=coords, seed=seed)


def run_suite(width=4, seed=0, size=8):
    """Return ``{component: (worst relative error, tolerance)}``."""
    results = {}
    for kind in AttentionKind:
        results[f"block/{kind.value}"] = (check_block(kind, width, size, seed), BLOCK_TOL)
    results["ram"] = (check_ram(width, size, seed), BLOCK_TOL)
    results["msc"] = (check_msc(size, seed), BLOCK_TOL)
    results["ps_loss"] = (check_ps_loss(seed=seed), BLOCK_TOL)
    results["edge_loss"] = (check_edge_loss(seed=seed), BLOCK_TOL)
    results["total_loss"] = (check_total_loss(seed=seed), BLOCK_TOL)
    results["model"] = (check_model(width, size, seed), MODEL_TOL)
    return results
