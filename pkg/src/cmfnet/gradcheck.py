"""Finite-difference verification of analytic gradients.

Checks run the whole graph in float64: the tensors under test are cast up for
the duration of the check and restored afterwards, so a float32 model can be
verified in place.
"""

import numpy as np

from .tensor import Tensor, default_dtype, no_grad


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))


def _as_list(point):
    if point is None:
        return []
    if isinstance(point, Tensor):
        return [point]
    return list(point)


def grad_check(f, point, eps=1e-5, *, wrt=(), coords=None, seed=0, per_tensor=False):
    """Compare backprop gradients of scalar ``f`` with central differences.

    Parameters
    ----------
    f : callable
        Called as ``f(*point)``; must return a scalar :class:`Tensor`.
    point : Tensor or sequence of Tensor
        Arguments of ``f``; their gradients are checked.
    eps : float
        Half-width of the central difference.
    wrt : sequence of Tensor
        Extra tensors ``f`` closes over (e.g. model parameters) to check as well.
    coords : int, optional
        Check only this many randomly chosen coordinates per tensor.
    per_tensor : bool
        Return a list of per-tensor maxima instead of the overall maximum.

    Returns
    -------
    float
        Max over checked coordinates of ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    args = _as_list(point)
    checked = args + [t for t in _as_list(wrt) if all(t is not a for a in args)]
    saved = [(t.data, t.grad, t.requires_grad) for t in checked]
    rng = np.random.default_rng(seed)
    errors = []
    try:
        with default_dtype(np.float64):
            for t in checked:
                t.data = np.array(t.data, dtype=np.float64)
                t.grad = None
                t.requires_grad = True
            loss = f(*args)
            if loss.size != 1:
                raise ValueError(f"grad_check needs a scalar function, got shape {loss.shape}")
            loss.backward()
            analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in checked]

            def evaluate():
                with no_grad():
                    return float(f(*args).item())

            for t, grad in zip(checked, analytic):
                flat = t.data.reshape(-1)
                n = flat.size
                idxs = range(n) if coords is None or coords >= n else rng.choice(n, coords, replace=False)
                worst = 0.0
                for i in idxs:
                    orig = flat[i]
                    flat[i] = orig + eps
                    fp = evaluate()
                    flat[i] = orig - eps
                    fm = evaluate()
                    flat[i] = orig
                    numeric = (fp - fm) / (2 * eps)
                    worst = max(worst, float(relative_error(grad.reshape(-1)[i], numeric)))
                errors.append(worst)
    finally:
        for t, (data, grad, rg) in zip(checked, saved):
            t.data, t.grad, t.requires_grad = data, grad, rg
    if per_tensor:
        return errors
    return max(errors, default=0.0)
