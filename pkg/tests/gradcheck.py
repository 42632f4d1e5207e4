"""Finite-difference gradient checking helpers shared by the layer tests
and the acceptance suite.

Analytic gradients are compared against central differences with a relative
error |a - n| / max(|a| + |n|, 1e-8); entries where both sides are below
1e-8 count as exact (true zeros plus difference-quotient noise). Inputs fed
to kinked layers are kept away from the kinks: relu inputs get pushed off
zero, max-pool inputs are built from distinct values so every window has a
clear winner.
"""

import numpy as np

EPS = 1e-5


def numeric_grad(loss, arr, eps=EPS):
    """Central-difference gradient of scalar loss() w.r.t. arr (in place)."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        ix = it.multi_index
        orig = arr[ix]
        arr[ix] = orig + eps
        hi = loss()
        arr[ix] = orig - eps
        lo = loss()
        arr[ix] = orig
        grad[ix] = (hi - lo) / (2.0 * eps)
        it.iternext()
    return grad


def max_rel_err(analytic, numeric, zero_tol=1e-8):
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    err = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-8)
    err[(np.abs(a) < zero_tol) & (np.abs(n) < zero_tol)] = 0.0
    return float(err.max())


def away_from_zero(x, margin=1e-3):
    """Push values whose magnitude is below margin safely positive."""
    x = x.copy()
    x[np.abs(x) < margin] += 0.5
    return x


def distinct_grid(shape, seed, scale=0.01):
    """Array of pairwise-distinct values (gaps >= scale) in random order."""
    rng = np.random.default_rng(seed)
    n = int(np.prod(shape))
    return (rng.permutation(n).astype(np.float64) * scale).reshape(shape)


def check_layer(layer, x, seed, eps=EPS):
    """Max relative FD error over dL/dx and every dL/dparam of one layer.

    L = sum(forward(x) * probe) for a fixed random probe. The forward rng is
    re-seeded identically on every call so dropout masks stay frozen across
    the finite-difference evaluations.
    """
    x = np.asarray(x, dtype=np.float64)

    def forward():
        return layer.forward(x, True, np.random.default_rng(seed))

    probe = np.random.default_rng(seed + 1).normal(size=forward().shape)

    def loss():
        return float((forward() * probe).sum())

    forward()
    dx = layer.backward(probe).copy()
    analytic_params = {name: layer.grads[name].copy() for name, _ in layer.param_items()}

    worst = max_rel_err(dx, numeric_grad(loss, x, eps))
    for name, p in layer.param_items():
        worst = max(worst, max_rel_err(analytic_params[name], numeric_grad(loss, p, eps)))
    return worst
