"""Shared test utilities: finite-difference oracles and tiny fixtures."""

import numpy as np

FD_STEP = 1e-5


def numeric_grad(loss_fn, params, step=FD_STEP):
    """Central finite differences of loss_fn w.r.t. each Parameter's value.

    Independent of the engine's backward pass: only forward evaluations.
    Returns one array per parameter, matching shapes.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn()
            flat[i] = orig - step
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, floor=1e-6):
    """Worst-case relative error between two gradient lists."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def params_snapshot(params):
    return [p.value.copy() for p in params]


def params_equal(params, snapshot):
    return all(np.array_equal(p.value, s) for p, s in zip(params, snapshot))
