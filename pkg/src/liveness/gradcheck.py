"""Central finite differences for checking analytic gradients."""

import numpy as np

STEP = 1e-5
MIN_MAGNITUDE = 1e-8


def numeric_grad(f, x, h=STEP):
    """d f / d x by central differences; ``f`` maps the (perturbed) array to a float.

    ``x`` is perturbed in place one element at a time and restored.
    """
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f(x)
        flat[i] = old - h
        down = f(x)
        flat[i] = old
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric, min_magnitude=MIN_MAGNITUDE):
    """max |a - n| / max(|a|, |n|) over elements with |n| > min_magnitude."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    mask = np.abs(numeric) > min_magnitude
    if not np.any(mask):
        return 0.0
    a, n = analytic[mask], numeric[mask]
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a), np.abs(n))))
