"""Adam with bias correction and global-norm gradient clipping."""

import numpy as np


def global_norm(grads):
    total = 0.0
    for g in grads.values():
        total += float(np.square(g, dtype=np.float64).sum())
    return float(np.sqrt(total))


def adam_step(params, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, clip=None):
    """Apply one Adam update in place; returns the (magnitude of the) raw grad norm.

    `clip` > 0 rescales the whole gradient set to that global norm before the
    update. Raises on missing/misshaped gradients or a non-finite norm, which
    doubles as the NaN check on the backward pass output.
    """
    for name, p in params.items():
        if name not in grads:
            raise KeyError(f"missing gradient for parameter '{name}'")
        if grads[name].shape != p.data.shape:
            raise ValueError(f"gradient shape mismatch for '{name}'")
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise FloatingPointError("non-finite gradient norm")
    scale = 1.0
    if clip is not None and clip > 0.0 and norm > clip:
        scale = clip / norm
    for name, p in params.items():
        g = grads[name]
        if scale != 1.0:
            g = g * scale
        t = params.steps[name] + 1
        params.steps[name] = t
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1**t)
        vhat = v / (1.0 - beta2**t)
        p.data -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.data.dtype, copy=False)
    return norm
