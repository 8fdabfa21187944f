"""Scalar transforms for network inputs and regression targets.

symlog compresses magnitudes symmetrically around zero so queue counts and
episode returns of very different scales share one input/target range.
Two-hot encoding turns a scalar into interpolation weights on a fixed bin
grid, letting reward/value heads do classification-style regression.
"""

from dataclasses import dataclass, field

import numpy as np


def symlog(x):
    x = np.asarray(x)
    return np.sign(x) * np.log1p(np.abs(x))


def symexp(y):
    y = np.asarray(y)
    return np.sign(y) * np.expm1(np.abs(y))


@dataclass(frozen=True)
class BinGrid:
    """Strictly increasing bin centers, symmetric about zero."""

    centers: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("bin grid needs a 1-d vector of at least two centers")
        if not (np.diff(c) > 0).all():
            raise ValueError("bin centers must be strictly increasing")
        object.__setattr__(self, "centers", c)

    @property
    def count(self):
        return self.centers.size

    @classmethod
    def symexp_spaced(cls, count=255, low=-20.0, high=20.0):
        return cls(symexp(np.linspace(low, high, count)))

    @classmethod
    def uniform(cls, count=255, low=-20.0, high=20.0):
        """Evenly spaced centers; the scalar heads use these in symlog space."""
        return cls(np.linspace(low, high, count))


def twohot_encode(values, grid):
    """Weights over grid bins: zero except (at most) two adjacent entries.

    Values are clamped into the grid range; a value on a center puts weight
    1.0 on that bin, otherwise the two neighbours split it linearly.
    """
    c = grid.centers
    v = np.clip(np.asarray(values, dtype=np.float64), c[0], c[-1])
    idx = np.clip(np.searchsorted(c, v, side="right") - 1, 0, c.size - 2)
    frac = (v - c[idx]) / (c[idx + 1] - c[idx])
    out = np.zeros(v.shape + (c.size,), dtype=np.float64)
    np.put_along_axis(out, idx[..., None], (1.0 - frac)[..., None], axis=-1)
    np.put_along_axis(out, (idx + 1)[..., None], frac[..., None], axis=-1)
    return out


def twohot_decode(weights, grid):
    return np.asarray(weights) @ grid.centers


def decode_scalar_logits(logits, grid):
    """Scalar read-out of a two-hot head: symexp(E[bin centers])."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=-1, keepdims=True)
    return symexp(probs @ grid.centers)
