"""Parameter containers and the network blocks used by the agent.

Parameters live in a ParamSet (name -> Tensor plus per-tensor Adam moment
buffers). Layers are lightweight descriptor objects: they register their
parameters once via init() and are applied functionally against a ParamSet,
which keeps checkpointing and optimizer state trivial.
"""

import numpy as np

from . import tensor as T
from .tensor import Tensor


class ParamSet:
    """Named parameter tensors with per-tensor Adam accumulators."""

    def __init__(self):
        self._params = {}
        self.m = {}
        self.v = {}
        self.steps = {}

    def add(self, name, array):
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(array), requires_grad=True)
        self._params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        self.steps[name] = 0
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def n_values(self):
        return sum(p.data.size for p in self._params.values())

    def copy_values(self):
        """Fresh dict of parameter arrays (used for slow-critic mirrors)."""
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_values(self, values):
        for k, p in self._params.items():
            src = np.asarray(values[k], dtype=p.data.dtype)
            if src.shape != p.data.shape:
                raise ValueError(f"shape mismatch loading '{k}': {src.shape} vs {p.data.shape}")
            p.data = src.copy()

    def astype(self, dtype):
        """Return a new ParamSet with the same values in another dtype."""
        out = ParamSet()
        for k, p in self._params.items():
            out.add(k, p.data.astype(dtype))
        return out


def truncated_normal(rng, shape, std, dtype=np.float32):
    """Normal(0, std) resampled until within 2 std, like common DL inits."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(dtype)


class Linear:
    def __init__(self, name, din, dout, bias=True):
        self.name = name
        self.din = din
        self.dout = dout
        self.bias = bias

    def init(self, ps, rng, dtype=np.float32, scale=1.0):
        std = scale / np.sqrt(self.din)
        ps.add(self.name + "/w", truncated_normal(rng, (self.din, self.dout), std, dtype))
        if self.bias:
            ps.add(self.name + "/b", np.zeros(self.dout, dtype=dtype))

    def __call__(self, ps, x):
        out = T.matmul(x, ps[self.name + "/w"])
        if self.bias:
            out = T.add(out, ps[self.name + "/b"])
        return out


class LayerNorm:
    def __init__(self, name, dim):
        self.name = name
        self.dim = dim

    def init(self, ps, rng=None, dtype=np.float32):
        ps.add(self.name + "/scale", np.ones(self.dim, dtype=dtype))
        ps.add(self.name + "/offset", np.zeros(self.dim, dtype=dtype))

    def __call__(self, ps, x):
        return T.layer_norm(x, ps[self.name + "/scale"], ps[self.name + "/offset"])


_ACTIVATIONS = {"silu": T.silu, "tanh": T.tanh, "relu": T.relu}


class MLP:
    """Affine stack: depth hidden layers (linear [+ LN] + activation), linear out."""

    def __init__(self, name, din, hidden, dout, depth, norm=True, act="silu"):
        self.name = name
        self.act = _ACTIVATIONS[act]
        self.hiddens = []
        self.norms = []
        d = din
        for i in range(depth):
            # the norm's offset makes a pre-norm bias redundant
            self.hiddens.append(Linear(f"{name}/h{i}", d, hidden, bias=not norm))
            self.norms.append(LayerNorm(f"{name}/h{i}/norm", hidden) if norm else None)
            d = hidden
        self.out = Linear(f"{name}/out", d, dout)

    def init(self, ps, rng, dtype=np.float32):
        for lin, norm in zip(self.hiddens, self.norms):
            lin.init(ps, rng, dtype)
            if norm is not None:
                norm.init(ps, dtype=dtype)
        self.out.init(ps, rng, dtype)

    def __call__(self, ps, x):
        for lin, norm in zip(self.hiddens, self.norms):
            x = lin(ps, x)
            if norm is not None:
                x = norm(ps, x)
            x = self.act(x)
        return self.out(ps, x)


class GRUCell:
    """Gated recurrent unit with layer norm on the input projections.

    h' = (1 - u) * h + u * cand, so a zero update gate leaves h unchanged
    and zero candidate weights pin the candidate at zero. The three input
    projections are normalized independently (one LN per gate) to keep the
    gates decoupled.
    """

    def __init__(self, name, din, hidden, norm=True):
        self.name = name
        self.din = din
        self.hidden = hidden
        self.wx = {g: Linear(f"{name}/wx_{g}", din, hidden, bias=False) for g in ("r", "u", "c")}
        self.wh = {g: Linear(f"{name}/wh_{g}", hidden, hidden, bias=False) for g in ("r", "u", "c")}
        self.norms = {g: LayerNorm(f"{name}/ln_{g}", hidden) if norm else None for g in ("r", "u", "c")}

    def init(self, ps, rng, dtype=np.float32):
        for g in ("r", "u", "c"):
            self.wx[g].init(ps, rng, dtype)
            self.wh[g].init(ps, rng, dtype)
            if self.norms[g] is not None:
                self.norms[g].init(ps, dtype=dtype)
            ps.add(f"{self.name}/b_{g}", np.zeros(self.hidden, dtype=dtype))

    def _proj(self, ps, gate, x):
        p = self.wx[gate](ps, x)
        if self.norms[gate] is not None:
            p = self.norms[gate](ps, p)
        return p

    def __call__(self, ps, h, x):
        if x.data.shape[-1] != self.din or h.data.shape[-1] != self.hidden:
            raise ValueError("gru_step: input/hidden width mismatch")
        r = T.sigmoid(T.add(T.add(self._proj(ps, "r", x), self.wh["r"](ps, h)), ps[f"{self.name}/b_r"]))
        u = T.sigmoid(T.add(T.add(self._proj(ps, "u", x), self.wh["u"](ps, h)), ps[f"{self.name}/b_u"]))
        cand = T.tanh(T.add(T.add(self._proj(ps, "c", x), self.wh["c"](ps, T.mul(r, h))), ps[f"{self.name}/b_c"]))
        return T.add(h, T.mul(u, T.sub(cand, h)))


def categorical_sample_st(logits, rng_or_uniform):
    """One-hot sample per group from softmax(logits), straight-through backward.

    logits: Tensor [..., groups, classes]. The uniform draw may be passed
    directly (array of shape logits.shape[:-1]) for positional alignment in
    sequence scans, or generated from a numpy Generator.
    """
    if not np.isfinite(logits.data).all():
        raise FloatingPointError("non-finite logits in categorical sample")
    probs = T.softmax(logits, axis=-1)
    if isinstance(rng_or_uniform, np.random.Generator):
        u = rng_or_uniform.random(logits.data.shape[:-1])
    else:
        u = np.asarray(rng_or_uniform)
        if u.shape != logits.data.shape[:-1]:
            raise ValueError("uniform draw shape must match logits.shape[:-1]")
    cum = np.cumsum(probs.data, axis=-1)
    idx = np.argmax(cum > u[..., None], axis=-1)
    onehot = np.zeros_like(probs.data)
    np.put_along_axis(onehot, idx[..., None], 1.0, axis=-1)
    return T.straight_through(onehot, probs)


def categorical_draw(probs, u):
    """Plain numpy inverse-CDF draw: index per group given uniforms."""
    cum = np.cumsum(probs, axis=-1)
    return np.argmax(cum > np.asarray(u)[..., None], axis=-1)


def unimix_logits(logits, ratio=0.01):
    """Logits of the softmax mixed with `ratio` uniform mass (collapse guard)."""
    if ratio <= 0.0:
        return logits
    k = logits.data.shape[-1]
    probs = T.softmax(logits, axis=-1)
    mixed = T.add(T.mul(probs, 1.0 - ratio), ratio / k)
    return T.log(mixed)


def one_hot(indices, classes, dtype=np.float32):
    indices = np.asarray(indices)
    out = np.zeros(indices.shape + (classes,), dtype=dtype)
    np.put_along_axis(out, indices[..., None], 1.0, axis=-1)
    return out
