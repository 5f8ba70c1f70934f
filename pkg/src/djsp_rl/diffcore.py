"""Minimal differentiable numeric core for the fixed encoder/Q architecture.

Double-precision numpy arrays wrapped in `Var` nodes, a closed set of
primitives (matmul, broadcast add, relu, row softmax, layer norm, head
reshuffles, reductions), and exact reverse-mode gradients via a taped
topological sweep. Leading axes are batch; the last two axes are the matrix.
Everything is deterministic for fixed inputs, parameters, and noise draws.
"""

from __future__ import annotations

import json
import math
from contextlib import contextmanager

import numpy as np

from .config import NetConfig

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Var:
    """A float64 array plus the tape edge that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape


def param(data) -> Var:
    return Var(data, requires_grad=True)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _make(data, parents, backward) -> Var:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Var(data, requires_grad=True, parents=parents, backward=backward)
    return Var(data)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to `shape` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# --- primitives ---

def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(out, (a, b), backward)


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(out, (a, b), backward)


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.data * b.data

    def backward(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), backward)


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.data @ b.data

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _make(out, (a, b), backward)


def transpose_last(a) -> Var:
    a = as_var(a)

    def backward(g):
        return (np.swapaxes(g, -1, -2),)

    return _make(np.swapaxes(a.data, -1, -2), (a,), backward)


def relu(a) -> Var:
    a = as_var(a)
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    # np.maximum propagates NaN so non-finite states reach the layer check
    return _make(np.maximum(a.data, 0.0), (a,), backward)


def softmax_rows(a) -> Var:
    """Softmax over the last axis with max-subtraction for stability."""
    a = as_var(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - dot),)

    return _make(s, (a,), backward)


LN_EPS = 1e-5


def layer_norm(x, gamma, beta) -> Var:
    """Per-row normalization over the last axis, scaled by gamma, shifted by beta."""
    x, gamma, beta = as_var(x), as_var(gamma), as_var(beta)
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ValueError(f"layer_norm parameters must have shape ({d},)")
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x.data - mean) * inv
    out = gamma.data * xhat + beta.data

    def backward(g):
        gg = g * gamma.data
        gx = inv * (gg - gg.mean(axis=-1, keepdims=True)
                    - xhat * (gg * xhat).mean(axis=-1, keepdims=True))
        reduce_axes = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=reduce_axes)
        dbeta = g.sum(axis=reduce_axes)
        return gx, dgamma, dbeta

    return _make(out, (x, gamma, beta), backward)


def mean_rows(a) -> Var:
    """Column-wise mean over the row axis: (..., n, d) -> (..., d)."""
    a = as_var(a)
    n = a.data.shape[-2]
    out = a.data.mean(axis=-2)

    def backward(g):
        return (np.repeat(np.expand_dims(g / n, -2), n, axis=-2),)

    return _make(out, (a,), backward)


def mean_last_keepdims(a) -> Var:
    a = as_var(a)
    d = a.data.shape[-1]
    out = a.data.mean(axis=-1, keepdims=True)

    def backward(g):
        return (np.repeat(g / d, d, axis=-1),)

    return _make(out, (a,), backward)


def split_heads(a, n_heads: int) -> Var:
    """(..., n, d) -> (..., H, n, d/H), head h owning columns [h*dh, (h+1)*dh)."""
    a = as_var(a)
    *lead, n, d = a.data.shape
    if d % n_heads:
        raise ValueError(f"feature width {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    out = a.data.reshape(*lead, n, n_heads, dh)
    out = np.moveaxis(out, -2, -3)

    def backward(g):
        back = np.moveaxis(g, -3, -2).reshape(*lead, n, d)
        return (back,)

    return _make(out, (a,), backward)


def merge_heads(a) -> Var:
    """(..., H, n, dh) -> (..., n, H*dh), inverse of split_heads."""
    a = as_var(a)
    *lead, h, n, dh = a.data.shape
    out = np.moveaxis(a.data, -3, -2).reshape(*lead, n, h * dh)

    def backward(g):
        back = np.moveaxis(g.reshape(*lead, n, h, dh), -2, -3)
        return (back,)

    return _make(out, (a,), backward)


def gather_last(a, idx) -> Var:
    """(B, A) gathered at integer idx (B,) -> (B,)."""
    a = as_var(a)
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(a.data.shape[0])
    out = a.data[rows, idx]

    def backward(g):
        full = np.zeros_like(a.data)
        full[rows, idx] = g
        return (full,)

    return _make(out, (a,), backward)


def sum_all(a) -> Var:
    a = as_var(a)

    def backward(g):
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _make(a.data.sum(), (a,), backward)


def backward(loss: Var, seed_grad=None) -> None:
    """Reverse sweep from a scalar loss, accumulating grads on the tape."""
    if loss.data.shape != () and seed_grad is None:
        raise ValueError("backward() expects a scalar loss (or an explicit seed grad)")
    topo: list[Var] = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            topo.append(node)
            continue
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data) if seed_grad is None else np.asarray(seed_grad, dtype=np.float64)
    for node in reversed(topo):
        if node._backward is None or node.grad is None:
            continue
        grads = node._backward(node.grad)
        for p, g in zip(node._parents, grads):
            if not p.requires_grad:
                continue
            if p.grad is None:
                p.grad = np.array(g)  # own a copy; g may alias a view
            else:
                p.grad += g


def zero_grads(params: dict) -> None:
    for v in params.values():
        v.grad = None


# --- layers of the published architecture ---

def attention(q, k, v) -> Var:
    """softmax(Q Kᵀ / sqrt(d_head)) V over the last two axes."""
    q, k, v = as_var(q), as_var(k), as_var(v)
    if q.data.shape[-1] != k.data.shape[-1] or k.data.shape[-2] != v.data.shape[-2]:
        raise ValueError(f"attention shape mismatch: {q.shape} {k.shape} {v.shape}")
    d_head = q.data.shape[-1]
    scores = mul(matmul(q, transpose_last(k)), 1.0 / math.sqrt(d_head))
    weights = softmax_rows(scores)
    return matmul(weights, v), weights


def multi_head(x, layer_params: dict, n_heads: int):
    """Concat of per-head attentions projected by w_multi; keeps input shape."""
    x = as_var(x)
    d = x.data.shape[-1]
    if d % n_heads:
        raise ValueError(f"d_feature {d} not divisible by H={n_heads}")
    q = split_heads(matmul(x, layer_params["wq"]), n_heads)
    k = split_heads(matmul(x, layer_params["wk"]), n_heads)
    v = split_heads(matmul(x, layer_params["wv"]), n_heads)
    per_head, weights = attention(q, k, v)
    return matmul(merge_heads(per_head), layer_params["w_multi"]), weights


def encoder_layer(x, lp: dict, n_heads: int):
    a, weights = multi_head(x, lp, n_heads)
    x = layer_norm(add(x, a), lp["ln1_gamma"], lp["ln1_beta"])
    f = add(matmul(relu(add(matmul(x, lp["w1"]), lp["b1"])), lp["w2"]), lp["b2"])
    x = layer_norm(add(x, f), lp["ln2_gamma"], lp["ln2_beta"])
    return x, weights


def encoder_forward(x0, params: dict, cfg: NetConfig):
    """Input projection then cfg.n_layers attention blocks.

    Returns the encoded sequence (..., n_ops, d_feature) and the attention
    weights per layer as arrays of shape (..., H, n_ops, n_ops).
    """
    x = matmul(as_var(x0), params["w_in"])
    all_weights = []
    for l in range(cfg.n_layers):
        lp = {key.split(".", 1)[1]: v for key, v in params.items()
              if key.startswith(f"L{l}.")}
        x, weights = encoder_layer(x, lp, cfg.n_heads)
        if not np.all(np.isfinite(x.data)):
            raise FloatingPointError(f"non-finite encoder output at layer {l}")
        all_weights.append(weights.data)
    return x, all_weights


# --- noisy linear layers ---

def factorised_noise(rng: np.random.Generator, n_in: int, n_out: int):
    """eps_w[i,j] = f(eps_out[i]) f(eps_in[j]), eps_b = f(eps_out), f(v)=sign(v)sqrt|v|."""
    f = lambda v: np.sign(v) * np.sqrt(np.abs(v))
    eps_in = f(rng.standard_normal(n_in))
    eps_out = f(rng.standard_normal(n_out))
    return np.outer(eps_out, eps_in), eps_out.copy()


def zero_noise(n_in: int, n_out: int):
    return np.zeros((n_out, n_in)), np.zeros(n_out)


def noisy_linear(x, p: dict, prefix: str, noise: dict) -> Var:
    """y = (mu_w + sigma_w*eps_w) xᵀ + (mu_b + sigma_b*eps_b); weights stored (out, in)."""
    eps_w, eps_b = noise.get(prefix, (None, None))
    w = p[f"{prefix}.mu_w"]
    b = p[f"{prefix}.mu_b"]
    if eps_w is not None:
        w = add(w, mul(p[f"{prefix}.sigma_w"], Var(eps_w)))
        b = add(b, mul(p[f"{prefix}.sigma_b"], Var(eps_b)))
    return add(matmul(as_var(x), transpose_last(w)), b)


# --- parameter initialization and checkpoints ---

def init_linear(rng, n_in: int, n_out: int, sigma0: float, noisy: bool) -> dict:
    bound = 1.0 / math.sqrt(n_in)
    out = {
        "mu_w": param(rng.uniform(-bound, bound, size=(n_out, n_in))),
        "mu_b": param(rng.uniform(-bound, bound, size=n_out)),
    }
    sig = sigma0 / math.sqrt(n_in) if noisy else 0.0
    out["sigma_w"] = param(np.full((n_out, n_in), sig))
    out["sigma_b"] = param(np.full(n_out, sig))
    return out


def init_encoder_params(rng: np.random.Generator, cfg: NetConfig,
                        n_inputs: int = 10) -> dict:
    def u(n_in, shape):
        bound = 1.0 / math.sqrt(n_in)
        return param(rng.uniform(-bound, bound, size=shape))

    d, ff = cfg.d_feature, cfg.d_ff
    params = {"w_in": u(n_inputs, (n_inputs, d))}
    for l in range(cfg.n_layers):
        params[f"L{l}.wq"] = u(d, (d, d))
        params[f"L{l}.wk"] = u(d, (d, d))
        params[f"L{l}.wv"] = u(d, (d, d))
        params[f"L{l}.w_multi"] = u(d, (d, d))
        params[f"L{l}.w1"] = u(d, (d, ff))
        params[f"L{l}.b1"] = u(d, (ff,))
        params[f"L{l}.w2"] = u(ff, (ff, d))
        params[f"L{l}.b2"] = u(ff, (d,))
        params[f"L{l}.ln1_gamma"] = param(np.ones(d))
        params[f"L{l}.ln1_beta"] = param(np.zeros(d))
        params[f"L{l}.ln2_gamma"] = param(np.ones(d))
        params[f"L{l}.ln2_beta"] = param(np.zeros(d))
    return params


def params_to_json(params: dict, meta: dict) -> str:
    doc = {
        "meta": meta,
        "params": {
            name: {"shape": list(v.data.shape), "values": v.data.ravel().tolist()}
            for name, v in params.items()
        },
    }
    return json.dumps(doc)


def params_from_json(text: str):
    doc = json.loads(text)
    params = {
        name: param(np.array(entry["values"], dtype=np.float64).reshape(entry["shape"]))
        for name, entry in doc["params"].items()
    }
    return params, doc["meta"]
