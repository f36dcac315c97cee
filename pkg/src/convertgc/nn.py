"""Small MLPs with hand-written backprop, Adam, and a finite-difference checker."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .tensor import DTYPE, as_dense

CHECKPOINT_VERSION = 1


class CacheError(RuntimeError):
    pass


class LinearLayer:
    """Affine map ``y = x W^T + b`` with W stored out x in."""

    def __init__(self, W: np.ndarray, b: np.ndarray | None = None):
        self.W = np.array(W, dtype=DTYPE)
        self.b = np.zeros(self.W.shape[0], dtype=DTYPE) if b is None else np.array(b, dtype=DTYPE)
        if self.b.shape != (self.W.shape[0],):
            raise ValueError("bias length must equal output width")
        self.gradW = np.zeros_like(self.W)
        self.gradb = np.zeros_like(self.b)

    @classmethod
    def glorot(cls, fan_in: int, fan_out: int, rng: np.random.Generator) -> "LinearLayer":
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return cls(rng.uniform(-bound, bound, size=(fan_out, fan_in)))

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def zero_grad(self) -> None:
        self.gradW[...] = 0.0
        self.gradb[...] = 0.0


class ForwardCache:
    """Per-layer inputs and pre-activations kept for exactly one backward pass."""

    def __init__(self, net: "Mlp"):
        self.net = net
        self.inputs: list[np.ndarray] = []
        self.preacts: list[np.ndarray] = []
        self.used = False


class Mlp:
    """Stack of linear layers with ReLU between them and a linear output."""

    def __init__(self, layers: list[LinearLayer]):
        if not layers:
            raise ValueError("an MLP needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        self.layers = layers

    @classmethod
    def build(cls, dims: list[int], rng: np.random.Generator) -> "Mlp":
        if len(dims) < 2 or min(dims) <= 0:
            raise ValueError(f"bad MLP dims {dims}")
        return cls([LinearLayer.glorot(i, o, rng) for i, o in zip(dims, dims[1:])])

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [l.out_dim for l in self.layers]

    def forward(self, x) -> tuple[np.ndarray, ForwardCache]:
        x = as_dense(x)
        if x.shape[1] != self.layers[0].in_dim:
            raise ValueError(f"input has {x.shape[1]} columns, layer expects {self.layers[0].in_dim}")
        cache = ForwardCache(self)
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            cache.inputs.append(h)
            z = h @ layer.W.T + layer.b
            cache.preacts.append(z)
            h = z if i == last else np.maximum(z, 0.0)
        return h, cache

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: ForwardCache, upstream) -> np.ndarray:
        """Accumulate parameter gradients; return d loss / d input."""
        if cache.net is not self:
            raise CacheError("cache belongs to a different network")
        if cache.used:
            raise CacheError("forward cache already consumed by a backward pass")
        cache.used = True
        g = as_dense(upstream)
        if g.shape != cache.preacts[-1].shape:
            raise ValueError(f"upstream shape {g.shape} != output shape {cache.preacts[-1].shape}")
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if i != len(self.layers) - 1:
                g = g * (cache.preacts[i] > 0.0)
            layer.gradW += g.T @ cache.inputs[i]
            layer.gradb += g.sum(axis=0)
            g = g @ layer.W
        return g

    def parameters(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for layer in self.layers:
            yield layer.W, layer.gradW
            yield layer.b, layer.gradb

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()


@dataclass
class NetworkBundle:
    """Encoder plus the perturb (attributes, embeddings) and recover networks.

    ``encoder`` is None for the encoder-free variant where embeddings are the
    normalized inputs themselves.
    """

    encoder: Mlp | None
    p_attr: Mlp
    p_emb: Mlp
    r: Mlp

    NAMES = ("encoder", "p_attr", "p_emb", "r")

    def nets(self) -> Iterator[tuple[str, Mlp]]:
        for name in self.NAMES:
            net = getattr(self, name)
            if net is not None:
                yield name, net

    def named_parameters(self) -> Iterator[tuple[str, np.ndarray, np.ndarray]]:
        for name, net in self.nets():
            for i, layer in enumerate(net.layers):
                yield f"{name}.{i}.W", layer.W, layer.gradW
                yield f"{name}.{i}.b", layer.b, layer.gradb

    def parameters(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for _, p, g in self.named_parameters():
            yield p, g

    def zero_grad(self) -> None:
        for _, net in self.nets():
            net.zero_grad()

    @property
    def embed_dim(self) -> int:
        return self.r.layers[0].in_dim


def init_bundle(D: int, hidden: list[int], K: int, rng: np.random.Generator, use_encoder: bool = True) -> NetworkBundle:
    """Glorot-initialised bundle; encoder D -> hidden... -> K, perturb/recover two-layer square nets."""
    if D <= 0 or K <= 0 or any(h <= 0 for h in hidden):
        raise ValueError("dimensions must be positive")
    encoder = Mlp.build([D, *hidden, K], rng) if use_encoder else None
    d = K if use_encoder else D
    p_attr = Mlp.build([D, D, D], rng)
    p_emb = Mlp.build([d, d, d], rng)
    r = Mlp.build([d, d, d], rng)
    return NetworkBundle(encoder, p_attr, p_emb, r)


# ------------------------------------------------------------------------ Adam


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(model, state: AdamState) -> None:
    """One bias-corrected Adam update over ``model.parameters()``, then zero grads."""
    params = list(model.parameters())
    if not state.m:
        state.m = [np.zeros_like(p) for p, _ in params]
        state.v = [np.zeros_like(p) for p, _ in params]
    if len(state.m) != len(params):
        raise ValueError("Adam state does not match model parameters")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for (p, g), m, v in zip(params, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        g[...] = 0.0


# ----------------------------------------------------------------- grad check


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    tolerance: float
    coords_checked: dict[str, int]

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance


def grad_check(
    model,
    loss_and_grad: Callable[[], float],
    loss_only: Callable[[], float] | None = None,
    tolerance: float = 1e-4,
    h: float = 1e-5,
    n_coords: int = 50,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``loss_and_grad`` evaluates the loss and fills the model's gradient buffers;
    ``loss_only`` (defaults to the same callable) evaluates the loss alone.
    Relative error is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    coordinates with essentially zero gradient from dominating.
    """
    loss_only = loss_only or loss_and_grad
    rng = rng if rng is not None else np.random.default_rng(0)
    if hasattr(model, "named_parameters"):
        named = [(n, p, g) for n, p, g in model.named_parameters()]
    else:
        named = [(f"param{i}", p, g) for i, (p, g) in enumerate(model.parameters())]

    for _, _, g in named:
        g[...] = 0.0
    base = loss_and_grad()
    if not np.isfinite(base):
        raise FloatingPointError(f"non-finite loss {base}")
    analytic = {name: g.copy() for name, _, g in named}
    for _, _, g in named:
        g[...] = 0.0

    errors, counts = {}, {}
    for name, p, _ in named:
        flat = p.reshape(-1)
        k = min(n_coords, flat.size)
        coords = rng.choice(flat.size, size=k, replace=False) if flat.size > k else np.arange(flat.size)
        worst = 0.0
        for c in coords:
            old = flat[c]
            flat[c] = old + h
            lp = loss_only()
            flat[c] = old - h
            lm = loss_only()
            flat[c] = old
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise FloatingPointError(f"non-finite loss while perturbing {name}")
            num = (lp - lm) / (2.0 * h)
            ana = analytic[name].reshape(-1)[c]
            worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), floor))
        errors[name] = float(worst)
        counts[name] = int(k)
    for _, _, g in named:
        g[...] = 0.0
    return GradCheckReport(errors, tolerance, counts)


# ---------------------------------------------------------------- checkpoints


def _mlp_to_dict(net: Mlp) -> dict:
    return {"layers": [{"W": l.W.tolist(), "b": l.b.tolist()} for l in net.layers]}


def _mlp_from_dict(d: dict) -> Mlp:
    return Mlp([LinearLayer(np.array(l["W"], dtype=DTYPE).reshape(len(l["W"]), -1), l["b"]) for l in d["layers"]])


def save_checkpoint(path, bundle: NetworkBundle, adam: AdamState | None = None, meta: dict | None = None) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "nets": {name: _mlp_to_dict(net) for name, net in bundle.nets()},
        "meta": meta or {},
    }
    if adam is not None:
        payload["adam"] = {
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "step": adam.step,
            "shapes": [list(m.shape) for m in adam.m],
            "m": [m.ravel().tolist() for m in adam.m],
            "v": [v.ravel().tolist() for v in adam.v],
        }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    # json writes floats via repr(), which round-trips float64 exactly
    tmp.write_text(json.dumps(payload), encoding="utf-8")
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[NetworkBundle, AdamState | None, dict]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    nets = {name: _mlp_from_dict(d) for name, d in payload["nets"].items()}
    bundle = NetworkBundle(nets.get("encoder"), nets["p_attr"], nets["p_emb"], nets["r"])
    adam = None
    if "adam" in payload:
        a = payload["adam"]
        adam = AdamState(a["lr"], a["beta1"], a["beta2"], a["eps"], a["step"])
        adam.m = [np.array(m, dtype=DTYPE).reshape(s) for m, s in zip(a["m"], a["shapes"])]
        adam.v = [np.array(v, dtype=DTYPE).reshape(s) for v, s in zip(a["v"], a["shapes"])]
    return bundle, adam, payload.get("meta", {})
