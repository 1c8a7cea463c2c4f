"""Small Q-networks over flat weight vectors, with exact reverse-mode gradients.

Weight layout (stable; ``GaussianParams`` indexes into it):
layers are stored in order, each as its weight matrix of shape
``(fan_in, fan_out)`` flattened row-major, followed by its bias vector.
A layer computes ``x @ W + b``.

Two network kinds:

``mlp``
    ``layer_sizes = [n_in, h1, ..., n_out]``.  Hidden layers use the chosen
    activation, the output layer is linear.

``phase_shared``
    ``layer_sizes`` is a per-movement embedding MLP ``[1, ..., embed_dim]``
    (activation after every layer) and ``score_sizes`` a scoring MLP
    ``[embed_dim, ..., 1]`` (linear output).  The input is one queue value per
    movement; phase ``p`` scores ``score(sum of embed(q_m) over movements m in p)``.
    Both sub-networks are shared across movements and phases, so one weight
    vector serves every phase setting.  With ``value_head`` a linear readout
    of the summed embeddings of *all* movements is added to every phase score;
    it lets the network carry the state value (which depends on every queue)
    without changing which phase scores highest.

Inputs may be a single vector or a batch (leading axis).  Weight gradients of
a batch are summed over the batch.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import phases
from .errors import NumericError, ValidationError

KINDS = ("mlp", "phase_shared")
ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class NetSpec:
    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    kind: str = "mlp"
    score_sizes: tuple[int, ...] = ()
    value_head: bool = False
    n_movements: int = 8
    n_phases: int = 8
    _hash: str = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        object.__setattr__(self, "score_sizes", tuple(int(n) for n in self.score_sizes))
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValidationError(f"layer_sizes needs >= 2 positive entries, got {self.layer_sizes}")
        if self.kind == "phase_shared":
            if self.n_movements != len(phases.MOVEMENTS) or self.n_phases != len(phases.PHASE_IDS):
                raise ValidationError("phase_shared networks use the fixed 8-movement / 8-phase table")
            if self.layer_sizes[0] != 1:
                raise ValidationError("embedding MLP takes one queue value per movement")
            s = self.score_sizes
            if len(s) < 2 or min(s) < 1 or s[0] != self.layer_sizes[-1] or s[-1] != 1:
                raise ValidationError(
                    f"score_sizes must run from embed_dim={self.layer_sizes[-1]} to 1, got {s}"
                )
        elif self.score_sizes or self.value_head:
            raise ValidationError("score_sizes and value_head only apply to phase_shared networks")
        blob = repr((self.kind, self.activation, self.layer_sizes, self.score_sizes,
                     self.n_movements, self.n_phases) + ((True,) if self.value_head else ()))
        object.__setattr__(self, "_hash", hashlib.sha1(blob.encode()).hexdigest()[:12])

    @property
    def spec_hash(self) -> str:
        return self._hash

    @property
    def embed_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0] if self.kind == "mlp" else self.n_movements

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1] if self.kind == "mlp" else self.n_phases

    def shapes(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) of every linear layer, in storage order."""
        sizes = [self.layer_sizes]
        if self.kind == "phase_shared":
            sizes.append(self.score_sizes)
            if self.value_head:
                sizes.append((self.embed_dim, 1))
        return [(a, b) for ls in sizes for a, b in zip(ls[:-1], ls[1:])]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "activation": self.activation,
            "layer_sizes": list(self.layer_sizes),
            "score_sizes": list(self.score_sizes),
            "value_head": self.value_head,
            "n_movements": self.n_movements,
            "n_phases": self.n_phases,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        return cls(
            layer_sizes=tuple(d["layer_sizes"]),
            activation=d["activation"],
            kind=d["kind"],
            score_sizes=tuple(d.get("score_sizes", ())),
            value_head=bool(d.get("value_head", False)),
            n_movements=d.get("n_movements", 8),
            n_phases=d.get("n_phases", 8),
        )


def param_count(spec: NetSpec) -> int:
    return sum(a * b + b for a, b in spec.shapes())


def unpack(spec: NetSpec, w: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views ``(W, b)`` into ``w`` for every layer."""
    w = check_weights(spec, w)
    out, i = [], 0
    for a, b in spec.shapes():
        W = w[i:i + a * b].reshape(a, b)
        i += a * b
        out.append((W, w[i:i + b]))
        i += b
    return out


def check_weights(spec: NetSpec, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    n = param_count(spec)
    if w.ndim != 1 or w.shape[0] != n:
        raise ValidationError(f"weight vector has shape {w.shape}, spec needs ({n},)")
    return w


def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(name, z, h):
    return (z > 0.0).astype(z.dtype) if name == "relu" else 1.0 - h * h


def _mlp_fwd(layers, x, act, act_last):
    cache = []
    h = x
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        out = _act(act, z) if (i < last or act_last) else z
        cache.append((h, z, out))
        h = out
    return h, cache


def _mlp_bwd(layers, cache, g, act, act_last):
    grads = [None] * len(layers)
    last = len(layers) - 1
    for i in range(last, -1, -1):
        W, _ = layers[i]
        h_in, z, out = cache[i]
        if i < last or act_last:
            g = g * _act_grad(act, z, out)
        grads[i] = (h_in.T @ g, g.sum(axis=0))
        g = g @ W.T
    return grads, g


def _flatten(grads) -> np.ndarray:
    return np.concatenate([np.concatenate([dW.ravel(), db]) for dW, db in grads])


def _as_batch(spec: NetSpec, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != spec.n_inputs:
        raise ValidationError(f"input has shape {x.shape}, network expects width {spec.n_inputs}")
    return xb, single


_INCIDENCE = phases.incidence()


def value_and_vjp(spec: NetSpec, w, x):
    """Forward pass plus a closure mapping output cotangents to (weight_grad, input_grad)."""
    xb, single = _as_batch(spec, x)
    layers = unpack(spec, w)
    act = spec.activation
    if spec.kind == "mlp":
        out, cache = _mlp_fwd(layers, xb, act, False)

        def vjp(g):
            grads, gx = _mlp_bwd(layers, cache, g, act, False)
            return _flatten(grads), gx
    else:
        n_embed = len(spec.layer_sizes) - 1
        n_score = len(spec.score_sizes) - 1
        emb_layers = layers[:n_embed]
        score_layers = layers[n_embed:n_embed + n_score]
        value_layers = layers[n_embed + n_score:]
        B, M, E, P = xb.shape[0], spec.n_movements, spec.embed_dim, spec.n_phases
        emb, emb_cache = _mlp_fwd(emb_layers, xb.reshape(B * M, 1), act, True)
        emb = emb.reshape(B, M, E)
        z = np.einsum("pm,bme->bpe", _INCIDENCE, emb)
        s, score_cache = _mlp_fwd(score_layers, z.reshape(B * P, E), act, False)
        out = s.reshape(B, P)
        if value_layers:
            # phase-independent offset read from all movements: shifts every Q equally
            v, value_cache = _mlp_fwd(value_layers, emb.sum(axis=1), act, False)
            out = out + v

        def vjp(g):
            g_score, gz = _mlp_bwd(score_layers, score_cache, g.reshape(-1, 1), act, False)
            gemb = np.einsum("pm,bpe->bme", _INCIDENCE, gz.reshape(B, P, E))
            g_value = []
            if value_layers:
                g_value, gsum = _mlp_bwd(value_layers, value_cache, g.sum(axis=1, keepdims=True),
                                         act, False)
                gemb = gemb + gsum[:, None, :]
            g_emb, gx = _mlp_bwd(emb_layers, emb_cache, gemb.reshape(B * M, E), act, True)
            return _flatten(g_emb + g_score + g_value), gx.reshape(B, M)

    if single:
        def vjp1(g, _vjp=vjp):
            gw, gx = _vjp(np.asarray(g, dtype=float).reshape(1, -1))
            return gw, gx[0]
        return out[0], vjp1
    return out, lambda g, _vjp=vjp: _vjp(np.asarray(g, dtype=float))


def forward(spec: NetSpec, w, x) -> np.ndarray:
    """Q-values for one input vector or a batch of them."""
    return value_and_vjp(spec, w, x)[0]


def backward(spec: NetSpec, w, x, output_grad) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``<forward(spec, w, x), output_grad>`` w.r.t. weights and input."""
    out, vjp = value_and_vjp(spec, w, x)
    g = np.asarray(output_grad, dtype=float)
    if g.shape != out.shape:
        raise ValidationError(f"output_grad has shape {g.shape}, output is {out.shape}")
    return vjp(g)


def numeric_grad(loss, w, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if not h > 0:
        raise ValidationError("step size h must be positive")
    w = np.array(w, dtype=float)
    g = np.empty_like(w)
    for i in range(w.size):
        old = w[i]
        w[i] = old + h
        fp = float(loss(w))
        w[i] = old - h
        fm = float(loss(w))
        w[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"loss is not finite around coordinate {i}")
        g[i] = (fp - fm) / (2 * h)
    return g


def init_weights(spec: NetSpec, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean uniform init, half-width 1/sqrt(fan_in), biases included."""
    parts = []
    for a, b in spec.shapes():
        lim = 1.0 / np.sqrt(a)
        parts.append(rng.uniform(-lim, lim, size=a * b + b))
    return np.concatenate(parts)
