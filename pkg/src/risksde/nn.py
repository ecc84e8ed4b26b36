"""Dense MLP score models with reverse-mode gradients and an Adam optimizer.

The network maps ``[x | time features | optional condition]`` through softplus
hidden layers to a D-dimensional output. Models built with an attached
:class:`~risksde.sde.SDESpec` predict the noise vector and expose the score as
``-raw(x, t) / max(v0(t), 1e-4)``, which keeps raw outputs O(1) across the
whole time range; models without a schedule return the raw output directly
(used for risk regressors and unit tests).

Everything is float64 and deterministic given weights and inputs: batched
numpy reductions have a fixed summation order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError
from .sde import SDESpec

CHECKPOINT_MAGIC = "RSDE-CKPT-1"
_SCALE_FLOOR = 1e-4


def time_features(t, n_frequencies: int) -> np.ndarray:
    """Return ``[t, sin(2^k pi t), cos(2^k pi t)]_{k<K}`` with shape (n, 1 + 2K)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    cols = [t]
    for k in range(n_frequencies):
        angle = (2.0**k) * np.pi * t
        cols.append(np.sin(angle))
        cols.append(np.cos(angle))
    return np.stack(cols, axis=1)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class ScoreModel:
    """MLP approximating the score field s(x, t).

    Parameters are stored as lists of float64 weight matrices and bias
    vectors. Hidden layers use softplus (smooth, so score fields stay
    differentiable); the final layer is zero-initialized so the initial
    score is identically zero.
    """

    def __init__(self, data_dim, hidden, time_frequencies, cond_dim, out_dim,
                 weights, biases, sde: SDESpec | None = None):
        self.data_dim = int(data_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.time_frequencies = int(time_frequencies)
        self.cond_dim = int(cond_dim)
        self.out_dim = int(out_dim)
        self.weights = weights
        self.biases = biases
        self.sde = sde
        self.activation = "softplus"

    # -- construction ----------------------------------------------------

    @classmethod
    def create(cls, data_dim: int, hidden=(64, 64), time_frequencies: int = 4,
               cond_dim: int = 0, out_dim: int | None = None,
               sde: SDESpec | None = None,
               rng: np.random.Generator | None = None) -> "ScoreModel":
        rng = rng or np.random.default_rng(0)
        out_dim = data_dim if out_dim is None else out_dim
        in_dim = data_dim + 1 + 2 * time_frequencies + cond_dim
        widths = [in_dim, *hidden, out_dim]
        weights, biases = [], []
        for i in range(len(widths) - 1):
            fan_in, fan_out = widths[i], widths[i + 1]
            if i == len(widths) - 2:
                w = np.zeros((fan_in, fan_out))
            else:
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            weights.append(w)
            biases.append(np.zeros(fan_out))
        return cls(data_dim, hidden, time_frequencies, cond_dim, out_dim,
                   weights, biases, sde)

    @property
    def layer_widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "ScoreModel":
        return ScoreModel(self.data_dim, self.hidden, self.time_frequencies,
                          self.cond_dim, self.out_dim,
                          [w.copy() for w in self.weights],
                          [b.copy() for b in self.biases], self.sde)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    # -- forward / backward ----------------------------------------------

    def _assemble(self, x, t, cond) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x.reshape(1, -1) if single else x
        if X.shape[1] != self.data_dim:
            raise InvalidArgumentError(
                f"input has {X.shape[1]} features, model expects {self.data_dim}")
        feats = time_features(np.broadcast_to(np.asarray(t, np.float64), (X.shape[0],)),
                              self.time_frequencies)
        parts = [X, feats]
        if self.cond_dim:
            if cond is None:
                raise InvalidArgumentError("model expects a conditioning vector")
            C = np.asarray(cond, dtype=np.float64)
            C = C.reshape(1, -1) if C.ndim == 1 else C
            if C.shape != (X.shape[0], self.cond_dim):
                raise InvalidArgumentError(
                    f"condition has shape {C.shape}, expected ({X.shape[0]}, {self.cond_dim})")
            parts.append(C)
        elif cond is not None:
            raise InvalidArgumentError("model takes no conditioning vector")
        return np.concatenate(parts, axis=1), single

    def raw_forward(self, X_in: np.ndarray, want_cache: bool = False):
        """Forward pass on an assembled input batch; optionally keep caches."""
        h = X_in
        cache = [h] if want_cache else None
        n_layers = len(self.weights)
        for i in range(n_layers - 1):
            pre = h @ self.weights[i] + self.biases[i]
            h = _softplus(pre)
            if want_cache:
                cache.append(pre)
                cache.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return (out, cache) if want_cache else out

    def score_scale(self, t) -> np.ndarray:
        """Denominator turning the raw output into a score prediction."""
        if self.sde is None:
            return np.ones_like(np.atleast_1d(np.asarray(t, np.float64)))
        v0 = np.sqrt(np.maximum(self.sde.v0_sq_of(np.atleast_1d(t)), 0.0))
        return np.maximum(v0, _SCALE_FLOOR)

    def forward(self, x, t, cond=None) -> np.ndarray:
        """Evaluate s(x, t); deterministic given weights and inputs."""
        X_in, single = self._assemble(x, t, cond)
        raw = self.raw_forward(X_in)
        if self.sde is not None:
            scale = self.score_scale(np.broadcast_to(np.asarray(t, np.float64),
                                                     (X_in.shape[0],)))
            raw = -raw / scale[:, None]
        return raw[0] if single else raw

    __call__ = forward

    def backward(self, X_in: np.ndarray, cache: list, d_out: np.ndarray,
                 need_input_grad: bool = False):
        """Backprop an output cotangent to parameter (and input) gradients."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        d = d_out
        grads_w[-1] = cache[-1].T @ d
        grads_b[-1] = d.sum(axis=0)
        d = d @ self.weights[-1].T
        for i in range(len(self.weights) - 2, -1, -1):
            pre = cache[1 + 2 * i]
            h_in = cache[2 * i]
            d = d * _sigmoid(pre)
            grads_w[i] = h_in.T @ d
            grads_b[i] = d.sum(axis=0)
            d = d @ self.weights[i].T
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.append(gw)
            grads.append(gb)
        if need_input_grad:
            return grads, d
        return grads

    def input_gradient(self, x, t, cotangent, cond=None) -> np.ndarray:
        """Gradient of ``sum(cotangent * raw(x, t))`` w.r.t. the data part of x."""
        X_in, single = self._assemble(x, t, cond)
        _, cache = self.raw_forward(X_in, want_cache=True)
        cot = np.asarray(cotangent, dtype=np.float64)
        cot = cot.reshape(1, -1) if cot.ndim == 1 else cot
        _, d_in = self.backward(X_in, cache, cot, need_input_grad=True)
        dx = d_in[:, : self.data_dim]
        return dx[0] if single else dx


def loss_and_grads(model: ScoreModel, x, t, targets, weights=None, cond=None):
    """Weighted mean squared error of model outputs and its analytic gradients.

    Per-sample weights are nonnegative; the loss is normalized by their sum
    (zero total weight yields a zero loss and zero gradients).
    """
    X_in, _ = model._assemble(x, t, cond)
    if X_in.shape[0] == 0:
        raise InvalidArgumentError("empty batch")
    tgt = np.asarray(targets, dtype=np.float64)
    tgt = tgt.reshape(1, -1) if tgt.ndim == 1 else tgt
    if weights is None:
        w = np.ones(X_in.shape[0])
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if np.any(w < 0):
            raise InvalidArgumentError("weights must be nonnegative")
    raw, cache = model.raw_forward(X_in, want_cache=True)
    if model.sde is not None:
        scale = model.score_scale(np.broadcast_to(np.asarray(t, np.float64),
                                                  (X_in.shape[0],)))
        out = -raw / scale[:, None]
    else:
        scale = None
        out = raw
    resid = out - tgt
    w_sum = float(w.sum())
    if w_sum == 0.0:
        zero = [np.zeros_like(p) for p in model.parameters()]
        return 0.0, zero
    loss = float(np.sum(w[:, None] * resid**2) / w_sum)
    d_out = 2.0 * w[:, None] * resid / w_sum
    if scale is not None:
        d_out = -d_out / scale[:, None]
    grads = model.backward(X_in, cache, d_out)
    return loss, grads


@dataclass
class AdamState:
    """Bias-corrected adaptive-moment optimizer state."""

    m: list
    v: list
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: ScoreModel, learning_rate: float = 1e-3,
                  beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        params = model.parameters()
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params],
                   step=0, learning_rate=learning_rate, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(model: ScoreModel, grads: list, state: AdamState):
    """Apply one bias-corrected adaptive-moment update in place."""
    params = model.parameters()
    if len(grads) != len(params):
        raise InvalidArgumentError("gradient list does not match parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise InvalidArgumentError(
                f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model, state


# -- checkpoint container -------------------------------------------------


def save_checkpoint(model: ScoreModel, path, extra: dict | None = None) -> None:
    """Write a model to the versioned RSDE-CKPT-1 container.

    Layout: magic line, one JSON header line (layer widths, embedding width,
    conditioning width, schedule parameters, arbitrary ``extra`` metadata),
    then the flat little-endian float64 weight arrays in layer order.
    """
    header = {
        "data_dim": model.data_dim,
        "hidden": list(model.hidden),
        "time_frequencies": model.time_frequencies,
        "cond_dim": model.cond_dim,
        "out_dim": model.out_dim,
        "activation": model.activation,
        "sde": None if model.sde is None else {
            "family": model.sde.family, "T": model.sde.T,
            "beta_min": model.sde.beta_min, "beta_max": model.sde.beta_max,
            "sigma_min": model.sde.sigma_min, "sigma_max": model.sde.sigma_max,
            "dim": model.sde.dim,
        },
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        fh.write((CHECKPOINT_MAGIC + "\n").encode("ascii"))
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        for p in model.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ScoreModel, dict]:
    """Read a model and its extra metadata back from an RSDE-CKPT-1 file."""
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii").strip()
        if magic != CHECKPOINT_MAGIC:
            raise InvalidArgumentError(f"not a {CHECKPOINT_MAGIC} checkpoint: {path}")
        header = json.loads(fh.readline().decode("utf-8"))
        blob = fh.read()
    sde = None
    if header["sde"] is not None:
        sde = SDESpec(**header["sde"])
    model = ScoreModel.create(header["data_dim"], tuple(header["hidden"]),
                              header["time_frequencies"], header["cond_dim"],
                              header["out_dim"], sde=sde)
    offset = 0
    for p in model.parameters():
        n = p.size
        vals = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
        p[...] = vals.reshape(p.shape)
        offset += n * 8
    if offset != len(blob):
        raise InvalidArgumentError("checkpoint weight payload has unexpected size")
    return model, header.get("extra", {})
