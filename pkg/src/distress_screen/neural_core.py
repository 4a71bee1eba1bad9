"""Small numpy neural-network kernels with hand-written backward passes.

All arrays are float64 and batched along the leading axis:
dense inputs are [B, in], sequences are [B, T, in]. LSTM gate blocks are
stacked in the order input, forget, cell candidate, output (i, f, g, o).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise DimensionError(msg)


# -- activations & loss ----------------------------------------------------


def sigmoid(x):
    """Logistic function, evaluated without overflow for any finite input."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return out if out.ndim else float(out)


def relu(x):
    return np.maximum(x, 0.0)


PROB_CLAMP = 1e-7


def bce_loss(p, y):
    """Binary cross-entropy and its gradient w.r.t. the logit that produced ``p``.

    Returns (loss, p - y), elementwise.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    grad = p - y
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


# -- initialisation --------------------------------------------------------


def glorot_init(shape, rng: np.random.Generator) -> np.ndarray:
    """Uniform on +-sqrt(6 / (fan_in + fan_out)) for a [fan_out, fan_in] matrix."""
    _require(len(shape) == 2, f"glorot_init needs a 2-D shape, got {shape}")
    fan_out, fan_in = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def orthogonal_init(shape, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


# -- dense -----------------------------------------------------------------


@dataclass
class DenseParams:
    W: np.ndarray  # [out, in]
    b: np.ndarray  # [out]

    @classmethod
    def init(cls, n_in: int, n_out: int, rng) -> "DenseParams":
        return cls(glorot_init((n_out, n_in), rng), np.zeros(n_out))

    def arrays(self) -> dict:
        return {"W": self.W, "b": self.b}


def dense_forward(x: np.ndarray, p: DenseParams) -> np.ndarray:
    _require(x.shape[-1] == p.W.shape[1], f"dense expects {p.W.shape[1]} inputs, got {x.shape[-1]}")
    return x @ p.W.T + p.b


def dense_backward(grad_out: np.ndarray, x: np.ndarray, p: DenseParams):
    """Return (grad_x, grad_W, grad_b) for y = x W^T + b."""
    g2 = grad_out.reshape(-1, p.W.shape[0])
    x2 = x.reshape(-1, p.W.shape[1])
    return grad_out @ p.W, g2.T @ x2, g2.sum(axis=0)


# -- LSTM ------------------------------------------------------------------


@dataclass
class LstmParams:
    W: np.ndarray  # [4h, in]
    U: np.ndarray  # [4h, h]
    b: np.ndarray  # [4h]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    @classmethod
    def init(cls, n_in: int, hidden: int, rng) -> "LstmParams":
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0  # forget gate
        return cls(glorot_init((4 * hidden, n_in), rng), orthogonal_init((4 * hidden, hidden), rng), b)

    def arrays(self) -> dict:
        return {"W": self.W, "U": self.U, "b": self.b}


def _gates(x, h_prev, p: LstmParams):
    hd = p.hidden_dim
    z = x @ p.W.T + h_prev @ p.U.T + p.b
    i = sigmoid(z[..., :hd])
    f = sigmoid(z[..., hd : 2 * hd])
    g = np.tanh(z[..., 2 * hd : 3 * hd])
    o = sigmoid(z[..., 3 * hd :])
    return i, f, g, o


def lstm_step(x, h_prev, c_prev, p: LstmParams):
    """One LSTM cell update; returns (h, c)."""
    _require(np.shape(x)[-1] == p.input_dim, f"LSTM expects {p.input_dim} inputs, got {np.shape(x)[-1]}")
    _require(np.shape(h_prev)[-1] == p.hidden_dim and np.shape(c_prev)[-1] == p.hidden_dim,
             "LSTM state size mismatch")
    i, f, g, o = _gates(np.asarray(x, dtype=np.float64), h_prev, p)
    c = f * c_prev + i * g
    return o * np.tanh(c), c


@dataclass
class LstmCache:
    xs: np.ndarray  # [B, T, in]
    hs: list = field(default_factory=list)  # h_0..h_T
    cs: list = field(default_factory=list)
    gates: list = field(default_factory=list)


def lstm_forward(seq: np.ndarray, p: LstmParams):
    """Run over ``seq`` [B, T, in] (or [T, in]) from zero state; return (h_T, cache)."""
    seq = np.asarray(seq, dtype=np.float64)
    squeeze = seq.ndim == 2
    if squeeze:
        seq = seq[None]
    _require(seq.ndim == 3, f"sequence must be [B, T, in], got shape {seq.shape}")
    _require(seq.shape[1] >= 1, "sequence length must be >= 1")
    _require(seq.shape[2] == p.input_dim, f"LSTM expects {p.input_dim} inputs, got {seq.shape[2]}")

    batch = seq.shape[0]
    h = np.zeros((batch, p.hidden_dim))
    c = np.zeros((batch, p.hidden_dim))
    cache = LstmCache(seq, [h], [c])
    for t in range(seq.shape[1]):
        i, f, g, o = _gates(seq[:, t], h, p)
        c = f * c + i * g
        h = o * np.tanh(c)
        cache.hs.append(h)
        cache.cs.append(c)
        cache.gates.append((i, f, g, o))
    return (h[0] if squeeze else h), cache


@dataclass
class LstmGrads:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def arrays(self) -> dict:
        return {"W": self.W, "U": self.U, "b": self.b}


def lstm_backward(grad_h: np.ndarray, cache: LstmCache, p: LstmParams):
    """Backpropagation through time from dL/dh_T; returns (LstmGrads, grad_seq)."""
    squeeze = grad_h.ndim == 1
    dh = grad_h[None] if squeeze else grad_h
    dc = np.zeros_like(dh)
    dW = np.zeros_like(p.W)
    dU = np.zeros_like(p.U)
    db = np.zeros_like(p.b)
    dxs = np.zeros_like(cache.xs)

    for t in range(cache.xs.shape[1] - 1, -1, -1):
        i, f, g, o = cache.gates[t]
        c_prev, c = cache.cs[t], cache.cs[t + 1]
        tc = np.tanh(c)
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=-1,
        )
        dW += dz.T @ cache.xs[:, t]
        dU += dz.T @ cache.hs[t]
        db += dz.sum(axis=0)
        dxs[:, t] = dz @ p.W
        dh = dz @ p.U
        dc = dc * f

    return LstmGrads(dW, dU, db), (dxs[0] if squeeze else dxs)


def bilstm_forward(seq: np.ndarray, p_fwd: LstmParams, p_bwd: LstmParams):
    """Concatenate final states of a forward pass and a pass over the reversed sequence."""
    seq = np.asarray(seq, dtype=np.float64)
    h_f, cache_f = lstm_forward(seq, p_fwd)
    h_b, cache_b = lstm_forward(np.flip(seq, axis=-2), p_bwd)
    return np.concatenate([h_f, h_b], axis=-1), (cache_f, cache_b)


def bilstm_backward(grad_out: np.ndarray, caches, p_fwd: LstmParams, p_bwd: LstmParams):
    """Return (grads_fwd, grads_bwd, grad_seq)."""
    cache_f, cache_b = caches
    hd = p_fwd.hidden_dim
    g_f, dx_f = lstm_backward(grad_out[..., :hd], cache_f, p_fwd)
    g_b, dx_b = lstm_backward(grad_out[..., hd:], cache_b, p_bwd)
    return g_f, g_b, dx_f + np.flip(dx_b, axis=-2)


# -- dropout ---------------------------------------------------------------


def dropout_apply(x: np.ndarray, rate: float, training: bool, rng=None):
    """Inverted dropout. Returns (output, mask); mask is None at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    keep = rng.random(np.shape(x)) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


# -- Adam ------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """Bias-corrected Adam update of ``params`` in place; returns (params, state)."""
    if params.keys() != grads.keys():
        raise DimensionError("parameter and gradient names differ")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = grads[name]
        _require(g.shape == p.shape, f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
