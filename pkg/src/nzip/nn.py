"""Minimal deterministic tensor engine with reverse-mode differentiation.

Everything is float32 and single-threaded numpy with a fixed reduction
order, because the decoder must re-derive the encoder's probabilities bit
for bit.  The layer set is exactly what the predictors need: embedding,
dense (with optional relu), GRU / bidirectional GRU, residual block,
softmax, cross-entropy, plus gradient clipping and Adam.

The GRU is a fused graph node: forward runs the whole recurrence in one
python loop and stashes the per-step activations; backward replays the
loop in reverse (manual truncated-BPTT over the full window).  That keeps
the graph small and the op count per window bounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError

_f32 = np.float32

_grad_enabled = True


class no_grad:
    """Context manager suppressing graph construction (inference paths)."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved


class Tensor:
    """A float32 array plus an optional backward closure.

    grad is allocated lazily; leaf tensors created with requires_grad=True
    (parameters) keep their grad buffer across backward calls so gradients
    accumulate until zero_grad.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=_f32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        t = Tensor(self.data)
        t.data = self.data  # share storage; no graph edge
        return t

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._parents = ()
    out._backward_fn = None
    out.requires_grad = False
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def backward(loss: Tensor, seed: float = 1.0) -> None:
    """Reverse-mode sweep from a scalar loss; grads accumulate into leaves.

    `seed` scales the whole gradient, which is how interval-accumulated
    losses are averaged without touching the graph.
    """
    if loss.data.size != 1:
        raise ValueError("backward starts from a scalar loss")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited or node._backward_fn is None:
            continue
        visited.add(id(node))
        stack.append((node, True))
        # parents pushed in reverse so they pop in declaration order
        for p in reversed(node._parents):
            if p._backward_fn is not None and id(p) not in visited:
                stack.append((p, False))
    loss._accumulate(np.full_like(loss.data, _f32(seed)))
    for node in reversed(topo):
        node._backward_fn(node.grad)


# ---------------------------------------------------------------------------
# elementwise / shaping ops


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _node(data, (a, b), bwd)


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, _f32(0))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * (x.data > 0))

    return _node(data, (x,), bwd)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _node(data, tuple(tensors), bwd)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = x.data.reshape(shape)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.data.shape))

    return _node(data, (x,), bwd)


def transpose01(x: Tensor) -> Tensor:
    """Swap the first two axes (batch-major <-> time-major)."""
    data = np.ascontiguousarray(np.swapaxes(x.data, 0, 1))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(np.swapaxes(g, 0, 1))

    return _node(data, (x,), bwd)


# ---------------------------------------------------------------------------
# layers


def embedding_forward(indices: np.ndarray, table: Tensor) -> Tensor:
    """Row gather: output shape = indices.shape + (E,)."""
    if indices.size and int(indices.max()) >= table.data.shape[0]:
        raise IndexError("symbol index outside the embedding table")
    data = table.data[indices]

    def bwd(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, indices, g)

    return _node(data, (table,), bwd)


def dense_forward(x: Tensor, W: Tensor, b: Tensor, activation: str = "none") -> Tensor:
    """y = x @ W + b, optionally relu-clamped.  x is (B, F)."""
    if activation not in ("none", "relu"):
        raise ValueError(f"unknown activation {activation!r}")
    pre = x.data @ W.data + b.data
    data = np.maximum(pre, _f32(0)) if activation == "relu" else pre

    def bwd(g):
        gz = g * (pre > 0) if activation == "relu" else g
        if W.requires_grad:
            W._accumulate(x.data.T @ gz)
        if b.requires_grad:
            b._accumulate(gz.sum(axis=0))
        if x.requires_grad:
            x._accumulate(gz @ W.data.T)

    return _node(data, (x, W, b), bwd)


def residual_block_forward(x: Tensor, W1: Tensor, b1: Tensor, W2: Tensor, b2: Tensor) -> Tensor:
    """out = x + dense(relu-dense(x)); all widths equal."""
    if W1.data.shape[0] != W2.data.shape[1] or x.data.shape[-1] != W1.data.shape[0]:
        raise ValueError("residual block requires equal input/output widths")
    hidden = dense_forward(x, W1, b1, activation="relu")
    return add(x, dense_forward(hidden, W2, b2, activation="none"))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _f32(1) / (_f32(1) + np.exp(-x))


@dataclass
class GruParams:
    """One direction of one GRU layer.  Gate columns are [update | reset]."""

    Wxg: Tensor  # (E, 2H) input -> gates
    Whg: Tensor  # (H, 2H) state -> gates
    bg: Tensor  # (2H,)
    Wxc: Tensor  # (E, H) input -> candidate
    Whc: Tensor  # (H, H) state -> candidate
    bc: Tensor  # (H,)

    def tensors(self) -> tuple[Tensor, ...]:
        return (self.Wxg, self.Whg, self.bg, self.Wxc, self.Whc, self.bc)


def gru_forward(x: Tensor, p: GruParams, h0: np.ndarray | None = None) -> Tensor:
    """Run the GRU over time-major input (T, B, E); returns all states (T, B, H).

    h_t = z*h_{t-1} + (1-z)*tanh(Wxc x_t + Whc (r*h_{t-1}) + bc), gates z and r
    sigmoid-activated.  The whole recurrence is one graph node; backward
    replays it in reverse.
    """
    X = x.data
    T, B, E = X.shape
    H = p.Whc.data.shape[0]
    # input projections for every step at once
    Xf = X.reshape(T * B, E)
    Xg = (Xf @ p.Wxg.data + p.bg.data).reshape(T, B, 2 * H)
    Xc = (Xf @ p.Wxc.data).reshape(T, B, H)

    h = np.zeros((B, H), dtype=_f32) if h0 is None else h0.astype(_f32)
    Z = np.empty((T, B, H), dtype=_f32)
    R = np.empty((T, B, H), dtype=_f32)
    C = np.empty((T, B, H), dtype=_f32)
    Hs = np.empty((T + 1, B, H), dtype=_f32)
    Hs[0] = h
    for t in range(T):
        gates = Xg[t] + Hs[t] @ p.Whg.data
        z = _sigmoid(gates[:, :H])
        r = _sigmoid(gates[:, H:])
        c = np.tanh(Xc[t] + (r * Hs[t]) @ p.Whc.data + p.bc.data)
        Z[t], R[t], C[t] = z, r, c
        Hs[t + 1] = z * Hs[t] + (_f32(1) - z) * c
    out = Hs[1:]
    if not np.isfinite(out[-1]).all():
        raise NumericError("non-finite GRU activation")

    def bwd(g):
        dXg = np.empty((T, B, 2 * H), dtype=_f32)
        dXc = np.empty((T, B, H), dtype=_f32)
        dWhg = np.zeros_like(p.Whg.data)
        dWhc = np.zeros_like(p.Whc.data)
        dbc = np.zeros_like(p.bc.data)
        dh = np.zeros((B, H), dtype=_f32)
        for t in range(T - 1, -1, -1):
            dh = dh + g[t]
            z, r, c, hp = Z[t], R[t], C[t], Hs[t]
            dz = dh * (hp - c)
            dc = dh * (_f32(1) - z)
            dhp = dh * z
            dc_pre = dc * (_f32(1) - c * c)
            dXc[t] = dc_pre
            dbc += dc_pre.sum(axis=0)
            dWhc += (r * hp).T @ dc_pre
            d_rh = dc_pre @ p.Whc.data.T
            dhp += d_rh * r
            dr = d_rh * hp
            dg_t = np.concatenate([dz * z * (_f32(1) - z), dr * r * (_f32(1) - r)], axis=1)
            dXg[t] = dg_t
            dWhg += hp.T @ dg_t
            dhp += dg_t @ p.Whg.data.T
            dh = dhp
        dXgf = dXg.reshape(T * B, 2 * H)
        dXcf = dXc.reshape(T * B, H)
        if p.Wxg.requires_grad:
            p.Wxg._accumulate(Xf.T @ dXgf)
            p.bg._accumulate(dXgf.sum(axis=0))
            p.Wxc._accumulate(Xf.T @ dXcf)
            p.Whg._accumulate(dWhg)
            p.Whc._accumulate(dWhc)
            p.bc._accumulate(dbc)
        if x.requires_grad:
            x._accumulate((dXgf @ p.Wxg.data.T + dXcf @ p.Wxc.data.T).reshape(T, B, E))

    return _node(out, (x, *p.tensors()), bwd)


def reverse_time(x: Tensor) -> Tensor:
    data = np.ascontiguousarray(x.data[::-1])

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g[::-1])

    return _node(data, (x,), bwd)


def bigru_forward(x: Tensor, p_fwd: GruParams, p_bwd: GruParams) -> Tensor:
    """Forward GRU over x, another over reversed x (re-reversed), concatenated
    per step: (T, B, E) -> (T, B, 2H)."""
    fwd = gru_forward(x, p_fwd)
    bwd_states = reverse_time(gru_forward(reverse_time(x), p_bwd))
    return concat([fwd, bwd_states], axis=2)


def select_steps(x: Tensor, steps: tuple[int, ...]) -> Tensor:
    """Pick time steps from (T, B, C) and flatten to (B, len(steps)*C)."""
    idx = list(steps)
    T, B, C = x.data.shape
    data = np.ascontiguousarray(x.data[idx].transpose(1, 0, 2)).reshape(B, len(idx) * C)

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[idx] = g.reshape(B, len(idx), C).transpose(1, 0, 2)
            x._accumulate(full)

    return _node(data, (x,), bwd)


# ---------------------------------------------------------------------------
# probabilities and losses


def softmax(logits: Tensor) -> Tensor:
    """Stable softmax along the last axis."""
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        if logits.requires_grad:
            dot = (g * p).sum(axis=-1, keepdims=True)
            logits._accumulate(p * (g - dot))

    return _node(p, (logits,), bwd)


def softmax_batch(logits: np.ndarray) -> np.ndarray:
    """Array-in, array-out softmax for inference paths (no graph)."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(y_true: np.ndarray, yhat: np.ndarray) -> float:
    """Mean -log2 of the probability assigned to the true symbol.

    y_true may be one-hot rows or an index vector; yhat is a batch of
    distributions.  Evaluation helper only (no gradient).
    """
    yhat = np.atleast_2d(yhat)
    if y_true.ndim == yhat.ndim:
        idx = y_true.argmax(axis=-1)
    else:
        idx = y_true
    p = yhat[np.arange(yhat.shape[0]), idx]
    return float(np.mean(-np.log2(np.maximum(p, 1e-38))))


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Fused stable softmax + mean natural-log cross-entropy (training loss).

    Gradient is the classic (softmax - onehot) / batch.
    """
    z = logits.data
    B = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    sum_e = e.sum(axis=1, keepdims=True)
    logp = shifted - np.log(sum_e)
    loss = -logp[np.arange(B), targets].mean(dtype=np.float64)
    if not np.isfinite(loss):
        raise NumericError("non-finite training loss")
    p = e / sum_e

    def bwd(g):
        if logits.requires_grad:
            dz = p.copy()
            dz[np.arange(B), targets] -= _f32(1)
            logits._accumulate(dz * (g / _f32(B)))

    return _node(np.array(loss, dtype=_f32), (logits,), bwd)


def mix_logits(logits_b: Tensor, logits_s: Tensor, theta: Tensor) -> Tensor:
    """Convex combination lam*b + (1-lam)*s with lam = sigmoid(theta)."""
    lam = _sigmoid(theta.data.reshape(()))
    data = lam * logits_b.data + (_f32(1) - lam) * logits_s.data

    def bwd(g):
        if logits_b.requires_grad:
            logits_b._accumulate(g * lam)
        if logits_s.requires_grad:
            logits_s._accumulate(g * (_f32(1) - lam))
        if theta.requires_grad:
            diff = (g * (logits_b.data - logits_s.data)).sum(dtype=np.float64)
            theta._accumulate(np.array([lam * (1 - lam) * diff], dtype=_f32).reshape(theta.data.shape))

    return _node(data, (logits_b, logits_s, theta), bwd)


# ---------------------------------------------------------------------------
# parameters and optimization


@dataclass(frozen=True)
class AdamConfig:
    lr: float
    beta1: float
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.lr <= 0 or self.eps <= 0 or self.clip_norm <= 0:
            raise ValueError("lr, eps and clip_norm must be positive")


class ParameterStore:
    """Ordered named parameters plus Adam moment state.

    Iteration (and therefore serialization) order is insertion order, which
    both ends of the codec reproduce by building the store identically.
    """

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.t = 0

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(data, requires_grad=True)
        t.zero_grad()
        self._params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def param_count(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def to_vector(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self._params.values()])

    def from_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=_f32)
        if vec.size != self.param_count():
            raise ValueError("parameter vector size mismatch")
        pos = 0
        for t in self._params.values():
            n = t.data.size
            t.data = vec[pos : pos + n].reshape(t.data.shape).copy()
            pos += n


def clip_gradients(store: ParameterStore, clip_norm: float) -> float:
    """Scale all grads so the global L2 norm is at most clip_norm.

    Returns the factor applied (1.0 when under the ceiling).  The norm is
    accumulated in float64 in fixed parameter order.
    """
    total = 0.0
    for t in store._params.values():
        total += float(np.dot(t.grad.ravel(), t.grad.ravel()))
    norm = total**0.5
    if not np.isfinite(norm):
        raise NumericError("non-finite gradient norm")
    if norm <= clip_norm or norm == 0.0:
        return 1.0
    factor = clip_norm / norm
    f = _f32(factor)
    for t in store._params.values():
        t.grad *= f
    return factor


def adam_step(store: ParameterStore, cfg: AdamConfig) -> None:
    """One Adam update with bias correction; increments the shared counter."""
    store.t += 1
    b1, b2 = _f32(cfg.beta1), _f32(cfg.beta2)
    c1 = _f32(1.0 / (1.0 - cfg.beta1**store.t))
    c2 = _f32(1.0 / (1.0 - cfg.beta2**store.t))
    lr = _f32(cfg.lr)
    eps = _f32(cfg.eps)
    for name, t in store._params.items():
        g = t.grad
        m = store._m[name]
        v = store._v[name]
        m *= b1
        m += (_f32(1) - b1) * g
        v *= b2
        v += (_f32(1) - b2) * g * g
        t.data -= lr * (m * c1) / (np.sqrt(v * c2) + eps)
