"""Recurrent and dense layers with hand-written backward passes, plus Adam.

Every forward function accepts either a single sequence of shape ``(T, D)``
or a batch of shape ``(B, T, D)``; outputs keep the same leading layout.
Gradients returned by the backward functions are summed over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ContractViolation
from .numeric import DTYPE, check_shape

GATES = ("input", "forget", "cell", "output")


def _batched(x, width: int, name: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=DTYPE)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1] == 0:
        raise ContractViolation(f"{name}: expected (T, {width}) or (B, T, {width}), got {x.shape}")
    if x.shape[2] != width:
        raise ContractViolation(f"{name}: input width {x.shape[2]} does not match layer width {width}")
    return x, single


def _initial_state(s, batch: int, hidden: int, name: str) -> np.ndarray:
    if s is None:
        return np.zeros((batch, hidden), dtype=DTYPE)
    s = np.asarray(s, dtype=DTYPE)
    if s.ndim == 1:
        s = np.broadcast_to(s, (batch, s.shape[0]))
    check_shape(name, s, (batch, hidden))
    return s


class _ArrayBundle:
    """Mixin for dataclasses whose fields are all numpy arrays."""

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def zeros_like(self):
        return type(self)(**{k: np.zeros_like(v) for k, v in self.arrays().items()})

    def copy(self):
        return type(self)(**{k: v.copy() for k, v in self.arrays().items()})

    def scaled(self, k: float):
        return type(self)(**{n: k * v for n, v in self.arrays().items()})

    def __add__(self, other):
        return type(self)(**{k: v + getattr(other, k) for k, v in self.arrays().items()})


# --------------------------------------------------------------------------
# Parameter containers
# --------------------------------------------------------------------------


@dataclass
class RnnParams(_ArrayBundle):
    w_ih: np.ndarray  # (H, D_in)
    w_hh: np.ndarray  # (H, H)
    b_ih: np.ndarray  # (H,)
    b_hh: np.ndarray  # (H,)

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_ih.shape[1]


@dataclass
class LstmParams(_ArrayBundle):
    """LSTM weights with the four gates stacked row-wise.

    Row block ``k*H:(k+1)*H`` of every array belongs to ``GATES[k]``
    (input, forget, cell, output). Both an input-side and a recurrent-side
    bias are kept per gate.
    """

    w_ih: np.ndarray  # (4H, D_in)
    w_hh: np.ndarray  # (4H, H)
    b_ih: np.ndarray  # (4H,)
    b_hh: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_ih.shape[1]

    def gate(self, name: str) -> dict[str, np.ndarray]:
        """Views of the weights belonging to one gate."""
        k = GATES.index(name)
        H = self.hidden
        rows = slice(k * H, (k + 1) * H)
        return {n: a[rows] for n, a in self.arrays().items()}


@dataclass
class FcParams(_ArrayBundle):
    w: np.ndarray  # (1, H)
    b: np.ndarray  # (1,)

    @property
    def hidden(self) -> int:
        return self.w.shape[1]


def _uniform(rng: np.random.Generator, bound: float, shape) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE, copy=False)


def init_lstm(rng: np.random.Generator, input_size: int, hidden: int) -> LstmParams:
    if input_size < 1 or hidden < 1:
        raise ContractViolation(f"invalid LSTM dims D_in={input_size}, H={hidden}")
    k = 1.0 / np.sqrt(hidden)
    return LstmParams(
        w_ih=_uniform(rng, k, (4 * hidden, input_size)),
        w_hh=_uniform(rng, k, (4 * hidden, hidden)),
        b_ih=_uniform(rng, k, (4 * hidden,)),
        b_hh=_uniform(rng, k, (4 * hidden,)),
    )


def init_rnn(rng: np.random.Generator, input_size: int, hidden: int) -> RnnParams:
    if input_size < 1 or hidden < 1:
        raise ContractViolation(f"invalid RNN dims D_in={input_size}, H={hidden}")
    k = 1.0 / np.sqrt(hidden)
    return RnnParams(
        w_ih=_uniform(rng, k, (hidden, input_size)),
        w_hh=_uniform(rng, k, (hidden, hidden)),
        b_ih=_uniform(rng, k, (hidden,)),
        b_hh=_uniform(rng, k, (hidden,)),
    )


def init_fc(rng: np.random.Generator, hidden: int) -> FcParams:
    if hidden < 1:
        raise ContractViolation(f"invalid FC width H={hidden}")
    k = 1.0 / np.sqrt(hidden)
    return FcParams(w=_uniform(rng, k, (1, hidden)), b=_uniform(rng, k, (1,)))


# --------------------------------------------------------------------------
# Plain RNN
# --------------------------------------------------------------------------


@dataclass
class RnnCache:
    x: np.ndarray  # (B, T, D)
    h: np.ndarray  # (B, T+1, H); h[:, 0] is the initial state
    single: bool = False

    @property
    def steps(self) -> int:
        return self.x.shape[1]


def rnn_forward(p: RnnParams, x_seq, h0=None) -> tuple[np.ndarray, RnnCache]:
    x, single = _batched(x_seq, p.input_size, "rnn_forward")
    B, T, _ = x.shape
    H = p.hidden
    h = np.empty((B, T + 1, H), dtype=DTYPE)
    h[:, 0] = _initial_state(h0, B, H, "rnn_forward h0")
    xw = x @ p.w_ih.T + p.b_ih
    for t in range(T):
        h[:, t + 1] = np.tanh(xw[:, t] + p.b_hh + h[:, t] @ p.w_hh.T)
    out = h[:, 1:]
    return (out[0] if single else out), RnnCache(x=x, h=h, single=single)


def rnn_backward(p: RnnParams, cache: RnnCache, dh_seq) -> tuple[RnnParams, np.ndarray]:
    dh_seq = np.asarray(dh_seq, dtype=DTYPE)
    if cache.single and dh_seq.ndim == 2:
        dh_seq = dh_seq[None]
    check_shape("rnn_backward dh_seq", dh_seq, cache.h[:, 1:].shape)
    B, T, H = dh_seq.shape
    dpre = np.empty_like(dh_seq)
    carry = np.zeros((B, H), dtype=DTYPE)
    for t in reversed(range(T)):
        ht = cache.h[:, t + 1]
        dpre[:, t] = (dh_seq[:, t] + carry) * (1.0 - ht * ht)
        carry = dpre[:, t] @ p.w_hh
    flat = dpre.reshape(B * T, H)
    db = flat.sum(axis=0)
    grads = RnnParams(
        w_ih=flat.T @ cache.x.reshape(B * T, -1),
        w_hh=flat.T @ cache.h[:, :-1].reshape(B * T, H),
        b_ih=db,
        b_hh=db.copy(),
    )
    dx = dpre @ p.w_ih
    return grads, (dx[0] if cache.single else dx)


# --------------------------------------------------------------------------
# LSTM
# --------------------------------------------------------------------------


@dataclass
class LstmCache:
    """Everything the backward pass needs, stored time-major."""

    x: np.ndarray  # (T, B, D) layer input
    h: np.ndarray  # (T+1, B, H) hidden states, h[0] = h0
    c: np.ndarray  # (T+1, B, H) cell states, c[0] = c0
    pre: np.ndarray  # (T, B, 4H) gate pre-activations
    act: np.ndarray  # (T, B, 4H) gate activations (sigmoid, sigmoid, tanh, sigmoid)
    tanh_c: np.ndarray  # (T, B, H)
    single: bool = False

    @property
    def steps(self) -> int:
        return self.x.shape[0]

    def outputs(self) -> np.ndarray:
        """Hidden sequence in the caller's layout."""
        out = self.h[1:].transpose(1, 0, 2)
        return out[0] if self.single else out


def _gate_affine(H: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # sigmoid(z) = 0.5 + 0.5*tanh(z/2), so all four gates become one tanh call:
    # act = tanh(z * scale) * mul + add
    half = np.full(H, 0.5)
    one = np.ones(H)
    zero = np.zeros(H)
    scale = np.concatenate([half, half, one, half])
    add = np.concatenate([half, half, zero, half])
    return scale, scale, add


def lstm_forward(p: LstmParams, x_seq, h0=None, c0=None) -> tuple[np.ndarray, LstmCache]:
    x, single = _batched(x_seq, p.input_size, "lstm_forward")
    B, T, _ = x.shape
    H = p.hidden
    x = np.ascontiguousarray(x.transpose(1, 0, 2))
    h = np.empty((T + 1, B, H), dtype=DTYPE)
    c = np.empty((T + 1, B, H), dtype=DTYPE)
    h[0] = _initial_state(h0, B, H, "lstm_forward h0")
    c[0] = _initial_state(c0, B, H, "lstm_forward c0")
    pre = x @ p.w_ih.T
    pre += p.b_ih + p.b_hh
    act = np.empty_like(pre)
    tanh_c = np.empty((T, B, H), dtype=DTYPE)
    w_hh_t = p.w_hh.T
    scale, mul, add = _gate_affine(H)
    for t in range(T):
        z = pre[t]
        z += h[t] @ w_hh_t
        a = act[t]
        np.tanh(z * scale, out=a)
        a *= mul
        a += add
        g4 = a.reshape(B, 4, H)
        ct = c[t + 1]
        np.multiply(g4[:, 1], c[t], out=ct)
        ct += g4[:, 0] * g4[:, 2]
        tc = tanh_c[t]
        np.tanh(ct, out=tc)
        np.multiply(g4[:, 3], tc, out=h[t + 1])
    cache = LstmCache(x=x, h=h, c=c, pre=pre, act=act, tanh_c=tanh_c, single=single)
    return cache.outputs(), cache


def lstm_backward(p: LstmParams, cache: LstmCache, dh_seq) -> tuple[LstmParams, np.ndarray]:
    """Backpropagation through time for one LSTM layer.

    ``dh_seq[t]`` is the loss gradient arriving at output ``h_t`` from
    above. Returns parameter gradients (summed over the batch) and the
    gradient with respect to every input vector.
    """
    dh_seq = np.asarray(dh_seq, dtype=DTYPE)
    if cache.single and dh_seq.ndim == 2:
        dh_seq = dh_seq[None]
    T, B, H = cache.tanh_c.shape
    check_shape("lstm_backward dh_seq", dh_seq, (B, T, H))
    if p.input_size != cache.x.shape[2] or p.hidden != H:
        raise ContractViolation("lstm_backward: cache was recorded with different layer dims")
    dh_seq = dh_seq.transpose(1, 0, 2)
    act = cache.act
    a4 = act.reshape(T, B, 4, H)
    # Local derivative of each gate activation w.r.t. its pre-activation.
    dact = act * (1.0 - act)
    dact4 = dact.reshape(T, B, 4, H)
    dact4[:, :, 2] = 1.0 - a4[:, :, 2] ** 2
    # Factors multiplying dc in the input, forget and cell-candidate gradients.
    partner = np.empty((T, B, 3, H), dtype=DTYPE)
    partner[:, :, 0] = a4[:, :, 2]
    partner[:, :, 1] = cache.c[:-1]
    partner[:, :, 2] = a4[:, :, 0]
    tc = cache.tanh_c
    o_dtanh = a4[:, :, 3] * (1.0 - tc * tc)
    forget = a4[:, :, 1]

    dpre = np.empty((T, B, 4 * H), dtype=DTYPE)
    dh_next = np.zeros((B, H), dtype=DTYPE)
    dc = np.zeros((B, H), dtype=DTYPE)
    w_hh = p.w_hh
    for t in reversed(range(T)):
        dh = dh_seq[t] + dh_next
        dc += dh * o_dtanh[t]
        d = dpre[t]
        d4 = d.reshape(B, 4, H)
        np.multiply(dc[:, None, :], partner[t], out=d4[:, :3])
        np.multiply(dh, tc[t], out=d4[:, 3])
        d *= dact[t]
        dc *= forget[t]
        dh_next = d @ w_hh
    flat = dpre.reshape(T * B, 4 * H)
    db = flat.sum(axis=0)
    grads = LstmParams(
        w_ih=flat.T @ cache.x.reshape(T * B, -1),
        w_hh=flat.T @ cache.h[:-1].reshape(T * B, H),
        b_ih=db,
        b_hh=db.copy(),
    )
    dx = (dpre @ p.w_ih).transpose(1, 0, 2)
    return grads, (dx[0] if cache.single else dx)


# --------------------------------------------------------------------------
# Fully connected head
# --------------------------------------------------------------------------


def fc_forward(p: FcParams, h) -> np.ndarray:
    """``y = w . h + b`` over the last axis; a 1-D input gives a 0-d result."""
    h = np.asarray(h, dtype=DTYPE)
    if h.shape[-1] != p.hidden:
        raise ContractViolation(f"fc_forward: input width {h.shape[-1]} != {p.hidden}")
    return h @ p.w[0] + p.b[0]


def fc_backward(p: FcParams, h, dy) -> tuple[FcParams, np.ndarray]:
    h = np.asarray(h, dtype=DTYPE)
    dy = np.asarray(dy, dtype=DTYPE)
    if h.shape[-1] != p.hidden:
        raise ContractViolation(f"fc_backward: input width {h.shape[-1]} != {p.hidden}")
    if dy.shape != h.shape[:-1]:
        raise ContractViolation(f"fc_backward: dy shape {dy.shape} vs inputs {h.shape[:-1]}")
    flat_h = h.reshape(-1, p.hidden)
    flat_dy = dy.reshape(-1)
    grads = FcParams(w=(flat_dy @ flat_h)[None, :], b=np.array([flat_dy.sum()]))
    dh = dy[..., None] * p.w[0]
    return grads, dh


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.items()},
            v={k: np.zeros_like(a) for k, a in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    hyper: AdamHyper = AdamHyper(),
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied in place.

    The parameter and moment arrays are modified in place and also returned
    so the call reads naturally either way.
    """
    if set(params) != set(grads) or set(params) != set(state.m):
        raise ContractViolation(
            f"adam_step: key mismatch params={sorted(params)} grads={sorted(grads)} state={sorted(state.m)}"
        )
    for k, p in params.items():
        if grads[k].shape != p.shape or state.m[k].shape != p.shape:
            raise ContractViolation(
                f"adam_step: shape mismatch for {k!r}: param {p.shape}, grad {grads[k].shape}"
            )
    state.t += 1
    bc1 = 1.0 - hyper.beta1**state.t
    bc2 = 1.0 - hyper.beta2**state.t
    for k, p in params.items():
        g = grads[k]
        m, v = state.m[k], state.v[k]
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * (g * g)
        p -= hyper.lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
    return params, state
