"""Minimal neural-network kernel for the Q-networks: two LSTM layers with
dropout between them and a linear output head, trained by Adam on a
selected-action squared error.

Everything is float64 numpy with hand-written backpropagation; gradients are
verifiable against central finite differences (see `gradient_check`). Batches
are processed as (batch, time, width) tensors; the engine's default state
encoding uses a single timestep.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, DqnasError, NonFiniteLoss

PARAM_NAMES = ("wx1", "wh1", "b1", "wx2", "wh2", "b2", "wd", "bd")
_BLOB_VERSION = 1


@dataclass
class QNetParams:
    input_width: int
    hidden: int
    vocab_size: int
    wx1: np.ndarray
    wh1: np.ndarray
    b1: np.ndarray
    wx2: np.ndarray
    wh2: np.ndarray
    b2: np.ndarray
    wd: np.ndarray
    bd: np.ndarray
    dropout_rates: tuple[float, float] = (0.3, 0.3)

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in PARAM_NAMES]

    def copy(self) -> "QNetParams":
        return QNetParams(
            input_width=self.input_width,
            hidden=self.hidden,
            vocab_size=self.vocab_size,
            dropout_rates=self.dropout_rates,
            **{name: getattr(self, name).copy() for name in PARAM_NAMES},
        )

    def equal_values(self, other: "QNetParams") -> bool:
        return all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in PARAM_NAMES
        )


def init_qnet(
    input_width: int,
    hidden: int,
    vocab_size: int,
    rng: np.random.Generator,
    scale: float = 0.08,
    dropout_rates: tuple[float, float] = (0.3, 0.3),
) -> QNetParams:
    """Uniform [-scale, scale] initialization of both LSTM layers and the head."""
    h = hidden

    def u(*shape: int) -> np.ndarray:
        return rng.uniform(-scale, scale, size=shape)

    return QNetParams(
        input_width=input_width,
        hidden=hidden,
        vocab_size=vocab_size,
        wx1=u(input_width, 4 * h),
        wh1=u(h, 4 * h),
        b1=u(4 * h),
        wx2=u(h, 4 * h),
        wh2=u(h, 4 * h),
        b2=u(4 * h),
        wd=u(h, vocab_size),
        bd=u(vocab_size),
        dropout_rates=dropout_rates,
    )


def layer_parameter_counts(p: QNetParams) -> dict[str, int]:
    """Per-layer learnable-parameter counts; 4*((in + hidden)*hidden + hidden)
    per LSTM layer and (hidden + 1)*vocab for the head."""
    w, h, v = p.input_width, p.hidden, p.vocab_size
    counts = {
        "lstm_1": 4 * ((w + h) * h + h),
        "lstm_2": 4 * ((h + h) * h + h),
        "output_dense": (h + 1) * v,
    }
    counts["total"] = sum(counts.values())
    return counts


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _lstm_forward(
    x: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, list]:
    """x: (B, T, in) -> outputs (B, T, H) plus the per-step cache."""
    B, T, _ = x.shape
    H = wh.shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    outputs = np.empty((B, T, H))
    cache = []
    for t in range(T):
        xt = x[:, t, :]
        z = xt @ wx + h @ wh + b
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        outputs[:, t, :] = h
        cache.append((xt, h_prev, c_prev, i, f, g, o, tanh_c))
    return outputs, cache


def _lstm_backward(
    dout: np.ndarray, cache: list, wx: np.ndarray, wh: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """dout: (B, T, H) gradients on each step's output.

    Returns (dx (B, T, in), dwx, dwh, db)."""
    B, T, H = dout.shape
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(wx.shape[1])
    dx = np.empty((B, T, wx.shape[0]))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(T)):
        xt, h_prev, c_prev, i, f, g, o, tanh_c = cache[t]
        dh = dout[:, t, :] + dh_next
        do = dh * tanh_c
        dc = dh * o * (1.0 - tanh_c**2) + dc_next
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g**2),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dwx += xt.T @ dz
        dwh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dx[:, t, :] = dz @ wx.T
        dh_next = dz @ wh.T
        dc_next = dc * f
    return dx, dwx, dwh, db


def _dropout_mask(
    shape: tuple[int, ...], rate: float, train_mode: bool, rng: np.random.Generator | None
) -> np.ndarray | None:
    """Inverted-scaling dropout mask, or None when dropout is a no-op."""
    if not train_mode or rate <= 0.0:
        return None
    if rng is None:
        raise DqnasError("training-mode dropout requires an RNG")
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward(
    p: QNetParams,
    x: np.ndarray,
    train_mode: bool,
    rng: np.random.Generator | None,
) -> tuple[np.ndarray, dict]:
    """x: (B, T, W) -> Q-values (B, V) plus caches for backprop."""
    out1, cache1 = _lstm_forward(x, p.wx1, p.wh1, p.b1)
    mask1 = _dropout_mask(out1.shape, p.dropout_rates[0], train_mode, rng)
    h1 = out1 if mask1 is None else out1 * mask1
    out2, cache2 = _lstm_forward(h1, p.wx2, p.wh2, p.b2)
    h2 = out2[:, -1, :]
    mask2 = _dropout_mask(h2.shape, p.dropout_rates[1], train_mode, rng)
    h2d = h2 if mask2 is None else h2 * mask2
    q = h2d @ p.wd + p.bd
    cache = {
        "cache1": cache1,
        "cache2": cache2,
        "mask1": mask1,
        "mask2": mask2,
        "h2d": h2d,
        "T": x.shape[1],
    }
    return q, cache


def _backward(p: QNetParams, dq: np.ndarray, cache: dict) -> dict[str, np.ndarray]:
    B, T = dq.shape[0], cache["T"]
    grads: dict[str, np.ndarray] = {}
    grads["wd"] = cache["h2d"].T @ dq
    grads["bd"] = dq.sum(axis=0)
    dh2d = dq @ p.wd.T
    dh2 = dh2d if cache["mask2"] is None else dh2d * cache["mask2"]
    dout2 = np.zeros((B, T, p.hidden))
    dout2[:, -1, :] = dh2
    dh1, grads["wx2"], grads["wh2"], grads["b2"] = _lstm_backward(
        dout2, cache["cache2"], p.wx2, p.wh2
    )
    if cache["mask1"] is not None:
        dh1 = dh1 * cache["mask1"]
    _, grads["wx1"], grads["wh1"], grads["b1"] = _lstm_backward(
        dh1, cache["cache1"], p.wx1, p.wh1
    )
    return grads


def _as_steps(state: np.ndarray, input_width: int) -> np.ndarray:
    arr = np.asarray(state, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2 or arr.shape[1] != input_width:
        raise DimensionMismatch(
            f"state shape {arr.shape} does not match input width {input_width}"
        )
    return arr


def qnet_forward(
    p: QNetParams,
    state: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Q-values (vocab_size,) for one state of shape (T, W) or (W,)."""
    steps = _as_steps(state, p.input_width)
    q, _ = _forward(p, steps[np.newaxis, :, :], train_mode, rng)
    return q[0]


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, p: QNetParams, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(
            lr=lr,
            m={name: np.zeros_like(arr) for name, arr in p.arrays()},
            v={name: np.zeros_like(arr) for name, arr in p.arrays()},
            **kw,
        )

    def apply(self, p: QNetParams, grads: dict[str, np.ndarray]) -> None:
        self.step += 1
        bc1 = 1.0 - self.beta1**self.step
        bc2 = 1.0 - self.beta2**self.step
        for name, arr in p.arrays():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g**2
            arr -= self.lr * (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + self.eps)


def _batch_loss_and_grads(
    p: QNetParams,
    batch: Sequence[tuple[np.ndarray, int, float]],
    train_mode: bool,
    rng: np.random.Generator | None,
) -> tuple[float, dict[str, np.ndarray]]:
    if not batch:
        raise DqnasError("empty training batch")
    total = len(batch)
    states = [_as_steps(s, p.input_width) for s, _, _ in batch]
    grads = {name: np.zeros_like(arr) for name, arr in p.arrays()}
    loss_sum = 0.0
    # Group equal-length states so each group runs as one batched pass.
    by_len: dict[int, list[int]] = {}
    for idx, st in enumerate(states):
        by_len.setdefault(st.shape[0], []).append(idx)
    for length in sorted(by_len):
        idxs = by_len[length]
        x = np.stack([states[i] for i in idxs])
        actions = np.array([batch[i][1] for i in idxs], dtype=np.intp)
        targets = np.array([float(batch[i][2]) for i in idxs])
        q, cache = _forward(p, x, train_mode, rng)
        diff = q[np.arange(len(idxs)), actions] - targets
        loss_sum += float(np.sum(diff**2))
        dq = np.zeros_like(q)
        dq[np.arange(len(idxs)), actions] = 2.0 * diff / total
        for name, g in _backward(p, dq, cache).items():
            grads[name] += g
    return loss_sum / total, grads


def qnet_train_step(
    p: QNetParams,
    batch: Sequence[tuple[np.ndarray, int, float]],
    opt: AdamState,
    rng: np.random.Generator | None = None,
    train_mode: bool = True,
) -> float:
    """One Adam step on the mean squared error of the selected actions'
    Q-values against their targets. Raises NonFiniteLoss (leaving parameters
    untouched) if any target or the loss itself is non-finite."""
    targets = np.array([t for _, _, t in batch], dtype=np.float64)
    if targets.size == 0:
        raise DqnasError("empty training batch")
    if not np.all(np.isfinite(targets)):
        raise NonFiniteLoss("non-finite target in training batch")
    loss, grads = _batch_loss_and_grads(p, batch, train_mode, rng)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"training loss is {loss}")
    opt.apply(p, grads)
    return loss


def gradient_check(
    p: QNetParams,
    sample: tuple[np.ndarray, int, float],
    num_coords: int = 120,
    step: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central finite-difference
    gradients over `num_coords` randomly chosen parameter coordinates.

    Runs with dropout disabled; stochastic layers would break the comparison.
    """
    rng = rng or np.random.default_rng(0)
    state, action, target = sample
    loss_of = lambda: float(
        (qnet_forward(p, state, train_mode=False)[action] - target) ** 2
    )
    _, grads = _batch_loss_and_grads(p, [sample], train_mode=False, rng=None)
    names = [name for name, _ in p.arrays()]
    sizes = np.array([getattr(p, n).size for n in names])
    offsets = np.cumsum(sizes)
    total = int(offsets[-1])
    coords = rng.choice(total, size=min(num_coords, total), replace=False)
    worst = 0.0
    for flat_idx in coords:
        which = int(np.searchsorted(offsets, flat_idx, side="right"))
        local = int(flat_idx - (offsets[which - 1] if which else 0))
        arr = getattr(p, names[which])
        multi = np.unravel_index(local, arr.shape)
        original = arr[multi]
        arr[multi] = original + step
        up = loss_of()
        arr[multi] = original - step
        down = loss_of()
        arr[multi] = original
        numeric = (up - down) / (2.0 * step)
        analytic = float(grads[names[which]][multi])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint blob format: 8-byte little-endian header length, JSON header
# (dims and array order), then the raw float64 little-endian array data.
# ---------------------------------------------------------------------------


def params_to_bytes(p: QNetParams) -> bytes:
    header = {
        "format": "dqnas-qnet",
        "version": _BLOB_VERSION,
        "input_width": p.input_width,
        "hidden": p.hidden,
        "vocab_size": p.vocab_size,
        "dropout_rates": list(p.dropout_rates),
        "arrays": [[name, list(arr.shape)] for name, arr in p.arrays()],
        "dtype": "<f8",
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blobs = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in p.arrays()
    )
    return len(head).to_bytes(8, "little") + head + blobs


def params_from_bytes(data: bytes) -> QNetParams:
    if len(data) < 8:
        raise DqnasError("truncated parameter blob")
    head_len = int.from_bytes(data[:8], "little")
    header = json.loads(data[8 : 8 + head_len].decode("utf-8"))
    if header.get("format") != "dqnas-qnet" or header.get("version") != _BLOB_VERSION:
        raise DqnasError("unrecognized parameter blob header")
    offset = 8 + head_len
    arrays: dict[str, np.ndarray] = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape))
        end = offset + count * 8
        if end > len(data):
            raise DqnasError("truncated parameter blob data")
        arrays[name] = (
            np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        )
        offset = end
    return QNetParams(
        input_width=header["input_width"],
        hidden=header["hidden"],
        vocab_size=header["vocab_size"],
        dropout_rates=tuple(header["dropout_rates"]),
        **arrays,
    )
