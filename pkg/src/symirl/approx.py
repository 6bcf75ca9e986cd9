"""Small dense networks with explicit reverse-mode gradients, Adam, checkpoints.

Everything is float64: the networks are tiny (default two hidden layers of
64) and double precision keeps finite-difference gradient checks tight.
Weights use the scaled-uniform fan-in rule U(-1/sqrt(fan_in), 1/sqrt(fan_in));
biases start at zero.

Checkpoints are written with a little-endian named-array container, the same
layout demo files build on: 8-byte magic, u32 version, u32 entry count, then
per entry a u16 name length, utf-8 name, u8 dtype code (0 float64, 1 int64),
u8 ndim, u32 dims, raw array bytes in C order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"SGFCKPT\x00"
CONTAINER_VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}


class FormatError(ValueError):
    """Raised on bad magic, unsupported version, or truncated container data."""


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _dact(name, z, a):
    # derivative in terms of pre-activation z and activation a = act(z)
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


class Mlp:
    """Fully connected net: affine layers with per-layer activation names."""

    def __init__(self, sizes, rng, hidden_act="tanh", out_act="identity"):
        if len(sizes) < 2:
            raise ValueError("need at least input and output widths")
        self.sizes = [int(w) for w in sizes]
        self.acts = [hidden_act] * (len(sizes) - 2) + [out_act]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self):
        """Live parameter references, interleaved [W0, b0, W1, b1, ...]."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"input must be (batch, {self.sizes[0]}), got shape {x.shape}")
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]} != expected {self.sizes[0]}")
        return x

    def _forward_full(self, x):
        # activations[k] is the input to layer k; pre[k] the affine output
        activations = [x]
        pre = []
        h = x
        for w, b, name in zip(self.weights, self.biases, self.acts):
            z = h @ w + b
            h = _act(name, z)
            pre.append(z)
            activations.append(h)
        return activations, pre

    def forward(self, x):
        x = self._check_input(x)
        activations, _ = self._forward_full(x)
        return activations[-1]

    def backward(self, x, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. params and input.

        Returns (grads, grad_x) with grads aligned to self.params.  grad_out
        must carry any batch-mean factors already.
        """
        x = self._check_input(x)
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if grad_out.shape != (x.shape[0], self.sizes[-1]):
            raise ValueError(
                f"grad_out shape {grad_out.shape} != {(x.shape[0], self.sizes[-1])}"
            )
        activations, pre = self._forward_full(x)
        grads = [None] * (2 * len(self.weights))
        delta = grad_out
        for k in range(len(self.weights) - 1, -1, -1):
            delta = delta * _dact(self.acts[k], pre[k], activations[k + 1])
            grads[2 * k] = activations[k].T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[k].T
        return grads, delta

    def zero_grads(self):
        return [np.zeros_like(p) for p in self.params]

    def state_dict(self, prefix=""):
        out = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}w{k}"] = w.copy()
            out[f"{prefix}b{k}"] = b.copy()
        return out

    def load_state_dict(self, arrays, prefix=""):
        for k in range(len(self.weights)):
            w = arrays[f"{prefix}w{k}"]
            b = arrays[f"{prefix}b{k}"]
            if w.shape != self.weights[k].shape or b.shape != self.biases[k].shape:
                raise FormatError(f"checkpoint layer {k} shape mismatch")
            self.weights[k][...] = w
            self.biases[k][...] = b


@dataclass
class AdamState:
    """Bias-corrected moment buffers for one parameter list."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        st = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        st.m = [np.zeros_like(p) for p in params]
        st.v = [np.zeros_like(p) for p in params]
        return st

    def state_dict(self, prefix=""):
        out = {f"{prefix}t": np.array(self.t, dtype=np.int64)}
        for k, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}m{k}"] = m.copy()
            out[f"{prefix}v{k}"] = v.copy()
        return out

    def load_state_dict(self, arrays, prefix=""):
        self.t = int(arrays[f"{prefix}t"])
        for k in range(len(self.m)):
            self.m[k][...] = arrays[f"{prefix}m{k}"]
            self.v[k][...] = arrays[f"{prefix}v{k}"]


def adam_step(state: AdamState, params, grads):
    """Standard bias-corrected Adam update, in place on params."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("parameter/gradient/state length mismatch")
    state.t += 1
    b1t = 1.0 - state.beta1**state.t
    b2t = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps)
    return params


def save_arrays(path, arrays, magic=CHECKPOINT_MAGIC):
    """Write a dict of float64/int64 arrays to the named-array container."""
    if len(magic) != 8:
        raise ValueError("magic must be exactly 8 bytes")
    chunks = [magic, struct.pack("<II", CONTAINER_VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype.kind == "f":
            code, cast = 0, np.dtype("<f8")
        elif arr.dtype.kind in "iub":
            code, cast = 1, np.dtype("<i8")
        else:
            raise ValueError(f"unsupported dtype {arr.dtype} for entry {name!r}")
        data = np.ascontiguousarray(arr.astype(cast, copy=False))
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<BB", code, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(data.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_arrays(path, magic=CHECKPOINT_MAGIC):
    """Read back a container written by save_arrays; bit-exact round-trip."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 16 or buf[:8] != magic:
        raise FormatError(f"bad magic in {path}")
    version, count = struct.unpack_from("<II", buf, 8)
    if version != CONTAINER_VERSION:
        raise FormatError(f"unsupported container version {version}")
    off = 16
    out = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off : off + name_len].decode("utf-8")
            off += name_len
            code, ndim = struct.unpack_from("<BB", buf, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            dtype = _DTYPE_CODES[code]
            nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if ndim else dtype.itemsize
            raw = buf[off : off + nbytes]
            if len(raw) != nbytes:
                raise FormatError(f"truncated data for entry {name!r} in {path}")
            off += nbytes
            out[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    except (struct.error, KeyError) as exc:
        raise FormatError(f"corrupt container {path}: {exc}") from exc
    if off != len(buf):
        raise FormatError(f"trailing bytes in {path}")
    return out
