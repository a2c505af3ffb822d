"""Parameter containers, initialization, and forward passes.

Two model kinds share one recipe: a tanh hidden layer fed by the input
and its own previous (or next) state, and an affine output squashed by
softmax (categorical data) or elementwise sigmoid (binary data).

Output/target alignment differs by kind and is easy to get silently
wrong, so it is spelled out here once:

* one-directional: the distribution emitted at step t predicts the NEXT
  observation x[t+1]; the pass returns T distributions, the last one
  predicting the unseen x[T].
* two-directional (shifted output): the distribution at step t is a
  reconstruction of x[t] itself, computed from the forward state at t-1
  and the backward state at t+1, so it never sees x[t].

Boundary states on both sides are zero vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from . import _kernels
from .numerics import log_softmax, require_finite, sigmoid, softmax

FAMILIES = ("softmax", "bernoulli")

CHECKPOINT_MAGIC = "seqgap-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class UniRnnParams:
    """One-directional model weights.

    Shapes: w_x (c, d_in), w_h (c, c), w_y (d_out, c), b_h (c,),
    b_y (d_out,). ``d_in`` may exceed ``d_out`` by exactly one (the
    missing-token input channel); otherwise they match.
    """

    w_x: np.ndarray
    w_h: np.ndarray
    w_y: np.ndarray
    b_h: np.ndarray
    b_y: np.ndarray
    family: str = "softmax"

    def __post_init__(self):
        _check_family(self.family)
        c, d_in = self.w_x.shape
        if self.w_h.shape != (c, c):
            raise ValueError("w_h must be square with the hidden size of w_x")
        d_out = self.w_y.shape[0]
        if self.w_y.shape != (d_out, c):
            raise ValueError("w_y inner dimension must match the hidden size")
        if self.b_h.shape != (c,) or self.b_y.shape != (d_out,):
            raise ValueError("bias shapes inconsistent with weights")
        if d_in not in (d_out, d_out + 1):
            raise ValueError(f"d_in must be d_out or d_out+1, got {d_in} vs {d_out}")
        for f in fields(self):
            if f.name != "family":
                require_finite(f.name, getattr(self, f.name))

    @property
    def kind(self) -> str:
        return "uni"

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[0]

    @property
    def d_in(self) -> int:
        return self.w_x.shape[1]

    @property
    def d_out(self) -> int:
        return self.w_y.shape[0]

    @property
    def has_missing_channel(self) -> bool:
        return self.d_in == self.d_out + 1


@dataclass
class BiRnnParams:
    """Two-directional model weights: untied forward and backward stacks.

    Forward stack (w_x_f, w_h_f, b_h_f) runs left-to-right, backward
    stack right-to-left; the output layer reads both through w_y_f and
    w_y_b plus a shared bias.
    """

    w_x_f: np.ndarray
    w_h_f: np.ndarray
    b_h_f: np.ndarray
    w_x_b: np.ndarray
    w_h_b: np.ndarray
    b_h_b: np.ndarray
    w_y_f: np.ndarray
    w_y_b: np.ndarray
    b_y: np.ndarray
    family: str = "softmax"

    def __post_init__(self):
        _check_family(self.family)
        c, d_in = self.w_x_f.shape
        d_out = self.b_y.shape[0]
        expect = {
            "w_x_f": (c, d_in),
            "w_h_f": (c, c),
            "b_h_f": (c,),
            "w_x_b": (c, d_in),
            "w_h_b": (c, c),
            "b_h_b": (c,),
            "w_y_f": (d_out, c),
            "w_y_b": (d_out, c),
            "b_y": (d_out,),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            require_finite(name, arr)
        if d_in not in (d_out, d_out + 1):
            raise ValueError(f"d_in must be d_out or d_out+1, got {d_in} vs {d_out}")
        if self.w_x_f is self.w_x_b or self.w_h_f is self.w_h_b:
            raise ValueError("forward and backward stacks must not share storage")

    @property
    def kind(self) -> str:
        return "bi"

    @property
    def hidden_size(self) -> int:
        return self.w_h_f.shape[0]

    @property
    def d_in(self) -> int:
        return self.w_x_f.shape[1]

    @property
    def d_out(self) -> int:
        return self.b_y.shape[0]

    @property
    def has_missing_channel(self) -> bool:
        return self.d_in == self.d_out + 1


def _check_family(family: str) -> None:
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")


@dataclass(frozen=True)
class StepDistribution:
    """One per-step predictive distribution.

    ``params`` holds class probabilities (softmax family, sums to 1) or
    per-channel Bernoulli means (bernoulli family, each in (0, 1)).
    """

    family: str
    params: np.ndarray


def _glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_uni(
    d_in: int, d_out: int, c: int, rng: np.random.Generator, family: str = "softmax"
) -> UniRnnParams:
    """Uniform init: input weights on [-1, 1], the rest Glorot, zero biases."""
    s_h = _glorot_bound(c, c)
    s_y = _glorot_bound(c, d_out)
    return UniRnnParams(
        w_x=rng.uniform(-1.0, 1.0, (c, d_in)),
        w_h=rng.uniform(-s_h, s_h, (c, c)),
        w_y=rng.uniform(-s_y, s_y, (d_out, c)),
        b_h=np.zeros(c),
        b_y=np.zeros(d_out),
        family=family,
    )


def init_bi(
    d_in: int, d_out: int, c: int, rng: np.random.Generator, family: str = "softmax"
) -> BiRnnParams:
    """As init_uni, drawn independently for the two stacks."""
    s_h = _glorot_bound(c, c)
    s_y = _glorot_bound(c, d_out)
    return BiRnnParams(
        w_x_f=rng.uniform(-1.0, 1.0, (c, d_in)),
        w_h_f=rng.uniform(-s_h, s_h, (c, c)),
        b_h_f=np.zeros(c),
        w_x_b=rng.uniform(-1.0, 1.0, (c, d_in)),
        w_h_b=rng.uniform(-s_h, s_h, (c, c)),
        b_h_b=np.zeros(c),
        w_y_f=rng.uniform(-s_y, s_y, (d_out, c)),
        w_y_b=rng.uniform(-s_y, s_y, (d_out, c)),
        b_y=np.zeros(d_out),
        family=family,
    )


def param_count(params: UniRnnParams | BiRnnParams) -> int:
    return sum(getattr(params, f.name).size for f in fields(params) if f.name != "family")


def _as_time_major(x: np.ndarray) -> np.ndarray:
    # (T, d) -> (T, 1, d) contiguous for the kernels
    return np.ascontiguousarray(x)[:, None, :]


def _emit(logits: np.ndarray, family: str) -> np.ndarray:
    return softmax(logits, axis=-1) if family == "softmax" else sigmoid(logits)


def uni_hidden_states(params: UniRnnParams, x: np.ndarray) -> np.ndarray:
    """(T, c) hidden states for a single (T, d_in) sequence."""
    _check_input(x, params.d_in)
    h0 = np.zeros((1, params.hidden_size))
    h = _kernels.recurrent_forward(h0, _as_time_major(x), params.w_x, params.w_h, params.b_h)
    return h[:, 0, :]


def uni_logits(params: UniRnnParams, x: np.ndarray) -> np.ndarray:
    h = uni_hidden_states(params, x)
    return h @ params.w_y.T + params.b_y


def uni_forward(params: UniRnnParams, x: np.ndarray) -> np.ndarray:
    """Per-step predictive distributions, (T, d_out).

    Row t is the distribution over x[t+1]; the last row predicts the
    observation just past the end of the input.
    """
    return _emit(uni_logits(params, x), params.family)


def bi_hidden_states(params: BiRnnParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward state tracks, each (T, c)."""
    _check_input(x, params.d_in)
    xm = _as_time_major(x)
    z = np.zeros((1, params.hidden_size))
    hf = _kernels.recurrent_forward(z, xm, params.w_x_f, params.w_h_f, params.b_h_f)
    hb = _kernels.recurrent_backward(z, xm, params.w_x_b, params.w_h_b, params.b_h_b)
    return hf[:, 0, :], hb[:, 0, :]


def bi_logits(params: BiRnnParams, x: np.ndarray, shifted: bool = True) -> np.ndarray:
    """Output pre-activations, (T, d_out).

    ``shifted`` is the generative wiring (state t-1 / t+1, never the
    step's own input). ``shifted=False`` is the classical wiring that
    reads both states at t; it is kept only for comparison and is not
    used by any inference strategy here.
    """
    hf, hb = bi_hidden_states(params, x)
    t = x.shape[0]
    if shifted:
        hf_in = np.vstack([np.zeros((1, params.hidden_size)), hf[: t - 1]])
        hb_in = np.vstack([hb[1:], np.zeros((1, params.hidden_size))])
    else:
        hf_in, hb_in = hf, hb
    return hf_in @ params.w_y_f.T + hb_in @ params.w_y_b.T + params.b_y


def bi_forward(params: BiRnnParams, x: np.ndarray, shifted: bool = True) -> np.ndarray:
    """Per-step reconstruction distributions, (T, d_out); row t never sees x[t]."""
    return _emit(bi_logits(params, x, shifted=shifted), params.family)


def _check_input(x: np.ndarray, d_in: int) -> None:
    if x.ndim != 2 or x.shape[1] != d_in:
        raise ValueError(f"expected a (T, {d_in}) sequence, got shape {x.shape}")


def step_nll(dist: np.ndarray, target: np.ndarray, family: str) -> float:
    """Negative log-likelihood of one observation under one distribution.

    Softmax scores the hot class; bernoulli sums channel cross-entropies.
    A zero-probability target yields +inf (callers flag, not crash).
    """
    dist = np.asarray(dist, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    with np.errstate(divide="ignore"):
        if family == "softmax":
            return float(-np.log(dist[int(np.argmax(target))]))
        logp = np.where(target > 0.5, np.log(dist), np.log1p(-dist))
    return float(-logp.sum())


def sequence_nll(
    params: UniRnnParams, x: np.ndarray, positions: np.ndarray | None = None
) -> float:
    """Sum of next-step NLLs at the given positions (default: 1..T-1).

    Position p is scored from the distribution emitted at step p-1, so
    p = 0 has no model probability and is rejected.
    """
    probs = uni_forward(params, x)
    if positions is None:
        positions = np.arange(1, x.shape[0])
    positions = np.asarray(positions)
    if positions.size and positions.min() < 1:
        raise ValueError("next-step scoring starts at position 1")
    return float(
        sum(step_nll(probs[p - 1], x[p], params.family) for p in positions)
    )


def uni_step_logprobs(params: UniRnnParams, x: np.ndarray) -> np.ndarray:
    """(T, d_out) log-probabilities of the next step, stable form."""
    logits = uni_logits(params, x)
    if params.family == "softmax":
        return log_softmax(logits, axis=-1)
    raise ValueError("per-class log-probs only defined for the softmax family")


# ---------------------------------------------------------------------------
# checkpoints: one JSON header line, then raw little-endian float64 blocks
# ---------------------------------------------------------------------------


class CheckpointError(ValueError):
    pass


_FIELD_ORDER = {
    "uni": ("w_x", "w_h", "w_y", "b_h", "b_y"),
    "bi": ("w_x_f", "w_h_f", "b_h_f", "w_x_b", "w_h_b", "b_h_b", "w_y_f", "w_y_b", "b_y"),
}


def save_checkpoint(params: UniRnnParams | BiRnnParams, path) -> None:
    header = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "kind": params.kind,
        "family": params.family,
        "d_in": params.d_in,
        "d_out": params.d_out,
        "hidden": params.hidden_size,
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        for name in _FIELD_ORDER[params.kind]:
            arr = np.ascontiguousarray(getattr(params, name), dtype="<f8")
            f.write(arr.tobytes())


def load_checkpoint(path, expect_kind: str | None = None) -> UniRnnParams | BiRnnParams:
    with open(path, "rb") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError:
            raise CheckpointError(f"{path}: missing or corrupt checkpoint header")
        if header.get("magic") != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: bad magic {header.get('magic')!r}")
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported version {header.get('version')!r}")
        kind = header["kind"]
        if kind not in _FIELD_ORDER:
            raise CheckpointError(f"{path}: unknown model kind {kind!r}")
        if expect_kind is not None and kind != expect_kind:
            raise CheckpointError(f"{path}: is a {kind} checkpoint, expected {expect_kind}")
        c, d_in, d_out = header["hidden"], header["d_in"], header["d_out"]
        shapes = {
            "w_x": (c, d_in), "w_h": (c, c), "w_y": (d_out, c),
            "b_h": (c,), "b_y": (d_out,),
            "w_x_f": (c, d_in), "w_h_f": (c, c), "b_h_f": (c,),
            "w_x_b": (c, d_in), "w_h_b": (c, c), "b_h_b": (c,),
            "w_y_f": (d_out, c), "w_y_b": (d_out, c),
        }
        arrays = {}
        for name in _FIELD_ORDER[kind]:
            shape = shapes[name]
            n = int(np.prod(shape))
            buf = f.read(n * 8)
            if len(buf) != n * 8:
                raise CheckpointError(f"{path}: truncated while reading field {name}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes after the last field")
    cls = UniRnnParams if kind == "uni" else BiRnnParams
    return cls(family=header["family"], **arrays)
