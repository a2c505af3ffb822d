"""Backpropagation through time and the SGD loop.

Four training regimes share one machinery:

* ``uni``          - one-directional model, next-step targets, leading
                     burn-in excluded from the loss;
* ``brnn``         - two-directional model, current-step targets,
                     burn-in excluded at both ends;
* ``nade_masked``  - two-directional model with a missing-token input
                     channel; scheduled gaps are partially masked on the
                     inputs and ONLY gap positions carry loss;
* ``nade_no_mask`` - same input masking, but the loss mask is the plain
                     burn-in mask, so with zero gaps it degenerates to
                     ``brnn`` exactly.

Updates normalize the concatenated gradient to unit L2 norm (global, not
per matrix) and follow a step size decayed linearly to zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, fields, replace

import numpy as np

from . import _kernels
from .corpus import Minibatch, burnin_mask, nade_mask_gaps, onehot_from_indices
from .models import BiRnnParams, UniRnnParams, init_bi, init_uni
from .numerics import log_sigmoid, log_softmax, sigmoid, softmax
from .seeding import rng_for

REGIMES = ("uni", "brnn", "nade_masked", "nade_no_mask")


@dataclass
class TrainConfig:
    seq_len: int
    total_updates: int
    hidden_size: int
    minibatch_size: int = 40
    step_size: float = 0.25
    burnin: tuple[float, float] | None = None  # None = per-kind defaults
    nade_masking: str = "off"  # off | masked | no_mask
    nade_gap_len: int = 5
    nade_stride: int = 25
    seed: int = 0
    log_every: int = 1

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.total_updates < 1:
            raise ValueError("total_updates must be >= 1")
        if self.nade_masking not in ("off", "masked", "no_mask"):
            raise ValueError(f"unknown nade_masking {self.nade_masking!r}")


@dataclass(frozen=True)
class CategoricalCorpus:
    """A single symbol stream for next-step / reconstruction training."""

    indices: np.ndarray  # (N,) int64 in [0, n_symbols)
    n_symbols: int

    @property
    def family(self) -> str:
        return "softmax"


@dataclass(frozen=True)
class BinaryCorpus:
    """A list of binary (T_i, d) scores."""

    scores: tuple
    dim: int

    @property
    def family(self) -> str:
        return "bernoulli"


def _regime(model_kind: str, cfg: TrainConfig) -> str:
    if model_kind == "uni":
        if cfg.nade_masking != "off":
            raise ValueError("nade masking requires the two-directional model")
        return "uni"
    if model_kind != "bi":
        raise ValueError(f"unknown model kind {model_kind!r}")
    return {"off": "brnn", "masked": "nade_masked", "no_mask": "nade_no_mask"}[
        cfg.nade_masking
    ]


# ---------------------------------------------------------------------------
# losses and gradients
# ---------------------------------------------------------------------------


def _loss_and_dlogits(logits, targets, mask, family):
    """Masked mean NLL and its gradient w.r.t. the output pre-activations.

    ``logits``/``targets`` are (T, B, d); ``mask`` is (T,). The loss is
    the mean over (masked step, batch row) pairs.
    """
    t, b, _ = logits.shape
    n_terms = int(mask.sum()) * b
    if n_terms == 0:
        raise ValueError("error mask selects no positions")
    w = mask.astype(np.float64)[:, None, None] / n_terms
    if family == "softmax":
        logp = log_softmax(logits, axis=-1)
        loss = -(logp * targets * w).sum()
        dlogits = (softmax(logits, axis=-1) - targets) * w
    else:
        logp = targets * log_sigmoid(logits) + (1.0 - targets) * log_sigmoid(-logits)
        loss = -(logp * w).sum()
        dlogits = (sigmoid(logits) - targets) * w
    return float(loss), dlogits


def bptt_uni(params: UniRnnParams, batch: Minibatch) -> tuple[float, dict]:
    """Exact loss gradient for the one-directional model.

    Output step t is scored against ``batch.targets[:, t]`` where the
    mask allows; the batcher is responsible for target alignment (for
    next-step training the targets are the inputs shifted by one).
    """
    x = np.ascontiguousarray(batch.inputs.transpose(1, 0, 2))
    y = np.ascontiguousarray(batch.targets.transpose(1, 0, 2))
    b = x.shape[1]
    h0 = np.zeros((b, params.hidden_size))
    h = _kernels.recurrent_forward(h0, x, params.w_x, params.w_h, params.b_h)
    logits = h @ params.w_y.T + params.b_y
    loss, dlogits = _loss_and_dlogits(logits, y, batch.error_mask, params.family)
    d_wx, d_wh, d_wy, d_bh, d_by = _kernels.uni_bptt(x, h, dlogits, params.w_h, params.w_y)
    return loss, {"w_x": d_wx, "w_h": d_wh, "w_y": d_wy, "b_h": d_bh, "b_y": d_by}


def bptt_bi(params: BiRnnParams, batch: Minibatch) -> tuple[float, dict]:
    """Exact loss gradient through both stacks of the shifted-output model."""
    x = np.ascontiguousarray(batch.inputs.transpose(1, 0, 2))
    y = np.ascontiguousarray(batch.targets.transpose(1, 0, 2))
    t, b, _ = x.shape
    c = params.hidden_size
    z = np.zeros((b, c))
    hf = _kernels.recurrent_forward(z, x, params.w_x_f, params.w_h_f, params.b_h_f)
    hb = _kernels.recurrent_backward(z, x, params.w_x_b, params.w_h_b, params.b_h_b)
    hf_in = np.concatenate([z[None], hf[: t - 1]], axis=0)
    hb_in = np.concatenate([hb[1:], z[None]], axis=0)
    logits = hf_in @ params.w_y_f.T + hb_in @ params.w_y_b.T + params.b_y
    loss, dlogits = _loss_and_dlogits(logits, y, batch.error_mask, params.family)
    grads = _kernels.bi_bptt(
        x, hf, hb, dlogits, params.w_h_f, params.w_h_b, params.w_y_f, params.w_y_b
    )
    names = ("w_x_f", "w_h_f", "b_h_f", "w_x_b", "w_h_b", "b_h_b", "w_y_f", "w_y_b", "b_y")
    return loss, dict(zip(names, grads))


def grad_global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def sgd_update(params, grads: dict, update_index: int, cfg: TrainConfig):
    """One normalized-gradient step with linear step-size decay.

    Gradients are rescaled so their joint L2 norm is one; the applied
    step therefore has norm exactly eta_k = step_size * (1 - k/total).
    A zero gradient is a warned no-op (nothing to normalize).
    """
    if update_index >= cfg.total_updates:
        raise ValueError("update index past the configured schedule")
    norm = grad_global_norm(grads)
    if norm == 0.0:
        warnings.warn("zero gradient: skipping update")
        return params
    eta = cfg.step_size * (1.0 - update_index / cfg.total_updates)
    updates = {
        f.name: getattr(params, f.name) - (eta / norm) * grads[f.name]
        for f in fields(params)
        if f.name != "family"
    }
    return replace(params, **updates)


# ---------------------------------------------------------------------------
# batch sampling
# ---------------------------------------------------------------------------


def _window_starts(n: int, t: int, b: int, rng) -> np.ndarray:
    if n < t:
        raise ValueError(f"corpus of {n} steps is shorter than one window of {t}")
    return rng.integers(0, n - t + 1, size=b)


def _categorical_windows(data: CategoricalCorpus, t: int, b: int, rng) -> np.ndarray:
    starts = _window_starts(data.indices.shape[0], t, b, rng)
    return np.stack([data.indices[s : s + t] for s in starts])


def _binary_windows(data: BinaryCorpus, t: int, b: int, rng) -> np.ndarray:
    eligible = [s for s in data.scores if s.shape[0] >= t]
    if not eligible:
        raise ValueError(f"no score is at least {t} steps long")
    out = np.empty((b, t, data.dim))
    which = rng.integers(0, len(eligible), size=b)
    for i, si in enumerate(which):
        score = eligible[si]
        o = int(rng.integers(0, score.shape[0] - t + 1))
        out[i] = score[o : o + t]
    return out


def sample_minibatch(data, regime: str, cfg: TrainConfig, rng) -> Minibatch:
    """Draw one batch in the layout the given regime trains on."""
    b, t = cfg.minibatch_size, cfg.seq_len
    head, tail = cfg.burnin if cfg.burnin is not None else (None, None)
    if regime == "uni":
        if isinstance(data, CategoricalCorpus):
            win = _categorical_windows(data, t + 1, b, rng)
            inputs = np.stack([onehot_from_indices(w[:-1], data.n_symbols) for w in win])
            targets = np.stack([onehot_from_indices(w[1:], data.n_symbols) for w in win])
        else:
            win = _binary_windows(data, t + 1, b, rng)
            inputs, targets = win[:, :-1], win[:, 1:]
        return Minibatch(inputs, targets, burnin_mask(t, "uni", head, tail))
    if isinstance(data, CategoricalCorpus):
        win = _categorical_windows(data, t, b, rng)
        missing = regime in ("nade_masked", "nade_no_mask")
        inputs = np.stack(
            [onehot_from_indices(w, data.n_symbols, with_missing_channel=missing) for w in win]
        )
        targets = np.stack([onehot_from_indices(w, data.n_symbols) for w in win])
    else:
        targets = _binary_windows(data, t, b, rng)
        if regime in ("nade_masked", "nade_no_mask"):
            inputs = np.concatenate([targets, np.zeros((b, t, 1))], axis=2)
        else:
            inputs = targets
    base_mask = burnin_mask(t, "bi", head, tail)
    batch = Minibatch(inputs, targets, base_mask)
    if regime in ("nade_masked", "nade_no_mask"):
        batch = nade_mask_gaps(batch, cfg.nade_gap_len, cfg.nade_stride, rng)
        if regime == "nade_no_mask":
            batch = Minibatch(batch.inputs, batch.targets, base_mask)
    return batch


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------


def train(model_kind: str, data, cfg: TrainConfig):
    """Run the configured number of updates; returns (params, trace).

    The trace is a list of (update, eta, loss) rows, one per
    ``log_every`` updates, with the loss measured at the pre-update
    parameters. Fully deterministic given ``cfg.seed``.
    """
    regime = _regime(model_kind, cfg)
    family = data.family
    d_out = data.n_symbols if isinstance(data, CategoricalCorpus) else data.dim
    d_in = d_out + 1 if regime in ("nade_masked", "nade_no_mask") else d_out
    init_rng = rng_for(cfg.seed, "init")
    if model_kind == "uni":
        params = init_uni(d_in, d_out, cfg.hidden_size, init_rng, family)
        step = bptt_uni
    else:
        params = init_bi(d_in, d_out, cfg.hidden_size, init_rng, family)
        step = bptt_bi
    batch_rng = rng_for(cfg.seed, "batches")
    trace = []
    for k in range(cfg.total_updates):
        batch = sample_minibatch(data, regime, cfg, batch_rng)
        loss, grads = step(params, batch)
        params = sgd_update(params, grads, k, cfg)
        if k % cfg.log_every == 0 or k == cfg.total_updates - 1:
            eta = cfg.step_size * (1.0 - k / cfg.total_updates)
            trace.append((k, eta, loss))
    return params, trace


def validation_loss(params, data, regime: str, cfg: TrainConfig, seed: int, n_batches: int = 20) -> float:
    """Mean regime loss over fixed deterministic batches (no updates)."""
    rng = rng_for(seed, "validation")
    step = bptt_uni if regime == "uni" else bptt_bi
    total = 0.0
    for _ in range(n_batches):
        batch = sample_minibatch(data, regime, cfg, rng)
        loss, _ = step(params, batch)
        total += loss
    return total / n_batches


def write_trace_csv(path, trace) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("update,eta,loss\n")
        for k, eta, loss in trace:
            f.write(f"{k},{eta!r},{loss!r}\n")
