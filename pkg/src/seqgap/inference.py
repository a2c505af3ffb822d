"""Gap-filling strategies and their exhaustive-enumeration oracle.

Five ways to reconstruct a contiguous missing region inside a sequence:

* ``gsn_fill``          - Gibbs sampling from the two-directional
                          model's per-step conditionals;
* ``nade_fill`` /
  ``nade_exact_gap_nll``- ordered reconstruction with a missing-token
                          model, sampled or averaged over all orderings;
* ``bayes_mcmc_fill``   - Gibbs sampling on a one-directional model,
                          with each conditional computed exactly by
                          enumerating every proposal value and
                          multiplying the predictive probabilities of
                          everything downstream;
* ``oneway_fill``       - left-to-right reconstruction that ignores the
                          future context;
* ``onegram_nll``       - context-free baseline from corpus statistics.

Scoring convention, shared by the chain-based strategies: a chain runs M
single-position resampling steps; to score a gap, the last g of them are
forced (in a fresh random position order) to the true values and the
probabilities of those forced draws are multiplied into one chain
likelihood. The reported gap NLL is the negative log of the mean chain
likelihood. Per-position NLLs come from separate unforced chains: after
M free steps, each position's conditional probability of the truth given
the chain's end state is recorded and aggregated the same way.

Randomness: every chain draws from its own labelled stream (see
``seqgap.seeding``), in a fixed order (init draws, position draws, value
draws, forced-sweep permutation), so results are reproducible and
independent of how many chains run.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .corpus import GapSpec
from .models import (
    BiRnnParams,
    StepDistribution,
    UniRnnParams,
    bi_forward,
    uni_logits,
)
from .numerics import log_mean_exp, log_sigmoid, log_softmax, log_sum_exp, sigmoid, softmax
from .seeding import rng_for

LOG_TINY = math.log(1e-300)  # forced draws below this flag the result
ENUMERATION_LIMIT = 4096

STRATEGIES = ("gsn", "nade", "bayes_mcmc", "oneway", "onegram")


@dataclass(frozen=True)
class ChainConfig:
    mcmc_steps: int = 100
    n_chains: int = 100
    seed: int = 0
    init_mode: str = "auto"  # auto | random_onehot | zeros
    keep_samples: bool = False

    def __post_init__(self):
        if self.mcmc_steps < 1 or self.n_chains < 1:
            raise ValueError("mcmc_steps and n_chains must be >= 1")
        if self.init_mode not in ("auto", "random_onehot", "zeros"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")


@dataclass
class GapResult:
    strategy: str
    gap_nll: float
    per_position_nll: np.ndarray
    n_chains: int
    mcmc_steps: int
    flags: tuple[str, ...] = ()
    chain_logliks: np.ndarray | None = None
    samples: list | None = None

    def to_json_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "gap_nll": self.gap_nll,
            "per_position_nll": [float(v) for v in self.per_position_nll],
            "n_chains": self.n_chains,
            "M": self.mcmc_steps,
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def _aggregate(logliks: np.ndarray) -> tuple[float, tuple[str, ...]]:
    """Gap NLL from per-chain log-likelihoods plus sentinel flags."""
    flags = []
    if np.isneginf(logliks).any():
        flags.append("zero_probability_chain")
    elif (logliks < LOG_TINY).any():
        flags.append("tiny_probability_chain")
    nll = -log_mean_exp(logliks)
    if np.isinf(nll):
        flags.append("infinite_nll")
    return float(nll), tuple(flags)


def _check_gap(x: np.ndarray, gap: GapSpec) -> None:
    gap.check_inside(x.shape[0])


def _value_index_rows(x: np.ndarray) -> np.ndarray:
    return x.argmax(axis=1).astype(np.int64)


def _onehot_row(v: int, d: int, missing_channel: bool) -> np.ndarray:
    row = np.zeros(d + 1 if missing_channel else d)
    row[v] = 1.0
    return row


def _bernoulli_logprob(logits: np.ndarray, value: np.ndarray) -> np.ndarray:
    """Row-wise log P(value) for factorial Bernoulli outputs."""
    return (value * log_sigmoid(logits) + (1.0 - value) * log_sigmoid(-logits)).sum(axis=-1)


# ---------------------------------------------------------------------------
# cached contexts: everything outside the gap is fixed, so the states
# flanking it are computed once and only the in-gap segments are rerun
# per conditional. This is what keeps a Gibbs step O(g) instead of O(T).
# ---------------------------------------------------------------------------


class _BiGapContext:
    """Reusable conditional evaluator for a two-directional model."""

    def __init__(self, params: BiRnnParams, inputs: np.ndarray, gap: GapSpec):
        self.p = params
        self.gap = gap
        t = inputs.shape[0]
        c = params.hidden_size
        z1 = np.zeros((1, c))
        if gap.start > 0:
            pre = np.ascontiguousarray(inputs[: gap.start][:, None, :])
            hf = _kernels.recurrent_forward(z1, pre, params.w_x_f, params.w_h_f, params.b_h_f)
            self.hf_pre = hf[-1, 0]
        else:
            self.hf_pre = np.zeros(c)
        if gap.stop < t:
            post = np.ascontiguousarray(inputs[gap.stop :][:, None, :])
            hb = _kernels.recurrent_backward(z1, post, params.w_x_b, params.w_h_b, params.b_h_b)
            self.hb_post = hb[0, 0]
        else:
            self.hb_post = np.zeros(c)

    def logits(self, gap_inputs: np.ndarray, slots: np.ndarray) -> np.ndarray:
        """Conditional output pre-activations.

        ``gap_inputs`` is (B, g, d_in), the current model inputs at the
        gap rows of B parallel states; ``slots`` gives each state's
        queried position relative to the gap start. Returns (B, d_out).
        """
        p, g = self.p, self.gap.length
        b = gap_inputs.shape[0]
        hf_sel = np.repeat(self.hf_pre[None, :], b, axis=0)
        h = hf_sel.copy()
        for m in range(g - 1):
            h = np.tanh(gap_inputs[:, m] @ p.w_x_f.T + h @ p.w_h_f.T + p.b_h_f)
            pick = slots == m + 1
            if pick.any():
                hf_sel[pick] = h[pick]
        hb_sel = np.repeat(self.hb_post[None, :], b, axis=0)
        h = hb_sel.copy()
        for m in range(g - 1, 0, -1):
            h = np.tanh(gap_inputs[:, m] @ p.w_x_b.T + h @ p.w_h_b.T + p.b_h_b)
            pick = slots == m - 1
            if pick.any():
                hb_sel[pick] = h[pick]
        return hf_sel @ p.w_y_f.T + hb_sel @ p.w_y_b.T + p.b_y


class _UniGapContext:
    """Exact-conditional evaluator for a one-directional softmax model."""

    def __init__(self, params: UniRnnParams, x: np.ndarray, gap: GapSpec):
        if params.family != "softmax":
            raise ValueError(
                "exact conditionals on a one-directional model need the softmax "
                "family; binary outputs would require 2^d proposals"
            )
        if gap.start < 1:
            raise ValueError(
                "one-directional strategies need at least one observed step "
                "before the gap (position 0 has no model probability)"
            )
        self.p = params
        self.gap = gap
        t = x.shape[0]
        z1 = np.zeros((1, params.hidden_size))
        pre = np.ascontiguousarray(x[: gap.start][:, None, :])
        h = _kernels.recurrent_forward(z1, pre, params.w_x, params.w_h, params.b_h)
        self.h_pre = h[-1, 0]
        self.suffix_inputs = np.ascontiguousarray(x[gap.stop :])
        self.suffix_targets = _value_index_rows(x[gap.stop :]) if gap.stop < t else np.zeros(
            0, dtype=np.int64
        )

    def conditional_logprobs(self, gap_values: np.ndarray, slot: int) -> np.ndarray:
        """log P(x_t = a | everything else) for every proposal a.

        ``gap_values`` holds the current value indices of all gap slots;
        ``slot`` is the queried position relative to the gap start.
        Conditioning uses the current values of the other gap slots and
        the observed context.
        """
        p = self.p
        d = p.d_out
        h = self.h_pre
        for m in range(slot):
            h = np.tanh(p.w_x[:, gap_values[m]] + p.w_h @ h + p.b_h)
        first = log_softmax(p.w_y @ h + p.b_y)
        # proposal states after consuming each candidate one-hot input
        h1 = np.tanh((p.w_h @ h + p.b_h)[None, :] + p.w_x.T)
        later_slots = gap_values[slot + 1 :]
        n_gap_rows = later_slots.shape[0]
        targets = np.concatenate([later_slots, self.suffix_targets])
        if targets.size:
            x_common = np.zeros((targets.shape[0], p.d_in))
            if n_gap_rows:
                x_common[np.arange(n_gap_rows), later_slots] = 1.0
            if self.suffix_targets.size:
                x_common[n_gap_rows:] = self.suffix_inputs
            future = _kernels.categorical_suffix_loglik(
                h1, x_common, targets, p.w_x, p.w_h, p.b_h, p.w_y, p.b_y
            )
        else:
            future = np.zeros(d)
        logliks = first + future
        return logliks - log_sum_exp(logliks)


def bayes_exact_conditional(params: UniRnnParams, x: np.ndarray, t: int) -> StepDistribution:
    """The exact conditional of step t given all other steps.

    For each candidate value, the one-directional model is rolled over
    the rest of the sequence with that value substituted at t, the
    predictive probabilities from t onward are multiplied, and the
    results are normalized over candidates. Requires t >= 1 (the model
    assigns no probability to the very first observation) and the
    softmax family.
    """
    _check_gap(x, GapSpec(t, 1))
    ctx = _UniGapContext(params, x, GapSpec(t, 1))
    logp = ctx.conditional_logprobs(np.array([0], dtype=np.int64), 0)
    return StepDistribution(family="softmax", params=np.exp(logp))


# ---------------------------------------------------------------------------
# sampling helpers
# ---------------------------------------------------------------------------


def _sample_categorical_rows(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    idx = (u[:, None] < cdf).argmax(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


class _ChainStreams:
    """Per-chain uniforms, drawn in a fixed order from labelled streams."""

    def __init__(self, seed: int, label: str, n_chains: int, m: int, g: int, val_width: int):
        init_u = np.empty((n_chains, g if val_width == 1 else 0))
        pos_u = np.empty((n_chains, m))
        val_u = np.empty((n_chains, m, val_width))
        forced_u = np.empty((n_chains, g))
        for i in range(n_chains):
            rng = rng_for(seed, label, i)
            if init_u.shape[1]:
                init_u[i] = rng.random(g)
            pos_u[i] = rng.random(m)
            val_u[i] = rng.random((m, val_width))
            forced_u[i] = rng.random(g)
        self.init_u = init_u
        self.pos_u = pos_u
        self.val_u = val_u
        self.forced_u = forced_u


# ---------------------------------------------------------------------------
# GSN: Gibbs sampling with the two-directional conditionals
# ---------------------------------------------------------------------------


def _gsn_init_inputs(
    params: BiRnnParams, x: np.ndarray, gap: GapSpec, cfg: ChainConfig, init_u: np.ndarray
) -> np.ndarray:
    """(n_chains, g, d_in) initial gap inputs per the init mode."""
    n, g, d = init_u.shape[0], gap.length, params.d_in
    mode = cfg.init_mode
    if mode == "auto":
        mode = "random_onehot" if params.family == "softmax" else "zeros"
    work = np.zeros((n, g, d))
    if mode == "random_onehot":
        vals = np.minimum((init_u * params.d_out).astype(np.int64), params.d_out - 1)
        for i in range(n):
            work[i, np.arange(g), vals[i]] = 1.0
    return work


def _run_bi_gibbs(
    ctx: _BiGapContext,
    params: BiRnnParams,
    true_rows: np.ndarray,
    cfg: ChainConfig,
    streams: _ChainStreams,
    work: np.ndarray,
    forced: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance all chains in lockstep.

    Returns (chain log-likelihoods, per-position log-likelihoods, final
    gap inputs). Forced chains spend their last g steps pinned to the
    truth; free chains instead evaluate each position's conditional at
    the end state.
    """
    n, g = work.shape[0], ctx.gap.length
    m = cfg.mcmc_steps
    start = ctx.gap.start
    true_idx = true_rows.argmax(axis=1)
    softmax_family = params.family == "softmax"
    n_free = m - g if forced else m
    for step in range(n_free):
        slots = np.minimum((streams.pos_u[:, step] * g).astype(np.int64), g - 1)
        logits = ctx.logits(work, slots)
        rows = np.arange(n)
        if softmax_family:
            probs = softmax(logits, axis=-1)
            vals = _sample_categorical_rows(probs, streams.val_u[:, step, 0])
            work[rows, slots, :] = 0.0
            work[rows, slots, vals] = 1.0
        else:
            vals = (streams.val_u[:, step] < sigmoid(logits)).astype(np.float64)
            work[rows, slots, :] = vals
    chain_ll = np.zeros(n)
    pos_ll = np.zeros((n, g))
    if forced:
        order = np.argsort(streams.forced_u, axis=1)
        for j in range(g):
            slots = order[:, j]
            logits = ctx.logits(work, slots)
            if softmax_family:
                logp = log_softmax(logits, axis=-1)
                chain_ll += logp[np.arange(n), true_idx[slots]]
            else:
                chain_ll += _bernoulli_logprob(logits, true_rows[slots])
            work[np.arange(n), slots, :] = true_rows[slots]
    else:
        for j in range(g):
            slots = np.full(n, j)
            logits = ctx.logits(work, slots)
            if softmax_family:
                logp = log_softmax(logits, axis=-1)
                pos_ll[:, j] = logp[:, true_idx[j]]
            else:
                pos_ll[:, j] = _bernoulli_logprob(logits, true_rows[j][None, :])
    return chain_ll, pos_ll, work


def gsn_fill(
    params: BiRnnParams, x: np.ndarray, gap: GapSpec, cfg: ChainConfig
) -> GapResult:
    """Score and sample a gap by Gibbs sampling the two-directional model."""
    if not isinstance(params, BiRnnParams):
        raise ValueError("gsn_fill needs a two-directional model")
    if params.has_missing_channel:
        raise ValueError("gsn_fill expects a model without the missing-token channel")
    if params.family == "bernoulli" and cfg.init_mode == "random_onehot":
        raise ValueError("binary chains initialize to zeros, not one-hot values")
    _check_gap(x, gap)
    if cfg.mcmc_steps < gap.length:
        raise ValueError(
            f"cannot force {gap.length} final steps with only {cfg.mcmc_steps} MCMC steps"
        )
    true_rows = x[gap.positions()].copy()
    ctx = _BiGapContext(params, x, gap)

    streams = _chain_streams(params, cfg, gap.length, "gsn-forced")
    work = _gsn_init_inputs(params, x, gap, cfg, streams.init_u)
    chain_ll, _, _ = _run_bi_gibbs(ctx, params, true_rows, cfg, streams, work, forced=True)

    streams_free = _chain_streams(params, cfg, gap.length, "gsn-free")
    work = _gsn_init_inputs(params, x, gap, cfg, streams_free.init_u)
    _, pos_ll, end_state = _run_bi_gibbs(
        ctx, params, true_rows, cfg, streams_free, work, forced=False
    )

    gap_nll, flags = _aggregate(chain_ll)
    per_pos = -np.array([log_mean_exp(pos_ll[:, j]) for j in range(gap.length)])
    samples = [row.copy() for row in end_state[:8]] if cfg.keep_samples else None
    return GapResult(
        strategy="gsn",
        gap_nll=gap_nll,
        per_position_nll=per_pos,
        n_chains=cfg.n_chains,
        mcmc_steps=cfg.mcmc_steps,
        flags=flags,
        chain_logliks=chain_ll,
        samples=samples,
    )


def _chain_streams(params, cfg: ChainConfig, g: int, label: str) -> _ChainStreams:
    val_width = 1 if params.family == "softmax" else params.d_out
    return _ChainStreams(cfg.seed, label, cfg.n_chains, cfg.mcmc_steps, g, val_width)


# ---------------------------------------------------------------------------
# NADE: ordered reconstruction with the missing-token model
# ---------------------------------------------------------------------------


def _require_missing_channel(params: BiRnnParams) -> None:
    if not isinstance(params, BiRnnParams) or not params.has_missing_channel:
        raise ValueError("this strategy needs a model trained with the missing-token channel")


def _nade_inputs(params: BiRnnParams, x: np.ndarray, gap: GapSpec) -> np.ndarray:
    """(T, d+1) model inputs: observed rows plus missing tokens in the gap."""
    t = x.shape[0]
    inputs = np.zeros((t, params.d_in))
    inputs[:, : params.d_out] = x
    inputs[gap.positions(), :] = 0.0
    inputs[gap.positions(), -1] = 1.0
    return inputs


def nade_fill(
    params: BiRnnParams, x: np.ndarray, gap: GapSpec, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Fill the gap once, in a uniformly random position order.

    Each position is sampled from the model's conditional while the
    not-yet-filled positions still hold the missing token. Returns the
    filled sequence and the product of the sampling probabilities.
    """
    _require_missing_channel(params)
    _check_gap(x, gap)
    g, d = gap.length, params.d_out
    ctx = _BiGapContext(params, _nade_inputs(params, x, gap), gap)
    work = np.zeros((1, g, params.d_in))
    work[0, :, -1] = 1.0
    filled = x.copy()
    loglik = 0.0
    order = rng.permutation(g)
    for slot in order:
        logits = ctx.logits(work, np.array([slot]))[0]
        if params.family == "softmax":
            logp = log_softmax(logits)
            v = int(_sample_categorical_rows(np.exp(logp)[None, :], rng.random(1))[0])
            loglik += logp[v]
            row = np.zeros(d)
            row[v] = 1.0
        else:
            p = sigmoid(logits)
            row = (rng.random(d) < p).astype(np.float64)
            loglik += float(_bernoulli_logprob(logits, row))
        filled[gap.start + slot] = row
        work[0, slot, :] = 0.0
        work[0, slot, :d] = row
    return filled, float(np.exp(loglik))


def nade_exact_gap_nll(params: BiRnnParams, x: np.ndarray, gap: GapSpec) -> GapResult:
    """Exact gap probability, averaged over all g! reconstruction orders.

    Every ordering reconstructs the true values one at a time with the
    remaining positions at the missing token; the gap probability is the
    mean over orderings of the conditional products. Per-position NLLs
    use the all-missing state. Rejects g > 6.
    """
    _require_missing_channel(params)
    _check_gap(x, gap)
    g, d = gap.length, params.d_out
    if g > 6:
        raise ValueError(f"{g}! orderings is too many; use nade_fill sampling for g > 6")
    ctx = _BiGapContext(params, _nade_inputs(params, x, gap), gap)
    true_rows = x[gap.positions()].copy()
    true_idx = true_rows.argmax(axis=1)

    perms = np.array(list(itertools.permutations(range(g))), dtype=np.int64)
    n = perms.shape[0]
    work = np.zeros((n, g, params.d_in))
    work[:, :, -1] = 1.0
    order_ll = np.zeros(n)
    rows = np.arange(n)
    for j in range(g):
        slots = perms[:, j]
        logits = ctx.logits(work, slots)
        if params.family == "softmax":
            logp = log_softmax(logits, axis=-1)
            order_ll += logp[rows, true_idx[slots]]
        else:
            order_ll += _bernoulli_logprob(logits, true_rows[slots])
        work[rows, slots, :] = 0.0
        work[rows, slots, :d] = true_rows[slots]

    all_missing = np.zeros((g, g, params.d_in))
    all_missing[:, :, -1] = 1.0
    logits = ctx.logits(all_missing, np.arange(g))
    if params.family == "softmax":
        logp = log_softmax(logits, axis=-1)
        per_pos = -logp[np.arange(g), true_idx]
    else:
        per_pos = -_bernoulli_logprob(logits, true_rows)

    gap_nll, flags = _aggregate(order_ll)
    return GapResult(
        strategy="nade",
        gap_nll=gap_nll,
        per_position_nll=per_pos,
        n_chains=n,
        mcmc_steps=0,
        flags=flags,
        chain_logliks=order_ll,
    )


def nade_sequence_logprob(params: BiRnnParams, x: np.ndarray, order: np.ndarray) -> float:
    """log P(x) under one fixed reconstruction ordering of all T steps."""
    _require_missing_channel(params)
    if sorted(order) != list(range(x.shape[0])):
        raise ValueError("order must be a permutation of all time steps")
    t, d = x.shape
    gap = GapSpec(0, t)
    ctx = _BiGapContext(params, _nade_inputs(params, x, gap), gap)
    work = np.zeros((1, t, params.d_in))
    work[0, :, -1] = 1.0
    loglik = 0.0
    for slot in order:
        logits = ctx.logits(work, np.array([slot]))[0]
        if params.family == "softmax":
            loglik += float(log_softmax(logits)[int(x[slot].argmax())])
        else:
            loglik += float(_bernoulli_logprob(logits, x[slot]))
        work[0, slot, :] = 0.0
        work[0, slot, :d] = x[slot]
    return loglik


# ---------------------------------------------------------------------------
# Bayesian MCMC: Gibbs with exact one-directional conditionals
# ---------------------------------------------------------------------------


def bayes_mcmc_fill(
    params: UniRnnParams, x: np.ndarray, gap: GapSpec, cfg: ChainConfig
) -> GapResult:
    """GSN protocol with every conditional computed exactly from the
    one-directional model (softmax family only)."""
    if not isinstance(params, UniRnnParams):
        raise ValueError("bayes_mcmc_fill needs a one-directional model")
    _check_gap(x, gap)
    if cfg.mcmc_steps < gap.length:
        raise ValueError(
            f"cannot force {gap.length} final steps with only {cfg.mcmc_steps} MCMC steps"
        )
    ctx = _UniGapContext(params, x, gap)
    g, d, m = gap.length, params.d_out, cfg.mcmc_steps
    true_idx = _value_index_rows(x[gap.positions()])

    chain_ll = np.zeros(cfg.n_chains)
    pos_ll = np.zeros((cfg.n_chains, g))
    end_values = np.zeros((cfg.n_chains, g), dtype=np.int64)
    for i in range(cfg.n_chains):
        rng = rng_for(cfg.seed, "bayes-forced", i)
        values = _init_values(rng, g, d, cfg)
        for step in range(m - g):
            slot = min(int(rng.random() * g), g - 1)
            logp = ctx.conditional_logprobs(values, slot)
            values[slot] = _sample_categorical_rows(np.exp(logp)[None, :], rng.random(1))[0]
        order = np.argsort(rng.random(g))
        for slot in order:
            logp = ctx.conditional_logprobs(values, slot)
            chain_ll[i] += logp[true_idx[slot]]
            values[slot] = true_idx[slot]

        rng = rng_for(cfg.seed, "bayes-free", i)
        values = _init_values(rng, g, d, cfg)
        for step in range(m):
            slot = min(int(rng.random() * g), g - 1)
            logp = ctx.conditional_logprobs(values, slot)
            values[slot] = _sample_categorical_rows(np.exp(logp)[None, :], rng.random(1))[0]
        for slot in range(g):
            pos_ll[i, slot] = ctx.conditional_logprobs(values, slot)[true_idx[slot]]
        end_values[i] = values

    gap_nll, flags = _aggregate(chain_ll)
    per_pos = -np.array([log_mean_exp(pos_ll[:, j]) for j in range(g)])
    samples = [v.copy() for v in end_values[:8]] if cfg.keep_samples else None
    return GapResult(
        strategy="bayes_mcmc",
        gap_nll=gap_nll,
        per_position_nll=per_pos,
        n_chains=cfg.n_chains,
        mcmc_steps=m,
        flags=flags,
        chain_logliks=chain_ll,
        samples=samples,
    )


def _init_values(rng, g: int, d: int, cfg: ChainConfig) -> np.ndarray:
    u = rng.random(g)
    if cfg.init_mode == "zeros":
        return np.zeros(g, dtype=np.int64)
    return np.minimum((u * d).astype(np.int64), d - 1)


# ---------------------------------------------------------------------------
# one-way inference and the one-gram baseline
# ---------------------------------------------------------------------------


def oneway_fill(
    params: UniRnnParams, x: np.ndarray, gap: GapSpec, cfg: ChainConfig
) -> GapResult:
    """Left-to-right reconstruction, ignoring everything after the gap.

    The gap NLL conditions on the true history (one pass, no sampling);
    per-position NLLs sample the gap n_chains times and aggregate the
    per-step probabilities of the truth as log of the mean likelihood.
    """
    if not isinstance(params, UniRnnParams):
        raise ValueError("oneway_fill needs a one-directional model")
    _check_gap(x, gap)
    if gap.start < 1:
        raise ValueError("one-way inference needs an observed step before the gap")
    g = gap.length
    logits_all = uni_logits(params, x)
    if params.family == "softmax":
        true_idx = _value_index_rows(x[gap.positions()])
        teacher = log_softmax(logits_all, axis=-1)[gap.positions() - 1, true_idx]
    else:
        teacher = _bernoulli_logprob(logits_all[gap.positions() - 1], x[gap.positions()])
    flags = []
    if np.isneginf(teacher).any():
        flags.append("zero_probability_chain")
    gap_nll = float(-teacher.sum())
    if np.isinf(gap_nll):
        flags.append("infinite_nll")

    # sampled per-position path
    n, c, d = cfg.n_chains, params.hidden_size, params.d_out
    z1 = np.zeros((1, c))
    pre = np.ascontiguousarray(x[: gap.start][:, None, :])
    h_pre = _kernels.recurrent_forward(z1, pre, params.w_x, params.w_h, params.b_h)[-1, 0]
    h = np.repeat(h_pre[None, :], n, axis=0)
    val_u = np.empty((n, g, d if params.family == "bernoulli" else 1))
    for i in range(n):
        val_u[i] = rng_for(cfg.seed, "oneway", i).random(val_u.shape[1:])
    pos_ll = np.zeros((n, g))
    sampled_rows = np.zeros((g, params.d_in))
    for j in range(g):
        logits = h @ params.w_y.T + params.b_y
        if params.family == "softmax":
            logp = log_softmax(logits, axis=-1)
            true_v = int(x[gap.start + j].argmax())
            pos_ll[:, j] = logp[:, true_v]
            vals = _sample_categorical_rows(np.exp(logp), val_u[:, j, 0])
            rows = np.zeros((n, params.d_in))
            rows[np.arange(n), vals] = 1.0
        else:
            pos_ll[:, j] = _bernoulli_logprob(logits, x[gap.start + j][None, :])
            rows = (val_u[:, j] < sigmoid(logits)).astype(np.float64)
            if params.has_missing_channel:
                rows = np.concatenate([rows, np.zeros((n, 1))], axis=1)
        sampled_rows[j] = rows[0]
        h = np.tanh(rows @ params.w_x.T + h @ params.w_h.T + params.b_h)
    per_pos = -np.array([log_mean_exp(pos_ll[:, j]) for j in range(g)])
    samples = [sampled_rows] if cfg.keep_samples else None
    return GapResult(
        strategy="oneway",
        gap_nll=gap_nll,
        per_position_nll=per_pos,
        n_chains=n,
        mcmc_steps=0,
        flags=tuple(flags),
        chain_logliks=teacher,
        samples=samples,
    )


@dataclass(frozen=True)
class OneGramStats:
    """Context-free baseline: smoothed category frequencies or channel means."""

    family: str
    probs: np.ndarray  # (d,) class probabilities or Bernoulli means
    n_obs: int

    def to_json(self) -> str:
        return json.dumps(
            {"family": self.family, "probs": [float(v) for v in self.probs], "n_obs": self.n_obs},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "OneGramStats":
        payload = json.loads(text)
        return cls(payload["family"], np.asarray(payload["probs"], dtype=np.float64), payload["n_obs"])


def fit_onegram(data) -> OneGramStats:
    """Estimate the baseline from a training corpus.

    Categorical counts get add-one smoothing; Bernoulli means are
    clamped away from 0 and 1 so no gap can score -inf merely because a
    channel never fired in training.
    """
    from .training import BinaryCorpus, CategoricalCorpus  # cycle-free at call time

    if isinstance(data, CategoricalCorpus):
        counts = np.bincount(data.indices, minlength=data.n_symbols).astype(np.float64)
        n = int(counts.sum())
        return OneGramStats("softmax", (counts + 1.0) / (n + data.n_symbols), n)
    if isinstance(data, BinaryCorpus):
        stacked = np.concatenate([s for s in data.scores], axis=0)
        n = stacked.shape[0]
        lo = 1.0 / (n + 2.0)
        return OneGramStats("bernoulli", np.clip(stacked.mean(axis=0), lo, 1.0 - lo), n)
    raise ValueError(f"cannot fit one-gram stats from {type(data).__name__}")


def onegram_nll(stats: OneGramStats, x: np.ndarray, gap: GapSpec) -> GapResult:
    """Gap NLL under the context-free baseline; flat per-position curve."""
    _check_gap(x, gap)
    with np.errstate(divide="ignore"):
        if stats.family == "softmax":
            true_idx = _value_index_rows(x[gap.positions()])
            per_pos = -np.log(stats.probs[true_idx])
        else:
            rows = x[gap.positions()]
            per_pos = -(
                rows * np.log(stats.probs) + (1.0 - rows) * np.log1p(-stats.probs)
            ).sum(axis=1)
    return GapResult(
        strategy="onegram",
        gap_nll=float(per_pos.sum()),
        per_position_nll=per_pos,
        n_chains=0,
        mcmc_steps=0,
    )


# ---------------------------------------------------------------------------
# the enumeration oracle
# ---------------------------------------------------------------------------


@dataclass
class GapPosterior:
    """Exhaustive result over all gap completions.

    ``joint`` (one-directional models) is the normalized probability of
    each completion given the context. ``conditionals`` (two-directional
    models) is the (n_completions, g, d) table of per-position output
    distributions, the raw material for a Gibbs transition matrix.
    """

    completions: list
    joint: np.ndarray | None = None
    conditionals: np.ndarray | None = None


def enumerate_gap_posterior(params, x: np.ndarray, gap: GapSpec | None) -> GapPosterior:
    """Brute-force the gap: every completion, exactly.

    Feasibility is capped at a^g <= 4096 completions, where a is the
    alphabet size (softmax) or 2^d (bernoulli). ``gap=None`` is the
    empty gap: probability one on the empty completion.
    """
    if gap is None:
        return GapPosterior(completions=[()], joint=np.array([1.0]))
    _check_gap(x, gap)
    d = params.d_out
    a = d if params.family == "softmax" else 2**d
    total = a ** gap.length
    if total > ENUMERATION_LIMIT:
        raise ValueError(
            f"enumeration needs {total} completions (> {ENUMERATION_LIMIT}); too many"
        )
    if params.family == "softmax":
        values = [np.eye(d)[list(comb)] for comb in itertools.product(range(d), repeat=gap.length)]
        completions = [tuple(int(v.argmax()) for v in rows) for rows in values]
    else:
        bits = list(itertools.product((0.0, 1.0), repeat=d))
        values = [np.array(comb) for comb in itertools.product(bits, repeat=gap.length)]
        completions = [tuple(tuple(int(b) for b in row) for row in rows) for rows in values]

    if isinstance(params, UniRnnParams):
        if gap.start < 1:
            raise ValueError("one-directional enumeration needs an observed first step")
        logjoint = np.empty(len(values))
        for i, rows in enumerate(values):
            xi = x.copy()
            xi[gap.positions()] = rows
            logits = uni_logits(params, xi)
            if params.family == "softmax":
                idx = _value_index_rows(xi)
                logjoint[i] = log_softmax(logits, axis=-1)[
                    np.arange(0, x.shape[0] - 1), idx[1:]
                ].sum()
            else:
                logjoint[i] = _bernoulli_logprob(logits[:-1], xi[1:]).sum()
        joint = np.exp(logjoint - log_mean_exp(logjoint) - math.log(len(values)))
        return GapPosterior(completions=completions, joint=joint / joint.sum())

    if isinstance(params, BiRnnParams):
        if params.has_missing_channel:
            raise ValueError("enumeration tables target the plain two-directional model")
        table = np.empty((len(values), gap.length, d))
        for i, rows in enumerate(values):
            xi = x.copy()
            xi[gap.positions()] = rows
            table[i] = bi_forward(params, xi)[gap.positions()]
        return GapPosterior(completions=completions, conditionals=table)
    raise ValueError(f"unsupported parameter type {type(params).__name__}")


# ---------------------------------------------------------------------------
# long-run chain recording, for stationarity diagnostics
# ---------------------------------------------------------------------------


def gibbs_state_trace(
    params, x: np.ndarray, gap: GapSpec, n_steps: int, seed: int, burn_in: int = 0
) -> np.ndarray:
    """One long Gibbs chain; records the gap values after every step.

    Uses the same conditionals as the corresponding fill strategy
    (two-directional models sample the GSN chain, one-directional the
    exact-conditional chain). Categorical only; returns an
    (n_steps, g) int array, after discarding ``burn_in`` steps.
    """
    if params.family != "softmax":
        raise ValueError("state traces are recorded for categorical models only")
    _check_gap(x, gap)
    g, d = gap.length, params.d_out
    rng = rng_for(seed, "state-trace")
    values = np.minimum((rng.random(g) * d).astype(np.int64), d - 1)
    out = np.empty((n_steps, g), dtype=np.int64)
    if isinstance(params, BiRnnParams):
        ctx = _BiGapContext(params, x, gap)
        work = np.zeros((1, g, params.d_in))
        work[0, np.arange(g), values] = 1.0
        for step in range(n_steps + burn_in):
            slot = min(int(rng.random() * g), g - 1)
            logits = ctx.logits(work, np.array([slot]))[0]
            v = int(
                _sample_categorical_rows(softmax(logits)[None, :], rng.random(1))[0]
            )
            values[slot] = v
            work[0, slot, :] = 0.0
            work[0, slot, v] = 1.0
            if step >= burn_in:
                out[step - burn_in] = values
        return out
    ctx = _UniGapContext(params, x, gap)
    for step in range(n_steps + burn_in):
        slot = min(int(rng.random() * g), g - 1)
        logp = ctx.conditional_logprobs(values, slot)
        values[slot] = _sample_categorical_rows(np.exp(logp)[None, :], rng.random(1))[0]
        if step >= burn_in:
            out[step - burn_in] = values
    return out
