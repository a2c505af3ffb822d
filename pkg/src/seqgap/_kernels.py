"""Hot numeric kernels for the recurrent forward/backward recursions.

Every kernel exists twice: a numba ``@njit`` build and a pure-numpy build
with identical semantics. Selection is controlled by the environment
variable ``SEQGAP_KERNELS``:

* ``numpy`` - pure-numpy fallback everywhere (no JIT, no compile time),
* ``numba`` - JIT everywhere,
* ``auto``  - the default: JIT for narrow sequential work (single chains,
  short gap segments) where call overhead dominates, numpy for wide
  batched work where its vectorized ``tanh`` wins. See
  ``benchmarks/bench_kernels.py`` for the measurements behind this split.

If numba is not importable, every mode degrades to ``numpy``.

Array layout is time-major throughout: a batch of sequences is shaped
``(T, B, d)`` so each time slice is one contiguous ``(B, d)`` block.
Weight matrices arrive in model layout (``w_x`` is ``(c, d_in)`` etc.)
and are transposed once per call, not per step.
"""

from __future__ import annotations

import os

import numpy as np

_MODE = os.environ.get("SEQGAP_KERNELS", "auto").lower()
if _MODE not in ("auto", "numba", "numpy"):
    raise ValueError(f"SEQGAP_KERNELS must be auto, numba or numpy, got {_MODE!r}")

HAVE_NUMBA = False
if _MODE != "numpy":
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:
        _MODE = "numpy"


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------


def _np_recurrent_forward(h0, x, w_x, w_h, b_h):
    """h[t] = tanh(h[t-1] @ w_h.T + x[t] @ w_x.T + b_h), h[-1] = h0.

    Shapes: h0 (B, c), x (S, B, d_in); returns (S, B, c).
    """
    s, b, _ = x.shape
    c = w_h.shape[0]
    h = np.empty((s, b, c))
    prev = h0
    wxt = w_x.T.copy()
    wht = w_h.T.copy()
    for t in range(s):
        prev = np.tanh(x[t] @ wxt + prev @ wht + b_h)
        h[t] = prev
    return h


def _np_recurrent_backward(hn, x, w_x, w_h, b_h):
    """Reverse-time twin: h[t] = tanh(h[t+1] @ w_h.T + x[t] @ w_x.T + b_h).

    ``hn`` is the state just past the last slice. Returns (S, B, c).
    """
    s, b, _ = x.shape
    c = w_h.shape[0]
    h = np.empty((s, b, c))
    nxt = hn
    wxt = w_x.T.copy()
    wht = w_h.T.copy()
    for t in range(s - 1, -1, -1):
        nxt = np.tanh(x[t] @ wxt + nxt @ wht + b_h)
        h[t] = nxt
    return h


def _np_uni_bptt(x, h, d_logits, w_h, w_y):
    """Backward pass through the one-directional recursion.

    ``d_logits`` is dL/d(pre-activation output) per step, already scaled;
    returns (d_wx, d_wh, d_wy, d_bh, d_by).
    """
    s, b, c = h.shape
    d_in = x.shape[2]
    d_out = d_logits.shape[2]
    d_wx = np.zeros((c, d_in))
    d_wh = np.zeros((c, c))
    d_wy = np.zeros((d_out, c))
    d_bh = np.zeros(c)
    d_by = np.zeros(d_out)
    carry = np.zeros((b, c))
    for t in range(s - 1, -1, -1):
        d_wy += d_logits[t].T @ h[t]
        d_by += d_logits[t].sum(axis=0)
        dh = d_logits[t] @ w_y + carry
        dpre = dh * (1.0 - h[t] * h[t])
        if t > 0:
            d_wh += dpre.T @ h[t - 1]
        d_wx += dpre.T @ x[t]
        d_bh += dpre.sum(axis=0)
        carry = dpre @ w_h
    return d_wx, d_wh, d_wy, d_bh, d_by


def _np_bi_bptt(x, hf, hb, d_logits, w_h_f, w_h_b, w_y_f, w_y_b):
    """Backward pass through both stacks of the shifted-output model.

    The output at step t reads hf[t-1] and hb[t+1]; boundary states are
    zero and receive no gradient.
    """
    s, b, c = hf.shape
    d_in = x.shape[2]
    d_out = d_logits.shape[2]
    d_wxf = np.zeros((c, d_in))
    d_whf = np.zeros((c, c))
    d_bhf = np.zeros(c)
    d_wxb = np.zeros((c, d_in))
    d_whb = np.zeros((c, c))
    d_bhb = np.zeros(c)
    d_wyf = np.zeros((d_out, c))
    d_wyb = np.zeros((d_out, c))
    d_by = d_logits.sum(axis=(0, 1))

    # forward stack: hf[t] feeds the output at t+1 and hf[t+1]
    carry = np.zeros((b, c))
    for t in range(s - 1, -1, -1):
        dh = carry.copy()
        if t + 1 < s:
            d_wyf += d_logits[t + 1].T @ hf[t]
            dh += d_logits[t + 1] @ w_y_f
        dpre = dh * (1.0 - hf[t] * hf[t])
        if t > 0:
            d_whf += dpre.T @ hf[t - 1]
        d_wxf += dpre.T @ x[t]
        d_bhf += dpre.sum(axis=0)
        carry = dpre @ w_h_f

    # backward stack: hb[t] feeds the output at t-1 and hb[t-1]
    carry = np.zeros((b, c))
    for t in range(s):
        dh = carry.copy()
        if t - 1 >= 0:
            d_wyb += d_logits[t - 1].T @ hb[t]
            dh += d_logits[t - 1] @ w_y_b
        dpre = dh * (1.0 - hb[t] * hb[t])
        if t + 1 < s:
            d_whb += dpre.T @ hb[t + 1]
        d_wxb += dpre.T @ x[t]
        d_bhb += dpre.sum(axis=0)
        carry = dpre @ w_h_b
    return d_wxf, d_whf, d_bhf, d_wxb, d_whb, d_bhb, d_wyf, d_wyb, d_by


def _np_categorical_suffix_loglik(h0, x_common, targets, w_x, w_h, b_h, w_y, b_y):
    """Per-proposal log-likelihood of a fixed categorical suffix.

    ``h0`` holds one hidden state per proposal (A, c); all proposals then
    consume the same inputs ``x_common`` (S, d_in) and are scored on the
    same target indices (S,). Returns (A,) sums of log softmax picks.
    """
    a = h0.shape[0]
    s = x_common.shape[0]
    out = np.zeros(a)
    h = h0
    wxt = w_x.T.copy()
    wht = w_h.T.copy()
    wyt = w_y.T.copy()
    for t in range(s):
        logits = h @ wyt + b_y
        m = logits.max(axis=1)
        lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
        out += logits[np.arange(a), targets[t]] - lse
        h = np.tanh((x_common[t] @ wxt)[None, :] + h @ wht + b_h)
    return out


# ---------------------------------------------------------------------------
# numba twins
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_recurrent_forward(h0, x, w_x, w_h, b_h):
        s, b, _ = x.shape
        c = w_h.shape[0]
        h = np.empty((s, b, c))
        prev = h0
        wxt = w_x.T.copy()
        wht = w_h.T.copy()
        for t in range(s):
            pre = np.dot(x[t], wxt) + np.dot(prev, wht)
            for i in range(b):
                for j in range(c):
                    h[t, i, j] = np.tanh(pre[i, j] + b_h[j])
            prev = h[t]
        return h

    @njit(cache=True)
    def _nb_recurrent_backward(hn, x, w_x, w_h, b_h):
        s, b, _ = x.shape
        c = w_h.shape[0]
        h = np.empty((s, b, c))
        nxt = hn
        wxt = w_x.T.copy()
        wht = w_h.T.copy()
        for t in range(s - 1, -1, -1):
            pre = np.dot(x[t], wxt) + np.dot(nxt, wht)
            for i in range(b):
                for j in range(c):
                    h[t, i, j] = np.tanh(pre[i, j] + b_h[j])
            nxt = h[t]
        return h

    @njit(cache=True)
    def _nb_uni_bptt(x, h, d_logits, w_h, w_y):
        s, b, c = h.shape
        d_in = x.shape[2]
        d_out = d_logits.shape[2]
        d_wx = np.zeros((c, d_in))
        d_wh = np.zeros((c, c))
        d_wy = np.zeros((d_out, c))
        d_bh = np.zeros(c)
        d_by = np.zeros(d_out)
        carry = np.zeros((b, c))
        for t in range(s - 1, -1, -1):
            dl = d_logits[t]
            d_wy += np.dot(dl.T.copy(), h[t])
            for i in range(b):
                for j in range(d_out):
                    d_by[j] += dl[i, j]
            dh = np.dot(dl, w_y) + carry
            dpre = dh * (1.0 - h[t] * h[t])
            if t > 0:
                d_wh += np.dot(dpre.T.copy(), h[t - 1])
            d_wx += np.dot(dpre.T.copy(), x[t])
            for i in range(b):
                for j in range(c):
                    d_bh[j] += dpre[i, j]
            carry = np.dot(dpre, w_h)
        return d_wx, d_wh, d_wy, d_bh, d_by

    @njit(cache=True)
    def _nb_bi_bptt(x, hf, hb, d_logits, w_h_f, w_h_b, w_y_f, w_y_b):
        s, b, c = hf.shape
        d_in = x.shape[2]
        d_out = d_logits.shape[2]
        d_wxf = np.zeros((c, d_in))
        d_whf = np.zeros((c, c))
        d_bhf = np.zeros(c)
        d_wxb = np.zeros((c, d_in))
        d_whb = np.zeros((c, c))
        d_bhb = np.zeros(c)
        d_wyf = np.zeros((d_out, c))
        d_wyb = np.zeros((d_out, c))
        d_by = np.zeros(d_out)
        for t in range(s):
            for i in range(b):
                for j in range(d_out):
                    d_by[j] += d_logits[t, i, j]

        carry = np.zeros((b, c))
        for t in range(s - 1, -1, -1):
            dh = carry.copy()
            if t + 1 < s:
                dl = d_logits[t + 1]
                d_wyf += np.dot(dl.T.copy(), hf[t])
                dh += np.dot(dl, w_y_f)
            dpre = dh * (1.0 - hf[t] * hf[t])
            if t > 0:
                d_whf += np.dot(dpre.T.copy(), hf[t - 1])
            d_wxf += np.dot(dpre.T.copy(), x[t])
            for i in range(b):
                for j in range(c):
                    d_bhf[j] += dpre[i, j]
            carry = np.dot(dpre, w_h_f)

        carry = np.zeros((b, c))
        for t in range(s):
            dh = carry.copy()
            if t - 1 >= 0:
                dl = d_logits[t - 1]
                d_wyb += np.dot(dl.T.copy(), hb[t])
                dh += np.dot(dl, w_y_b)
            dpre = dh * (1.0 - hb[t] * hb[t])
            if t + 1 < s:
                d_whb += np.dot(dpre.T.copy(), hb[t + 1])
            d_wxb += np.dot(dpre.T.copy(), x[t])
            for i in range(b):
                for j in range(c):
                    d_bhb[j] += dpre[i, j]
            carry = np.dot(dpre, w_h_b)
        return d_wxf, d_whf, d_bhf, d_wxb, d_whb, d_bhb, d_wyf, d_wyb, d_by

    @njit(cache=True)
    def _nb_categorical_suffix_loglik(h0, x_common, targets, w_x, w_h, b_h, w_y, b_y):
        a, c = h0.shape
        s = x_common.shape[0]
        d_out = w_y.shape[0]
        out = np.zeros(a)
        h = h0.copy()
        wxt = w_x.T.copy()
        wht = w_h.T.copy()
        wyt = w_y.T.copy()
        for t in range(s):
            logits = np.dot(h, wyt)
            for i in range(a):
                m = logits[i, 0] + b_y[0]
                for j in range(1, d_out):
                    v = logits[i, j] + b_y[j]
                    if v > m:
                        m = v
                acc = 0.0
                for j in range(d_out):
                    acc += np.exp(logits[i, j] + b_y[j] - m)
                out[i] += logits[i, targets[t]] + b_y[targets[t]] - m - np.log(acc)
            xin = np.dot(x_common[t], wxt)
            pre = np.dot(h, wht)
            for i in range(a):
                for j in range(c):
                    h[i, j] = np.tanh(pre[i, j] + xin[j] + b_h[j])
        return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

# auto mode: measured on single-core builds (benchmarks/bench_kernels.py),
# JIT pays off only where python dispatch overhead dominates (narrow
# batches); wide batches are faster through numpy's vectorized tanh/exp.
_AUTO_NUMBA = {
    "recurrent_forward": "small",  # numba iff batch is narrow
    "recurrent_backward": "small",
    "uni_bptt": "small",
    "bi_bptt": "small",
    "categorical_suffix_loglik": "small",
}
_SMALL_BATCH = 8


def _pick(name, batch):
    if _MODE == "numpy" or not HAVE_NUMBA:
        return False
    if _MODE == "numba":
        return True
    rule = _AUTO_NUMBA[name]
    return rule == "always" or batch <= _SMALL_BATCH


def recurrent_forward(h0, x, w_x, w_h, b_h):
    if _pick("recurrent_forward", x.shape[1]):
        return _nb_recurrent_forward(h0, x, w_x, w_h, b_h)
    return _np_recurrent_forward(h0, x, w_x, w_h, b_h)


def recurrent_backward(hn, x, w_x, w_h, b_h):
    if _pick("recurrent_backward", x.shape[1]):
        return _nb_recurrent_backward(hn, x, w_x, w_h, b_h)
    return _np_recurrent_backward(hn, x, w_x, w_h, b_h)


def uni_bptt(x, h, d_logits, w_h, w_y):
    if _pick("uni_bptt", x.shape[1]):
        return _nb_uni_bptt(x, h, d_logits, w_h, w_y)
    return _np_uni_bptt(x, h, d_logits, w_h, w_y)


def bi_bptt(x, hf, hb, d_logits, w_h_f, w_h_b, w_y_f, w_y_b):
    if _pick("bi_bptt", x.shape[1]):
        return _nb_bi_bptt(x, hf, hb, d_logits, w_h_f, w_h_b, w_y_f, w_y_b)
    return _np_bi_bptt(x, hf, hb, d_logits, w_h_f, w_h_b, w_y_f, w_y_b)


def categorical_suffix_loglik(h0, x_common, targets, w_x, w_h, b_h, w_y, b_y):
    if _pick("categorical_suffix_loglik", h0.shape[0]):
        return _nb_categorical_suffix_loglik(
            h0, x_common, targets, w_x, w_h, b_h, w_y, b_y
        )
    return _np_categorical_suffix_loglik(
        h0, x_common, targets, w_x, w_h, b_h, w_y, b_y
    )


def active_mode() -> str:
    """The effective kernel mode after import-time fallbacks."""
    return _MODE
