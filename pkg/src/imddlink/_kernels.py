"""Compiled inner loops for the adaptive equalizers and the Viterbi detector."""

import numpy as np
from numba import njit

# status codes returned by adapt_taps
OK = 0
OVERFLOW = 1

_OVERFLOW_LEVEL = 1e6


@njit(cache=True, inline="always")
def _slice(y, levels):
    step = levels[1] - levels[0]
    i = int(np.floor((y - levels[0]) / step + 0.5))
    if i < 0:
        return 0
    if i >= levels.shape[0]:
        return levels.shape[0] - 1
    return i


@njit(cache=True)
def adapt_taps(xpad, w, fb, bias, mu, levels, ref_idx, n_steps, start, err_out):
    """Data-aided LMS over symbols start .. start + n_steps (wrapping).

    xpad holds the 2 sps input padded so that symbol k's window is
    xpad[2k : 2k + len(w)]. Feedback uses the reference symbols. Squared
    errors go to err_out. bias[0] is an adaptive DC term (the capture is
    mean-removed, but the symbol record's own mean is not zero). Returns a
    status code.
    """
    n_ff = w.shape[0]
    n_fb = fb.shape[0]
    n_sym = ref_idx.shape[0]
    for step in range(n_steps):
        k = (start + step) % n_sym
        base = 2 * k
        y = bias[0]
        for i in range(n_ff):
            y += w[i] * xpad[base + i]
        for j in range(n_fb):
            y += fb[j] * levels[ref_idx[(k - 1 - j) % n_sym]]
        if not np.isfinite(y) or abs(y) > _OVERFLOW_LEVEL:
            return OVERFLOW
        e = levels[ref_idx[k]] - y
        err_out[step] = e * e
        g = mu * e
        bias[0] += g
        for i in range(n_ff):
            w[i] += g * xpad[base + i]
        for j in range(n_fb):
            fb[j] += g * levels[ref_idx[(k - 1 - j) % n_sym]]
    return OK


@njit(cache=True)
def run_decision_directed(xpad, w, fb, bias, mu, levels, n_sym, soft, pr_soft, dec, forced_k, forced_idx):
    """Equalize all symbols with slicer feedback, adapting on decisions.

    soft is the equalizer output, pr_soft the same output with the first
    feedback tap's contribution removed (so it still carries the first
    postcursor). forced_k >= 0 overrides the decision at that symbol,
    which is how error propagation is probed.
    """
    n_ff = w.shape[0]
    n_fb = fb.shape[0]
    for k in range(n_sym):
        base = 2 * k
        y = bias[0]
        for i in range(n_ff):
            y += w[i] * xpad[base + i]
        first = 0.0
        for j in range(n_fb):
            if k - 1 - j >= 0:
                c = fb[j] * levels[dec[k - 1 - j]]
                y += c
                if j == 0:
                    first = c
        if not np.isfinite(y) or abs(y) > _OVERFLOW_LEVEL:
            return OVERFLOW
        d = _slice(y, levels)
        if k == forced_k:
            d = forced_idx
        soft[k] = y
        pr_soft[k] = y - first
        dec[k] = d
        if mu > 0.0:
            g = mu * (levels[d] - y)
            bias[0] += g
            for i in range(n_ff):
                w[i] += g * xpad[base + i]
            for j in range(n_fb):
                if k - 1 - j >= 0:
                    fb[j] += g * levels[dec[k - 1 - j]]
    return OK


@njit(cache=True)
def viterbi_1tap(y, levels, h1, init_level):
    """ML sequence for y_k = s_k + h1 s_{k-1} + white noise, s_{-1} = init_level."""
    n = y.shape[0]
    m = levels.shape[0]
    out = np.empty(n, dtype=np.int8)
    if n == 0:
        return out
    surv = np.empty((n, m), dtype=np.int8)
    metric = np.empty(m)
    new = np.empty(m)
    for s in range(m):
        r = y[0] - levels[s] - h1 * init_level
        metric[s] = r * r
    for k in range(1, n):
        lo = np.inf
        for s in range(m):
            best = np.inf
            arg = 0
            base = y[k] - levels[s]
            for p in range(m):
                r = base - h1 * levels[p]
                c = metric[p] + r * r
                if c < best:
                    best = c
                    arg = p
            new[s] = best
            surv[k, s] = arg
            if best < lo:
                lo = best
        for s in range(m):
            metric[s] = new[s] - lo
    s = 0
    for t in range(1, m):
        if metric[t] < metric[s]:
            s = t
    out[n - 1] = s
    for k in range(n - 1, 0, -1):
        s = surv[k, s]
        out[k - 1] = s
    return out
