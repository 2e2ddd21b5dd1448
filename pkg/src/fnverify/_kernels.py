"""Hot numeric kernels: Philox4x32-10 counter blocks and batched CTMC loops.

Kernels are numba @njit-compiled when numba is importable; setting
FNV_NO_NUMBA=1 selects the pure-python fallback. Both paths run the same
source, so sample streams and trial outcomes are bit-identical. The raw
uncompiled function is always reachable as `<kernel>.py_func`.

Philox4x32-10 follows Random123 (Salmon et al.); each 128-bit counter block
yields four 32-bit words (two 53-bit uniforms). Streams are keyed by the
64-bit master seed; the 64-bit stream id occupies the high counter words, so
distinct streams never share a counter.
"""
from __future__ import annotations

import functools
import math
import os

import numpy as np

_DISABLED = os.environ.get("FNV_NO_NUMBA", "").strip() not in ("", "0")
NUMBA_ENABLED = False
if not _DISABLED:
    try:
        from numba import njit as _njit
        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    def _jit(fn):
        return _njit(cache=True, nogil=True)(fn)
else:
    def _jit(fn):
        # numpy scalar uint ops warn on intended wraparound; silence locally
        @functools.wraps(fn)
        def wrapper(*args):
            with np.errstate(over="ignore"):
                return fn(*args)
        wrapper.py_func = fn
        return wrapper

U64 = np.uint64
_M32 = U64(0xFFFFFFFF)
_MUL0 = U64(0xD2511F53)
_MUL1 = U64(0xCD9E8D57)
_WEYL0 = U64(0x9E3779B9)
_WEYL1 = U64(0xBB67AE85)
_SH32 = U64(32)
_SH11 = U64(11)
_ONE = U64(1)
_ZERO = U64(0)
_INV53 = 2.0 ** -53

# trial outcome codes shared with the verifier
CODE_OK = 0
CODE_FORMAT_BAD = 1
CODE_NEGATIVE_RATE = 2
CODE_NONZERO_SUM = 3
CODE_TRANSITION_CAP = 4
CODE_CONTRACT_ERROR = 5


@_jit
def philox4x32(c0, c1, c2, c3, k0, k1):
    """One Philox4x32-10 block: counter words c0..c3, key words k0,k1 (uint64
    holding 32-bit values); returns the four output words."""
    for _ in range(10):
        p0 = _MUL0 * c0
        p1 = _MUL1 * c2
        hi0 = p0 >> _SH32
        lo0 = p0 & _M32
        hi1 = p1 >> _SH32
        lo1 = p1 & _M32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + _WEYL0) & _M32
        k1 = (k1 + _WEYL1) & _M32
    return c0, c1, c2, c3


@_jit
def stream_uniform(key0, key1, sid_lo, sid_hi, index):
    """53-bit uniform in [0,1): sample `index` of stream (key, sid)."""
    block = index >> _ONE
    w0, w1, w2, w3 = philox4x32(block & _M32, block >> _SH32,
                                sid_lo, sid_hi, key0, key1)
    if (index & _ONE) == _ZERO:
        v = (w0 << _SH32) | w1
    else:
        v = (w2 << _SH32) | w3
    return np.float64(v >> _SH11) * _INV53


@_jit
def fill_uniforms(key0, key1, sid_lo, sid_hi, start, out):
    """Fill `out` with consecutive stream samples starting at index `start`."""
    idx = start
    for i in range(out.shape[0]):
        out[i] = stream_uniform(key0, key1, sid_lo, sid_hi, idx)
        idx = idx + _ONE


@_jit
def disc_exp_index(u, rate, delta, kmax):
    """Inverse-CDF index of the truncated discretized exponential:
    k = min(kmax, floor(-ln(u)/(rate*delta))), with u=0 mapping to kmax."""
    if u == 0.0:
        return kmax
    ratio = -math.log(u) / (rate * delta)
    if ratio < kmax:
        return int(ratio)
    return kmax


@_jit
def run_checked_trials(indptr, targets, cumrate, legal_code, exit_rate,
                       x0, t, cap, tau_zero,
                       key0, key1, sid_lo, sid_hi,
                       discrete, delta, kmax,
                       out_code, out_m, out_tau):
    """Checked random-walk verification trials over a precomputed generator
    table (one column per table state, targets/cumrate in CSC layout).

    Per visited state: reject on the state's stored format/column code, then
    on the transition cap; hold to the horizon when the exit rate is zero;
    otherwise draw the waiting time (exponential or discretized), stop at the
    horizon without executing a crossing jump, else jump along the cumulative
    rate buckets. One uniform per waiting time, one per jump.
    """
    n_trials = sid_lo.shape[0]
    for i in range(n_trials):
        sl = sid_lo[i]
        sh = sid_hi[i]
        idx = _ZERO
        x = x0
        tau = 0.0
        m = 0
        code = CODE_OK
        while True:
            c = legal_code[x]
            if c != CODE_OK:
                code = c
                break
            if m >= cap:
                code = CODE_TRANSITION_CAP
                break
            r = exit_rate[x]
            if r <= tau_zero:
                tau = t
                break
            u = stream_uniform(key0, key1, sl, sh, idx)
            idx = idx + _ONE
            if discrete:
                dt = disc_exp_index(u, r, delta, kmax) * delta
            else:
                while u == 0.0:
                    u = stream_uniform(key0, key1, sl, sh, idx)
                    idx = idx + _ONE
                dt = -math.log(u) / r
            tau = tau + dt
            if tau >= t:
                break
            lo = indptr[x]
            hi = indptr[x + 1]
            u2 = stream_uniform(key0, key1, sl, sh, idx)
            idx = idx + _ONE
            target = u2 * cumrate[hi - 1]
            j = lo
            while j < hi - 1 and target >= cumrate[j]:
                j += 1
            x = targets[j]
            m += 1
        out_code[i] = code
        out_m[i] = m
        out_tau[i] = t if code == CODE_OK else tau


@_jit
def run_marginal_trials(indptr, targets, cumrate, exit_rate,
                        x0, t, cap, tau_zero, rec_times,
                        key0, key1, sid_lo, sid_hi,
                        discrete, delta, kmax,
                        out_states, out_m, out_early):
    """Uncheck(ed) Gillespie trials recording the occupied table state at each
    requested time (rec_times sorted ascending, all <= t). The caller
    guarantees column legality; out_early flags transition-cap stops."""
    n_trials = sid_lo.shape[0]
    n_rec = rec_times.shape[0]
    for i in range(n_trials):
        sl = sid_lo[i]
        sh = sid_hi[i]
        idx = _ZERO
        x = x0
        tau = 0.0
        m = 0
        rec = 0
        early = False
        while True:
            if m >= cap:
                early = True
                break
            r = exit_rate[x]
            if r <= tau_zero:
                break
            u = stream_uniform(key0, key1, sl, sh, idx)
            idx = idx + _ONE
            if discrete:
                dt = disc_exp_index(u, r, delta, kmax) * delta
            else:
                while u == 0.0:
                    u = stream_uniform(key0, key1, sl, sh, idx)
                    idx = idx + _ONE
                dt = -math.log(u) / r
            new_tau = tau + dt
            while rec < n_rec and rec_times[rec] < new_tau:
                out_states[i, rec] = x
                rec += 1
            if new_tau >= t:
                tau = new_tau
                break
            lo = indptr[x]
            hi = indptr[x + 1]
            u2 = stream_uniform(key0, key1, sl, sh, idx)
            idx = idx + _ONE
            target = u2 * cumrate[hi - 1]
            j = lo
            while j < hi - 1 and target >= cumrate[j]:
                j += 1
            x = targets[j]
            m += 1
            tau = new_tau
        while rec < n_rec:
            out_states[i, rec] = x
            rec += 1
        out_m[i] = m
        out_early[i] = early
