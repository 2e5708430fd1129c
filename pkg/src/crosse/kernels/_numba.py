"""JIT-compiled kernels; contract defined by the reference backend.

Same call signatures and integer behavior as the pure-numpy module; float
accumulation order differs (sequential vs BLAS), so cross-backend results
agree to ~1e-10 rather than bitwise. All kernels release the GIL and cache
their compiled form on disk.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

EPS = 1e-12

NAME = "numba"


@njit(cache=True, nogil=True)
def _sig(s):
    if s >= 0.0:
        return 1.0 / (1.0 + math.exp(-s))
    ex = math.exp(s)
    return ex / (1.0 + ex)


@njit(cache=True, nogil=True)
def _ce_term(label, f):
    fc = f
    if fc < EPS:
        fc = EPS
    elif fc > 1.0 - EPS:
        fc = 1.0 - EPS
    return -(label * math.log(fc) + (1.0 - label) * math.log(1.0 - fc))


@njit(cache=True, nogil=True)
def crosse_batch(E, R, C, b, heads, rels, bag_ptr, tails, labels,
                 keep, use_keep, dE, dR, dC, db):
    d = E.shape[1]
    hi_vec = np.empty(d, dtype=np.float64)
    q = np.empty(d, dtype=np.float64)
    qt = np.empty(d, dtype=np.float64)
    dqt = np.empty(d, dtype=np.float64)
    ce_train = 0.0
    ce_eval = 0.0
    for i in range(heads.shape[0]):
        h = heads[i]
        r = rels[i]
        for k in range(d):
            hv = np.float64(C[r, k]) * np.float64(E[h, k])
            hi_vec[k] = hv
            u = hv + hv * np.float64(R[r, k]) + np.float64(b[k])
            q[k] = math.tanh(u)
            if use_keep:
                qt[k] = q[k] * np.float64(keep[i, k])
            else:
                qt[k] = q[k]
            dqt[k] = 0.0
        for j in range(bag_ptr[i], bag_ptr[i + 1]):
            t = tails[j]
            l = labels[j]
            s = 0.0
            for k in range(d):
                s += np.float64(E[t, k]) * qt[k]
            f = _sig(s)
            ce_train += _ce_term(l, f)
            if use_keep:
                s2 = 0.0
                for k in range(d):
                    s2 += np.float64(E[t, k]) * q[k]
                ce_eval += _ce_term(l, _sig(s2))
            g = f - l
            for k in range(d):
                dE[t, k] += g * qt[k]
                dqt[k] += g * np.float64(E[t, k])
        for k in range(d):
            dq = dqt[k]
            if use_keep:
                dq *= np.float64(keep[i, k])
            du = dq * (1.0 - q[k] * q[k])
            db[k] += du
            dhi = du * (1.0 + np.float64(R[r, k]))
            dR[r, k] += du * hi_vec[k]
            dC[r, k] += dhi * np.float64(E[h, k])
            dE[h, k] += dhi * np.float64(C[r, k])
    if not use_keep:
        ce_eval = ce_train
    return ce_train, ce_eval


@njit(cache=True, nogil=True)
def crosse_s_batch(E, R, b, heads, rels, bag_ptr, tails, labels,
                   keep, use_keep, dE, dR, db):
    d = E.shape[1]
    q = np.empty(d, dtype=np.float64)
    qt = np.empty(d, dtype=np.float64)
    dqt = np.empty(d, dtype=np.float64)
    ce_train = 0.0
    ce_eval = 0.0
    for i in range(heads.shape[0]):
        h = heads[i]
        r = rels[i]
        for k in range(d):
            u = np.float64(E[h, k]) + np.float64(R[r, k]) + np.float64(b[k])
            q[k] = math.tanh(u)
            if use_keep:
                qt[k] = q[k] * np.float64(keep[i, k])
            else:
                qt[k] = q[k]
            dqt[k] = 0.0
        for j in range(bag_ptr[i], bag_ptr[i + 1]):
            t = tails[j]
            l = labels[j]
            s = 0.0
            for k in range(d):
                s += np.float64(E[t, k]) * qt[k]
            f = _sig(s)
            ce_train += _ce_term(l, f)
            if use_keep:
                s2 = 0.0
                for k in range(d):
                    s2 += np.float64(E[t, k]) * q[k]
                ce_eval += _ce_term(l, _sig(s2))
            g = f - l
            for k in range(d):
                dE[t, k] += g * qt[k]
                dqt[k] += g * np.float64(E[t, k])
        for k in range(d):
            dq = dqt[k]
            if use_keep:
                dq *= np.float64(keep[i, k])
            du = dq * (1.0 - q[k] * q[k])
            db[k] += du
            dR[r, k] += du
            dE[h, k] += du
    if not use_keep:
        ce_eval = ce_train
    return ce_train, ce_eval


@njit(cache=True, nogil=True)
def transe_batch(E, R, heads, rels, bag_ptr, tails, labels, margin, dE, dR):
    d = E.shape[1]
    trans = np.empty(d, dtype=np.float64)
    d_that = np.empty(d, dtype=np.float64)
    total = 0.0
    for i in range(heads.shape[0]):
        h = heads[i]
        r = rels[i]
        lo = bag_ptr[i]
        hi = bag_ptr[i + 1]
        m = hi - lo
        for k in range(d):
            trans[k] = np.float64(E[h, k]) + np.float64(R[r, k])
            d_that[k] = 0.0
        dist = np.empty(m, dtype=np.float64)
        coeff = np.zeros(m, dtype=np.float64)
        for j in range(m):
            t = tails[lo + j]
            acc = 0.0
            for k in range(d):
                diff = trans[k] - np.float64(E[t, k])
                acc += diff * diff
            dj = math.sqrt(acc)
            dist[j] = dj if dj > EPS else EPS
        for p in range(m):
            if labels[lo + p] != 1.0:
                continue
            for n in range(m):
                if labels[lo + n] != 0.0:
                    continue
                a = margin + dist[p] - dist[n]
                if a > 0.0:
                    total += a
                    coeff[p] += 1.0
                    coeff[n] -= 1.0
        for j in range(m):
            c = coeff[j]
            if c == 0.0:
                continue
            t = tails[lo + j]
            inv = c / dist[j]
            for k in range(d):
                un = (trans[k] - np.float64(E[t, k])) * inv
                dE[t, k] -= un
                d_that[k] += un
        for k in range(d):
            dE[h, k] += d_that[k]
            dR[r, k] += d_that[k]
    return total, total


@njit(cache=True, nogil=True)
def fill_negatives(pos_flat, pos_ptr, counts, n_e, rand_buf, out, out_ptr):
    pos = 0
    n_buf = rand_buf.shape[0]
    for i in range(counts.shape[0]):
        lo = pos_ptr[i]
        hi = pos_ptr[i + 1]
        base = out_ptr[i]
        k = 0
        while k < counts[i]:
            if pos >= n_buf:
                return -1
            cand = rand_buf[pos]
            pos += 1
            a = lo
            b = hi
            while a < b:
                mid = (a + b) // 2
                if pos_flat[mid] < cand:
                    a = mid + 1
                else:
                    b = mid
            if a < hi and pos_flat[a] == cand:
                continue
            dup = False
            for j in range(base, base + k):
                if out[j] == cand:
                    dup = True
                    break
            if dup:
                continue
            out[base + k] = cand
            k += 1
    return pos
