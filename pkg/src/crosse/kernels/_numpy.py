"""Pure-numpy reference kernels.

Semantics here define the contract the accelerated backend must match:
integer decisions (negative sampling) are reproduced exactly, float results
to tight tolerance. Batches arrive flattened: per-bag anchors in heads/rels,
example boundaries in bag_ptr, concatenated tails/labels.

Cross-entropy gradients use the unclamped sigmoid (the [eps, 1-eps] clamp
only guards the log in the loss value; where it engages, sigmoid' has
underflowed anyway).
"""

from __future__ import annotations

import numpy as np

EPS = 1e-12

NAME = "numpy"


def _sigmoid(s: np.ndarray) -> np.ndarray:
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    ex = np.exp(s[np.logical_not(pos)])
    out[np.logical_not(pos)] = ex / (1.0 + ex)
    return out


def _bag_ce(labels, f):
    fc = np.clip(f, EPS, 1.0 - EPS)
    return float(-np.sum(labels * np.log(fc) + (1.0 - labels) * np.log(1.0 - fc)))


def crosse_batch(E, R, C, b, heads, rels, bag_ptr, tails, labels,
                 keep, use_keep, dE, dR, dC, db):
    """Forward + backward for interaction-mode bags.

    Accumulates float64 cross-entropy gradients into dE/dR/dC/db (caller
    zeroes them). Returns (ce_train, ce_eval): with use_keep the train term
    sees the dropout mask while the eval term does not; otherwise they are
    the same sum.
    """
    ce_train = 0.0
    ce_eval = 0.0
    b64 = b.astype(np.float64)
    for i in range(len(heads)):
        h = heads[i]
        r = rels[i]
        lo, hi_ = bag_ptr[i], bag_ptr[i + 1]
        ts = tails[lo:hi_]
        ls = labels[lo:hi_]
        e_h = E[h].astype(np.float64)
        c_r = C[r].astype(np.float64)
        w_r = R[r].astype(np.float64)
        hi_vec = c_r * e_h
        u = hi_vec + hi_vec * w_r + b64
        q = np.tanh(u)
        if use_keep:
            qt = q * keep[i].astype(np.float64)
        else:
            qt = q
        Et = E[ts].astype(np.float64)
        s = Et @ qt
        f = _sigmoid(s)
        ce_train += _bag_ce(ls, f)
        if use_keep:
            ce_eval += _bag_ce(ls, _sigmoid(Et @ q))
        g = f - ls
        np.add.at(dE, ts, g[:, None] * qt)
        dqt = Et.T @ g
        dq = dqt * keep[i].astype(np.float64) if use_keep else dqt
        du = dq * (1.0 - q * q)
        db += du
        dhi = du * (1.0 + w_r)
        dR[r] += du * hi_vec
        dC[r] += dhi * e_h
        dE[h] += dhi * c_r
    if not use_keep:
        ce_eval = ce_train
    return ce_train, ce_eval


def crosse_s_batch(E, R, b, heads, rels, bag_ptr, tails, labels,
                   keep, use_keep, dE, dR, db):
    """Same contract as crosse_batch for the no-interaction ablation."""
    ce_train = 0.0
    ce_eval = 0.0
    b64 = b.astype(np.float64)
    for i in range(len(heads)):
        h = heads[i]
        r = rels[i]
        lo, hi_ = bag_ptr[i], bag_ptr[i + 1]
        ts = tails[lo:hi_]
        ls = labels[lo:hi_]
        u = E[h].astype(np.float64) + R[r].astype(np.float64) + b64
        q = np.tanh(u)
        qt = q * keep[i].astype(np.float64) if use_keep else q
        Et = E[ts].astype(np.float64)
        s = Et @ qt
        f = _sigmoid(s)
        ce_train += _bag_ce(ls, f)
        if use_keep:
            ce_eval += _bag_ce(ls, _sigmoid(Et @ q))
        g = f - ls
        np.add.at(dE, ts, g[:, None] * qt)
        dqt = Et.T @ g
        dq = dqt * keep[i].astype(np.float64) if use_keep else dqt
        du = dq * (1.0 - q * q)
        db += du
        dR[r] += du
        dE[h] += du
    if not use_keep:
        ce_eval = ce_train
    return ce_train, ce_eval


def transe_batch(E, R, heads, rels, bag_ptr, tails, labels, margin, dE, dR):
    """Margin-ranking loss over every (positive, negative) pair in each bag.

    Distances are L2 with a 1e-12 floor so the unit-vector factor stays
    finite. Returns (loss, loss); there is no dropout path.
    """
    total = 0.0
    for i in range(len(heads)):
        h = heads[i]
        r = rels[i]
        lo, hi_ = bag_ptr[i], bag_ptr[i + 1]
        ts = tails[lo:hi_]
        ls = labels[lo:hi_]
        trans = E[h].astype(np.float64) + R[r].astype(np.float64)
        diff = trans - E[ts].astype(np.float64)
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        dist = np.maximum(dist, EPS)
        pos = np.flatnonzero(ls == 1.0)
        neg = np.flatnonzero(ls == 0.0)
        if len(pos) == 0 or len(neg) == 0:
            continue
        act = (margin + dist[pos][:, None] - dist[neg][None, :]) > 0.0
        total += float(np.sum(np.maximum(
            margin + dist[pos][:, None] - dist[neg][None, :], 0.0)))
        c_pos = act.sum(axis=1).astype(np.float64)
        c_neg = act.sum(axis=0).astype(np.float64)
        unit = diff / dist[:, None]
        coeff = np.zeros(len(ts))
        coeff[pos] = c_pos
        coeff[neg] = -c_neg
        d_that = unit.T @ coeff
        np.add.at(dE, ts, -coeff[:, None] * unit)
        dE[h] += d_that
        dR[r] += d_that
    return total, total


def fill_negatives(pos_flat, pos_ptr, counts, n_e, rand_buf, out, out_ptr):
    """Rejection-sample negatives for a batch of bags from one shared buffer.

    For bag i, draws counts[i] entities not in pos_flat[pos_ptr[i]:
    pos_ptr[i+1]] (sorted true tails) and distinct within the bag, consuming
    rand_buf left to right. Returns values consumed, or -1 if the buffer ran
    out (caller redraws bigger and restarts the whole batch).
    """
    pos = 0
    n_buf = len(rand_buf)
    for i in range(len(counts)):
        lo, hi = pos_ptr[i], pos_ptr[i + 1]
        base = out_ptr[i]
        k = 0
        while k < counts[i]:
            if pos >= n_buf:
                return -1
            cand = rand_buf[pos]
            pos += 1
            # binary search in the bag's sorted positive tails
            a, b = lo, hi
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
