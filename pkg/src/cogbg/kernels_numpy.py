"""Vectorized pure-numpy kernels (fallback backend).

This file mirrors kernels_numba operation-for-operation: same update
expressions, same left-to-right reduction order (weight sums are built
column by column, never via pairwise summation), same stable sorting by
w/sigma. The cross-backend tests assert bit-identical masks and state.
"""

from __future__ import annotations

import numpy as np

from .kernels_numba import (
    KIND_COPY,
    KIND_SKIP,
    LEVEL_CHP,
    LEVEL_GMM,
    LEVEL_GROUP,
    LEVEL_MEAN,
    LEVEL_MEANVAR,
)


def sort_subset(mu, var, w, count, idx):
    """Stable descending re-sort by w/sigma for the given pixel rows.
    Returns inv with each old slot's new position, shape (len(idx), K)."""
    kmax = mu.shape[1]
    m_mu = mu[idx]
    m_var = var[idx]
    m_w = w[idx]
    keyv = m_w / np.sqrt(m_var)
    exists = np.arange(kmax)[None, :] < count[idx][:, None]
    keyv = np.where(exists, keyv, -np.inf)
    order = np.argsort(-keyv, axis=1, kind="stable")
    mu[idx] = np.take_along_axis(m_mu, order, axis=1)
    var[idx] = np.take_along_axis(m_var, order, axis=1)
    w[idx] = np.take_along_axis(m_w, order, axis=1)
    return np.argsort(order, axis=1, kind="stable")


def gmm_update(mu, var, w, count, idx, v, alpha, lam, t_bg, var_floor,
               init_var):
    """Full mixture update for pixel rows idx with values v (float64).
    alpha may be scalar or per-row. Returns (labels, inv permutation)."""
    kmax = mu.shape[1]
    m = idx.shape[0]
    if np.ndim(alpha) == 0:
        alpha = np.full(m, float(alpha))
    m_mu = mu[idx]
    m_var = var[idx]
    m_w = w[idx]
    m_n = count[idx]
    exists = np.arange(kmax)[None, :] < m_n[:, None]
    match = np.full(m, -1, np.int64)
    unmatched = np.ones(m, bool)
    for k in range(kmax):
        cand = unmatched & exists[:, k] & (
            np.abs(v - m_mu[:, k]) <= lam * np.sqrt(m_var[:, k]))
        match[cand] = k
        unmatched &= ~cand

    labels = np.ones(m, np.uint8)
    rows = np.where(~unmatched)[0]
    if rows.size:
        a = alpha[rows]
        mk = match[rows]
        m_w[rows] = (1.0 - a[:, None]) * m_w[rows]
        m_w[rows, mk] = m_w[rows, mk] + a
        s = m_w[rows, 0].copy()
        for k in range(1, kmax):
            s = s + m_w[rows, k]
        m_w[rows] = m_w[rows] / s[:, None]
        mean_new = (1.0 - a) * m_mu[rows, mk] + a * v[rows]
        m_mu[rows, mk] = mean_new
        d = v[rows] - mean_new
        s2 = (1.0 - a) * m_var[rows, mk] + a * (d * d)
        s2 = np.where(s2 < var_floor, var_floor, s2)
        m_var[rows, mk] = s2
        cum = np.cumsum(m_w[rows], axis=1)
        crossed = cum > t_bg
        has = crossed.any(axis=1)
        b = np.where(has, np.argmax(crossed, axis=1) + 1, m_n[rows])
        labels[rows] = np.where(mk + 1 <= b, 0, 1).astype(np.uint8)

    urows = np.where(unmatched)[0]
    if urows.size:
        n_u = m_n[urows]
        grow = n_u < kmax
        slot = np.where(grow, n_u, n_u - 1)
        m_n[urows] = np.where(grow, n_u + 1, n_u)
        m_mu[urows, slot] = v[urows]
        m_var[urows, slot] = init_var
        m_w[urows, slot] = alpha[urows]
        s = m_w[urows, 0].copy()
        for k in range(1, kmax):
            s = s + m_w[urows, k]
        zero = s == 0.0
        m_w[urows] = m_w[urows] / np.where(zero, 1.0, s)[:, None]
        if zero.any():
            zr = urows[zero]
            m_w[zr] = 0.0
            m_w[zr, slot[zero]] = 1.0

    mu[idx] = m_mu
    var[idx] = m_var
    w[idx] = m_w
    count[idx] = m_n
    inv = sort_subset(mu, var, w, count, idx)
    return labels, inv


def baseline_frame(vals, mu, var, w, count, alpha, lam, t_bg, var_floor,
                   init_var, out_label):
    idx = np.arange(vals.shape[0])
    labels, _inv = gmm_update(mu, var, w, count, idx,
                              vals.astype(np.float64), alpha, lam, t_bg,
                              var_floor, init_var)
    out_label[:] = labels


def cascade_frame(
    vals, mu, var, w, count, chp_prev, last_label, mid_order, mode_ref,
    hits, streak, last_active, clock, waking, on_lattice, group_id,
    g_mu, g_var, table, peak, wa, wb, wc,
    base_rate, lam, t_bg, var_floor, init_var, eps_chp,
    conf_thresh, prior_floor, rate_floor,
    saturation_frames, sleep_frames,
    sampling_on, grouping_on, rate_scaling_on, chp_on, literal_conf, compat,
    out_label, out_kind, out_conf, out_counts,
):
    n_pix = vals.shape[0]
    v = vals.astype(np.float64)
    prev = chp_prev.astype(np.float64)
    changed = np.abs(v - prev) > eps_chp
    out_conf[:] = 0.0

    if sampling_on:
        sleeping = clock > 0
        skip = sleeping & ~changed
        if skip.any():
            clock[skip] -= 1
            waking[skip & (clock == 0)] = 1
            chp_prev[skip] = vals[skip]
            out_label[skip] = last_label[skip]
            out_kind[skip] = KIND_SKIP
        wake_now = sleeping & changed
        clock[wake_now] = 0
        waking[wake_now] = 0
        streak[wake_now] = 0
        wake_frame = ~sleeping & (waking == 1)
        waking[wake_frame] = 0
        copy = wake_frame & ~changed & (on_lattice == 0)
        if copy.any():
            chp_prev[copy] = vals[copy]
            clock[copy] = sleep_frames
            out_label[copy] = last_label[copy]  # placeholder, pass 2
            out_kind[copy] = KIND_COPY
        evaluate = ~(skip | copy)
    else:
        evaluate = np.ones(n_pix, bool)
    idx = np.where(evaluate)[0]

    if compat:
        pretest = np.abs(v[idx] - mu[idx, 0]) <= lam * np.sqrt(var[idx, 0])
        labels, _inv = gmm_update(mu, var, w, count, idx, v[idx],
                                  base_rate, lam, t_bg, var_floor, init_var)
        kind = np.where(pretest, LEVEL_MEAN, LEVEL_GMM).astype(np.uint8)
        out_label[idx] = labels
        out_kind[idx] = kind
        hits[idx, kind] += 1
        last_active[idx] = kind.astype(np.int8)
        last_label[idx] = labels
        chp_prev[idx] = vals[idx]
        out_counts[:] = np.bincount(out_kind, minlength=7)[:7]
        return

    # confidence from pre-update state (top = highest active mid level)
    top = mid_order[idx, 0]
    if not grouping_on:
        top = np.where(top == LEVEL_GROUP, mid_order[idx, 1], top)
    mu_top = np.empty(idx.size)
    sig_top = np.empty(idx.size)
    sel_g = top == LEVEL_GROUP
    if sel_g.any():
        g = group_id[idx[sel_g]]
        mu_top[sel_g] = g_mu[g]
        sig_top[sel_g] = np.sqrt(g_var[g])
    sel_mv = top == LEVEL_MEANVAR
    if sel_mv.any():
        r = mode_ref[idx[sel_mv], 1].astype(np.int64)
        mu_top[sel_mv] = mu[idx[sel_mv], r]
        sig_top[sel_mv] = np.sqrt(var[idx[sel_mv], r])
    sel_m = ~sel_g & ~sel_mv
    if sel_m.any():
        r = mode_ref[idx[sel_m], 0].astype(np.int64)
        mu_top[sel_m] = mu[idx[sel_m], r]
        sig_top[sel_m] = np.sqrt(var[idx[sel_m], r])
    phat = table[idx, vals[idx]] / peak[idx]
    bterm = np.abs(v[idx] - prev[idx]) / 255.0
    if not literal_conf:
        bterm = 1.0 - bterm
    gterm = np.abs(v[idx] - mu_top) / (lam * sig_top)
    gterm = np.where(gterm > 1.0, 1.0, gterm)
    if not literal_conf:
        gterm = 1.0 - gterm
    denom = wb[idx] + wc[idx]
    conf_null = np.where(
        denom > 0.0,
        (wb[idx] * bterm + wc[idx] * gterm) / np.where(denom > 0.0, denom,
                                                       1.0),
        0.0)
    conf_full = wa[idx] * phat + wb[idx] * bterm + wc[idx] * gterm
    conf = np.where(phat < prior_floor, conf_null, conf_full)
    out_conf[idx] = conf
    if rate_scaling_on:
        relax = 1.0 - conf
        relax = np.where(relax < rate_floor, rate_floor, relax)
        rho = base_rate * relax
    else:
        rho = np.full(idx.size, base_rate)
    rho_full = np.zeros(n_pix)
    rho_full[idx] = rho

    # descend the cascade
    remaining = evaluate.copy()
    active = np.full(n_pix, -1, np.int8)
    labels_out = np.zeros(n_pix, np.uint8)
    if chp_on:
        chp_hit = remaining & ~changed
        labels_out[chp_hit] = last_label[chp_hit]
        active[chp_hit] = LEVEL_CHP
        remaining &= ~chp_hit
    for j in range(3):
        codes = mid_order[:, j]
        if grouping_on:
            si = np.where(remaining & (codes == LEVEL_GROUP))[0]
            if si.size:
                g = group_id[si]
                hit = np.abs(v[si] - g_mu[g]) <= lam * np.sqrt(g_var[g])
                hi = si[hit]
                active[hi] = LEVEL_GROUP
                labels_out[hi] = 0
                remaining[hi] = False
        si = np.where(remaining & (codes == LEVEL_MEAN))[0]
        if si.size:
            r = mode_ref[si, 0].astype(np.int64)
            # running (left-to-right) weight prefix before the mode: a hit
            # outside the background prefix is foreground by ranking
            pc = np.cumsum(w[si], axis=1)
            ar = np.arange(si.size)
            prefix = np.where(r > 0, pc[ar, np.maximum(r - 1, 0)], 0.0)
            hit = (np.abs(v[si] - mu[si, r]) <= lam * np.sqrt(var[si, r])) \
                & (prefix <= t_bg)
            hi = si[hit]
            rr = r[hit]
            rh = rho_full[hi]
            mu[hi, rr] = (1.0 - rh) * mu[hi, rr] + rh * v[hi]
            active[hi] = LEVEL_MEAN
            labels_out[hi] = 0
            remaining[hi] = False
        si = np.where(remaining & (codes == LEVEL_MEANVAR))[0]
        if si.size:
            r = mode_ref[si, 1].astype(np.int64)
            pc = np.cumsum(w[si], axis=1)
            ar = np.arange(si.size)
            prefix = np.where(r > 0, pc[ar, np.maximum(r - 1, 0)], 0.0)
            hit = (np.abs(v[si] - mu[si, r]) <= lam * np.sqrt(var[si, r])) \
                & (prefix <= t_bg)
            hi = si[hit]
            rr = r[hit]
            rh = rho_full[hi]
            mean_new = (1.0 - rh) * mu[hi, rr] + rh * v[hi]
            mu[hi, rr] = mean_new
            d = v[hi] - mean_new
            s2 = (1.0 - rh) * var[hi, rr] + rh * (d * d)
            s2 = np.where(s2 < var_floor, var_floor, s2)
            var[hi, rr] = s2
            inv = sort_subset(mu, var, w, count, hi)
            ar = np.arange(hi.size)
            mode_ref[hi, 0] = inv[ar, mode_ref[hi, 0].astype(np.int64)
                                  ].astype(np.int8)
            mode_ref[hi, 1] = inv[ar, mode_ref[hi, 1].astype(np.int64)
                                  ].astype(np.int8)
            active[hi] = LEVEL_MEANVAR
            labels_out[hi] = 0
            remaining[hi] = False
    gi = np.where(remaining)[0]
    if gi.size:
        lbl, inv = gmm_update(mu, var, w, count, gi, v[gi], rho_full[gi],
                              lam, t_bg, var_floor, init_var)
        labels_out[gi] = lbl
        active[gi] = LEVEL_GMM
        ar = np.arange(gi.size)
        mode_ref[gi, 0] = inv[ar, mode_ref[gi, 0].astype(np.int64)
                              ].astype(np.int8)
        mode_ref[gi, 1] = inv[ar, mode_ref[gi, 1].astype(np.int64)
                              ].astype(np.int8)

    # streak and sampling bookkeeping; the streak survives sleep, so a
    # still-confident pixel re-arms on its wake frame
    act = active[idx]
    cont = conf > conf_thresh
    streak[idx] = np.where(cont, streak[idx] + 1, 0)
    hits[idx, act.astype(np.int64)] += 1
    last_active[idx] = act
    last_label[idx] = labels_out[idx]
    chp_prev[idx] = vals[idx]
    out_label[idx] = labels_out[idx]
    out_kind[idx] = act.astype(np.uint8)
    out_counts[:] = np.bincount(out_kind, minlength=7)[:7]
    if sampling_on:
        sat = evaluate & (streak >= saturation_frames)
        clock[sat] = sleep_frames


def resolve_copies(out_kind, out_label, last_label, width, stride):
    ci = np.where(out_kind == KIND_COPY)[0]
    if ci.size:
        y = ci // width
        x = ci % width
        q = (y - y % stride) * width + (x - x % stride)
        lbl = out_label[q]
        out_label[ci] = lbl
        last_label[ci] = lbl
