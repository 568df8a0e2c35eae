"""Compiled per-pixel kernels (numba backend).

Arithmetic here is mirrored operation-for-operation by kernels_numpy; any
change to an update expression must be applied to both so cross-backend
outputs stay bit-identical. No fastmath: IEEE semantics are part of the
backend contract.

Level codes shared with the numpy twin and the engine:
  0 CHP, 1 group, 2 mode-mean, 3 mode-mean+var, 4 full mixture
Kind codes extend level codes with 5 = skipped by clock, 6 = copied from a
stride neighbor.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LEVEL_CHP = 0
LEVEL_GROUP = 1
LEVEL_MEAN = 2
LEVEL_MEANVAR = 3
LEVEL_GMM = 4
KIND_SKIP = 5
KIND_COPY = 6


@njit(cache=True)
def _sort_modes(mu, var, w, count, p, key, tmp, perm, inv):
    """Stable insertion sort of pixel p's modes by w/sigma descending.
    Fills inv with each old slot's new position."""
    kmax = mu.shape[1]
    n = count[p]
    for k in range(n):
        key[k] = w[p, k] / math.sqrt(var[p, k])
        perm[k] = k
    for i in range(1, n):
        ki = key[i]
        pi = perm[i]
        j = i - 1
        while j >= 0 and key[j] < ki:
            key[j + 1] = key[j]
            perm[j + 1] = perm[j]
            j -= 1
        key[j + 1] = ki
        perm[j + 1] = pi
    moved = False
    for j in range(n):
        if perm[j] != j:
            moved = True
            break
    if moved:
        for j in range(n):
            inv[perm[j]] = j
        for j in range(n):
            tmp[j] = mu[p, perm[j]]
        for j in range(n):
            mu[p, j] = tmp[j]
        for j in range(n):
            tmp[j] = var[p, perm[j]]
        for j in range(n):
            var[p, j] = tmp[j]
        for j in range(n):
            tmp[j] = w[p, perm[j]]
        for j in range(n):
            w[p, j] = tmp[j]
    else:
        for j in range(n):
            inv[j] = j
    for j in range(n, kmax):
        inv[j] = j


@njit(cache=True)
def _gmm_step(mu, var, w, count, p, v, alpha, lam, t_bg, var_floor,
              init_var, key, tmp, perm, inv):
    """Full mixture update for pixel p (match, reweight, adapt or replace,
    label, re-sort). Returns 0 for background, 1 for foreground."""
    kmax = mu.shape[1]
    n = count[p]
    matched = -1
    for k in range(n):
        if abs(v - mu[p, k]) <= lam * math.sqrt(var[p, k]):
            matched = k
            break
    if matched >= 0:
        for k in range(n):
            w[p, k] = (1.0 - alpha) * w[p, k]
        w[p, matched] = w[p, matched] + alpha
        s = 0.0
        for k in range(n):
            s = s + w[p, k]
        for k in range(n):
            w[p, k] = w[p, k] / s
        m = (1.0 - alpha) * mu[p, matched] + alpha * v
        mu[p, matched] = m
        d = v - m
        s2 = (1.0 - alpha) * var[p, matched] + alpha * (d * d)
        if s2 < var_floor:
            s2 = var_floor
        var[p, matched] = s2
        acc = 0.0
        b = n
        for k in range(n):
            acc = acc + w[p, k]
            if acc > t_bg:
                b = k + 1
                break
        label = 0 if matched + 1 <= b else 1
    else:
        if n < kmax:
            slot = n
            count[p] = n + 1
            n = n + 1
        else:
            slot = n - 1
        mu[p, slot] = v
        var[p, slot] = init_var
        w[p, slot] = alpha
        s = 0.0
        for k in range(n):
            s = s + w[p, k]
        if s == 0.0:
            for k in range(n):
                w[p, k] = 0.0
            w[p, slot] = 1.0
        else:
            for k in range(n):
                w[p, k] = w[p, k] / s
        label = 1
    _sort_modes(mu, var, w, count, p, key, tmp, perm, inv)
    return label


@njit(cache=True)
def baseline_frame(vals, mu, var, w, count, alpha, lam, t_bg, var_floor,
                   init_var, out_label):
    """Classic per-pixel mixture pass over one plane."""
    kmax = mu.shape[1]
    key = np.empty(kmax, dtype=np.float64)
    tmp = np.empty(kmax, dtype=np.float64)
    perm = np.empty(kmax, dtype=np.int64)
    inv = np.empty(kmax, dtype=np.int64)
    for p in range(vals.shape[0]):
        out_label[p] = _gmm_step(
            mu, var, w, count, p, float(vals[p]), alpha, lam, t_bg,
            var_floor, init_var, key, tmp, perm, inv)


@njit(cache=True)
def cascade_frame(
    vals,            # (P,) uint8 current plane
    mu, var, w,      # (P,K) float64 mixture state
    count,           # (P,) int64 live mode count
    chp_prev,        # (P,) uint8 previous value
    last_label,      # (P,) uint8 previous label
    mid_order,       # (P,3) int8 level codes in current order, -1 padding
    mode_ref,        # (P,2) int8 mode slot for mean / mean+var levels
    hits,            # (P,5) int64 windowed per-level hit counts
    streak,          # (P,) int64 consecutive confident frames
    last_active,     # (P,) int8 previous active level, -1 none
    clock,           # (P,) int64 sleep frames remaining
    waking,          # (P,) uint8 1 = scheduled wake this frame
    on_lattice,      # (P,) uint8 stride lattice membership
    group_id,        # (P,) int64 group index, -1 ungrouped
    g_mu, g_var,     # (G,) float64 shared group mode
    table,           # (P,256) float64 scene prior lookup
    peak,            # (P,) float64 per-pixel table maximum
    wa, wb, wc,      # (P,) float64 confidence weights
    base_rate, lam, t_bg, var_floor, init_var, eps_chp,
    conf_thresh, prior_floor, rate_floor,
    saturation_frames, sleep_frames,
    sampling_on, grouping_on, rate_scaling_on, chp_on, literal_conf, compat,
    out_label, out_kind, out_conf,  # (P,) uint8 / uint8 / float64
    out_counts,      # (7,) int64 pixels per kind this pass
):
    """One cascade pass over one plane. Copy kinds carry a placeholder
    label; resolve_copies fills them from lattice neighbors afterwards."""
    kmax = mu.shape[1]
    key = np.empty(kmax, dtype=np.float64)
    tmp = np.empty(kmax, dtype=np.float64)
    perm = np.empty(kmax, dtype=np.int64)
    inv = np.empty(kmax, dtype=np.int64)
    for i in range(7):
        out_counts[i] = 0
    for p in range(vals.shape[0]):
        v = float(vals[p])
        prev = float(chp_prev[p])
        changed = abs(v - prev) > eps_chp

        if sampling_on and clock[p] > 0:
            if not changed:
                clock[p] -= 1
                if clock[p] == 0:
                    waking[p] = 1
                chp_prev[p] = vals[p]
                out_label[p] = last_label[p]
                out_kind[p] = KIND_SKIP
                out_conf[p] = 0.0
                out_counts[KIND_SKIP] += 1
                continue
            clock[p] = 0  # scene changed under a sleeping pixel: wake now
            waking[p] = 0
            streak[p] = 0
        elif sampling_on and waking[p] == 1:
            waking[p] = 0
            if not changed and on_lattice[p] == 0:
                chp_prev[p] = vals[p]
                clock[p] = sleep_frames
                out_label[p] = last_label[p]  # placeholder, pass 2 rewrites
                out_kind[p] = KIND_COPY
                out_conf[p] = 0.0
                out_counts[KIND_COPY] += 1
                continue

        if compat:
            # Compatibility mode: no probe, no groups, no confidence; the
            # mean level resolves to the current top-ranked mode and a hit
            # there is provably a background match of the full update.
            conf = 0.0
            rho = base_rate
            active = LEVEL_GMM
            if count[p] > 0 and abs(v - mu[p, 0]) <= lam * math.sqrt(var[p, 0]):
                active = LEVEL_MEAN
            label = _gmm_step(mu, var, w, count, p, v, rho, lam, t_bg,
                              var_floor, init_var, key, tmp, perm, inv)
            out_label[p] = label
            out_kind[p] = active
            out_conf[p] = conf
            out_counts[active] += 1
            hits[p, active] += 1
            last_active[p] = active
            last_label[p] = label
            chp_prev[p] = vals[p]
            continue

        # confidence from pre-update state (top = highest active mid level)
        top = mid_order[p, 0]
        if top == LEVEL_GROUP and not grouping_on:
            top = mid_order[p, 1]
        if top == LEVEL_GROUP:
            mu_top = g_mu[group_id[p]]
            sig_top = math.sqrt(g_var[group_id[p]])
        elif top == LEVEL_MEANVAR:
            r = mode_ref[p, 1]
            mu_top = mu[p, r]
            sig_top = math.sqrt(var[p, r])
        else:
            r = mode_ref[p, 0]
            mu_top = mu[p, r]
            sig_top = math.sqrt(var[p, r])
        phat = table[p, vals[p]] / peak[p]
        bterm = abs(v - prev) / 255.0
        if not literal_conf:
            bterm = 1.0 - bterm
        gterm = abs(v - mu_top) / (lam * sig_top)
        if gterm > 1.0:
            gterm = 1.0
        if not literal_conf:
            gterm = 1.0 - gterm
        if phat < prior_floor:
            denom = wb[p] + wc[p]
            if denom > 0.0:
                conf = (wb[p] * bterm + wc[p] * gterm) / denom
            else:
                conf = 0.0
        else:
            conf = wa[p] * phat + wb[p] * bterm + wc[p] * gterm
        if rate_scaling_on:
            relax = 1.0 - conf
            if relax < rate_floor:
                relax = rate_floor
            rho = base_rate * relax
        else:
            rho = base_rate

        # descend the cascade
        active = -1
        label = 0
        if chp_on and not changed:
            active = LEVEL_CHP
            label = last_label[p]
        else:
            for j in range(3):
                code = mid_order[p, j]
                if code < 0:
                    break
                if code == LEVEL_GROUP:
                    if not grouping_on:
                        continue
                    g = group_id[p]
                    if abs(v - g_mu[g]) <= lam * math.sqrt(g_var[g]):
                        active = LEVEL_GROUP
                        label = 0
                        break
                elif code == LEVEL_MEAN:
                    r = mode_ref[p, 0]
                    if abs(v - mu[p, r]) <= lam * math.sqrt(var[p, r]):
                        # accept only while the mode sits inside the
                        # background weight prefix; a match outside it is
                        # foreground by the mixture's own ranking
                        acc = 0.0
                        for k in range(r):
                            acc = acc + w[p, k]
                        if acc <= t_bg:
                            active = LEVEL_MEAN
                            label = 0
                            mu[p, r] = (1.0 - rho) * mu[p, r] + rho * v
                            break
                else:  # LEVEL_MEANVAR
                    r = mode_ref[p, 1]
                    if abs(v - mu[p, r]) <= lam * math.sqrt(var[p, r]):
                        acc = 0.0
                        for k in range(r):
                            acc = acc + w[p, k]
                        if acc <= t_bg:
                            active = LEVEL_MEANVAR
                            label = 0
                            m = (1.0 - rho) * mu[p, r] + rho * v
                            mu[p, r] = m
                            d = v - m
                            s2 = (1.0 - rho) * var[p, r] + rho * (d * d)
                            if s2 < var_floor:
                                s2 = var_floor
                            var[p, r] = s2
                            _sort_modes(mu, var, w, count, p, key, tmp,
                                        perm, inv)
                            r0 = mode_ref[p, 0]
                            mode_ref[p, 0] = np.int8(inv[r0])
                            r1 = mode_ref[p, 1]
                            mode_ref[p, 1] = np.int8(inv[r1])
                            break
            if active < 0:
                active = LEVEL_GMM
                label = _gmm_step(mu, var, w, count, p, v, rho, lam, t_bg,
                                  var_floor, init_var, key, tmp, perm, inv)
                r0 = mode_ref[p, 0]
                mode_ref[p, 0] = np.int8(inv[r0])
                r1 = mode_ref[p, 1]
                mode_ref[p, 1] = np.int8(inv[r1])

        # streak and sampling bookkeeping; the streak survives sleep, so a
        # still-confident pixel re-arms on its wake frame
        if conf > conf_thresh:
            streak[p] += 1
        else:
            streak[p] = 0
        hits[p, active] += 1
        last_active[p] = np.int8(active)
        last_label[p] = label
        chp_prev[p] = vals[p]
        out_label[p] = label
        out_kind[p] = active
        out_conf[p] = conf
        out_counts[active] += 1
        if sampling_on and streak[p] >= saturation_frames:
            clock[p] = sleep_frames
    return 0


@njit(cache=True)
def resolve_copies(out_kind, out_label, last_label, width, stride):
    """Second pass: stride-copy pixels take their lattice anchor's label."""
    for p in range(out_kind.shape[0]):
        if out_kind[p] == KIND_COPY:
            y = p // width
            x = p % width
            q = (y - y % stride) * width + (x - x % stride)
            lbl = out_label[q]
            out_label[p] = lbl
            last_label[p] = lbl
