"""Compiled inner loops for trace replay and event simulation.

Routes are packed per unordered pair (low -> high) as CSR arrays:
``ptr[p]:ptr[p+1]`` indexes ``edges``/``signs``, where sign +1 means the
coin crosses that channel from its low endpoint to its high endpoint.
A transfer carries ``dirs[k]`` = +1 (low -> high) or -1.
Channel state is the low-side balance ``bal[e]`` out of ``omega[e]``.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def replay_resets(pair_idx, dirs, ptr, edges, signs, omega, bal):
    resets = np.zeros(omega.shape[0], dtype=np.int64)
    for k in range(pair_idx.shape[0]):
        p = pair_idx[k]
        d = dirs[k]
        for q in range(ptr[p], ptr[p + 1]):
            e = edges[q]
            bal[e] -= signs[q] * d
            if bal[e] <= 0 or bal[e] >= omega[e]:
                resets[e] += 1
                bal[e] = omega[e] // 2
    return resets


@njit(cache=True)
def replay_hub_resets(pair_idx, dirs, ptr, edges, signs, omega, lo, hi, center, pair_lo, pair_hi, n):
    """Hub replay with one imaginary sub-channel per (spoke, original edge).

    Sub-channel slot 0 of edge e lives on the spoke of ``lo[e]``, slot 1 on
    the spoke of ``hi[e]``; spokes do not exist for the center. Both mirror
    the original channel's low-side balance. ``agg[x]`` is x's own balance
    on spoke {x, center}, moved only by the hub-routed transfers and by
    partial resets. Returns (resets per spoke, status) where status is 0 on
    success, 1 if a spoke went negative, 2 if the sub-channels stopped
    summing to the spoke balance.
    """
    m = omega.shape[0]
    sub = np.empty((m, 2), dtype=np.int64)
    agg = np.zeros(n, dtype=np.int64)
    cap = np.zeros(n, dtype=np.int64)
    for e in range(m):
        half = omega[e] // 2
        sub[e, 0] = half
        sub[e, 1] = half
        if lo[e] != center:
            agg[lo[e]] += half
            cap[lo[e]] += omega[e]
        if hi[e] != center:
            agg[hi[e]] += half
            cap[hi[e]] += omega[e]
    resets = np.zeros(n, dtype=np.int64)
    status = 0
    for k in range(pair_idx.shape[0]):
        p = pair_idx[k]
        d = dirs[k]
        if d > 0:
            src, dst = pair_lo[p], pair_hi[p]
        else:
            src, dst = pair_hi[p], pair_lo[p]
        # hub route src -> center -> dst, loop hops at the center dropped
        if src != center:
            agg[src] -= 1
        if dst != center:
            agg[dst] += 1
        for q in range(ptr[p], ptr[p + 1]):
            e = edges[q]
            s = signs[q] * d
            w = omega[e]
            for slot in range(2):
                x = lo[e] if slot == 0 else hi[e]
                if x == center:
                    continue
                sub[e, slot] -= s
                b = sub[e, slot]
                if b <= 0 or b >= w:
                    resets[x] += 1
                    mine = b if slot == 0 else w - b
                    agg[x] += w // 2 - mine
                    sub[e, slot] = w // 2
        if src != center and (agg[src] < 0 or agg[src] > cap[src]):
            status = 1
        if dst != center and (agg[dst] < 0 or agg[dst] > cap[dst]):
            status = 1
    check = np.zeros(n, dtype=np.int64)
    for e in range(m):
        if lo[e] != center:
            check[lo[e]] += sub[e, 0]
        if hi[e] != center:
            check[hi[e]] += omega[e] - sub[e, 1]
    for x in range(n):
        if x != center and check[x] != agg[x]:
            status = 2
    return resets, status


@njit(cache=True)
def simulate_events(
    times, pair_idx, dirs, ptr, edges, signs, omega, bal,
    resets, log_edge, log_time, n_log, target,
):
    """Apply time-ordered transfers, logging (edge, time) of every reset.

    Stops right after the event at which the total reset count reaches
    ``target`` (``target`` <= 0 disables the stop). Returns
    (events consumed, new log length, stop time or -1).
    """
    total = 0
    for e in range(resets.shape[0]):
        total += resets[e]
    for k in range(times.shape[0]):
        p = pair_idx[k]
        d = dirs[k]
        t = times[k]
        for q in range(ptr[p], ptr[p + 1]):
            e = edges[q]
            bal[e] -= signs[q] * d
            if bal[e] <= 0 or bal[e] >= omega[e]:
                resets[e] += 1
                total += 1
                log_edge[n_log] = e
                log_time[n_log] = t
                n_log += 1
                bal[e] = omega[e] // 2
        if target > 0 and total >= target:
            return k + 1, n_log, t
    return times.shape[0], n_log, -1.0
