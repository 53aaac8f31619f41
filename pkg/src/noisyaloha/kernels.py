"""Hot loops: optimal-K grid scan and the slot-by-slot protocol simulators.

All randomness is drawn by the callers and passed in as arrays, so a kernel
is a deterministic function of its inputs.  See :mod:`noisyaloha._accel`.
Simulator state arrays are updated in place so a long horizon can be fed in
chunks; ``tally`` is an int64 vector indexed by the ``T_*`` constants.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import jit

# tally slots
T_ARRIVALS = 0  # tallied messages (arrived after warmup, window inside horizon)
T_DELIVERED = 1  # tallied messages delivered at least once
T_IDLE = 2
T_CONFLICT = 3
T_SUCCESS = 4  # success slots, delivered or not
T_DELIVERED_SLOTS = 5
T_ALL_ARRIVALS = 6  # every arrival in the measured slots
T_PREEMPTED = 7  # tallied messages cut short by a newer one
T_MEASURED_SLOTS = 8
N_TALLY = 9

# slot kinds written to the optional trace
KIND_IDLE = 0
KIND_CONFLICT = 1
KIND_SUCCESS = 2
KIND_DELIVERED = 3

NEVER = -(1 << 62)


@jit
def v_infinite_scalar(lam, eps, k):
    e = math.exp(-lam)
    b = (1.0 - eps) / (1.0 - eps * e)
    r = eps * e
    inner = -math.expm1(-lam) * (k + 1) + b * e * (1.0 - r ** (k + 1))
    return b * math.exp(-(k + 1) * lam) * inner


@jit
def argmax_k_infinite(lam, eps, k_cap, tie_tol):
    """Smallest K in ``[0, k_cap]`` whose V beats every smaller K by more than ``tie_tol``."""
    best = v_infinite_scalar(lam, eps, 0)
    best_k = 0
    for k in range(1, k_cap + 1):
        v = v_infinite_scalar(lam, eps, k)
        if v > best + tie_tol:
            best = v
            best_k = k
    return best_k


@jit
def region_scan(eps_axis, lam_axis, caps, tie_tol):
    out = np.empty((eps_axis.shape[0], lam_axis.shape[0]), dtype=np.int64)
    for i in range(eps_axis.shape[0]):
        for j in range(lam_axis.shape[0]):
            out[i, j] = argmax_k_infinite(lam_axis[j], eps_axis[i], caps[j], tie_tol)
    return out


@jit
def finite_sim_chunk(
    n0, k, eps, preemptive, warmup, horizon,
    counts, picks, noise_u,
    last_arr, last_del, ring_cnt, ring_idsum, ring_users, ring_len, active,
    tally, trace_kind, trace_tx,
):
    """Advance the finite-user system over slots ``n0 .. n0 + len(counts) - 1``.

    ``counts[t]`` users would activate at slot ``n0 + t`` if eligible, chosen
    as a uniform subset by Floyd's algorithm from the uniforms in ``picks``
    (consumed in order).  Users that activated in the previous slot are
    skipped, which reproduces ``p10 = 1`` exactly.

    ``active[0]`` / ``active[1]`` hold the number of transmitting users and
    the sum of their ids; a user transmits while ``n - last_arr[u] <= K``.
    ``ring_*`` index by slot modulo ``K + 1`` and hold the users whose latest
    activation is that slot.
    """
    n_users = last_arr.shape[0]
    width = k + 1
    pick_pos = 0
    chosen = np.empty(n_users, dtype=np.int64)
    mark = np.zeros(n_users, dtype=np.bool_)
    tracing = trace_kind.shape[0] > 0
    for t in range(counts.shape[0]):
        n = n0 + t
        slot = n % width
        measured = n >= warmup
        # windows of activations at n - K - 1 have closed
        active[0] -= ring_cnt[slot]
        active[1] -= ring_idsum[slot]
        ring_cnt[slot] = 0
        ring_idsum[slot] = 0
        ring_len[slot] = 0

        # Floyd sampling of a uniform m-subset of users
        m = counts[t]
        n_chosen = 0
        for jj in range(n_users - m, n_users):
            cand = int(picks[pick_pos] * (jj + 1))
            pick_pos += 1
            if cand > jj:
                cand = jj
            if mark[cand]:
                cand = jj
            mark[cand] = True
            chosen[n_chosen] = cand
            n_chosen += 1
        for c in range(n_chosen):
            mark[chosen[c]] = False

        for c in range(n_chosen):
            u = chosen[c]
            old = last_arr[u]
            if old == n - 1:
                continue  # p10 = 1: no activation right after one
            if measured:
                tally[T_ALL_ARRIVALS] += 1
            if n - old <= k:
                # still transmitting the previous message
                oslot = old % width
                ring_cnt[oslot] -= 1
                ring_idsum[oslot] -= u
                active[0] -= 1
                active[1] -= u
                if preemptive and old >= warmup and old + k < horizon:
                    tally[T_ARRIVALS] += 1
                    tally[T_PREEMPTED] += 1
                    if last_del[u] >= old:
                        tally[T_DELIVERED] += 1
            last_arr[u] = n
            ring_cnt[slot] += 1
            ring_idsum[slot] += u
            ring_users[slot, ring_len[slot]] = u
            ring_len[slot] += 1
            active[0] += 1
            active[1] += u

        tx = active[0]
        kind = KIND_IDLE
        if tx == 1:
            kind = KIND_SUCCESS
            if noise_u[t] >= eps:
                kind = KIND_DELIVERED
                last_del[active[1]] = n
        elif tx > 1:
            kind = KIND_CONFLICT
        if measured:
            tally[T_MEASURED_SLOTS] += 1
            if kind == KIND_IDLE:
                tally[T_IDLE] += 1
            elif kind == KIND_CONFLICT:
                tally[T_CONFLICT] += 1
            else:
                tally[T_SUCCESS] += 1
                if kind == KIND_DELIVERED:
                    tally[T_DELIVERED_SLOTS] += 1
        if tracing:
            trace_kind[t] = kind
            trace_tx[t] = tx

        # close windows of messages that started at n - K
        cslot = (n + 1) % width
        a = n - k
        for c in range(ring_len[cslot]):
            u = ring_users[cslot, c]
            if preemptive and last_arr[u] != a:
                continue  # already closed when it was preempted
            if a >= warmup and a + k < horizon:
                tally[T_ARRIVALS] += 1
                if last_del[u] >= a:
                    tally[T_DELIVERED] += 1
    return pick_pos


@jit
def poisson_sim_chunk(
    n0, k, eps, warmup, horizon, counts, noise_u,
    ring_cnt, ring_del, active, tally, trace_kind, trace_tx,
):
    """Advance the Poisson-arrival system over ``len(counts)`` slots.

    Every message is its own source, so there is no preemption.  Messages
    that share an arrival slot collide on all K+1 of their slots; a lone
    message is identified by ``active[1]``, the sum of the arrival slots of
    everything on air.
    """
    width = k + 1
    tracing = trace_kind.shape[0] > 0
    for t in range(counts.shape[0]):
        n = n0 + t
        slot = n % width
        measured = n >= warmup
        active[0] -= ring_cnt[slot]
        active[1] -= ring_cnt[slot] * (n - width)
        c = counts[t]
        ring_cnt[slot] = c
        ring_del[slot] = 0
        active[0] += c
        active[1] += c * n
        if measured:
            tally[T_ALL_ARRIVALS] += c

        tx = active[0]
        kind = KIND_IDLE
        if tx == 1:
            kind = KIND_SUCCESS
            if noise_u[t] >= eps:
                kind = KIND_DELIVERED
                ring_del[active[1] % width] = 1
        elif tx > 1:
            kind = KIND_CONFLICT
        if measured:
            tally[T_MEASURED_SLOTS] += 1
            if kind == KIND_IDLE:
                tally[T_IDLE] += 1
            elif kind == KIND_CONFLICT:
                tally[T_CONFLICT] += 1
            else:
                tally[T_SUCCESS] += 1
                if kind == KIND_DELIVERED:
                    tally[T_DELIVERED_SLOTS] += 1
        if tracing:
            trace_kind[t] = kind
            trace_tx[t] = tx

        cslot = (n + 1) % width
        a = n - k
        if a >= warmup and a + k < horizon:
            tally[T_ARRIVALS] += ring_cnt[cslot]
            tally[T_DELIVERED] += ring_del[cslot]
