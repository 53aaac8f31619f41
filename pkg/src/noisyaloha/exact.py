"""Exhaustive ground truth for small finite-user instances.

Nothing here reuses the closed forms.  The delivery probability is obtained
by summing over every Markov state path of every other user, every arrival
pattern of the tagged user after its message appears at slot 0, and every
noise outcome on the slots where the tagged message gets through alone.

Only the slots that can matter are enumerated.  The other users' chains are
walked over slots ``-2K .. K``, started from the stationary law at slot
``-2K - 1``; a user transmits at slot ``s`` iff it had an arrival somewhere in
``[s - K, s]``.  Users are independent, so each one's path distribution is
reduced to a distribution over "busy" bitmasks on ``0..K`` and the masks are
then OR-combined exactly.
"""
from __future__ import annotations

import itertools
from collections import defaultdict

from .model import DomainError, FiniteModel, StationaryDistribution

MAX_USERS = 3
MAX_K = 3

PREEMPTIVE = "preemptive"
HISTORY = "history"
VARIANTS = (PREEMPTIVE, HISTORY)


class EnumerationLimitError(DomainError):
    """Instance too large for exhaustive enumeration."""


def _state_paths(q: float, start_probs, length: int):
    """Yield ``(states, weight)`` for every path of the source chain.

    ``states[0]`` is drawn from ``start_probs``; later states follow
    ``p01 = q, p00 = 1 - q, p10 = 1, p11 = 0``.  Zero-weight paths are skipped.
    """
    trans = ((1.0 - q, q), (1.0, 0.0))

    def walk(prefix, weight):
        if len(prefix) == length:
            yield tuple(prefix), weight
            return
        prev = prefix[-1]
        for nxt in (0, 1):
            p = trans[prev][nxt]
            if p > 0.0:
                prefix.append(nxt)
                yield from walk(prefix, weight * p)
                prefix.pop()

    for s0 in (0, 1):
        if start_probs[s0] > 0.0:
            yield from walk([s0], start_probs[s0])


def _other_user_busy_masks(q: float, k: int) -> dict[int, float]:
    """Distribution of the bitmask of slots in ``0..K`` where one other user transmits."""
    stationary = StationaryDistribution.of(q)
    first = -2 * k - 1
    length = k - first + 1  # slots -2K-1 .. K
    masks: dict[int, float] = defaultdict(float)
    for states, weight in _state_paths(q, (stationary.pi0, stationary.pi1), length):
        arrivals = {first + idx for idx, st in enumerate(states) if st == 1}
        mask = 0
        for s in range(k + 1):
            if any(s - k <= a <= s for a in arrivals):
                mask |= 1 << s
        masks[mask] += weight
    return dict(masks)


def _tagged_windows(q: float, k: int, variant: str) -> dict[int, float]:
    """Distribution of the bitmask of slots carrying the tagged message.

    The tagged user is in state 1 at slot 0; its later path decides where a
    preemptive sender stops.  A history sender always uses slots ``0..K``.
    """
    windows: dict[int, float] = defaultdict(float)
    for states, weight in _state_paths(q, (0.0, 1.0), k + 1):
        stop = k + 1
        if variant == PREEMPTIVE:
            for s in range(1, k + 1):
                if states[s] == 1:
                    stop = s
                    break
        windows[(1 << stop) - 1] += weight
    return dict(windows)


def _combine_or(dists: list[dict[int, float]]) -> dict[int, float]:
    combined = {0: 1.0}
    for dist in dists:
        nxt: dict[int, float] = defaultdict(float)
        for m1, p1 in combined.items():
            for m2, p2 in dist.items():
                nxt[m1 | m2] += p1 * p2
        combined = dict(nxt)
    return combined


def _delivery_given_clear_slots(clear: int, k: int, epsilon: float) -> float:
    """P(at least one clean slot) by enumerating every noise bit on the clear slots."""
    slots = [s for s in range(k + 1) if clear >> s & 1]
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(slots)):  # 1 = corrupted
        weight = 1.0
        for b in bits:
            weight *= epsilon if b else 1.0 - epsilon
        if 0 in bits:
            total += weight
    return total


def exact_v_enumerate(model: FiniteModel, variant: str = PREEMPTIVE) -> float:
    """Exact individual delivery probability by exhaustive enumeration (N <= 3, K <= 3)."""
    if variant not in VARIANTS:
        raise DomainError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if model.n_users > MAX_USERS or model.k_retx > MAX_K:
        raise EnumerationLimitError(
            f"enumeration limited to N <= {MAX_USERS}, K <= {MAX_K}; got N={model.n_users}, K={model.k_retx}"
        )
    k, q = model.k_retx, model.q
    busy = _combine_or([_other_user_busy_masks(q, k)] * (model.n_users - 1))
    windows = _tagged_windows(q, k, variant)
    v = 0.0
    for window, pw in windows.items():
        for busy_mask, pb in busy.items():
            clear = window & ~busy_mask
            if clear:
                v += pw * pb * _delivery_given_clear_slots(clear, k, model.epsilon)
    return v
