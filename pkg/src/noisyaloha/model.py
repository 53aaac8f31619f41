"""Closed-form delivery probabilities for noisy slotted ALOHA with K retransmissions.

Two model families are covered:

* :class:`FiniteModel` -- ``N`` users, each a two-state Markov source with
  ``p01 = q`` and ``p10 = 1``.  A new message is sent ``K + 1`` times in
  consecutive slots; under the default (preemptive) policy a newer message
  cancels what is left of the older one.
* :class:`PoissonModel` -- the infinite-user limit ``N -> inf, Nq -> lam`` in
  which the per-slot number of new messages is Poisson(``lam``).

A slot with exactly one transmitter is a success; a success is a delivery
with probability ``1 - epsilon``, independently across slots.

Every probability is available through two routes that share no algebra: the
simplified closed forms (``v_finite``, ``v_infinite``, ...) and the raw
inclusion-exclusion sums they were collapsed from (``*_incl_excl``).  The
brute-force enumerator in :mod:`noisyaloha.exact` is a third, independent
route for small instances.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

#: Integer exponents above this are evaluated as ``exp(n * log(base))``.
POW_LOG_THRESHOLD = 64
#: Geometric sums with at most this many terms are summed term by term.
GEOMETRIC_SUM_MAX_TERMS = 128


class DomainError(ValueError):
    """Model parameters outside the admissible domain."""


class ProbabilityOverflowWarning(UserWarning):
    """A frequency-type quantity (W) came out above 1."""


@dataclass(frozen=True)
class FiniteModel:
    n_users: int
    q: float
    epsilon: float
    k_retx: int

    def __post_init__(self):
        if isinstance(self.n_users, bool) or int(self.n_users) != self.n_users or self.n_users < 1:
            raise DomainError(f"n_users must be an integer >= 1, got {self.n_users!r}")
        if not 0.0 < self.q < 1.0:
            raise DomainError(f"q must lie in (0, 1), got {self.q!r}")
        _check_epsilon(self.epsilon)
        _check_k(self.k_retx)
        object.__setattr__(self, "n_users", int(self.n_users))
        object.__setattr__(self, "k_retx", int(self.k_retx))

    @property
    def arrival_rate(self) -> float:
        """Stationary number of new messages per slot, ``N q / (1 + q)``."""
        return self.n_users * self.q / (1.0 + self.q)

    def with_k(self, k_retx: int) -> "FiniteModel":
        return FiniteModel(self.n_users, self.q, self.epsilon, k_retx)

    @classmethod
    def matching_rate(cls, n_users: int, lam: float, epsilon: float, k_retx: int) -> "FiniteModel":
        """Finite model whose arrival rate ``N q/(1+q)`` equals ``lam``."""
        if not 0.0 < lam < n_users:
            raise DomainError(f"need 0 < lambda < n_users, got lambda={lam!r}, N={n_users!r}")
        return cls(n_users, lam / (n_users - lam), epsilon, k_retx)


@dataclass(frozen=True)
class PoissonModel:
    lam: float
    epsilon: float
    k_retx: int

    def __post_init__(self):
        if not (self.lam > 0.0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda must be a positive finite rate, got {self.lam!r}")
        _check_epsilon(self.epsilon)
        _check_k(self.k_retx)
        object.__setattr__(self, "k_retx", int(self.k_retx))

    def with_k(self, k_retx: int) -> "PoissonModel":
        return PoissonModel(self.lam, self.epsilon, k_retx)


@dataclass(frozen=True)
class StationaryDistribution:
    """Stationary law of one source chain (``p01=q, p00=1-q, p10=1, p11=0``)."""

    pi0: float
    pi1: float

    @classmethod
    def of(cls, q: float) -> "StationaryDistribution":
        if not 0.0 < q < 1.0:
            raise DomainError(f"q must lie in (0, 1), got {q!r}")
        return cls(pi0=1.0 / (1.0 + q), pi1=q / (1.0 + q))

    @staticmethod
    def transition_matrix(q: float) -> np.ndarray:
        return np.array([[1.0 - q, q], [1.0, 0.0]])


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"epsilon must lie in [0, 1), got {epsilon!r}")


def _check_k(k: int) -> None:
    if isinstance(k, bool) or int(k) != k or k < 0:
        raise DomainError(f"k_retx must be a non-negative integer, got {k!r}")


# --- numerics helpers -------------------------------------------------------


def _pow(base: float, n: int, threshold: int = POW_LOG_THRESHOLD) -> float:
    """``base ** n`` for integer ``n >= 0``, via logs once ``n`` exceeds ``threshold``."""
    if n <= threshold:
        return base**n
    if base <= 0.0:
        return 0.0
    return math.exp(n * math.log(base))


def _pow_one_minus(q: float, n: int, threshold: int = POW_LOG_THRESHOLD) -> float:
    """``(1 - q) ** n`` with log1p accuracy for large ``n``."""
    if n <= threshold:
        return (1.0 - q) ** n
    return math.exp(n * math.log1p(-q))


def _one_minus_pow_one_minus(q: float, n: int) -> float:
    """``1 - (1 - q) ** n`` without cancellation for small ``q``."""
    return -math.expm1(n * math.log1p(-q))


def _geom(r: float, terms: int, threshold: int = POW_LOG_THRESHOLD) -> float:
    """``sum_{s < terms} r**s`` for ``0 <= r < 1``; empty sum is 0."""
    if terms <= 0:
        return 0.0
    if terms <= GEOMETRIC_SUM_MAX_TERMS or r == 0.0:
        acc = 0.0
        for _ in range(terms):
            acc = acc * r + 1.0
        return acc
    return -math.expm1(terms * math.log(r)) / (1.0 - r)


# --- finite-user model ------------------------------------------------------


def v_finite(model: FiniteModel, *, log_threshold: int = POW_LOG_THRESHOLD) -> float:
    """Individual delivery probability V under the preemptive policy."""
    n, q, eps, k = model.n_users, model.q, model.epsilon, model.k_retx
    a = _pow_one_minus(q, n - 1, log_threshold)
    b = _pow_one_minus(q, n, log_threshold)
    one_minus_a = _one_minus_pow_one_minus(q, n - 1)
    prefactor = (1.0 - eps) * _pow(1.0 / (1.0 + q), n - 1, log_threshold)
    prefactor *= _pow_one_minus(q, (n - 1) * k, log_threshold)

    bracket = 1.0 + eps * a * _geom(eps * b, k, log_threshold)
    if one_minus_a > 0.0:
        tail = _one_minus_pow_one_minus(q, k) / q
        tail -= eps * _pow_one_minus(q, n + k - 1, log_threshold) * _geom(eps * a, k, log_threshold)
        bracket += one_minus_a / (1.0 - eps * b) * tail
    return prefactor * bracket


def w_finite(model: FiniteModel, **kwargs) -> float:
    """System delivery probability ``W = N q/(1+q) V``.

    Not capped at 1; a :class:`ProbabilityOverflowWarning` is emitted instead.
    """
    w = model.arrival_rate * v_finite(model, **kwargs)
    if w > 1.0:
        warnings.warn(f"W = {w!r} exceeds 1 for {model}", ProbabilityOverflowWarning, stacklevel=2)
    return w


def v_finite_history(model: FiniteModel, *, log_threshold: int = POW_LOG_THRESHOLD) -> float:
    """Delivery probability when messages carry the last K+1 states (never preempted)."""
    n, q, eps, k = model.n_users, model.q, model.epsilon, model.k_retx
    a = _pow_one_minus(q, n - 1, log_threshold)
    one_minus_a = _one_minus_pow_one_minus(q, n - 1)
    r = eps * a
    prefactor = (1.0 - eps) * _pow(1.0 / (1.0 + q), n - 1, log_threshold)
    prefactor *= _pow_one_minus(q, (n - 1) * k, log_threshold)
    bracket = _geom(r, k + 1, log_threshold)
    bracket += one_minus_a / (1.0 - r) * (k - r * _geom(r, k, log_threshold))
    return prefactor * bracket


def w_finite_history(model: FiniteModel, **kwargs) -> float:
    w = model.arrival_rate * v_finite_history(model, **kwargs)
    if w > 1.0:
        warnings.warn(f"W = {w!r} exceeds 1 for {model}", ProbabilityOverflowWarning, stacklevel=2)
    return w


def v_finite_noiseless(model: FiniteModel, *, log_threshold: int = POW_LOG_THRESHOLD) -> float:
    """V for a noiseless channel; ``model.epsilon`` is ignored."""
    n, q, k = model.n_users, model.q, model.k_retx
    value = _pow(1.0 / (1.0 + q), n - 1, log_threshold) * _pow_one_minus(q, (n - 1) * k, log_threshold)
    return value * (1.0 + _one_minus_pow_one_minus(q, n - 1) * _one_minus_pow_one_minus(q, k) / q)


def _log_success_weights(model: FiniteModel, preemptive: bool):
    n, q, k = model.n_users, model.q, model.k_retx
    log_base = (n - 1) * (-math.log1p(q)) + (n - 1) * k * math.log1p(-q)
    i = np.arange(k + 1)
    # single-slot success: others silent on [i-K, i]; tagged not yet preempted
    own_single = np.maximum(i - 1, 0) if preemptive else np.zeros_like(i)
    log_single = log_base + own_single * math.log1p(-q)
    return log_base, log_single


def v_finite_incl_excl(model: FiniteModel, *, preemptive: bool = True) -> float:
    """V from the first two inclusion-exclusion orders with collapsed coefficients.

    ``P(F_i F_{i+j})`` requires the other users to be silent on
    ``[i-K, i+j]`` and (preemptive policy only) no new tagged arrival on
    slots ``2..i+j``.  Higher-order intersections are absorbed into the
    coefficient ``-(1-eps)^2 eps^(j-1)`` because successes form a contiguous run.
    """
    n, q, eps, k = model.n_users, model.q, model.epsilon, model.k_retx
    log_base, log_single = _log_success_weights(model, preemptive)
    total = (1.0 - eps) * float(np.exp(log_single).sum())
    log_1mq = math.log1p(-q)
    for j in range(1, k + 1):
        i = np.arange(k - j + 1)
        own = (i + j - 1) if preemptive else np.zeros_like(i)
        log_pair = log_base + ((n - 1) * j + own) * log_1mq
        total -= (1.0 - eps) ** 2 * eps ** (j - 1) * float(np.exp(log_pair).sum())
    return total


def v_finite_history_incl_excl(model: FiniteModel) -> float:
    return v_finite_incl_excl(model, preemptive=False)


# --- infinite-user (Poisson) model ----------------------------------------


def v_infinite(model: PoissonModel) -> float:
    """Individual delivery probability in the Poisson-arrival limit."""
    lam, eps, k = model.lam, model.epsilon, model.k_retx
    e = math.exp(-lam)
    b = (1.0 - eps) / (1.0 - eps * e)
    r = eps * e
    inner = -math.expm1(-lam) * (k + 1) + b * e * (1.0 - _pow(r, k + 1))
    return b * math.exp(-(k + 1) * lam) * inner


def w_infinite(model: PoissonModel) -> float:
    return model.lam * v_infinite(model)


def v_infinite_noiseless(model: PoissonModel) -> float:
    lam, k = model.lam, model.k_retx
    return math.exp(-(k + 1) * lam) * (1.0 - k * math.expm1(-lam))


def v_infinite_incl_excl(model: PoissonModel) -> float:
    """Poisson V from the inclusion-exclusion expansion.

    ``P(F_i F_{i+j}) = exp(-lam (K + j + 1))``: the window ``[i-K, i+j]``
    holds ``K + j + 1`` slots that must be free of other arrivals, whatever ``i``.
    """
    lam, eps, k = model.lam, model.epsilon, model.k_retx
    total = (1.0 - eps) * (k + 1) * math.exp(-lam * (k + 1))
    for j in range(1, k + 1):
        i = np.arange(k - j + 1)
        free_slots = np.full(i.shape, k + j + 1)
        total -= (1.0 - eps) ** 2 * eps ** (j - 1) * float(np.exp(-lam * free_slots).sum())
    return total
