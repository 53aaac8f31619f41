"""Monte Carlo simulation of the slotted protocol, for checking the closed forms.

Each replication owns a ``numpy.random.Generator`` seeded from
``SeedSequence([seed, replication])``; replications are independent, may run
on a thread pool, and are merged in index order, so results do not depend on
the worker count.  Standard errors are batch means across replications.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from . import kernels
from .exact import HISTORY, PREEMPTIVE, VARIANTS
from .model import (
    DomainError,
    FiniteModel,
    PoissonModel,
    StationaryDistribution,
    v_finite,
    v_finite_history,
    v_infinite,
)

MIN_HORIZON = 1000
CHUNK_SLOTS = 1 << 20


class ConfigError(DomainError):
    """Invalid simulation configuration."""


class SlotKind(enum.IntEnum):
    IDLE = kernels.KIND_IDLE
    CONFLICT = kernels.KIND_CONFLICT
    SUCCESS = kernels.KIND_SUCCESS
    DELIVERED = kernels.KIND_DELIVERED


@dataclass(frozen=True)
class SlotOutcome:
    kind: SlotKind
    transmitter_count: int

    def __post_init__(self):
        n, kind = self.transmitter_count, self.kind
        ok = {
            SlotKind.IDLE: n == 0,
            SlotKind.CONFLICT: n >= 2,
            SlotKind.SUCCESS: n == 1,
            SlotKind.DELIVERED: n == 1,
        }[kind]
        if not ok:
            raise ValueError(f"{kind.name} slot cannot have {n} transmitters")


@dataclass(frozen=True)
class SimConfig:
    model: Union[FiniteModel, PoissonModel]
    seed: int
    horizon_slots: int
    variant: str = PREEMPTIVE
    warmup_slots: int | None = None
    replications: int = 16

    def __post_init__(self):
        if not isinstance(self.model, (FiniteModel, PoissonModel)):
            raise ConfigError(f"model must be FiniteModel or PoissonModel, got {type(self.model).__name__}")
        if self.seed is None or isinstance(self.seed, bool) or int(self.seed) != self.seed:
            raise ConfigError("an explicit integer seed is required")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.horizon_slots < MIN_HORIZON:
            raise ConfigError(f"horizon_slots must be >= {MIN_HORIZON}, got {self.horizon_slots}")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if self.warmup_slots is None:
            object.__setattr__(self, "warmup_slots", 10 * (self.model.k_retx + 1))
        if not 0 <= self.warmup_slots < self.horizon_slots - self.model.k_retx:
            raise ConfigError(
                f"warmup_slots must lie in [0, horizon_slots - K), got {self.warmup_slots} vs {self.horizon_slots}"
            )

    @property
    def is_finite(self) -> bool:
        return isinstance(self.model, FiniteModel)


@dataclass
class ReplicationTally:
    replication: int
    arrivals: int
    delivered_messages: int
    measured_slots: int
    idle_slots: int
    conflict_slots: int
    success_slots: int
    delivered_slots: int
    all_arrivals: int
    preempted_messages: int
    tally_slots: int

    @classmethod
    def from_array(cls, replication: int, tally: np.ndarray, tally_slots: int) -> "ReplicationTally":
        t = [int(x) for x in tally]
        return cls(
            replication=replication,
            arrivals=t[kernels.T_ARRIVALS],
            delivered_messages=t[kernels.T_DELIVERED],
            measured_slots=t[kernels.T_MEASURED_SLOTS],
            idle_slots=t[kernels.T_IDLE],
            conflict_slots=t[kernels.T_CONFLICT],
            success_slots=t[kernels.T_SUCCESS],
            delivered_slots=t[kernels.T_DELIVERED_SLOTS],
            all_arrivals=t[kernels.T_ALL_ARRIVALS],
            preempted_messages=t[kernels.T_PREEMPTED],
            tally_slots=tally_slots,
        )

    @property
    def v_hat(self) -> float:
        return self.delivered_messages / self.arrivals if self.arrivals else math.nan

    @property
    def w_hat(self) -> float:
        return self.delivered_messages / self.tally_slots


@dataclass
class DeliveryStats:
    """Pooled Monte Carlo tallies and estimates.

    ``v_hat`` and ``w_hat`` are pooled ratios; their standard errors come from
    the spread of the per-replication ratios (zero with one replication).
    ``tally_slots`` counts the arrival slots whose messages are tallied
    (after warmup, window closing before the horizon) and is the denominator
    of ``w_hat``.
    """

    arrivals: int
    delivered_messages: int
    total_slots: int
    warmup_slots: int
    measured_slots: int
    tally_slots: int
    v_hat: float
    w_hat: float
    v_stderr: float
    w_stderr: float
    idle_slots: int
    conflict_slots: int
    success_slots: int
    delivered_slots: int
    all_arrivals: int
    preempted_messages: int
    replications: list[ReplicationTally] = field(default_factory=list)

    def to_dict(self, include_replications: bool = False) -> dict:
        d = asdict(self)
        if not include_replications:
            d.pop("replications")
        return d

    @classmethod
    def merge(cls, reps: list[ReplicationTally], horizon: int, warmup: int) -> "DeliveryStats":
        reps = sorted(reps, key=lambda r: r.replication)
        arrivals = sum(r.arrivals for r in reps)
        delivered = sum(r.delivered_messages for r in reps)
        measured = sum(r.measured_slots for r in reps)
        tally_slots = sum(r.tally_slots for r in reps)
        v_hat = delivered / arrivals if arrivals else math.nan
        w_hat = delivered / tally_slots
        if len(reps) > 1:
            v_se = float(np.std([r.v_hat for r in reps], ddof=1) / math.sqrt(len(reps)))
            w_se = float(np.std([r.w_hat for r in reps], ddof=1) / math.sqrt(len(reps)))
        else:
            v_se = w_se = 0.0
        return cls(
            arrivals=arrivals,
            delivered_messages=delivered,
            total_slots=horizon * len(reps),
            warmup_slots=warmup * len(reps),
            measured_slots=measured,
            tally_slots=tally_slots,
            v_hat=v_hat,
            w_hat=w_hat,
            v_stderr=v_se,
            w_stderr=w_se,
            idle_slots=sum(r.idle_slots for r in reps),
            conflict_slots=sum(r.conflict_slots for r in reps),
            success_slots=sum(r.success_slots for r in reps),
            delivered_slots=sum(r.delivered_slots for r in reps),
            all_arrivals=sum(r.all_arrivals for r in reps),
            preempted_messages=sum(r.preempted_messages for r in reps),
            replications=reps,
        )


def _generator(seed: int, replication: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, replication])))


def _tally_slots(config: SimConfig) -> int:
    return max(config.horizon_slots - config.warmup_slots - config.model.k_retx, 0)


def _empty_trace():
    return np.empty(0, dtype=np.int8), np.empty(0, dtype=np.int64)


def _replicate_finite(config: SimConfig, rep: int, trace: bool = False):
    m: FiniteModel = config.model
    rng = _generator(config.seed, rep)
    n_users, k, width = m.n_users, m.k_retx, m.k_retx + 1
    horizon, warmup = config.horizon_slots, config.warmup_slots

    last_arr = np.full(n_users, kernels.NEVER, dtype=np.int64)
    last_del = np.full(n_users, kernels.NEVER, dtype=np.int64)
    ring_cnt = np.zeros(width, dtype=np.int64)
    ring_idsum = np.zeros(width, dtype=np.int64)
    ring_users = np.zeros((width, n_users), dtype=np.int64)
    ring_len = np.zeros(width, dtype=np.int64)
    active = np.zeros(2, dtype=np.int64)
    tally = np.zeros(kernels.N_TALLY, dtype=np.int64)

    # stationary start: users active at slot -1 are ineligible at slot 0
    pi1 = StationaryDistribution.of(m.q).pi1
    prior = np.flatnonzero(rng.random(n_users) < pi1)
    if prior.size:
        s = (-1) % width
        last_arr[prior] = -1
        ring_cnt[s] = prior.size
        ring_idsum[s] = prior.sum()
        ring_users[s, : prior.size] = prior
        ring_len[s] = prior.size
        active[:] = (prior.size, prior.sum())

    kinds, txs = [], []
    n0 = 0
    while n0 < horizon:
        size = min(CHUNK_SLOTS, horizon - n0)
        counts = rng.binomial(n_users, m.q, size=size).astype(np.int64)
        picks = rng.random(int(counts.sum()))
        noise = rng.random(size)
        tk, tt = (np.empty(size, np.int8), np.empty(size, np.int64)) if trace else _empty_trace()
        kernels.finite_sim_chunk(
            n0, k, m.epsilon, config.variant == PREEMPTIVE, warmup, horizon,
            counts, picks, noise,
            last_arr, last_del, ring_cnt, ring_idsum, ring_users, ring_len, active,
            tally, tk, tt,
        )
        if trace:
            kinds.append(tk)
            txs.append(tt)
        n0 += size
    return ReplicationTally.from_array(rep, tally, _tally_slots(config)), kinds, txs


def _replicate_poisson(config: SimConfig, rep: int, trace: bool = False):
    m: PoissonModel = config.model
    rng = _generator(config.seed, rep)
    width = m.k_retx + 1
    horizon, warmup = config.horizon_slots, config.warmup_slots
    ring_cnt = np.zeros(width, dtype=np.int64)
    ring_del = np.zeros(width, dtype=np.int64)
    active = np.zeros(2, dtype=np.int64)
    tally = np.zeros(kernels.N_TALLY, dtype=np.int64)
    kinds, txs = [], []
    n0 = 0
    while n0 < horizon:
        size = min(CHUNK_SLOTS, horizon - n0)
        counts = rng.poisson(m.lam, size=size).astype(np.int64)
        noise = rng.random(size)
        tk, tt = (np.empty(size, np.int8), np.empty(size, np.int64)) if trace else _empty_trace()
        kernels.poisson_sim_chunk(
            n0, m.k_retx, m.epsilon, warmup, horizon, counts, noise,
            ring_cnt, ring_del, active, tally, tk, tt,
        )
        if trace:
            kinds.append(tk)
            txs.append(tt)
        n0 += size
    return ReplicationTally.from_array(rep, tally, _tally_slots(config)), kinds, txs


def _run(config: SimConfig, worker, workers: int | None) -> DeliveryStats:
    reps = range(config.replications)
    if workers is None or workers <= 1 or config.replications == 1:
        tallies = [worker(config, r)[0] for r in reps]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tallies = [res[0] for res in pool.map(lambda r: worker(config, r), reps)]
    return DeliveryStats.merge(tallies, config.horizon_slots, config.warmup_slots)


def run_finite(config: SimConfig, workers: int | None = None) -> DeliveryStats:
    if not config.is_finite:
        raise ConfigError("run_finite needs a FiniteModel")
    return _run(config, _replicate_finite, workers)


def run_poisson(config: SimConfig, workers: int | None = None) -> DeliveryStats:
    if config.is_finite:
        raise ConfigError("run_poisson needs a PoissonModel")
    if config.variant != PREEMPTIVE:
        # no source ever holds two messages, so the variants coincide
        config = SimConfig(config.model, config.seed, config.horizon_slots, PREEMPTIVE,
                           config.warmup_slots, config.replications)
    return _run(config, _replicate_poisson, workers)


def run(config: SimConfig, workers: int | None = None) -> DeliveryStats:
    return run_finite(config, workers) if config.is_finite else run_poisson(config, workers)


def trace_slots(config: SimConfig, replication: int = 0) -> tuple[np.ndarray, np.ndarray, ReplicationTally]:
    """Per-slot kinds and transmitter counts of one replication (small horizons only)."""
    worker = _replicate_finite if config.is_finite else _replicate_poisson
    tally, kinds, txs = worker(config, replication, trace=True)
    return np.concatenate(kinds), np.concatenate(txs), tally


def slot_outcomes(kinds: np.ndarray, txs: np.ndarray) -> list[SlotOutcome]:
    return [SlotOutcome(SlotKind(int(k)), int(n)) for k, n in zip(kinds, txs)]


# --- comparison against the closed forms -----------------------------------


def analytic_v(model, variant: str = PREEMPTIVE) -> float:
    if isinstance(model, PoissonModel):
        return v_infinite(model)
    return v_finite_history(model) if variant == HISTORY else v_finite(model)


def analytic_rate(model) -> float:
    """W/V: messages per slot."""
    return model.lam if isinstance(model, PoissonModel) else model.arrival_rate


def _z(estimate: float, expected: float, stderr: float) -> float:
    diff = estimate - expected
    if stderr > 0.0:
        return diff / stderr
    return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)


@dataclass
class ComparisonReport:
    config: SimConfig
    stats: DeliveryStats
    v_analytic: float
    w_analytic: float
    z_v: float
    z_w: float
    threshold: float = 3.0

    @property
    def v_pass(self) -> bool:
        return abs(self.z_v) <= self.threshold

    @property
    def w_pass(self) -> bool:
        return abs(self.z_w) <= self.threshold

    @property
    def passed(self) -> bool:
        return self.v_pass and self.w_pass


def compare_with_analytic(config: SimConfig, threshold: float = 3.0, workers: int | None = None) -> ComparisonReport:
    stats = run(config, workers)
    v = analytic_v(config.model, config.variant)
    w = analytic_rate(config.model) * v
    return ComparisonReport(
        config=config,
        stats=stats,
        v_analytic=v,
        w_analytic=w,
        z_v=_z(stats.v_hat, v, stats.v_stderr),
        z_w=_z(stats.w_hat, w, stats.w_stderr),
        threshold=threshold,
    )
