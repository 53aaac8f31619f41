"""Optimal number of retransmissions.

The authoritative answer is an exact integer scan of the delivery
probability over ``K = 0..k_cap``.  The continuous relaxation -- maximise
``g(x) = V_inf`` with ``x = K + 1`` treated as real, i.e. solve ``F(x) = 0``
by Newton's method -- is provided as a fast approximation and a cross-check.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import DomainError, FiniteModel, PoissonModel, v_finite, v_infinite, w_finite, w_infinite

log = logging.getLogger(__name__)

TIE_TOL = 1e-12
#: Bucket: every K* at or above this value is reported as this value.
BUCKET_K = 5


def default_k_cap(lam: float) -> int:
    return max(64, math.ceil(4.0 / lam))


def _check_relaxation_domain(x: float, lam: float, eps: float) -> None:
    if not lam > 0.0:
        raise DomainError(f"lambda must be positive, got {lam!r}")
    if not 0.0 < eps < 1.0:
        raise DomainError(f"epsilon must lie in (0, 1) for the continuous relaxation, got {eps!r}")
    if x < 0.0:
        raise DomainError(f"x must be non-negative, got {x!r}")


def _relaxation_constants(lam: float, eps: float):
    e = math.exp(-lam)
    r = eps * e
    a = (1.0 - eps) / (1.0 - r) * e / -math.expm1(-lam)
    return r, a


def f_objective(x: float, lam: float, eps: float) -> float:
    """``F(x) = x - 1/lam + A (1 - (1 - log(eps e^-lam)/lam) (eps e^-lam)^x)``."""
    _check_relaxation_domain(x, lam, eps)
    r, a = _relaxation_constants(lam, eps)
    return x - 1.0 / lam + a * (1.0 - (1.0 - math.log(r) / lam) * r**x)


def f_derivative(x: float, lam: float, eps: float) -> float:
    _check_relaxation_domain(x, lam, eps)
    r, a = _relaxation_constants(lam, eps)
    log_eps = math.log(eps)
    return 1.0 + a * (2.0 - log_eps / lam) * (lam - log_eps) * r**x


@dataclass
class RootSolveResult:
    x_star: float
    iterations: int
    residual: float
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def k_estimate(self) -> int:
        """Nearest integer to ``x* - 1``, floored at 0."""
        return max(0, round(self.x_star - 1.0))


def solve_xstar(lam: float, eps: float, x0: float | None = None, tol: float = 1e-10, max_iter: int = 100) -> RootSolveResult:
    """Newton iteration for the unique positive root of ``F``.

    ``F`` is increasing and concave, so after at most one step every iterate
    sits left of the root and the sequence then rises monotonically to it.
    A step that would leave the half-line is replaced by halving ``x``.
    """
    if x0 is None:
        x0 = 1.0 / lam
    x = float(x0)
    fx = f_objective(x, lam, eps)
    history = [x]
    for it in range(1, max_iter + 1):
        if abs(fx) <= tol:
            return RootSolveResult(x, it - 1, abs(fx), True, history)
        step = fx / f_derivative(x, lam, eps)
        x_new = x - step
        if x_new < 0.0:
            x_new = x / 2.0
        if x_new == x:
            break
        x = x_new
        fx = f_objective(x, lam, eps)
        history.append(x)
    return RootSolveResult(x, len(history) - 1, abs(fx), abs(fx) <= tol, history)


def _scan_argmax(values) -> int:
    best_k, best = 0, values[0]
    for k in range(1, len(values)):
        if values[k] > best + TIE_TOL:
            best_k, best = k, values[k]
    return best_k


def optimal_k_infinite(lam: float, eps: float, k_cap: int | None = None, check_newton: bool = True) -> int:
    """Integer argmax of ``V_inf`` over ``K in [0, k_cap]``; ties go to the smaller K."""
    PoissonModel(lam, eps, 0)  # validates
    if k_cap is None:
        k_cap = default_k_cap(lam)
    if k_cap < 0:
        raise DomainError(f"k_cap must be >= 0, got {k_cap}")
    if eps == 0.0:
        return 0
    k_star = int(kernels.argmax_k_infinite(float(lam), float(eps), int(k_cap), TIE_TOL))
    if check_newton:
        res = solve_xstar(lam, eps)
        if not res.converged or abs((res.x_star - 1.0) - k_star) > 1.0:
            log.warning(
                "Newton relaxation disagrees with scan at lambda=%g eps=%g: x*-1=%.4f, K*=%d",
                lam, eps, res.x_star - 1.0, k_star,
            )
    return k_star


def optimal_k_finite(n_users: int, q: float, eps: float, k_cap: int | None = None, variant: str = "preemptive") -> int:
    """Integer argmax of V (equivalently W) for the finite-user model."""
    from .model import v_finite_history

    base = FiniteModel(n_users, q, eps, 0)
    if k_cap is None:
        k_cap = default_k_cap(base.arrival_rate)
    if k_cap < 0:
        raise DomainError(f"k_cap must be >= 0, got {k_cap}")
    if eps == 0.0 and n_users > 1 and variant == "preemptive":
        return 0
    fn = v_finite_history if variant == "history" else v_finite
    return _scan_argmax([fn(base.with_k(k)) for k in range(k_cap + 1)])


def scan_values_infinite(lam: float, eps: float, k_cap: int) -> tuple[np.ndarray, np.ndarray]:
    """``(V_inf, W_inf)`` for ``K = 0..k_cap``, straight from the closed form."""
    v = np.array([v_infinite(PoissonModel(lam, eps, k)) for k in range(k_cap + 1)])
    w = np.array([w_infinite(PoissonModel(lam, eps, k)) for k in range(k_cap + 1)])
    return v, w


def scan_values_finite(n_users: int, q: float, eps: float, k_cap: int) -> tuple[np.ndarray, np.ndarray]:
    models = [FiniteModel(n_users, q, eps, k) for k in range(k_cap + 1)]
    return np.array([v_finite(m) for m in models]), np.array([w_finite(m) for m in models])


# --- optimal-region grid ----------------------------------------------------


@dataclass
class RegionGrid:
    epsilon_axis: np.ndarray
    lambda_axis: np.ndarray
    k_star: np.ndarray
    k_caps: np.ndarray
    bucketed: bool = False

    def __post_init__(self):
        if self.k_star.shape != (len(self.epsilon_axis), len(self.lambda_axis)):
            raise ValueError("k_star shape must be |epsilon_axis| x |lambda_axis|")

    def bucket(self, at: int = BUCKET_K) -> "RegionGrid":
        return RegionGrid(self.epsilon_axis, self.lambda_axis, np.minimum(self.k_star, at), self.k_caps, True)

    def rows(self):
        for i, eps in enumerate(self.epsilon_axis):
            for j, lam in enumerate(self.lambda_axis):
                yield float(eps), float(lam), int(self.k_star[i, j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon", "lambda", "k_star"])
        for eps, lam, k in self.rows():
            w.writerow([f"{eps:.10g}", f"{lam:.10g}", k])
        return buf.getvalue()

    def to_json_obj(self) -> dict:
        return {
            "epsilon_axis": [float(f"{e:.10g}") for e in self.epsilon_axis],
            "lambda_axis": [float(f"{x:.10g}") for x in self.lambda_axis],
            "k_star": self.k_star.tolist(),
            "k_cap": [int(c) for c in self.k_caps],
            "bucketed_at": BUCKET_K if self.bucketed else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())


def region_grid(
    epsilon_range: tuple[float, float] = (0.01, 0.99),
    lambda_range: tuple[float, float] = (0.01, 0.75),
    resolution: tuple[int, int] = (99, 75),
    k_cap: int | None = None,
) -> RegionGrid:
    """Integer-optimal K on an evenly spaced (epsilon, lambda) grid, endpoints included."""
    (e_lo, e_hi), (l_lo, l_hi) = epsilon_range, lambda_range
    n_eps, n_lam = resolution
    if n_eps < 2 or n_lam < 2:
        raise DomainError("resolution must be >= 2 on each axis")
    if not (0.0 < e_lo < e_hi < 1.0):
        raise DomainError(f"epsilon range must satisfy 0 < lo < hi < 1, got {epsilon_range}")
    if not (0.0 < l_lo < l_hi and math.isfinite(l_hi)):
        raise DomainError(f"lambda range must satisfy 0 < lo < hi, got {lambda_range}")
    eps_axis = np.linspace(e_lo, e_hi, n_eps)
    lam_axis = np.linspace(l_lo, l_hi, n_lam)
    if k_cap is None:
        caps = np.array([default_k_cap(lam) for lam in lam_axis], dtype=np.int64)
    else:
        if k_cap < 0:
            raise DomainError(f"k_cap must be >= 0, got {k_cap}")
        caps = np.full(n_lam, k_cap, dtype=np.int64)
    k_star = kernels.region_scan(eps_axis, lam_axis, caps, TIE_TOL)
    return RegionGrid(eps_axis, lam_axis, np.asarray(k_star, dtype=np.int64), caps)
