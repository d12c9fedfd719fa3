"""Renyi-DP accounting for the subsampled Gaussian mechanism.

One-step RDP at integer orders via the exact binomial expansion (evaluated
in log space), linear composition over steps, conversion to (epsilon,
delta)-DP with the improved bound

    eps = min_alpha [ eps_rdp(alpha) + ln(1 - 1/alpha)
                      - (ln delta + ln alpha) / (alpha - 1) ],

and bisection for the smallest noise multiplier meeting a target epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DomainError, EmptyOrdersError, UnboundedError, UnsatisfiableError

DEFAULT_ORDERS: tuple[int, ...] = tuple(range(2, 513))

SIGMA_LO = 1e-3
SIGMA_HI = 1e3
SIGMA_REL_TOL = 1e-4


@dataclass(frozen=True)
class MechanismParams:
    """Subsampled Gaussian mechanism: rate q, noise sigma, T steps, delta."""

    q: float
    sigma: float
    steps: int
    delta: float
    orders: tuple[int, ...] = DEFAULT_ORDERS

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise DomainError(f"sampling rate q must be in (0, 1], got {self.q}")
        if self.sigma <= 0.0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")
        if self.steps < 1:
            raise DomainError(f"steps must be >= 1, got {self.steps}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must be in (0, 1), got {self.delta}")
        orders = tuple(self.orders)
        if any(a <= 1 for a in orders) or list(orders) != sorted(set(orders)):
            raise DomainError("orders must be strictly ascending and all > 1")
        object.__setattr__(self, "orders", orders)


@dataclass(frozen=True)
class PrivacySpending:
    epsilon: float
    best_order: int

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise DomainError(f"epsilon must be finite and >= 0, got {self.epsilon}")


def rdp_step(q: float, sigma: float, alpha: int) -> float:
    """One-step RDP of the sampled Gaussian mechanism at integer order alpha.

    (1/(alpha-1)) * ln sum_{k=0..alpha} C(alpha,k) (1-q)^(alpha-k) q^k
                                        exp(k(k-1) / (2 sigma^2))

    q = 0 returns 0 (no data touched); q = 1 reduces to alpha/(2 sigma^2).
    """
    if q == 0.0:
        return 0.0
    if not 0.0 < q <= 1.0:
        raise DomainError(f"q must be in [0, 1], got {q}")
    if sigma <= 0.0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    alpha = int(alpha)
    if alpha < 2:
        raise DomainError(f"alpha must be an integer >= 2, got {alpha}")

    if q == 1.0:
        return alpha / (2.0 * sigma**2)
    k = np.arange(alpha + 1)
    log_binom = gammaln(alpha + 1) - gammaln(k + 1) - gammaln(alpha - k + 1)
    log_weight = (alpha - k) * math.log1p(-q) + k * math.log(q)
    log_terms = log_binom + log_weight + k * (k - 1) / (2.0 * sigma**2)
    value = float(logsumexp(log_terms)) / (alpha - 1)
    return max(value, 0.0)


def compose(per_step_rdp: float, steps: int) -> float:
    """RDP composes additively: T steps cost T times one step."""
    if per_step_rdp < 0:
        raise DomainError("per-step RDP must be >= 0")
    return per_step_rdp * steps


def rdp_to_dp(rdp_at_orders: dict[int, float], delta: float) -> PrivacySpending:
    """Convert an RDP curve to (epsilon, delta)-DP, minimizing over orders."""
    if not rdp_at_orders:
        raise EmptyOrdersError("need at least one Renyi order")
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must be in (0, 1), got {delta}")
    best_eps = math.inf
    best_order = None
    for alpha, eps_rdp in rdp_at_orders.items():
        if not math.isfinite(eps_rdp):
            continue
        eps = eps_rdp + math.log1p(-1.0 / alpha) - (math.log(delta) + math.log(alpha)) / (alpha - 1)
        if eps < best_eps:
            best_eps = eps
            best_order = alpha
    if best_order is None:
        raise UnboundedError("RDP infinite at every order")
    return PrivacySpending(epsilon=max(best_eps, 0.0), best_order=best_order)


@lru_cache(maxsize=4)
def _binom_table(orders: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cached ln C(alpha, k) table with its k grid and invalid-entry mask."""
    alphas = np.asarray(orders, dtype=np.float64)[:, None]
    k = np.arange(int(alphas.max()) + 1, dtype=np.float64)
    log_binom = gammaln(alphas + 1) - gammaln(k + 1) - gammaln(alphas - k + 1)
    invalid = k[None, :] > alphas
    log_binom[invalid] = -np.inf
    return k, log_binom, invalid


def rdp_curve(q: float, sigma: float, orders: tuple[int, ...]) -> dict[int, float]:
    """One-step RDP at every order at once (vectorized rdp_step)."""
    if q == 1.0:
        return {a: rdp_step(q, sigma, a) for a in orders}
    alphas = np.asarray(orders, dtype=np.float64)
    k, log_binom, invalid = _binom_table(tuple(orders))
    # terms[i, k] = ln C(alpha_i, k) + (alpha_i - k) ln(1-q) + k ln q + k(k-1)/(2 sigma^2)
    log_weight = (alphas[:, None] - k) * math.log1p(-q) + k * math.log(q)
    log_weight[invalid] = 0.0  # masked by the -inf binomial entries
    terms = log_binom + log_weight + k * (k - 1) / (2.0 * sigma**2)
    values = logsumexp(terms, axis=1) / (alphas - 1)
    return {int(a): max(float(v), 0.0) for a, v in zip(orders, values)}


def epsilon_for(
    q: float,
    sigma: float,
    steps: int,
    delta: float,
    orders: tuple[int, ...] = DEFAULT_ORDERS,
) -> PrivacySpending:
    """Total (epsilon, delta) spending of T subsampled Gaussian steps."""
    params = MechanismParams(q=q, sigma=sigma, steps=steps, delta=delta, orders=orders)
    one_step = rdp_curve(params.q, params.sigma, params.orders)
    curve = {a: compose(one_step[a], params.steps) for a in params.orders}
    return rdp_to_dp(curve, params.delta)


def sigma_for(
    target_epsilon: float,
    q: float,
    steps: int,
    delta: float,
    orders: tuple[int, ...] = DEFAULT_ORDERS,
    lo: float = SIGMA_LO,
    hi: float = SIGMA_HI,
) -> float:
    """Smallest noise multiplier whose total epsilon meets the target.

    target_epsilon = inf means non-private training and returns sigma = 0.
    """
    if math.isinf(target_epsilon):
        return 0.0
    if target_epsilon <= 0:
        raise DomainError(f"target epsilon must be > 0, got {target_epsilon}")

    def eps(sigma: float) -> float:
        return epsilon_for(q, sigma, steps, delta, orders).epsilon

    if eps(hi) > target_epsilon:
        raise UnsatisfiableError(f"epsilon({hi}) = {eps(hi)} still exceeds {target_epsilon}")
    if eps(lo) < target_epsilon:
        raise UnsatisfiableError(f"epsilon({lo}) = {eps(lo)} already below {target_epsilon}")

    low, high = lo, hi  # eps(low) >= target >= eps(high); eps decreasing in sigma
    while True:
        mid = 0.5 * (low + high)
        e = eps(mid)
        if abs(e - target_epsilon) <= SIGMA_REL_TOL * target_epsilon:
            # nudge up until the target is actually met, preserving <= contract
            while eps(mid) > target_epsilon:
                mid *= 1.0 + SIGMA_REL_TOL
            return mid
        if e > target_epsilon:
            low = mid
        else:
            high = mid
        if high - low <= 1e-12 * high:
            return high
