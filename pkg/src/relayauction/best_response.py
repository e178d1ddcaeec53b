"""Best responses of users and the relays' threshold prices.

In both auctions a user's best response is linear in the opponents' total
bid on a relay (plus the reserve bid): ``b_ik = f_ik * (sum_{j != i} b_jk +
beta_k)``.  The coefficient ``f_ik`` depends only on prices and channel
state, which is what makes the bid dynamics cheap to iterate.

SNR auction: a user uses at most the relay with the smallest weighted price
``pi_k * q_ik`` and the coefficient follows a two-threshold policy in the
price.  Power auction: every subset of relays is tried, the continuous
power split inside a subset comes from a one-dimensional root search and
the best subset wins.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .auction import AuctionKind, PriceVector, check_bids
from .channel import (
    LN2,
    Scenario,
    direct_snr,
    rate_increase,
    relay_snr_increment,
    relay_snr_increment_derivative,
    snr_increment_limit,
    snr_increments,
)

DEFAULT_BID_CEILING = 1e6
MAX_SUBSET_RELAYS = 12


class ThresholdError(ValueError):
    """Root bracketing failed; the channel parameters are malformed."""


@dataclass(frozen=True)
class SnrCoefficient:
    """Best-response coefficient of one user on one relay in the SNR auction.

    ``opt_out_price`` is the price at and above which the coefficient is 0.
    It equals ``upper_threshold`` except in the degenerate case, where it is
    the price at which bidding for the full relay power breaks even.
    """

    value: float
    lower_threshold: float
    upper_threshold: float
    degenerate: bool
    opt_out_price: float

    def __post_init__(self):
        for name in ("value", "lower_threshold", "upper_threshold", "opt_out_price"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def demand(self) -> float:
        """Fraction of the relay's power this user asks for, f / (f + 1)."""
        return 1.0 if math.isinf(self.value) else self.value / (self.value + 1.0)


@dataclass(frozen=True)
class RelayChoiceCase:
    subset: tuple
    powers: np.ndarray
    coefficients: np.ndarray
    rate_gain: float
    payoff: float


def _has_path(scenario: Scenario, i: int, k: int) -> bool:
    return scenario.gains.source_relay[i, k] > 0 and scenario.gains.relay_destination[k, i] > 0


def _full_power_increment(scenario: Scenario, i: int, k: int) -> float:
    return relay_snr_increment(scenario, i, k, scenario.relay_power[k])


def snr_lower_threshold(scenario: Scenario, i: int, k: int) -> float:
    """Price at or below which user ``i`` wants all of relay ``k``'s power.

    It is the marginal rate per unit SNR reached when the relay spends its
    whole budget on the user.  Returns 0 when the relay cannot help the user.
    """
    if not _has_path(scenario, i, k):
        return 0.0
    gamma = direct_snr(scenario, i)
    w, q = scenario.bandwidth, scenario.priority[i, k]
    return w / (2.0 * q * LN2) / (1.0 + gamma + _full_power_increment(scenario, i, k))


def upper_threshold_residual(scenario: Scenario, i: int, k: int, price):
    """Optimal single-relay payoff, written as a function of the price.

    Its smallest positive root is the opt-out price.
    """
    gamma = direct_snr(scenario, i)
    w, q = scenario.bandwidth, scenario.priority[i, k]
    price = np.asarray(price, dtype=float)
    out = price * q * (1.0 + gamma) - 0.5 * w * (
        np.log2(2.0 * price * q * LN2 / w * (1.0 + gamma) ** 2) + 1.0 / LN2
    )
    return float(out) if out.ndim == 0 else out


def snr_upper_threshold(scenario: Scenario, i: int, k: int, rtol: float = 1e-10) -> float:
    """Opt-out price of user ``i`` on relay ``k`` (bisection).

    The residual is convex in the price with its minimum where the unclamped
    optimal SNR gain is zero, so the smallest root lies below that point.
    """
    if not _has_path(scenario, i, k):
        return 0.0
    gamma = direct_snr(scenario, i)
    w, q = scenario.bandwidth, scenario.priority[i, k]
    hi = w / (2.0 * q * LN2 * (1.0 + gamma))
    if not upper_threshold_residual(scenario, i, k, hi) <= 0.0:
        raise ThresholdError(f"no sign change for user {i}, relay {k}: residual at minimum is positive")
    lo = 0.5 * hi
    for _ in range(2000):
        if upper_threshold_residual(scenario, i, k, lo) > 0.0:
            break
        hi, lo = lo, 0.5 * lo
    else:
        raise ThresholdError(f"could not bracket the opt-out price of user {i}, relay {k}")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if upper_threshold_residual(scenario, i, k, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _degenerate_cutoff(scenario: Scenario, i: int, k: int) -> float:
    # break-even price for buying the full relay power
    s_max = _full_power_increment(scenario, i, k)
    gamma = direct_snr(scenario, i)
    w, q = scenario.bandwidth, scenario.priority[i, k]
    gain = 0.5 * w * math.log2(1.0 + gamma + s_max) - w * math.log2(1.0 + gamma)
    if gain <= 0.0 or s_max <= 0.0:
        return 0.0
    return gain / (q * s_max)


def snr_coefficient(scenario: Scenario, i: int, k: int, price: float) -> SnrCoefficient:
    """Linear best-response coefficient ``f`` of user ``i`` on relay ``k``.

    Infinite below the lower threshold, zero from the opt-out price on, and
    in between it is the bid-to-rest ratio ``p / (P_r - p)`` of the power at
    which the marginal rate per unit SNR equals the weighted price.
    """
    if not price > 0:
        raise ValueError("price must be > 0")
    if not _has_path(scenario, i, k):
        return SnrCoefficient(0.0, 0.0, 0.0, False, 0.0)
    lower = snr_lower_threshold(scenario, i, k)
    upper = snr_upper_threshold(scenario, i, k)
    if not lower < upper:
        cutoff = _degenerate_cutoff(scenario, i, k)
        value = math.inf if price < cutoff else 0.0
        return SnrCoefficient(value, lower, upper, True, cutoff)
    if price <= lower:
        return SnrCoefficient(math.inf, lower, upper, False, upper)
    if price >= upper:
        return SnrCoefficient(0.0, lower, upper, False, upper)
    s2 = scenario.noise_power
    ps, pr = scenario.source_power[i], scenario.relay_power[k]
    g_sr = scenario.gains.source_relay[i, k]
    g_rd = scenario.gains.relay_destination[k, i]
    q, w = scenario.priority[i, k], scenario.bandwidth
    target = w / (2.0 * price * q * LN2) - 1.0 - direct_snr(scenario, i)
    value = (ps * g_sr + s2) * s2 / (pr * g_rd * ps * g_sr / target - (ps * g_sr + pr * g_rd + s2) * s2)
    return SnrCoefficient(value, lower, upper, False, upper)


def snr_relay_choice(scenario: Scenario, prices: PriceVector, i: int) -> int:
    """Relay with the smallest weighted price (lowest index on ties)."""
    return int(np.argmin(prices.prices * scenario.priority[i]))


def _others(bids: np.ndarray, prices: PriceVector, i: int) -> np.ndarray:
    return bids.sum(axis=0) - bids[i] + prices.reserve_bids


def snr_best_response(scenario: Scenario, prices: PriceVector, i: int, bids,
                      bid_ceiling: float = DEFAULT_BID_CEILING) -> np.ndarray:
    """Best-response bid row of user ``i`` in the SNR auction.

    ``bids`` is the full profile; row ``i`` is ignored.  At most one entry is
    nonzero and bids are capped at ``bid_ceiling``.
    """
    b = check_bids(bids, scenario.n_users, scenario.n_relays)
    row = np.zeros(scenario.n_relays)
    k = snr_relay_choice(scenario, prices, i)
    f = snr_coefficient(scenario, i, k, prices.prices[k]).value
    if f > 0:
        row[k] = min(f * _others(b, prices, i)[k], bid_ceiling)
    return row


def _powers_at_level(scenario, prices, i, subset, caps, mu):
    """Per-relay powers where the marginal rate ``mu * dSNR/dp`` meets the price."""
    s2 = scenario.noise_power
    ps = scenario.source_power[i]
    p = np.zeros(scenario.n_relays)
    for k in subset:
        g_sr = scenario.gains.source_relay[i, k]
        g_rd = scenario.gains.relay_destination[k, i]
        c = ps * g_sr + s2
        target = prices.prices[k] / mu
        # dSNR/dp = a c / (s2 (p g_rd + c)^2) is decreasing in p
        a = ps * g_rd * g_sr
        x = (math.sqrt(a * c / (s2 * target)) - c) / g_rd
        p[k] = min(max(x, 0.0), caps[k])
    return p


def maximize_subset_powers(scenario: Scenario, prices: PriceVector, i: int, subset, caps,
                           xtol: float = 1e-15) -> np.ndarray:
    """Maximise user ``i``'s (unclamped) payoff over the powers of ``subset``.

    Power auction only.  The objective is jointly concave with the relay
    count fixed at ``len(subset)``, so the optimum is pinned down by the
    common marginal rate per unit SNR ``mu``: each power solves its own
    first-order condition given ``mu`` (clipped to ``[0, caps[k]]``) and
    ``mu`` is the root of a monotone scalar equation.
    """
    subset = tuple(subset)
    if not subset:
        return np.zeros(scenario.n_relays)
    gamma = direct_snr(scenario, i)
    share = scenario.bandwidth / ((len(subset) + 1) * LN2)
    limits = [snr_increment_limit(scenario, i, k) for k in subset]

    def excess(mu):
        p = _powers_at_level(scenario, prices, i, subset, caps, mu)
        snr = 1.0 + gamma + float(snr_increments(scenario, i, p).sum())
        return mu - share / snr

    hi = share / (1.0 + gamma)
    lo = share / (1.0 + gamma + sum(limits))
    if excess(lo) >= 0.0:
        mu = lo
    elif excess(hi) <= 0.0:
        mu = hi
    else:
        mu = brentq(excess, lo, hi, xtol=xtol * hi, rtol=4 * np.finfo(float).eps, maxiter=200)
    return _powers_at_level(scenario, prices, i, subset, caps, mu)


def _payoff_at_powers(scenario, prices, i, p):
    return rate_increase(scenario, i, p) - float(np.dot(prices.prices, p))


def power_cases(scenario: Scenario, prices: PriceVector, i: int, caps) -> list:
    """All relay-subset cases for user ``i`` in the power auction.

    Subsets come in increasing size, lexicographic within a size.  ``caps``
    bounds the power user ``i`` can obtain from each relay.
    """
    n_relays = scenario.n_relays
    if n_relays > MAX_SUBSET_RELAYS:
        raise ValueError(
            f"{n_relays} relays means 2^{n_relays} subsets; reduce the scenario to at most "
            f"{MAX_SUBSET_RELAYS} relays"
        )
    caps = np.asarray(caps, dtype=float)
    pr = scenario.relay_power
    cases = []
    for size in range(n_relays + 1):
        for subset in itertools.combinations(range(n_relays), size):
            subset = tuple(k for k in subset if caps[k] > 0 and _has_path(scenario, i, k))
            if len(subset) != size:
                continue
            p = maximize_subset_powers(scenario, prices, i, subset, caps) if subset else np.zeros(n_relays)
            with np.errstate(divide="ignore"):
                coef = np.where(p >= pr, np.inf, p / (pr - p))
            cases.append(RelayChoiceCase(
                subset=subset,
                powers=p,
                coefficients=coef,
                rate_gain=rate_increase(scenario, i, p),
                payoff=_payoff_at_powers(scenario, prices, i, p),
            ))
    return cases


def best_power_case(scenario: Scenario, prices: PriceVector, i: int, caps) -> RelayChoiceCase:
    """Case with the largest payoff; ties go to the earlier (smaller) subset."""
    best = None
    for case in power_cases(scenario, prices, i, caps):
        if best is None or case.payoff > best.payoff:
            best = case
    return best


def power_best_response(scenario: Scenario, prices: PriceVector, i: int, bids,
                        bid_ceiling: float = DEFAULT_BID_CEILING) -> np.ndarray:
    """Best-response bid row of user ``i`` in the power auction.

    ``bids`` is the full profile; row ``i`` is ignored.
    """
    b = check_bids(bids, scenario.n_users, scenario.n_relays)
    others = _others(b, prices, i)
    pr = scenario.relay_power
    caps = pr * bid_ceiling / (bid_ceiling + others)
    p = best_power_case(scenario, prices, i, caps).powers
    row = others * p / (pr - p)
    return np.minimum(row, bid_ceiling)


def coefficient_matrix(scenario: Scenario, kind: AuctionKind, prices: PriceVector) -> np.ndarray:
    """Users x relays matrix of linear best-response coefficients (may hold inf).

    For the power auction the powers are optimised over the whole relay
    budget, i.e. without the bid ceiling; the dynamics apply the ceiling by
    projection.
    """
    n, m = scenario.n_users, scenario.n_relays
    out = np.zeros((n, m))
    if AuctionKind(kind) is AuctionKind.SNR:
        for i in range(n):
            k = snr_relay_choice(scenario, prices, i)
            out[i, k] = snr_coefficient(scenario, i, k, prices.prices[k]).value
    else:
        for i in range(n):
            out[i] = best_power_case(scenario, prices, i, scenario.relay_power).coefficients
    return out


def single_relay_coefficient(scenario: Scenario, kind: AuctionKind, i: int, k: int, price: float) -> float:
    """Coefficient of user ``i`` on relay ``k`` when every other relay is priced out."""
    if AuctionKind(kind) is AuctionKind.SNR:
        return snr_coefficient(scenario, i, k, price).value
    prices = np.full(scenario.n_relays, 1.0)
    prices[k] = price
    caps = np.zeros(scenario.n_relays)
    caps[k] = scenario.relay_power[k]
    case = best_power_case(scenario, PriceVector(prices), i, caps)
    return float(case.coefficients[k])


def aggregate_demand(scenario: Scenario, kind: AuctionKind, k: int, price: float) -> float:
    """Sum over users of f / (f + 1) on relay ``k`` with all users on that relay."""
    total = 0.0
    for i in range(scenario.n_users):
        f = single_relay_coefficient(scenario, kind, i, k, price)
        total += 1.0 if math.isinf(f) else f / (f + 1.0)
    return total


def relay_threshold_price(scenario: Scenario, k: int, kind: AuctionKind = AuctionKind.SNR,
                          rtol: float = 1e-8) -> float:
    """Largest price at which relay ``k`` would be over-demanded.

    Aggregate demand is nonincreasing in the price; above the returned price
    it is below 1, at the price it is at least 1.  Returns 0 when demand is
    below 1 at every positive price.
    """
    kind = AuctionKind(kind)

    def demand(price):
        return aggregate_demand(scenario, kind, k, price)

    users = [i for i in range(scenario.n_users) if _has_path(scenario, i, k)]
    if not users:
        return 0.0
    if kind is AuctionKind.SNR:
        coefs = [snr_coefficient(scenario, i, k, 1.0) for i in users]
        lo = max(c.lower_threshold if not c.degenerate else c.opt_out_price for c in coefs)
        hi = max(c.opt_out_price for c in coefs)
    else:
        # beyond the marginal rate at zero power nobody buys anything
        hi = max(
            scenario.bandwidth * relay_snr_increment_derivative(scenario, i, k, 0.0)
            / (2.0 * LN2 * (1.0 + direct_snr(scenario, i)))
            for i in users
        ) * 1.01
        lo = 0.5 * hi
    if hi <= 0.0:
        return 0.0
    if not lo > 0.0:
        lo = 0.5 * hi
    floor = hi * 1e-15
    while demand(lo) < 1.0:
        hi, lo = lo, 0.5 * lo
        if lo < floor:
            return 0.0
    if demand(hi) >= 1.0:
        raise ThresholdError(f"demand on relay {k} does not fall below 1 at price {hi}")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if demand(mid) >= 1.0:
            lo = mid
        else:
            hi = mid
    return lo
