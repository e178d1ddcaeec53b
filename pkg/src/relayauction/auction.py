"""Share-auction mechanics: proportional power allocation, payments, payoffs."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .channel import Scenario, rate_increase, snr_increments, total_rate


class AuctionKind(str, enum.Enum):
    """Payment rule in force: per unit of weighted SNR gain, or per watt."""

    SNR = "snr"
    POWER = "power"


@dataclass(frozen=True, eq=False)
class PriceVector:
    prices: np.ndarray
    reserve_bids: np.ndarray = None

    def __post_init__(self):
        prices = np.array(self.prices, dtype=float).reshape(-1)
        if np.any(~(prices > 0)):
            raise ValueError("relay prices must be > 0")
        beta = np.ones_like(prices) if self.reserve_bids is None else np.array(self.reserve_bids, dtype=float).reshape(-1)
        if beta.shape != prices.shape:
            raise ValueError("need one reserve bid per relay")
        if np.any(~(beta > 0)) or not np.all(np.isfinite(beta)):
            raise ValueError("reserve bids must be finite and > 0")
        prices.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "reserve_bids", beta)

    def __len__(self):
        return self.prices.shape[0]

    def with_prices(self, prices) -> "PriceVector":
        return PriceVector(prices, self.reserve_bids)


@dataclass(frozen=True, eq=False)
class Allocation:
    """Outcome of one auction round; ``powers`` is relays x users."""

    powers: np.ndarray
    rates: np.ndarray
    rate_increases: np.ndarray
    payments: np.ndarray
    payoffs: np.ndarray

    def utilization(self, scenario: Scenario) -> np.ndarray:
        return self.powers.sum(axis=1) / scenario.relay_power


def check_bids(bids, n_users: int | None = None, n_relays: int | None = None) -> np.ndarray:
    b = np.asarray(bids, dtype=float)
    if b.ndim != 2:
        raise ValueError(f"bids must be a users x relays matrix, got shape {b.shape}")
    if n_users is not None and b.shape != (n_users, n_relays):
        raise ValueError(f"bids must be {n_users}x{n_relays}, got {b.shape}")
    if not np.all(np.isfinite(b)) or np.any(b < 0):
        raise ValueError("bids must be finite and >= 0")
    return b


def allocate(scenario: Scenario, prices: PriceVector, bids) -> np.ndarray:
    """Each relay splits its power in proportion to the bids it receives.

    The reserve bid keeps a share back, so a relay never hands out its full
    power for finite bids.  Returns a relays x users matrix.
    """
    b = check_bids(bids, scenario.n_users, scenario.n_relays)
    denom = b.sum(axis=0) + prices.reserve_bids
    return (b / denom * scenario.relay_power).T


def payment(scenario: Scenario, kind: AuctionKind, prices: PriceVector, i: int, powers) -> float:
    """Amount user ``i`` pays given the relays' power matrix (relays x users)."""
    p = np.asarray(powers, dtype=float)[:, i]
    if AuctionKind(kind) is AuctionKind.SNR:
        weighted = prices.prices * scenario.priority[i]
        return float(np.dot(weighted, snr_increments(scenario, i, p)))
    return float(np.dot(prices.prices, p))


def payoff(scenario: Scenario, kind: AuctionKind, prices: PriceVector, bids, i: int) -> float:
    """Rate increase minus payment for user ``i``."""
    powers = allocate(scenario, prices, bids)
    return rate_increase(scenario, i, powers[:, i]) - payment(scenario, kind, prices, i, powers)


def evaluate(scenario: Scenario, kind: AuctionKind, prices: PriceVector, bids) -> Allocation:
    """Powers, rates, payments and payoffs for every user at one bid profile."""
    powers = allocate(scenario, prices, bids)
    n = scenario.n_users
    rates = np.array([total_rate(scenario, i, powers[:, i]) for i in range(n)])
    gains = np.array([rate_increase(scenario, i, powers[:, i]) for i in range(n)])
    pays = np.array([payment(scenario, kind, prices, i, powers) for i in range(n)])
    return Allocation(powers=powers, rates=rates, rate_increases=gains,
                      payments=pays, payoffs=gains - pays)


@dataclass(frozen=True)
class EquilibriumReport:
    is_equilibrium: bool
    worst_user: int
    worst_gain: float
    gains: tuple
    deviations: tuple

    def __bool__(self):
        return self.is_equilibrium


def is_epsilon_ne(scenario: Scenario, kind: AuctionKind, prices: PriceVector, bids,
                  eps: float, deviation_grid: int = 33, bid_ceiling: float = 1e6) -> EquilibriumReport:
    """Check that no user can raise its payoff by more than ``eps`` alone.

    Deviations are searched numerically (grid plus local refinement) so the
    verdict does not rely on any closed-form best response.
    """
    from .oracles import numeric_payoff_maximizer

    if eps < 0:
        raise ValueError("eps must be >= 0")
    b = check_bids(bids, scenario.n_users, scenario.n_relays)
    gains, rows = [], []
    for i in range(scenario.n_users):
        current = payoff(scenario, kind, prices, b, i)
        row, best = numeric_payoff_maximizer(scenario, kind, prices, i, b,
                                             grid=deviation_grid, bid_ceiling=bid_ceiling)
        gains.append(best - current)
        rows.append(row)
    worst = int(np.argmax(gains))
    return EquilibriumReport(
        is_equilibrium=bool(gains[worst] <= eps),
        worst_user=worst,
        worst_gain=float(gains[worst]),
        gains=tuple(float(g) for g in gains),
        deviations=tuple(rows),
    )
