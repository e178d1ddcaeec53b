"""Independent numerical references used to certify the auction outcomes.

Nothing here calls the closed-form best responses (except the documented
fallback for more than three relays): deviations are found by grid search
plus bounded scalar refinement in bid space, efficiency by exhaustive
search over discretised power splits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels
from .auction import AuctionKind, PriceVector, check_bids, payoff
from .channel import (
    LN2,
    Scenario,
    direct_snr,
    rate_increase,
    relay_snr_increment,
    relay_snr_increment_derivative,
    snr_increments,
)

MAX_GRID_POINTS = 10**8


def marginal_utility(scenario: Scenario, i: int, k: int, relay_powers) -> float:
    """Derivative of user ``i``'s rate with respect to its SNR gain from relay ``k``.

    Uses the active-relay count implied by ``relay_powers``; ``k`` only
    matters through that count since every relay's SNR enters the same sum.
    """
    p = np.asarray(relay_powers, dtype=float)
    m = int(np.count_nonzero(p > scenario.activity_threshold))
    snr = 1.0 + direct_snr(scenario, i) + float(snr_increments(scenario, i, p).sum())
    return scenario.bandwidth / ((m + 1) * LN2 * snr)


def _payments(scenario, kind, prices, i, powers):
    if AuctionKind(kind) is AuctionKind.SNR:
        return snr_increments(scenario, i, powers) @ (prices.prices * scenario.priority[i])
    return powers @ prices.prices


def _row_from_fractions(others, u):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(u > 0, others * u / (1.0 - u), 0.0)


def numeric_payoff_maximizer(scenario: Scenario, kind: AuctionKind, prices: PriceVector, i: int, bids,
                             grid: int = 33, bid_ceiling: float = 1e6):
    """Numerically best bid row for user ``i`` and its payoff.

    For up to three relays every nonempty relay subset is searched on a grid
    of ``grid`` power fractions per relay, then refined one coordinate at a
    time with bounded Brent searches on the true payoff.  With more relays
    the refinement starts from the closed-form best response instead, which
    is a weaker guarantee.  The zero row (payoff 0) is always a candidate.
    """
    b = check_bids(bids, scenario.n_users, scenario.n_relays)
    n_relays = scenario.n_relays
    others = b.sum(axis=0) - b[i] + prices.reserve_bids
    u_max = bid_ceiling / (bid_ceiling + others)

    def value(u):
        trial = b.copy()
        trial[i] = _row_from_fractions(others, u)
        return payoff(scenario, kind, prices, trial, i)

    best_u, best_val = np.zeros(n_relays), 0.0
    starts = []
    if n_relays <= 3:
        steps = np.arange(1, grid + 1) / grid
        for size in range(1, n_relays + 1):
            for subset in itertools.combinations(range(n_relays), size):
                axes = [steps * u_max[k] for k in subset]
                mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, size)
                u = np.zeros((mesh.shape[0], n_relays))
                u[:, list(subset)] = mesh
                powers = u * scenario.relay_power
                vals = rate_increase(scenario, i, powers) - _payments(scenario, kind, prices, i, powers)
                j = int(np.argmax(vals))
                starts.append((subset, u[j].copy(), float(vals[j])))
    else:
        from .best_response import power_best_response, snr_best_response

        br = (snr_best_response if AuctionKind(kind) is AuctionKind.SNR else power_best_response)(
            scenario, prices, i, b, bid_ceiling=bid_ceiling)
        u0 = br / (br + others)
        subset = tuple(int(k) for k in np.flatnonzero(u0 > 0))
        if subset:
            starts.append((subset, u0, value(u0)))

    for subset, u, val in starts:
        if val > best_val:
            best_u, best_val = u.copy(), val
        u, val = _refine(value, subset, u, val, u_max)
        if val > best_val:
            best_u, best_val = u, val
    return _row_from_fractions(others, best_u), best_val


def _refine(value, subset, u, val, u_max, sweeps: int = 100, xtol: float = 1e-12):
    u = u.copy()
    for _ in range(sweeps):
        before = val
        for k in subset:
            def neg(x, k=k):
                trial = u.copy()
                trial[k] = x
                return -value(trial)
            res = minimize_scalar(neg, bounds=(0.0, u_max[k]), method="bounded",
                                  options={"xatol": xtol * u_max[k], "maxiter": 500})
            if -res.fun > val:
                u[k], val = res.x, -res.fun
        if val - before <= 1e-15 * max(1.0, abs(val)):
            break
    return u, val


@dataclass(frozen=True, eq=False)
class EfficiencyReport:
    powers: np.ndarray
    value: float
    candidate_value: float | None
    gap: float | None
    tolerance: float
    resolution: int
    points: int


def _simplex_points(n_users: int, steps: int) -> np.ndarray:
    """All integer vectors with ``n_users`` entries summing to at most ``steps``."""
    # stars and bars over n_users + 1 parts; the last part is unused power
    bars = np.array(list(itertools.combinations(range(steps + n_users), n_users)), dtype=np.int64)
    bars = bars.reshape(-1, n_users)
    return np.diff(bars, axis=1, prepend=-1) - 1


def default_resolution(scenario: Scenario) -> int:
    dims = scenario.n_users * scenario.n_relays
    if dims <= 3:
        return 101
    if dims <= 6:
        return 33
    raise ValueError(f"{dims} power variables is too many for brute force; reduce the scenario")


def efficiency_gradient(scenario: Scenario, powers) -> np.ndarray:
    """d(total rate increase)/d(P_ki) at a relays x users power matrix (active users)."""
    p = np.asarray(powers, dtype=float)
    grad = np.zeros_like(p)
    for i in range(scenario.n_users):
        if rate_increase(scenario, i, p[:, i]) <= 0:
            continue
        mu = marginal_utility(scenario, i, 0, p[:, i])
        for k in range(scenario.n_relays):
            if p[k, i] > scenario.activity_threshold:
                grad[k, i] = mu * relay_snr_increment_derivative(scenario, i, k, p[k, i])
    return grad


def total_rate_increase(scenario: Scenario, powers) -> float:
    p = np.asarray(powers, dtype=float)
    return float(sum(rate_increase(scenario, i, p[:, i]) for i in range(scenario.n_users)))


def brute_force_efficiency(scenario: Scenario, grid_resolution: int | None = None,
                           candidate_powers=None) -> EfficiencyReport:
    """Exhaustive search for the power split maximising the total rate increase.

    Each relay's budget is discretised into ``grid_resolution - 1`` equal
    steps shared among users (leftover power allowed).  ``tolerance`` is a
    first-order bound on how far the grid optimum can sit from the true
    optimum: the gradient at the grid optimum times one step per variable.
    """
    n, m = scenario.n_users, scenario.n_relays
    res = default_resolution(scenario) if grid_resolution is None else int(grid_resolution)
    if res < 2:
        raise ValueError("grid_resolution must be >= 2")
    steps = res - 1
    pts = _simplex_points(n, steps)
    total_points = pts.shape[0] ** m
    if total_points > MAX_GRID_POINTS:
        raise ValueError(
            f"{total_points} grid points exceed the brute-force limit of {MAX_GRID_POINTS}; "
            "lower grid_resolution or reduce the scenario"
        )
    fractions = pts / steps
    snr = np.empty((m, pts.shape[0], n))
    active = np.empty((m, pts.shape[0], n), dtype=np.uint8)
    for k in range(m):
        p = fractions * scenario.relay_power[k]
        for i in range(n):
            snr[k, :, i] = relay_snr_increment(scenario, i, k, p[:, i])
        active[k] = p > scenario.activity_threshold
    gamma = np.array([direct_snr(scenario, i) for i in range(n)])
    counts = np.full(m, pts.shape[0], dtype=np.intp)
    _, idx = kernels.efficiency_search(snr, active, counts, gamma, float(scenario.bandwidth))
    powers = np.array([fractions[idx[k]] * scenario.relay_power[k] for k in range(m)])
    value = total_rate_increase(scenario, powers)
    h = scenario.relay_power / steps
    tol = float(np.sum(np.abs(efficiency_gradient(scenario, powers)) * h[:, None]))
    cand = None if candidate_powers is None else total_rate_increase(scenario, candidate_powers)
    return EfficiencyReport(
        powers=powers, value=value, candidate_value=cand,
        gap=None if cand is None else value - cand,
        tolerance=tol, resolution=res, points=total_points,
    )


@dataclass(frozen=True, eq=False)
class RelayFairness:
    relay: int
    users: tuple
    marginal: dict
    level: float
    residuals: dict
    utilization: float
    included: bool


@dataclass(frozen=True, eq=False)
class FairnessReport:
    relays: tuple
    passed: bool
    notices: tuple = field(default_factory=tuple)

    @property
    def max_residual(self) -> float:
        vals = [r for rel in self.relays if rel.included for r in rel.residuals.values()]
        return max(vals, default=0.0)


def fairness_check(scenario: Scenario, powers, tol: float = 1e-3, tol_util: float = 1e-3) -> FairnessReport:
    """Residual test of the weighted equal-marginal-utility fairness condition.

    For every relay the marginal rate per unit SNR of each active user,
    divided by its priority, should equal one relay-wide level, and the
    relay should be (nearly) fully used.
    """
    p = np.asarray(powers, dtype=float)
    if p.shape != (scenario.n_relays, scenario.n_users):
        raise ValueError(f"powers must be {scenario.n_relays}x{scenario.n_users}")
    if np.any(p < 0) or np.any(p.sum(axis=1) > scenario.relay_power * (1 + 1e-12)):
        raise ValueError("allocation is not feasible")
    out, notices, passed, any_included = [], [], True, False
    for k in range(scenario.n_relays):
        users = tuple(int(i) for i in np.flatnonzero(p[k] > scenario.activity_threshold))
        util = float(p[k].sum() / scenario.relay_power[k])
        if not users:
            notices.append(f"relay {k} has no active users; excluded")
            out.append(RelayFairness(k, (), {}, math.nan, {}, util, False))
            continue
        any_included = True
        q = scenario.priority[:, k]
        marg = {i: marginal_utility(scenario, i, k, p[:, i]) for i in users}
        level = sum(marg.values()) / sum(q[i] for i in users)
        resid = {i: abs(marg[i] / q[i] - level) / level for i in users}
        ok = max(resid.values()) < tol and util > 1.0 - tol_util
        passed = passed and ok
        out.append(RelayFairness(k, users, marg, level, resid, util, True))
    if not any_included:
        notices.append("no relay has active users")
    return FairnessReport(relays=tuple(out), passed=passed and any_included, notices=tuple(notices))
