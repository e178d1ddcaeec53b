"""Projected best-response bid dynamics under (a)synchronous schedules.

Users hold a bid row each.  In slot ``t`` every user scheduled for that slot
replaces its row with its best response to the profile of slot ``t - 1``,
projected onto ``[lower, upper]``.  Since best responses are linear in the
opponents' totals, the coefficients are computed once per run and the slot
loop runs in a compiled kernel.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .auction import AuctionKind, PriceVector, check_bids
from .best_response import DEFAULT_BID_CEILING, coefficient_matrix
from .channel import Scenario, rate_increase, snr_increments

DEFAULT_LOWER_BID = 1e-15
DEFAULT_TOL = 1e-9
DEFAULT_MAX_SLOTS = 100_000
DEFAULT_BERNOULLI_BOUND = 50


class ScheduleKind(str, enum.Enum):
    SYNCHRONOUS = "synchronous"
    BERNOULLI = "bernoulli"
    ROUND_ROBIN = "round_robin"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class Schedule:
    """Which users update in which slot.

    ``bound`` is the asynchronism bound: every user updates at least once in
    any ``bound`` consecutive slots.  Explicit sets are slot numbers
    ``1..period`` repeated with that period.
    """

    kind: ScheduleKind
    n_users: int
    bound: int
    seed: int = 0
    probabilities: tuple | None = None
    sets: tuple | None = None
    period: int | None = None

    def stream(self) -> "ScheduleStream":
        return ScheduleStream(self)


class ScheduleStream:
    """Stateful generator of activation masks, one row per slot."""

    def __init__(self, schedule: Schedule):
        self.schedule = schedule
        self.slot = 0
        self.idle = np.zeros(schedule.n_users, dtype=np.int64)
        seq = np.random.SeedSequence(schedule.seed)
        self._rng = np.random.default_rng(seq.spawn(2)[0])
        if schedule.kind is ScheduleKind.EXPLICIT:
            table = np.zeros((schedule.period, schedule.n_users), dtype=np.uint8)
            for i, slots in enumerate(schedule.sets):
                for s in slots:
                    table[(s - 1) % schedule.period, i] = 1
            self._table = table

    def take(self, n: int) -> np.ndarray:
        sch = self.schedule
        slots = np.arange(self.slot + 1, self.slot + n + 1)
        if sch.kind is ScheduleKind.SYNCHRONOUS:
            mask = np.ones((n, sch.n_users), dtype=np.uint8)
        elif sch.kind is ScheduleKind.ROUND_ROBIN:
            mask = np.zeros((n, sch.n_users), dtype=np.uint8)
            mask[np.arange(n), (slots - 1) % sch.n_users] = 1
        elif sch.kind is ScheduleKind.EXPLICIT:
            mask = self._table[(slots - 1) % sch.period].copy()
        else:
            draws = self._rng.random((n, sch.n_users)) < np.asarray(sch.probabilities)
            mask = np.empty((n, sch.n_users), dtype=np.uint8)
            idle = self.idle
            limit = sch.bound - 1
            for t in range(n):
                row = draws[t] | (idle >= limit)
                mask[t] = row
                idle = np.where(row, 0, idle + 1)
            self.idle = idle
        self.slot += n
        return mask


def make_schedule(kind, n_users: int, bound: int | None = None, seed: int = 0,
                  probabilities=None, sets=None, period: int | None = None) -> Schedule:
    """Build a schedule that honours the asynchronism bound.

    Bernoulli schedules draw each user's update independently with its own
    probability and force an update once a user has idled ``bound - 1``
    slots in a row.
    """
    kind = ScheduleKind(kind)
    if n_users < 1:
        raise ValueError("need at least one user")
    if bound is not None and bound < 1:
        raise ValueError("asynchronism bound must be >= 1")
    if kind is ScheduleKind.SYNCHRONOUS:
        return Schedule(kind, n_users, bound or 1, seed)
    if kind is ScheduleKind.ROUND_ROBIN:
        bound = n_users if bound is None else bound
        if bound < n_users:
            raise ValueError(f"round robin over {n_users} users needs bound >= {n_users}")
        return Schedule(kind, n_users, bound, seed)
    if kind is ScheduleKind.BERNOULLI:
        if probabilities is None:
            raise ValueError("bernoulli schedule needs activation probabilities")
        probs = tuple(float(p) for p in np.broadcast_to(np.asarray(probabilities, dtype=float), (n_users,)))
        if any(not 0.0 < p <= 1.0 for p in probs):
            raise ValueError(f"activation probabilities must lie in (0, 1], got {probs}")
        return Schedule(kind, n_users, bound or DEFAULT_BERNOULLI_BOUND, seed, probabilities=probs)
    if sets is None or len(sets) != n_users:
        raise ValueError("explicit schedule needs one slot set per user")
    sets = tuple(tuple(sorted(int(s) for s in user_sets)) for user_sets in sets)
    period = period or max(max(s) for s in sets if s)
    worst = 0
    for i, user_sets in enumerate(sets):
        if not user_sets or min(user_sets) < 1 or max(user_sets) > period:
            raise ValueError(f"user {i} needs update slots within 1..{period}")
        ext = list(user_sets) + [user_sets[0] + period]
        worst = max(worst, user_sets[0], *np.diff(ext))
    if bound is None:
        bound = int(worst)
    elif worst > bound:
        raise ValueError(f"explicit update sets leave a gap of {worst} slots, more than bound {bound}")
    return Schedule(kind, n_users, bound, seed, sets=sets, period=period)


@dataclass(frozen=True, eq=False)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def uniform(cls, n_users: int, n_relays: int, lower: float = DEFAULT_LOWER_BID,
                upper: float = DEFAULT_BID_CEILING) -> "Bounds":
        return cls(np.full((n_users, n_relays), float(lower)), np.full((n_users, n_relays), float(upper)))

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float)
        hi = np.array(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 2:
            raise ValueError("bounds must be two users x relays matrices")
        if np.any(~(lo > 0)) or not np.all(np.isfinite(hi)) or np.any(hi < lo):
            raise ValueError("bounds need 0 < lower <= upper < inf")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


@dataclass(eq=False)
class Trajectory:
    """Bid profiles for slots ``0..slots``; ``active[t]`` marks who updated in slot t."""

    scenario: Scenario
    kind: AuctionKind
    prices: PriceVector
    bids: np.ndarray
    active: np.ndarray
    converged: bool
    coefficients: np.ndarray
    _payoffs: np.ndarray | None = field(default=None, repr=False)

    @property
    def slots(self) -> int:
        return self.bids.shape[0] - 1

    @property
    def final_bids(self) -> np.ndarray:
        return self.bids[-1]

    @property
    def powers(self) -> np.ndarray:
        """Allocated powers per slot, shape (slots + 1, users, relays)."""
        total = self.bids.sum(axis=1, keepdims=True) + self.prices.reserve_bids
        return self.bids / total * self.scenario.relay_power

    @property
    def payoffs(self) -> np.ndarray:
        if self._payoffs is None:
            self._payoffs = trajectory_payoffs(self.scenario, self.kind, self.prices, self.powers)
        return self._payoffs


def trajectory_payoffs(scenario: Scenario, kind: AuctionKind, prices: PriceVector, powers) -> np.ndarray:
    """Payoff of every user in every slot from powers of shape (T, users, relays)."""
    out = np.empty(powers.shape[:2])
    for i in range(scenario.n_users):
        p = powers[:, i, :]
        if AuctionKind(kind) is AuctionKind.SNR:
            pay = snr_increments(scenario, i, p) @ (prices.prices * scenario.priority[i])
        else:
            pay = p @ prices.prices
        out[:, i] = rate_increase(scenario, i, p) - pay
    return out


def run(scenario: Scenario, kind: AuctionKind, prices: PriceVector, schedule: Schedule | None = None,
        bounds: Bounds | None = None, init="random", tol: float = DEFAULT_TOL,
        max_slots: int = DEFAULT_MAX_SLOTS, coefficients=None, chunk: int = 4096) -> Trajectory:
    """Run the asynchronous best-response bid updates.

    ``init`` is a bid matrix within the bounds or ``"random"`` (uniform in
    the bounds, seeded from the schedule's seed).  Convergence means the
    max-norm change stayed below ``tol`` for ``schedule.bound`` consecutive
    slots.  Hitting ``max_slots`` returns an unconverged trajectory.
    """
    kind = AuctionKind(kind)
    n, m = scenario.n_users, scenario.n_relays
    if tol <= 0:
        raise ValueError("tol must be > 0")
    schedule = schedule or make_schedule(ScheduleKind.SYNCHRONOUS, n)
    if schedule.n_users != n:
        raise ValueError("schedule is for a different number of users")
    bounds = bounds or Bounds.uniform(n, m)
    if bounds.lower.shape != (n, m):
        raise ValueError(f"bounds must be {n}x{m}")
    coef = coefficient_matrix(scenario, kind, prices) if coefficients is None else np.asarray(coefficients, float)
    if isinstance(init, str):
        if init != "random":
            raise ValueError(f"unknown init {init!r}")
        rng = np.random.default_rng(np.random.SeedSequence(schedule.seed).spawn(2)[1])
        b0 = rng.uniform(bounds.lower, bounds.upper)
    else:
        b0 = check_bids(init, n, m).copy()
        if np.any(b0 < bounds.lower) or np.any(b0 > bounds.upper):
            raise ValueError("initial bids must lie within the bounds")
    bids = np.ascontiguousarray(b0, dtype=float)
    stream = schedule.stream()
    blocks, masks = [b0[None].copy()], [np.ones((1, n), dtype=np.uint8)]
    done, streak, converged = 0, 0, False
    while done < max_slots and not converged:
        size = min(chunk, max_slots - done)
        active = stream.take(size)
        out = np.empty((size, n, m))
        used, streak, converged = kernels.iterate_bids(
            bids, coef, prices.reserve_bids, bounds.lower, bounds.upper, active,
            tol, schedule.bound, streak, out)
        blocks.append(out[:used])
        masks.append(active[:used])
        done += used
    return Trajectory(
        scenario=scenario, kind=kind, prices=prices,
        bids=np.concatenate(blocks), active=np.concatenate(masks).astype(bool),
        converged=bool(converged), coefficients=coef,
    )


def equilibrium_bids(coefficients, reserve_bids, bid_ceiling: float = DEFAULT_BID_CEILING):
    """Closed-form fixed point of the linear best responses, per relay.

    With demand fractions ``x_i = f_i / (1 + f_i)`` summing to ``X < 1`` on a
    relay, bids are ``x_i * beta / (1 - X)``.  Returns None when some relay
    is over-demanded (no interior fixed point).
    """
    f = np.asarray(coefficients, dtype=float)
    with np.errstate(invalid="ignore"):
        x = np.where(np.isinf(f), 1.0, f / (1.0 + f))
    total = x.sum(axis=0)
    if np.any(total >= 1.0):
        return None
    return x * np.asarray(reserve_bids, dtype=float) / (1.0 - total)
