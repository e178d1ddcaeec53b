"""Physical layer of the amplify-and-forward relay network.

All functions are pure.  Powers are in watts, SNRs are linear (not dB) and
rates are in bits/s for a bandwidth given in hertz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LN2 = math.log(2.0)
DEFAULT_PATH_LOSS_EXPONENT = 3.0
DEFAULT_ACTIVITY_THRESHOLD = 1e-12


class ScenarioError(ValueError):
    """Invalid physical parameters; the message names the offending field."""


@dataclass(frozen=True)
class User:
    source_power: float

    def __post_init__(self):
        if not (np.isfinite(self.source_power) and self.source_power > 0):
            raise ScenarioError(f"source_power must be > 0, got {self.source_power!r}")


@dataclass(frozen=True)
class Relay:
    total_power: float

    def __post_init__(self):
        if not (np.isfinite(self.total_power) and self.total_power > 0):
            raise ScenarioError(f"total_power must be > 0, got {self.total_power!r}")


@dataclass(frozen=True, eq=False)
class ChannelGains:
    """Link gains.

    ``direct[i]`` is source i -> destination i, ``source_relay[i, k]`` is
    source i -> relay k and ``relay_destination[k, i]`` is relay k ->
    destination i.
    """

    direct: np.ndarray
    source_relay: np.ndarray
    relay_destination: np.ndarray

    def __post_init__(self):
        for name in ("direct", "source_relay", "relay_destination"):
            arr = np.array(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ScenarioError(f"gains.{name} must be finite and >= 0")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n_users = self.direct.shape[0]
        if self.direct.ndim != 1:
            raise ScenarioError("gains.direct must be a vector")
        if self.source_relay.ndim != 2 or self.source_relay.shape[0] != n_users:
            raise ScenarioError("gains.source_relay must be users x relays")
        n_relays = self.source_relay.shape[1]
        if self.relay_destination.shape != (n_relays, n_users):
            raise ScenarioError("gains.relay_destination must be relays x users")

    @property
    def n_users(self) -> int:
        return self.direct.shape[0]

    @property
    def n_relays(self) -> int:
        return self.source_relay.shape[1]


@dataclass(frozen=True, eq=False)
class Scenario:
    users: tuple
    relays: tuple
    gains: ChannelGains
    bandwidth: float
    noise_power: float
    priority: np.ndarray = None
    activity_threshold: float = DEFAULT_ACTIVITY_THRESHOLD
    source_power: np.ndarray = field(init=False, repr=False)
    relay_power: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "relays", tuple(self.relays))
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ScenarioError(f"bandwidth must be > 0, got {self.bandwidth!r}")
        if not (np.isfinite(self.noise_power) and self.noise_power > 0):
            raise ScenarioError(f"noise_power must be > 0, got {self.noise_power!r}")
        if self.activity_threshold < 0:
            raise ScenarioError("activity_threshold must be >= 0")
        n_users, n_relays = len(self.users), len(self.relays)
        if n_users == 0 or n_relays == 0:
            raise ScenarioError("scenario needs at least one user and one relay")
        if (self.gains.n_users, self.gains.n_relays) != (n_users, n_relays):
            raise ScenarioError(
                f"gains are {self.gains.n_users}x{self.gains.n_relays} but scenario "
                f"has {n_users} users and {n_relays} relays"
            )
        q = np.ones((n_users, n_relays)) if self.priority is None else np.array(self.priority, dtype=float)
        if q.shape != (n_users, n_relays):
            raise ScenarioError(f"priority must be {n_users}x{n_relays}, got {q.shape}")
        if not np.all(np.isfinite(q)) or np.any(q <= 0):
            raise ScenarioError("priority entries must be > 0")
        q.setflags(write=False)
        object.__setattr__(self, "priority", q)
        ps = np.array([u.source_power for u in self.users])
        pr = np.array([r.total_power for r in self.relays])
        ps.setflags(write=False)
        pr.setflags(write=False)
        object.__setattr__(self, "source_power", ps)
        object.__setattr__(self, "relay_power", pr)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_relays(self) -> int:
        return len(self.relays)

    @classmethod
    def from_arrays(cls, source_power, relay_power, direct, source_relay, relay_destination,
                    bandwidth=1.0, noise_power=1.0, priority=None,
                    activity_threshold=DEFAULT_ACTIVITY_THRESHOLD) -> "Scenario":
        """Build a scenario from plain arrays (handy in tests and scripts)."""
        gains = ChannelGains(direct, source_relay, relay_destination)
        return cls(
            users=[User(float(p)) for p in np.atleast_1d(source_power)],
            relays=[Relay(float(p)) for p in np.atleast_1d(relay_power)],
            gains=gains,
            bandwidth=bandwidth,
            noise_power=noise_power,
            priority=priority,
            activity_threshold=activity_threshold,
        )

    def replace(self, **changes) -> "Scenario":
        kwargs = dict(users=self.users, relays=self.relays, gains=self.gains,
                      bandwidth=self.bandwidth, noise_power=self.noise_power,
                      priority=self.priority, activity_threshold=self.activity_threshold)
        kwargs.update(changes)
        return Scenario(**kwargs)


def _check_user(scenario: Scenario, i: int) -> None:
    if not 0 <= i < scenario.n_users:
        raise IndexError(f"user index {i} out of range for {scenario.n_users} users")


def _check_relay(scenario: Scenario, k: int) -> None:
    if not 0 <= k < scenario.n_relays:
        raise IndexError(f"relay index {k} out of range for {scenario.n_relays} relays")


def direct_snr(scenario: Scenario, i: int) -> float:
    """SNR of the direct source-destination link of user ``i``."""
    _check_user(scenario, i)
    return scenario.source_power[i] * scenario.gains.direct[i] / scenario.noise_power


def relay_snr_increment(scenario: Scenario, i: int, k: int, p):
    """SNR added at destination ``i`` when relay ``k`` forwards with power ``p``.

    Accepts scalars or arrays for ``p``.  The increment is increasing and
    concave in ``p`` and tends to ``P_s G_sr / sigma^2`` as ``p`` grows.
    """
    _check_user(scenario, i)
    _check_relay(scenario, k)
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0):
        raise ValueError("relay power must be >= 0")
    ps = scenario.source_power[i]
    g_sr = scenario.gains.source_relay[i, k]
    g_rd = scenario.gains.relay_destination[k, i]
    s2 = scenario.noise_power
    out = p_arr * ps * g_rd * g_sr / (s2 * (p_arr * g_rd + ps * g_sr + s2))
    return float(out) if out.ndim == 0 else out


def relay_snr_increment_derivative(scenario: Scenario, i: int, k: int, p):
    """d(SNR increment)/dp in closed form."""
    p_arr = np.asarray(p, dtype=float)
    ps = scenario.source_power[i]
    g_sr = scenario.gains.source_relay[i, k]
    g_rd = scenario.gains.relay_destination[k, i]
    s2 = scenario.noise_power
    c = ps * g_sr + s2
    out = ps * g_rd * g_sr * c / (s2 * (p_arr * g_rd + c) ** 2)
    return float(out) if out.ndim == 0 else out


def snr_increment_limit(scenario: Scenario, i: int, k: int) -> float:
    """Supremum of the SNR increment over all relay powers."""
    return scenario.source_power[i] * scenario.gains.source_relay[i, k] / scenario.noise_power


def snr_increments(scenario: Scenario, i: int, relay_powers) -> np.ndarray:
    """SNR increments from every relay; ``relay_powers`` has shape (..., K)."""
    p = np.asarray(relay_powers, dtype=float)
    if p.shape[-1] != scenario.n_relays:
        raise ValueError(f"expected {scenario.n_relays} relay powers, got shape {p.shape}")
    if np.any(p < 0):
        raise ValueError("relay powers must be >= 0")
    ps = scenario.source_power[i]
    g_sr = scenario.gains.source_relay[i, :]
    g_rd = scenario.gains.relay_destination[:, i]
    s2 = scenario.noise_power
    return p * ps * g_rd * g_sr / (s2 * (p * g_rd + ps * g_sr + s2))


def total_rate(scenario: Scenario, i: int, relay_powers):
    """Rate after maximal ratio combining of the direct and relayed copies.

    Each active relay costs one extra share of the bandwidth.  A relay power
    at or below ``scenario.activity_threshold`` counts as inactive but its
    (negligible) SNR contribution is still added.  Vectorised over leading
    axes of ``relay_powers``.
    """
    _check_user(scenario, i)
    p = np.asarray(relay_powers, dtype=float)
    gamma = direct_snr(scenario, i)
    snr = gamma + snr_increments(scenario, i, p).sum(axis=-1)
    m = np.count_nonzero(p > scenario.activity_threshold, axis=-1)
    out = scenario.bandwidth * np.log2(1.0 + snr) / (m + 1)
    return float(out) if np.ndim(out) == 0 else out


def rate_increase(scenario: Scenario, i: int, relay_powers):
    """Gain over the direct-only rate, clamped at zero."""
    base = scenario.bandwidth * math.log2(1.0 + direct_snr(scenario, i))
    out = np.maximum(np.asarray(total_rate(scenario, i, relay_powers)) - base, 0.0)
    return float(out) if out.ndim == 0 else out


def gains_from_positions(sources, destinations, relays,
                         exponent: float = DEFAULT_PATH_LOSS_EXPONENT) -> ChannelGains:
    """Distance-power-law gains ``d ** -exponent`` from 2-D (or 3-D) coordinates."""
    if exponent <= 0:
        raise ScenarioError(f"path_loss_exponent must be > 0, got {exponent!r}")
    src = np.atleast_2d(np.asarray(sources, dtype=float))
    dst = np.atleast_2d(np.asarray(destinations, dtype=float))
    rel = np.atleast_2d(np.asarray(relays, dtype=float))
    if src.shape != dst.shape:
        raise ScenarioError("need one destination per source")

    def gain(a, b, what):
        d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
        if np.any(d == 0):
            raise ScenarioError(f"coincident {what} positions give infinite gain")
        return d ** (-exponent)

    direct = np.linalg.norm(src - dst, axis=-1)
    if np.any(direct == 0):
        raise ScenarioError("coincident source/destination positions give infinite gain")
    return ChannelGains(
        direct=direct ** (-exponent),
        source_relay=gain(src, rel, "source/relay"),
        relay_destination=gain(rel, dst, "relay/destination"),
    )
