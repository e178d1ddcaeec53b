"""Scenario files: YAML documents describing the network, prices and dynamics.

A minimal file::

    system: {bandwidth: 1.0, noise_power: 1.0e-9}
    users:
      - {source_power: 2.5e-3, source: [100, -25], destination: [-100, 25]}
    relays:
      - {total_power: 0.1, price: 0.22, position: [0, 0]}
    channel: {path_loss_exponent: 3}

Gains are given either explicitly (``channel.gains``) or through
coordinates plus a path-loss exponent, never both.  Every validation error
names the offending field.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .auction import AuctionKind, PriceVector
from .best_response import DEFAULT_BID_CEILING
from .channel import (
    DEFAULT_PATH_LOSS_EXPONENT,
    ChannelGains,
    Relay,
    Scenario,
    ScenarioError,
    User,
    gains_from_positions,
)
from .dynamics import (
    DEFAULT_LOWER_BID,
    DEFAULT_MAX_SLOTS,
    DEFAULT_TOL,
    Bounds,
    Schedule,
    ScheduleKind,
    make_schedule,
)


class ConfigError(ScenarioError):
    """Invalid scenario file.  ``field`` is a dotted path into the document."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


SECTIONS = {
    "system": {"bandwidth", "noise_power"},
    "users": {"source_power", "source", "destination"},
    "relays": {"total_power", "price", "reserve_bid", "position"},
    "channel": {"gains", "path_loss_exponent"},
    "auction": {"kind", "priority"},
    "dynamics": {"schedule", "probabilities", "bound", "sets", "period", "seed",
                 "lower_bid", "upper_bid", "tol", "max_slots", "init"},
}


@dataclass(frozen=True, eq=False)
class Settings:
    """A loaded scenario file: the physical scenario plus everything needed to run it."""

    scenario: Scenario
    kind: AuctionKind
    prices: PriceVector
    schedule_kind: ScheduleKind = ScheduleKind.SYNCHRONOUS
    probabilities: tuple | None = None
    bound: int | None = None
    sets: tuple | None = None
    period: int | None = None
    seed: int = 0
    lower_bid: float = DEFAULT_LOWER_BID
    upper_bid: float = DEFAULT_BID_CEILING
    tol: float = DEFAULT_TOL
    max_slots: int = DEFAULT_MAX_SLOTS
    init: object = "random"
    source: Path | None = None

    def schedule(self) -> Schedule:
        return make_schedule(self.schedule_kind, self.scenario.n_users, bound=self.bound,
                             seed=self.seed, probabilities=self.probabilities,
                             sets=self.sets, period=self.period)

    def bounds(self) -> Bounds:
        return Bounds.uniform(self.scenario.n_users, self.scenario.n_relays,
                              self.lower_bid, self.upper_bid)

    def replace(self, **changes) -> "Settings":
        return dataclasses.replace(self, **changes)


def _number(value, field: str, positive: bool = True, allow_zero: bool = False) -> float:
    # YAML 1.1 reads "1e-9" (no dot) as a string, so accept numeric strings
    if isinstance(value, bool):
        raise ConfigError(field, f"expected a number, got {value!r}")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(field, f"expected a number, got {value!r}") from None
    if not math.isfinite(x):
        raise ConfigError(field, f"must be finite, got {value!r}")
    if positive and not (x > 0 or (allow_zero and x == 0)):
        raise ConfigError(field, f"must be {'>=' if allow_zero else '>'} 0, got {value!r}")
    return x


def _integer(value, field: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(field, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(field, f"must be >= {minimum}, got {value!r}")
    return int(value)


def _matrix(value, field: str, shape: tuple, allow_zero: bool = True) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(field, "expected a numeric array") from None
    if arr.shape != shape:
        raise ConfigError(field, f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(field, "entries must be finite")
    if np.any(arr < 0) or (not allow_zero and np.any(arr == 0)):
        raise ConfigError(field, f"entries must be {'>=' if allow_zero else '>'} 0")
    return arr


def _point(value, field: str) -> np.ndarray:
    arr = np.array(value, dtype=float) if isinstance(value, (list, tuple)) else None
    if arr is None or arr.ndim != 1 or arr.shape[0] not in (2, 3) or not np.all(np.isfinite(arr)):
        raise ConfigError(field, f"expected 2 or 3 coordinates, got {value!r}")
    return arr


def _mapping(value, field: str, allowed: set) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(field, "expected a mapping")
    unknown = sorted(set(value) - allowed)
    if unknown:
        raise ConfigError(f"{field}.{unknown[0]}", "unknown field")
    return value


def _entries(doc: dict, name: str) -> list:
    items = doc.get(name)
    if not isinstance(items, list) or not items:
        raise ConfigError(name, "expected a non-empty list")
    return [_mapping(item, f"{name}[{n}]", SECTIONS[name]) for n, item in enumerate(items)]


def _channel(doc, users, relays) -> ChannelGains:
    ch = _mapping(doc.get("channel", {}), "channel", SECTIONS["channel"])
    n, m = len(users), len(relays)
    coords = {f"users[{i}].{key}" for i, u in enumerate(users) for key in ("source", "destination") if key in u}
    coords |= {f"relays[{k}].position" for k, r in enumerate(relays) if "position" in r}
    if "gains" in ch:
        if coords or "path_loss_exponent" in ch:
            other = sorted(coords)[0] if coords else "channel.path_loss_exponent"
            raise ConfigError("channel.gains", f"give either explicit gains or coordinates, not both (found {other})")
        g = _mapping(ch["gains"], "channel.gains", {"direct", "source_relay", "relay_destination"})
        for key in ("direct", "source_relay", "relay_destination"):
            if key not in g:
                raise ConfigError(f"channel.gains.{key}", "missing")
        return ChannelGains(
            direct=_matrix(g["direct"], "channel.gains.direct", (n,)),
            source_relay=_matrix(g["source_relay"], "channel.gains.source_relay", (n, m)),
            relay_destination=_matrix(g["relay_destination"], "channel.gains.relay_destination", (m, n)),
        )
    for i, u in enumerate(users):
        for key in ("source", "destination"):
            if key not in u:
                raise ConfigError(f"users[{i}].{key}", "missing (no channel.gains given)")
    for k, r in enumerate(relays):
        if "position" not in r:
            raise ConfigError(f"relays[{k}].position", "missing (no channel.gains given)")
    src = [_point(u["source"], f"users[{i}].source") for i, u in enumerate(users)]
    dst = [_point(u["destination"], f"users[{i}].destination") for i, u in enumerate(users)]
    rel = [_point(r["position"], f"relays[{k}].position") for k, r in enumerate(relays)]
    if len({p.shape[0] for p in src + dst + rel}) != 1:
        raise ConfigError("channel", "all coordinates must have the same dimension")
    exponent = _number(ch.get("path_loss_exponent", DEFAULT_PATH_LOSS_EXPONENT), "channel.path_loss_exponent")
    try:
        return gains_from_positions(src, dst, rel, exponent)
    except ScenarioError as exc:
        raise ConfigError("channel", str(exc)) from None


def settings_from_dict(doc, source: Path | None = None) -> Settings:
    """Validate a parsed scenario document and build the run settings."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a mapping of sections")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    system = _mapping(doc.get("system"), "system", SECTIONS["system"])
    for key in ("bandwidth", "noise_power"):
        if key not in system:
            raise ConfigError(f"system.{key}", "missing")
    bandwidth = _number(system["bandwidth"], "system.bandwidth")
    noise = _number(system["noise_power"], "system.noise_power")

    users = _entries(doc, "users")
    relays = _entries(doc, "relays")
    n, m = len(users), len(relays)
    for i, u in enumerate(users):
        if "source_power" not in u:
            raise ConfigError(f"users[{i}].source_power", "missing")
    for k, r in enumerate(relays):
        for key in ("total_power", "price"):
            if key not in r:
                raise ConfigError(f"relays[{k}].{key}", "missing")
    user_objs = [User(_number(u["source_power"], f"users[{i}].source_power")) for i, u in enumerate(users)]
    relay_objs = [Relay(_number(r["total_power"], f"relays[{k}].total_power")) for k, r in enumerate(relays)]
    prices = [_number(r["price"], f"relays[{k}].price") for k, r in enumerate(relays)]
    reserve = [_number(r.get("reserve_bid", 1.0), f"relays[{k}].reserve_bid") for k, r in enumerate(relays)]
    gains = _channel(doc, users, relays)

    auction = _mapping(doc.get("auction", {}), "auction", SECTIONS["auction"])
    try:
        kind = AuctionKind(str(auction.get("kind", "snr")).lower())
    except ValueError:
        raise ConfigError("auction.kind", f"expected 'snr' or 'power', got {auction.get('kind')!r}") from None
    priority = None
    if auction.get("priority") is not None:
        priority = _matrix(auction["priority"], "auction.priority", (n, m), allow_zero=False)

    scenario = Scenario(users=user_objs, relays=relay_objs, gains=gains, bandwidth=bandwidth,
                        noise_power=noise, priority=priority)
    settings = Settings(scenario=scenario, kind=kind, prices=PriceVector(prices, reserve), source=source)
    return _dynamics(doc.get("dynamics", {}), settings)


def _dynamics(dyn, settings: Settings) -> Settings:
    dyn = _mapping(dyn, "dynamics", SECTIONS["dynamics"])
    n, m = settings.scenario.n_users, settings.scenario.n_relays
    changes = {}
    try:
        changes["schedule_kind"] = ScheduleKind(str(dyn.get("schedule", "synchronous")).lower())
    except ValueError:
        names = ", ".join(s.value for s in ScheduleKind)
        raise ConfigError("dynamics.schedule", f"expected one of {names}, got {dyn.get('schedule')!r}") from None
    if "probabilities" in dyn:
        probs = dyn["probabilities"]
        probs = probs if isinstance(probs, list) else [probs] * n
        if len(probs) != n:
            raise ConfigError("dynamics.probabilities", f"expected {n} entries, got {len(probs)}")
        probs = [_number(p, f"dynamics.probabilities[{i}]") for i, p in enumerate(probs)]
        if any(p > 1 for p in probs):
            raise ConfigError("dynamics.probabilities", "probabilities must lie in (0, 1]")
        changes["probabilities"] = tuple(probs)
    if "bound" in dyn:
        changes["bound"] = _integer(dyn["bound"], "dynamics.bound", 1)
    if "sets" in dyn:
        sets = dyn["sets"]
        if not isinstance(sets, list) or len(sets) != n or not all(isinstance(s, list) for s in sets):
            raise ConfigError("dynamics.sets", f"expected {n} lists of slot numbers")
        changes["sets"] = tuple(tuple(_integer(s, f"dynamics.sets[{i}]", 1) for s in row) for i, row in enumerate(sets))
    if "period" in dyn:
        changes["period"] = _integer(dyn["period"], "dynamics.period", 1)
    if "seed" in dyn:
        changes["seed"] = _integer(dyn["seed"], "dynamics.seed")
    if "lower_bid" in dyn:
        changes["lower_bid"] = _number(dyn["lower_bid"], "dynamics.lower_bid")
    if "upper_bid" in dyn:
        changes["upper_bid"] = _number(dyn["upper_bid"], "dynamics.upper_bid")
    if changes.get("upper_bid", settings.upper_bid) < changes.get("lower_bid", settings.lower_bid):
        raise ConfigError("dynamics.upper_bid", "must be >= dynamics.lower_bid")
    if "tol" in dyn:
        changes["tol"] = _number(dyn["tol"], "dynamics.tol")
    if "max_slots" in dyn:
        changes["max_slots"] = _integer(dyn["max_slots"], "dynamics.max_slots", 1)
    if "init" in dyn:
        init = dyn["init"]
        if isinstance(init, str):
            if init != "random":
                raise ConfigError("dynamics.init", f"expected 'random' or a bid matrix, got {init!r}")
        else:
            init = _matrix(init, "dynamics.init", (n, m))
        changes["init"] = init
    settings = settings.replace(**changes)
    try:
        settings.schedule()
    except ValueError as exc:
        raise ConfigError("dynamics", str(exc)) from None
    return settings


def load_scenario(path) -> Settings:
    """Read and validate a YAML scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file ({exc.strerror})") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML: {exc}") from None
    return settings_from_dict(doc, source=path)


def settings_to_dict(settings: Settings) -> dict:
    """Inverse of ``settings_from_dict`` using explicit gains (coordinates are not kept)."""
    sc = settings.scenario
    doc = {
        "system": {"bandwidth": float(sc.bandwidth), "noise_power": float(sc.noise_power)},
        "users": [{"source_power": float(u.source_power)} for u in sc.users],
        "relays": [
            {"total_power": float(r.total_power), "price": float(p), "reserve_bid": float(b)}
            for r, p, b in zip(sc.relays, settings.prices.prices, settings.prices.reserve_bids)
        ],
        "channel": {"gains": {
            "direct": sc.gains.direct.tolist(),
            "source_relay": sc.gains.source_relay.tolist(),
            "relay_destination": sc.gains.relay_destination.tolist(),
        }},
        "auction": {"kind": settings.kind.value, "priority": sc.priority.tolist()},
        "dynamics": {
            "schedule": settings.schedule_kind.value, "seed": settings.seed,
            "lower_bid": settings.lower_bid, "upper_bid": settings.upper_bid,
            "tol": settings.tol, "max_slots": settings.max_slots,
        },
    }
    dyn = doc["dynamics"]
    for key in ("probabilities", "bound", "period"):
        if getattr(settings, key) is not None:
            dyn[key] = list(getattr(settings, key)) if key == "probabilities" else getattr(settings, key)
    if settings.sets is not None:
        dyn["sets"] = [list(s) for s in settings.sets]
    if not isinstance(settings.init, str):
        dyn["init"] = np.asarray(settings.init).tolist()
    return doc
