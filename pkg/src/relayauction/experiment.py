"""Experiment orchestration: runs, price sweeps, trajectory CSVs and reports."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .auction import AuctionKind, evaluate, is_epsilon_ne, payoff
from .best_response import (
    aggregate_demand,
    power_best_response,
    relay_threshold_price,
    snr_best_response,
)
from .config import Settings
from .dynamics import Trajectory, run
from .oracles import brute_force_efficiency, fairness_check, numeric_payoff_maximizer

CSV_HEADER = ("slot", "user", "relay", "bid", "power", "payoff")
CHECKS = ("ne", "fairness", "efficiency")
PRICED_OUT = 1e12

EXIT_OK = 0
EXIT_IO = 1
EXIT_NOT_CONVERGED = 2
EXIT_INVALID = 3
EXIT_DISAGREEMENT = 4


def _fmt(x) -> str:
    return "%.17g" % x


def write_trajectory_csv(traj: Trajectory, stream) -> None:
    """One row per (user, relay) of every user that updated in a slot.

    Slot 0 is the initial profile and lists every pair.  17 significant
    digits make the floats round-trip exactly.
    """
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    powers = traj.powers
    payoffs = traj.payoffs
    n_relays = traj.bids.shape[2]
    for t in range(traj.bids.shape[0]):
        for i in np.flatnonzero(traj.active[t]):
            for k in range(n_relays):
                writer.writerow((t, i, k, _fmt(traj.bids[t, i, k]), _fmt(powers[t, i, k]),
                                 _fmt(payoffs[t, i])))


def trajectory_csv_text(traj: Trajectory) -> str:
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    return buf.getvalue()


def read_trajectory_csv(path_or_stream, n_users: int, n_relays: int):
    """Rebuild the bid history and activity mask from a trajectory CSV.

    Users that did not update in a slot keep their previous bids, which is
    exactly what the dynamics do.
    """
    if isinstance(path_or_stream, (str, Path)):
        with open(path_or_stream, newline="") as fh:
            return read_trajectory_csv(fh, n_users, n_relays)
    reader = csv.reader(path_or_stream)
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header!r}")
    rows = {}
    for rec in reader:
        t, i, k = int(rec[0]), int(rec[1]), int(rec[2])
        rows.setdefault(t, {})[(i, k)] = float(rec[3])
    if not rows or 0 not in rows:
        raise ValueError("trajectory CSV has no slot 0")
    n_slots = max(rows) + 1
    bids = np.empty((n_slots, n_users, n_relays))
    active = np.zeros((n_slots, n_users), dtype=bool)
    for t in range(n_slots):
        bids[t] = bids[t - 1] if t else np.nan
        for (i, k), b in rows.get(t, {}).items():
            bids[t, i, k] = b
            active[t, i] = True
    if np.isnan(bids[0]).any():
        raise ValueError("slot 0 must list every (user, relay) pair")
    return bids, active


@dataclass
class RunReport:
    converged: bool
    slots: int
    backend: str
    final_bids: np.ndarray
    powers: np.ndarray
    rates: np.ndarray
    payments: np.ndarray
    payoffs: np.ndarray
    checks: dict = field(default_factory=dict)

    @property
    def disagreement(self) -> bool:
        return any(c.get("applicable", True) and not c["passed"] for c in self.checks.values())

    @property
    def exit_code(self) -> int:
        if not self.converged:
            return EXIT_NOT_CONVERGED
        return EXIT_DISAGREEMENT if self.disagreement else EXIT_OK

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "slots": self.slots,
            "backend": self.backend,
            "final_bids": self.final_bids.tolist(),
            "powers": self.powers.tolist(),
            "rates": self.rates.tolist(),
            "payments": self.payments.tolist(),
            "payoffs": self.payoffs.tolist(),
            "checks": self.checks,
        }


def _ne_check(settings: Settings, bids, eps):
    rep = is_epsilon_ne(settings.scenario, settings.kind, settings.prices, bids, eps,
                        bid_ceiling=settings.upper_bid)
    return {"passed": rep.is_equilibrium, "eps": eps, "worst_user": rep.worst_user,
            "worst_gain": rep.worst_gain, "gains": list(rep.gains)}


def _fairness(settings: Settings, powers):
    rep = fairness_check(settings.scenario, powers)
    applicable = settings.kind is AuctionKind.SNR and all(r.included for r in rep.relays)
    return {
        "passed": rep.passed,
        "applicable": applicable,
        "max_residual": rep.max_residual,
        "utilization": [r.utilization for r in rep.relays],
        "notices": list(rep.notices),
    }


def _efficiency(settings: Settings, powers):
    sc = settings.scenario
    rep = brute_force_efficiency(sc, candidate_powers=powers)
    util = powers.sum(axis=1) / sc.relay_power
    applicable = (settings.kind is AuctionKind.POWER and bool(np.all(util > 0.999))
                  and bool(np.all(powers > sc.activity_threshold)))
    # fully used budgets leave pi_k * unused power of slack in the welfare bound
    slack = float(np.dot(settings.prices.prices, sc.relay_power * np.maximum(1.0 - util, 0.0)))
    return {
        "passed": bool(rep.gap <= rep.tolerance + slack),
        "applicable": applicable,
        "optimum": rep.value,
        "candidate": rep.candidate_value,
        "gap": rep.gap,
        "tolerance": rep.tolerance + slack,
        "resolution": rep.resolution,
    }


def run_experiment(settings: Settings, out_dir=None, checks=(), eps: float | None = None,
                   keep_trajectory: bool = False):
    """Run the bid dynamics for ``settings``, optionally write outputs and run oracle checks.

    Writes ``trajectory.csv`` and ``report.json`` into ``out_dir`` when it is
    given.  Returns ``(report, trajectory)``; the trajectory is None unless
    ``keep_trajectory`` is set or no directory was given.
    """
    unknown = set(checks) - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown check {sorted(unknown)[0]!r}; choose from {', '.join(CHECKS)}")
    sc = settings.scenario
    eps = 1e-6 * sc.bandwidth if eps is None else eps
    traj = run(sc, settings.kind, settings.prices, settings.schedule(), settings.bounds(),
               init=settings.init, tol=settings.tol, max_slots=settings.max_slots)
    alloc = evaluate(sc, settings.kind, settings.prices, traj.final_bids)
    report = RunReport(
        converged=traj.converged, slots=traj.slots, backend=kernels.BACKEND,
        final_bids=traj.final_bids.copy(), powers=alloc.powers, rates=alloc.rates,
        payments=alloc.payments, payoffs=alloc.payoffs,
    )
    for name in dict.fromkeys(checks):
        if name == "ne":
            report.checks[name] = _ne_check(settings, traj.final_bids, eps)
        elif name == "fairness":
            report.checks[name] = _fairness(settings, alloc.powers)
        else:
            report.checks[name] = _efficiency(settings, alloc.powers)
    if out_dir is not None:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "trajectory.csv", "w", newline="") as fh:
                write_trajectory_csv(traj, fh)
            (out / "report.json").write_text(report_json(report.to_dict()) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write results to {out}: {exc.strerror or exc}") from exc
    return report, (traj if keep_trajectory or out_dir is None else None)


def certify_best_responses(settings: Settings, bids, tol: float | None = None) -> dict:
    """Compare the closed-form best response of every user against the numeric oracle."""
    sc = settings.scenario
    tol = 1e-6 * sc.bandwidth if tol is None else tol
    respond = snr_best_response if settings.kind is AuctionKind.SNR else power_best_response
    gaps = []
    for i in range(sc.n_users):
        trial = np.array(bids, dtype=float)
        trial[i] = respond(sc, settings.prices, i, trial, bid_ceiling=settings.upper_bid)
        closed = payoff(sc, settings.kind, settings.prices, trial, i)
        _, numeric = numeric_payoff_maximizer(sc, settings.kind, settings.prices, i, bids,
                                              bid_ceiling=settings.upper_bid)
        gaps.append(numeric - closed)
    worst = int(np.argmax(gaps))
    return {"passed": bool(gaps[worst] <= tol), "tol": tol, "worst_user": worst,
            "worst_gap": float(gaps[worst]), "gaps": [float(g) for g in gaps]}


@dataclass(frozen=True)
class SweepPoint:
    price: float
    demand: float
    converged: bool
    utilization: float
    saturated: bool
    slots: int


@dataclass(frozen=True)
class SweepResult:
    relay: int
    points: tuple
    bracket: tuple | None
    threshold: float

    def demand_nonincreasing(self) -> bool:
        d = [p.demand for p in self.points]
        return all(b <= a for a, b in zip(d, d[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("price", "demand", "converged", "utilization", "saturated", "slots"))
        for p in self.points:
            w.writerow((_fmt(p.price), _fmt(p.demand), int(p.converged), _fmt(p.utilization),
                        int(p.saturated), p.slots))
        return buf.getvalue()


def single_relay_settings(settings: Settings, relay: int, price: float) -> Settings:
    """``settings`` with relay ``relay`` at ``price`` and every other relay priced out."""
    prices = np.full(settings.scenario.n_relays, PRICED_OUT)
    prices[relay] = price
    return settings.replace(prices=settings.prices.with_prices(prices))


def _sweep_point(args):
    settings, relay, price = args
    s = single_relay_settings(settings, relay, price)
    demand = aggregate_demand(s.scenario, s.kind, relay, price)
    traj = run(s.scenario, s.kind, s.prices, s.schedule(), s.bounds(), init=s.init,
               tol=s.tol, max_slots=s.max_slots)
    final = traj.final_bids
    util = float(traj.powers[-1][:, relay].sum() / s.scenario.relay_power[relay])
    saturated = bool(np.any(final[:, relay] >= s.upper_bid))
    return SweepPoint(float(price), float(demand), traj.converged, util, saturated, traj.slots)


def sweep_prices(settings: Settings, relay: int, price_grid, jobs: int = 1) -> SweepResult:
    """Sweep one relay's price with the others priced out.

    Each grid point reports the aggregate demand and the outcome of the
    dynamics.  The empirical threshold bracket is the pair of neighbouring
    grid prices where the dynamics stop pushing some bid to the ceiling.
    """
    grid = np.sort(np.asarray(price_grid, dtype=float).reshape(-1))
    if grid.size == 0:
        raise ValueError("price grid is empty")
    if np.any(~(grid > 0)):
        raise ValueError("grid prices must be > 0")
    if not 0 <= relay < settings.scenario.n_relays:
        raise ValueError(f"relay {relay} out of range")
    tasks = [(settings, relay, float(p)) for p in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = tuple(pool.map(_sweep_point, tasks))
    else:
        points = tuple(map(_sweep_point, tasks))
    bracket = None
    sat = [p.saturated for p in points]
    if sat[0] and not sat[-1]:
        j = max(n for n, s in enumerate(sat) if s)
        bracket = (points[j].price, points[j + 1].price)
    elif not sat[0]:
        bracket = (0.0, points[0].price)
    return SweepResult(relay=relay, points=points, bracket=bracket,
                       threshold=relay_threshold_price(settings.scenario, relay, settings.kind))


def threshold_table(settings: Settings) -> list:
    sc = settings.scenario
    rows = []
    for k in range(sc.n_relays):
        th = relay_threshold_price(sc, k, settings.kind)
        rows.append({"relay": k, "threshold": th, "price": float(settings.prices.prices[k]),
                     "above_threshold": bool(settings.prices.prices[k] > th)})
    return rows


def report_json(obj) -> str:
    def default(x):
        if isinstance(x, np.generic):
            return x.item()
        if isinstance(x, np.ndarray):
            return x.tolist()
        raise TypeError(type(x).__name__)
    return json.dumps(obj, indent=2, default=default, allow_nan=True)

