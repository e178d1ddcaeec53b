"""Random instance families shared by the test modules."""

from pathlib import Path

import numpy as np
from scipy.optimize import brentq, root

from relayauction.auction import PriceVector
from relayauction.best_response import coefficient_matrix, snr_coefficient
from relayauction.channel import Relay, Scenario, User, gains_from_positions

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def log_uniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def random_scenario(rng, n_users, n_relays, priority=True):
    """Explicit gains spread over a few decades; unit source power and noise."""
    return Scenario.from_arrays(
        np.ones(n_users),
        log_uniform(rng, 0.5, 10, n_relays),
        log_uniform(rng, 0.05, 2, n_users),
        log_uniform(rng, 0.5, 20, (n_users, n_relays)),
        log_uniform(rng, 0.5, 20, (n_relays, n_users)),
        bandwidth=float(rng.uniform(0.5, 2)),
        noise_power=1.0,
        priority=rng.uniform(0.5, 2, (n_users, n_relays)) if priority else None,
    )


def geometric_scenario(rng, n_users, n_relays):
    """Path-loss gains from random source/destination pairs and relays near their midpoint."""
    src = rng.uniform(-100, 100, (n_users, 2))
    angle = rng.uniform(0, 2 * np.pi, n_users)
    length = rng.uniform(120, 220, n_users)
    dst = src + np.c_[np.cos(angle), np.sin(angle)] * length[:, None]
    centre = ((src + dst) / 2).mean(axis=0)
    rel = rng.uniform(-60, 60, (n_relays, 2)) + centre
    gains = gains_from_positions(src, dst, rel, 3.0)
    return Scenario([User(2.5e-3)] * n_users, [Relay(0.1)] * n_relays, gains, 1.0, 1e-9,
                    priority=rng.uniform(0.8, 1.25, (n_users, n_relays)))


def demand_fractions(scenario, kind, prices):
    f = coefficient_matrix(scenario, kind, prices)
    with np.errstate(invalid="ignore"):
        return np.where(np.isinf(f), 1.0, f / (1.0 + f))


def fairness_instance(rng, target=0.9995):
    """Two priority clusters of two users each, prices tuned to relay demand ``target``.

    Returns ``(scenario, prices)`` or None when the draw has no interior
    price with that demand (every relay must end up with >= 2 users).
    """
    q = np.array([[1, 3], [1, 3], [3, 1], [3, 1]], dtype=float)
    sc = Scenario.from_arrays(rng.uniform(0.5, 2, 4), rng.uniform(0.5, 2, 2), rng.uniform(0.005, 0.1, 4),
                              rng.uniform(0.5, 5, (4, 2)), rng.uniform(0.5, 5, (2, 4)), priority=q)
    prices = []
    for k, users in ((0, (0, 1)), (1, (2, 3))):
        coefs = [snr_coefficient(sc, i, k, 1.0) for i in users]
        if any(c.degenerate for c in coefs):
            return None
        lo = min(c.lower_threshold for c in coefs) * (1 + 1e-12)
        hi = max(c.opt_out_price for c in coefs)

        def excess(price):
            fs = [snr_coefficient(sc, i, k, price).value for i in users]
            return sum(1.0 if np.isinf(f) else f / (1 + f) for f in fs) - target

        if not (excess(lo) > 0 > excess(hi)):
            return None
        prices.append(brentq(excess, lo, hi, xtol=1e-15, rtol=1e-15))
    pv = PriceVector(prices)
    x = demand_fractions(sc, "snr", pv)
    if np.any(np.abs(x.sum(axis=0) - target) > 1e-9) or np.any((x > 0).sum(axis=0) < 2):
        return None
    return sc, pv


def efficiency_instance(rng, target=0.9995):
    """2x2 power auction whose equilibrium has both users on both relays at demand ``target``.

    Splitting across relays only pays when each relay's SNR gain saturates
    below about 1.6, hence the strong relay-destination links and weak
    direct links.  Prices start from the shadow prices of the concave
    all-relays welfare problem and are then tuned by a root search.
    Returns ``(scenario, prices)`` or None.
    """
    from scipy.optimize import minimize

    from relayauction.channel import direct_snr, relay_snr_increment_derivative, snr_increments
    from relayauction.oracles import marginal_utility

    sc = Scenario.from_arrays(np.ones(2), np.ones(2), rng.uniform(1e-4, 1e-3, 2),
                              rng.uniform(0.5, 1.0, (2, 2)), rng.uniform(100, 1000, (2, 2)))

    def neg_welfare(v):
        p = np.abs(v.reshape(2, 2))
        return -sum(np.log2(1 + direct_snr(sc, i) + snr_increments(sc, i, p[:, i]).sum()) / 3 for i in range(2))

    cons = [{"type": "ineq", "fun": (lambda v, k=k: sc.relay_power[k] - np.abs(v.reshape(2, 2))[k].sum())}
            for k in range(2)]
    res = minimize(neg_welfare, np.full(4, 0.45), constraints=cons, method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 500})
    p = np.abs(res.x.reshape(2, 2))
    if np.any(p < 1e-6):
        return None
    shadow = np.array([
        np.mean([marginal_utility(sc, i, k, p[:, i]) * relay_snr_increment_derivative(sc, i, k, p[k, i])
                 for i in range(2)])
        for k in range(2)
    ])
    if not np.all(demand_fractions(sc, "power", PriceVector(shadow * 1.001)) > 0):
        return None
    sol = root(lambda lp: demand_fractions(sc, "power", PriceVector(np.exp(lp))).sum(axis=0) - target,
               np.log(shadow), method="hybr")
    pv = PriceVector(np.exp(sol.x))
    x = demand_fractions(sc, "power", pv)
    if not (np.all(x > 0) and np.all(np.abs(x.sum(axis=0) - target) < 1e-6)):
        return None
    return sc, pv


def draw(rng, factory, count, max_tries=1000):
    """Rejection-sample ``count`` instances from ``factory(rng)``."""
    out = []
    for _ in range(max_tries):
        inst = factory(rng)
        if inst is not None:
            out.append(inst)
            if len(out) == count:
                return out
    raise RuntimeError(f"only {len(out)} of {count} instances after {max_tries} draws")
