import numpy as np
import pytest
from instances import SCENARIOS, random_scenario

from relayauction import kernels
from relayauction.auction import PriceVector
from relayauction.best_response import coefficient_matrix
from relayauction.config import load_scenario
from relayauction.dynamics import Bounds, ScheduleKind, equilibrium_bids, make_schedule, run


def max_gap(mask):
    """Longest run of slots a user waits between updates, per user."""
    worst = np.zeros(mask.shape[1], dtype=int)
    idle = np.zeros(mask.shape[1], dtype=int)
    for row in mask:
        idle = np.where(row, 0, idle + 1)
        worst = np.maximum(worst, idle + 1)
    return worst


def test_bernoulli_respects_bound():
    sch = make_schedule("bernoulli", 3, bound=7, seed=1, probabilities=[0.01, 0.2, 1.0])
    mask = sch.stream().take(5000).astype(bool)
    assert max_gap(mask).max() <= 7
    # the rare user is forced far more often than it volunteers
    assert mask[:, 0].mean() == pytest.approx(1 / 7, abs=0.02)
    assert mask[:, 2].all()


def test_stream_chunking_does_not_change_masks():
    sch = make_schedule("bernoulli", 4, bound=5, seed=9, probabilities=0.3)
    whole = sch.stream().take(300)
    s = sch.stream()
    parts = np.concatenate([s.take(n) for n in (1, 17, 82, 200)])
    np.testing.assert_array_equal(whole, parts)


def test_round_robin_and_explicit():
    rr = make_schedule("round_robin", 3).stream().take(6)
    np.testing.assert_array_equal(rr.argmax(axis=1), [0, 1, 2, 0, 1, 2])
    ex = make_schedule("explicit", 2, sets=[[1, 3], [2]], period=4)
    # user 1 updates in slots 2, 6, 10, ...
    assert ex.bound == 4
    np.testing.assert_array_equal(ex.stream().take(8)[:, 0], [1, 0, 1, 0, 1, 0, 1, 0])


@pytest.mark.parametrize("kwargs", [
    dict(kind="bernoulli", probabilities=[0.0, 0.5]),
    dict(kind="bernoulli"),
    dict(kind="round_robin", bound=1),
    dict(kind="explicit", sets=[[1], [2]], period=4, bound=2),
    dict(kind="explicit", sets=[[1], []]),
    dict(kind="synchronous", bound=0),
])
def test_schedule_validation(kwargs):
    with pytest.raises(ValueError):
        make_schedule(n_users=2, **kwargs)


def test_bounds_validation():
    with pytest.raises(ValueError):
        Bounds(np.zeros((1, 1)), np.ones((1, 1)))
    with pytest.raises(ValueError):
        Bounds(np.ones((1, 1)), np.full((1, 1), 0.5))


@pytest.fixture(scope="module")
def three_users():
    return load_scenario(SCENARIOS / "three_users.yaml")


def test_synchronous_run_reaches_closed_form(three_users):
    sc, pv = three_users.scenario, three_users.prices
    tr = run(sc, "snr", pv, make_schedule("synchronous", sc.n_users, seed=3), tol=1e-12)
    target = equilibrium_bids(coefficient_matrix(sc, "snr", pv), pv.reserve_bids)
    assert tr.converged
    np.testing.assert_allclose(tr.final_bids, np.maximum(target, 1e-15), rtol=1e-9, atol=1e-14)


def test_asynchronous_runs_share_fixed_point(three_users):
    sc, pv = three_users.scenario, three_users.prices
    finals = []
    for seed in range(3):
        sch = make_schedule("bernoulli", sc.n_users, bound=20, seed=seed, probabilities=[0.1, 0.5, 0.9])
        tr = run(sc, "snr", pv, sch, tol=1e-12)
        assert tr.converged
        finals.append(tr.final_bids)
    np.testing.assert_allclose(finals[0], finals[1], rtol=1e-8)
    np.testing.assert_allclose(finals[0], finals[2], rtol=1e-8)


def test_inactive_users_keep_their_bids(three_users):
    sc, pv = three_users.scenario, three_users.prices
    tr = run(sc, "snr", pv, make_schedule("round_robin", sc.n_users, seed=0), max_slots=30)
    for t in range(1, tr.slots + 1):
        idle = ~tr.active[t]
        np.testing.assert_array_equal(tr.bids[t][idle], tr.bids[t - 1][idle])


def test_runs_are_deterministic(three_users):
    sc, pv = three_users.scenario, three_users.prices
    sch = make_schedule("bernoulli", sc.n_users, seed=4, probabilities=0.4)
    a, b = run(sc, "snr", pv, sch), run(sc, "snr", pv, sch)
    np.testing.assert_array_equal(a.bids, b.bids)


def test_projection_onto_bounds(three_users):
    sc, pv = three_users.scenario, three_users.prices
    bounds = Bounds.uniform(sc.n_users, sc.n_relays, lower=1e-3, upper=2e-3)
    tr = run(sc, "snr", pv, bounds=bounds, max_slots=50)
    assert tr.bids.min() >= 1e-3 and tr.bids.max() <= 2e-3


def test_max_slots_gives_unconverged_trajectory(three_users):
    sc, pv = three_users.scenario, three_users.prices
    tr = run(sc, "snr", pv, max_slots=3, tol=1e-15)
    assert not tr.converged and tr.slots == 3
    assert tr.powers.shape == (4, sc.n_users, sc.n_relays)
    assert tr.payoffs.shape == (4, sc.n_users)


def test_bad_init_rejected(three_users):
    sc, pv = three_users.scenario, three_users.prices
    with pytest.raises(ValueError):
        run(sc, "snr", pv, init="zeros")
    with pytest.raises(ValueError):
        run(sc, "snr", pv, init=np.full((3, 2), 1e9))


def test_equilibrium_bids_over_demand():
    assert equilibrium_bids([[np.inf], [1.0]], [1.0]) is None
    assert equilibrium_bids([[1.0], [1.0]], [1.0]) is None
    # fractions 1/2 and 1/3 leave 1/6 for the reserve
    np.testing.assert_allclose(equilibrium_bids([[1.0], [0.5]], [2.0]), [[6.0], [4.0]])


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_backends_bit_identical():
    rng = np.random.default_rng(21)
    py, cy = kernels.load_backend("python"), kernels.load_backend("cython")
    for _ in range(10):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        sc = random_scenario(rng, n, m)
        pv = PriceVector(rng.uniform(0.05, 1.0, m))
        coef = coefficient_matrix(sc, "snr", pv)
        coef = np.where(np.isinf(coef), 1e300, coef)
        lo, hi = np.full((n, m), 1e-15), np.full((n, m), 1e6)
        active = (rng.random((200, n)) < 0.5).astype(np.uint8)
        b0 = rng.uniform(0, 5, (n, m))
        outs = []
        for mod in (py, cy):
            bids, out = b0.copy(), np.empty((200, n, m))
            res = mod.iterate_bids(bids, coef, pv.reserve_bids, lo, hi, active, 1e-12, 3, 0, out)
            outs.append((res, out[: res[0]].copy(), bids))
        assert outs[0][0] == outs[1][0]
        np.testing.assert_array_equal(outs[0][1], outs[1][1])
        np.testing.assert_array_equal(outs[0][2], outs[1][2])


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_efficiency_search_backends_agree():
    rng = np.random.default_rng(22)
    py, cy = kernels.load_backend("python"), kernels.load_backend("cython")
    snr = rng.uniform(0, 2, (2, 15, 2))
    active = (snr > 0.3).astype(np.uint8)
    counts = np.array([15, 15], dtype=np.intp)
    gamma = rng.uniform(0, 1, 2)
    a, b = py.efficiency_search(snr, active, counts, gamma, 1.0), cy.efficiency_search(snr, active, counts, gamma, 1.0)
    assert a[0] == b[0]
    assert tuple(a[1]) == tuple(b[1])


def test_pure_python_switch(monkeypatch):
    import importlib

    monkeypatch.setenv("RELAYAUCTION_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("RELAYAUCTION_PURE_PYTHON")
        importlib.reload(kernels)
    with pytest.raises(ValueError):
        kernels.load_backend("fortran")


def test_schedule_kind_values():
    assert ScheduleKind("round_robin") is ScheduleKind.ROUND_ROBIN
