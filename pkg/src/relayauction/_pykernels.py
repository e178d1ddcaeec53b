"""NumPy implementations of the hot loops.

Arithmetic is ordered exactly as in ``_ckernels.pyx`` so both backends
produce bit-identical trajectories.
"""

import itertools

import numpy as np


def iterate_bids(bids, coef, reserve, lower, upper, active, tol, window, streak, out):
    """Advance ``bids`` in place through ``len(active)`` slots of projected best responses.

    Users flagged in ``active[t]`` replace their row with
    ``clip(coef * (others' total + reserve), lower, upper)`` computed from
    the previous slot's profile.  Each new profile is written to ``out[t]``.
    Stops early once the max-norm change has stayed below ``tol`` for
    ``window`` consecutive slots.  Returns ``(slots_done, streak, converged)``.
    """
    n_slots = active.shape[0]
    for t in range(n_slots):
        total = bids[0].copy()
        for r in range(1, bids.shape[0]):
            total += bids[r]
        cand = np.maximum(np.minimum(coef * ((total - bids) + reserve), upper), lower)
        new = np.where(active[t].astype(bool)[:, None], cand, bids)
        change = float(np.max(np.abs(new - bids)))
        bids[...] = new
        out[t] = new
        streak = streak + 1 if change < tol else 0
        if streak >= window:
            return t + 1, streak, True
    return n_slots, streak, False


def efficiency_search(snr, active, counts, gamma, bandwidth):
    """Exhaustive maximisation of the summed (clamped) rate increase.

    ``snr[k, a, i]`` is the SNR user ``i`` gets from relay ``k`` at grid
    point ``a`` and ``active`` flags nonzero powers.  The last relay varies
    fastest; ties keep the first maximiser.  Returns ``(value, index)``.
    """
    n_relays, _, n_users = snr.shape
    base = bandwidth * np.log2(1.0 + gamma)
    last = n_relays - 1
    best, best_idx = -np.inf, None
    heads = itertools.product(*(range(int(c)) for c in counts[:last]))
    for head in heads:
        s = np.empty((int(counts[last]), n_users))
        m = np.zeros((int(counts[last]), n_users), dtype=np.int64)
        s[:] = 1.0 + gamma
        for k, a in enumerate(head):
            s += snr[k, a]
            m += active[k, a]
        s += snr[last, : counts[last]]
        m += active[last, : counts[last]]
        r = bandwidth * np.log2(s) / (m + 1) - base
        r = np.where((m > 0) & (r > 0), r, 0.0)
        val = np.zeros(r.shape[0])
        for i in range(n_users):
            val += r[:, i]
        j = int(np.argmax(val))
        if val[j] > best:
            best = float(val[j])
            best_idx = np.array(list(head) + [j], dtype=np.intp)
    return best, best_idx
