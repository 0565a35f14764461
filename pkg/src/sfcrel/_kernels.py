"""Hot loops of the exhaustive oracle.

Set ``SFCREL_DISABLE_NUMBA=1`` to force the pure numpy path (also used when
numba is not importable). The two paths agree up to summation-order
rounding.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("SFCREL_DISABLE_NUMBA", "").lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag in CI
    HAVE_NUMBA = False

CAP_TOL = 1e-9
CHUNK = 1 << 15


def _pwl_cost(u, slopes, intercepts):
    """``max(0, max_i(a_i u - b_i))`` elementwise."""
    vals = np.multiply.outer(u, slopes) - intercepts
    return np.maximum(vals.max(axis=-1), 0.0)


def joint_costs_numpy(server, link, const, offsets, slopes, intercepts, w_server, w_link):
    """Objective of every joint choice of one option per chain.

    ``server[o]`` is the utilization vector option ``o`` adds to the servers,
    ``link[o]`` its (n_links, 2) per-direction utilization, ``const[o]`` its
    chain-local cost. Options of chain ``c`` occupy rows
    ``offsets[c]:offsets[c+1]``. Joint index order is row-major with chain 0
    most significant. Infeasible combinations get ``inf``.
    """
    counts = np.diff(offsets)
    total = int(np.prod(counts))
    out = np.empty(total)
    for start in range(0, total, CHUNK):
        idx = np.arange(start, min(total, start + CHUNK))
        digits = np.unravel_index(idx, tuple(int(c) for c in counts))
        su = np.zeros((idx.size, server.shape[1]))
        lu = np.zeros((idx.size,) + link.shape[1:])
        cost = np.zeros(idx.size)
        for c, d in enumerate(digits):
            rows = offsets[c] + d
            su += server[rows]
            lu += link[rows]
            cost += const[rows]
        lmax = lu.max(axis=-1)
        cost += w_server * _pwl_cost(su, slopes, intercepts).sum(axis=-1)
        cost += w_link * _pwl_cost(lmax, slopes, intercepts).sum(axis=-1)
        bad = (su > 1.0 + CAP_TOL).any(axis=-1) | (lmax > 1.0 + CAP_TOL).any(axis=-1)
        cost[bad] = np.inf
        out[idx] = cost
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _pwl_scalar(u, slopes, intercepts):
        best = 0.0
        for i in range(slopes.shape[0]):
            val = slopes[i] * u - intercepts[i]
            if val > best:
                best = val
        return best

    @njit(cache=True)
    def _joint_costs_nb(server, link, const, offsets, slopes, intercepts, w_server, w_link):
        n_chains = offsets.shape[0] - 1
        n_srv = server.shape[1]
        n_lnk = link.shape[1]
        total = 1
        for c in range(n_chains):
            total *= offsets[c + 1] - offsets[c]
        out = np.empty(total)
        rows = np.empty(n_chains, dtype=np.int64)
        su = np.empty(n_srv)
        lu = np.empty((n_lnk, 2))
        for j in range(total):
            r = j
            for c in range(n_chains - 1, -1, -1):
                cnt = offsets[c + 1] - offsets[c]
                rows[c] = offsets[c] + r % cnt
                r //= cnt
            su[:] = 0.0
            lu[:, :] = 0.0
            cost = 0.0
            for c in range(n_chains):
                o = rows[c]
                for x in range(n_srv):
                    su[x] += server[o, x]
                for li in range(n_lnk):
                    lu[li, 0] += link[o, li, 0]
                    lu[li, 1] += link[o, li, 1]
                cost += const[o]
            feasible = True
            srv_cost = 0.0
            for x in range(n_srv):
                if su[x] > 1.0 + CAP_TOL:
                    feasible = False
                    break
                srv_cost += _pwl_scalar(su[x], slopes, intercepts)
            lnk_cost = 0.0
            if feasible:
                for li in range(n_lnk):
                    m = max(lu[li, 0], lu[li, 1])
                    if m > 1.0 + CAP_TOL:
                        feasible = False
                        break
                    lnk_cost += _pwl_scalar(m, slopes, intercepts)
            if feasible:
                out[j] = cost + w_server * srv_cost + w_link * lnk_cost
            else:
                out[j] = np.inf
        return out

    def joint_costs_numba(server, link, const, offsets, slopes, intercepts, w_server, w_link):
        return _joint_costs_nb(
            np.ascontiguousarray(server, dtype=np.float64),
            np.ascontiguousarray(link, dtype=np.float64),
            np.ascontiguousarray(const, dtype=np.float64),
            np.ascontiguousarray(offsets, dtype=np.int64),
            np.ascontiguousarray(slopes, dtype=np.float64),
            np.ascontiguousarray(intercepts, dtype=np.float64),
            float(w_server),
            float(w_link),
        )

    joint_costs = joint_costs_numba
else:
    joint_costs_numba = None
    joint_costs = joint_costs_numpy


def first_minimum(costs: np.ndarray, tol: float = 1e-12) -> int:
    """Index of the first entry within ``tol`` of the minimum, or -1."""
    if costs.size == 0:
        return -1
    best = costs.min()
    if not np.isfinite(best):
        return -1
    return int(np.argmax(costs <= best + tol))
