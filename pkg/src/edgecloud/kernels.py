"""Hot numeric kernels.

Every kernel has a numba implementation (``*_nb``) and a vectorised numpy
implementation (``*_np``). The public name is bound to whichever backend
``_accel`` selected, so callers never branch on the backend themselves.
Both variants are always importable, which the tests and the benchmark use
to check that they agree.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import BACKEND, HAS_NUMBA, njit

METERS_PER_DEGREE = 111320.0

__all__ = [
    "BACKEND",
    "METERS_PER_DEGREE",
    "consecutive_distances",
    "radius_join",
    "pagerank_csr",
]


# -- consecutive distances ------------------------------------------------


def consecutive_distances_np(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if lat.shape[0] < 2:
        return np.empty(0, dtype=np.float64)
    mean_lat = np.radians((lat[1:] + lat[:-1]) / 2.0)
    dx = (lon[1:] - lon[:-1]) * np.cos(mean_lat) * METERS_PER_DEGREE
    dy = (lat[1:] - lat[:-1]) * METERS_PER_DEGREE
    return np.sqrt(dx * dx + dy * dy)


@njit(cache=True)
def _consecutive_distances_nb(lat, lon):
    n = lat.shape[0]
    if n < 2:
        return np.empty(0, dtype=np.float64)
    out = np.empty(n - 1, dtype=np.float64)
    for i in range(1, n):
        mean_lat = math.radians((lat[i] + lat[i - 1]) / 2.0)
        dx = (lon[i] - lon[i - 1]) * math.cos(mean_lat) * METERS_PER_DEGREE
        dy = (lat[i] - lat[i - 1]) * METERS_PER_DEGREE
        out[i - 1] = math.sqrt(dx * dx + dy * dy)
    return out


def consecutive_distances_nb(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    return _consecutive_distances_nb(
        np.ascontiguousarray(lat, dtype=np.float64), np.ascontiguousarray(lon, dtype=np.float64)
    )


# -- radius join ----------------------------------------------------------
#
# For every observation, every station within ``radius`` meters. Stations are
# pre-sorted by latitude so each observation scans only the latitude band that
# can possibly be within range.


def _sorted_band(st_lat: np.ndarray) -> np.ndarray:
    return np.argsort(st_lat, kind="stable")


def radius_join_np(obs_lat, obs_lon, st_lat, st_lon, radius: float):
    obs_lat = np.asarray(obs_lat, dtype=np.float64)
    obs_lon = np.asarray(obs_lon, dtype=np.float64)
    st_lat = np.asarray(st_lat, dtype=np.float64)
    st_lon = np.asarray(st_lon, dtype=np.float64)
    if obs_lat.size == 0 or st_lat.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64)

    order = _sorted_band(st_lat)
    s_lat = st_lat[order]
    s_lon = st_lon[order]
    band = radius / METERS_PER_DEGREE
    lo = np.searchsorted(s_lat, obs_lat - band, side="left")
    hi = np.searchsorted(s_lat, obs_lat + band, side="right")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64)

    oi = np.repeat(np.arange(obs_lat.size, dtype=np.int64), counts)
    starts = np.repeat(lo - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
    sj = (np.arange(total, dtype=np.int64) + starts).astype(np.int64)

    mean_lat = np.radians((obs_lat[oi] + s_lat[sj]) / 2.0)
    dx = (s_lon[sj] - obs_lon[oi]) * np.cos(mean_lat) * METERS_PER_DEGREE
    dy = (s_lat[sj] - obs_lat[oi]) * METERS_PER_DEGREE
    d = np.sqrt(dx * dx + dy * dy)
    keep = d <= radius
    oi, sj, d = oi[keep], order[sj[keep]].astype(np.int64), d[keep]
    # canonical order: observation, then station index
    idx = np.lexsort((sj, oi))
    return oi[idx], sj[idx], d[idx]


@njit(cache=True)
def _radius_join_nb(obs_lat, obs_lon, s_lat, s_lon, order, radius):
    band = radius / METERS_PER_DEGREE
    n = obs_lat.shape[0]
    m = s_lat.shape[0]
    cap = 16
    out_o = np.empty(cap, dtype=np.int64)
    out_s = np.empty(cap, dtype=np.int64)
    out_d = np.empty(cap, dtype=np.float64)
    k = 0
    for i in range(n):
        la = obs_lat[i]
        lo_ = obs_lon[i]
        j = np.searchsorted(s_lat, la - band)
        row_start = k
        while j < m and s_lat[j] <= la + band:
            mean_lat = math.radians((la + s_lat[j]) / 2.0)
            dx = (s_lon[j] - lo_) * math.cos(mean_lat) * METERS_PER_DEGREE
            dy = (s_lat[j] - la) * METERS_PER_DEGREE
            d = math.sqrt(dx * dx + dy * dy)
            if d <= radius:
                if k == cap:
                    cap *= 2
                    no = np.empty(cap, dtype=np.int64)
                    ns = np.empty(cap, dtype=np.int64)
                    nd = np.empty(cap, dtype=np.float64)
                    no[:k] = out_o[:k]
                    ns[:k] = out_s[:k]
                    nd[:k] = out_d[:k]
                    out_o, out_s, out_d = no, ns, nd
                out_o[k] = i
                out_s[k] = order[j]
                out_d[k] = d
                k += 1
            j += 1
        # insertion sort this observation's hits by station index
        for a in range(row_start + 1, k):
            ts = out_s[a]
            td = out_d[a]
            b = a - 1
            while b >= row_start and out_s[b] > ts:
                out_s[b + 1] = out_s[b]
                out_d[b + 1] = out_d[b]
                b -= 1
            out_s[b + 1] = ts
            out_d[b + 1] = td
    return out_o[:k].copy(), out_s[:k].copy(), out_d[:k].copy()


def radius_join_nb(obs_lat, obs_lon, st_lat, st_lon, radius: float):
    obs_lat = np.ascontiguousarray(obs_lat, dtype=np.float64)
    obs_lon = np.ascontiguousarray(obs_lon, dtype=np.float64)
    st_lat = np.ascontiguousarray(st_lat, dtype=np.float64)
    st_lon = np.ascontiguousarray(st_lon, dtype=np.float64)
    if obs_lat.size == 0 or st_lat.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64)
    order = _sorted_band(st_lat).astype(np.int64)
    return _radius_join_nb(
        obs_lat, obs_lon, st_lat[order].copy(), st_lon[order].copy(), order, float(radius)
    )


# -- weighted PageRank power iteration -------------------------------------
#
# Graph given in CSR by *source*: row u lists the out-edges (indices[k], weights[k])
# for k in indptr[u]:indptr[u+1]. Each row is normalised by its weight sum;
# rows with no out-weight are dangling and spread their mass uniformly.


def pagerank_csr_np(indptr, indices, weights, damping: float, tol: float, max_iter: int):
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    n = indptr.shape[0] - 1
    if n == 0:
        return np.empty(0, np.float64), 0
    row_of = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    out_w = np.bincount(row_of, weights=weights, minlength=n).astype(np.float64)
    dangling = out_w == 0.0
    share = np.zeros_like(weights)
    nz = out_w[row_of] > 0.0
    share[nz] = weights[nz] / out_w[row_of][nz]

    x = np.full(n, 1.0 / n)
    it = 0
    for it in range(1, max_iter + 1):
        flow = np.bincount(indices, weights=x[row_of] * share, minlength=n)
        dang = x[dangling].sum()
        new = damping * (flow + dang / n) + (1.0 - damping) / n
        err = np.abs(new - x).sum()
        x = new
        if err < tol:
            break
    return x / x.sum(), it


@njit(cache=True)
def _pagerank_csr_nb(indptr, indices, weights, damping, tol, max_iter):
    n = indptr.shape[0] - 1
    out_w = np.zeros(n, dtype=np.float64)
    for u in range(n):
        s = 0.0
        for k in range(indptr[u], indptr[u + 1]):
            s += weights[k]
        out_w[u] = s
    x = np.full(n, 1.0 / n)
    new = np.empty(n, dtype=np.float64)
    it = 0
    for it in range(1, max_iter + 1):
        dang = 0.0
        for u in range(n):
            new[u] = 0.0
            if out_w[u] == 0.0:
                dang += x[u]
        for u in range(n):
            if out_w[u] > 0.0:
                xu = x[u] / out_w[u]
                for k in range(indptr[u], indptr[u + 1]):
                    new[indices[k]] += xu * weights[k]
        base = (1.0 - damping) / n + damping * dang / n
        err = 0.0
        for u in range(n):
            v = damping * new[u] + base
            err += abs(v - x[u])
            new[u] = v
        x, new = new, x
        if err < tol:
            break
    total = 0.0
    for u in range(n):
        total += x[u]
    return x / total, it


def pagerank_csr_nb(indptr, indices, weights, damping: float, tol: float, max_iter: int):
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    if indptr.shape[0] <= 1:
        return np.empty(0, np.float64), 0
    x, it = _pagerank_csr_nb(
        indptr,
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float64),
        float(damping),
        float(tol),
        int(max_iter),
    )
    return x, int(it)


if HAS_NUMBA:
    consecutive_distances = consecutive_distances_nb
    radius_join = radius_join_nb
    pagerank_csr = pagerank_csr_nb
else:
    consecutive_distances = consecutive_distances_np
    radius_join = radius_join_np
    pagerank_csr = pagerank_csr_np
