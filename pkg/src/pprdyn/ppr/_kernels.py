"""Numba kernels over CSR arrays. All state arrays are dense float64 of
length n and are updated in place; op counters count only touched
coordinates."""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def forward_push(indptr, indices, deg, p, r, alpha, thr, seeds, max_ops):
    """FIFO forward push until |r(i)| <= thr * d(i) everywhere.

    ``seeds`` are the initial queue entries in ascending id order. Returns
    ``(ops, converged)``.
    """
    n = deg.shape[0]
    queue = np.empty(n + 1, dtype=np.int64)
    inq = np.zeros(n, dtype=np.bool_)
    head = 0
    tail = 0
    size = 0
    for k in range(seeds.shape[0]):
        i = seeds[k]
        if not inq[i] and deg[i] > 0 and abs(r[i]) > thr * deg[i]:
            queue[tail] = i
            tail = (tail + 1) % (n + 1)
            size += 1
            inq[i] = True
    ops = 0
    while size > 0:
        if ops >= max_ops:
            return ops, False
        i = queue[head]
        head = (head + 1) % (n + 1)
        size -= 1
        inq[i] = False
        di = deg[i]
        ri = r[i]
        if abs(ri) <= thr * di:
            continue
        p[i] += alpha * ri
        r[i] = 0.0
        share = (1.0 - alpha) * ri / di
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            r[j] += share
            if not inq[j] and abs(r[j]) > thr * deg[j]:
                queue[tail] = j
                tail = (tail + 1) % (n + 1)
                size += 1
                inq[j] = True
        ops += 1 + di
    return ops, True


@njit(cache=True, nogil=True)
def _kkt_violation(x, g, thr):
    if x > 0.0:
        return abs(g + thr)
    v = abs(g) - thr
    return v if v > 0.0 else 0.0


@njit(cache=True, nogil=True)
def ista(indptr, indices, deg, x, g, cand, alpha, eps, rtol, atol, max_sweeps):
    """Working-set ISTA on the scaled PPR objective.

    Each sweep takes one proximal-gradient step (step 1/(2-alpha)) on every
    candidate coordinate whose first-order condition is violated, using the
    gradient from the start of the sweep, then propagates gradient changes
    to neighbors. Only coordinates whose gradient or value moved are
    re-examined. Returns ``(ops, sweeps, converged)``.
    """
    n = deg.shape[0]
    eta = 1.0 / (2.0 - alpha)
    sqd = np.sqrt(deg.astype(np.float64))
    mark = np.zeros(n, dtype=np.bool_)
    cur = np.unique(cand)
    act = np.empty(n, dtype=np.int64)
    step = np.empty(n, dtype=np.float64)
    nxt = np.empty(n, dtype=np.int64)
    ops = 0
    sweeps = 0
    while True:
        na = 0
        for k in range(cur.shape[0]):
            i = cur[k]
            if deg[i] == 0:
                continue
            thr = eps * sqd[i]
            if _kkt_violation(x[i], g[i], thr) > rtol * thr + atol:
                act[na] = i
                na += 1
        if na == 0:
            return ops, sweeps, True
        if sweeps >= max_sweeps:
            return ops, sweeps, False
        for k in range(na):
            i = act[k]
            z = x[i] - eta * g[i]
            lam = eta * eps * sqd[i]
            if z > lam:
                xn = z - lam
            elif z < -lam:
                xn = z + lam
            else:
                xn = 0.0
            step[k] = xn
        nn = 0
        for k in range(na):
            i = act[k]
            old = x[i]
            x[i] = step[k]
            dx = x[i] - old
            if not mark[i]:
                mark[i] = True
                nxt[nn] = i
                nn += 1
            if dx == 0.0:
                ops += 1
                continue
            g[i] += dx
            c = (1.0 - alpha) * dx / sqd[i]
            for q in range(indptr[i], indptr[i + 1]):
                j = indices[q]
                g[j] -= c / sqd[j]
                if not mark[j]:
                    mark[j] = True
                    nxt[nn] = j
                    nn += 1
            ops += 1 + deg[i]
        cur = np.sort(nxt[:nn])
        for k in range(nn):
            mark[nxt[k]] = False
        sweeps += 1


@njit(cache=True, nogil=True)
def ista_gradient(indptr, indices, deg, x, s, alpha, out, rows):
    """Exact gradient ``Wx + b`` at the coordinates listed in ``rows``."""
    for k in range(rows.shape[0]):
        i = rows[k]
        di = deg[i]
        if di == 0:
            out[i] = x[i]
            continue
        acc = 0.0
        for q in range(indptr[i], indptr[i + 1]):
            j = indices[q]
            acc += x[j] / np.sqrt(deg[j])
        val = x[i] - (1.0 - alpha) * acc / np.sqrt(di)
        if i == s:
            val -= alpha / np.sqrt(di)
        out[i] = val


@njit(cache=True, nogil=True)
def push_residual(indptr, indices, deg, p, s, alpha, out):
    """Residual implied by ``p`` on the given graph:
    ``r = e_s - (I - (1-alpha) A D^-1) p / alpha``."""
    n = deg.shape[0]
    for i in range(n):
        out[i] = -p[i] / alpha
    out[s] += 1.0
    for i in range(n):
        if p[i] == 0.0 or deg[i] == 0:
            continue
        share = (1.0 - alpha) * p[i] / (alpha * deg[i])
        for q in range(indptr[i], indptr[i + 1]):
            out[indices[q]] += share


@njit(cache=True, nogil=True)
def push_adjust_batch(deg0, p, r, eu, ev, alpha):
    """Apply the per-direction push adjustment for each event in order.

    ``deg0`` holds degrees before the first event; running degrees are
    tracked locally. Returns the number of touched coordinates, or
    ``-1-k`` when event k scales a node of degree zero that carries mass.
    """
    deg = deg0.copy()
    ops = 0
    for k in range(eu.shape[0]):
        for side in range(2):
            if side == 0:
                u = eu[k]
                v = ev[k]
            else:
                u = ev[k]
                v = eu[k]
            pu = p[u]
            if pu == 0.0:
                continue
            du = deg[u]
            if du == 0:
                return -1 - k
            p[u] = pu * (du + 1) / du
            r[u] -= pu / (alpha * du)
            r[v] += (1.0 - alpha) * pu / (alpha * du)
            ops += 3
        deg[eu[k]] += 1
        deg[ev[k]] += 1
    return ops


@njit(cache=True, nogil=True)
def ista_adjust_batch(indptr, indices, etime, deg0, x, g, s, alpha, eu, ev, et, touched):
    """Scale both endpoints of each inserted edge by ``(d+1)/d`` and update
    the gradient so it stays exact on the graph after that edge.

    CSR arrays describe a graph that already contains every event (edge
    timestamps in ``etime``); ``deg0`` holds degrees before the first event.
    ``touched`` marks every coordinate whose value or gradient changed.
    Returns the touched-coordinate count, or ``-1-k`` when event k scales
    a node of degree zero that carries mass.
    """
    deg = deg0.copy()
    ops = 0
    for k in range(eu.shape[0]):
        t = et[k]
        u = eu[k]
        v = ev[k]
        du = deg[u]
        dv = deg[v]
        if (du == 0 and x[u] != 0.0) or (dv == 0 and x[v] != 0.0):
            return -1 - k
        xu_old = x[u]
        xv_old = x[v]
        if du > 0:
            x[u] = xu_old * (du + 1) / du
        if dv > 0:
            x[v] = xv_old * (dv + 1) / dv
        # Old neighbors of an endpoint see its changed x / sqrt(d).
        for side in range(2):
            if side == 0:
                a = u
                da = du
                xo = xu_old
                xn = x[u]
            else:
                a = v
                da = dv
                xo = xv_old
                xn = x[v]
            if da == 0:
                continue
            dy = xn / np.sqrt(da + 1.0) - xo / np.sqrt(da)
            if dy == 0.0:
                continue
            for q in range(indptr[a], indptr[a + 1]):
                if etime[q] >= t:
                    continue
                j = indices[q]
                g[j] -= (1.0 - alpha) * dy / np.sqrt(deg[j])
                touched[j] = True
                ops += 1
        deg[u] += 1
        deg[v] += 1
        # Endpoints: recompute on the graph that now includes the edge.
        for side in range(2):
            a = u if side == 0 else v
            acc = 0.0
            for q in range(indptr[a], indptr[a + 1]):
                if etime[q] > t:
                    continue
                j = indices[q]
                acc += x[j] / np.sqrt(deg[j])
                ops += 1
            val = x[a] - (1.0 - alpha) * acc / np.sqrt(deg[a])
            if a == s:
                val -= alpha / np.sqrt(deg[a])
            g[a] = val
            touched[a] = True
    return ops
