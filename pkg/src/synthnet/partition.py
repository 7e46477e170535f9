"""Numba kernels: FM min-cut bisection, recursive partitioning, BFS growth
and per-block pin counting over a pin-level hypergraph.

Hypergraph layout (all int64 CSR):
  net_ptr/net_node   pins of each net; node ``n`` stands for the outside world
  net_drv            position of the driver inside the net's pin list, or -1
  node_ptr/node_net  distinct nets touching each node
"""
from __future__ import annotations

import numpy as np
from numba import njit

BIG_NET = 500  # nets larger than this are ignored by the FM gain model
REPEATS = 1  # independent multilevel runs per bisection, best cut kept
VCYCLES = 2


@njit(cache=True)
def _lcg(state):
    state = (state * 6364136223846793005 + 1442695040888963407) & 0x7FFFFFFFFFFFFFFF
    return state


@njit(cache=True)
def block_pins(members, n_nodes, net_ptr, net_node, net_drv, node_ptr, node_net,
               mark, stamp, net_seen, tag, model):
    """Pin count of the block ``members`` under pin model 1, 2 or 3.

    ``mark``/``net_seen``/``tag`` are scratch arrays holding stamps;
    ``stamp`` must be fresh for every call.
    """
    n_nets = net_ptr.shape[0] - 1
    for v in members:
        mark[v] = stamp
    total = 0
    for v in members:
        for k in range(node_ptr[v], node_ptr[v + 1]):
            e = node_net[k]
            if net_seen[e] == stamp:
                continue
            net_seen[e] = stamp
            a, b = net_ptr[e], net_ptr[e + 1]
            if model == 2:
                inside = 0
                for q in range(a, b):
                    if mark[net_node[q]] == stamp:
                        inside += 1
                if inside < b - a:
                    total += 1
                continue
            dpos = net_drv[e]
            if dpos < 0:
                continue
            d = net_node[a + dpos]
            d_in = mark[d] == stamp if d < n_nodes else False
            if model == 1:
                for q in range(a, b):
                    if q == a + dpos:
                        continue
                    s = net_node[q]
                    s_in = mark[s] == stamp if s < n_nodes else False
                    if s_in != d_in:
                        total += 1
            else:
                # distinct sink nodes across the boundary from the driver
                for q in range(a, b):
                    if q == a + dpos:
                        continue
                    s = net_node[q]
                    s_in = mark[s] == stamp if s < n_nodes else False
                    if s_in == d_in:
                        continue
                    key = stamp * n_nets + e
                    if tag[s] != key:
                        tag[s] = key
                        total += 1
    return total


@njit(cache=True)
def bfs_order(start, limit, n_nodes, net_ptr, net_node, node_ptr, node_net,
              seen, net_seen, stamp):
    """First ``limit`` nodes reached by BFS from ``start`` through nets."""
    order = np.empty(limit, dtype=np.int64)
    order[0] = start
    seen[start] = stamp
    head, tail = 0, 1
    while head < tail and tail < limit:
        v = order[head]
        head += 1
        for k in range(node_ptr[v], node_ptr[v + 1]):
            e = node_net[k]
            if net_seen[e] == stamp:
                continue
            net_seen[e] = stamp
            for q in range(net_ptr[e], net_ptr[e + 1]):
                u = net_node[q]
                if u >= n_nodes or seen[u] == stamp:
                    continue
                seen[u] = stamp
                order[tail] = u
                tail += 1
                if tail == limit:
                    break
            if tail == limit:
                break
    return order[:tail]


@njit(cache=True)
def local_graph(nodes, n_nodes, net_ptr, net_node, node_ptr, node_net,
                loc, net_stamp, tag, stamp):
    """Sub-hypergraph induced by ``nodes``: nets with >= 2 distinct pins inside.

    Returns local ``(net_ptr, net_pin)`` over node indices ``0..len(nodes)``.
    """
    n = nodes.shape[0]
    n_nets = net_ptr.shape[0] - 1
    for i in range(n):
        loc[nodes[i]] = i
    m = 0
    for i in range(n):
        v = nodes[i]
        for k in range(node_ptr[v], node_ptr[v + 1]):
            e = node_net[k]
            if net_stamp[e] != stamp:
                net_stamp[e] = stamp
                m += 1
    gnets = np.empty(m, dtype=np.int64)
    m = 0
    for i in range(n):
        v = nodes[i]
        for k in range(node_ptr[v], node_ptr[v + 1]):
            e = node_net[k]
            if net_stamp[e] == stamp:
                net_stamp[e] = -stamp
                gnets[m] = e
                m += 1
    inside = np.zeros(m, dtype=np.int64)
    total = 0
    for j in range(m):
        e = gnets[j]
        a, b = net_ptr[e], net_ptr[e + 1]
        if b - a > BIG_NET:
            continue
        c = 0
        key = (stamp * n_nets + e) * 2
        for q in range(a, b):
            u = net_node[q]
            if u < n_nodes and loc[u] >= 0 and tag[u] != key:
                tag[u] = key
                c += 1
        if c >= 2:
            inside[j] = c
            total += c
    lnet_ptr = np.zeros(1, dtype=np.int64)
    keep = 0
    for j in range(m):
        if inside[j] >= 2:
            keep += 1
    lnet_ptr = np.zeros(keep + 1, dtype=np.int64)
    lnet_pin = np.empty(total, dtype=np.int64)
    kk = 0
    w = 0
    for j in range(m):
        if inside[j] < 2:
            continue
        e = gnets[j]
        key = (stamp * n_nets + e) * 2 + 1
        for q in range(net_ptr[e], net_ptr[e + 1]):
            u = net_node[q]
            if u < n_nodes and loc[u] >= 0 and tag[u] != key:
                tag[u] = key
                lnet_pin[w] = loc[u]
                w += 1
        kk += 1
        lnet_ptr[kk] = w
    for i in range(n):
        loc[nodes[i]] = -1
    return lnet_ptr, lnet_pin


@njit(cache=True)
def node_csr(n, net_ptr, net_pin):
    deg = np.zeros(n, dtype=np.int64)
    for q in range(net_pin.shape[0]):
        deg[net_pin[q]] += 1
    node_ptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        node_ptr[i + 1] = node_ptr[i] + deg[i]
    node_net = np.empty(node_ptr[n], dtype=np.int64)
    fill = node_ptr[:-1].copy()
    for e in range(net_ptr.shape[0] - 1):
        for q in range(net_ptr[e], net_ptr[e + 1]):
            v = net_pin[q]
            node_net[fill[v]] = e
            fill[v] += 1
    return node_ptr, node_net


@njit(cache=True)
def coarsen(n, vw, net_ptr, net_pin, node_ptr, node_net, seed, maxw, side):
    """First-choice clustering on connection rating.

    Each unvisited node joins the neighbouring cluster (or singleton) with
    the best ``sum(1/(|e|-1)) / (w_u * w_c)`` rating that stays under
    ``maxw``; nodes on different sides never share a cluster.
    Returns ``(cluster map, cluster count)``.
    """
    order = np.arange(n)
    state = (seed * 2654435761 + 97) & 0x7FFFFFFFFFFFFFFF
    for i in range(n - 1, 0, -1):
        state = _lcg(state)
        j = (state >> 17) % (i + 1)
        t = order[i]
        order[i] = order[j]
        order[j] = t
    cmap = np.full(n, -1, dtype=np.int64)
    cw = np.zeros(n, dtype=np.int64)
    score = np.zeros(n, dtype=np.float64)
    touched = np.empty(n, dtype=np.int64)
    nc = 0
    for idx in range(n):
        u = order[idx]
        if cmap[u] >= 0:
            continue
        nt = 0
        for k in range(node_ptr[u], node_ptr[u + 1]):
            e = node_net[k]
            a, b = net_ptr[e], net_ptr[e + 1]
            if b - a > 64:
                continue
            w = 1.0 / (b - a - 1)
            for q in range(a, b):
                v = net_pin[q]
                if v == u or side[v] != side[u]:
                    continue
                if score[v] == 0.0:
                    touched[nt] = v
                    nt += 1
                score[v] += w
        best = -1
        best_s = 0.0
        for t in range(nt):
            v = touched[t]
            wv = cw[cmap[v]] if cmap[v] >= 0 else vw[v]
            if vw[u] + wv <= maxw:
                sc = score[v] / (vw[u] * wv)
                if sc > best_s:
                    best_s = sc
                    best = v
            score[v] = 0.0
        if best >= 0 and cmap[best] >= 0:
            c = cmap[best]
        else:
            c = nc
            nc += 1
            if best >= 0:
                cmap[best] = c
                cw[c] = vw[best]
        cmap[u] = c
        cw[c] += vw[u]
    return cmap, nc


@njit(cache=True)
def contract(cmap, nc, vw, net_ptr, net_pin):
    cvw = np.zeros(nc, dtype=np.int64)
    for v in range(cmap.shape[0]):
        cvw[cmap[v]] += vw[v]
    tag = np.full(nc, -1, dtype=np.int64)
    m = net_ptr.shape[0] - 1
    cptr = np.zeros(m + 1, dtype=np.int64)
    cpin = np.empty(net_pin.shape[0], dtype=np.int64)
    w = 0
    kk = 0
    for e in range(m):
        start = w
        for q in range(net_ptr[e], net_ptr[e + 1]):
            c = cmap[net_pin[q]]
            if tag[c] != e:
                tag[c] = e
                cpin[w] = c
                w += 1
        if w - start >= 2:
            kk += 1
            cptr[kk] = w
        else:
            w = start
    return cvw, cptr[:kk + 1].copy(), cpin[:w].copy()


@njit(cache=True)
def _bucket_insert(u, sd, b, head, nxt, prv):
    nxt[u] = head[sd, b]
    prv[u] = -1
    if head[sd, b] >= 0:
        prv[head[sd, b]] = u
    head[sd, b] = u


@njit(cache=True)
def _bucket_remove(u, sd, b, head, nxt, prv):
    if prv[u] >= 0:
        nxt[prv[u]] = nxt[u]
    else:
        head[sd, b] = nxt[u]
    if nxt[u] >= 0:
        prv[nxt[u]] = prv[u]


@njit(cache=True)
def _bump(u, delta, gain, side, head, nxt, prv, pmax, maxg):
    sd = side[u]
    _bucket_remove(u, sd, gain[u] + pmax, head, nxt, prv)
    gain[u] += delta
    b = gain[u] + pmax
    _bucket_insert(u, sd, b, head, nxt, prv)
    if b > maxg[sd]:
        maxg[sd] = b


@njit(cache=True)
def _pick(sd, head, nxt, maxg, vw, w0, lo, hi):
    """Highest-gain movable node on side ``sd`` respecting balance, or -1."""
    b = maxg[sd]
    scanned = 0
    while b >= 0:
        u = head[sd, b]
        if u < 0:
            if b == maxg[sd]:
                maxg[sd] -= 1
            b -= 1
            continue
        while u >= 0:
            if sd == 0:
                ok = w0 - vw[u] >= lo
            else:
                ok = w0 + vw[u] <= hi
            if ok:
                return u
            scanned += 1
            if scanned >= 32:
                return -1
            u = nxt[u]
        b -= 1
    return -1


@njit(cache=True)
def fm_refine(n, vw, net_ptr, net_pin, node_ptr, node_net, side, lo, hi, max_passes):
    """Fiduccia-Mattheyses passes on a 2-way split; ``side`` is updated in place.

    ``lo``/``hi`` bound the total weight of side 0.  Returns the cut size.
    """
    m = net_ptr.shape[0] - 1
    cnt = np.zeros((2, m), dtype=np.int64)
    for e in range(m):
        for q in range(net_ptr[e], net_ptr[e + 1]):
            cnt[side[net_pin[q]], e] += 1
    pmax = 0
    for v in range(n):
        d = node_ptr[v + 1] - node_ptr[v]
        if d > pmax:
            pmax = d
    nb = 2 * pmax + 1
    head = np.full((2, nb), -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    prv = np.full(n, -1, dtype=np.int64)
    gain = np.zeros(n, dtype=np.int64)
    locked = np.zeros(n, dtype=np.bool_)
    moves = np.empty(n, dtype=np.int64)
    maxg = np.zeros(2, dtype=np.int64)
    w0 = 0
    wtot = 0
    for v in range(n):
        wtot += vw[v]
        if side[v] == 0:
            w0 += vw[v]
    half = wtot / 2.0
    for _ in range(max_passes):
        head[:, :] = -1
        maxg[0] = -1
        maxg[1] = -1
        for v in range(n):
            s = side[v]
            g = 0
            for k in range(node_ptr[v], node_ptr[v + 1]):
                e = node_net[k]
                if cnt[s, e] == 1:
                    g += 1
                if cnt[1 - s, e] == 0:
                    g -= 1
            gain[v] = g
            locked[v] = False
            b = g + pmax
            _bucket_insert(v, s, b, head, nxt, prv)
            if b > maxg[s]:
                maxg[s] = b
        cum = 0
        best_cum = 0
        best_k = 0
        best_w0 = w0
        nmoves = 0
        while True:
            u0 = _pick(0, head, nxt, maxg, vw, w0, lo, hi)
            u1 = _pick(1, head, nxt, maxg, vw, w0, lo, hi)
            if u0 < 0 and u1 < 0:
                break
            if u1 < 0 or (u0 >= 0 and (gain[u0] > gain[u1] or (gain[u0] == gain[u1] and w0 > half))):
                v = u0
            else:
                v = u1
            fs = side[v]
            ts = 1 - fs
            _bucket_remove(v, fs, gain[v] + pmax, head, nxt, prv)
            locked[v] = True
            cum += gain[v]
            for k in range(node_ptr[v], node_ptr[v + 1]):
                e = node_net[k]
                a0, a1 = net_ptr[e], net_ptr[e + 1]
                tc = cnt[ts, e]
                if tc == 0:
                    for q in range(a0, a1):
                        u = net_pin[q]
                        if not locked[u]:
                            _bump(u, 1, gain, side, head, nxt, prv, pmax, maxg)
                elif tc == 1:
                    for q in range(a0, a1):
                        u = net_pin[q]
                        if side[u] == ts and not locked[u]:
                            _bump(u, -1, gain, side, head, nxt, prv, pmax, maxg)
                cnt[fs, e] -= 1
                cnt[ts, e] += 1
                fc = cnt[fs, e]
                if fc == 0:
                    for q in range(a0, a1):
                        u = net_pin[q]
                        if not locked[u]:
                            _bump(u, -1, gain, side, head, nxt, prv, pmax, maxg)
                elif fc == 1:
                    for q in range(a0, a1):
                        u = net_pin[q]
                        if side[u] == fs and not locked[u]:
                            _bump(u, 1, gain, side, head, nxt, prv, pmax, maxg)
            side[v] = ts
            w0 += vw[v] if ts == 0 else -vw[v]
            moves[nmoves] = v
            nmoves += 1
            if cum > best_cum or (cum == best_cum and abs(w0 - half) < abs(best_w0 - half)):
                best_cum = cum
                best_k = nmoves
                best_w0 = w0
        for r in range(nmoves - 1, best_k - 1, -1):
            v = moves[r]
            fs = side[v]
            ts = 1 - fs
            for k in range(node_ptr[v], node_ptr[v + 1]):
                e = node_net[k]
                cnt[fs, e] -= 1
                cnt[ts, e] += 1
            side[v] = ts
            w0 += vw[v] if ts == 0 else -vw[v]
        if best_cum <= 0:
            break
    cut = 0
    for e in range(m):
        if cnt[0, e] > 0 and cnt[1, e] > 0:
            cut += 1
    return cut


@njit(cache=True)
def grow_initial(n, vw, net_ptr, net_pin, node_ptr, node_net, seed):
    """Side 0 grown by BFS from a random node up to half the total weight."""
    side = np.ones(n, dtype=np.int64)
    visited = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    wtot = 0
    for v in range(n):
        wtot += vw[v]
    state = _lcg((seed * 2654435761 + 12345) & 0x7FFFFFFFFFFFFFFF)
    root = (state >> 17) % n
    w0 = 0
    qh, qt = 0, 0
    while 2 * w0 < wtot:
        if qh == qt:
            if qt == n:
                break
            while visited[root]:
                root = (root + 1) % n
            visited[root] = True
            queue[qt] = root
            qt += 1
        v = queue[qh]
        qh += 1
        if 2 * (w0 + vw[v]) > wtot + vw[v]:
            continue
        side[v] = 0
        w0 += vw[v]
        for k in range(node_ptr[v], node_ptr[v + 1]):
            e = node_net[k]
            if net_ptr[e + 1] - net_ptr[e] > BIG_NET:
                continue
            for q in range(net_ptr[e], net_ptr[e + 1]):
                u = net_pin[q]
                if not visited[u]:
                    visited[u] = True
                    queue[qt] = u
                    qt += 1
    return side


def balance_bounds(wtot: int) -> tuple[int, int]:
    """Side-0 weight window: 45-55% of ``wtot``, widened to the nearest halves
    when no integer fits (tiny blocks)."""
    lo = min(int(np.ceil(0.45 * wtot)), wtot // 2)
    hi = max(int(np.floor(0.55 * wtot)), (wtot + 1) // 2)
    return lo, hi


def _vcycle(n, net_ptr, net_pin, seed, starts, coarse_size, passes, init):
    vw = np.ones(n, dtype=np.int64)
    node_ptr, node_net = node_csr(n, net_ptr, net_pin)
    fixed = np.zeros(n, dtype=np.int64) if init is None else init
    stack = [(n, vw, net_ptr, net_pin, node_ptr, node_net, None, fixed)]
    level = 0
    while stack[-1][0] > coarse_size:
        cn, cvw, cptr, cpin, cnp, cnn, _, cfix = stack[-1]
        maxw = max(1, int(np.ceil(cvw.sum() / 40)))
        cmap, nc = coarsen(cn, cvw, cptr, cpin, cnp, cnn, seed + 31 * level, maxw, cfix)
        if nc > 0.92 * cn:
            break
        vw2, ptr2, pin2 = contract(cmap, nc, cvw, cptr, cpin)
        np2, nn2 = node_csr(nc, ptr2, pin2)
        fix2 = np.zeros(nc, dtype=np.int64)
        fix2[cmap] = cfix
        stack.append((nc, vw2, ptr2, pin2, np2, nn2, cmap, fix2))
        level += 1
    cn, cvw, cptr, cpin, cnp, cnn, _, cfix = stack[-1]
    wtot = int(cvw.sum())
    lo, hi = balance_bounds(wtot)
    if init is None:
        best, best_cut = None, -1
        for s in range(starts):
            side = grow_initial(cn, cvw, cptr, cpin, cnp, cnn, seed * 131 + s)
            cut = fm_refine(cn, cvw, cptr, cpin, cnp, cnn, side, lo, hi, passes)
            if best is None or cut < best_cut:
                best, best_cut = side, cut
        side = best
    else:
        side = cfix.copy()
        fm_refine(cn, cvw, cptr, cpin, cnp, cnn, side, lo, hi, passes)
    for k in range(len(stack) - 1, 0, -1):
        side = side[stack[k][6]]
        fn, fvw, fptr, fpin, fnp, fnn, _, _ = stack[k - 1]
        fm_refine(fn, fvw, fptr, fpin, fnp, fnn, side, lo, hi, passes)
    return side


def ml_bisect(n, net_ptr, net_pin, seed, starts=4, coarse_size=200, passes=8, cycles=VCYCLES):
    """Multilevel min-cut bisection of a local hypergraph with unit node weights.

    The first cycle coarsens freely and picks the best of ``starts`` initial
    splits; later cycles coarsen within the current sides and refine again.
    Returns a 0/1 side array; side 0 holds 45-55% of the nodes.
    """
    side = _vcycle(n, net_ptr, net_pin, seed, starts, coarse_size, passes, None)
    for c in range(1, cycles):
        side = _vcycle(n, net_ptr, net_pin, seed + 7 * c, starts, coarse_size, passes, side)
    return side




def cut_size(net_ptr, net_pin, side):
    if len(net_pin) == 0:
        return 0
    n0 = np.add.reduceat(side[net_pin] == 0, net_ptr[:-1])
    return int(((n0 > 0) & (n0 < np.diff(net_ptr))).sum())


def recursive_bisection(n_nodes, net_ptr, net_node, node_ptr, node_net, seed,
                        starts=4, min_size=4, max_levels=64):
    """Block label of every node at each recursion level (-1 once a block stops).

    Level 0 is the whole netlist; blocks smaller than ``min_size`` are not
    split further.
    """
    labels = []
    loc = np.full(n_nodes, -1, dtype=np.int64)
    net_stamp = np.zeros(len(net_ptr) - 1, dtype=np.int64)
    tag = np.full(n_nodes, -1, dtype=np.int64)
    blocks = [np.arange(n_nodes, dtype=np.int64)]
    stamp = 0
    for level in range(max_levels):
        if not blocks:
            break
        lab = np.full(n_nodes, -1, dtype=np.int64)
        for b, nodes in enumerate(blocks):
            lab[nodes] = b
        labels.append(lab)
        nxt = []
        for nodes in blocks:
            if len(nodes) < min_size:
                continue
            stamp += 1
            lptr, lpin = local_graph(nodes, n_nodes, net_ptr, net_node, node_ptr, node_net,
                                     loc, net_stamp, tag, stamp)
            side, best = None, -1
            for r in range(REPEATS):
                cand = ml_bisect(len(nodes), lptr, lpin, seed + 7919 * stamp + 104729 * r, starts)
                cut = cut_size(lptr, lpin, cand)
                if side is None or cut < best:
                    side, best = cand, cut
            nxt.append(nodes[side == 0])
            nxt.append(nodes[side == 1])
        blocks = nxt
    return np.array(labels)
