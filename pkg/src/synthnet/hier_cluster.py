"""Bottom-up binary clustering under the Rent's-rule combining constraint.

Clusters live in a :class:`SizePriorityQueue` backed by flat per-node
arrays; leaves are numbered first, merged nodes after them.  ``cluster``
pops pairs, tests the combining constraint and either merges them or puts
both back behind their same-size peers with a doubled diversity weight.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from ._random import SeededStream, splitmix64
from .netgen import sample_io
from .specio import SpecParams

LEAF_INSTANCE = "leaf-instance"
SUBMODULE = "submodule"
MERGED = "merged"
# smallest alpha used once a pair has failed, so alpha = 0 can still relax
RELAX_FLOOR = 0.05


def max_terminals(size: int, params: SpecParams, relax: float = 1.0) -> float:
    """Largest terminal count a cluster of ``size`` may carry into a merge.

    ``T_avg * size**p + alpha * sigma_T * size**sigma_p`` with
    ``sigma_T = size**sigma_p``; ``relax`` scales the alpha term.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    if params.t_avg is None:
        raise ValueError("t_avg must be resolved before clustering")
    spread = size ** params.sigma_p
    return params.t_avg * size ** params.p + relax * params.alpha * spread * size ** params.sigma_p


@dataclass(frozen=True)
class Cluster:
    """Read-only view of one node of a clustering."""

    queue: "SizePriorityQueue"
    id: int

    @property
    def size(self) -> int:
        return self.queue.size[self.id]

    @property
    def terminals(self) -> int:
        return self.queue.terminals[self.id]

    @property
    def i_count(self) -> int:
        return self.queue.i_count[self.id]

    @property
    def o_count(self) -> int:
        return self.queue.o_count[self.id]

    @property
    def kind(self) -> str:
        q = self.queue
        if self.id >= q.n_leaves:
            return MERGED
        return q.kinds[self.id]

    @property
    def children(self) -> tuple["Cluster", "Cluster"] | tuple:
        q = self.queue
        if self.id < q.n_leaves:
            return ()
        j = self.id - q.n_leaves
        return (Cluster(q, q.left[j]), Cluster(q, q.right[j]))

    @property
    def left(self):
        return self.children[0] if self.children else None

    @property
    def right(self):
        return self.children[1] if self.children else None

    def leaves(self) -> list[int]:
        out, stack = [], [self.id]
        q = self.queue
        while stack:
            n = stack.pop()
            if n < q.n_leaves:
                out.append(n)
            else:
                j = n - q.n_leaves
                stack.append(q.right[j])
                stack.append(q.left[j])
        return out


class SizePriorityQueue:
    """Min-queue on (size, retry round, seeded hash of id).

    Leaves must all be added before :func:`cluster` runs.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._salt = splitmix64(self.seed)
        self.size: list[int] = []
        self.terminals: list[int] = []
        self.i_count: list[int] = []
        self.o_count: list[int] = []
        self.kinds: list[str] = []
        self.payload: list = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.relaxed: list[bool] = []
        self.n_leaves = 0
        self.relaxations = 0
        self._heap: list[tuple[int, int, int, int]] = []
        self._sealed = False

    def key(self, node: int) -> int:
        return splitmix64(self._salt ^ node)

    def add_leaf(self, size: int, i_count: int, o_count: int,
                 kind: str = LEAF_INSTANCE, payload=None) -> int:
        if self._sealed:
            raise RuntimeError("cannot add leaves after clustering started")
        node = len(self.size)
        self.size.append(int(size))
        self.terminals.append(int(i_count) + int(o_count))
        self.i_count.append(int(i_count))
        self.o_count.append(int(o_count))
        self.kinds.append(kind)
        self.payload.append(payload)
        self.n_leaves += 1
        heapq.heappush(self._heap, (int(size), 0, self.key(node), node))
        return node

    def __len__(self) -> int:
        return len(self._heap)

    def dequeue(self) -> int:
        return heapq.heappop(self._heap)[3]

    def cluster_view(self, node: int) -> Cluster:
        return Cluster(self, node)


def cluster(queue: SizePriorityQueue, params: SpecParams, rng: SeededStream | None = None,
            root_budget: tuple[int, int] | None = None) -> Cluster:
    """Merge the queue down to a single root cluster and return it.

    Each merge samples the merged cluster's terminal budget; ``root_budget``
    overrides the sample for the final merge.  A pair failing the combining
    constraint goes back in the queue; every failure doubles the alpha
    weight (at least ``RELAX_FLOOR``) for the clusters involved, so the loop
    always terminates.
    """
    if len(queue) == 0:
        raise ValueError("empty queue")
    if rng is None:
        rng = SeededStream(queue.seed)
    queue._sealed = True
    heap = queue._heap
    size, terms = queue.size, queue.terminals
    i_cnt, o_cnt = queue.i_count, queue.o_count
    left, right, relaxed = queue.left, queue.right, queue.relaxed
    n_leaves = queue.n_leaves
    fails = [0] * len(size)
    salt = queue._salt
    t_avg, p, sp, alpha = params.t_avg, params.p, params.sigma_p, params.alpha
    if t_avg is None:
        raise ValueError("t_avg must be resolved before clustering")
    heappop, heappush = heapq.heappop, heapq.heappush
    while len(heap) > 1:
        sa, ra, _, a = heappop(heap)
        sb, rb, _, b = heappop(heap)
        fa, fb = fails[a], fails[b]
        f = max(fa, fb)
        weight = alpha if f == 0 else max(alpha, RELAX_FLOOR) * (1 << f)
        max_b = t_avg * sb ** p + weight * sb ** (2 * sp)
        max_a = t_avg * sa ** p + weight * sa ** (2 * sp)
        if terms[a] > max_b or terms[b] > max_a:
            fails[a] = fa + 1
            fails[b] = fb + 1
            queue.relaxations += 1
            heappush(heap, (sa, ra + 1, splitmix64(salt ^ a), a))
            heappush(heap, (sb, rb + 1, splitmix64(salt ^ b), b))
            continue
        node = len(size)
        s = sa + sb
        if len(heap) == 0 and root_budget is not None:
            ic, oc = root_budget
        else:
            budget = sample_io(s, params, rng)
            ic, oc = budget.i_count, budget.o_count
        size.append(s)
        terms.append(ic + oc)
        i_cnt.append(ic)
        o_cnt.append(oc)
        left.append(b)
        right.append(a)
        relaxed.append(fa > 0 or fb > 0)
        fails.append(0)
        heappush(heap, (s, 0, splitmix64(salt ^ node), node))
    root = heap[0][3]
    return Cluster(queue, root)


@dataclass
class HierTree:
    """Levelized hierarchy: ``depth[n]`` per node, every leaf at ``level_max``."""

    root: Cluster
    depth: np.ndarray
    level_max: int

    @property
    def queue(self) -> SizePriorityQueue:
        return self.root.queue

    def internal_nodes_by_level(self):
        """Yield ``(level, nodes)`` from ``level_max - 1`` up to the root."""
        q = self.queue
        n_leaves = q.n_leaves
        depth = self.depth[n_leaves:]
        if len(depth) == 0:
            return
        order = np.argsort(-depth, kind="stable")
        sorted_depth = depth[order]
        bounds = np.flatnonzero(np.diff(sorted_depth)) + 1
        for chunk in np.split(order, bounds):
            yield int(depth[chunk[0]]), (chunk + n_leaves).tolist()

    @property
    def levels(self) -> list[list[int]]:
        """Node ids per level; a shallow leaf repeats on each padded level."""
        out = [[] for _ in range(self.level_max + 1)]
        q = self.queue
        for node in range(len(q.size)):
            d = int(self.depth[node])
            if node < q.n_leaves:
                for lv in range(d, self.level_max + 1):
                    out[lv].append(node)
            else:
                out[d].append(node)
        return out

    def leaf_levels(self) -> list[int]:
        """Padded level of every leaf (always ``level_max``)."""
        return [self.level_max] * self.queue.n_leaves


def levelize(root: Cluster) -> HierTree:
    q = root.queue
    depth = np.zeros(len(q.size), dtype=np.int64)
    n_leaves = q.n_leaves
    stack = [root.id]
    leaf_max = 0
    while stack:
        n = stack.pop()
        d = depth[n]
        if n < n_leaves:
            if d > leaf_max:
                leaf_max = d
            continue
        j = n - n_leaves
        for c in (q.left[j], q.right[j]):
            depth[c] = d + 1
            stack.append(c)
    return HierTree(root, depth, int(leaf_max))
