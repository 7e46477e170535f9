"""Parameter extraction and Rent's-rule analysis of netlists."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._random import SeededStream, derive_seed
from .netlist import Netlist, NetlistError, clock_nets, validate
from .partition import block_pins, bfs_order, recursive_bisection

PIN_MODELS = (1, 2, 3)
MEANS = ("arith", "geom")


@dataclass
class Incidence:
    """Pin-level hypergraph of a netlist without its clock nets.

    Node ``n_nodes`` is the outside world (PIs and POs).
    """

    n_nodes: int
    net_ptr: np.ndarray
    net_node: np.ndarray
    net_drv: np.ndarray
    node_ptr: np.ndarray
    node_net: np.ndarray
    net_ids: np.ndarray

    @classmethod
    def from_netlist(cls, nl: Netlist) -> "Incidence":
        n = nl.n_instances
        pin_inst = nl.pin_inst
        ptr = [0]
        nodes: list[int] = []
        drv: list[int] = []
        ids: list[int] = []
        clocks = clock_nets(nl)
        for net, sinks in enumerate(nl.net_sinks):
            if sinks is None or net in clocks:
                continue
            d = nl.net_driver[net]
            if d is None:
                drv.append(-1)
            else:
                drv.append(0)
                nodes.append(pin_inst[d] if d >= 0 else n)
            nodes.extend(pin_inst[p] for p in sinks)
            if nl.net_po[net] >= 0:
                nodes.append(n)
            ptr.append(len(nodes))
            ids.append(net)
        net_ptr = np.asarray(ptr, dtype=np.int64)
        net_node = np.asarray(nodes, dtype=np.int64)
        net_of = np.repeat(np.arange(len(ids), dtype=np.int64), np.diff(net_ptr))
        real = net_node < n
        pairs = np.unique(np.stack([net_node[real], net_of[real]]), axis=1) if real.any() \
            else np.zeros((2, 0), dtype=np.int64)
        counts = np.bincount(pairs[0], minlength=n)
        node_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=node_ptr[1:])
        return cls(n, net_ptr, net_node, np.asarray(drv, dtype=np.int64),
                   node_ptr, pairs[1].astype(np.int64), np.asarray(ids, dtype=np.int64))

    @property
    def n_nets(self) -> int:
        return len(self.net_ptr) - 1


class _Scratch:
    def __init__(self, inc: Incidence):
        self.mark = np.full(inc.n_nodes + 1, -1, dtype=np.int64)
        self.net_seen = np.full(inc.n_nets, -1, dtype=np.int64)
        self.tag = np.full(inc.n_nodes + 1, -1, dtype=np.int64)
        self.stamp = 0

    def next(self) -> int:
        self.stamp += 1
        return self.stamp


def count_block_pins(netlist, block, model: int, incidence: Incidence | None = None) -> int:
    """Pins of ``block`` (instance ids) under pin model 1, 2 or 3."""
    if model not in PIN_MODELS:
        raise ValueError(f"pin model must be one of {PIN_MODELS}")
    inc = incidence or Incidence.from_netlist(netlist)
    members = np.unique(np.asarray(list(block), dtype=np.int64))
    if len(members) and (members[0] < 0 or members[-1] >= inc.n_nodes):
        raise ValueError("block contains unknown instances")
    sc = _Scratch(inc)
    return int(block_pins(members, inc.n_nodes, inc.net_ptr, inc.net_node, inc.net_drv,
                          inc.node_ptr, inc.node_net, sc.mark, sc.next(), sc.net_seen, sc.tag, model))


def level_pins(inc: Incidence, labels: np.ndarray, model: int) -> np.ndarray:
    """Pin count of every block of one partition level.

    ``labels[v]`` is the block of node ``v`` (-1 when not in any block).
    """
    n_blocks = int(labels.max()) + 1 if len(labels) else 0
    lab = np.append(labels, -1)
    net_of = np.repeat(np.arange(inc.n_nets, dtype=np.int64), np.diff(inc.net_ptr))
    pl = lab[inc.net_node]
    if model == 2:
        pairs = np.unique(np.stack([net_of, pl]), axis=1)
        per_net = np.bincount(pairs[0], minlength=inc.n_nets)
        cross = per_net[pairs[0]] > 1
        sel = pairs[1][cross]
        return np.bincount(sel[sel >= 0], minlength=n_blocks)
    has_drv = inc.net_drv >= 0
    first = inc.net_ptr[:-1]
    drv_pos = first + np.where(has_drv, inc.net_drv, 0)
    is_drv = np.zeros(len(inc.net_node), dtype=bool)
    is_drv[drv_pos[has_drv]] = True
    sink = ~is_drv & has_drv[net_of]
    s_net = net_of[sink]
    s_node = inc.net_node[sink]
    if model == 3:
        pairs = np.unique(np.stack([s_net, s_node]), axis=1)
        s_net, s_node = pairs[0], pairs[1]
    d_lab = lab[inc.net_node[drv_pos[s_net]]]
    s_lab = lab[s_node]
    cross = d_lab != s_lab
    out = np.zeros(n_blocks, dtype=np.int64)
    for side in (d_lab[cross], s_lab[cross]):
        out += np.bincount(side[side >= 0], minlength=n_blocks)
    return out


@dataclass
class RentFit:
    samples: list[tuple[float, float]]
    k: float
    p: float
    region1_cutoff: float
    residual: float
    low_confidence: bool = False
    method: str = ""
    pin_model: int = 2
    mean: str = "arith"

    def as_dict(self) -> dict:
        return {
            "method": self.method, "pin_model": self.pin_model, "mean": self.mean,
            "k": self.k, "p": self.p, "residual": self.residual,
            "region1_cutoff": self.region1_cutoff, "low_confidence": self.low_confidence,
            "samples": [list(s) for s in self.samples],
        }


def _mean(values: np.ndarray, mode: str) -> float:
    if mode == "arith":
        return float(np.mean(values)) if len(values) else 0.0
    pos = values[values > 0]
    if len(pos) == 0:
        return 0.0
    return float(np.exp(np.mean(np.log(pos))))


def fit_rent(samples, cutoff: float) -> tuple[float, float, float, bool]:
    """Least squares of log T on log B over samples with ``1 < B <= cutoff``."""
    pts = [(b, t) for b, t in samples if 1 < b <= cutoff and t > 0]
    if len(pts) < 2:
        return float("nan"), float("nan"), float("nan"), True
    x = np.log([b for b, _ in pts])
    y = np.log([t for _, t in pts])
    if np.ptp(x) == 0:
        return float("nan"), float("nan"), float("nan"), True
    p, c = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (p * x + c)) ** 2)))
    return float(math.exp(c)), float(p), resid, len(pts) < 3


def _check(model, mean):
    if model not in PIN_MODELS:
        raise ValueError(f"pin model must be one of {PIN_MODELS}")
    if mean not in MEANS:
        raise ValueError(f"mean must be one of {MEANS}")


def rent_by_partitioning(netlist, model: int = 2, mean: str = "arith", r_ratio: float = 0.1,
                         seed: int = 0, starts: int = 4, incidence: Incidence | None = None,
                         min_size: int = 4) -> RentFit:
    """Rent fit from recursive min-cut bisection."""
    _check(model, mean)
    inc = incidence or Incidence.from_netlist(netlist)
    n = inc.n_nodes
    cutoff = r_ratio * n
    if n < 4:
        return RentFit([], float("nan"), float("nan"), cutoff, float("nan"), True,
                       "partition", model, mean)
    max_levels = int(math.ceil(math.log2(n))) + 2
    labels = recursive_bisection(n, inc.net_ptr, inc.net_node, inc.node_ptr, inc.node_net,
                                 int(derive_seed(seed, "fm") % (1 << 31)), starts,
                                 min_size, max_levels)
    samples = []
    for level in range(1, labels.shape[0]):
        lab = labels[level]
        if lab.max() < 0:
            break
        sizes = np.bincount(lab[lab >= 0])
        pins = level_pins(inc, lab, model)
        samples.append((float(sizes.mean()), _mean(pins.astype(float), mean)))
    k, p, resid, low = fit_rent(samples, cutoff)
    return RentFit(samples, k, p, cutoff, resid, low, "partition", model, mean)


def rent_by_traversal(netlist, model: int = 2, mean: str = "arith", r_ratio: float = 0.1,
                      samples: int = 32, seed: int = 0,
                      incidence: Incidence | None = None) -> RentFit:
    """Rent fit from BFS-grown clusters around random start instances."""
    _check(model, mean)
    inc = incidence or Incidence.from_netlist(netlist)
    n = inc.n_nodes
    cutoff = r_ratio * n
    if n < 2:
        return RentFit([], float("nan"), float("nan"), cutoff, float("nan"), True,
                       "bfs", model, mean)
    sizes = []
    s = 2
    while s <= max(cutoff, 2) and s <= n:
        sizes.append(s)
        s *= 2
    rng = SeededStream(derive_seed(seed, "bfs"))
    starts = rng.integers(0, n, size=samples)
    sc = _Scratch(inc)
    seen = np.full(n, -1, dtype=np.int64)
    per_size: dict[int, list[float]] = {s: [] for s in sizes}
    limit = sizes[-1]
    for st in starts:
        stamp = sc.next()
        order = bfs_order(int(st), limit, n, inc.net_ptr, inc.net_node, inc.node_ptr,
                          inc.node_net, seen, sc.net_seen, stamp)
        for s in sizes:
            if s > len(order):
                break
            t = block_pins(order[:s], n, inc.net_ptr, inc.net_node, inc.net_drv,
                           inc.node_ptr, inc.node_net, sc.mark, sc.next(), sc.net_seen, sc.tag, model)
            per_size[s].append(t)
    pts = []
    for s in sizes:
        vals = np.asarray(per_size[s], dtype=float)
        if len(vals):
            pts.append((float(s), _mean(vals, mean)))
    k, p, resid, low = fit_rent(pts, cutoff)
    return RentFit(pts, k, p, cutoff, resid, low, "bfs", model, mean)


# -- parameter extraction ------------------------------------------------

@dataclass
class ExtractedParams:
    n_inst: int
    n_net: int
    n_pi: int
    n_po: int
    n_macro: int
    n_ff: int
    t_avg: float
    s_ratio: float
    d_min: int | None
    d_max: int | None
    md_min: int | None
    md_max: int | None
    depth_histogram: dict[int, int] = field(default_factory=dict)
    cell_counts: dict[str, int] = field(default_factory=dict)
    rent: dict[str, RentFit] = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "rent"}
        out["depth_histogram"] = {str(k): v for k, v in sorted(self.depth_histogram.items())}
        out["cell_counts"] = dict(sorted(self.cell_counts.items()))
        out["rent"] = {k: v.as_dict() for k, v in self.rent.items()}
        return out


def logic_depths(nl: Netlist):
    """Longest and shortest combinational depth at every timing endpoint.

    Returns ``(long, short, macro_long, macro_short)`` lists; the macro
    lists cover paths that start or end at a macro pin.  Raises
    :class:`NetlistError` on a combinational loop.
    """
    n = nl.n_instances
    barrier = nl.barrier_mask()
    macro = np.array([nl.masters[m].is_macro for m in nl.inst_master], dtype=bool) if n else np.zeros(0, bool)
    pin_inst = nl.pin_inst
    # comb-to-comb edges and boundary-fed flags
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    fed_by_boundary = [False] * n
    fed_by_macro = [False] * n
    clocks = clock_nets(nl)
    for net, sinks in enumerate(nl.net_sinks):
        if sinks is None or net in clocks:
            continue
        d = nl.net_driver[net]
        d_inst = pin_inst[d] if d is not None and d >= 0 else -1
        comb_src = d_inst >= 0 and not barrier[d_inst]
        for p in sinks:
            s = pin_inst[p]
            if barrier[s]:
                continue
            if comb_src:
                succ[d_inst].append(s)
                indeg[s] += 1
            else:
                fed_by_boundary[s] = True
                if d_inst >= 0 and macro[d_inst]:
                    fed_by_macro[s] = True
    NEG = -(1 << 30)
    longest = [0] * n
    shortest = [1 << 30] * n
    mlong = [NEG] * n
    mshort = [1 << 30] * n
    for v in range(n):
        if barrier[v]:
            continue
        if fed_by_boundary[v]:
            shortest[v] = 1
        if fed_by_macro[v]:
            mlong[v] = 1
            mshort[v] = 1
    ready = [v for v in range(n) if not barrier[v] and indeg[v] == 0]
    for v in ready:
        longest[v] = 1
        if shortest[v] > 1:
            shortest[v] = 1
    done = 0
    k = 0
    while k < len(ready):
        v = ready[k]
        k += 1
        done += 1
        lv, sv, mlv, msv = longest[v], shortest[v], mlong[v], mshort[v]
        for u in succ[v]:
            if lv + 1 > longest[u]:
                longest[u] = lv + 1
            if sv + 1 < shortest[u]:
                shortest[u] = sv + 1
            if mlv + 1 > mlong[u]:
                mlong[u] = mlv + 1
            if msv + 1 < mshort[u]:
                mshort[u] = msv + 1
            indeg[u] -= 1
            if indeg[u] == 0:
                ready.append(u)
    n_comb = int(n - barrier.sum())
    if done != n_comb:
        raise NetlistError("combinational loop: depth undefined")
    long_d, short_d, mac_long, mac_short = [], [], [], []

    def endpoint(d, to_macro):
        if d is None or d < 0:
            long_d.append(0)
            short_d.append(0)
            if to_macro:
                mac_long.append(0)
                mac_short.append(0)
            return
        di = pin_inst[d]
        if barrier[di]:
            long_d.append(0)
            short_d.append(0)
            if to_macro or macro[di]:
                mac_long.append(0)
                mac_short.append(0)
            return
        long_d.append(longest[di])
        short_d.append(shortest[di])
        if to_macro:
            mac_long.append(longest[di])
            mac_short.append(shortest[di])
        elif mlong[di] > 0:
            mac_long.append(mlong[di])
            mac_short.append(mshort[di])

    for net, sinks in enumerate(nl.net_sinks):
        if sinks is None or net in clocks:
            continue
        d = nl.net_driver[net]
        for p in sinks:
            s = pin_inst[p]
            if barrier[s]:
                endpoint(d, bool(macro[s]))
        if nl.net_po[net] >= 0:
            endpoint(d, False)
    return long_d, short_d, mac_long, mac_short


def extract_params(netlist: Netlist, rent: tuple = (), r_ratio: float = 0.1, seed: int = 0,
                   check: bool = True) -> ExtractedParams:
    """Measure the parameter vector of ``netlist``.

    ``rent`` lists ``(method, pin_model, mean)`` triples to fit, with
    method ``"partition"`` or ``"bfs"``.
    """
    nl = netlist
    if check:
        bad = validate(nl)
        if bad:
            raise NetlistError(f"invalid netlist: {len(bad)} violations, first: {bad[0]}")
    n = nl.n_instances
    seq = nl.sequential_mask()
    n_macro = sum(1 for m in nl.inst_master if nl.masters[m].is_macro)
    clocks = clock_nets(nl)
    connected = 0
    for net, sinks in enumerate(nl.net_sinks):
        if sinks is None or net in clocks:
            continue
        d = nl.net_driver[net]
        connected += len(sinks) + (1 if d is not None and d >= 0 else 0)
    long_d, short_d, mac_long, mac_short = logic_depths(nl)
    hist = Counter(long_d)
    fits = {}
    if rent:
        inc = Incidence.from_netlist(nl)
        for method, model, mean in rent:
            key = f"{method}/type{model}/{mean}"
            if method == "partition":
                fits[key] = rent_by_partitioning(nl, model, mean, r_ratio, seed, incidence=inc)
            elif method == "bfs":
                fits[key] = rent_by_traversal(nl, model, mean, r_ratio, seed=seed, incidence=inc)
            else:
                raise ValueError(f"unknown Rent method {method!r}")
    return ExtractedParams(
        n_inst=n, n_net=nl.n_nets, n_pi=nl.n_pi, n_po=nl.n_po, n_macro=n_macro,
        n_ff=int(seq.sum()),
        t_avg=connected / n if n else 0.0,
        s_ratio=float(seq.sum()) / n if n else 0.0,
        d_min=min(short_d) if short_d else None,
        d_max=max(long_d) if long_d else None,
        md_min=min(mac_short) if mac_short else None,
        md_max=max(mac_long) if mac_long else None,
        depth_histogram=dict(hist),
        cell_counts=dict(nl.cell_counts()),
        rent=fits,
    )


# -- comparisons -----------------------------------------------------------

def _counts(x) -> dict[str, float]:
    if isinstance(x, Netlist):
        return dict(x.cell_counts())
    if isinstance(x, dict):
        return dict(x)
    return {k: v for k, v in x}


def cell_cosine_similarity(a, b) -> float:
    """Cosine similarity of two master-count vectors aligned by name."""
    ca, cb = _counts(a), _counts(b)
    names = sorted(set(ca) | set(cb))
    va = np.array([ca.get(k, 0) for k in names], dtype=float)
    vb = np.array([cb.get(k, 0) for k in names], dtype=float)
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise ValueError("zero cell distribution")
    return float(min(1.0, va @ vb / (na * nb)))


@dataclass
class ErrorMetrics:
    mape: float
    mae: float
    medae: float
    excluded: list[int] = field(default_factory=list)


def error_metrics(reference, candidate) -> ErrorMetrics:
    """MAPE (percent), MAE and MedAE; zero references are left out of MAPE."""
    ref = np.asarray(reference, dtype=float)
    cand = np.asarray(candidate, dtype=float)
    if ref.shape != cand.shape:
        raise ValueError("reference and candidate differ in length")
    if ref.size == 0:
        raise ValueError("empty vectors")
    err = np.abs(cand - ref)
    nz = ref != 0
    excluded = np.flatnonzero(~nz).tolist()
    mape = float(np.mean(err[nz] / np.abs(ref[nz])) * 100) if nz.any() else float("nan")
    return ErrorMetrics(mape, float(err.mean()), float(np.median(err)), excluded)


class RentEstimator(BaseEstimator):
    """Estimator-style wrapper over the two Rent fitters; ``fit`` sets ``k_``/``p_``."""

    def __init__(self, method="partition", pin_type=2, mean="arith", r_ratio=0.1,
                 samples=32, seed=0):
        self.method = method
        self.pin_type = pin_type
        self.mean = mean
        self.r_ratio = r_ratio
        self.samples = samples
        self.seed = seed

    def fit(self, netlist, y=None):
        if not isinstance(netlist, Netlist):
            raise TypeError(f"expected Netlist, got {type(netlist).__name__}")
        if self.method == "partition":
            fit = rent_by_partitioning(netlist, self.pin_type, self.mean, self.r_ratio, self.seed)
        elif self.method == "bfs":
            fit = rent_by_traversal(netlist, self.pin_type, self.mean, self.r_ratio,
                                    self.samples, self.seed)
        else:
            raise ValueError(f"method must be 'partition' or 'bfs', got {self.method!r}")
        self.fit_ = fit
        self.k_, self.p_ = fit.k, fit.p
        return self

    def predict(self, block_sizes):
        """Terminal counts predicted by the fitted law for ``block_sizes``."""
        return self.k_ * np.asarray(block_sizes, dtype=float) ** self.p_
