"""Net generation between sibling clusters, flip-flop insertion and
per-module orchestration.

Logic depth is controlled with static levels.  Every combinational
instance owns a level in ``[1, d_max]``; a net may only feed a pin whose
level is strictly greater than the driver's.  Sequential outputs, PIs and
inserted flip-flops sit at level 0 and sequential inputs at ``d_max + 1``,
so any combinational path between boundaries crosses at most ``d_max``
instances and no combinational loop can form.  In stub terms, an output
stub's upstream depth is its level and an input stub's downstream depth is
``d_max + 1 - level``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from ._random import SeededStream
from .netlist import CellMaster, Netlist
from .specio import CellLibrary, SpecParams, DEFAULT_INVENTORY


class TerminalBudget(NamedTuple):
    t_total: int
    i_count: int
    o_count: int


@dataclass(frozen=True)
class NetStub:
    """One open terminal of a cluster.

    ``anchor`` is an input pin id for input stubs and a net id for output
    stubs.
    """

    direction: str
    anchor: int
    up_depth: int = 0
    down_depth: int = 0


def sigma_t(size: int, sigma_p: float) -> float:
    # sigma_p == 0 means a deterministic terminal count
    return 0.0 if sigma_p == 0 else size ** sigma_p


# Bisection finds tighter small blocks than the randomly paired clusters of
# the merge tree, so the partition-measured exponent of a generated netlist
# runs above the budget exponent, more so for low p.  Budgets use a lowered
# exponent to compensate (fitted on 10k-50k instance runs).
RENT_BIAS_SLOPE = 0.19
RENT_BIAS_KNEE = 0.72


def budget_exponent(p: float) -> float:
    """Exponent used for terminal budgets when ``p`` is the target."""
    q = p - RENT_BIAS_SLOPE * max(0.0, RENT_BIAS_KNEE - p)
    return max(q, 0.5 * p)


def sample_io(size: int, params: SpecParams, rng: SeededStream) -> TerminalBudget:
    """Draw a terminal budget for a cluster of ``size`` instances."""
    if size < 1:
        raise ValueError("size must be >= 1")
    mu = params.t_avg * size ** params.p
    t = mu + sigma_t(size, params.sigma_p) * rng.normal()
    g = params.g_avg + params.sigma_g * rng.normal()
    t_total = max(2, round(t))
    g = min(max(g, 1e-9), 1.0 - 1e-9)
    o = round(t_total * g)
    o = min(max(o, 1), t_total - 1)
    return TerminalBudget(t_total, t_total - o, o)


def plan_net_counts(i_a: int, o_a: int, i_b: int, o_b: int, i_ab: int, o_ab: int):
    """Return ``(internal, external)`` net counts for merging A and B.

    Negative intermediate values are clamped to zero.
    """
    out_surplus = o_a + o_b - o_ab
    in_surplus = i_a + i_b - i_ab
    if out_surplus > in_surplus:
        internal = (out_surplus + in_surplus) // 2
    else:
        internal = out_surplus
    external = in_surplus - internal
    return max(internal, 0), max(external, 0)


def plan_ff_budget(size_a: int, ff_a: int, size_b: int, ff_b: int, s_ratio: float) -> int:
    """Flip-flops still owed by the merged cluster to reach ``s_ratio``."""
    return max(0, math.floor(s_ratio * (size_a + size_b) - (ff_a + ff_b) + 1e-9))


class SequentialQueue:
    """FIFO of flip-flop masters not yet placed."""

    def __init__(self, masters=()):
        self._q = deque(masters)

    def __len__(self):
        return len(self._q)

    def push(self, master: CellMaster) -> None:
        self._q.append(master)

    def pop(self) -> CellMaster:
        return self._q.popleft()


# -- inventory ---------------------------------------------------------

def apportion(total: int, weights: list[tuple[str, float]]) -> dict[str, int]:
    """Largest-remainder split of ``total`` by ``weights`` (ties by order)."""
    if total <= 0 or not weights:
        return {}
    wsum = sum(w for _, w in weights)
    if wsum <= 0:
        raise ValueError("weights must not all be zero")
    quotas = [(name, total * w / wsum) for name, w in weights]
    counts = {name: int(math.floor(q)) for name, q in quotas}
    left = total - sum(counts.values())
    order = sorted(range(len(quotas)), key=lambda k: (-(quotas[k][1] - math.floor(quotas[k][1])), k))
    for k in order[:left]:
        counts[quotas[k][0]] += 1
    return {k: v for k, v in counts.items() if v > 0}


def resolve_counts(params: SpecParams, library: CellLibrary) -> dict[str, int]:
    """Instance count per master for the module's own (non-submodule) cells."""
    own = params.own_instances
    inv = list(params.cell_inventory)
    for name, _ in inv:
        if name not in library:
            raise ValueError(f"inventory master {name!r} is not in the library")
    if params.inventory_mode == "counts" and inv:
        return {name: int(v) for name, v in inv if int(v) > 0}
    comb = [(n, w) for n, w in inv if not library[n].is_sequential and not library[n].is_macro]
    seq = [(n, w) for n, w in inv if library[n].is_sequential]
    mac = [(n, w) for n, w in inv if library[n].is_macro]
    if not comb:
        comb = [(n, w) for n, w in DEFAULT_INVENTORY if n in library and not library[n].is_sequential]
        if not comb:
            comb = [(m.name, 1.0) for m in library.combinational()]
    if not seq:
        seq = [(library.default_flipflop.name, 1.0)]
    n_macro = min(params.n_macro, own)
    if n_macro and not mac:
        mac = [(m.name, 1.0) for m in library if m.is_macro]
        if not mac:
            raise ValueError("n_macro > 0 but the library has no macro masters")
    n_ff = min(round(params.s_ratio * own), own - n_macro)
    n_comb = own - n_macro - n_ff
    counts: dict[str, int] = {}
    for total, group in ((n_comb, comb), (n_ff, seq), (n_macro, mac)):
        for name, c in apportion(total, group).items():
            counts[name] = counts.get(name, 0) + c
    return counts


def mean_signal_pins(counts: dict[str, int], library: CellLibrary) -> float:
    total = sum(counts.values())
    if total == 0:
        return 3.0
    return sum(library[n].n_signal_pins * c for n, c in counts.items()) / total


def resolve_params(params: SpecParams, library: CellLibrary) -> SpecParams:
    """Fill in ``t_avg``, ``n_pi`` and ``n_po`` (recursively) when unset."""
    subs = [(name, resolve_params(sp, library)) for name, sp in params.submodules]
    changes = {"submodules": subs}
    t_avg = params.t_avg
    if t_avg is None:
        t_avg = mean_signal_pins(resolve_counts(params, library), library)
        changes["t_avg"] = t_avg
    if params.n_pi is None or params.n_po is None:
        t = t_avg * params.n_inst ** params.p
        n_po = params.n_po if params.n_po is not None else max(1, round(t * params.g_avg))
        n_pi = params.n_pi if params.n_pi is not None else max(1, round(t * (1 - params.g_avg)))
        changes.update(n_pi=n_pi, n_po=n_po)
    return params.replace(**changes)


# -- generation --------------------------------------------------------

@dataclass
class GenerationReport:
    relaxations: int = 0
    clamped_counts: int = 0
    skipped_inputs: int = 0
    unmet_internal: int = 0
    ff_depth_rescue: int = 0
    ff_root_rescue: int = 0
    ff_budget: int = 0
    ff_leftover: int = 0
    ff_default: int = 0
    levels: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class _FFState:
    __slots__ = ("budget", "root", "qseq")

    def __init__(self, budget, root, qseq):
        self.budget = budget
        self.root = root
        self.qseq = qseq

    def can_insert(self) -> bool:
        return self.budget > 0 or (self.root and len(self.qseq) > 0)


class NetBuilder:
    """Shared state of one generation run: the netlist plus level tables."""

    def __init__(self, library: CellLibrary, name: str = "top", level_cap: int = 40):
        self.library = library
        self.nl = Netlist(name)
        self.lvl_in: list[int] = []   # per instance: level seen by its input pins
        self.net_lvl: list[int] = []  # per net: level of its driver
        self.clock_net = -1
        self.trace = None  # optional list of (size, open terminals, budget) per merge
        self.report = GenerationReport()
        self.cap = level_cap
        self._midx: dict[str, int] = {}
        self._ff_pins: dict[int, tuple] = {}

    def master_index(self, master: CellMaster) -> int:
        idx = self._midx.get(master.name)
        if idx is None:
            idx = self.nl.add_master(master)
            self._midx[master.name] = idx
        return idx

    def _clock(self) -> int:
        if self.clock_net < 0:
            self.clock_net = self.nl.add_net("clk")
            self.net_lvl.append(0)
        return self.clock_net

    def new_net(self, level: int) -> int:
        self.net_lvl.append(level)
        return self.nl.add_net()

    def place(self, master: CellMaster, module: int, out_level: int, in_level: int):
        """Create an instance; returns ``(inst, input pins, output nets)``."""
        nl = self.nl
        inst = nl.add_instance(self.master_index(master), module=module)
        self.lvl_in.append(in_level)
        base = nl.pin_base[inst]
        ins, outs = [], []
        for k, (_, direction) in enumerate(master.pins):
            pin = base + k
            if direction == "clock":
                nl.add_sink(self._clock(), pin)
            elif direction == "input":
                ins.append(pin)
            else:
                net = self.new_net(out_level)
                nl.set_driver(net, pin)
                outs.append(net)
        return inst, ins, outs

    def insert_ff(self, net: int, master: CellMaster, module: int) -> list[int]:
        """Put a flip-flop between ``net`` and its current driver.

        The old driver moves to a new net feeding the flip-flop's data pin,
        the flip-flop output takes over ``net`` with all its sinks.  Returns
        the flip-flop's remaining open input pins.
        """
        nl = self.nl
        layout = self._ff_pins.get(id(master))
        if layout is None:
            names = [n for n, _ in master.pins]
            ins = [k for k, (_, d) in enumerate(master.pins) if d == "input"]
            data = names.index("D") if "D" in names else ins[0]
            outs = [k for k, (_, d) in enumerate(master.pins) if d == "output"]
            clk = [k for k, (_, d) in enumerate(master.pins) if d == "clock"]
            layout = (data, [k for k in ins if k != data], outs[0], clk)
            self._ff_pins[id(master)] = layout
        data, extra, q, clk = layout
        inst = nl.add_instance(self.master_index(master), module=module)
        self.lvl_in.append(self.cap + 1)
        base = nl.pin_base[inst]
        for k in clk:
            nl.add_sink(self._clock(), base + k)
        old = nl.net_driver[net]
        net_d = self.new_net(self.net_lvl[net])
        nl.net_driver[net_d] = old
        if old is not None and old >= 0:
            nl.pin_net[old] = net_d
        nl.add_sink(net_d, base + data)
        nl.net_driver[net] = base + q
        nl.pin_net[base + q] = net
        self.net_lvl[net] = 0
        return [base + k for k in extra]


@dataclass
class ModuleResult:
    inputs: list[int]
    outputs: list[int]
    size: int
    ff_count: int
    relaxations: int = 0
    level_max: int = 0


def _instance_levels(counts, library, params, cap, rng):
    """Ordered (master, out_level, in_level) for every own leaf instance."""
    d_max = min(params.d_max, cap)
    comb, macros = [], []
    for name in sorted(counts):
        m = library[name]
        if m.is_sequential:
            continue
        (macros if m.is_macro else comb).extend([m] * counts[name])
    levels = rng.integers(1, d_max + 1, size=len(comb)).tolist()
    items = [(m, lv, lv) for m, lv in zip(comb, levels)]
    md_max = min(params.md_max, d_max)
    for m in macros:
        items.append((m, max(0, d_max - md_max), min(cap + 1, md_max + 1)))
    return items


def generate_module(builder: NetBuilder, params: SpecParams, module: int,
                    rng: SeededStream, root_budget: tuple[int, int]) -> ModuleResult:
    """Cluster and net-generate one module (submodules first, recursively)."""
    from .hier_cluster import SUBMODULE, SizePriorityQueue, cluster, levelize

    library = builder.library
    counts = resolve_counts(params, library)
    ff_masters = []
    for name in sorted(counts):
        if library[name].is_sequential:
            ff_masters.extend([library[name]] * counts[name])
    # interleave flip-flop kinds so the FIFO does not drain one master first
    ff_masters.sort(key=lambda m: m.name)
    if len({m.name for m in ff_masters}) > 1:
        order = rng.child("ffmix").uniform(len(ff_masters)).argsort(kind="stable")
        ff_masters = [ff_masters[k] for k in order]
    qseq = SequentialQueue(ff_masters)

    queue = SizePriorityQueue(rng.child("queue").seed)
    ins_of: dict[int, list[int]] = {}
    outs_of: dict[int, list[int]] = {}
    gsize: list[int] = []
    gff: list[int] = []

    for name, sub in params.submodules:
        sub_mod = builder.nl.add_module(name, module)
        res = generate_module(builder, sub, sub_mod, rng.child("sub", name), (sub.n_pi, sub.n_po))
        node = queue.add_leaf(res.size, len(res.inputs), len(res.outputs), SUBMODULE, name)
        ins_of[node], outs_of[node] = res.inputs, res.outputs
        gsize.append(res.size)
        gff.append(res.ff_count)
        builder.report.relaxations += res.relaxations

    for master, out_lv, in_lv in _instance_levels(counts, library, params, builder.cap, rng.child("levels")):
        _, ins, outs = builder.place(master, module, out_lv, in_lv)
        node = queue.add_leaf(1, len(ins), len(outs))
        ins_of[node], outs_of[node] = ins, outs
        gsize.append(1)
        gff.append(0)

    if queue.n_leaves == 0:
        # flip-flops only: chain them through the leftover path below
        res_in, res_out, size, ffs = [], [], 0, 0
        relax, level_max = 0, 0
    else:
        root = cluster(queue, params, rng.child("budget"), root_budget)
        tree = levelize(root)
        relax, level_max = queue.relaxations, tree.level_max
        builder.report.relaxations += relax
        gsize.extend([0] * (len(queue.size) - len(gsize)))
        gff.extend([0] * (len(queue.size) - len(gff)))
        generate_nets(tree, params, qseq, builder, module, ins_of, outs_of, gsize, gff)
        res_in, res_out = ins_of[root.id], outs_of[root.id]
        size, ffs = gsize[root.id], gff[root.id]

    # leftover flip-flops go on the deepest combinational nets of the module
    if len(qseq):
        nl = builder.nl
        net_lvl = builder.net_lvl
        cands = []
        for net, drv in enumerate(nl.net_driver):
            if drv is not None and drv >= 0 and net_lvl[net] > 0 \
                    and nl.inst_module[nl.pin_inst[drv]] == module:
                cands.append(net)
        cands.sort(key=lambda n: (-net_lvl[n], n))
        k = 0
        while len(qseq):
            master = qseq.pop()
            if k < len(cands):
                res_in.extend(builder.insert_ff(cands[k], master, module))
                k += 1
            else:
                # no combinational net left: the flip-flop becomes its own leaf
                _, ins, outs = builder.place(master, module, 0, builder.cap + 1)
                res_in.extend(ins)
                res_out.extend(outs)
            size += 1
            ffs += 1
            builder.report.ff_leftover += 1
    return ModuleResult(res_in, res_out, size, ffs, relax, level_max)


def generate_nets(tree, params: SpecParams, qseq: SequentialQueue, builder: NetBuilder,
                  module: int, ins_of, outs_of, gsize, gff) -> None:
    """Connect sibling clusters bottom-up, deepest tree level first.

    ``ins_of``/``outs_of`` map node id to open input pins / output nets and
    are updated in place; children entries are dropped once merged.
    """
    q = tree.queue
    n_leaves = q.n_leaves
    root_id = tree.root.id
    s_ratio = params.s_ratio
    report = builder.report
    pin_net = builder.nl.pin_net
    for level, nodes in tree.internal_nodes_by_level():
        for node in nodes:
            j = node - n_leaves
            a, b = q.right[j], q.left[j]   # A is the right child
            ia, oa = ins_of.pop(a), outs_of.pop(a)
            ib, ob = ins_of.pop(b), outs_of.pop(b)
            i_ab, o_ab = q.i_count[node], q.o_count[node]
            out_s = len(oa) + len(ob) - o_ab
            in_s = len(ia) + len(ib) - i_ab
            internal, external = plan_net_counts(len(ia), len(oa), len(ib), len(ob), i_ab, o_ab)
            if out_s < 0 or in_s < 0 or in_s - internal < 0:
                report.clamped_counts += 1
            budget = plan_ff_budget(gsize[a], gff[a], gsize[b], gff[b], s_ratio)
            ff = _FFState(budget, node == root_id, qseq)
            new_ins: list[int] = []
            want = internal + external
            made, added = _connect(builder, module, oa, ob, ia, ib, want, ff, new_ins)
            if made < want:
                report.skipped_inputs += want - made
            ins = [p for p in ia if pin_net[p] == -1]
            ins += [p for p in ib if pin_net[p] == -1]
            outs = _close_outputs(builder, oa + ob, internal, report)
            # spend what is left of the budget on open outputs
            while ff.budget > 0 and len(qseq):
                net = _deepest_comb(builder.net_lvl, outs)
                if net < 0:
                    break
                new_ins.extend(builder.insert_ff(net, qseq.pop(), module))
                ff.budget -= 1
                added += 1
                report.ff_budget += 1
            ins.extend(new_ins)
            if builder.trace is not None:
                builder.trace.append((gsize[a] + gsize[b], len(ins), len(outs), i_ab, o_ab))
            ins_of[node], outs_of[node] = ins, outs
            gsize[node] = gsize[a] + gsize[b] + added
            gff[node] = gff[a] + gff[b] + added
        report.levels[level] = report.levels.get(level, 0) + len(nodes)


def _connect(builder, module, oa, ob, ia, ib, want, ff, new_ins):
    """Make up to ``want`` connections, alternating A->B and B->A.

    Returns ``(connections made, flip-flops inserted)``.
    """
    if want <= 0:
        return 0, 0
    ab = _Matcher(builder, oa, ib)
    ba = _Matcher(builder, ob, ia)
    made = 0
    added = 0
    live = [ab, ba]
    turn = 0
    while made < want and live:
        m = live[turn % len(live)]
        r = m.step(ff, module, new_ins)
        if r < 0:
            live.remove(m)
            continue
        made += 1
        added += r
        turn += 1
    return made, added


class _Matcher:
    """Feeds the input pins of one cluster from the output nets of its sibling.

    Inputs are served lowest level first (most constrained).  Each takes the
    highest-level eligible net that has no sinks yet, otherwise the eligible
    nets with sinks are reused round-robin.
    """

    __slots__ = ("b", "outs", "ins", "ip", "op", "hi", "fresh", "used", "rr")

    def __init__(self, builder, outs, ins):
        self.b = builder
        net_lvl = builder.net_lvl
        lvl_in = builder.lvl_in
        pin_inst = builder.nl.pin_inst
        self.outs = sorted(outs, key=net_lvl.__getitem__)
        self.ins = sorted(ins, key=lambda p: lvl_in[pin_inst[p]])
        self.ip = 0
        self.op = 0
        self.hi = len(self.outs)
        self.fresh: list[int] = []
        self.used: list[int] = []
        self.rr = 0

    def step(self, ff, module, new_ins) -> int:
        """One connection; returns flip-flops inserted (0/1), or -1 when done."""
        b = self.b
        nl = b.nl
        net_lvl, sinks = b.net_lvl, nl.net_sinks
        lvl_in, pin_inst = b.lvl_in, nl.pin_inst
        outs, fresh, used = self.outs, self.fresh, self.used
        while self.ip < len(self.ins):
            pin = self.ins[self.ip]
            self.ip += 1
            lv = lvl_in[pin_inst[pin]]
            while self.op < self.hi and net_lvl[outs[self.op]] < lv:
                n = outs[self.op]
                (used if sinks[n] else fresh).append(n)
                self.op += 1
            inserted = 0
            if fresh:
                net = fresh.pop()
                used.append(net)
            elif used:
                net = used[self.rr % len(used)]
                self.rr += 1
            elif self.op < self.hi and ff.can_insert():
                self.hi -= 1
                net = outs[self.hi]
                master = _take_ff(b, ff)
                new_ins.extend(b.insert_ff(net, master, module))
                used.append(net)
                inserted = 1
            else:
                continue
            nl.add_sink(net, pin)
            return inserted
        return -1


def _take_ff(builder, ff) -> CellMaster:
    report = builder.report
    if ff.budget > 0:
        ff.budget -= 1
        report.ff_depth_rescue += 1
    else:
        report.ff_root_rescue += 1
    if len(ff.qseq):
        return ff.qseq.pop()
    report.ff_default += 1
    return builder.library.default_flipflop


def _close_outputs(builder, outs, internal, report) -> list[int]:
    """Turn ``internal`` used outputs into internal nets, highest level first."""
    if internal <= 0:
        return outs
    sinks = builder.nl.net_sinks
    net_lvl = builder.net_lvl
    cands = [n for n in outs if sinks[n]]
    if len(cands) < internal:
        report.unmet_internal += internal - len(cands)
    cands.sort(key=lambda n: (-net_lvl[n], n))
    closed = set(cands[:internal])
    return [n for n in outs if n not in closed]


def _deepest_comb(net_lvl, outs) -> int:
    best, best_lv = -1, 0
    for n in outs:
        lv = net_lvl[n]
        if lv > best_lv or (lv == best_lv and lv > 0 and n < best):
            best, best_lv = n, lv
    return best
