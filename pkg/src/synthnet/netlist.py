"""Gate-level netlist data model and structural validity checks.

A :class:`Netlist` is a hypergraph of instances (each bound to a
:class:`CellMaster`) connected by single-driver nets.  Pins get a dense
global numbering: pin ``pin_base[i] + k`` is the ``k``-th pin of instance
``i`` in master pin order.  Net drivers are encoded as ints: a
non-negative value is an instance pin, ``-(k + 1)`` is primary input ``k``.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

INPUT = "input"
OUTPUT = "output"
CLOCK = "clock"
DIRECTIONS = (INPUT, OUTPUT, CLOCK)

VIOLATION_CATEGORIES = (
    "multi-driver",
    "dangling net",
    "floating input",
    "combinational loop",
    "disconnected instance",
)


class NetlistError(ValueError):
    """Raised on structurally impossible edits or malformed netlists."""


@dataclass(frozen=True)
class CellMaster:
    """A library cell: ordered pins with directions plus class flags."""

    name: str
    pins: tuple[tuple[str, str], ...]
    is_sequential: bool = False
    is_macro: bool = False
    input_pins: tuple[int, ...] = field(init=False, repr=False, compare=False)
    output_pins: tuple[int, ...] = field(init=False, repr=False, compare=False)
    clock_pins: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pins = tuple((str(n), str(d)) for n, d in self.pins)
        object.__setattr__(self, "pins", pins)
        if not pins:
            raise NetlistError(f"master {self.name!r} has no pins")
        names = [n for n, _ in pins]
        if len(set(names)) != len(names):
            raise NetlistError(f"master {self.name!r} has duplicate pin names")
        for n, d in pins:
            if d not in DIRECTIONS:
                raise NetlistError(f"pin {self.name}.{n}: bad direction {d!r}")
        clocks = tuple(k for k, (_, d) in enumerate(pins) if d == CLOCK)
        if self.is_sequential and len(clocks) != 1:
            raise NetlistError(
                f"sequential master {self.name!r} needs exactly one clock pin")
        object.__setattr__(
            self, "input_pins", tuple(k for k, (_, d) in enumerate(pins) if d == INPUT))
        object.__setattr__(
            self, "output_pins", tuple(k for k, (_, d) in enumerate(pins) if d == OUTPUT))
        object.__setattr__(self, "clock_pins", clocks)

    @property
    def is_barrier(self) -> bool:
        """True when the cell breaks combinational timing paths."""
        return self.is_sequential or self.is_macro

    @property
    def n_signal_pins(self) -> int:
        return len(self.input_pins) + len(self.output_pins)

    def pin_index(self, pin_name: str) -> int:
        for k, (n, _) in enumerate(self.pins):
            if n == pin_name:
                return k
        raise KeyError(f"{self.name} has no pin {pin_name!r}")


@dataclass(frozen=True)
class Violation:
    category: str
    detail: str


class Netlist:
    """Mutable flat netlist with optional module tags for hierarchy.

    Hierarchy is recorded per instance (``inst_module``) against the module
    table ``modules`` (``(name, parent)`` pairs, index 0 is the top module).
    """

    def __init__(self, name: str = "top"):
        self.name = name
        self.masters: list[CellMaster] = []
        self._master_index: dict[str, int] = {}
        self.inst_master: list[int] = []
        self.inst_names: list[str | None] = []
        self.inst_module: list[int] = []
        self.modules: list[tuple[str, int]] = [(name, -1)]
        self.pin_base: list[int] = []
        self.pin_inst: list[int] = []
        self.pin_net: list[int] = []
        self.net_names: list[str | None] = []
        self.net_driver: list[int | None] = []
        self.net_sinks: list[list[int] | None] = []
        self.net_po: list[int] = []
        self.pi_names: list[str] = []
        self.pi_net: list[int] = []
        self.po_names: list[str] = []
        self.po_net: list[int] = []
        self.clock_pi = -1

    # -- construction -------------------------------------------------
    def add_master(self, master: CellMaster) -> int:
        idx = self._master_index.get(master.name)
        if idx is not None:
            if self.masters[idx] != master:
                raise NetlistError(f"conflicting definitions of master {master.name!r}")
            return idx
        self._master_index[master.name] = len(self.masters)
        self.masters.append(master)
        return len(self.masters) - 1

    def master_id(self, name: str) -> int:
        return self._master_index[name]

    def add_module(self, name: str, parent: int = 0) -> int:
        self.modules.append((name, parent))
        return len(self.modules) - 1

    def add_instance(self, master: int | CellMaster, name: str | None = None,
                     module: int = 0) -> int:
        if isinstance(master, CellMaster):
            master = self.add_master(master)
        inst = len(self.inst_master)
        self.inst_master.append(master)
        self.inst_names.append(name)
        self.inst_module.append(module)
        base = len(self.pin_net)
        self.pin_base.append(base)
        npins = len(self.masters[master].pins)
        self.pin_inst.extend([inst] * npins)
        self.pin_net.extend([-1] * npins)
        return inst

    def add_net(self, name: str | None = None) -> int:
        self.net_names.append(name)
        self.net_driver.append(None)
        self.net_sinks.append([])
        self.net_po.append(-1)
        return len(self.net_driver) - 1

    def set_driver(self, net: int, pin: int) -> None:
        if self.net_driver[net] is not None:
            raise NetlistError(f"net {self.net_name(net)} already has a driver")
        self.net_driver[net] = pin
        if pin >= 0:
            self.pin_net[pin] = net

    def add_sink(self, net: int, pin: int) -> None:
        if self.pin_net[pin] != -1:
            raise NetlistError(f"pin {self.pin_label(pin)} is already connected")
        self.net_sinks[net].append(pin)
        self.pin_net[pin] = net

    def remove_sink(self, net: int, pin: int) -> None:
        self.net_sinks[net].remove(pin)
        self.pin_net[pin] = -1

    def add_pi(self, name: str, net: int | None = None, clock: bool = False) -> int:
        k = len(self.pi_names)
        if net is None:
            net = self.add_net()
        self.pi_names.append(name)
        self.pi_net.append(net)
        self.set_driver(net, -(k + 1))
        if clock:
            self.clock_pi = k
        return k

    def add_po(self, name: str, net: int) -> int:
        if self.net_po[net] != -1:
            raise NetlistError(f"net {self.net_name(net)} already feeds a PO")
        k = len(self.po_names)
        self.po_names.append(name)
        self.po_net.append(net)
        self.net_po[net] = k
        return k

    def remove_po(self, k: int) -> None:
        net = self.po_net[k]
        self.net_po[net] = -1
        self.po_net[k] = -1

    def remove_pi(self, k: int) -> None:
        """Drop primary input ``k`` together with its (now sinkless) net."""
        net = self.pi_net[k]
        if self.net_sinks[net] or self.net_po[net] != -1:
            raise NetlistError("cannot remove a PI whose net still has sinks")
        self.net_driver[net] = None
        self.net_sinks[net] = None
        self.pi_net[k] = -1

    # -- queries --------------------------------------------------------
    @property
    def n_instances(self) -> int:
        return len(self.inst_master)

    @property
    def n_nets(self) -> int:
        return sum(1 for s in self.net_sinks if s is not None)

    def live_nets(self):
        return (n for n, s in enumerate(self.net_sinks) if s is not None)

    def live_pis(self, include_clock: bool = False) -> list[int]:
        return [k for k, n in enumerate(self.pi_net)
                if n >= 0 and (include_clock or k != self.clock_pi)]

    def live_pos(self) -> list[int]:
        return [k for k, n in enumerate(self.po_net) if n >= 0]

    @property
    def n_pi(self) -> int:
        return len(self.live_pis())

    @property
    def n_po(self) -> int:
        return len(self.live_pos())

    def master_of(self, inst: int) -> CellMaster:
        return self.masters[self.inst_master[inst]]

    def instance_name(self, inst: int) -> str:
        name = self.inst_names[inst]
        return name if name is not None else f"inst_{inst}"

    def net_name(self, net: int) -> str:
        name = self.net_names[net]
        if name is not None:
            return name
        drv = self.net_driver[net]
        if drv is not None and drv < 0:
            return self.pi_names[-drv - 1]
        if self.net_po[net] >= 0:
            return self.po_names[self.net_po[net]]
        return f"net_{net}"

    def pin_direction(self, pin: int) -> str:
        inst = self.pin_inst[pin]
        return self.masters[self.inst_master[inst]].pins[pin - self.pin_base[inst]][1]

    def pin_name(self, pin: int) -> str:
        inst = self.pin_inst[pin]
        return self.masters[self.inst_master[inst]].pins[pin - self.pin_base[inst]][0]

    def pin_label(self, pin: int) -> str:
        return f"{self.instance_name(self.pin_inst[pin])}.{self.pin_name(pin)}"

    def is_clock_net(self, net: int) -> bool:
        drv = self.net_driver[net]
        if drv is not None and drv < 0 and -drv - 1 == self.clock_pi:
            return True
        sinks = self.net_sinks[net]
        return bool(sinks) and all(self.pin_direction(p) == CLOCK for p in sinks)

    def cell_counts(self) -> Counter:
        return Counter(self.masters[m].name for m in self.inst_master)

    def sequential_mask(self) -> np.ndarray:
        seq = np.array([m.is_sequential for m in self.masters], dtype=bool)
        return seq[np.asarray(self.inst_master, dtype=np.int64)] if self.inst_master \
            else np.zeros(0, dtype=bool)

    def barrier_mask(self) -> np.ndarray:
        bar = np.array([m.is_barrier for m in self.masters], dtype=bool)
        return bar[np.asarray(self.inst_master, dtype=np.int64)] if self.inst_master \
            else np.zeros(0, dtype=bool)

    def copy(self) -> "Netlist":
        other = Netlist.__new__(Netlist)
        for key, value in self.__dict__.items():
            if isinstance(value, list):
                value = list(value)
            elif isinstance(value, dict):
                value = dict(value)
            other.__dict__[key] = value
        other.net_sinks = [None if s is None else list(s) for s in self.net_sinks]
        return other

    def edges(self):
        """Yield ``(driver_inst, sink_inst)`` for instance-to-instance connections.

        Clock nets are skipped.
        """
        for net, sinks in enumerate(self.net_sinks):
            if not sinks:
                continue
            drv = self.net_driver[net]
            if drv is None or drv < 0:
                continue
            d = self.pin_inst[drv]
            for s in sinks:
                if self.pin_direction(s) != CLOCK:
                    yield d, self.pin_inst[s]

    def __repr__(self):
        return (f"Netlist({self.name!r}, instances={self.n_instances}, "
                f"nets={self.n_nets}, pi={self.n_pi}, po={self.n_po})")


def clock_nets(netlist: Netlist) -> set[int]:
    """Nets driven by a PI that feed only clock pins, plus the designated clock."""
    nl = netlist
    out = set()
    for k, net in enumerate(nl.pi_net):
        if net >= 0 and (k == nl.clock_pi or nl.is_clock_net(net)):
            out.add(net)
    return out


def check_netlist(netlist) -> Netlist:
    """Input validation in the spirit of ``sklearn.utils.check_array``."""
    if not isinstance(netlist, Netlist):
        raise TypeError(f"expected a Netlist, got {type(netlist).__name__}")
    if netlist.n_instances == 0:
        raise ValueError("netlist has no instances")
    return netlist


def comb_graph(netlist: Netlist) -> sparse.csr_matrix:
    """Adjacency of driver->sink edges leaving combinational instances only."""
    n = netlist.n_instances
    barrier = netlist.barrier_mask()
    rows, cols = [], []
    for d, s in netlist.edges():
        if not barrier[d] and not barrier[s]:
            rows.append(d)
            cols.append(s)
    data = np.ones(len(rows), dtype=np.int8)
    return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


def validate(netlist: Netlist) -> list[Violation]:
    """Return every structural violation; an empty list means valid."""
    out: list[Violation] = []
    nl = netlist
    for net, sinks in enumerate(nl.net_sinks):
        if sinks is None:
            continue
        drivers = 0 if nl.net_driver[net] is None else 1
        drivers += sum(1 for p in sinks if nl.pin_direction(p) == OUTPUT)
        if drivers != 1:
            out.append(Violation("multi-driver",
                                 f"net {nl.net_name(net)} has {drivers} drivers"))
        if not sinks and nl.net_po[net] < 0:
            out.append(Violation("dangling net", f"net {nl.net_name(net)} has no sinks"))
    for inst in range(nl.n_instances):
        base = nl.pin_base[inst]
        master = nl.master_of(inst)
        connected = False
        for k, (pname, d) in enumerate(master.pins):
            if nl.pin_net[base + k] >= 0:
                connected = True
            elif d != OUTPUT:
                out.append(Violation("floating input",
                                     f"{nl.instance_name(inst)}.{pname} is unconnected"))
        if not connected:
            out.append(Violation("disconnected instance",
                                 f"{nl.instance_name(inst)} has no connections"))
    out.extend(_loop_violations(nl))
    return out


def _loop_violations(nl: Netlist) -> list[Violation]:
    graph = comb_graph(nl)
    if graph.nnz == 0:
        return []
    ncomp, labels = connected_components(graph, directed=True, connection="strong")
    sizes = np.bincount(labels, minlength=ncomp)
    loops = []
    for comp in np.flatnonzero(sizes > 1):
        members = np.flatnonzero(labels == comp)
        names = ", ".join(nl.instance_name(i) for i in members[:5])
        loops.append(Violation("combinational loop",
                               f"cycle through {len(members)} instances ({names})"))
    diag = graph.diagonal()
    for inst in np.flatnonzero(diag):
        if sizes[labels[inst]] == 1:
            loops.append(Violation("combinational loop",
                                   f"{nl.instance_name(inst)} feeds itself"))
    return loops


def canonical_form(netlist: Netlist, hierarchy: bool = False):
    """Name-based canonical description used for graph equality."""
    nl = netlist
    insts = {}
    for i in range(nl.n_instances):
        key = nl.master_of(i).name
        if hierarchy:
            key = (key, _module_path(nl, nl.inst_module[i]))
        insts[nl.instance_name(i)] = key

    def endpoint(pin):
        if pin < 0:
            return ("PI", nl.pi_names[-pin - 1])
        return ("pin", nl.instance_name(nl.pin_inst[pin]), nl.pin_name(pin))

    nets = set()
    for net, sinks in enumerate(nl.net_sinks):
        if sinks is None:
            continue
        drv = nl.net_driver[net]
        ends = frozenset(endpoint(p) for p in sinks)
        if nl.net_po[net] >= 0:
            ends |= {("PO", nl.po_names[nl.net_po[net]])}
        nets.add((None if drv is None else endpoint(drv), ends))
    return insts, frozenset(nets)


def _module_path(nl: Netlist, module: int) -> str:
    parts = []
    while module > 0:
        name, module = nl.modules[module]
        parts.append(name)
    return "/".join(reversed(parts))


def graph_equal(a: Netlist, b: Netlist, hierarchy: bool = False) -> bool:
    """True when both netlists have the same instance/net/pin incidence by name."""
    return canonical_form(a, hierarchy) == canonical_form(b, hierarchy)
