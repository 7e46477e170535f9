"""Bring the top module's primary input/output counts to their targets.

Four edits are available: a flip-flop with spare fanout hands one of its
combinational sinks to a new PI; a PI is merged into another PI; a
combinational net gains a PO; a PO on a net with other sinks is dropped.
All of them keep the netlist valid and cannot lengthen any path.
"""
from __future__ import annotations

from dataclasses import dataclass

from .netlist import Netlist, NetlistError

ALL_FFS_SINGLE_FANOUT = "all-FFs-single-fanout"
ALL_PO_DRIVERS_SINGLE_FANOUT = "all-PO-drivers-single-fanout"
NO_PI_TO_MERGE = "fewer-than-two-PIs"
NO_NET_FOR_PO = "no-net-without-PO"


class NoCandidate(RuntimeError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class PortDelta:
    pi_added: int = 0
    pi_removed: int = 0
    po_added: int = 0
    po_removed: int = 0
    stopped_early: str | None = None
    pi_stop: str | None = None
    po_stop: str | None = None


def _unique_name(prefix: str, start: int, taken: set) -> tuple[str, int]:
    k = start
    while f"{prefix}{k}" in taken:
        k += 1
    return f"{prefix}{k}", k + 1


class _Editor:
    """Cursor-based candidate search so long edit runs stay linear."""

    def __init__(self, nl: Netlist):
        self.nl = nl
        self.seq = nl.sequential_mask()
        self.barrier = nl.barrier_mask()
        self.names = set(nl.pi_names) | set(nl.po_names)
        self.pi_next = len(nl.pi_names)
        self.po_next = len(nl.po_names)
        self._ff_cursor = 0
        self._ffs = None
        self._net_cursor = 0

    # add PI ------------------------------------------------------------
    def _ff_list(self):
        if self._ffs is None:
            self._ffs = [i for i in range(self.nl.n_instances) if self.seq[i]]
        return self._ffs

    def add_pi(self) -> int:
        nl = self.nl
        ffs = self._ff_list()
        while self._ff_cursor < len(ffs):
            inst = ffs[self._ff_cursor]
            cand = self._ff_candidate(inst)
            if cand is not None:
                net, pin = cand
                nl.remove_sink(net, pin)
                name, self.pi_next = _unique_name("pi_", self.pi_next, self.names)
                self.names.add(name)
                k = nl.add_pi(name)
                nl.add_sink(nl.pi_net[k], pin)
                return k
            self._ff_cursor += 1
        raise NoCandidate(ALL_FFS_SINGLE_FANOUT)

    def _ff_candidate(self, inst):
        nl = self.nl
        m = nl.masters[nl.inst_master[inst]]
        base = nl.pin_base[inst]
        for k, (_, d) in enumerate(m.pins):
            if d != "output":
                continue
            net = nl.pin_net[base + k]
            if net < 0:
                continue
            sinks = nl.net_sinks[net]
            fanout = len(sinks) + (nl.net_po[net] >= 0)
            if fanout < 2:
                continue
            gates = [p for p in sinks if not self.barrier[nl.pin_inst[p]]]
            if gates:
                return net, min(gates)
        return None

    # delete PI -----------------------------------------------------------
    def delete_pi(self) -> int:
        nl = self.nl
        live = nl.live_pis()
        if len(live) < 2:
            raise NoCandidate(NO_PI_TO_MERGE)
        return self.merge_pi(live[-1], live[0])

    def merge_pi(self, drop: int, keep: int) -> int:
        nl = self.nl
        src, dst = nl.pi_net[drop], nl.pi_net[keep]
        if nl.net_po[src] >= 0:
            raise NetlistError(f"PI {nl.pi_names[drop]} feeds a PO directly")
        for pin in list(nl.net_sinks[src]):
            nl.remove_sink(src, pin)
            nl.add_sink(dst, pin)
        nl.remove_pi(drop)
        return drop

    # add PO --------------------------------------------------------------
    def add_po(self) -> int:
        nl = self.nl
        while self._net_cursor < len(nl.net_driver):
            net = self._net_cursor
            drv = nl.net_driver[net]
            if (nl.net_sinks[net] is not None and drv is not None and drv >= 0
                    and nl.net_po[net] < 0 and not self.seq[nl.pin_inst[drv]]
                    and not self.barrier[nl.pin_inst[drv]]):
                name, self.po_next = _unique_name("po_", self.po_next, self.names)
                self.names.add(name)
                return nl.add_po(name, net)
            self._net_cursor += 1
        raise NoCandidate(NO_NET_FOR_PO)

    # delete PO -----------------------------------------------------------
    def delete_po(self) -> int:
        nl = self.nl
        for k in reversed(nl.live_pos()):
            if nl.net_sinks[nl.po_net[k]]:
                nl.remove_po(k)
                return k
        raise NoCandidate(ALL_PO_DRIVERS_SINGLE_FANOUT)


def add_pi(netlist: Netlist) -> int:
    """Move one combinational sink of a multi-fanout flip-flop to a new PI."""
    return _Editor(netlist).add_pi()


def delete_pi(netlist: Netlist) -> int:
    """Merge the highest-numbered PI into the lowest-numbered one."""
    return _Editor(netlist).delete_pi()


def add_po(netlist: Netlist) -> int:
    """Attach a PO to the lowest-numbered combinational net without one."""
    return _Editor(netlist).add_po()


def delete_po(netlist: Netlist) -> int:
    """Drop the highest-numbered PO whose net has other sinks."""
    return _Editor(netlist).delete_po()


def match_ports(netlist: Netlist, n_pi: int, n_po: int) -> PortDelta:
    """Edit ``netlist`` until it has ``n_pi`` PIs and ``n_po`` POs, or a stop rule fires."""
    ed = _Editor(netlist)
    delta = PortDelta()
    try:
        while netlist.n_pi < n_pi:
            ed.add_pi()
            delta.pi_added += 1
        if netlist.n_pi > n_pi:
            live = netlist.live_pis()
            if len(live) < 2:
                raise NoCandidate(NO_PI_TO_MERGE)
            extra = min(netlist.n_pi - n_pi, len(live) - 1)
            for drop in reversed(live[len(live) - extra:]):
                ed.merge_pi(drop, live[0])
                delta.pi_removed += 1
    except NoCandidate as exc:
        delta.pi_stop = exc.reason
    try:
        while netlist.n_po < n_po:
            ed.add_po()
            delta.po_added += 1
        if netlist.n_po > n_po:
            # one pass over the POs instead of a rescan per deletion
            pos_to_drop = netlist.n_po - n_po
            for k in reversed(netlist.live_pos()):
                if pos_to_drop == 0:
                    break
                if netlist.net_sinks[netlist.po_net[k]]:
                    netlist.remove_po(k)
                    delta.po_removed += 1
                    pos_to_drop -= 1
            if pos_to_drop:
                raise NoCandidate(ALL_PO_DRIVERS_SINGLE_FANOUT)
    except NoCandidate as exc:
        delta.po_stop = exc.reason
    for reason in (delta.pi_stop, delta.po_stop):
        if reason in (ALL_FFS_SINGLE_FANOUT, ALL_PO_DRIVERS_SINGLE_FANOUT):
            delta.stopped_early = reason
            break
    return delta
