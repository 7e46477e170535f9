"""Structural Verilog writer and reader for the flat/hierarchical gate-level subset.

The accepted language is deliberately small: ``module``/``endmodule``,
``input``/``output``/``wire`` scalar declarations and named-port cell or
module instantiations.  No expressions, buses, ``assign`` or behaviour.
"""
from __future__ import annotations

import io
import re
from collections import defaultdict

from .netlist import CLOCK, OUTPUT, CellMaster, Netlist, NetlistError


class VerilogParseError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


# -- writer ---------------------------------------------------------------

def write_verilog(netlist: Netlist, sink=None, flat: bool = False) -> str | None:
    """Emit ``netlist`` as structural Verilog.

    ``sink`` may be a text or binary stream; when omitted the text is
    returned.  With ``flat=True`` module tags are ignored and a single
    module is written.
    """
    text = "".join(_emit(netlist, flat))
    if sink is None:
        return text
    if isinstance(sink, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(sink, "mode", ""):
        sink.write(text.encode("utf-8"))
    else:
        sink.write(text)
    return None


def _emit(nl: Netlist, flat: bool):
    nmod = 1 if flat else len(nl.modules)
    inst_module = [0] * nl.n_instances if flat else nl.inst_module
    parent = [p for _, p in nl.modules[:nmod]]
    depth = [0] * nmod
    for m in range(1, nmod):
        depth[m] = depth[parent[m]] + 1

    def lca(a, b):
        while depth[a] > depth[b]:
            a = parent[a]
        while depth[b] > depth[a]:
            b = parent[b]
        while a != b:
            a, b = parent[a], parent[b]
        return a

    # visible[m]: net -> "wire" | "input" | "output" (ports of non-top modules)
    visible = [dict() for _ in range(nmod)]
    by_module = defaultdict(list)
    for i in range(nl.n_instances):
        by_module[inst_module[i]].append(i)

    for net, sinks in enumerate(nl.net_sinks):
        if sinks is None:
            continue
        drv = nl.net_driver[net]
        ends = [inst_module[nl.pin_inst[p]] for p in sinks]
        drv_mod = 0 if drv is None or drv < 0 else inst_module[nl.pin_inst[drv]]
        ends.append(drv_mod)
        if nl.net_po[net] >= 0:
            ends.append(0)
        top = ends[0]
        for m in ends[1:]:
            if m != top:
                top = lca(top, m)
        visible[top][net] = "wire"
        for m in set(ends):
            while m != top:
                if m not in (0,) and net not in visible[m]:
                    inside = _in_subtree(drv_mod, m, parent)
                    visible[m][net] = "output" if inside else "input"
                m = parent[m]

    children = defaultdict(list)
    for m in range(1, nmod):
        children[parent[m]].append(m)

    order = []

    def post(m):
        for c in children[m]:
            post(c)
        order.append(m)
    post(0)

    for m in order:
        yield from _emit_module(nl, m, visible, by_module[m], children[m], flat)


def _in_subtree(mod: int, root: int, parent: list[int]) -> bool:
    while mod != -1:
        if mod == root:
            return True
        mod = parent[mod]
    return False


def _emit_module(nl, m, visible, insts, kids, flat):
    vis = visible[m]
    name = nl.name if m == 0 else nl.modules[m][0]
    if m == 0:
        ins = [nl.pi_names[k] for k in range(len(nl.pi_names)) if nl.pi_net[k] >= 0]
        outs = [nl.po_names[k] for k in range(len(nl.po_names)) if nl.po_net[k] >= 0]
        port_nets = {nl.pi_net[k] for k in range(len(nl.pi_net)) if nl.pi_net[k] >= 0}
        port_nets |= {nl.po_net[k] for k in range(len(nl.po_net)) if nl.po_net[k] >= 0}
        for net, pin in _pi_po_conflicts(nl):
            raise NetlistError(f"net {_port_name(nl, net)} is both a PI and a PO")
        wires = [n for n in sorted(vis) if n not in port_nets]
    else:
        ports = sorted(n for n, kind in vis.items() if kind != "wire")
        ins = [_port_name(nl, n) for n in ports if vis[n] == "input"]
        outs = [_port_name(nl, n) for n in ports if vis[n] == "output"]
        wires = [n for n in sorted(vis) if vis[n] == "wire"]
    header = ", ".join(ins + outs)
    yield f"module {name} ({header});\n" if header else f"module {name};\n"
    for p in ins:
        yield f"  input {p};\n"
    for p in outs:
        yield f"  output {p};\n"
    for n in wires:
        yield f"  wire {_port_name(nl, n)};\n"
    yield "\n"
    for i in insts:
        master = nl.master_of(i)
        base = nl.pin_base[i]
        conns = []
        for k, (pname, _) in enumerate(master.pins):
            net = nl.pin_net[base + k]
            conns.append(f".{pname}({_port_name(nl, net) if net >= 0 else ''})")
        yield f"  {master.name} {nl.instance_name(i)} ({', '.join(conns)});\n"
    for c in kids:
        cvis = visible[c]
        ports = sorted(n for n, kind in cvis.items() if kind != "wire")
        ordered = [n for n in ports if cvis[n] == "input"] + \
                  [n for n in ports if cvis[n] == "output"]
        conns = ", ".join(f".{_port_name(nl, n)}({_port_name(nl, n)})" for n in ordered)
        cname = nl.modules[c][0]
        yield f"  {cname} u_{cname} ({conns});\n"
    yield "endmodule\n"


def _port_name(nl, net: int) -> str:
    """Nets on a top-level port are written under the port name."""
    drv = nl.net_driver[net]
    if drv is not None and drv < 0:
        return nl.pi_names[-drv - 1]
    if nl.net_po[net] >= 0:
        return nl.po_names[nl.net_po[net]]
    return nl.net_name(net)


def _pi_po_conflicts(nl):
    for k, net in enumerate(nl.po_net):
        if net >= 0:
            drv = nl.net_driver[net]
            if drv is not None and drv < 0:
                yield net, k


# -- reader ---------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<lcomment>//[^\n]*)
  | (?P<bcomment>/\*.*?\*/)
  | (?P<ident>\\\S+|[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<punct>[().,;])
  | (?P<other>.)
""", re.VERBOSE | re.DOTALL)


def _tokenize(text: str):
    line, line_start = 1, 0
    for m in _TOKEN.finditer(text):
        kind = m.lastgroup
        value = m.group()
        col = m.start() - line_start + 1
        if kind == "other":
            raise VerilogParseError(f"unexpected character {value!r}", line, col)
        if kind not in ("ws", "lcomment", "bcomment"):
            if kind == "ident" and value.startswith("\\"):
                value = value[1:]
            yield kind, value, line, col
        nl_count = value.count("\n")
        if nl_count:
            line += nl_count
            line_start = m.start() + value.rfind("\n") + 1


class _Module:
    def __init__(self, name):
        self.name = name
        self.ports: list[str] = []
        self.directions: dict[str, str] = {}
        self.wires: list[str] = []
        self.instances: list[tuple[str, str, list[tuple[str, str | None, int, int]], int]] = []


class _Parser:
    def __init__(self, text):
        self.tokens = list(_tokenize(text))
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None, 0, 0)

    def take(self, expect=None):
        tok = self.peek()
        if tok[0] is None:
            last = self.tokens[-1] if self.tokens else (None, None, 1, 1)
            raise VerilogParseError("unexpected end of file", last[2], last[3])
        if expect is not None and tok[1] != expect:
            raise VerilogParseError(f"expected {expect!r}, got {tok[1]!r}", tok[2], tok[3])
        self.pos += 1
        return tok

    def ident(self):
        tok = self.take()
        if tok[0] != "ident":
            raise VerilogParseError(f"expected identifier, got {tok[1]!r}", tok[2], tok[3])
        return tok

    def parse(self) -> list[_Module]:
        modules = []
        while self.peek()[0] is not None:
            tok = self.take()
            if tok[1] != "module":
                raise VerilogParseError(f"expected 'module', got {tok[1]!r}", tok[2], tok[3])
            modules.append(self.module())
        return modules

    def module(self) -> _Module:
        mod = _Module(self.ident()[1])
        if self.peek()[1] == "(":
            self.take("(")
            if self.peek()[1] != ")":
                mod.ports.append(self.ident()[1])
                while self.peek()[1] == ",":
                    self.take(",")
                    mod.ports.append(self.ident()[1])
            self.take(")")
        self.take(";")
        while True:
            tok = self.take()
            word = tok[1]
            if word == "endmodule":
                break
            if word in ("input", "output", "wire"):
                names = [self.ident()[1]]
                while self.peek()[1] == ",":
                    self.take(",")
                    names.append(self.ident()[1])
                self.take(";")
                for n in names:
                    if word == "wire":
                        if n not in mod.directions:
                            mod.wires.append(n)
                    else:
                        mod.directions[n] = word
                continue
            if tok[0] != "ident" or word in ("assign", "always", "reg", "inout"):
                raise VerilogParseError(f"unsupported construct {word!r}", tok[2], tok[3])
            inst_tok = self.ident()
            self.take("(")
            conns = []
            if self.peek()[1] != ")":
                while True:
                    self.take(".")
                    pin = self.ident()[1]
                    self.take("(")
                    net_tok = self.peek()
                    net = None
                    if net_tok[1] != ")":
                        net = self.ident()[1]
                    self.take(")")
                    conns.append((pin, net, net_tok[2], net_tok[3]))
                    if self.peek()[1] == ",":
                        self.take(",")
                        continue
                    break
            self.take(")")
            self.take(";")
            mod.instances.append((word, inst_tok[1], conns, tok[2]))
        for p in mod.ports:
            if p not in mod.directions:
                raise VerilogParseError(f"port {p!r} of {mod.name} has no direction", 0, 0)
        return mod


def read_verilog(source, library, top: str | None = None) -> Netlist:
    """Parse structural Verilog into a :class:`Netlist`.

    ``library`` is an iterable of :class:`CellMaster` (or a mapping by name).
    Unknown masters, undeclared wires and multiply-driven nets raise
    :class:`VerilogParseError`.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    masters = dict(library) if isinstance(library, dict) else {m.name: m for m in library}
    modules = _Parser(source).parse()
    if not modules:
        raise VerilogParseError("no module found", 1, 1)
    defs = {m.name: m for m in modules}
    used = {inst[0] for m in modules for inst in m.instances if inst[0] in defs}
    if top is None:
        roots = [m.name for m in modules if m.name not in used]
        if len(roots) != 1:
            raise VerilogParseError(f"cannot determine top module among {roots}", 1, 1)
        top = roots[0]
    nl = Netlist(top)
    nl.modules = [(top, -1)]
    tdef = defs[top]
    net_of: dict[str, int] = {}
    for p in tdef.ports:
        if tdef.directions[p] == "input":
            net_of[p] = nl.add_pi(p)
        else:
            net_of[p] = nl.add_net(p)
    taken = set(net_of)
    _elaborate(nl, defs, masters, tdef, net_of, 0, "", taken, [top])
    for p in tdef.ports:
        if tdef.directions[p] == "output":
            nl.add_po(p, net_of[p])
    for k, net in enumerate(nl.pi_net):
        sinks = nl.net_sinks[net]
        if sinks and all(nl.pin_direction(s) == CLOCK for s in sinks):
            nl.clock_pi = k
            break
    return nl


def _elaborate(nl, defs, masters, mdef, net_of, module_idx, prefix, taken, stack):
    for w in mdef.wires:
        name = w if w not in taken else f"{prefix}{w}"
        taken.add(name)
        net_of[w] = nl.add_net(name)
    inst_names = set(nl.inst_names) if prefix else None
    for type_name, iname, conns, line in mdef.instances:
        for _, net, nline, ncol in conns:
            if net is not None and net not in net_of:
                raise VerilogParseError(f"undeclared wire {net!r}", nline, ncol)
        if type_name in defs:
            if type_name in stack:
                raise VerilogParseError(f"recursive instantiation of {type_name}", line, 0)
            child = defs[type_name]
            child_idx = nl.add_module(type_name, module_idx)
            child_nets = {}
            for pin, net, nline, ncol in conns:
                if pin not in child.directions:
                    raise VerilogParseError(f"{type_name} has no port {pin!r}", nline, ncol)
                child_nets[pin] = net_of[net] if net is not None else nl.add_net()
            for p in child.ports:
                if p not in child_nets:
                    child_nets[p] = nl.add_net()
            _elaborate(nl, defs, masters, child, child_nets, child_idx,
                       f"{prefix}{iname}/", taken, stack + [type_name])
            continue
        master = masters.get(type_name)
        if master is None:
            raise VerilogParseError(f"unknown cell master {type_name!r}", line, 0)
        name = iname
        if inst_names is not None and name in inst_names:
            name = f"{prefix}{iname}"
        inst = nl.add_instance(master, name, module_idx)
        base = nl.pin_base[inst]
        for pin, net, nline, ncol in conns:
            try:
                k = master.pin_index(pin)
            except KeyError:
                raise VerilogParseError(f"{type_name} has no pin {pin!r}", nline, ncol) from None
            if net is None:
                continue
            gnet = net_of[net]
            if master.pins[k][1] == OUTPUT:
                if nl.net_driver[gnet] is not None:
                    raise VerilogParseError(f"net {net!r} has multiple drivers", nline, ncol)
                nl.set_driver(gnet, base + k)
            else:
                nl.add_sink(gnet, base + k)
