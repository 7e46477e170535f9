import pytest
from hypothesis import HealthCheck, settings

from synthnet.generator import generate_netlist
from synthnet.netlist import CellMaster, Netlist
from synthnet.specio import CellLibrary, SpecParams

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

INV = CellMaster("INV", (("A", "input"), ("Y", "output")))
NAND2 = CellMaster("NAND2", (("A", "input"), ("B", "input"), ("Y", "output")))
DFF = CellMaster("DFF", (("CK", "clock"), ("D", "input"), ("Q", "output")), is_sequential=True)


@pytest.fixture(scope="session")
def library():
    return CellLibrary.default()


def pin(nl, inst, name):
    return nl.pin_base[inst] + nl.master_of(inst).pin_index(name)


def connect(nl, src_inst, src_pin, *sinks):
    """New net from ``src_inst.src_pin`` to every ``(inst, pin)`` in ``sinks``."""
    net = nl.add_net()
    nl.set_driver(net, pin(nl, src_inst, src_pin))
    for inst, name in sinks:
        nl.add_sink(net, pin(nl, inst, name))
    return net


def clocked(nl, *ffs):
    k = nl.add_pi("clk", clock=True)
    for f in ffs:
        nl.add_sink(nl.pi_net[k], pin(nl, f, "CK"))


def ff_chain(n_inv):
    """FF -> n_inv inverters -> FF, closed into a ring through the FFs."""
    nl = Netlist("chain")
    f1 = nl.add_instance(DFF, "f1")
    invs = [nl.add_instance(INV, f"i{k}") for k in range(n_inv)]
    f2 = nl.add_instance(DFF, "f2")
    prev = (f1, "Q")
    for i in invs:
        connect(nl, *prev, (i, "A"))
        prev = (i, "Y")
    connect(nl, *prev, (f2, "D"))
    connect(nl, f2, "Q", (f1, "D"))
    clocked(nl, f1, f2)
    return nl


def inv_chain(n):
    """PI -> n inverters -> PO."""
    nl = Netlist("line")
    invs = [nl.add_instance(INV, f"i{k}") for k in range(n)]
    k = nl.add_pi("a")
    nl.add_sink(nl.pi_net[k], pin(nl, invs[0], "A"))
    for a, b in zip(invs, invs[1:]):
        connect(nl, a, "Y", (b, "A"))
    nl.add_po("y", nl.pin_net[pin(nl, invs[-1], "Y")])
    return nl


def mesh(rows, cols):
    """Grid of NAND2s; each output feeds the right and lower neighbours."""
    nl = Netlist("mesh")
    g = [[nl.add_instance(NAND2, f"g{r}_{c}") for c in range(cols)] for r in range(rows)]
    for r in range(rows):
        for c in range(cols):
            sinks = []
            if c + 1 < cols:
                sinks.append((g[r][c + 1], "A"))
            if r + 1 < rows:
                sinks.append((g[r + 1][c], "B"))
            net = connect(nl, g[r][c], "Y", *sinks)
            if not sinks:
                nl.add_po("y", net)
    for r in range(rows):
        k = nl.add_pi(f"a{r}")
        nl.add_sink(nl.pi_net[k], pin(nl, g[r][0], "A"))
    for c in range(cols):
        k = nl.add_pi(f"b{c}")
        nl.add_sink(nl.pi_net[k], pin(nl, g[0][c], "B"))
    return nl


def clique(n):
    """Every pair of instances joined by its own two-pin net."""
    m = CellMaster("NODE", tuple([(f"I{k}", "input") for k in range(n - 1)]
                                 + [(f"O{k}", "output") for k in range(n - 1)]))
    nl = Netlist("clique")
    nodes = [nl.add_instance(m, f"n{k}") for k in range(n)]
    used_in = [0] * n
    used_out = [0] * n
    for a in range(n):
        for b in range(a + 1, n):
            connect(nl, nodes[a], f"O{used_out[a]}", (nodes[b], f"I{used_in[b]}"))
            used_out[a] += 1
            used_in[b] += 1
    return nl


_CACHE = {}


def generated(n_inst=2000, p=0.55, seed=1, **kw):
    """Cached small generated netlist; callers must not mutate it."""
    key = (n_inst, p, seed, tuple(sorted(kw.items())))
    if key not in _CACHE:
        params = SpecParams(n_inst=n_inst, p=p, seed=seed, **kw)
        _CACHE[key] = generate_netlist(params, CellLibrary.default())
    return _CACHE[key]


@pytest.fixture(scope="session")
def small_netlist():
    return generated()[0]


# -- acceptance report ---------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
