import io

import pytest
from hypothesis import given, strategies as st

from conftest import DFF, INV, NAND2, connect, ff_chain, generated, pin
from oracles import structural_violations
from strategies import dag_netlists
from synthnet.netlist import CellMaster, Netlist, NetlistError, graph_equal, validate
from synthnet.verilog import VerilogParseError, read_verilog, write_verilog

TOY_LIB = [INV, NAND2, DFF]


def categories(nl):
    return sorted(v.category for v in validate(nl))


def one_inverter():
    nl = Netlist("one")
    i = nl.add_instance(INV, "u1")
    k = nl.add_pi("a")
    nl.add_sink(nl.pi_net[k], pin(nl, i, "A"))
    net = nl.add_net()
    nl.set_driver(net, pin(nl, i, "Y"))
    nl.add_po("y", net)
    return nl


def test_validate_minimal_chain_is_clean():
    assert validate(ff_chain(1)) == []


def test_validate_dangling_net():
    nl = ff_chain(1)
    extra = nl.add_instance(INV, "x")
    k = nl.add_pi("in")
    nl.add_sink(nl.pi_net[k], pin(nl, extra, "A"))
    net = nl.add_net("dead")
    nl.set_driver(net, pin(nl, extra, "Y"))
    assert categories(nl) == ["dangling net"]


def test_validate_combinational_loop():
    nl = Netlist()
    a = nl.add_instance(INV, "inv1")
    b = nl.add_instance(INV, "inv2")
    connect(nl, a, "Y", (b, "A"))
    connect(nl, b, "Y", (a, "A"))
    assert categories(nl) == ["combinational loop"]


def test_validate_loop_through_ff_is_fine():
    assert validate(ff_chain(3)) == []


def test_validate_reports_each_category():
    nl = Netlist()
    a = nl.add_instance(INV, "a")
    b = nl.add_instance(NAND2, "b")
    nl.add_instance(INV, "lonely")
    net = connect(nl, a, "Y", (b, "A"))
    nl.add_sink(net, pin(nl, b, "Y"))  # second driver
    cats = set(categories(nl))
    assert {"multi-driver", "floating input", "disconnected instance"} <= cats


def test_write_single_inverter():
    text = write_verilog(one_inverter())
    lines = text.rstrip("\n").split("\n")
    assert len(lines) == 6
    assert sum("INV u1" in ln for ln in lines) == 1
    assert lines[0].startswith("module one")


def test_write_is_deterministic(small_netlist):
    assert write_verilog(small_netlist) == write_verilog(small_netlist.copy())


def test_write_to_binary_stream():
    buf = io.BytesIO()
    write_verilog(one_inverter(), buf)
    assert buf.getvalue().decode() == write_verilog(one_inverter())


def test_submodule_round_trip():
    nl = Netlist("parent")
    sub = nl.add_module("child")
    a = nl.add_instance(INV, "a")
    b = nl.add_instance(INV, "b", module=sub)
    c = nl.add_instance(INV, "c")
    k = nl.add_pi("x")
    nl.add_sink(nl.pi_net[k], pin(nl, a, "A"))
    connect(nl, a, "Y", (b, "A"))
    out = connect(nl, b, "Y", (c, "A"))
    nl.add_po("z", connect(nl, c, "Y"))
    text = write_verilog(nl)
    assert text.count("endmodule") == 2
    assert "module child" in text
    back = read_verilog(text, TOY_LIB)
    assert graph_equal(nl, back)
    assert len(back.modules) == 2
    assert out is not None


def test_generated_round_trip(small_netlist, library):
    back = read_verilog(write_verilog(small_netlist), library)
    assert graph_equal(small_netlist, back)
    assert graph_equal(small_netlist, back, hierarchy=True)


def test_flat_round_trip_keeps_graph(library):
    nl = generated(3000, 0.6, seed=3)[0]
    flat = read_verilog(write_verilog(nl, flat=True), library)
    assert flat.modules == [(nl.name, -1)]
    assert graph_equal(nl, flat)


def test_undeclared_wire_is_named():
    src = """module t (a, y);
  input a;
  output y;
  INV u1 (.A(a), .Y(ghost));
endmodule
"""
    with pytest.raises(VerilogParseError, match="ghost"):
        read_verilog(src, TOY_LIB)


def test_unknown_master():
    src = "module t (a, y);\n input a;\n output y;\n FOO u (.A(a), .Y(y));\nendmodule\n"
    with pytest.raises(VerilogParseError):
        read_verilog(src, TOY_LIB)


def test_multi_driver_rejected():
    src = """module t (a, y);
  input a;
  output y;
  INV u1 (.A(a), .Y(y));
  INV u2 (.A(a), .Y(y));
endmodule
"""
    with pytest.raises(VerilogParseError):
        read_verilog(src, TOY_LIB)


HAND_WRITTEN = """// ten cells by hand
module hand (clk, a, b, y);
  input clk;
  input a;
  input b;
  output y;
  wire n1, n2, n3, n4, n5, n6, n7, q1, q2;

  DFF r1 (.CK(clk), .D(a), .Q(q1));
  DFF r2 (.CK(clk), .D(b), .Q(q2));
  NAND2 g1 (.A(q1), .B(q2), .Y(n1));
  INV g2 (.A(n1), .Y(n2));
  NAND2 g3 (.A(n2), .B(q1), .Y(n3));
  INV g4 (.A(n3), .Y(n4));
  NAND2 g5 (.A(n4), .B(q2), .Y(n5));
  INV g6 (.A(n5), .Y(n6));
  INV g7 (.A(n6), .Y(n7));
  DFF r3 (.CK(clk), .D(n7), .Q(y));
endmodule
"""


def test_hand_written_file():
    nl = read_verilog(HAND_WRITTEN, TOY_LIB)
    assert nl.n_instances == 10
    assert nl.cell_counts() == {"DFF": 3, "NAND2": 3, "INV": 4}
    assert nl.n_pi == 2 and nl.n_po == 1
    assert nl.pi_names[nl.clock_pi] == "clk"
    assert validate(nl) == []


def test_master_pin_rules():
    with pytest.raises(NetlistError):
        CellMaster("BAD", (("A", "input"), ("A", "output")))
    with pytest.raises(NetlistError):
        CellMaster("NOCLK", (("D", "input"), ("Q", "output")), is_sequential=True)


def test_double_driver_api():
    nl = Netlist()
    a = nl.add_instance(INV)
    net = nl.add_net()
    nl.set_driver(net, pin(nl, a, "Y"))
    with pytest.raises(NetlistError):
        nl.set_driver(net, pin(nl, a, "Y"))


# -- random netlists ---------------------------------------------------------

@st.composite
def arbitrary_netlists(draw):
    """Random wiring, including loops, shorts and loose ends."""
    n = draw(st.integers(1, 12))
    kinds = draw(st.lists(st.sampled_from([INV, NAND2, DFF]), min_size=n, max_size=n))
    nl = Netlist("mess")
    insts = [nl.add_instance(m, f"u{k}") for k, m in enumerate(kinds)]
    pins = list(range(len(nl.pin_inst)))
    n_nets = draw(st.integers(0, 2 * n))
    for k in range(n_nets):
        net = nl.add_net(f"n{k}")
        free = [p for p in pins if nl.pin_net[p] < 0]
        if draw(st.booleans()):
            outs = [p for p in free if nl.pin_direction(p) == "output"]
            if outs:
                nl.set_driver(net, draw(st.sampled_from(outs)))
        elif draw(st.booleans()):
            nl.add_pi(f"pi{k}", net=net)
        free = [p for p in pins if nl.pin_net[p] < 0]
        for p in draw(st.lists(st.sampled_from(free), max_size=3, unique=True)) if free else []:
            nl.add_sink(net, p)
        if draw(st.integers(0, 3)) == 0:
            nl.add_po(f"po{k}", net)
    return nl, insts


@given(dag_netlists())
def test_dag_netlists_are_valid(nl):
    assert validate(nl) == []


@given(dag_netlists())
def test_verilog_round_trip(nl):
    text = write_verilog(nl)
    back = read_verilog(text, TOY_LIB)
    assert graph_equal(nl, back)
    assert write_verilog(back) == text


@given(arbitrary_netlists())
def test_validate_matches_exhaustive_checker(data):
    nl, _ = data
    assert set(categories(nl)) == structural_violations(nl)
