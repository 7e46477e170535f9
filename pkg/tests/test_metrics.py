import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import DFF, INV, clique, connect, ff_chain, generated, inv_chain, mesh, pin
from oracles import brute_pins, cosine_exact, errors_exact
from strategies import dag_netlists
from synthnet.metrics import (
    Incidence,
    RentEstimator,
    cell_cosine_similarity,
    count_block_pins,
    error_metrics,
    extract_params,
    fit_rent,
    level_pins,
    rent_by_partitioning,
    rent_by_traversal,
)
from synthnet.netgen import resolve_counts
from synthnet.netlist import CellMaster, Netlist, NetlistError
from synthnet.specio import CellLibrary, SpecParams


# -- extraction ------------------------------------------------------------------

def test_extract_ff_inv_inv_ff():
    ex = extract_params(ff_chain(2))
    assert (ex.d_max, ex.s_ratio, ex.n_inst) == (2, 0.5, 4)
    assert ex.n_ff == 2 and ex.n_pi == 0 and ex.n_po == 0


def test_extract_ff_only():
    nl = Netlist("ring")
    a = nl.add_instance(DFF, "a")
    b = nl.add_instance(DFF, "b")
    connect(nl, a, "Q", (b, "D"))
    connect(nl, b, "Q", (a, "D"))
    k = nl.add_pi("clk", clock=True)
    for f in (a, b):
        nl.add_sink(nl.pi_net[k], pin(nl, f, "CK"))
    ex = extract_params(nl)
    assert ex.d_max == 0 and ex.s_ratio == 1.0


def test_extract_macro_depths():
    ram = CellMaster("RAM", (("clk", "clock"), ("d", "input"), ("q", "output")), is_macro=True)
    nl = Netlist("m")
    r = nl.add_instance(ram, "ram")
    a = nl.add_instance(INV, "a")
    b = nl.add_instance(INV, "b")
    c = nl.add_instance(INV, "c")
    nl.add_sink(nl.pi_net[nl.add_pi("x")], pin(nl, a, "A"))
    connect(nl, a, "Y", (r, "d"))
    connect(nl, r, "q", (b, "A"))
    connect(nl, b, "Y", (c, "A"))
    nl.add_po("y", connect(nl, c, "Y"))
    nl.add_sink(nl.pi_net[nl.add_pi("clk", clock=True)], pin(nl, r, "clk"))
    ex = extract_params(nl)
    assert ex.n_macro == 1
    assert (ex.md_min, ex.md_max) == (1, 2)
    assert (ex.d_min, ex.d_max) == (1, 2)


def test_extract_rejects_invalid():
    nl = Netlist()
    a = nl.add_instance(INV, "a")
    b = nl.add_instance(INV, "b")
    connect(nl, a, "Y", (b, "A"))
    connect(nl, b, "Y", (a, "A"))
    with pytest.raises(NetlistError):
        extract_params(nl)


def test_extract_generated_counts():
    params = SpecParams(n_inst=5000, p=0.6, n_pi=120, n_po=90, seed=3)
    from synthnet.generator import generate_netlist
    nl, report = generate_netlist(params)
    ex = extract_params(nl)
    lib = CellLibrary.default()
    assert (ex.n_pi, ex.n_po, ex.n_macro) == (120, 90, 0)
    assert abs(ex.n_inst - 5000) <= 50
    inventory = resolve_counts(params.replace(t_avg=report["t_avg"]), lib)
    implied = sum(lib[n].n_signal_pins * c for n, c in inventory.items()) / sum(inventory.values())
    assert ex.t_avg == pytest.approx(implied, rel=0.05)


# -- pin models ---------------------------------------------------------------------

def fanout3():
    nl = Netlist("f3")
    d = nl.add_instance(INV, "d")
    sinks = [nl.add_instance(INV, f"s{k}") for k in range(3)]
    nl.add_sink(nl.pi_net[nl.add_pi("x")], pin(nl, d, "A"))
    connect(nl, d, "Y", *[(s, "A") for s in sinks])
    for s in sinks:
        nl.add_po(f"y{s}", connect(nl, s, "Y"))
    return nl, d, sinks


def test_fanout3_pin_models():
    nl, d, sinks = fanout3()
    # only the fanout net is counted when the block is the driver plus its input net
    inside = [d]
    got = [count_block_pins(nl, inside, m) - 1 for m in (1, 2, 3)]   # minus the PI net
    assert got == [3, 1, 3]


def test_net_inside_block():
    nl, d, sinks = fanout3()
    block = [d] + sinks
    nets_across = 1 + 3     # PI net and three PO nets
    assert [count_block_pins(nl, block, m) for m in (1, 2, 3)] == [nets_across] * 3
    inc = Incidence.from_netlist(nl)
    labels = np.zeros(nl.n_instances, dtype=np.int64)
    assert level_pins(inc, labels, 2).tolist() == [4]


def test_type3_counts_distinct_sinks():
    nl = Netlist()
    nand = CellMaster("N2", (("A", "input"), ("B", "input"), ("Y", "output")))
    d = nl.add_instance(INV, "d")
    g = nl.add_instance(nand, "g")
    nl.add_sink(nl.pi_net[nl.add_pi("x")], pin(nl, d, "A"))
    connect(nl, d, "Y", (g, "A"), (g, "B"))
    nl.add_po("y", connect(nl, g, "Y"))
    assert [count_block_pins(nl, [g], m) for m in (1, 2, 3)] == [3, 2, 2]


def test_unknown_block_member():
    nl, _, _ = fanout3()
    with pytest.raises(ValueError):
        count_block_pins(nl, [99], 2)
    with pytest.raises(ValueError):
        count_block_pins(nl, [0], 4)


@settings(max_examples=80)
@given(dag_netlists(), st.data())
def test_pins_match_brute_force(nl, data):
    block = data.draw(st.lists(st.integers(0, nl.n_instances - 1), unique=True))
    inc = Incidence.from_netlist(nl)
    for m in (1, 2, 3):
        assert count_block_pins(nl, block, m, inc) == brute_pins(nl, block, m)


@settings(max_examples=40)
@given(dag_netlists(), st.data())
def test_level_pins_match_brute_force(nl, data):
    n_blocks = data.draw(st.integers(1, 4))
    labels = np.array(data.draw(st.lists(st.integers(-1, n_blocks - 1), min_size=nl.n_instances,
                                         max_size=nl.n_instances)), dtype=np.int64)
    inc = Incidence.from_netlist(nl)
    for m in (1, 2, 3):
        got = level_pins(inc, labels, m)
        for blk in range(n_blocks):
            members = np.flatnonzero(labels == blk).tolist()
            have = int(got[blk]) if blk < len(got) else 0
            assert have == brute_pins(nl, members, m)


def _random_blocks(n, count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        size = int(rng.integers(1, max(2, n // 4)))
        yield rng.choice(n, size=size, replace=False).tolist()


def test_pin_model_ordering_random_blocks(small_netlist):
    inc = Incidence.from_netlist(small_netlist)
    for block in _random_blocks(small_netlist.n_instances, 300, 0):
        t1, t2, t3 = (count_block_pins(small_netlist, block, m, inc) for m in (1, 2, 3))
        assert t2 <= t3 <= t1


@given(dag_netlists(), st.data())
def test_pin_model_ordering_property(nl, data):
    block = data.draw(st.lists(st.integers(0, nl.n_instances - 1), unique=True))
    t1, t2, t3 = (brute_pins(nl, block, m) for m in (1, 2, 3))
    assert t2 <= t3 <= t1
    assert [count_block_pins(nl, block, m) for m in (1, 2, 3)] == [t1, t2, t3]


# -- Rent fits -------------------------------------------------------------------------------

@pytest.mark.parametrize("method", [rent_by_partitioning, rent_by_traversal])
def test_topology_ordering(method):
    fits = [method(nl, 2, "arith", 0.5) for nl in (inv_chain(256), mesh(16, 16), clique(32))]
    ps = [f.p for f in fits]
    assert ps[0] < ps[1] < ps[2]
    assert ps[0] == pytest.approx(0.0, abs=0.05)


def test_clique_fit_matches_analytic_counts():
    # a block of B cells in an n-clique has exactly B * (n - B) pins
    fit = rent_by_partitioning(clique(16), 2, "arith", 0.5)
    b = np.array([s for s, _ in fit.samples if 1 < s <= fit.region1_cutoff])
    slope = np.polyfit(np.log(b), np.log(b * (16 - b)), 1)[0]
    assert fit.p == pytest.approx(slope, abs=1e-9)
    # far below the clique size the exponent approaches 1
    big = rent_by_partitioning(clique(64), 2, "arith", 0.125)
    assert big.p > 0.85


def test_mesh_exponent():
    fit = rent_by_partitioning(mesh(16, 16), 2, "arith", 0.5)
    assert 0.35 < fit.p < 0.6
    assert fit.residual < 0.2


def test_geometric_mean_not_above_arithmetic(small_netlist):
    a = rent_by_partitioning(small_netlist, 2, "arith", seed=1)
    g = rent_by_partitioning(small_netlist, 2, "geom", seed=1)
    for (sa, ta), (sg, tg) in zip(a.samples, g.samples):
        assert sa == sg and tg <= ta + 1e-9


def test_traversal_single_instance_flagged():
    nl = Netlist()
    i = nl.add_instance(INV, "u")
    nl.add_sink(nl.pi_net[nl.add_pi("a")], pin(nl, i, "A"))
    nl.add_po("y", connect(nl, i, "Y"))
    fit = rent_by_traversal(nl)
    assert fit.low_confidence and np.isnan(fit.p)


def test_partition_degenerate_flagged():
    nl = Netlist()
    for k in range(8):
        i = nl.add_instance(INV, f"u{k}")
        nl.add_sink(nl.pi_net[nl.add_pi(f"a{k}")], pin(nl, i, "A"))
        nl.add_po(f"y{k}", connect(nl, i, "Y"))
    fit = rent_by_partitioning(nl, r_ratio=0.1)
    assert fit.low_confidence


def test_traversal_deterministic(small_netlist):
    a = rent_by_traversal(small_netlist, seed=4)
    b = rent_by_traversal(small_netlist, seed=4)
    assert a == b
    assert rent_by_partitioning(small_netlist, seed=4) == rent_by_partitioning(small_netlist, seed=4)


@pytest.mark.xfail(strict=True, reason="traversal estimate of generated netlists runs high; "
                   "see the decisions ledger")
def test_traversal_tracks_spec_p_at_1k():
    ps = [rent_by_traversal(generated(1000, 0.55, seed=s)[0]).p for s in range(5)]
    mape = np.mean([abs(p - 0.55) / 0.55 for p in ps])
    assert mape <= 0.06


def disjoint_pair(nl):
    out = Netlist("pair")
    for copy in range(2):
        off = out.n_instances
        for i in range(nl.n_instances):
            out.add_instance(nl.master_of(i), f"c{copy}_{nl.instance_name(i)}")
        net_map = {}
        for net, sinks in enumerate(nl.net_sinks):
            if sinks is None:
                continue
            new = out.add_net()
            net_map[net] = new
            drv = nl.net_driver[net]
            if drv is not None and drv >= 0:
                inst = nl.pin_inst[drv]
                out.set_driver(new, out.pin_base[off + inst] + drv - nl.pin_base[inst])
            for p in sinks:
                inst = nl.pin_inst[p]
                out.add_sink(new, out.pin_base[off + inst] + p - nl.pin_base[inst])
        for k, net in enumerate(nl.pi_net):
            if net >= 0:
                out.net_driver[net_map[net]] = None
                out.add_pi(f"c{copy}_{nl.pi_names[k]}", net=net_map[net], clock=k == nl.clock_pi)
        for k, net in enumerate(nl.po_net):
            if net >= 0:
                out.add_po(f"c{copy}_{nl.po_names[k]}", net_map[net])
    return out


def test_traversal_unchanged_by_disconnected_copy():
    nl = generated(3000, 0.55, seed=2)[0]
    pair = disjoint_pair(nl)
    assert pair.n_instances == 2 * nl.n_instances
    # same absolute cluster sizes: halve the ratio on the doubled netlist
    single = rent_by_traversal(nl, r_ratio=0.1, samples=64, seed=1)
    double = rent_by_traversal(pair, r_ratio=0.05, samples=64, seed=1)
    assert double.p == pytest.approx(single.p, abs=0.03)


def test_fit_rent_exact_power_law():
    samples = [(b, 3.0 * b ** 0.6) for b in (2, 4, 8, 16, 32)]
    k, p, resid, low = fit_rent(samples, cutoff=32)
    assert k == pytest.approx(3.0) and p == pytest.approx(0.6)
    assert resid < 1e-9 and not low
    assert fit_rent(samples, cutoff=1)[3]


def test_rent_estimator():
    est = RentEstimator(method="partition", r_ratio=0.5).fit(mesh(16, 16))
    assert est.p_ == est.fit_.p
    pred = est.predict([4, 16])
    assert pred[1] > pred[0]
    with pytest.raises(ValueError):
        RentEstimator(method="spectral").fit(mesh(4, 4))
    with pytest.raises(ValueError):
        rent_by_traversal(mesh(4, 4), mean="harmonic")


# -- similarity and errors ----------------------------------------------------------------------

def test_cosine_identical_and_disjoint():
    assert cell_cosine_similarity({"a": 3, "b": 4}, {"a": 3, "b": 4}) == 1.0
    assert cell_cosine_similarity({"a": 1}, {"b": 5}) == 0.0
    with pytest.raises(ValueError):
        cell_cosine_similarity({"a": 0}, {"a": 1})


@given(st.dictionaries(st.sampled_from("abcdef"), st.integers(0, 1000), min_size=1),
       st.dictionaries(st.sampled_from("abcdef"), st.integers(0, 1000), min_size=1))
def test_cosine_matches_oracle(a, b):
    if not any(a.values()) or not any(b.values()):
        return
    assert cell_cosine_similarity(a, b) == pytest.approx(cosine_exact(a, b), abs=1e-12)


def test_generated_cosine_against_inventory():
    params = SpecParams(n_inst=10_000, p=0.55, seed=2)
    nl = generated(10_000, 0.55, seed=2)[0]
    target = resolve_counts(params, CellLibrary.default())
    assert cell_cosine_similarity(nl, target) >= 0.999


def test_error_metrics_examples():
    e = error_metrics([1, 2, 3], [1, 2, 3])
    assert (e.mape, e.mae, e.medae) == (0, 0, 0)
    e = error_metrics([100], [98])
    assert (e.mape, e.mae, e.medae) == (2.0, 2, 2)


def test_error_metrics_zero_reference():
    e = error_metrics([0, 10], [1, 11])
    assert e.excluded == [0]
    assert e.mape == pytest.approx(10.0)
    with pytest.raises(ValueError):
        error_metrics([1, 2], [1])


values = st.one_of(st.just(0.0), st.floats(1e-3, 1e6), st.floats(-1e6, -1e-3))


@given(st.lists(st.tuples(values, values), min_size=1, max_size=10))
def test_error_metrics_oracle(pairs):
    ref, cand = zip(*pairs)
    got = error_metrics(ref, cand)
    mape, mae, med = errors_exact(ref, cand)
    assert got.mae == pytest.approx(mae, rel=1e-9, abs=1e-9)
    assert got.medae == pytest.approx(med, rel=1e-9, abs=1e-9)
    if np.isnan(mape):
        assert np.isnan(got.mape)
    else:
        assert got.mape == pytest.approx(mape, rel=1e-9)
