import mpmath
import pytest
from hypothesis import given, strategies as st

from oracles import max_terminals_mp
from synthnet._random import SeededStream
from synthnet.hier_cluster import MERGED, SizePriorityQueue, cluster, levelize, max_terminals
from synthnet.specio import SpecParams


def params(**kw):
    kw.setdefault("t_avg", 2.58)
    kw.setdefault("p", 0.57)
    return SpecParams(n_inst=1000, **kw)


def units(n, seed=0, terms=3):
    q = SizePriorityQueue(seed)
    for _ in range(n):
        q.add_leaf(1, terms - 1, 1)
    return q


def test_max_terminals_unit_size():
    assert max_terminals(1, params(t_avg=3.0, p=0.5, alpha=0)) == 3.0


def test_max_terminals_matches_high_precision():
    sp = params(t_avg=2.58, p=0.57, alpha=1, sigma_p=0.285)
    ref = max_terminals_mp(100, 2.58, 0.57, 1, 0.285)
    assert mpmath.almosteq(mpmath.mpf(max_terminals(100, sp)), ref, rel_eps=1e-13)


def test_max_terminals_monotone():
    sp = params()
    assert max_terminals(9, sp) >= max_terminals(4, sp)


def test_max_terminals_bad_size():
    with pytest.raises(ValueError):
        max_terminals(0, params())


def test_single_entry_queue():
    q = SizePriorityQueue(1)
    leaf = q.add_leaf(7, 3, 2)
    root = cluster(q, params())
    assert root.id == leaf
    assert root.size == 7 and root.terminals == 5 and root.children == ()


def test_four_units_permissive():
    q = units(4)
    root = cluster(q, params(alpha=1e6))
    assert root.size == 4
    assert len(q.size) - q.n_leaves == 3
    assert q.relaxations == 0


def _walk(c):
    yield c
    for k in c.children:
        yield from _walk(k)


def test_sizes_grow_towards_root():
    q = units(8)
    root = cluster(q, params(), SeededStream(5))
    for node in _walk(root):
        for child in node.children:
            assert child.size <= node.size
    assert sorted(root.leaves()) == list(range(8))


def test_merge_children_roles():
    # the first dequeued cluster becomes the right child
    q = SizePriorityQueue(0)
    small = q.add_leaf(1, 1, 1)
    big = q.add_leaf(2, 1, 1)
    root = cluster(q, params(alpha=100))
    assert root.kind == MERGED
    assert root.right.id == small and root.left.id == big


def test_empty_queue():
    with pytest.raises(ValueError):
        cluster(SizePriorityQueue(0), params())


def test_levelize_single_leaf():
    q = units(1)
    tree = levelize(cluster(q, params()))
    assert tree.level_max == 0
    assert tree.levels == [[0]]


def test_levelize_balanced_four():
    q = units(4)
    tree = levelize(cluster(q, params(alpha=1e6)))
    assert tree.level_max == 2
    assert len(tree.levels) == 3
    assert sorted(tree.levels[2]) == [0, 1, 2, 3]
    assert [lv for lv, _ in tree.internal_nodes_by_level()] == [1, 0]


def test_levelize_pads_shallow_leaf():
    q = SizePriorityQueue(0)
    a = q.add_leaf(1, 1, 1)
    b = q.add_leaf(1, 1, 1)
    c = q.add_leaf(5, 1, 1)
    tree = levelize(cluster(q, params(alpha=1e6)))
    assert tree.level_max == 2
    assert tree.depth[c] == 1
    assert sorted(tree.levels[2]) == sorted([a, b, c])
    assert set(tree.leaf_levels()) == {2}


def test_relaxation_terminates():
    # leaves carry far more terminals than any budget allows
    q = SizePriorityQueue(3)
    for _ in range(16):
        q.add_leaf(1, 40, 40)
    root = cluster(q, params(alpha=0.01))
    assert root.size == 16
    assert q.relaxations > 0


# -- properties -----------------------------------------------------------------

leaf_lists = st.lists(st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4)),
                      min_size=1, max_size=40)
hyper = st.fixed_dictionaries({
    "t_avg": st.floats(1.5, 4.0), "p": st.floats(0.3, 0.8),
    "alpha": st.floats(0.0, 3.0), "sigma_p": st.floats(0.0, 0.5)})


def _build(leaves, seed):
    q = SizePriorityQueue(seed)
    for size, i, o in leaves:
        q.add_leaf(size, i, o)
    return q


def _fingerprint(q):
    return (q.size, q.terminals, q.left, q.right, q.relaxed)


@given(leaf_lists, hyper, st.integers(0, 2**32))
def test_cluster_is_deterministic(leaves, hp, seed):
    sp = params(**hp)
    qa, qb = _build(leaves, seed), _build(leaves, seed)
    cluster(qa, sp)
    cluster(qb, sp)
    assert _fingerprint(qa) == _fingerprint(qb)


@given(leaf_lists, hyper, st.integers(0, 2**32))
def test_cluster_conserves_size(leaves, hp, seed):
    q = _build(leaves, seed)
    root = cluster(q, params(**hp))
    assert root.size == sum(s for s, _, _ in leaves)
    assert sorted(root.leaves()) == list(range(len(leaves)))
    tree = levelize(root)
    assert all(tree.depth[leaf] <= tree.level_max for leaf in range(len(leaves)))


@given(leaf_lists, hyper, st.integers(0, 2**32))
def test_unrelaxed_merges_respect_budget(leaves, hp, seed):
    q = _build(leaves, seed)
    cluster(q, params(**hp))
    for j, relaxed in enumerate(q.relaxed):
        if relaxed:
            continue
        a, b = q.right[j], q.left[j]
        lim_b = max_terminals_mp(q.size[b], hp["t_avg"], hp["p"], hp["alpha"], hp["sigma_p"])
        lim_a = max_terminals_mp(q.size[a], hp["t_avg"], hp["p"], hp["alpha"], hp["sigma_p"])
        assert q.terminals[a] <= lim_b * (1 + 1e-12)
        assert q.terminals[b] <= lim_a * (1 + 1e-12)
