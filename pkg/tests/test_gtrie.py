import re
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gtries.errors import CapExceeded
from gtries.gtrie import (ExplicitLabeling, SeededLabeling, build_gtrie, count_stats, export_dot,
                          label_at, make_labelings, size_by_definition)
from gtries.model import validate_params

from strategies import instances

ALPHA, BETA, GAMMA = 0, 1, 2


def worked_example_labelings():
    """The three labelings of the 2-ary tree of the worked example;
    direction 0 is the upper edge."""
    L1 = {
        (0,): ALPHA, (0, 0): GAMMA, (0, 1): BETA,
        (0, 0, 0): BETA, (0, 0, 1): ALPHA, (0, 1, 0): ALPHA, (0, 1, 1): GAMMA,
        (1,): GAMMA, (1, 0): GAMMA, (1, 1): ALPHA,
        (1, 0, 0): GAMMA, (1, 0, 1): BETA, (1, 1, 0): ALPHA, (1, 1, 1): GAMMA,
    }
    L2 = {(0,): ALPHA, (0, 0): BETA, (0, 1): GAMMA, (1,): BETA}
    L3 = {(0,): BETA, (1,): GAMMA, (1, 0): ALPHA, (1, 1): ALPHA,
          (1, 1, 0): BETA, (1, 1, 1): BETA}
    return [ExplicitLabeling(t, 2, 3) for t in (L1, L2, L3)]


def hand_pair():
    # M = 1, A = 2: streams 0,0,... and 0,1,...
    return [ExplicitLabeling({(0,): 0, (0, 0): 0}, 1, 2),
            ExplicitLabeling({(0,): 0, (0, 0): 1}, 1, 2)]


def test_worked_example_instance():
    trie = build_gtrie(worked_example_labelings())
    st_ = count_stats(trie)
    assert (st_.S, st_.L, st_.K, st_.R) == (4, 2, 12, 9)
    assert size_by_definition(worked_example_labelings()) == 4
    deep = [node for node in trie.nodes() if node.depth == 2]
    assert len(deep) == 1 and deep[0].letters == (GAMMA, ALPHA) and deep[0].keys == (0, 2)


def test_hand_instance():
    trie = build_gtrie(hand_pair())
    st_ = count_stats(trie)
    assert (st_.S, st_.L, st_.K, st_.R) == (2, 1, 2, 1)
    assert st_.K + st_.R == (2 - 1) * 2 + 1
    assert size_by_definition(hand_pair()) == 2


def test_small_n_is_empty(cfg_n):
    for n in (0, 1):
        labs = make_labelings(cfg_n, n, 5)
        trie = build_gtrie(labs, M=2, A=3)
        assert trie.size == 0 and trie.root is None
        assert size_by_definition(labs, M=2, A=3) == 0
    # a missing root is itself one external node
    s0 = count_stats(build_gtrie([], M=2, A=3))
    s1 = count_stats(build_gtrie(make_labelings(cfg_n, 1, 5)))
    assert (s0.S, s0.K, s0.R, s0.L) == (0, 0, 1, 0)
    assert (s1.S, s1.K, s1.R, s1.L) == (0, 1, 0, 0)


def test_weights():
    st_ = count_stats(build_gtrie(worked_example_labelings()), weights=(1.0, 2.0, 0.5))
    assert st_.N == 9 + 24 + 2


def test_label_determinism(cfg_n):
    lab = SeededLabeling(99, 3, cfg_n)
    assert lab.label_at((0, 1, 1)) == label_at(lab, (0, 1, 1))
    assert [lab.label_at((1,) * d) for d in range(1, 30)] == [lab.label_at((1,) * d) for d in range(1, 30)]
    with pytest.raises(ValueError):
        label_at(lab, ())


def _paths(count):
    # distinct binary paths of length 20
    return [tuple((i >> b) & 1 for b in range(20)) for i in range(count)]


def test_label_frequencies_chi_square(cfg_n):
    from scipy import stats
    lab = SeededLabeling(2024, 0, cfg_n)
    counts = Counter(lab.label_at(p) for p in _paths(100_000))
    observed = [counts[j] for j in range(3)]
    expected = [1e5 * x for x in cfg_n.p]
    for o, e, x in zip(observed, expected, cfg_n.p):
        assert abs(o - e) <= 3 * (1e5 * x * (1 - x)) ** 0.5
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_keys_independent(cfg_n):
    import numpy as np
    a, b = SeededLabeling(7, 0, cfg_n), SeededLabeling(7, 1, cfg_n)
    paths = _paths(100_000)
    x = np.array([a.label_at(p) for p in paths])
    y = np.array([b.label_at(p) for p in paths])
    assert abs(np.corrcoef(x, y)[0, 1]) < 4 / len(paths) ** 0.5


@given(instances(), st.integers(0, 8), st.integers(0, 2**63))
def test_oracle_equivalence_and_identity(params, n, seed):
    labs = make_labelings(params, n, seed)
    try:
        trie = build_gtrie(labs, depth_cap=8)
    except CapExceeded:
        with pytest.raises(CapExceeded):
            size_by_definition(labs, depth_cap=8)
        return
    assert trie.size == size_by_definition(labs, depth_cap=8)
    st_ = count_stats(trie)
    assert st_.S == trie.size
    if st_.S >= 1:
        assert st_.K + st_.R == (params.M * params.A - 1) * st_.S + 1
        assert 1 <= st_.L <= st_.S
    # conservation: each direction splits the keys of its node
    for node in trie.nodes():
        for row in node.slots:
            assert sorted(k for keys in row for k in keys) == list(node.keys)
        for (i, j), child in node.children.items():
            assert child.keys == node.slots[i][j] and len(child.keys) >= 2


@given(instances(), st.integers(0, 2**63))
def test_monotone_under_insertion(params, seed):
    labs = make_labelings(params, 7, seed)
    sizes = []
    for n in range(len(labs) + 1):
        try:
            sizes.append(build_gtrie(labs[:n], depth_cap=40, M=params.M, A=params.A).size)
        except CapExceeded:
            return
    assert all(b >= a for a, b in zip(sizes, sizes[1:]))


def test_classical_trie_key_count(classical):
    for seed in range(30):
        trie = build_gtrie(make_labelings(classical, 12, seed))
        assert count_stats(trie).K == 12


def test_caps(cfg_u):
    with pytest.raises(CapExceeded) as err:
        build_gtrie(make_labelings(cfg_u, 50, 1), node_cap=3)
    assert err.value.which == "nodes"
    same = [ExplicitLabeling({(0,) * d: 0 for d in range(1, 20)}, 1, 2)] * 2
    with pytest.raises(CapExceeded) as err:
        build_gtrie(same, depth_cap=5)
    assert err.value.which == "depth"
    with pytest.raises(CapExceeded):
        size_by_definition(same, depth_cap=5)


def test_dot_empty_and_hand():
    empty = export_dot(build_gtrie([], M=1, A=2))
    assert not re.search(r"shape=", empty)
    text = export_dot(build_gtrie(hand_pair()))
    assert text.count("shape=circle") == 2
    assert text.count("shape=box") == 3
    assert '[label="(0, 1)"]' in text


def test_dot_parses(cfg_u):
    pydot = pytest.importorskip("pydot")
    text = export_dot(build_gtrie(make_labelings(cfg_u, 10, 4)))
    graphs = pydot.graph_from_dot_data(text)
    assert graphs and len(graphs) == 1
    g = graphs[0]
    shapes = Counter(node.get_shape() for node in g.get_nodes())
    st_ = count_stats(build_gtrie(make_labelings(cfg_u, 10, 4)))
    assert shapes["circle"] == st_.S
    assert shapes["box"] == st_.K + st_.R
    assert len(g.get_edges()) == st_.S * 6
