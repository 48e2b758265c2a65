import pytest
from hypothesis import given
from hypothesis import strategies as st

from htmanifold.dimension_tree import DimensionTree, complete_tree, paired_tree, parse_tree
from htmanifold.errors import DimensionError, ParameterError, PartitionError


def labels(tree):
    return [tuple(m + 1 for m in n.modes) for n in tree.nodes]


def check_structure(tree):
    assert sorted(tree.nodes[tree.root].modes) == list(range(tree.d))
    for n in tree.nodes:
        if n.is_leaf:
            assert len(n.modes) == 1 and n.right is None
        else:
            lm, rm = tree[n.left].modes, tree[n.right].modes
            assert set(lm).isdisjoint(rm) and lm + rm == n.modes
            assert tree[n.left].parent == tree.nodes.index(n)
    assert len(tree.internal) == len(tree.leaves) - 1 == tree.d - 1
    assert [tree[t].modes[0] for t in tree.leaves] == list(range(tree.d))


def test_complete_tree_small():
    t = complete_tree(2)
    assert labels(t) == [(1, 2), (1,), (2,)]
    assert t.traversal("parents-first") == [0, 1, 2]


def test_complete_tree_six_layout():
    t = complete_tree(6)
    root = t[t.root]
    assert labels(t)[root.left] == (1, 2, 3) and labels(t)[root.right] == (4, 5, 6)
    left = t[root.left]
    assert labels(t)[left.left] == (1, 2) and labels(t)[left.right] == (3,)
    assert t.to_string() == "(((1,2),3),((4,5),6))"


def test_complete_tree_four():
    t = complete_tree(4)
    assert t.to_string() == "((1,2),(3,4))"
    assert t.depth() == 2
    assert all(t[t[t[n].parent].parent].parent == 0 or t[n].modes for n in t.leaves)


@given(st.integers(2, 40))
def test_complete_tree_invariants(d):
    t = complete_tree(d)
    check_structure(t)
    # complete: depth ceil(log2 d), and every split puts the larger half on the left
    assert t.depth() == (d - 1).bit_length()
    for n in t.nodes:
        if not n.is_leaf:
            nl, nr = len(t[n.left].modes), len(t[n.right].modes)
            assert nl - nr in (0, 1)


def test_complete_tree_errors():
    with pytest.raises(DimensionError):
        complete_tree(1)


def test_paired_tree():
    t = paired_tree([[0, 2], [1, 3]])
    assert t.to_string() == "((1,3),(2,4))"
    assert paired_tree([[0, 1], [2, 3]]) == complete_tree(4)
    t5 = paired_tree([[0, 1], [2, 3, 4]])
    r = t5[t5[t5.root].right]
    assert labels(t5)[r.left] == (3, 4) and labels(t5)[r.right] == (5,)
    with pytest.raises(PartitionError):
        paired_tree([[0, 1], [1, 2]])
    with pytest.raises(PartitionError):
        paired_tree([[0], [2]])


def test_traversals():
    t = complete_tree(4)
    cf = t.traversal("children-first")
    assert cf[-1] == t.root
    pos = {n: i for i, n in enumerate(cf)}
    for i, n in enumerate(t.nodes):
        if not n.is_leaf:
            assert pos[n.left] < pos[i] and pos[n.right] < pos[i]
    assert cf == t.traversal("parents-first")[::-1]
    with pytest.raises(ParameterError):
        t.traversal("sideways")


def test_parse_tree():
    assert parse_tree("((1,2),(3,4))") == complete_tree(4)
    assert parse_tree("(1,2,3,4)") == complete_tree(4)
    assert parse_tree(" ( (1 ,3), (2,4) ) ") == paired_tree([[0, 2], [1, 3]])
    assert parse_tree("(1,2,3,4,5,6)").to_string() == "(((1,2),3),((4,5),6))"
    for bad in ("(1,2", "(1,(2,3)", "((1,2),(3,a))", "(0,1)", "(1,2))", "((1,2),((3,4),5),6)"):
        with pytest.raises(ParameterError):
            parse_tree(bad)
    with pytest.raises(PartitionError):
        parse_tree("(1,3)")
    with pytest.raises(DimensionError):
        parse_tree("1")


@given(st.integers(2, 12), st.randoms(use_true_random=False))
def test_to_string_round_trip(d, rnd):
    modes = list(range(d))
    rnd.shuffle(modes)

    def build(ms):
        if len(ms) == 1:
            return ms[0]
        k = rnd.randint(1, len(ms) - 1)
        return (build(ms[:k]), build(ms[k:]))

    t = DimensionTree(build(modes))
    check_structure(t)
    assert parse_tree(t.to_string()) == t
