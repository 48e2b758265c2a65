import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from htmanifold.completion import sample_fibers, sample_points
from htmanifold.dimension_tree import complete_tree, parse_tree
from htmanifold.errors import FormatError, SampleIndexError
from htmanifold.formats import (
    dten_bytes,
    dten_from_bytes,
    htck_bytes,
    htck_from_bytes,
    read_htck,
    read_samples,
    write_htck,
    write_samples,
)
from htmanifold.ht_format import expand, make_ranks, random_ht


def test_dten_layout_oracle():
    x = np.arange(6, dtype=float).reshape(2, 3)
    data = dten_bytes(x)
    assert data[:5] == b"DTEN1"
    assert struct.unpack("<3I", data[5:17]) == (2, 2, 3)
    # first index fastest
    assert np.frombuffer(data[17:], "<f8").tolist() == [0.0, 3.0, 1.0, 4.0, 2.0, 5.0]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.integers(0, 100))
def test_dten_round_trip(shape, seed):
    x = np.random.default_rng(seed).standard_normal(shape)
    y = dten_from_bytes(dten_bytes(x))
    assert y.shape == x.shape and np.array_equal(x, y)


def test_dten_errors():
    data = dten_bytes(np.ones((2, 2)))
    with pytest.raises(FormatError):
        dten_from_bytes(b"XTEN1" + data[5:])
    with pytest.raises(FormatError):
        dten_from_bytes(data[:-1])
    with pytest.raises(FormatError):
        dten_from_bytes(data + b"\0")


@pytest.mark.parametrize("tree_str", ["((1,2),(3,4))", "(((1,2),3),(4,5))", "((1,3),(2,4))", "(1,2)"])
def test_htck_round_trip(tree_str, tmp_path):
    tree = parse_tree(tree_str)
    shape = tuple(range(3, 3 + tree.d))
    x = random_ht(tree, make_ranks(tree, 2), shape, 0)
    path = tmp_path / "x.htck"
    write_htck(path, x)
    y = read_htck(path)
    assert y.tree == x.tree and y.ranks == x.ranks and y.shape == x.shape and y.orthogonal
    assert all(np.array_equal(a, b) for a, b in zip(x.blocks, y.blocks))
    assert np.array_equal(expand(x), expand(y))


def test_htck_non_orthogonal_flag():
    tree = complete_tree(3)
    x = random_ht(tree, make_ranks(tree, 2), (3, 3, 3), 1)
    blocks = list(x.blocks)
    blocks[1] = 2.0 * blocks[1]
    assert not htck_from_bytes(htck_bytes(x.replace(blocks, False))).orthogonal


def test_htck_errors():
    tree = complete_tree(3)
    data = htck_bytes(random_ht(tree, make_ranks(tree, 2), (3, 3, 3), 1))
    with pytest.raises(FormatError):
        htck_from_bytes(b"HTCK2" + data[5:])
    with pytest.raises(FormatError):
        htck_from_bytes(data[:-8])
    with pytest.raises(FormatError):
        htck_from_bytes(data + b"\0\0")
    n = struct.unpack("<I", data[5:9])[0]
    bad_tree = data[:9] + b"(" * n + data[9 + n :]
    with pytest.raises(FormatError):
        htck_from_bytes(bad_tree)


def test_samples_csv_round_trip(tmp_path):
    omega = sample_fibers((3, 4, 5), (0,), 0.5, 2)
    vals = np.random.default_rng(0).standard_normal(len(omega)) * 1e-7
    path = tmp_path / "s.csv"
    write_samples(path, omega, vals)
    lines = path.read_text().splitlines()
    assert lines[0] == "i1,i2,i3,value" and len(lines) == len(omega) + 1
    first = lines[1].split(",")
    assert [int(c) for c in first[:3]] == (omega.indices[0] + 1).tolist()
    back, bv = read_samples(path, (3, 4, 5), "fibers", (0,))
    assert np.array_equal(back.indices, omega.indices) and np.array_equal(bv, vals)
    assert back.kind == "fibers" and back.free_modes == (0,)


def test_samples_csv_errors(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("i1,i2,val\n1,1,0.5\n")
    with pytest.raises(FormatError):
        read_samples(p, (2, 2))
    p.write_text("i1,i2,value\n1,1\n")
    with pytest.raises(FormatError):
        read_samples(p, (2, 2))
    p.write_text("i1,i2,value\n0,1,0.5\n")
    with pytest.raises(FormatError):
        read_samples(p, (2, 2))
    p.write_text("i1,i2,value\n1,x,0.5\n")
    with pytest.raises(FormatError):
        read_samples(p, (2, 2))
    p.write_text("i1,i2,value\n1,3,0.5\n")
    with pytest.raises(SampleIndexError):
        read_samples(p, (2, 2))
    with pytest.raises(FormatError):
        write_samples(p, sample_points((2, 2), 0.5, 0), np.zeros(3))
