"""Binary dimension trees.

Nodes live in a flat list in depth-first preorder (left child before right),
so node 0 is the root and ``range(len(tree))`` is already a parents-first
order. Each node's ``modes`` tuple is the concatenation of its children's
modes; that order fixes how the rows of the node's frame are linearized.

The text form used in config files is a nested parenthesis expression over
1-based modes, e.g. ``((1,2),(3,4))``. A parenthesized flat list of more than
two modes is expanded into a complete subtree, so ``(1,2,3,4)`` and
``((1,2),(3,4))`` denote the same tree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .errors import DimensionError, ParameterError, PartitionError


@dataclass(frozen=True)
class TreeNode:
    modes: tuple[int, ...]
    parent: Optional[int]
    left: Optional[int]
    right: Optional[int]

    @property
    def is_leaf(self) -> bool:
        return self.left is None


Nested = Union[int, tuple]


class DimensionTree:
    """Immutable binary dimension tree over modes ``0..d-1``."""

    def __init__(self, nested: Nested):
        nodes: list[TreeNode] = []

        def build(sub, parent):
            idx = len(nodes)
            nodes.append(None)  # placeholder keeps preorder ids
            if isinstance(sub, int):
                nodes[idx] = TreeNode((sub,), parent, None, None)
                return idx
            if len(sub) != 2:
                raise PartitionError(f"internal node must have two children, got {sub!r}")
            left = build(sub[0], idx)
            right = build(sub[1], idx)
            modes = nodes[left].modes + nodes[right].modes
            nodes[idx] = TreeNode(modes, parent, left, right)
            return idx

        if isinstance(nested, int):
            raise DimensionError("a dimension tree needs at least two modes")
        build(nested, None)
        root_modes = nodes[0].modes
        d = len(root_modes)
        if sorted(root_modes) != list(range(d)):
            raise PartitionError(f"leaf modes {sorted(root_modes)} are not a partition of 0..{d - 1}")
        self._nodes = tuple(nodes)
        self._nested = nested
        self.d = d
        self.root = 0
        self.leaves = tuple(sorted((i for i, n in enumerate(nodes) if n.is_leaf), key=lambda i: nodes[i].modes[0]))
        self.internal = tuple(i for i, n in enumerate(nodes) if not n.is_leaf)

    # -- basic access -------------------------------------------------------
    def __len__(self) -> int:
        return len(self._nodes)

    def __getitem__(self, i: int) -> TreeNode:
        return self._nodes[i]

    @property
    def nodes(self) -> tuple[TreeNode, ...]:
        return self._nodes

    @property
    def nested(self) -> Nested:
        return self._nested

    def is_leaf(self, i: int) -> bool:
        return self._nodes[i].is_leaf

    def leaf_of_mode(self, mode: int) -> int:
        return self.leaves[mode]

    def depth(self) -> int:
        def rec(i):
            n = self._nodes[i]
            return 0 if n.is_leaf else 1 + max(rec(n.left), rec(n.right))

        return rec(0)

    def traversal(self, order: str = "parents-first") -> list[int]:
        """Node ids with parents before children, or the reverse."""
        ids = list(range(len(self._nodes)))
        if order == "parents-first":
            return ids
        if order == "children-first":
            return ids[::-1]
        raise ParameterError(f"unknown traversal order {order!r}")

    def non_root(self) -> list[int]:
        return list(range(1, len(self._nodes)))

    # -- comparison / text form ----------------------------------------------
    def __eq__(self, other) -> bool:
        return isinstance(other, DimensionTree) and self._nested == other._nested

    def __hash__(self) -> int:
        return hash(self._nested)

    def to_string(self) -> str:
        def rec(sub):
            if isinstance(sub, int):
                return str(sub + 1)
            return f"({rec(sub[0])},{rec(sub[1])})"

        return rec(self._nested)

    def __repr__(self) -> str:
        return f"DimensionTree({self.to_string()!r})"


def _complete_nested(modes: Sequence[int]) -> Nested:
    modes = list(modes)
    if len(modes) == 1:
        return modes[0]
    half = (len(modes) + 1) // 2
    return (_complete_nested(modes[:half]), _complete_nested(modes[half:]))


def complete_tree(d: int) -> DimensionTree:
    """Balanced tree over modes ``0..d-1``; the larger half always goes left.

    For ``d = 6`` this yields ``((1,2),3),((4,5),6)`` in 1-based notation.
    """
    if d < 2:
        raise DimensionError(f"need d >= 2, got {d}")
    return DimensionTree(_complete_nested(range(d)))


def paired_tree(groups: Sequence[Sequence[int]]) -> DimensionTree:
    """Tree whose root separates two mode groups, each completed independently."""
    if len(groups) != 2:
        raise PartitionError("paired_tree needs exactly two mode groups")
    g0, g1 = (list(int(m) for m in g) for g in groups)
    if not g0 or not g1:
        raise PartitionError("mode groups must be nonempty")
    allm = g0 + g1
    if len(set(allm)) != len(allm) or sorted(allm) != list(range(len(allm))):
        raise PartitionError(f"groups {groups} do not partition 0..{len(allm) - 1}")
    return DimensionTree((_complete_nested(g0), _complete_nested(g1)))


_TOKEN = re.compile(r"\s*(?:(\d+)|(.))")


def parse_tree(text: str) -> DimensionTree:
    """Parse the nested parenthesis grammar over 1-based modes."""
    tokens = []
    for m in _TOKEN.finditer(text.strip()):
        if m.group(1) is not None:
            tokens.append(int(m.group(1)))
        elif m.group(2) in "(),":
            tokens.append(m.group(2))
        elif m.group(2).strip():
            raise ParameterError(f"unexpected character {m.group(2)!r} in tree string {text!r}")
    pos = 0

    def group():
        nonlocal pos
        if pos >= len(tokens):
            raise ParameterError(f"unexpected end of tree string {text!r}")
        tok = tokens[pos]
        if isinstance(tok, int):
            pos += 1
            if tok < 1:
                raise ParameterError("modes are 1-based in tree strings")
            return tok - 1
        if tok != "(":
            raise ParameterError(f"unexpected token {tok!r} in tree string {text!r}")
        pos += 1
        items = [group()]
        while pos < len(tokens) and tokens[pos] == ",":
            pos += 1
            items.append(group())
        if pos >= len(tokens) or tokens[pos] != ")":
            raise ParameterError(f"missing ')' in tree string {text!r}")
        pos += 1
        if len(items) == 1:
            return items[0]
        if len(items) == 2:
            return tuple(items)
        if not all(isinstance(i, int) for i in items):
            raise ParameterError("only flat mode lists may have more than two entries")
        return _complete_nested(items)

    nested = group()
    if pos != len(tokens):
        raise ParameterError(f"trailing tokens in tree string {text!r}")
    return DimensionTree(nested)
