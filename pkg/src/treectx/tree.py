"""Rooted, ordered, attributed trees with the structural queries the models need.

Nodes are stored in a flat table where every parent index is smaller than
the child's own index, so a single reverse sweep visits children before
parents.  Trees are immutable after construction and safe to share.
"""

from __future__ import annotations

from typing import Any, Iterable, Sequence

from .errors import TreeError


class AttributedTree:
    """Flat node table: parent pointer, derived child lists, opaque payloads."""

    __slots__ = ("parents", "children", "payloads")

    def __init__(self, parents: Sequence[int | None], payloads: Sequence[Any]) -> None:
        if len(parents) != len(payloads):
            raise TreeError(
                f"parents ({len(parents)}) and payloads ({len(payloads)}) differ in length"
            )
        if not parents:
            raise TreeError("tree must have at least one node")
        self.parents = tuple(parents)
        self.payloads = tuple(payloads)
        kids: list[list[int]] = [[] for _ in parents]
        for i, p in enumerate(self.parents):
            if p is not None and 0 <= p < len(parents) and p != i:
                kids[p].append(i)
        self.children = tuple(tuple(k) for k in kids)

    def __len__(self) -> int:
        return len(self.parents)

    def payload(self, node: int) -> Any:
        return self.payloads[self.check_index(node)]

    def with_payload(self, node: int, payload: Any) -> "AttributedTree":
        """New tree sharing everything except one node's payload."""
        self.check_index(node)
        payloads = list(self.payloads)
        payloads[node] = payload
        return AttributedTree(self.parents, payloads)

    def check_index(self, node: int) -> int:
        if not isinstance(node, int) or not 0 <= node < len(self.parents):
            raise TreeError(f"node index {node!r} out of range (tree has {len(self)} nodes)")
        return node

    # -- structural queries ----------------------------------------------

    def path_from_root(self, node: int) -> list[int]:
        """Root-first list of nodes ending at `node`, following parent links."""
        self.check_index(node)
        path = [node]
        while (p := self.parents[path[-1]]) is not None:
            path.append(p)
        path.reverse()
        return path

    def lca(self, nodes: Iterable[int]) -> int:
        """Deepest node that is an ancestor-or-self of every input node."""
        nodes = list(nodes)
        if not nodes:
            raise TreeError("lca: empty node set")
        depths = {}

        def depth(n: int) -> int:
            if n not in depths:
                d = 0
                m = n
                while (p := self.parents[m]) is not None:
                    m = p
                    d += 1
                depths[n] = d
            return depths[n]

        a = self.check_index(nodes[0])
        for b in nodes[1:]:
            b = self.check_index(b)
            da, db = depth(a), depth(b)
            while da > db:
                a = self.parents[a]
                da -= 1
            while db > da:
                b = self.parents[b]
                db -= 1
            while a != b:
                a = self.parents[a]
                b = self.parents[b]
        return a

    def subtree_nodes(self, node: int) -> list[int]:
        """The node itself followed by all descendants, in pre-order."""
        self.check_index(node)
        order = []
        stack = [node]
        while stack:
            n = stack.pop()
            order.append(n)
            stack.extend(reversed(self.children[n]))
        return order


def validate(tree: AttributedTree) -> list[str]:
    """Check the storage invariants; returns one message per violation."""
    defects = []
    roots = [i for i, p in enumerate(tree.parents) if p is None]
    if not roots:
        defects.append("no root: every node has a parent")
    elif len(roots) > 1:
        defects.append(f"multiple roots: nodes {roots}")
    if roots and roots[0] != 0:
        defects.append(f"root must be node 0, found at {roots[0]}")
    for i, p in enumerate(tree.parents):
        if p is None:
            continue
        if not 0 <= p < len(tree):
            defects.append(f"node {i}: parent index {p} out of range")
        elif p >= i:
            defects.append(f"node {i}: order violation (parent index {p} >= own index)")
    return defects
