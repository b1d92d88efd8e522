"""Variable trees (vtrees): binary trees over label variables.

A vtree fixes how circuit scopes may be split, which is what makes circuit
products and power materializations polynomial-time. Every product unit in a
conforming circuit splits its scope exactly as some vtree node does.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class VtreeError(ValueError):
    pass


@dataclass(frozen=True)
class VtreeNode:
    """One node of a vtree. Leaves carry a single variable index."""

    id: int
    var: int = -1
    left: "VtreeNode | None" = None
    right: "VtreeNode | None" = None
    # leaf variable indices in left-to-right order; defines the pivot
    leaf_order: tuple[int, ...] = field(default=())

    @property
    def is_leaf(self) -> bool:
        return self.var >= 0

    @property
    def vars(self) -> frozenset[int]:
        return frozenset(self.leaf_order)

    @property
    def pivot(self) -> int:
        """Decision variable of this node: first leaf variable of the left child.

        For leaves the pivot is the variable itself. Because balanced-random
        vtrees shuffle the leaf order by seed, the pivot is a seed-chosen
        member of the left subtree.
        """
        if self.is_leaf:
            return self.var
        return self.left.leaf_order[0]


@dataclass(frozen=True)
class Vtree:
    root: VtreeNode
    num_vars: int
    nodes: tuple[VtreeNode, ...]  # all nodes, ids dense in [0, len)

    def internal_nodes(self) -> list[VtreeNode]:
        return [n for n in self.nodes if not n.is_leaf]

    def split_table(self) -> dict[frozenset[int], tuple[frozenset[int], frozenset[int]]]:
        """Map from an internal node's variable set to its (left, right) split."""
        return {n.vars: (n.left.vars, n.right.vars) for n in self.internal_nodes()}

    def validate(self) -> None:
        seen: set[int] = set()
        for n in self.nodes:
            if n.is_leaf:
                if n.var in seen:
                    raise VtreeError(f"variable {n.var} appears in two leaves")
                seen.add(n.var)
            else:
                if n.left.vars & n.right.vars:
                    raise VtreeError(f"node {n.id} has overlapping children")
                if n.left.vars | n.right.vars != n.vars:
                    raise VtreeError(f"node {n.id} split does not cover its scope")
        if seen != set(range(self.num_vars)):
            raise VtreeError("leaves do not partition the variable set")


def _build(order: list[int], nodes: list[VtreeNode], balanced: bool) -> VtreeNode:
    if len(order) == 1:
        node = VtreeNode(id=len(nodes), var=order[0], leaf_order=(order[0],))
        nodes.append(node)
        return node
    cut = (len(order) + 1) // 2 if balanced else 1
    left = _build(order[:cut], nodes, balanced)
    right = _build(order[cut:], nodes, balanced)
    node = VtreeNode(id=len(nodes), left=left, right=right,
                     leaf_order=left.leaf_order + right.leaf_order)
    nodes.append(node)
    return node


def random_vtree(num_vars: int, shape: str = "balanced-random", seed: int = 0) -> Vtree:
    """Build a vtree over ``num_vars`` binary variables.

    ``balanced-random`` shuffles the variables by ``seed`` and splits the
    order recursively into halves (ceil left, floor right). ``right-linear``
    splits off the lowest-index variable at each level and ignores the seed.
    """
    if num_vars < 1:
        raise VtreeError("num_vars must be >= 1")
    if shape == "balanced-random":
        order = list(np.random.default_rng(seed).permutation(num_vars))
        order = [int(v) for v in order]
        balanced = True
    elif shape == "right-linear":
        order = list(range(num_vars))
        balanced = False
    else:
        raise VtreeError(f"unknown vtree shape {shape!r}")
    nodes: list[VtreeNode] = []
    root = _build(order, nodes, balanced)
    vt = Vtree(root=root, num_vars=num_vars, nodes=tuple(nodes))
    vt.validate()
    return vt


def to_text(vtree: Vtree) -> str:
    """Nested parenthesized form, leaves as variable indices."""

    def render(n: VtreeNode) -> str:
        if n.is_leaf:
            return str(n.var)
        return f"({render(n.left)} {render(n.right)})"

    return render(vtree.root) + "\n"


def from_text(text: str) -> Vtree:
    tokens: list[str] = []
    for ch in text.replace("(", " ( ").replace(")", " ) ").split():
        tokens.append(ch)
    pos = 0
    nodes: list[VtreeNode] = []

    def parse() -> VtreeNode:
        nonlocal pos
        if pos >= len(tokens):
            raise VtreeError("unexpected end of vtree text")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            left = parse()
            right = parse()
            if pos >= len(tokens) or tokens[pos] != ")":
                raise VtreeError("missing ')' in vtree text")
            pos += 1
            node = VtreeNode(id=len(nodes), left=left, right=right,
                             leaf_order=left.leaf_order + right.leaf_order)
            nodes.append(node)
            return node
        if tok == ")":
            raise VtreeError("unexpected ')' in vtree text")
        node = VtreeNode(id=len(nodes), var=int(tok), leaf_order=(int(tok),))
        nodes.append(node)
        return node

    root = parse()
    if pos != len(tokens):
        raise VtreeError("trailing tokens in vtree text")
    vt = Vtree(root=root, num_vars=len(root.leaf_order), nodes=tuple(nodes))
    vt.validate()
    return vt


def save(vtree: Vtree, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_text(vtree))


def load(path: str) -> Vtree:
    with open(path, "r", encoding="utf-8") as fh:
        return from_text(fh.read())
