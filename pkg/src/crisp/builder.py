"""Randomized construction of deterministic, structured-decomposable circuits.

The construction is a Shannon expansion over the vtree. Each internal vtree
node owns a region whose sum units decide on the node's pivot variable (the
first leaf variable of the left subtree, hence seed-chosen through the vtree
shuffle). A sum's two inputs are products of a support-pinned unit over the
left child and a distribution unit over the right child. Sub-regions are
keyed by the branch value they hang under, so the two branches of a decision
receive independently parameterized children; ``width`` replicas per
sub-region give additional mixture capacity through seed-chosen wiring.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, CircuitBuilder
from .vtree import Vtree, VtreeNode, random_vtree


class BuilderError(ValueError):
    pass


@dataclass(frozen=True)
class BuilderConfig:
    num_vars: int
    width: int = 2
    seed: int = 0
    vtree_shape: str = "balanced-random"

    def __post_init__(self):
        if self.num_vars < 1:
            raise BuilderError("num_vars must be >= 1")
        if self.width < 1:
            raise BuilderError("width must be >= 1")
        if self.vtree_shape not in ("balanced-random", "right-linear"):
            raise BuilderError(f"unknown vtree shape {self.vtree_shape!r}")


def build_crisp(vtree: Vtree, width: int, seed: int) -> Circuit:
    """Deterministic structured-decomposable circuit skeleton over ``vtree``.

    Deterministic given (vtree, width, seed); passes the smoothness,
    decomposability, vtree-conformance, and determinism checks by
    construction.
    """
    if width < 1:
        raise BuilderError("width must be >= 1")
    rng = np.random.default_rng(seed)
    b = CircuitBuilder(vtree.num_vars)
    dist_memo: dict[tuple[int, int, int], int] = {}
    pin_memo: dict[tuple[int, int, int, int, int], int] = {}
    ind_memo: dict[tuple[int, int], int] = {}
    prod_memo: dict[tuple[int, int], int] = {}

    def indicator(var: int, val: int) -> int:
        key = (var, val)
        if key not in ind_memo:
            ind_memo[key] = b.ind(var, val)
        return ind_memo[key]

    def product(left: int, right: int) -> int:
        key = (left, right)
        if key not in prod_memo:
            prod_memo[key] = b.prod([left, right])
        return prod_memo[key]

    def draw() -> int:
        return int(rng.integers(width))

    def dist(node: VtreeNode, ctx: int, rep: int) -> int:
        key = (node.id, ctx, rep)
        if key in dist_memo:
            return dist_memo[key]
        if node.is_leaf:
            uid = b.bern(node.var)
        else:
            pivot = node.pivot
            inputs = []
            for branch in (0, 1):
                left = pin(node.left, pivot, branch, branch, draw())
                right = dist(node.right, branch, draw())
                inputs.append(product(left, right))
            uid = b.sum(inputs, decision_var=pivot)
        dist_memo[key] = uid
        return uid

    def pin(node: VtreeNode, var: int, val: int, ctx: int, rep: int) -> int:
        if node.is_leaf:
            return indicator(var, val)
        key = (node.id, var, val, ctx, rep)
        if key in pin_memo:
            return pin_memo[key]
        if var in node.left.vars:
            left = pin(node.left, var, val, ctx, draw())
            right = dist(node.right, ctx, draw())
        else:
            left = dist(node.left, ctx, draw())
            right = pin(node.right, var, val, ctx, draw())
        uid = product(left, right)
        pin_memo[key] = uid
        return uid

    root = dist(vtree.root, -1, 0)
    return b.build(root)


def build_crisp_from_config(cfg: BuilderConfig) -> tuple[Vtree, Circuit]:
    vtree = random_vtree(cfg.num_vars, cfg.vtree_shape, cfg.seed)
    return vtree, build_crisp(vtree, cfg.width, cfg.seed)


def build_factorized(num_vars: int) -> Circuit:
    """Product of independent Bernoulli leaves, split along a right-linear
    vtree. Marginal-deterministic for every label subset."""
    if num_vars < 1:
        raise BuilderError("num_vars must be >= 1")
    b = CircuitBuilder(num_vars)
    leaves = [b.bern(v) for v in range(num_vars)]
    node = leaves[-1]
    for v in range(num_vars - 2, -1, -1):
        node = b.prod([leaves[v], node])
    return b.build(node)


def factorized_vtree(num_vars: int) -> Vtree:
    return random_vtree(num_vars, "right-linear", 0)


@dataclass(frozen=True)
class LayoutSummary:
    num_params: int
    num_sum_weights: int
    num_leaf_params: int
    sum_blocks: tuple[tuple[int, int], ...]
    leaf_slots: tuple[int, ...]


def param_layout(circuit: Circuit) -> LayoutSummary:
    """Counts and offsets of the sum-weight and leaf-parameter blocks."""
    layout = circuit.layout
    if layout is None:
        raise BuilderError("circuit has no canonical parameter layout")
    n_sum = sum(fan for _, fan in layout.sum_blocks)
    return LayoutSummary(num_params=layout.num_params,
                         num_sum_weights=n_sum,
                         num_leaf_params=len(layout.leaf_slots),
                         sum_blocks=layout.sum_blocks,
                         leaf_slots=layout.leaf_slots)


def random_params(circuit: Circuit, seed: int, concentration: float = 1.0,
                  leaf_low: float = 0.05, leaf_high: float = 0.95) -> np.ndarray:
    """Valid random parameter vector: per-sum log-weights normalized in log
    space, leaf probabilities uniform on [leaf_low, leaf_high]."""
    layout = circuit.layout
    if layout is None:
        raise BuilderError("circuit has no canonical parameter layout")
    rng = np.random.default_rng(seed)
    params = np.zeros(layout.num_params)
    for off, fan in layout.sum_blocks:
        w = rng.dirichlet(np.full(fan, concentration))
        w = np.clip(w, 1e-12, None)
        params[off:off + fan] = np.log(w / w.sum())
    for slot in layout.leaf_slots:
        params[slot] = rng.uniform(leaf_low, leaf_high)
    return params
