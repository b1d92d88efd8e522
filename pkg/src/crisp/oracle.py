"""Brute-force enumeration ground truth for every query (c <= 16).

All oracle computations walk the full 2^c distribution table. Assignments are
indexed with variable 0 as the most significant bit, so index order equals
lexicographic order of the label vectors and first-index argmax implements
the shared lexicographic tie rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, all_assignments
from .evaluate import log_forward

ORACLE_CAP = 16


class OracleError(ValueError):
    pass


@dataclass
class DistributionTable:
    num_vars: int
    probs: np.ndarray  # shape (2^c,), nonnegative, sums to 1

    def assignment(self, index: int) -> np.ndarray:
        c = self.num_vars
        return np.array([(index >> (c - 1 - i)) & 1 for i in range(c)], dtype=np.int8)

    def index_of(self, assignment) -> int:
        c = self.num_vars
        idx = 0
        for i, v in enumerate(assignment):
            idx |= int(v) << (c - 1 - i)
        return idx


def enumerate_distribution(circuit: Circuit, params) -> DistributionTable:
    """Exhaustive table of exp(evaluate_log) over all complete assignments.

    Unnormalized circuits (products with constraints) are normalized by their
    total mass; normalized circuits are checked to sum to 1.
    """
    if circuit.num_vars > ORACLE_CAP:
        raise OracleError(f"oracle refuses c > {ORACLE_CAP}")
    masks = all_assignments(circuit.num_vars)
    logs = log_forward(circuit, params, masks)
    probs = np.exp(logs)
    total = probs.sum()
    if circuit.normalized:
        if abs(total - 1.0) > 1e-8:
            raise OracleError(f"normalized circuit sums to {total!r}")
        probs = probs / total
    else:
        if total <= 0.0:
            raise OracleError("circuit has zero total mass")
        probs = probs / total
    return DistributionTable(num_vars=circuit.num_vars, probs=probs)


def _marginal_table(table: DistributionTable, subset: tuple[int, ...]) -> np.ndarray:
    """Marginal probabilities over ``subset`` (in the given variable order)."""
    c = table.num_vars
    k = len(subset)
    out = np.zeros(1 << k)
    idx = np.arange(1 << c)
    pos = np.zeros(1 << c, dtype=np.int64)
    for j, v in enumerate(subset):
        bit = (idx >> (c - 1 - v)) & 1
        pos |= bit << (k - 1 - j)
    np.add.at(out, pos, table.probs)
    return out


def entropy(table: DistributionTable) -> float:
    p = table.probs[table.probs > 0]
    return float(-(p * np.log(p)).sum())


def subset_entropy(table: DistributionTable, subset) -> float:
    subset = tuple(sorted(int(v) for v in subset))
    if not subset:
        return 0.0
    marg = _marginal_table(table, subset)
    p = marg[marg > 0]
    return float(-(p * np.log(p)).sum())


def renyi_entropy(table: DistributionTable, subset, alpha: float) -> float:
    """Renyi entropy of order alpha of the marginal over ``subset``."""
    if alpha <= 0 or alpha == 1:
        raise OracleError("alpha must be positive and != 1")
    subset = tuple(sorted(int(v) for v in subset))
    if not subset:
        return 0.0
    marg = _marginal_table(table, subset)
    s = float(np.sum(marg ** alpha))
    return max(0.0, np.log(s) / (1.0 - alpha))


def conditional_entropy(table: DistributionTable, subset) -> float:
    """H(remainder | subset), computed directly; cross-checked against the
    chain rule H(Y) - H(subset) by the differential tests."""
    subset = tuple(sorted(int(v) for v in subset))
    c = table.num_vars
    rest = tuple(v for v in range(c) if v not in subset)
    if not rest:
        return 0.0
    if not subset:
        return entropy(table)
    k = len(subset)
    idx = np.arange(1 << c)
    pos = np.zeros(1 << c, dtype=np.int64)
    for j, v in enumerate(subset):
        bit = (idx >> (c - 1 - v)) & 1
        pos |= bit << (k - 1 - j)
    marg = _marginal_table(table, subset)
    out = 0.0
    for q in range(1 << k):
        pq = marg[q]
        if pq <= 0:
            continue
        cond = table.probs[pos == q] / pq
        cond = cond[cond > 0]
        out += pq * float(-(cond * np.log(cond)).sum())
    return out


def map_state(table: DistributionTable) -> tuple[np.ndarray, float]:
    """Argmax assignment under the lexicographic tie rule, plus its probability."""
    idx = int(np.argmax(table.probs))
    return table.assignment(idx), float(table.probs[idx])


def margin(table: DistributionTable) -> float:
    return 1.0 - float(np.max(table.probs))


def marginal(table: DistributionTable, assigned: dict[int, int]) -> float:
    if not assigned:
        return 1.0
    c = table.num_vars
    idx = np.arange(1 << c)
    keep = np.ones(1 << c, dtype=bool)
    for v, val in assigned.items():
        keep &= ((idx >> (c - 1 - v)) & 1) == val
    return float(table.probs[keep].sum())


def suspiciousness(table: DistributionTable, annotated) -> float:
    return float(np.max(table.probs)) - float(table.probs[table.index_of(annotated)])


def best_subset(table: DistributionTable, budget: float, costs, alpha: float,
                tie_eps: float = 1e-12) -> tuple[tuple[int, ...], float]:
    """Budget-feasible subset maximizing the Renyi entropy of its marginal.

    Depth-first include/exclude search in index order; the first-found
    optimum wins ties, which is the lexicographically smallest subset.
    """
    c = table.num_vars
    costs = np.asarray(costs, dtype=float)
    best: tuple[tuple[int, ...], float] = ((), 0.0)
    found = False

    def visit(i: int, chosen: list[int], spent: float) -> None:
        nonlocal best, found
        if i == c:
            if not chosen:
                return
            val = renyi_entropy(table, chosen, alpha)
            if not found or val > best[1] + tie_eps:
                best = (tuple(chosen), val)
                found = True
            return
        if spent + costs[i] <= budget:
            chosen.append(i)
            visit(i + 1, chosen, spent + costs[i])
            chosen.pop()
        visit(i + 1, chosen, spent)

    visit(0, [], 0.0)
    return best
