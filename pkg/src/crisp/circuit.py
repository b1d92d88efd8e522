"""Circuit graph representation and structural-property checks.

A circuit is an immutable DAG of units over binary label variables:

* ``bern``  -- Bernoulli leaf over one variable. Its success probability
  lives in the parameter vector; ``slots`` lists the parameter indices whose
  probabilities are multiplied together (built circuits use exactly one slot,
  circuit products fuse several). ``pin`` restricts the support to one value.
* ``ind``   -- parameter-free indicator leaf, 1 iff its variable equals
  ``value``.
* ``sum``   -- weighted sum. Each input carries a weight reference
  ``(const, slots)``: the log-weight is the constant plus the referenced
  log-parameters. Built circuits use ``(0.0, (slot,))`` with locally
  normalized log-weights; logic circuits use bare constants.
* ``prod``  -- product of inputs with disjoint scopes (binary in practice).

Parameters are kept separate from structure so one shared structure can be
re-parameterized per input by the gating network.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .vtree import Vtree

BERN = "bern"
IND = "ind"
SUM = "sum"
PROD = "prod"

MARG = -1  # evidence-mask code for a marginalized variable


class CircuitError(ValueError):
    pass


class StructureError(CircuitError):
    pass


WeightRef = tuple[float, tuple[int, ...]]


@dataclass(frozen=True)
class Unit:
    id: int
    kind: str
    inputs: tuple[int, ...] = ()
    var: int = -1                      # bern / ind
    value: int = -1                    # ind
    slots: tuple[int, ...] = ()        # bern parameter factors
    pin: int = -1                      # bern support restriction, -1 = none
    weights: tuple[WeightRef, ...] = ()  # sum, parallel to inputs
    decision_var: int = -1             # sum determinism certificate


@dataclass(frozen=True)
class ParamLayout:
    """Slot assignment for a built circuit.

    ``sum_blocks`` lists (offset, fan_in) per sum unit in topological order;
    ``leaf_slots`` lists the slot of every Bernoulli leaf. Sum weights are
    stored as log-probabilities normalized per block, leaf parameters as
    probabilities in (0, 1).
    """

    num_params: int
    sum_blocks: tuple[tuple[int, int], ...]
    leaf_slots: tuple[int, ...]
    sum_block_of_unit: dict[int, int] = field(default_factory=dict)
    leaf_slot_of_unit: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Circuit:
    units: tuple[Unit, ...]
    root: int
    num_vars: int
    num_params: int
    layout: ParamLayout | None = None
    normalized: bool = True  # False for unnormalized products of circuits

    def __post_init__(self):
        object.__setattr__(self, "_scope_cache", None)

    @property
    def num_units(self) -> int:
        return len(self.units)

    @property
    def num_edges(self) -> int:
        return sum(len(u.inputs) for u in self.units)

    def scopes(self) -> list[frozenset[int]]:
        if self._scope_cache is None:
            object.__setattr__(self, "_scope_cache", compute_scopes(self))
        return self._scope_cache


@dataclass
class CheckReport:
    name: str
    ok: bool
    failures: list[tuple[int, str]] = field(default_factory=list)

    def add(self, unit_id: int, msg: str) -> None:
        self.ok = False
        self.failures.append((unit_id, msg))

    def __str__(self) -> str:
        if self.ok:
            return f"{self.name}: pass"
        lines = "; ".join(f"unit {u}: {m}" for u, m in self.failures[:5])
        return f"{self.name}: FAIL ({len(self.failures)} units) {lines}"


class CircuitBuilder:
    """Accumulates units in topological order and finalizes a Circuit."""

    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        self.units: list[Unit] = []

    def _add(self, unit: Unit) -> int:
        self.units.append(unit)
        return unit.id

    def bern(self, var: int, slots: tuple[int, ...] = (), pin: int = -1) -> int:
        return self._add(Unit(id=len(self.units), kind=BERN, var=var,
                              slots=slots, pin=pin))

    def ind(self, var: int, value: int) -> int:
        return self._add(Unit(id=len(self.units), kind=IND, var=var, value=value))

    def sum(self, inputs: list[int], decision_var: int = -1,
            weights: list[WeightRef] | None = None) -> int:
        ins = tuple(inputs)
        for i in ins:
            if i >= len(self.units):
                raise StructureError("sum input must precede the sum")
        w = tuple(weights) if weights is not None else ()
        return self._add(Unit(id=len(self.units), kind=SUM, inputs=ins,
                              weights=w, decision_var=decision_var))

    def prod(self, inputs: list[int]) -> int:
        ins = tuple(inputs)
        for i in ins:
            if i >= len(self.units):
                raise StructureError("product input must precede the product")
        return self._add(Unit(id=len(self.units), kind=PROD, inputs=ins))

    def build(self, root: int, assign_slots: bool = True,
              num_params: int = 0, normalized: bool = True) -> Circuit:
        units = list(self.units)
        if assign_slots:
            next_slot = 0
            sum_blocks: list[tuple[int, int]] = []
            leaf_slots: list[int] = []
            sum_block_of_unit: dict[int, int] = {}
            leaf_slot_of_unit: dict[int, int] = {}
            for u in units:
                if u.kind == SUM:
                    fan = len(u.inputs)
                    weights = tuple((0.0, (next_slot + i,)) for i in range(fan))
                    units[u.id] = replace(u, weights=weights)
                    sum_block_of_unit[u.id] = next_slot
                    sum_blocks.append((next_slot, fan))
                    next_slot += fan
                elif u.kind == BERN:
                    units[u.id] = replace(u, slots=(next_slot,))
                    leaf_slot_of_unit[u.id] = next_slot
                    leaf_slots.append(next_slot)
                    next_slot += 1
            layout = ParamLayout(num_params=next_slot,
                                 sum_blocks=tuple(sum_blocks),
                                 leaf_slots=tuple(leaf_slots),
                                 sum_block_of_unit=sum_block_of_unit,
                                 leaf_slot_of_unit=leaf_slot_of_unit)
            circuit = Circuit(units=tuple(units), root=root,
                              num_vars=self.num_vars, num_params=next_slot,
                              layout=layout, normalized=normalized)
        else:
            circuit = Circuit(units=tuple(units), root=root,
                              num_vars=self.num_vars, num_params=num_params,
                              layout=None, normalized=normalized)
        validate_structure(circuit)
        return circuit


def validate_structure(circuit: Circuit) -> None:
    reachable = reachable_units(circuit)
    if len(reachable) != circuit.num_units:
        unreached = sorted(set(range(circuit.num_units)) - reachable)
        raise StructureError(f"units not reachable from root: {unreached[:10]}")
    for u in circuit.units:
        for i in u.inputs:
            if i >= u.id:
                raise StructureError(f"unit {u.id} has non-topological input {i}")
        if u.kind in (BERN, IND):
            if u.inputs:
                raise StructureError(f"leaf {u.id} has inputs")
            if not (0 <= u.var < circuit.num_vars):
                raise StructureError(f"leaf {u.id} has variable {u.var} out of range")


def reachable_units(circuit: Circuit) -> set[int]:
    seen = {circuit.root}
    stack = [circuit.root]
    while stack:
        u = circuit.units[stack.pop()]
        for i in u.inputs:
            if i not in seen:
                seen.add(i)
                stack.append(i)
    return seen


def compute_scopes(circuit: Circuit) -> list[frozenset[int]]:
    """Bottom-up scope table: leaves own their variable, inner units the union."""
    scopes: list[frozenset[int]] = [frozenset()] * circuit.num_units
    for u in circuit.units:
        if u.kind in (BERN, IND):
            scopes[u.id] = frozenset((u.var,))
        else:
            s: frozenset[int] = frozenset()
            for i in u.inputs:
                s |= scopes[i]
            scopes[u.id] = s
    return scopes


def check_smooth(circuit: Circuit) -> CheckReport:
    scopes = circuit.scopes()
    report = CheckReport("smoothness", True)
    for u in circuit.units:
        if u.kind != SUM:
            continue
        base = scopes[u.inputs[0]] if u.inputs else frozenset()
        for i in u.inputs[1:]:
            if scopes[i] != base:
                report.add(u.id, f"input scopes differ: {sorted(base)} vs {sorted(scopes[i])}")
                break
    return report


def check_decomposable(circuit: Circuit) -> CheckReport:
    scopes = circuit.scopes()
    report = CheckReport("decomposability", True)
    for u in circuit.units:
        if u.kind != PROD:
            continue
        seen: set[int] = set()
        for i in u.inputs:
            if seen & scopes[i]:
                report.add(u.id, "overlapping input scopes")
                break
            seen |= scopes[i]
    return report


def check_structured(circuit: Circuit, vtree: Vtree) -> CheckReport:
    """Every product must split its scope as the matching vtree node does."""
    scopes = circuit.scopes()
    table = vtree.split_table()
    report = CheckReport("vtree conformance", True)
    for u in circuit.units:
        if u.kind != PROD:
            continue
        if len(u.inputs) != 2:
            report.add(u.id, f"product has {len(u.inputs)} inputs, expected binary")
            continue
        split = table.get(scopes[u.id])
        if split is None:
            report.add(u.id, f"scope {sorted(scopes[u.id])} is not a vtree node")
            continue
        got = {scopes[u.inputs[0]], scopes[u.inputs[1]]}
        if got != {split[0], split[1]}:
            report.add(u.id, "scope split disagrees with the vtree")
    return report


def pinned_maps(circuit: Circuit) -> list[dict[int, int]]:
    """Per-unit map of variables whose value is pinned on the unit's support.

    Indicators pin their variable; Bernoulli leaves pin only when restricted;
    products take the union of their inputs; sums keep variables pinned to the
    same value in every input.
    """
    pins: list[dict[int, int]] = [dict() for _ in circuit.units]
    for u in circuit.units:
        if u.kind == IND:
            pins[u.id] = {u.var: u.value}
        elif u.kind == BERN:
            pins[u.id] = {u.var: u.pin} if u.pin >= 0 else {}
        elif u.kind == PROD:
            m: dict[int, int] = {}
            for i in u.inputs:
                m.update(pins[i])
            pins[u.id] = m
        else:
            if not u.inputs:
                continue
            m = dict(pins[u.inputs[0]])
            for i in u.inputs[1:]:
                other = pins[i]
                m = {v: b for v, b in m.items() if other.get(v) == b}
            pins[u.id] = m
    return pins


def check_deterministic(circuit: Circuit) -> CheckReport:
    """Structural determinism: every sum carries a decision variable and its
    inputs pin that variable to pairwise distinct values."""
    pins = pinned_maps(circuit)
    report = CheckReport("determinism", True)
    for u in circuit.units:
        if u.kind != SUM:
            continue
        if u.decision_var < 0:
            report.add(u.id, "missing decision_var")
            continue
        seen_vals: set[int] = set()
        for i in u.inputs:
            val = pins[i].get(u.decision_var)
            if val is None:
                report.add(u.id, f"input {i} does not pin variable {u.decision_var}")
                break
            if val in seen_vals:
                report.add(u.id, f"two inputs pin {u.decision_var}={val}")
                break
            seen_vals.add(val)
    return report


def check_deterministic_exhaustive(circuit: Circuit, params: np.ndarray) -> CheckReport:
    """Test-only backstop: enumerate all assignments (c <= 16) and confirm at
    most one input of every sum unit is nonzero on each of them."""
    from .evaluate import log_forward

    if circuit.num_vars > 16:
        raise CircuitError("exhaustive determinism check capped at 16 variables")
    masks = all_assignments(circuit.num_vars)
    values = log_forward(circuit, params, masks, return_units=True)
    report = CheckReport("determinism (exhaustive)", True)
    for u in circuit.units:
        if u.kind != SUM or len(u.inputs) < 2:
            continue
        nonzero = np.zeros(masks.shape[0], dtype=int)
        for i in u.inputs:
            nonzero += values[:, i] > -np.inf
        if np.any(nonzero > 1):
            report.add(u.id, "two inputs nonzero on a complete assignment")
    return report


def all_assignments(num_vars: int) -> np.ndarray:
    """All 2^c assignments as mask rows, variable 0 as the most significant bit
    so that row order equals lexicographic order of the label vectors."""
    n = 1 << num_vars
    idx = np.arange(n, dtype=np.int64)
    cols = [(idx >> (num_vars - 1 - i)) & 1 for i in range(num_vars)]
    return np.stack(cols, axis=1).astype(np.int8)


def full_mask(assignment) -> np.ndarray:
    return np.asarray(assignment, dtype=np.int8)


def marginal_mask(num_vars: int) -> np.ndarray:
    return np.full(num_vars, MARG, dtype=np.int8)


def partial_mask(num_vars: int, assigned: dict[int, int]) -> np.ndarray:
    mask = marginal_mask(num_vars)
    for var, val in assigned.items():
        mask[var] = val
    return mask


# ---------------------------------------------------------------------------
# Serialization: one unit per line, deterministic order, '#' comments.
#   L <id> <var>                     Bernoulli leaf
#   I <id> <var> <value>             indicator leaf
#   S <id> <decision_var|-> <in...>  sum
#   P <id> <in...>                   product
#   ROOT <id>
# Logic circuits carry a LOGIC header. Only built circuits (canonical slot
# assignment) are serializable; products of circuits are rebuilt, not saved.
# ---------------------------------------------------------------------------

def to_text(circuit: Circuit, logic: bool = False) -> str:
    if circuit.layout is None and not logic:
        raise CircuitError("only built circuits with a canonical layout serialize")
    lines: list[str] = []
    if logic:
        lines.append("LOGIC")
    for u in circuit.units:
        if u.kind == BERN:
            lines.append(f"L {u.id} {u.var}")
        elif u.kind == IND:
            lines.append(f"I {u.id} {u.var} {u.value}")
        elif u.kind == SUM:
            dv = str(u.decision_var) if u.decision_var >= 0 else "-"
            lines.append(f"S {u.id} {dv} " + " ".join(str(i) for i in u.inputs))
        else:
            lines.append(f"P {u.id} " + " ".join(str(i) for i in u.inputs))
    lines.append(f"ROOT {circuit.root}")
    return "\n".join(lines) + "\n"


def from_text(text: str) -> Circuit:
    logic = False
    num_vars = -1
    builder: CircuitBuilder | None = None
    pending: list[tuple[str, list[int]]] = []
    root = -1
    max_var = -1
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "LOGIC":
            logic = True
            continue
        if parts[0] == "ROOT":
            root = int(parts[1])
            continue
        kind = parts[0]
        uid = int(parts[1])
        if uid != len(pending):
            raise CircuitError(f"unit ids must be dense and ordered, got {uid}")
        if kind == "L":
            var = int(parts[2])
            max_var = max(max_var, var)
            pending.append(("L", [var]))
        elif kind == "I":
            var, val = int(parts[2]), int(parts[3])
            max_var = max(max_var, var)
            pending.append(("I", [var, val]))
        elif kind == "S":
            dv = -1 if parts[2] == "-" else int(parts[2])
            pending.append(("S", [dv] + [int(p) for p in parts[3:]]))
        elif kind == "P":
            pending.append(("P", [int(p) for p in parts[2:]]))
        else:
            raise CircuitError(f"unknown unit line {line!r}")
    if root < 0:
        raise CircuitError("missing ROOT line")
    num_vars = max_var + 1
    builder = CircuitBuilder(num_vars)
    for kind, data in pending:
        if kind == "L":
            builder.bern(data[0])
        elif kind == "I":
            builder.ind(data[0], data[1])
        elif kind == "S":
            dv, ins = data[0], data[1:]
            if logic:
                builder.sum(ins, decision_var=dv,
                            weights=[(0.0, ()) for _ in ins])
            else:
                builder.sum(ins, decision_var=dv)
        else:
            builder.prod(data)
    if logic:
        return builder.build(root, assign_slots=False, num_params=0, normalized=False)
    return builder.build(root)


def save(circuit: Circuit, path: str, logic: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_text(circuit, logic=logic))


def load(path: str) -> Circuit:
    with open(path, "r", encoding="utf-8") as fh:
        return from_text(fh.read())
