"""CSP data model, bounded-degree constraint oracle, and exact reference oracles.

Variables take values in {0, ..., q-1}.  A predicate of arity k is a 0/1
truth table over all k-tuples of values, indexed lexicographically with the
FIRST scope position most significant (this order is part of the on-disk
format).  A constraint applies a predicate to a sequence of variable ids
(repeats permitted) and carries a weight in [1, w].

"Degree" counts constraint incidences: a constraint containing v occupies
exactly one of v's index slots, no matter how often v repeats inside the
scope.  The oracle signature is (variable, index) -> constraint-or-None and
every answered query costs exactly one unit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ArityExceeded,
    BadTruthTableLength,
    BudgetExceeded,
    DegreeExceeded,
    WeightOutOfRange,
)

DEFAULT_ENUM_BUDGET = 2 ** 26
_ENUM_CHUNK = 2 ** 16


@dataclass(frozen=True)
class Predicate:
    """0/1 predicate over [q]^arity given as a flat truth table."""

    name: str
    arity: int
    truth_table: tuple[int, ...]

    def value(self, values: Sequence[int], q: int) -> int:
        idx = 0
        for v in values:
            idx = idx * q + v
        return self.truth_table[idx]


@dataclass(frozen=True)
class Constraint:
    """A predicate id applied to a scope, with a weight in [1, w]."""

    predicate: int
    scope: tuple[int, ...]
    weight: float

    def distinct_vars(self) -> tuple[int, ...]:
        """Distinct scope variables in order of first occurrence."""
        seen: list[int] = []
        for v in self.scope:
            if v not in seen:
                seen.append(v)
        return tuple(seen)


@dataclass(frozen=True)
class CspInstance:
    q: int
    s: int
    t: int
    w: float
    n: int
    predicates: tuple[Predicate, ...]
    constraints: tuple[Constraint, ...]
    degree_index: tuple[tuple[int, ...], ...]

    @property
    def total_weight(self) -> float:
        return float(sum(c.weight for c in self.constraints))

    def degree(self, v: int) -> int:
        return len(self.degree_index[v])

    def constraint_value(self, cid: int, values_by_var) -> int:
        """Predicate value of constraint `cid` under a var -> value mapping."""
        c = self.constraints[cid]
        vals = [values_by_var[v] for v in c.scope]
        return self.predicates[c.predicate].value(vals, self.q)


def build_instance(q, s, t, w, n, predicates, constraints, degree_index=None) -> CspInstance:
    """Validate and assemble an instance.

    When `degree_index` is omitted it is derived deterministically in
    constraint-id order.  An explicit index (used by the blow-up generators,
    which scatter constraints into per-incidence blocks) is checked for
    consistency against the constraint list.
    """
    if q < 2 or s < 1 or t < 1 or n < 0 or w < 1:
        raise ValueError(f"bad model parameters q={q} s={s} t={t} w={w} n={n}")
    preds = tuple(
        p if isinstance(p, Predicate) else Predicate(p["name"], p["arity"], tuple(p["truth_table"]))
        for p in predicates
    )
    for p in preds:
        if p.arity < 1 or p.arity > s:
            raise ArityExceeded(f"predicate {p.name!r} has arity {p.arity} > s = {s}")
        if len(p.truth_table) != q ** p.arity:
            raise BadTruthTableLength(
                f"predicate {p.name!r}: table length {len(p.truth_table)} != q^k = {q ** p.arity}"
            )
        if any(e not in (0, 1) for e in p.truth_table):
            raise BadTruthTableLength(f"predicate {p.name!r}: entries must be 0/1")

    cons = []
    for c in constraints:
        if not isinstance(c, Constraint):
            c = Constraint(int(c["predicate"]), tuple(c["scope"]), float(c["weight"]))
        if c.predicate < 0 or c.predicate >= len(preds):
            raise ValueError(f"constraint references unknown predicate {c.predicate}")
        if len(c.scope) != preds[c.predicate].arity:
            raise ArityExceeded(
                f"scope length {len(c.scope)} != arity {preds[c.predicate].arity}"
            )
        if any(v < 0 or v >= n for v in c.scope):
            raise ValueError(f"scope {c.scope} references variable >= n = {n}")
        if not (1.0 <= c.weight <= w):
            raise WeightOutOfRange(f"weight {c.weight} outside [1, {w}]")
        cons.append(c)
    cons = tuple(cons)

    incident: list[list[int]] = [[] for _ in range(n)]
    for cid, c in enumerate(cons):
        for v in c.distinct_vars():
            incident[v].append(cid)

    if degree_index is None:
        index = tuple(tuple(slots) for slots in incident)
    else:
        index = tuple(tuple(slots) for slots in degree_index)
        if len(index) != n:
            raise ValueError("degree_index length != n")
        for v in range(n):
            if sorted(index[v]) != sorted(incident[v]):
                raise ValueError(f"degree_index for variable {v} inconsistent with constraints")

    for v in range(n):
        if len(index[v]) > t:
            raise DegreeExceeded(v, len(index[v]), t)

    return CspInstance(q, int(s), int(t), float(w), int(n), preds, cons, index)


class ConstraintOracle:
    """Degree-indexed access to an immutable instance, with query counting.

    Each handle owns its counter; concurrent workers should each hold their
    own handle.
    """

    def __init__(self, instance: CspInstance):
        self.instance = instance
        self.query_count = 0

    def query(self, v: int, i: int):
        """Return the i-th (1-based) constraint where v appears, or None."""
        inst = self.instance
        if not (0 <= v < inst.n):
            raise ValueError(f"variable {v} out of range")
        if not (1 <= i <= inst.t):
            raise ValueError(f"index {i} outside [1, t={inst.t}]")
        self.query_count += 1
        slots = inst.degree_index[v]
        if i <= len(slots):
            return slots[i - 1]
        return None

    def constraint(self, cid: int) -> Constraint:
        """Resolve a constraint id previously revealed by some query.

        Costs one query unit, like the (v, i) access that produced it.
        """
        self.query_count += 1
        return self.instance.constraints[cid]


def evaluate(instance: CspInstance, assignment) -> float:
    """Exact weighted satisfied count; repeated scope positions read the same value."""
    beta = list(assignment) if not isinstance(assignment, (list, tuple, np.ndarray)) else assignment
    total = 0.0
    q = instance.q
    for c in instance.constraints:
        vals = []
        for v in c.scope:
            a = beta[v]
            if a is None:
                raise ValueError(f"assignment undefined for constrained variable {v}")
            vals.append(a)
        total += c.weight * instance.predicates[c.predicate].value(vals, q)
    return total


def _scan_assignments(instance: CspInstance, budget: int, weighted: bool):
    """Enumerate all q^n assignments in lexicographic order (variable 0 most
    significant, value 0 first) and return (best score, best index)."""
    n, q = instance.n, instance.q
    total = q ** n if n > 0 else 1
    if total > budget:
        raise BudgetExceeded(f"q^n = {total} exceeds enumeration budget {budget}")
    pows = np.array([q ** (n - 1 - j) for j in range(n)], dtype=np.int64)
    tables = [np.asarray(p.truth_table, dtype=np.float64 if weighted else np.int64)
              for p in instance.predicates]

    best_score = -1.0
    best_index = 0
    for start in range(0, total, _ENUM_CHUNK):
        stop = min(start + _ENUM_CHUNK, total)
        m = np.arange(start, stop, dtype=np.int64)
        if n > 0:
            vals = (m[:, None] // pows[None, :]) % q
        else:
            vals = np.zeros((stop - start, 0), dtype=np.int64)
        score = np.zeros(stop - start, dtype=np.float64)
        for c in instance.constraints:
            idx = np.zeros(stop - start, dtype=np.int64)
            for v in c.scope:
                idx = idx * q + vals[:, v]
            sat = tables[c.predicate][idx]
            score += (c.weight * sat) if weighted else sat
        k = int(np.argmax(score))
        if score[k] > best_score + 1e-12:
            best_score = float(score[k])
            best_index = start + k
    return best_score, best_index


def _index_to_assignment(index: int, n: int, q: int) -> tuple[int, ...]:
    digits = []
    for j in range(n):
        digits.append(index // q ** (n - 1 - j) % q)
    return tuple(int(d) for d in digits)


def brute_force_opt(instance: CspInstance, budget: int = DEFAULT_ENUM_BUDGET):
    """Exact optimum by full enumeration.

    Returns (opt value, argmax assignment); ties break to the
    lexicographically smallest assignment for reproducibility.
    """
    score, index = _scan_assignments(instance, budget, weighted=True)
    if score < 0:
        score = 0.0
    return score, _index_to_assignment(index, instance.n, instance.q)


def distance_to_satisfiability(instance: CspInstance, budget: int = DEFAULT_ENUM_BUDGET) -> int:
    """Minimum NUMBER of constraints to remove so the rest is satisfiable."""
    if not instance.constraints:
        return 0
    best, _ = _scan_assignments(instance, budget, weighted=False)
    return len(instance.constraints) - int(round(best))


# --- sampling estimator -----------------------------------------------------

def estimator_sample_count(w: float, eps: float, delta: float) -> int:
    """Samples needed so the additive error exceeds eps*n with prob <= delta."""
    return int(math.ceil(w * w * math.log(2.0 / delta) / (2.0 * eps * eps)))


def sum_estimator(f, n: int, w: float, eps: float, delta: float, seed: int) -> float:
    """Estimate sum_i f(i) for f: [n] -> [0, w] from uniform point queries.

    Draws m = ceil(w^2 ln(2/delta) / (2 eps^2)) indices with replacement and
    returns (n/m) * sum of samples; by Hoeffding the additive error exceeds
    eps*n with probability at most delta.  `f` may be a callable or an
    array of length n (array input is evaluated vectorized).
    """
    if not (0.0 < eps < 1.0 and 0.0 < delta < 1.0):
        raise ValueError("eps and delta must lie in (0, 1)")
    m = estimator_sample_count(w, eps, delta)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=m)
    if callable(f):
        total = float(sum(f(int(i)) for i in idx))
    else:
        arr = np.asarray(f, dtype=np.float64)
        total = float(arr[idx].sum())
    return n * total / m


# --- structure helpers ------------------------------------------------------

def connected_components(instance: CspInstance):
    """Partition into components of the variable/constraint incidence graph.

    Returns a list of (variable ids, constraint ids), both sorted.  Isolated
    variables form singleton components with no constraints.
    """
    n = instance.n
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for c in instance.constraints:
        dv = c.distinct_vars()
        for u in dv[1:]:
            ra, rb = find(dv[0]), find(u)
            if ra != rb:
                parent[rb] = ra
    groups: dict[int, list[int]] = {}
    for v in range(n):
        groups.setdefault(find(v), []).append(v)
    comps = []
    for root in sorted(groups):
        vs = sorted(groups[root])
        vset = set(vs)
        cids = [cid for cid, c in enumerate(instance.constraints) if c.scope[0] in vset]
        comps.append((vs, cids))
    return comps


def subinstance(instance: CspInstance, variables, constraint_ids) -> CspInstance:
    """Instance induced on a variable subset (ids renumbered in given order)."""
    remap = {v: i for i, v in enumerate(variables)}
    cons = [
        Constraint(c.predicate, tuple(remap[v] for v in c.scope), c.weight)
        for c in (instance.constraints[cid] for cid in constraint_ids)
    ]
    return build_instance(
        instance.q, instance.s, instance.t, instance.w, len(variables),
        instance.predicates, cons,
    )


# --- JSON format ------------------------------------------------------------

def instance_to_json(instance: CspInstance) -> dict:
    return {
        "q": instance.q,
        "s": instance.s,
        "t": instance.t,
        "w": instance.w,
        "n": instance.n,
        "predicates": [
            {"name": p.name, "arity": p.arity, "truth_table": list(p.truth_table)}
            for p in instance.predicates
        ],
        "constraints": [
            {"predicate": c.predicate, "scope": list(c.scope), "weight": c.weight}
            for c in instance.constraints
        ],
    }


def instance_from_json(data: dict) -> CspInstance:
    return build_instance(
        data["q"], data["s"], data["t"], data["w"], data["n"],
        data["predicates"], data["constraints"],
    )


def save_instance(instance: CspInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_json(instance), fh, indent=1)
        fh.write("\n")


def load_instance(path) -> CspInstance:
    with open(path) as fh:
        return instance_from_json(json.load(fh))
