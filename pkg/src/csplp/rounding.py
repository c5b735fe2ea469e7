"""Rounding an LP-oracle solution into an actual assignment.

The scheme buckets variables by their discretized marginal vectors, folds
the instance along those buckets, enumerates every assignment to the folded
variables, estimates each one's value by sampling, and keeps the argmax.
Per-variable answers then cost nothing beyond the bucket lookup.

The number of folded assignments is budget-gated: the guarantee rests on
full enumeration, so an oversized fold is a hard error rather than a silent
fallback to sampling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .csp import ConstraintOracle, CspInstance, build_instance, sum_estimator
from .errors import FoldTooLarge


def adjust_epsilon(eps: float) -> float:
    """Decrease eps slightly until 1/eps is an integer."""
    if not (0.0 < eps <= 1.0):
        raise ValueError("eps must lie in (0, 1]")
    return 1.0 / math.ceil(1.0 / eps)


def _check_grid(eps: float):
    inv = 1.0 / eps
    if abs(inv - round(inv)) > 1e-9:
        raise ValueError(f"1/eps must be an integer; got eps={eps}")


def discretize(x: float, eps: float) -> float:
    """Round x up to the grid eps*Z: 0 stays 0, otherwise the smallest
    multiple (k+1)*eps with k*eps < x <= (k+1)*eps.  Monotone, idempotent on
    its own image, and x <= x^eps < x + eps for positive x."""
    _check_grid(eps)
    if x < -1e-12:
        raise ValueError("marginals must be nonnegative")
    if x <= 0.0:
        return 0.0
    # the 1e-9 nudge keeps exact grid points in place under float division
    return math.ceil(x / eps - 1e-9) * eps


def bucket_key(row, eps: float) -> tuple[int, ...]:
    """Integer grid coordinates of a discretized marginal vector."""
    out = []
    for x in row:
        if x <= 0.0:
            out.append(0)
        else:
            out.append(int(math.ceil(x / eps - 1e-9)))
    return tuple(out)


def discretize_marginals(x: np.ndarray, eps: float) -> np.ndarray:
    _check_grid(eps)
    out = np.ceil(np.asarray(x, dtype=float) / eps - 1e-9) * eps
    return np.where(np.asarray(x) <= 0.0, 0.0, out)


@dataclass
class FoldingMap:
    """Variable -> bucket assignment induced by discretized marginals."""

    eps: float
    keys: list[tuple[int, ...]]          # per variable, its grid coordinates
    buckets: dict[tuple[int, ...], int]  # key -> dense bucket id

    @property
    def bucket_count(self) -> int:
        return len(self.buckets)

    def bucket_of(self, v: int) -> int:
        return self.buckets[self.keys[v]]

    def key_value(self, key) -> tuple[float, ...]:
        return tuple(k * self.eps for k in key)


def fold_map(x: np.ndarray, eps: float) -> FoldingMap:
    """Bucket variables with identical discretized marginal vectors.

    Bucket ids are dense, assigned in first-occurrence order over variable
    ids, so the map is deterministic.
    """
    _check_grid(eps)
    keys = [bucket_key(row, eps) for row in np.asarray(x, dtype=float)]
    buckets: dict[tuple[int, ...], int] = {}
    for key in keys:
        if key not in buckets:
            buckets[key] = len(buckets)
    return FoldingMap(eps, keys, buckets)


def fold(instance: CspInstance, x: np.ndarray, eps: float):
    """Materialize the folded instance (same predicates and weights, scopes
    mapped through the bucket map; scopes may repeat buckets)."""
    fm = fold_map(x, eps)
    folded_cons = []
    for c in instance.constraints:
        folded_cons.append(type(c)(c.predicate,
                                   tuple(fm.bucket_of(v) for v in c.scope), c.weight))
    degree = [0] * fm.bucket_count
    for c in folded_cons:
        for b in set(c.scope):
            degree[b] += 1
    t_folded = max(degree, default=1) or 1
    folded = build_instance(instance.q, instance.s, t_folded, instance.w,
                            fm.bucket_count, instance.predicates, folded_cons)
    return fm, folded


def unfold_assignment(fm: FoldingMap, folded_beta) -> np.ndarray:
    return np.array([folded_beta[fm.bucket_of(v)] for v in range(len(fm.keys))],
                    dtype=np.int64)


# --- value estimation ---------------------------------------------------------

def per_variable_shares(oracle: ConstraintOracle, fm: FoldingMap, folded_beta):
    """f[v] = sum over constraints containing v of w * P(beta) / #distinct vars.

    The assignment is read through the folding map; each variable's index
    slots are scanned through the oracle, so the scan is what the query
    counter meters.  Summing f over variables gives the exact folded value.
    """
    inst = oracle.instance
    values = [folded_beta[fm.bucket_of(v)] for v in range(inst.n)]
    f = np.zeros(inst.n)
    share: dict[int, float] = {}
    for v in range(inst.n):
        for i in range(1, inst.t + 1):
            cid = oracle.query(v, i)
            if cid is None:
                break
            if cid not in share:
                c = inst.constraints[cid]
                sat = inst.predicates[c.predicate].value(
                    [values[u] for u in c.scope], inst.q)
                share[cid] = c.weight * sat / len(c.distinct_vars())
            f[v] += share[cid]
    return f


def estimate_assignment_value(oracle: ConstraintOracle, fm: FoldingMap, folded_beta,
                              eps: float, delta: float, seed: int) -> float:
    """Sampled value of the unfolded assignment, within eps*n/2 w.p. 1-delta."""
    inst = oracle.instance
    f = per_variable_shares(oracle, fm, folded_beta)
    bound = inst.t * inst.w
    return sum_estimator(f, inst.n, bound, eps / 2.0, delta, seed)


# --- the rounding scheme --------------------------------------------------------

@dataclass
class RoundingResult:
    estimate: float
    folded_assignment: tuple[int, ...] | None
    fold: FoldingMap | None
    transcript: list          # (assignment, estimate, oracle queries used)
    epsilon: float
    eps_fold: float | None
    short_circuited: bool = False
    marginals: np.ndarray | None = None

    def assignment_query(self, v: int) -> int:
        """Value of variable v under the committed assignment."""
        if self.short_circuited or self.folded_assignment is None:
            return 0
        return int(self.folded_assignment[self.fold.bucket_of(v)])

    def full_assignment(self, n: int) -> np.ndarray:
        return np.array([self.assignment_query(v) for v in range(n)], dtype=np.int64)


def default_fold_eps(instance: CspInstance, epsilon: float) -> float:
    """Internal discretization schedule eps^2 / poly(q, s, t, w)."""
    poly = instance.q ** instance.s * instance.s * instance.t * instance.w * 8.0
    return adjust_epsilon(epsilon ** 2 / poly)


def round_assignment(oracle: ConstraintOracle, lp_oracle, epsilon: float, seed: int,
                     *, assignment_budget: int = 2 ** 20,
                     eps_fold: float | None = None) -> RoundingResult:
    """Enumerate folded assignments, estimate each, commit to the argmax.

    Per-assignment estimation budgets its failure probability as 1/(3 N)
    where N is the number of folded assignments, so the union over all of
    them succeeds with probability at least 2/3.  When the total weight is
    below epsilon * n any answer is within the additive slack already; we
    return a flagged zero-estimate result.
    """
    inst = oracle.instance
    if inst.total_weight < epsilon * inst.n or inst.n == 0:
        return RoundingResult(0.0, None, None, [], epsilon, None, short_circuited=True)
    if eps_fold is None:
        eps_fold = default_fold_eps(inst, epsilon)
    else:
        eps_fold = adjust_epsilon(eps_fold)

    q = inst.q
    x = np.empty((inst.n, q))
    for v in range(inst.n):
        for a in range(q):
            x[v, a] = lp_oracle.query(("x", v, a))
    fm = fold_map(x, eps_fold)

    count = q ** fm.bucket_count
    if count > assignment_budget:
        raise FoldTooLarge(f"{count} folded assignments exceed budget {assignment_budget}")
    delta = 1.0 / (3.0 * count)

    rng = np.random.default_rng(seed)
    transcript = []
    best_beta, best_est = None, -math.inf
    for beta in itertools.product(range(q), repeat=fm.bucket_count):
        sub_seed = int(rng.integers(0, 2 ** 62))
        before = oracle.query_count
        est = estimate_assignment_value(oracle, fm, beta, epsilon, delta, sub_seed)
        transcript.append((beta, est, oracle.query_count - before))
        if est > best_est:
            best_beta, best_est = beta, est
    return RoundingResult(best_est, best_beta, fm, transcript, epsilon, eps_fold,
                          marginals=x)


# --- satisfiability tester ------------------------------------------------------

TESTER_DELTA_PRESETS = {
    # families whose LP value curve stays close to one near satisfiability;
    # the modulus is a per-family input, these are shipped defaults
    "horn-sat": lambda eps: eps / 4.0,
    # max-2sat's curve drops to 1/2 at the top: no constant-query tester exists
    "max-2sat": None,
}


def tester_threshold(instance: CspInstance, epsilon: float) -> float:
    return (1.0 - epsilon / 2.0) * instance.total_weight \
        - epsilon * instance.t * instance.w * instance.n / 2.0


def test_satisfiability(oracle: ConstraintOracle, lp_oracle, epsilon: float,
                        delta: float, seed: int,
                        assignment_budget: int = 2 ** 20) -> bool:
    """Accept when the rounded estimate clears the separation threshold.

    `delta` is the family-specific modulus: the rounding scheme runs at
    min(epsilon/2, delta).  Instances far from satisfiability lose at least
    epsilon * t * w * n weight under every assignment, which pins their
    estimates below the threshold.
    """
    inst = oracle.instance
    eps_run = min(epsilon / 2.0, delta)
    result = round_assignment(oracle, lp_oracle, eps_run, seed,
                              assignment_budget=assignment_budget)
    if result.short_circuited:
        # negligible total weight: nothing measurable can be far
        return True
    return result.estimate > tester_threshold(inst, epsilon)
