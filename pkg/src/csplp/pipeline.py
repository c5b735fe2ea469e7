"""Transformation chain from the basic relaxation to a restricted packing LP.

Stage 1 substitutes x <- 1 - x and relaxes every equality by eps (the "x"
columns of the stage-1/2 programs therefore live in complement coordinates).
Stage 2 adds a complement column for every column, couples each pair by
z + zbar <= 1, keeps only the <= halves, and puts a large reward C on every
column so optimal pairs sum to one.  Stage 3 rescales variables by their
objective coefficient and rows by fixed multipliers so the objective is
1^T z and every nonzero matrix entry is at least one.

restore_and_repair walks back: it maps a feasible stage-2 vector to basic
coordinates, resetting any variable block whose pair sums drift and rebuilding
the affected local tables as product distributions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import simplex
from .csp import CspInstance, connected_components, subinstance
from .errors import NotFeasibleForLp3, SizeLimit
from .lp import (
    LinearProgram,
    LpSolution,
    mu_assignments,
    mu_objective_coef,
    value_of,
)


@dataclass(frozen=True)
class PipelineParams:
    """Relaxation slack, reward constant, repair thresholds, model parameters.

    Defaults instantiate the hidden constants as C = q^(2s) (t w)^2 / eps^2,
    eps_inner = eps^3 / (q^(2s) (t w)^2) and eps_reset = eps; every field can
    be overridden.
    """

    epsilon: float
    C: float
    eps_inner: float
    eps_reset: float
    q: int
    s: int
    t: int
    w: float

    @classmethod
    def for_instance(cls, instance: CspInstance, epsilon: float, C=None,
                     eps_inner=None, eps_reset=None) -> "PipelineParams":
        if not (0.0 < epsilon < 0.5):
            raise ValueError("epsilon must lie in (0, 1/2)")
        q, s, t, w = instance.q, instance.s, instance.t, instance.w
        base = q ** (2 * s) * (t * w) ** 2
        C = float(C if C is not None else base / epsilon ** 2)
        eps_inner = float(eps_inner if eps_inner is not None else epsilon ** 3 / base)
        eps_reset = float(eps_reset if eps_reset is not None else epsilon)
        if C < instance.w:
            raise ValueError("C must dominate the maximum weight")
        return cls(epsilon, C, eps_inner, eps_reset, q, s, t, float(w))


def relax_basic_lp(instance: CspInstance, epsilon: float) -> LinearProgram:
    """Stage 1: complemented marginals, equalities relaxed to +-eps bands.

    Columns additionally carry the unit box (explicit <= 1 rows): the
    complement substitution of stage 2 needs every value to stay a
    probability, and without the box the eps slack would let single table
    entries grow past one, breaking the exact value shift between stages.
    """
    if not (0.0 < epsilon < 0.5):
        raise ValueError("epsilon must lie in (0, 1/2)")
    q = instance.q
    lp = LinearProgram()
    for v in range(instance.n):
        for a in range(q):
            lp.add_column(("x", v, a))
    for cid, c in enumerate(instance.constraints):
        for beta in mu_assignments(instance, c):
            lp.add_column(("mu", cid, beta), mu_objective_coef(instance, c, beta))

    for v in range(instance.n):
        entries = [(("x", v, a), 1.0) for a in range(q)]
        lp.add_row(entries, "<=", q - 1 + epsilon, tag=("norm_hi", v))
        lp.add_row(entries, ">=", q - 1 - epsilon, tag=("norm_lo", v))
    for cid, c in enumerate(instance.constraints):
        dv = c.distinct_vars()
        for pos, v in enumerate(dv):
            for a in range(q):
                entries = [(("x", v, a), 1.0)]
                entries += [(("mu", cid, beta), 1.0)
                            for beta in mu_assignments(instance, c) if beta[pos] == a]
                lp.add_row(entries, "<=", 1 + epsilon, tag=("marg_hi", cid, v, a))
                lp.add_row(entries, ">=", 1 - epsilon, tag=("marg_lo", cid, v, a))
    for label in lp.labels:
        lp.add_row([(label, 1.0)], "<=", 1.0, tag=("box",) + label)
    return lp


def to_packing(instance: CspInstance, params: PipelineParams) -> LinearProgram:
    """Stage 2: complement columns, <=-only rows, reward C on every column."""
    q, C, eps = instance.q, params.C, params.epsilon
    lp = LinearProgram()
    for v in range(instance.n):
        for a in range(q):
            lp.add_column(("x", v, a), C)
    for v in range(instance.n):
        for a in range(q):
            lp.add_column(("xbar", v, a), C)
    for cid, c in enumerate(instance.constraints):
        for beta in mu_assignments(instance, c):
            lp.add_column(("mu", cid, beta), mu_objective_coef(instance, c, beta) + C)
    for cid, c in enumerate(instance.constraints):
        for beta in mu_assignments(instance, c):
            lp.add_column(("mubar", cid, beta), C)

    for v in range(instance.n):
        lp.add_row([(("x", v, a), 1.0) for a in range(q)], "<=", q - 1 + eps,
                   tag=("r1", v))
    for v in range(instance.n):
        lp.add_row([(("xbar", v, a), 1.0) for a in range(q)], "<=", 1 + eps,
                   tag=("r2", v))
    for cid, c in enumerate(instance.constraints):
        dv = c.distinct_vars()
        k = len(dv)
        for pos, v in enumerate(dv):
            for a in range(q):
                betas = [beta for beta in mu_assignments(instance, c) if beta[pos] == a]
                lp.add_row([(("x", v, a), 1.0)] + [(("mu", cid, b), 1.0) for b in betas],
                           "<=", 1 + eps, tag=("r3", cid, v, a))
                lp.add_row([(("xbar", v, a), 1.0)] + [(("mubar", cid, b), 1.0) for b in betas],
                           "<=", q ** (k - 1) + eps, tag=("r4", cid, v, a))
    for v in range(instance.n):
        for a in range(q):
            lp.add_row([(("x", v, a), 1.0), (("xbar", v, a), 1.0)], "<=", 1.0,
                       tag=("r5", v, a))
    for cid, c in enumerate(instance.constraints):
        for beta in mu_assignments(instance, c):
            lp.add_row([(("mu", cid, beta), 1.0), (("mubar", cid, beta), 1.0)], "<=", 1.0,
                       tag=("r6", cid, beta))
    return lp


def primal_column_count(instance: CspInstance) -> int:
    """Columns of the stage-1 program: n q marginals plus the table entries."""
    return instance.n * instance.q + sum(
        instance.q ** len(c.distinct_vars()) for c in instance.constraints
    )


# --- restricted packing form --------------------------------------------------

@dataclass
class PackingProgram:
    """max b^T z  s.t.  A^T z <= c,  z >= 0, every nonzero of A at least 1.

    `A` is laid out with one row per column variable z_i and one column per
    packing inequality, matching the transposed constraint convention above;
    the sparse `row_entries` view (per inequality) is what solvers use.
    """

    col_labels: list
    row_tags: list
    row_entries: list            # per inequality: (col indices, coefficients)
    c: np.ndarray                # rhs per inequality
    b: np.ndarray                # objective (all ones here)
    col_scale: np.ndarray        # stage-2 value = z / col_scale
    row_mult: np.ndarray
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {lab: i for i, lab in enumerate(self.col_labels)}

    @property
    def num_cols(self):
        return len(self.col_labels)

    @property
    def num_rows(self):
        return len(self.row_tags)

    @property
    def A(self) -> np.ndarray:
        out = np.zeros((self.num_cols, self.num_rows))
        for j, (cols, coefs) in enumerate(self.row_entries):
            out[cols, j] = coefs
        return out

    # statistics of the restricted form
    @property
    def c_max(self) -> float:
        return float(self.c.max()) if self.num_rows else 0.0

    @property
    def gamma_d(self) -> float:
        """Max over columns z_i of its total coefficient mass (max row sum of A)."""
        sums = np.zeros(self.num_cols)
        for cols, coefs in self.row_entries:
            sums[cols] += coefs
        return float(sums.max()) if self.num_cols else 0.0

    @property
    def gamma_p(self) -> float:
        """Max over inequalities of (c_max / c_j) times its coefficient sum."""
        cm = self.c_max
        best = 0.0
        for j, (cols, coefs) in enumerate(self.row_entries):
            best = max(best, cm / self.c[j] * float(coefs.sum()))
        return best

    @property
    def delta_p(self) -> int:
        """Max number of columns appearing in one inequality."""
        return max((len(cols) for cols, _ in self.row_entries), default=0)

    @property
    def delta_d(self) -> int:
        """Max number of inequalities where one column appears."""
        counts = np.zeros(self.num_cols, dtype=int)
        for cols, _ in self.row_entries:
            counts[cols] += 1
        return int(counts.max()) if self.num_cols else 0

    def min_nonzero_entry(self) -> float:
        return min((float(coefs.min()) for _, coefs in self.row_entries if len(coefs)),
                   default=np.inf)

    def unscale(self, z: dict) -> dict:
        """Map packing coordinates back to stage-2 coordinates exactly."""
        return {lab: z[lab] / self.col_scale[i] for lab, i in self.index.items() if lab in z}

    def scale(self, y: dict) -> dict:
        return {lab: y[lab] * self.col_scale[i] for lab, i in self.index.items() if lab in y}

    def feasible(self, z: np.ndarray, tol: float = 1e-9) -> bool:
        return self.max_violation(z) <= tol

    def max_violation(self, z: np.ndarray) -> float:
        worst = 0.0
        for j, (cols, coefs) in enumerate(self.row_entries):
            worst = max(worst, float(coefs @ z[cols]) - float(self.c[j]))
        return worst

    def solve_exact(self, column_limit: int = 50_000):
        """Exact optimum of the packing program via the dense solver."""
        if self.num_cols > column_limit:
            raise SizeLimit(f"{self.num_cols} columns > limit {column_limit}")
        A = np.zeros((self.num_rows, self.num_cols))
        for j, (cols, coefs) in enumerate(self.row_entries):
            A[j, cols] = coefs
        z, value = simplex.solve(self.b, A, ["<="] * self.num_rows, self.c)
        return value, z


def normalize_packing(lp3: LinearProgram, params: PipelineParams) -> PackingProgram:
    """Stage 3: scale columns by reward, rows to coefficient floor one.

    Pair-coupling and objective-bearing rows are multiplied by (w + C), the
    remaining rows by C; combined with dividing each column by its stage-2
    objective coefficient this makes every surviving coefficient >= 1 while
    the objective becomes the plain sum of the scaled columns.
    """
    C = params.C
    col_scale = np.asarray(lp3.objective, dtype=float)  # reward == scale
    entries = []
    tags = []
    rhs = []
    mults = []
    for row in lp3.rows:
        kind = row.tag[0]
        # rows carrying objective-bearing table columns are boosted by w + C
        mult = C if kind in ("r1", "r2", "r4", "r5") else params.w + C
        coefs = row.coefs * mult / col_scale[row.cols]
        entries.append((row.cols.copy(), coefs))
        tags.append(row.tag)
        rhs.append(row.rhs * mult)
        mults.append(mult)
    return PackingProgram(
        col_labels=list(lp3.labels),
        row_tags=tags,
        row_entries=entries,
        c=np.asarray(rhs, dtype=float),
        b=np.ones(len(lp3.labels)),
        col_scale=col_scale,
        row_mult=np.asarray(mults, dtype=float),
    )


def exact_packing_optimum(instance: CspInstance, params: PipelineParams) -> float:
    """Optimum of the restricted packing program, solved per component."""
    total = 0.0
    for vs, cids in connected_components(instance):
        sub = subinstance(instance, vs, cids)
        pp = normalize_packing(to_packing(sub, params), params)
        value, _ = pp.solve_exact()
        total += value
    return total


# --- the restore-and-repair step ----------------------------------------------

def check_lp3_feasible(instance: CspInstance, lp3: LinearProgram, z: dict,
                       tol: float = 1e-7) -> float:
    worst = 0.0
    for lab in lp3.labels:
        val = z.get(lab, 0.0)
        if val < -tol:
            raise NotFeasibleForLp3(f"negative column {lab}")
    for row in lp3.rows:
        act = sum(c * z.get(lp3.labels[j], 0.0) for j, c in zip(row.cols, row.coefs))
        worst = max(worst, act - row.rhs)
    if worst > tol:
        raise NotFeasibleForLp3(f"row violation {worst:.3e}")
    return worst


def restore_and_repair(instance: CspInstance, z: dict, params: PipelineParams,
                       lp3: LinearProgram | None = None):
    """Map a feasible stage-2 vector to basic coordinates and patch drifted blocks.

    Columns whose pair sum z + zbar falls at least eps_reset below one mark
    their variable block; marked blocks are reset to the uniform marginal and
    every local table touching a reset block is replaced by the product of
    the current variable marginals.  Returns (LpSolution, report).
    """
    lp3 = lp3 or to_packing(instance, params)
    check_lp3_feasible(instance, lp3, z)
    q, n = instance.q, instance.n
    eps2 = params.eps_reset

    reset_vars = set()
    for v in range(n):
        for a in range(q):
            gap = 1.0 - z.get(("x", v, a), 0.0) - z.get(("xbar", v, a), 0.0)
            if gap >= eps2:
                reset_vars.add(v)
                break

    x = np.empty((n, q))
    for v in range(n):
        if v in reset_vars:
            x[v] = 1.0 / q
        else:
            for a in range(q):
                x[v, a] = 1.0 - z.get(("x", v, a), 0.0)
    x = np.clip(x, 0.0, None)

    mu: dict[int, np.ndarray] = {}
    reset_tables = []
    for cid, c in enumerate(instance.constraints):
        dv = c.distinct_vars()
        if any(v in reset_vars for v in dv):
            # product of the (normalized) current marginals: a genuine
            # distribution, so the rebuilt table sums to one exactly
            factors = {v: x[v] / x[v].sum() for v in dv}
            table = np.array([
                float(np.prod([factors[v][b] for v, b in zip(dv, beta)]))
                for beta in mu_assignments(instance, c)
            ])
            reset_tables.append(cid)
        else:
            table = np.array([z.get(("mu", cid, beta), 0.0)
                              for beta in mu_assignments(instance, c)])
        mu[cid] = np.clip(table, 0.0, None)

    sol = LpSolution(x, mu, value_of(instance, x, mu))
    from .lp import infeasibility
    measured = infeasibility(instance, sol)
    s = instance.s
    bound = max(
        params.epsilon + q * eps2,
        params.epsilon + eps2 * (q ** (s - 1) + 1),
        2 * max(s - 1, 1) * (params.epsilon + q * eps2),
    )
    report = {
        "reset_variables": sorted(reset_vars),
        "reset_tables": reset_tables,
        "measured_infeasibility": float(measured),
        "infeasibility_bound": float(bound),
        "value": sol.value,
    }
    return sol, report
