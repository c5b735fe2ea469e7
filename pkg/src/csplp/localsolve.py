"""Per-query local simulation of a round-limited packing solver.

A query names one column of the restricted packing program.  We explore the
constraint structure around the column's anchor variables out to a fixed
radius using only (variable, index) oracle accesses, rebuild the rows of the
packing program that live inside that ball from the global model parameters,
and run the round-limited dynamics there.  Values of columns whose own
radius-r neighbourhood is contained in the ball come out exactly as a global
run would produce them, which is what makes the assembled vector feasible:
every column is scaled against the true load of every row it appears in.

The dynamics are a two-phase rule:

  phase 1 (r rounds)   multiplicative ascent.  Start each column at
      min_j c_j / (a_ji * Gamma_d); each round every row reports its
      relative slack (c_j - load_j) / c_j and every column multiplies
      itself by 1 + eta * (its worst slack), clamped to [1, 1 + eta].

  phase 2 (one sweep)  guaranteed feasibility.  Each column scales by
      min over its rows of min(1, c_j / load_j), with the loads taken at
      the phase-1 values.  Whatever phase 1 did, the assembled global
      vector now satisfies every row.

Approximation quality is a measured property, not a proved one; the
acceptance suite tracks it against exact solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .csp import ConstraintOracle, CspInstance
from .lp import LpSolution, mu_assignments, value_of
from .pipeline import PipelineParams


@dataclass(frozen=True)
class LocalSolverParams:
    """Round budget and step size of the local dynamics (deterministic)."""

    epsilon: float = 0.2
    kappa: float = 1.0
    eta: float = 0.25
    rounds_cap: int = 64

    def rounds(self, gamma_p: float, gamma_d: float) -> int:
        raw = self.kappa * math.log(max(gamma_p, 2.0)) * math.log(max(gamma_d, 2.0))
        raw /= self.epsilon ** 4
        return max(1, min(self.rounds_cap, int(math.ceil(raw))))


def analytic_gamma_bounds(pp: PipelineParams):
    """Upper bounds on the packing statistics from the model parameters only.

    The local simulation may not scan the instance, so the round count and
    the ascent's starting point use these closed forms instead of the built
    matrix.  Overestimates are safe on both counts.
    """
    q, s, t, w, C, eps = pp.q, pp.s, pp.t, pp.w, pp.C, pp.epsilon
    ratio = (w + C) / C
    gamma_d = max(2.0 + t * ratio, 2.0 + t, (s + 1.0) * ratio, s + ratio)
    c_max = max(C * (q - 1 + eps), C * (1 + eps), (1 + eps) * (w + C),
                C * (q ** (s - 1) + eps), C, w + C)
    per_row = [
        (q, C * (q - 1 + eps)),
        (q, C * (1 + eps)),
        (ratio * (1 + q ** (s - 1)), (1 + eps) * (w + C)),
        (1 + q ** (s - 1), C * (1 + eps)),
        (2, C),
        (2 * ratio, w + C),
    ]
    gamma_p = max(c_max * colsum / rhs for colsum, rhs in per_row)
    return gamma_p, gamma_d


# --- ball exploration ---------------------------------------------------------

KIND_RANK = {"x": 0, "xbar": 1, "mu": 2, "mubar": 3}


def _column_key(label):
    return (KIND_RANK[label[0]],) + label[1:]


class CommGraphView:
    """Everything discovered within `radius` variable hops of the seed set.

    `scanned` holds variables whose full index list was read (t queries
    each, memoized); `known_vars` additionally contains scope members at the
    boundary.  `constraints` maps revealed constraint ids to their data.
    """

    def __init__(self, center, radius):
        self.center = center
        self.radius = radius
        self.scanned: set[int] = set()
        self.known_vars: set[int] = set()
        self.constraints: dict[int, object] = {}
        self.query_cost = 0


def build_ball(oracle: ConstraintOracle, center, radius: int) -> CommGraphView:
    """BFS over the communication structure; ascending-id exploration order."""
    inst = oracle.instance
    view = CommGraphView(center, radius)
    seeds = _anchor_vars(oracle, center, view)
    frontier = sorted(seeds)
    view.known_vars.update(frontier)
    for _ in range(radius + 1):
        next_frontier: set[int] = set()
        for v in frontier:
            if v in view.scanned:
                continue
            view.scanned.add(v)
            for i in range(1, inst.t + 1):
                cid = oracle.query(v, i)
                view.query_cost += 1
                if cid is None or cid in view.constraints:
                    continue
                c = inst.constraints[cid]  # payload of the answer just given
                view.constraints[cid] = c
                for u in c.distinct_vars():
                    if u not in view.known_vars:
                        next_frontier.add(u)
                    view.known_vars.add(u)
        if not next_frontier:
            break
        frontier = sorted(next_frontier)
    return view


def _anchor_vars(oracle, center, view) -> set[int]:
    kind = center[0]
    if kind in ("x", "xbar"):
        return {center[1]}
    if kind in ("mu", "mubar", "r6"):
        c = oracle.constraint(center[1])
        view.query_cost += 1
        return set(c.distinct_vars())
    if kind in ("r1", "r2", "r5"):
        return {center[1]}
    if kind in ("r3", "r4"):
        c = oracle.constraint(center[1])
        view.query_cost += 1
        return set(c.distinct_vars()) | {center[2]}
    raise ValueError(f"unknown column or row name {center}")


# --- packing data inside a ball ----------------------------------------------

class PackingDynamics:
    """The two-phase rule on an explicit packing program (rows as COO arrays)."""

    def __init__(self, labels, row_cols, row_coefs, rhs):
        self.labels = list(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        self.row_cols = row_cols
        self.row_coefs = row_coefs
        self.rhs = np.asarray(rhs, dtype=np.float64)
        self.flat_rows = np.concatenate([
            np.full(len(cols), j, dtype=np.int64) for j, cols in enumerate(row_cols)
        ]) if row_cols else np.empty(0, dtype=np.int64)
        self.flat_cols = (np.concatenate(row_cols)
                          if row_cols else np.empty(0, dtype=np.int64))
        self.flat_coefs = (np.concatenate(row_coefs)
                           if row_coefs else np.empty(0, dtype=np.float64))

    def initial_point(self, gamma_d: float) -> np.ndarray:
        z0 = np.full(len(self.labels), np.inf)
        ratios = self.rhs[self.flat_rows] / (self.flat_coefs * gamma_d)
        np.minimum.at(z0, self.flat_cols, ratios)
        return z0

    def loads(self, z: np.ndarray) -> np.ndarray:
        return np.bincount(self.flat_rows, weights=self.flat_coefs * z[self.flat_cols],
                           minlength=len(self.rhs))

    def ascend(self, z: np.ndarray, rounds: int, eta: float) -> np.ndarray:
        z = z.copy()
        for _ in range(rounds):
            slack = (self.rhs - self.loads(z)) / self.rhs
            worst = np.full(len(self.labels), np.inf)
            np.minimum.at(worst, self.flat_cols, slack[self.flat_rows])
            z *= np.clip(1.0 + eta * worst, 1.0, 1.0 + eta)
        return z

    def rescale_feasible(self, z: np.ndarray) -> np.ndarray:
        """Phase-2 column scaling against the phase-1 loads."""
        loads = self.loads(z)
        caps = np.minimum(1.0, self.rhs / loads)
        factor = np.ones(len(self.labels))
        np.minimum.at(factor, self.flat_cols, caps[self.flat_rows])
        return z * factor


class BallProgram(PackingDynamics):
    """Rows and columns of the restricted packing program restricted to a ball.

    Data is rebuilt from the view plus the global parameters; the entries
    agree exactly with what the whole-instance builder produces, which the
    tests cross-check.
    """

    def __init__(self, view: CommGraphView, inst: CspInstance, pp: PipelineParams):
        q, C, w, eps = pp.q, pp.C, pp.w, pp.epsilon
        labels: list[tuple] = []
        for v in sorted(view.known_vars):
            labels += [("x", v, a) for a in range(q)]
            labels += [("xbar", v, a) for a in range(q)]
        for cid in sorted(view.constraints):
            c = view.constraints[cid]
            labels += [("mu", cid, beta) for beta in mu_assignments(inst, c)]
            labels += [("mubar", cid, beta) for beta in mu_assignments(inst, c)]
        labels.sort(key=_column_key)
        self.labels = labels
        self.index = {lab: i for i, lab in enumerate(labels)}

        rows_cols: list[np.ndarray] = []
        rows_coefs: list[np.ndarray] = []
        rhs: list[float] = []

        def add(entries, bound):
            cols = np.array([self.index[lab] for lab, _ in entries], dtype=np.int64)
            rows_cols.append(cols)
            rows_coefs.append(np.array([c for _, c in entries], dtype=np.float64))
            rhs.append(bound)

        ratio = (w + C) / C
        for v in sorted(view.known_vars):
            add([(("x", v, a), 1.0) for a in range(q)], C * (q - 1 + eps))
            add([(("xbar", v, a), 1.0) for a in range(q)], C * (1 + eps))
            for a in range(q):
                add([(("x", v, a), 1.0), (("xbar", v, a), 1.0)], C)
        for cid in sorted(view.constraints):
            c = view.constraints[cid]
            dv = c.distinct_vars()
            k = len(dv)
            betas = list(mu_assignments(inst, c))
            sat = {beta: c.weight * inst.predicates[c.predicate].value(
                [dict(zip(dv, beta))[u] for u in c.scope], q) for beta in betas}
            for pos, v in enumerate(dv):
                for a in range(q):
                    hits = [b for b in betas if b[pos] == a]
                    add([(("x", v, a), ratio)]
                        + [(("mu", cid, b), (w + C) / (sat[b] + C)) for b in hits],
                        (1 + eps) * (w + C))
                    add([(("xbar", v, a), 1.0)]
                        + [(("mubar", cid, b), 1.0) for b in hits],
                        C * (q ** (k - 1) + eps))
            for b in betas:
                add([(("mu", cid, b), (w + C) / (sat[b] + C)),
                     (("mubar", cid, b), ratio)], w + C)
        super().__init__(labels, rows_cols, rows_coefs, rhs)
        self.mu_scale = {}
        for cid in sorted(view.constraints):
            c = view.constraints[cid]
            dv = c.distinct_vars()
            for beta in mu_assignments(inst, c):
                vals = [dict(zip(dv, beta))[u] for u in c.scope]
                self.mu_scale[("mu", cid, beta)] = (
                    c.weight * inst.predicates[c.predicate].value(vals, q) + C)


# --- the oracle ----------------------------------------------------------------

class LpOracle:
    """Constant-radius access to a near-optimal solution of the basic relaxation.

    Each query explores a fresh ball (the oracle is stateless across queries
    apart from the underlying query counter), runs the two-phase dynamics,
    undoes the packing scalings and applies the block-reset repair.  Output
    values are in basic coordinates: marginals of unreset blocks are
    1 - x_stage2, reset blocks are uniform, and tables touching a reset block
    become product distributions.
    """

    def __init__(self, oracle: ConstraintOracle, pipeline: PipelineParams,
                 solver: LocalSolverParams | None = None):
        self.oracle = oracle
        self.pipeline = pipeline
        self.solver = solver or LocalSolverParams(epsilon=pipeline.epsilon)
        gp, gd = analytic_gamma_bounds(pipeline)
        self.gamma_p_bound = gp
        self.gamma_d_bound = gd
        self.rounds = self.solver.rounds(gp, gd)
        self.last_query_cost = 0

    # -- raw packing access --

    def packing_value(self, label) -> float:
        """Phase-2 value of one packing column (its ball only)."""
        before = self.oracle.query_count
        view = build_ball(self.oracle, label, self.rounds + 1)
        prog = BallProgram(view, self.oracle.instance, self.pipeline)
        z2 = self._solve(prog)
        self.last_query_cost = self.oracle.query_count - before
        return float(z2[prog.index[label]])

    def _solve(self, prog: BallProgram) -> np.ndarray:
        z0 = prog.initial_point(self.gamma_d_bound)
        z1 = prog.ascend(z0, self.rounds, self.solver.eta)
        return prog.rescale_feasible(z1)

    # -- repaired basic-coordinate access --

    def query(self, name) -> float:
        before = self.oracle.query_count
        value = self._query_inner(name)
        self.last_query_cost = self.oracle.query_count - before
        return value

    def _query_inner(self, name) -> float:
        inst = self.oracle.instance
        q, C = self.pipeline.q, self.pipeline.C
        kind = name[0]
        if kind == "x":
            _, v, a = name
            view = build_ball(self.oracle, name, self.rounds + 1)
            prog = BallProgram(view, inst, self.pipeline)
            z2 = self._solve(prog)
            if self._block_reset(prog, z2, v):
                return 1.0 / q
            return 1.0 - z2[prog.index[("x", v, a)]] / C
        if kind == "mu":
            _, cid, beta = name
            view = build_ball(self.oracle, name, self.rounds + 2)
            prog = BallProgram(view, inst, self.pipeline)
            z2 = self._solve(prog)
            c = view.constraints[cid]
            dv = c.distinct_vars()
            resets = {u: self._block_reset(prog, z2, u) for u in dv}
            if any(resets.values()):
                factors = {}
                for u in dv:
                    if resets[u]:
                        factors[u] = np.full(q, 1.0 / q)
                    else:
                        row = np.array([1.0 - z2[prog.index[("x", u, b)]] / C
                                        for b in range(q)])
                        row = np.clip(row, 0.0, None)
                        factors[u] = row / row.sum()
                return float(np.prod([factors[u][b] for u, b in zip(dv, beta)]))
            return float(z2[prog.index[name]] / prog.mu_scale[name])
        raise ValueError(f"unknown oracle name {name}")

    def _block_reset(self, prog: BallProgram, z2: np.ndarray, v: int) -> bool:
        q, C = self.pipeline.q, self.pipeline.C
        for a in range(q):
            pair = (z2[prog.index[("x", v, a)]] + z2[prog.index[("xbar", v, a)]]) / C
            if 1.0 - pair >= self.pipeline.eps_reset:
                return True
        return False


# --- whole-oracle materializers (test scale only) --------------------------------

def assemble_packing_vector(lp_oracle: LpOracle, instance: CspInstance) -> dict:
    """Query the phase-2 value of every packing column."""
    out = {}
    for v in range(instance.n):
        for a in range(instance.q):
            out[("x", v, a)] = lp_oracle.packing_value(("x", v, a))
            out[("xbar", v, a)] = lp_oracle.packing_value(("xbar", v, a))
    for cid, c in enumerate(instance.constraints):
        for beta in mu_assignments(instance, c):
            out[("mu", cid, beta)] = lp_oracle.packing_value(("mu", cid, beta))
            out[("mubar", cid, beta)] = lp_oracle.packing_value(("mubar", cid, beta))
    return out


def assemble_global(lp_oracle: LpOracle, instance: CspInstance) -> LpSolution:
    """Query every repaired basic-coordinate value and pack a solution."""
    x = np.zeros((instance.n, instance.q))
    for v in range(instance.n):
        for a in range(instance.q):
            x[v, a] = lp_oracle.query(("x", v, a))
    mu = {}
    for cid, c in enumerate(instance.constraints):
        mu[cid] = np.array([lp_oracle.query(("mu", cid, beta))
                            for beta in mu_assignments(instance, c)])
    return LpSolution(x, mu, value_of(instance, x, mu))
