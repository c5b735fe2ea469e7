"""Turning near-feasible LP solutions into exactly feasible ones.

The repair runs in three steps: normalize the variable marginals row by row
(surgery), rewrite each local table so its single-variable marginals match
the normalized x exactly (a coefficient overwrite in an orthonormal product
basis, followed by mixing with the uniform table to restore nonnegativity),
and finally shift x itself by the same uniform mixture so the two sides
agree.  The output satisfies every equality row of the basic relaxation to
machine precision and loses at most a controlled multiple of the measured
infeasibility in objective value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .csp import CspInstance
from .errors import NotADistribution, ZeroRow
from .lp import LpSolution, mu_assignments, value_of


@dataclass(frozen=True)
class CharacterBasis:
    """Orthonormal basis of functions [q] -> R with the constant function first.

    Orthonormality is under the uniform inner product E_a[f(a) g(a)].  The
    table is chi[i, a] = chi_i(a); max |chi_i(a)| <= sqrt(q).
    """

    q: int
    table: np.ndarray

    def check(self, tol=1e-12) -> float:
        gram = self.table @ self.table.T / self.q
        return float(np.max(np.abs(gram - np.eye(self.q))))


def build_basis(q: int) -> CharacterBasis:
    """Gram-Schmidt over the indicator functions, constant function first.

    Signs are fixed by requiring the first nonzero entry of each character
    to be positive, so the basis is identical across platforms.
    """
    if q < 2:
        raise ValueError("q must be at least 2")
    raw = [np.ones(q)]
    for i in range(q - 1):
        e = np.zeros(q)
        e[i] = 1.0
        raw.append(e)
    basis: list[np.ndarray] = []
    for vec in raw:
        u = vec.astype(float)
        for b in basis:
            u -= (u @ b / q) * b
        norm = np.sqrt(u @ u / q)
        if norm < 1e-12:
            continue
        u /= norm
        nz = np.nonzero(np.abs(u) > 1e-12)[0][0]
        if u[nz] < 0:
            u = -u
        basis.append(u)
    return CharacterBasis(q, np.vstack(basis))


@dataclass
class LocalTable:
    """A function [q]^k -> R stored flat, lexicographic, first axis most
    significant.  `hat` holds the coefficient table in the product basis when
    computed."""

    q: int
    k: int
    values: np.ndarray
    hat: np.ndarray | None = None


def hat(table: LocalTable, basis: CharacterBasis | None = None) -> LocalTable:
    """Coefficient transform: hat_f(sigma) = sum_beta f(beta) chi_sigma(beta)."""
    basis = basis or build_basis(table.q)
    q, k = table.q, table.k
    arr = table.values.reshape((q,) * k).astype(float)
    for axis in range(k):
        arr = np.moveaxis(np.tensordot(basis.table, arr, axes=([1], [axis])), 0, axis)
    return LocalTable(q, k, table.values.copy(), arr.reshape(-1))


def unhat(table: LocalTable, basis: CharacterBasis | None = None) -> LocalTable:
    """Inverse transform: f(beta) = E_sigma[hat_f(sigma) chi_sigma(beta)]."""
    basis = basis or build_basis(table.q)
    q, k = table.q, table.k
    if table.hat is None:
        raise ValueError("no coefficient table present")
    inv = basis.table.T / q
    arr = table.hat.reshape((q,) * k).astype(float)
    for axis in range(k):
        arr = np.moveaxis(np.tensordot(inv, arr, axes=([1], [axis])), 0, axis)
    return LocalTable(q, k, arr.reshape(-1), table.hat.copy())


def table_marginal(values: np.ndarray, q: int, k: int, pos: int) -> np.ndarray:
    shaped = values.reshape((q,) * k)
    axes = tuple(i for i in range(k) if i != pos)
    return shaped.sum(axis=axes)


# --- surgery -----------------------------------------------------------------

def surgery(x: np.ndarray) -> np.ndarray:
    """Normalize each variable's marginal row to sum exactly to one.

    Requires nonnegative input rows with positive sums; a row of zeros has
    no meaningful normalization and raises ZeroRow.
    """
    x = np.asarray(x, dtype=float)
    if (x < -1e-12).any():
        raise NotADistribution("negative marginal entry")
    sums = x.sum(axis=1)
    if (sums <= 0).any():
        raise ZeroRow(f"variable {int(np.argmin(sums))} has an all-zero marginal row")
    return x / sums[:, None]


# --- smoothing ---------------------------------------------------------------

def smooth(mu_table: np.ndarray, x_rows: np.ndarray, eps: float,
           basis: CharacterBasis | None = None, delta: float | None = None):
    """Rewrite one local table to carry exact marginals.

    `mu_table` is a distribution over [q]^k (flat); `x_rows` is the k x q
    array of target marginals, each row summing to one exactly.  `eps` is the
    measured marginal violation of the pair.  Returns (table, delta) where
    the output table h satisfies, exactly up to float arithmetic:

        h >= 0,  sum h = 1,  marginal_i(h) = (1 - delta) x_i + delta / q,
        and  ||mu - h||_1 <= 2 delta,   with delta = k q^3 eps (capped at 1).
    """
    x_rows = np.asarray(x_rows, dtype=float)
    k, q = x_rows.shape
    mu_table = np.asarray(mu_table, dtype=float)
    if mu_table.shape != (q ** k,):
        raise ValueError("table size mismatch")
    if (mu_table < -1e-12).any():
        raise NotADistribution("negative table entry")
    if abs(mu_table.sum() - 1.0) > 0.05:
        raise NotADistribution(f"table sums to {mu_table.sum():.4f}")
    if np.max(np.abs(x_rows.sum(axis=1) - 1.0)) > 1e-9:
        raise ValueError("marginal targets must sum to one exactly")

    basis = basis or build_basis(q)
    if delta is None:
        delta = min(1.0, k * q ** 3 * eps)

    f = LocalTable(q, k, mu_table)
    fh = hat(f, basis).hat.reshape((q,) * k)
    # overwrite the degree-<=1 coefficients with those of the target marginals
    for i in range(k):
        g_hat = basis.table @ x_rows[i]          # hat of a -> x[i, a]
        idx = [0] * k
        for sigma in range(q):
            idx[i] = sigma
            fh[tuple(idx)] = g_hat[sigma]
    fprime = unhat(LocalTable(q, k, mu_table, fh.reshape(-1)), basis).values
    uniform = 1.0 / q ** k
    h = (1.0 - delta) * fprime + delta * uniform
    h = np.where(np.abs(h) < 1e-15, np.maximum(h, 0.0), h)
    return h, float(delta)


# --- full repair -------------------------------------------------------------

def repair_to_feasible(instance: CspInstance, sol: LpSolution,
                       measured_eps: float | None = None):
    """Produce an exactly feasible solution from an eps-infeasible one.

    Returns (repaired LpSolution, report).  The same mixing weight delta is
    used for every table and for the final marginal shift, so the equality
    rows close exactly:  sum_a x''[v,a] = 1 and every table marginal equals
    (1-delta) x'[v] + delta/q = x''[v].

    delta is driven by the measured post-surgery infeasibility (the smoothing
    guarantee needs the violation relative to the corrected marginals) and by
    the largest distinct-variable count among the constraints.
    """
    from .lp import infeasibility  # local import to avoid a cycle at import time

    if measured_eps is None:
        measured_eps = infeasibility(instance, sol)
    x_prime = surgery(sol.x)
    post = _marginal_violation(instance, x_prime, sol.mu)
    k_max = max((len(c.distinct_vars()) for c in instance.constraints), default=1)
    delta = min(1.0, k_max * instance.q ** 3 * post)

    basis = build_basis(instance.q)
    mu_prime: dict[int, np.ndarray] = {}
    l1_shift = {}
    for cid, c in enumerate(instance.constraints):
        dv = c.distinct_vars()
        rows = x_prime[list(dv)]
        table = sol.mu[cid]
        total = table.sum()
        if total <= 0:
            scaled = np.full_like(table, 1.0 / len(table))
        else:
            scaled = table / total
        h, _ = smooth(scaled, rows, post, basis, delta=delta)
        mu_prime[cid] = h
        l1_shift[cid] = float(np.abs(table - h).sum())

    x_out = (1.0 - delta) * x_prime + delta / instance.q
    repaired = LpSolution(x_out, mu_prime, value_of(instance, x_out, mu_prime))
    report = {
        "input_eps": float(measured_eps),
        "post_surgery_eps": float(post),
        "delta": float(delta),
        "value_before": sol.value,
        "value_after": repaired.value,
        "l1_shift": l1_shift,
    }
    return repaired, report


def _marginal_violation(instance: CspInstance, x: np.ndarray, mu: dict) -> float:
    worst = 0.0
    q = instance.q
    for cid, c in enumerate(instance.constraints):
        dv = c.distinct_vars()
        k = len(dv)
        for pos, v in enumerate(dv):
            marg = table_marginal(mu[cid], q, k, pos)
            worst = max(worst, float(np.max(np.abs(marg - x[v]))))
    return worst
