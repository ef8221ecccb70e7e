"""Linear-programming route to the envelope bounds.

At a fixed structural parameter the inner problem is linear in the latent
conditional distributions: one simplex of mass per observed cell with positive
weight, moment inequality rows shared across cells, and the per-point objective
already folded over the counterfactual margin. Solving that LP per parameter
and enveloping over the grid reproduces the bound without any penalty term.
This module keeps its own dense two-phase simplex (Bland's rule, so it cannot
cycle) so the route stays independent of the penalized engine.

Points whose folded objective is non-finite are excluded before solving: mass
on such a point forces the value to the corresponding infinity, so a finite
optimum exists exactly when the reduced LP is feasible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BudgetError, ContractError
from .envelope import WeightedMeasure
from .model import StructuralModel

SIMPLEX_TOL = 1e-10
MAX_PIVOTS = 200_000
VARIABLE_BUDGET = 20_000

OPTIMAL = 0
INFEASIBLE = 2
UNBOUNDED = 3


def _pivot(tab: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tab[row] = tab[row] / tab[row, col]
    piv = tab[row]
    for i in range(tab.shape[0]):
        if i != row and tab[i, col] != 0.0:
            tab[i] = tab[i] - tab[i, col] * piv
    basis[row] = col


def _run_simplex(tab: np.ndarray, basis: np.ndarray, cost: np.ndarray) -> int:
    """Minimize cost over the current tableau in place. Bland's rule throughout."""
    m, n1 = tab.shape
    n = n1 - 1
    for _ in range(MAX_PIVOTS):
        reduced = cost[:n] - cost[basis] @ tab[:, :n]
        enter = -1
        for j in range(n):
            if reduced[j] < -SIMPLEX_TOL:
                enter = j
                break
        if enter < 0:
            return OPTIMAL
        leave = -1
        best = np.inf
        for i in range(m):
            a = tab[i, enter]
            if a > SIMPLEX_TOL:
                ratio = tab[i, n] / a
                if ratio < best - 1e-15 or (
                    abs(ratio - best) <= 1e-15
                    and leave >= 0
                    and basis[i] < basis[leave]
                ):
                    best = ratio
                    leave = i
        if leave < 0:
            return UNBOUNDED
        _pivot(tab, basis, leave, enter)
    raise RuntimeError("simplex pivot limit exceeded")


def solve_lp(c, a_eq, b_eq, a_ub=None, b_ub=None):
    """Two-phase dense simplex for min c@x, a_eq x = b_eq, a_ub x <= b_ub, x >= 0.

    Returns (status, x, objective) with status OPTIMAL, INFEASIBLE or UNBOUNDED;
    x and objective are None unless optimal.
    """
    c = np.asarray(c, dtype=np.float64)
    a_eq = np.asarray(a_eq, dtype=np.float64)
    b_eq = np.asarray(b_eq, dtype=np.float64)
    n = c.shape[0]
    rows = [a_eq]
    rhs = [b_eq]
    n_ub = 0
    if a_ub is not None:
        a_ub = np.asarray(a_ub, dtype=np.float64)
        b_ub = np.asarray(b_ub, dtype=np.float64)
        n_ub = a_ub.shape[0]
        slack = np.zeros((a_eq.shape[0], n_ub))
        rows = [np.hstack([a_eq, slack]), np.hstack([a_ub, np.eye(n_ub)])]
        rhs = [b_eq, b_ub]
    a = np.vstack(rows)
    b = np.concatenate(rhs)
    m = a.shape[0]
    n_tot = n + n_ub
    flip = b < 0
    a[flip] = -a[flip]
    b = np.abs(b)

    # phase 1: artificial basis
    tab = np.hstack([a, np.eye(m), b[:, None]])
    basis = np.arange(n_tot, n_tot + m)
    cost1 = np.concatenate([np.zeros(n_tot), np.ones(m)])
    status = _run_simplex(tab, basis, cost1)
    if status != OPTIMAL:
        raise RuntimeError("phase 1 cannot be unbounded")
    if cost1[basis] @ tab[:, -1] > 1e-7:
        return INFEASIBLE, None, None

    # drive artificials out of the basis, dropping redundant rows
    keep_rows = []
    for i in range(m):
        if basis[i] >= n_tot:
            piv = -1
            for j in range(n_tot):
                if abs(tab[i, j]) > SIMPLEX_TOL:
                    piv = j
                    break
            if piv < 0:
                continue
            _pivot(tab, basis, i, piv)
        keep_rows.append(i)
    tab = np.hstack([tab[keep_rows, :n_tot], tab[keep_rows, -1:]])
    basis = basis[keep_rows]

    cost2 = np.concatenate([c, np.zeros(n_ub)])
    status = _run_simplex(tab, basis, cost2)
    if status != OPTIMAL:
        return status, None, None
    x = np.zeros(n_tot)
    x[basis] = tab[:, -1]
    return OPTIMAL, x[:n], float(cost2[:n_tot] @ x)


@dataclass(frozen=True)
class OracleValue:
    """Envelope value from the LP route, with the attaining parameter."""

    value: float
    theta_id: Optional[str]
    feasible: bool
    side: str


def _cell_nodes(model: StructuralModel, measure: WeightedMeasure, theta_id: str):
    """Per positive-weight cell: the factual latent points and cell weight."""
    sup = model.support
    theta = model.theta_value(theta_id)
    w = measure.weights
    nodes = []
    for iy, y in enumerate(sup.y_atoms):
        for iz, z in enumerate(sup.z_atoms):
            wc = float(w[iy, iz])
            if wc <= 0.0:
                continue
            pts = list(model.gminus.fn(y, z, theta))
            nodes.append((y, z, wc, pts))
    return nodes


def lp_value_at_theta(
    model: StructuralModel,
    measure: WeightedMeasure,
    gamma_id: str,
    theta_id: str,
    side: str = "lower",
) -> float:
    """Inner LP value at one parameter; +inf (lower) or -inf (upper) when forced."""
    if side not in ("lower", "upper"):
        raise ContractError(f"side must be 'lower' or 'upper', got {side!r}")
    sign = 1.0 if side == "lower" else -1.0
    forced = np.inf if side == "lower" else -np.inf
    theta = model.theta_value(theta_id)
    gamma = model.policy_value(gamma_id)
    phi = model.objective.fn
    nodes = _cell_nodes(model, measure, theta_id)

    obj, col_moments, cell_sizes, weights = [], [], [], []
    for y, z, wc, pts in nodes:
        kept = 0
        for u in pts:
            stars = model.gstar.fn(y, z, u, theta, gamma)
            if side == "lower":
                b = min((phi(s, y, z, u) for s in stars), default=np.inf)
            else:
                b = max((phi(s, y, z, u) for s in stars), default=-np.inf)
            if not np.isfinite(b):
                continue
            obj.append(sign * b)
            col_moments.append(np.asarray(model.moments.fn(y, z, u, theta), dtype=np.float64))
            kept += 1
        if kept == 0:
            return forced
        cell_sizes.append(kept)
        weights.append(wc)

    n_vars = len(obj)
    if n_vars == 0:
        return forced
    if n_vars > VARIABLE_BUDGET:
        raise BudgetError(
            f"LP would need {n_vars} variables, over the budget of {VARIABLE_BUDGET}"
        )
    a_eq = np.zeros((len(cell_sizes), n_vars))
    start = 0
    for i, size in enumerate(cell_sizes):
        a_eq[i, start : start + size] = 1.0
        start += size
    b_eq = np.asarray(weights)
    j = model.n_moments
    a_ub = np.vstack(col_moments).T if j else None
    b_ub = np.zeros(j) if j else None
    status, _, value = solve_lp(np.asarray(obj), a_eq, b_eq, a_ub, b_ub)
    if status == INFEASIBLE:
        return forced
    if status != OPTIMAL:
        raise RuntimeError("inner LP reported unbounded; the feasible set is compact")
    return sign * value


def oracle_envelope(
    model: StructuralModel,
    measure: WeightedMeasure,
    gamma_id: str,
    side: str = "lower",
) -> OracleValue:
    """Envelope over the parameter grid via the per-parameter LP."""
    best = None
    best_id = None
    for tid in model.thetas.ids:
        v = lp_value_at_theta(model, measure, gamma_id, tid, side)
        if not np.isfinite(v):
            continue
        if best is None or (side == "lower" and v < best) or (side == "upper" and v > best):
            best, best_id = v, tid
    if best is None:
        value = np.inf if side == "lower" else -np.inf
        return OracleValue(value=value, theta_id=None, feasible=False, side=side)
    return OracleValue(value=best, theta_id=best_id, feasible=True, side=side)


def pointwise_value(
    model: StructuralModel,
    measure: WeightedMeasure,
    gamma_id: str,
    theta_id: str,
    side: str = "lower",
) -> float:
    """Moment-free inner value: per-cell extremum of the folded objective.

    With no moment rows the LP decouples across cells and puts all conditional
    mass on each cell's best point, so this closed form must match the LP.
    """
    theta = model.theta_value(theta_id)
    gamma = model.policy_value(gamma_id)
    phi = model.objective.fn
    total = 0.0
    for y, z, wc, pts in _cell_nodes(model, measure, theta_id):
        vals = []
        for u in pts:
            stars = model.gstar.fn(y, z, u, theta, gamma)
            if side == "lower":
                vals.append(min((phi(s, y, z, u) for s in stars), default=np.inf))
            else:
                vals.append(max((phi(s, y, z, u) for s in stars), default=-np.inf))
        if not vals:
            return np.inf if side == "lower" else -np.inf
        ext = min(vals) if side == "lower" else max(vals)
        if not np.isfinite(ext):
            return ext
        total += wc * ext
    return total
