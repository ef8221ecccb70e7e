"""Empirical Rademacher complexity of the penalized integrand class.

Two routes compute the same quantity. The explicit route materializes the
restricted class as a matrix (one row per (theta, policy, penalty vector),
one column per observation) and is meant for small classes, diagnostics and
tests. The implicit route never enumerates penalty vectors: for a fixed
(theta, policy) the supremum over penalty vectors of the signed empirical mean
is exactly the engine's S at the signed per-cell weights, so

    sup over the class of |mean(xi * h)|        = max over (theta, policy) of
                                                  max(S(+w), S(-w)),
    sup over ordered differences f - g of
    mean(xi * (f - g))                          = max S(+w) + max S(-w),

with w[c] = sum of signs in cell c divided by n. Rows that take a non-finite
value on an observed cell are dropped from the optimization and counted; the
finite-sample certificates are only valid when nothing was dropped.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._core import EngineConfig, get_tables
from .errors import BudgetError, ContractError
from .model import Sample, StructuralModel

DEFAULT_ROW_BUDGET = 200_000


@dataclass(frozen=True, eq=False)
class RademacherDraw:
    """A vector of fair signs, one per observation."""

    signs: np.ndarray
    seed: int

    def __post_init__(self):
        s = np.asarray(self.signs, dtype=np.int8)
        if s.ndim != 1 or s.size == 0:
            raise ContractError("signs must be a nonempty 1d array")
        if not np.all(np.abs(s) == 1):
            raise ContractError("signs must be +1 or -1")
        object.__setattr__(self, "signs", s)

    @classmethod
    def draw(cls, n: int, seed: int) -> "RademacherDraw":
        if n < 1:
            raise ContractError(f"need at least one observation, got n={n}")
        rng = np.random.default_rng(seed)
        signs = (2 * rng.integers(0, 2, size=n) - 1).astype(np.int8)
        return cls(signs=signs, seed=int(seed))

    @property
    def n(self) -> int:
        return int(self.signs.size)


@dataclass
class RestrictedClass:
    """A function class restricted to the sample: rows of values per function."""

    rows: np.ndarray                  # (R, n)
    labels: tuple
    bound: float                      # uniform sup-norm bound for the class
    n: int
    dropped: int = 0                  # rows removed for non-finite sample values


def _sample_cells(model: StructuralModel, sample: Sample) -> np.ndarray:
    sup = model.support
    n_z = len(sup.z_atoms)
    flat = np.empty(sample.n, dtype=np.int64)
    for i, (y, z) in enumerate(sample.rows):
        try:
            flat[i] = sup.y_index(y) * n_z + sup.z_index(z)
        except KeyError:
            raise ContractError(f"sample atom pair ({y}, {z}) not in the model support") from None
    return flat


def restrict_hlb(
    model: StructuralModel,
    sample: Sample,
    policy_ids: Optional[Sequence[str]] = None,
    differences: bool = False,
    max_rows: int = DEFAULT_ROW_BUDGET,
    engine: Optional[EngineConfig] = None,
) -> RestrictedClass:
    """Materialize the lower integrand class on a sample, row by row.

    Every (theta, policy in the subset, binary penalty vector) contributes one
    row; with ``differences=True`` the result holds all ordered pairwise
    differences of the finite base rows instead. Exceeding ``max_rows`` raises a
    budget error rather than thrashing.
    """
    tables = get_tables(model, engine)
    if policy_ids is None:
        policy_ids = list(model.policies.ids)
    g_idx = []
    for pid in policy_ids:
        if pid not in model.policies.ids:
            raise ContractError(f"unknown policy id {pid!r}")
        g_idx.append(model.policies.ids.index(pid))
    J = model.n_moments
    base_rows = len(model.thetas) * len(g_idx) * (2 ** J)
    total = base_rows * base_rows if differences else base_rows
    if total > max_rows:
        raise BudgetError(
            f"restricted class would hold {total} rows, over the budget of {max_rows}"
        )

    flat = _sample_cells(model, sample)
    n_cells = tables.n_cells
    rows, labels = [], []
    dropped = 0
    for t, theta_id in enumerate(model.thetas.ids):
        for g in g_idx:
            gamma_id = model.policies.ids[g]
            for bits in itertools.product((0, 1), repeat=J):
                lam = np.asarray(bits, dtype=np.float64)
                cell_flat, vals = tables.h_values_per_cell(t, g, "lower", lam)
                full = np.full(n_cells, math.inf)
                full[cell_flat] = vals
                row = full[flat]
                if not np.all(np.isfinite(row)):
                    dropped += 1
                    continue
                rows.append(row)
                labels.append((theta_id, gamma_id, bits))

    bound = model.h_bar()
    if differences:
        base = rows
        base_labels = labels
        rows, labels = [], []
        for (ri, li) in zip(base, base_labels):
            for (rj, lj) in zip(base, base_labels):
                rows.append(ri - rj)
                labels.append((li, lj))
        bound = 2.0 * bound
    mat = (
        np.asarray(rows, dtype=np.float64)
        if rows
        else np.zeros((0, sample.n), dtype=np.float64)
    )
    return RestrictedClass(
        rows=mat, labels=tuple(labels), bound=bound, n=sample.n, dropped=dropped
    )


def rademacher_complexity(cls: RestrictedClass, draw: RademacherDraw) -> float:
    """sup over the class of |(1/n) sum_i xi_i f(x_i)|, computed exactly."""
    if draw.n != cls.n:
        raise ContractError(f"draw has {draw.n} signs but the class has n={cls.n}")
    if cls.rows.shape[0] == 0:
        return 0.0
    means = cls.rows @ (draw.signs.astype(np.float64) / cls.n)
    return float(np.max(np.abs(means)))


@dataclass
class ImplicitRademacher:
    """Result of the implicit (engine-based) Rademacher computation."""

    value: float
    class_rows: int            # rows the class would have if materialized
    dropped_rows: int          # rows excluded for non-finite sample values
    dropped_pairs: tuple       # (theta_id, gamma_id) pairs excluded wholesale
    heuristic: bool = False


def rademacher_hlb(
    model: StructuralModel,
    sample: Sample,
    draw: RademacherDraw,
    policy_ids: Optional[Sequence[str]] = None,
    differences: bool = False,
    engine: Optional[EngineConfig] = None,
) -> ImplicitRademacher:
    """Exact Rademacher complexity without materializing the class.

    Agrees with rademacher_complexity(restrict_hlb(...)) on every model small
    enough to materialize; unlike the explicit route it scales to large J.
    """
    if draw.n != sample.n:
        raise ContractError(f"draw has {draw.n} signs but the sample has n={sample.n}")
    tables = get_tables(model, engine)
    if policy_ids is None:
        policy_ids = list(model.policies.ids)
    g_idx = [model.policies.ids.index(pid) for pid in policy_ids]

    flat = _sample_cells(model, sample)
    counts = np.bincount(flat, minlength=tables.n_cells).astype(np.float64)
    w = np.zeros(tables.n_cells, dtype=np.float64)
    np.add.at(w, flat, draw.signs.astype(np.float64))
    w /= sample.n

    J = model.n_moments
    rows_per_pair = 2 ** J
    m_plus = -math.inf
    m_minus = -math.inf
    dropped_pairs = []
    heuristic = False
    kept = 0
    for t in range(len(model.thetas)):
        for g in g_idx:
            bad = tables.bad_cells(t, g, "lower")
            if bad.size and np.any(counts[bad] > 0):
                dropped_pairs.append((model.thetas.ids[t], model.policies.ids[g]))
                continue
            kept += 1
            s_p = tables.s_value(t, g, "lower", w, need_lambda=False)
            s_m = tables.s_value(t, g, "lower", -w, need_lambda=False)
            heuristic = heuristic or s_p.heuristic or s_m.heuristic
            m_plus = max(m_plus, s_p.value)
            m_minus = max(m_minus, s_m.value)

    kept_rows = kept * rows_per_pair
    dropped_rows = len(dropped_pairs) * rows_per_pair
    if differences:
        class_rows = kept_rows * kept_rows
        dropped = (kept_rows + dropped_rows) ** 2 - class_rows
        value = 0.0 if kept == 0 else m_plus + m_minus
    else:
        class_rows = kept_rows
        dropped = dropped_rows
        value = 0.0 if kept == 0 else max(m_plus, m_minus)
    return ImplicitRademacher(
        value=float(value),
        class_rows=class_rows,
        dropped_rows=dropped,
        dropped_pairs=tuple(dropped_pairs),
        heuristic=heuristic,
    )


def empirical_covering_number(cls: RestrictedClass, eps: float) -> int:
    """Greedy farthest-point cover size under the empirical L2 norm.

    Upper-bounds the true covering number; deterministic (starts from row 0,
    always adds the point farthest from the current centers).
    """
    if not (math.isfinite(eps) and eps > 0):
        raise ContractError(f"eps must be positive and finite, got {eps}")
    R = cls.rows.shape[0]
    if R == 0:
        return 0
    scale = 1.0 / cls.n
    centers = [0]
    d2 = np.sum((cls.rows - cls.rows[0]) ** 2, axis=1) * scale
    while True:
        far = int(np.argmax(d2))
        if d2[far] <= eps * eps:
            return len(centers)
        centers.append(far)
        cand = np.sum((cls.rows - cls.rows[far]) ** 2, axis=1) * scale
        d2 = np.minimum(d2, cand)
