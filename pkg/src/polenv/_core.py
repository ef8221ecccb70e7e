"""Vectorized engine for optimizing the penalized integrand over penalty vectors.

Everything the envelope, decision and complexity modules compute reduces to one
primitive: for a fixed parameter candidate theta and policy gamma, and a vector
of per-cell weights w (probabilities for envelopes, signed Rademacher averages
for complexity),

    S(w) = max over binary penalty vectors lambda of
           sum over observed cells c of w[c] * min over u in G-(c) of
           [ b(c, u) + sum_j lambda_j * mu* * m_j(c, u) ]

with b the inner-optimized objective (min of phi over G* on the lower side,
-max of phi on the upper side, so the upper envelope is -S). The engine makes
the max over lambda exact at desk scale through three reductions:

* columns that are identically zero on the support are fixed to lambda = 0;
* moment pairs whose coefficient columns are exact negations collapse into one
  ternary digit with multiplier in {-1, 0, +1};
* digits whose column is constant within every cell ("affine" digits) separate
  from the minimum and are optimized in closed form per weight vector.

The remaining coupled digits are enumerated exactly when the product of their
arities fits a budget; the enumeration matrix V = sum of digit-column outer
products is cached per theta, so repeated calls with fresh weights (Monte Carlo
replications, Rademacher draws, schedule intervals) cost one broadcast add, one
segmented min and one matvec. Above the budget a seeded coordinate-ascent
heuristic with restarts takes over and results are flagged.

Tie rule: the reported maximizing lambda is the first one in a fixed mixed-radix
enumeration order (digits in construction order, later digits varying fastest);
affine digits resolve ties toward the smaller multiplier.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BudgetError, ContractError
from .model import StructuralModel

DEFAULT_COMBO_BUDGET = 1 << 20
HEURISTIC_RESTARTS = 8


@dataclass
class EngineConfig:
    combo_budget: int = DEFAULT_COMBO_BUDGET
    restarts: int = HEURISTIC_RESTARTS
    allow_heuristic: bool = True


@dataclass
class _Digit:
    """One enumeration digit of the collapsed penalty optimization."""

    mults: np.ndarray          # multiplier options, e.g. [-1, 0, 1] or [0, 1]
    lam_options: np.ndarray    # (n_options, n_assigned) binary assignments
    moment_idx: np.ndarray     # moment indices the assignments refer to
    col: np.ndarray            # base coefficient column (already includes mu*)
    affine: bool
    cell_const: Optional[np.ndarray] = None  # per-cell value when affine


@dataclass
class _ThetaTables:
    cell_flat: np.ndarray         # (K,) flat iy * n_z + iz of nonempty cells
    seg_starts: np.ndarray        # (K,) start offsets into the stacked points
    point_cell: np.ndarray        # (P,) cell position of each stacked point
    u_idx: np.ndarray             # (P,) u-atom index of each stacked point
    empty_flat: np.ndarray        # flat ids of cells with empty factual support
    coef: np.ndarray              # (P, J) mu* * m_j
    zero_moments: np.ndarray      # moment indices fixed to lambda = 0
    affine_digits: list
    coupled_digits: list
    n_combo: int
    V: Optional[np.ndarray]       # (n_combo, P) or None when over budget
    b_cache: dict = field(default_factory=dict)


@dataclass
class _SideTables:
    b: np.ndarray                 # (P,) inner objective values, +inf allowed
    allinf_pos: np.ndarray        # positions (into nonempty cells) fully infinite
    percell_min: np.ndarray       # (K,) min over u of b (inf on allinf cells)


@dataclass
class SValue:
    """Result of one engine call: the optimum, its penalty vector and flags."""

    value: float
    lam: Optional[np.ndarray]
    heuristic: bool


class ModelTables:
    def __init__(self, model: StructuralModel, config: EngineConfig):
        self.model = model
        self.config = config
        sup = model.support
        self.n_y = len(sup.y_atoms)
        self.n_z = len(sup.z_atoms)
        self.n_cells = self.n_y * self.n_z
        self.J = model.n_moments
        self._theta: list[_ThetaTables] = [
            self._build_theta(t) for t in range(len(model.thetas))
        ]

    # -- construction -----------------------------------------------------

    def _build_theta(self, t: int) -> _ThetaTables:
        model = self.model
        sup = model.support
        theta = model.thetas.values[t]
        cell_flat, seg_starts, point_cell, u_idx, empty_flat = [], [], [], [], []
        offset = 0
        for iy, y in enumerate(sup.y_atoms):
            for iz, z in enumerate(sup.z_atoms):
                flat = iy * self.n_z + iz
                us = [tuple(float(c) for c in u) for u in model.gminus.fn(y, z, theta)]
                if not us:
                    empty_flat.append(flat)
                    continue
                cell_flat.append(flat)
                seg_starts.append(offset)
                for u in us:
                    try:
                        ui = sup.u_index(u)
                    except KeyError:
                        raise ContractError(
                            f"factual map returned {u} outside the u support "
                            f"(theta={model.thetas.ids[t]}, y={y}, z={z})"
                        ) from None
                    point_cell.append(len(cell_flat) - 1)
                    u_idx.append(ui)
                offset = len(point_cell)

        cell_flat = np.asarray(cell_flat, dtype=np.int64)
        seg_starts = np.asarray(seg_starts, dtype=np.int64)
        point_cell = np.asarray(point_cell, dtype=np.int64)
        u_idx = np.asarray(u_idx, dtype=np.int64)
        empty_flat = np.asarray(empty_flat, dtype=np.int64)
        P = point_cell.shape[0]

        coef = np.zeros((P, self.J), dtype=np.float64)
        for p in range(P):
            flat = cell_flat[point_cell[p]]
            y = sup.y_atoms[flat // self.n_z]
            z = sup.z_atoms[flat % self.n_z]
            u = sup.u_atoms[u_idx[p]]
            m = np.asarray(model.moments.fn(y, z, u, theta), dtype=np.float64)
            if m.shape != (self.J,):
                raise ContractError(
                    f"moment vector has shape {m.shape}, expected ({self.J},)"
                )
            coef[p] = model.mu_star * m

        zero_moments, affine, coupled = self._build_digits(coef, seg_starts, P)
        n_combo = 1
        for d in coupled:
            n_combo *= len(d.mults)
        V = None
        if n_combo <= self.config.combo_budget:
            V = np.zeros((1, P), dtype=np.float64)
            for d in coupled:
                V = (V[:, None, :] + np.multiply.outer(d.mults, d.col)[None, :, :]).reshape(
                    -1, P
                )
        return _ThetaTables(
            cell_flat=cell_flat,
            seg_starts=seg_starts,
            point_cell=point_cell,
            u_idx=u_idx,
            empty_flat=empty_flat,
            coef=coef,
            zero_moments=zero_moments,
            affine_digits=affine,
            coupled_digits=coupled,
            n_combo=n_combo,
            V=V,
        )

    def _build_digits(self, coef: np.ndarray, seg_starts: np.ndarray, P: int):
        J = self.J
        zero = []
        digits: list[_Digit] = []
        used = np.zeros(J, dtype=bool)
        # adding 0.0 folds -0.0 into +0.0 so byte-level negation matching is exact
        cols = [coef[:, j] + 0.0 for j in range(J)]
        neg_key = {}
        for j in range(J):
            if P == 0 or not np.any(cols[j]):
                zero.append(j)
                used[j] = True
        for j in range(J):
            if used[j]:
                continue
            key = cols[j].tobytes()
            neg = (-cols[j] + 0.0).tobytes()
            if neg in neg_key and not used[neg_key[neg]]:
                k = neg_key[neg]
                # cols[k] == -cols[j]: collapse into one ternary digit on cols[k]
                digits.append(
                    _Digit(
                        mults=np.array([-1.0, 0.0, 1.0]),
                        lam_options=np.array([[0, 1], [0, 0], [1, 0]], dtype=np.int8),
                        moment_idx=np.array([k, j], dtype=np.int64),
                        col=cols[k],
                        affine=False,
                    )
                )
                used[j] = used[k] = True
                continue
            neg_key.setdefault(key, j)
        for j in range(J):
            if used[j]:
                continue
            digits.append(
                _Digit(
                    mults=np.array([0.0, 1.0]),
                    lam_options=np.array([[0], [1]], dtype=np.int8),
                    moment_idx=np.array([j], dtype=np.int64),
                    col=cols[j],
                    affine=False,
                )
            )

        affine, coupled = [], []
        seg_ends = np.append(seg_starts[1:], P) if P else np.zeros(0, dtype=np.int64)
        for d in digits:
            const = True
            if P:
                for s, e in zip(seg_starts, seg_ends):
                    block = d.col[s:e]
                    if block.size and (block.max() != block.min()):
                        const = False
                        break
            if const and P:
                d.affine = True
                d.cell_const = d.col[seg_starts]
                affine.append(d)
            else:
                coupled.append(d)
        return np.asarray(zero, dtype=np.int64), affine, coupled

    def _side_tables(self, t: int, g: int, side: str) -> _SideTables:
        tt = self._theta[t]
        key = (g, side)
        cached = tt.b_cache.get(key)
        if cached is not None:
            return cached
        model = self.model
        sup = model.support
        theta = model.thetas.values[t]
        gamma = model.policies.values[g]
        P = tt.point_cell.shape[0]
        b = np.empty(P, dtype=np.float64)
        for p in range(P):
            flat = tt.cell_flat[tt.point_cell[p]]
            y = sup.y_atoms[flat // self.n_z]
            z = sup.z_atoms[flat % self.n_z]
            u = sup.u_atoms[tt.u_idx[p]]
            vals = [
                float(model.objective.fn(tuple(float(c) for c in s), y, z, u))
                for s in model.gstar.fn(y, z, u, theta, gamma)
            ]
            if side == "lower":
                b[p] = min(vals) if vals else math.inf
            else:
                b[p] = -max(vals) if vals else math.inf
        K = tt.cell_flat.shape[0]
        if K:
            percell_min = np.minimum.reduceat(b, tt.seg_starts)
        else:
            percell_min = np.zeros(0, dtype=np.float64)
        allinf_pos = np.nonzero(~np.isfinite(percell_min))[0]
        st = _SideTables(b=b, allinf_pos=allinf_pos, percell_min=percell_min)
        tt.b_cache[key] = st
        return st

    # -- queries -----------------------------------------------------------

    def bad_cells(self, t: int, g: int, side: str) -> np.ndarray:
        """Flat cell ids where h is non-finite for every penalty vector."""
        tt = self._theta[t]
        st = self._side_tables(t, g, side)
        return np.concatenate([tt.empty_flat, tt.cell_flat[st.allinf_pos]])

    def s_value(
        self,
        t: int,
        g: int,
        side: str,
        w_flat: np.ndarray,
        need_lambda: bool = True,
    ) -> SValue:
        """Compute S(w) for one (theta, policy, side).

        ``w_flat`` is indexed by iy * n_z + iz. Cells whose integrand is
        non-finite for every lambda (empty factual support, or empty
        counterfactual support throughout) force the value to +inf whenever they
        carry nonzero weight; callers using signed weights are expected to have
        excluded such (theta, policy) pairs already.
        """
        tt = self._theta[t]
        st = self._side_tables(t, g, side)
        w_flat = np.asarray(w_flat, dtype=np.float64)
        if w_flat.shape != (self.n_cells,):
            raise ContractError(
                f"weight vector has shape {w_flat.shape}, expected ({self.n_cells},)"
            )
        bad = self.bad_cells(t, g, side)
        if bad.size and np.any(w_flat[bad] != 0.0):
            return SValue(value=math.inf, lam=None, heuristic=False)
        K = tt.cell_flat.shape[0]
        if K == 0:
            lam = np.zeros(self.J, dtype=np.int8) if need_lambda else None
            return SValue(value=0.0, lam=lam, heuristic=False)
        w = w_flat[tt.cell_flat]
        ok = np.isfinite(st.percell_min)
        # zero-weight cells with partially/fully infinite integrand must not
        # contribute inf * 0 terms
        w = np.where(ok, w, 0.0)

        affine_total = 0.0
        affine_choice = []
        for d in tt.affine_digits:
            scores = d.mults * float(d.cell_const @ w)
            i = int(np.argmax(scores))
            affine_total += scores[i]
            affine_choice.append(i)

        if not tt.coupled_digits:
            pm = np.where(ok, st.percell_min, 0.0)
            value = float(pm @ w) + affine_total
            lam = self._decode(tt, affine_choice, 0) if need_lambda else None
            return SValue(value=value, lam=lam, heuristic=False)

        if tt.V is not None:
            A = tt.V + st.b[None, :]
            mins = np.minimum.reduceat(A, tt.seg_starts, axis=1)
            if not np.all(ok):
                mins = np.where(ok[None, :], mins, 0.0)
            totals = mins @ w
            i = int(np.argmax(totals))
            value = float(totals[i]) + affine_total
            lam = self._decode(tt, affine_choice, i) if need_lambda else None
            return SValue(value=value, lam=lam, heuristic=False)

        if not self.config.allow_heuristic:
            raise BudgetError(
                f"penalty enumeration needs {tt.n_combo} combinations, over the "
                f"budget of {self.config.combo_budget} and the heuristic is disabled"
            )
        value, choice = self._ascend(tt, st, w, ok)
        value += affine_total
        lam = self._decode_choice(tt, affine_choice, choice) if need_lambda else None
        return SValue(value=value, lam=lam, heuristic=True)

    def _ascend(self, tt: _ThetaTables, st: _SideTables, w, ok):
        digits = tt.coupled_digits
        nd = len(digits)

        def evaluate(choice):
            M = st.b.copy()
            for d, c in zip(digits, choice):
                M += d.mults[c] * d.col
            mins = np.minimum.reduceat(M, tt.seg_starts)
            mins = np.where(ok, mins, 0.0)
            return float(mins @ w)

        best_val = -math.inf
        best_choice = None
        starts = [np.array([int(np.argmax(d.mults == 0.0)) for d in digits])]
        for r in range(self.config.restarts):
            rng = np.random.default_rng(r)
            starts.append(
                np.array([rng.integers(0, len(d.mults)) for d in digits])
            )
        for start in starts:
            choice = start.copy()
            val = evaluate(choice)
            improved = True
            while improved:
                improved = False
                for i in range(nd):
                    cur = choice[i]
                    for c in range(len(digits[i].mults)):
                        if c == cur:
                            continue
                        choice[i] = c
                        v = evaluate(choice)
                        if v > val + 1e-15:
                            val = v
                            cur = c
                            improved = True
                    choice[i] = cur
            if val > best_val:
                best_val = val
                best_choice = choice.copy()
        return best_val, best_choice

    def _decode(self, tt: _ThetaTables, affine_choice, combo_index: int) -> np.ndarray:
        choice = []
        i = combo_index
        for d in reversed(tt.coupled_digits):
            a = len(d.mults)
            choice.append(i % a)
            i //= a
        choice.reverse()
        return self._decode_choice(tt, affine_choice, choice)

    def _decode_choice(self, tt: _ThetaTables, affine_choice, coupled_choice) -> np.ndarray:
        lam = np.zeros(self.J, dtype=np.int8)
        for d, c in zip(tt.affine_digits, affine_choice):
            lam[d.moment_idx] = d.lam_options[c]
        for d, c in zip(tt.coupled_digits, coupled_choice):
            lam[d.moment_idx] = d.lam_options[int(c)]
        return lam

    def h_values_per_cell(
        self, t: int, g: int, side: str, lam: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Integrand values at a fixed lambda, one per nonempty cell.

        Returns (flat cell ids, values); values may be +inf where the inner
        counterfactual set is empty throughout a cell. Used by the explicit
        restricted-class builder and by tests that cross-check the engine
        against the reference integrand.
        """
        tt = self._theta[t]
        st = self._side_tables(t, g, side)
        lam = np.asarray(lam, dtype=np.float64)
        if lam.shape != (self.J,):
            raise ContractError(f"lambda has shape {lam.shape}, expected ({self.J},)")
        if tt.point_cell.shape[0] == 0:
            return tt.cell_flat, np.zeros(0, dtype=np.float64)
        pen = tt.coef @ lam
        vals = np.minimum.reduceat(st.b + pen, tt.seg_starts)
        return tt.cell_flat, vals


_CACHE: "weakref.WeakKeyDictionary[StructuralModel, ModelTables]" = (
    weakref.WeakKeyDictionary()
)


def get_tables(model: StructuralModel, config: Optional[EngineConfig] = None) -> ModelTables:
    """Tables are built once per model instance and cached by identity."""
    tables = _CACHE.get(model)
    if tables is None:
        tables = ModelTables(model, config or EngineConfig())
        _CACHE[model] = tables
    return tables
