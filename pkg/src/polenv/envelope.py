"""Sharp lower and upper envelopes of the policy transform over the theta grid.

The lower envelope of a policy gamma is the infimum over theta candidates of the
penalty-maximized integral of the lower integrand against a weighted measure on
the observed cells; the upper envelope mirrors it. With the exact penalty level
the pair brackets the closed convex hull of the identified set of the transform,
which is what makes them usable as robust bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ._core import EngineConfig, get_tables
from .errors import ContractError
from .model import Atom, Sample, StructuralModel

WEIGHT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class WeightedMeasure:
    """Nonnegative weights on the observed (y, z) cells, summing to one.

    Stored densely as a matrix indexed by (y atom index, z atom index) relative
    to a model support.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ContractError(f"weights must be a 2d array, got shape {w.shape}")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ContractError("weights must be finite and nonnegative")
        total = float(w.sum())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ContractError(f"weights sum to {total}, expected 1")
        object.__setattr__(self, "weights", w)

    @property
    def flat(self) -> np.ndarray:
        return self.weights.reshape(-1)


def empirical_measure(model: StructuralModel, sample: Sample) -> WeightedMeasure:
    """Cell frequencies of a sample as a weighted measure."""
    sup = model.support
    w = np.zeros((len(sup.y_atoms), len(sup.z_atoms)), dtype=np.float64)
    for y, z in sample.rows:
        try:
            iy = sup.y_index(y)
            iz = sup.z_index(z)
        except KeyError:
            raise ContractError(f"sample atom pair ({y}, {z}) not in the model support") from None
        w[iy, iz] += 1.0
    return WeightedMeasure(weights=w / sample.n)


@dataclass
class EnvelopePoint:
    """One optimized envelope value with its witnesses."""

    gamma_id: str
    value: float
    theta_id: Optional[str]
    lam: Optional[np.ndarray]
    heuristic: bool = False


@dataclass
class EnvelopeCurve:
    """Envelope values for every policy on a grid, in grid order."""

    gamma_ids: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    theta_lower: tuple[Optional[str], ...]
    theta_upper: tuple[Optional[str], ...]
    lam_lower: tuple[Optional[np.ndarray], ...] = field(repr=False, default=())
    lam_upper: tuple[Optional[np.ndarray], ...] = field(repr=False, default=())
    heuristic: bool = False

    def lower_of(self, gamma_id: str) -> float:
        return float(self.lower[self.gamma_ids.index(gamma_id)])

    def upper_of(self, gamma_id: str) -> float:
        return float(self.upper[self.gamma_ids.index(gamma_id)])


def _policy_indices(model: StructuralModel, policy_ids) -> list[int]:
    if policy_ids is None:
        return list(range(len(model.policies)))
    out = []
    for pid in policy_ids:
        try:
            out.append(model.policies.ids.index(pid))
        except ValueError:
            raise ContractError(f"unknown policy id {pid!r}") from None
    return out


def lower_envelope(
    model: StructuralModel,
    measure: WeightedMeasure,
    gamma_id: str,
    *,
    lambda_zero: bool = False,
    engine: Optional[EngineConfig] = None,
) -> EnvelopePoint:
    """Infimum over theta of the penalty-maximized lower integral.

    ``lambda_zero=True`` restricts the penalty vector to zero, which drops the
    moment information entirely and can only lower the value; it exists for
    diagnostics and tests. Theta ties resolve to the first candidate in grid
    order. The value is +inf when every theta leaves some positively weighted
    cell without a consistent latent point.
    """
    tables = get_tables(model, engine)
    g = model.policies.ids.index(gamma_id) if gamma_id in model.policies.ids else None
    if g is None:
        raise ContractError(f"unknown policy id {gamma_id!r}")
    w = measure.flat
    best = None
    for t in range(len(model.thetas)):
        if lambda_zero:
            sv = _lambda_zero_value(tables, t, g, "lower", w)
        else:
            sv = tables.s_value(t, g, "lower", w)
        if best is None or sv.value < best[0]:
            best = (sv.value, t, sv.lam, sv.heuristic)
    value, t, lam, heur = best
    theta_id = model.thetas.ids[t] if math.isfinite(value) else None
    return EnvelopePoint(
        gamma_id=gamma_id,
        value=value,
        theta_id=theta_id,
        lam=lam if math.isfinite(value) else None,
        heuristic=heur,
    )


def _lambda_zero_value(tables, t, g, side, w):
    from ._core import SValue

    cell_flat, vals = tables.h_values_per_cell(
        t, g, side, np.zeros(tables.J, dtype=np.float64)
    )
    bad = tables.bad_cells(t, g, side)
    if bad.size and np.any(w[bad] != 0.0):
        return SValue(value=math.inf, lam=None, heuristic=False)
    wc = w[cell_flat]
    ok = np.isfinite(vals)
    total = float(np.where(ok, vals, 0.0) @ np.where(ok, wc, 0.0))
    return SValue(value=total, lam=np.zeros(tables.J, dtype=np.int8), heuristic=False)


def upper_envelope(
    model: StructuralModel,
    measure: WeightedMeasure,
    gamma_id: str,
    *,
    lambda_zero: bool = False,
    engine: Optional[EngineConfig] = None,
) -> EnvelopePoint:
    """Supremum over theta of the penalty-minimized upper integral.

    The value is -inf when every theta leaves some positively weighted cell
    without a consistent latent point (the supremum over an empty selection).
    """
    tables = get_tables(model, engine)
    if gamma_id not in model.policies.ids:
        raise ContractError(f"unknown policy id {gamma_id!r}")
    g = model.policies.ids.index(gamma_id)
    w = measure.flat
    best = None
    for t in range(len(model.thetas)):
        if lambda_zero:
            sv = _lambda_zero_value(tables, t, g, "upper", w)
        else:
            sv = tables.s_value(t, g, "upper", w)
        # h_ub integrates to -S, so the sup over theta is -min over theta of S
        if best is None or sv.value < best[0]:
            best = (sv.value, t, sv.lam, sv.heuristic)
    s_val, t, lam, heur = best
    value = -s_val
    theta_id = model.thetas.ids[t] if math.isfinite(value) else None
    return EnvelopePoint(
        gamma_id=gamma_id,
        value=value,
        theta_id=theta_id,
        lam=lam if math.isfinite(value) else None,
        heuristic=heur,
    )


def envelope_curve(
    model: StructuralModel,
    measure: WeightedMeasure,
    policy_ids: Optional[Sequence[str]] = None,
    *,
    engine: Optional[EngineConfig] = None,
) -> EnvelopeCurve:
    """Lower and upper envelopes for every policy (or a subset), in order."""
    ids = (
        tuple(model.policies.ids)
        if policy_ids is None
        else tuple(str(p) for p in policy_ids)
    )
    lowers, uppers, th_lo, th_up, lam_lo, lam_up = [], [], [], [], [], []
    heuristic = False
    for pid in ids:
        lo = lower_envelope(model, measure, pid, engine=engine)
        up = upper_envelope(model, measure, pid, engine=engine)
        # on sampled weights the penalized lower value can exceed the upper one
        # (noisy moments leave no feasible parameter and both penalties bite);
        # the guarantees only consume the lower curve, so both are reported as is
        lowers.append(lo.value)
        uppers.append(up.value)
        th_lo.append(lo.theta_id)
        th_up.append(up.theta_id)
        lam_lo.append(lo.lam)
        lam_up.append(up.lam)
        heuristic = heuristic or lo.heuristic or up.heuristic
    return EnvelopeCurve(
        gamma_ids=ids,
        lower=np.asarray(lowers, dtype=np.float64),
        upper=np.asarray(uppers, dtype=np.float64),
        theta_lower=tuple(th_lo),
        theta_upper=tuple(th_up),
        lam_lower=tuple(lam_lo),
        lam_upper=tuple(lam_up),
        heuristic=heuristic,
    )
