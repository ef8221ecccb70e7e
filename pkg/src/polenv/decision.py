"""Robust policy selection and finite-sample certificates.

The selection rule maximizes the empirical lower envelope over the policy grid
(the epsilon-maximin empirical rule); epsilon is the slack the guarantee is
stated for, not a parameter of the argmax itself, and ties resolve to the first
policy in grid order. The certificate bounds the population regret of the
selected policy with probability at least kappa:

    c_n(kappa) = 4 * R_n + sqrt(72 * ln(2 / (2 - kappa)) * Hbar^2 / n) + 5 * epsilon

where R_n is the empirical Rademacher complexity of the lower integrand class
restricted to the sample and Hbar is the computable uniform bound on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from ._core import EngineConfig
from .complexity import ImplicitRademacher, RademacherDraw, rademacher_hlb
from .envelope import EnvelopeCurve, WeightedMeasure, empirical_measure, envelope_curve
from .errors import ContractError
from .model import Sample, StructuralModel


def default_epsilon(model: StructuralModel) -> float:
    """Default selection slack: 1e-3 times the objective range."""
    return 1e-3 * (model.objective.ub - model.objective.lb)


def eme_from_curve(
    values: Union[Mapping[str, float], Sequence[float]],
    epsilon: float,
    gamma_ids: Optional[Sequence[str]] = None,
) -> str:
    """Pure selection rule on a precomputed lower-envelope curve.

    Picks the first policy attaining the maximum. The epsilon only enters the
    defining inequality (selected value + epsilon >= sup), which an argmax
    satisfies for every epsilon >= 0; it is validated here so that callers
    cannot run the rule with a negative slack.
    """
    if not (math.isfinite(epsilon) and epsilon >= 0):
        raise ContractError(f"epsilon must be finite and nonnegative, got {epsilon}")
    if isinstance(values, Mapping):
        gamma_ids = list(values.keys())
        vals = np.asarray([values[g] for g in gamma_ids], dtype=np.float64)
    else:
        vals = np.asarray(values, dtype=np.float64)
        if gamma_ids is None:
            gamma_ids = [str(i) for i in range(len(vals))]
    if vals.size == 0:
        raise ContractError("no policies to select from")
    finite = np.isfinite(vals)
    if not np.any(finite):
        raise ContractError("every policy has a non-finite lower envelope; no admissible policy")
    best = np.max(vals[finite])
    for g, v in zip(gamma_ids, vals):
        if np.isfinite(v) and v == best:
            return str(g)
    raise AssertionError("unreachable")


@dataclass
class EmeSelection:
    gamma_id: str
    epsilon: float
    curve: EnvelopeCurve


def eme_select(
    model: StructuralModel,
    sample: Sample,
    epsilon: Optional[float] = None,
    *,
    engine: Optional[EngineConfig] = None,
) -> EmeSelection:
    """Select the empirical maximin policy from a sample."""
    if epsilon is None:
        epsilon = default_epsilon(model)
    measure = empirical_measure(model, sample)
    curve = envelope_curve(model, measure, engine=engine)
    gamma_id = eme_from_curve(curve.lower, epsilon, curve.gamma_ids)
    return EmeSelection(gamma_id=gamma_id, epsilon=float(epsilon), curve=curve)


def certificate_value(
    r_n: float, h_bar: float, n: int, kappa: float, epsilon: float
) -> float:
    """Closed-form regret certificate from its ingredients."""
    if not (0.0 < kappa < 1.0):
        raise ContractError(f"kappa must lie in (0, 1), got {kappa}")
    if n < 1:
        raise ContractError(f"need n >= 1, got {n}")
    if r_n < 0 or not math.isfinite(r_n):
        raise ContractError(f"r_n must be finite and nonnegative, got {r_n}")
    if h_bar <= 0 or not math.isfinite(h_bar):
        raise ContractError(f"h_bar must be finite and positive, got {h_bar}")
    if epsilon < 0 or not math.isfinite(epsilon):
        raise ContractError(f"epsilon must be finite and nonnegative, got {epsilon}")
    dev = math.sqrt(72.0 * math.log(2.0 / (2.0 - kappa)) * h_bar * h_bar / n)
    return 4.0 * r_n + dev + 5.0 * epsilon


@dataclass
class Certificate:
    """A finite-sample regret guarantee for the selected policy.

    With probability at least kappa over the sample, the population regret of
    gamma_id is at most c_n. ``valid`` is False when integrand rows had to be
    dropped (non-finite values on observed cells) or a heuristic penalty search
    was used anywhere; in that case c_n is reported but the guarantee does not
    apply as stated.
    """

    gamma_id: str
    c_n: float
    r_n: float
    h_bar: float
    n: int
    kappa: float
    epsilon: float
    seed: int
    class_rows: int
    dropped_rows: int
    valid: bool

    def recomputed(self) -> float:
        return certificate_value(self.r_n, self.h_bar, self.n, self.kappa, self.epsilon)


def certificate_cn(
    model: StructuralModel,
    sample: Sample,
    kappa: float,
    epsilon: Optional[float] = None,
    seed: int = 0,
    *,
    engine: Optional[EngineConfig] = None,
) -> Certificate:
    """Select a policy and attach its regret certificate.

    The Rademacher complexity is evaluated on one fair-sign draw derived from
    ``seed``; the same seed reproduces the certificate bit for bit.
    """
    selection = eme_select(model, sample, epsilon, engine=engine)
    draw = RademacherDraw.draw(sample.n, seed)
    rad: ImplicitRademacher = rademacher_hlb(
        model, sample, draw, differences=False, engine=engine
    )
    h_bar = model.h_bar()
    c_n = certificate_value(rad.value, h_bar, sample.n, kappa, selection.epsilon)
    valid = rad.dropped_rows == 0 and not rad.heuristic and not selection.curve.heuristic
    return Certificate(
        gamma_id=selection.gamma_id,
        c_n=float(c_n),
        r_n=float(rad.value),
        h_bar=float(h_bar),
        n=sample.n,
        kappa=float(kappa),
        epsilon=float(selection.epsilon),
        seed=int(seed),
        class_rows=rad.class_rows,
        dropped_rows=rad.dropped_rows,
        valid=bool(valid),
    )


def true_regret(
    model: StructuralModel,
    population: WeightedMeasure,
    gamma_id: str,
    *,
    engine: Optional[EngineConfig] = None,
) -> float:
    """Population regret of one policy: sup of the lower envelope minus its value."""
    curve = envelope_curve(model, population, engine=engine)
    if gamma_id not in curve.gamma_ids:
        raise ContractError(f"unknown policy id {gamma_id!r}")
    finite = np.isfinite(curve.lower)
    if not np.any(finite):
        raise ContractError("every policy has a non-finite lower envelope")
    sup = float(np.max(curve.lower[finite]))
    val = curve.lower_of(gamma_id)
    if not math.isfinite(val):
        return math.inf
    return max(0.0, sup - val)
