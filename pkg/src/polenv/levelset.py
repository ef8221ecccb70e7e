"""Empirical regret level sets with a two-sided finite-sample sandwich.

The procedure walks a decreasing schedule of regret levels. On each interval it
prices the estimation error of the empirical regret curve by the Rademacher
complexity of a difference class restricted to the policies that survive at
that level, plus a deviation term that grows only logarithmically in the
interval index. The resulting step function is turned into a threshold through
two transforms:

* flat_transform: the largest value of T(delta) / delta over levels at or above
  sigma (a "flattened" relative error curve),
* sharp_transform: the smallest sigma at which the flattened curve drops below
  a target (its generalized inverse).

Any delta of at least a times the resulting threshold gives the two-sided
containment: the empirical level set at delta / a sits inside the population
level set at delta, which sits inside the empirical level set at b * delta,
with probability at least kappa, where b = 2 - 1/a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from ._core import EngineConfig
from .complexity import RademacherDraw, rademacher_hlb
from .envelope import WeightedMeasure, empirical_measure, envelope_curve
from .errors import ContractError
from .model import Sample, StructuralModel


@dataclass(frozen=True, eq=False)
class DeltaSchedule:
    """Strictly decreasing positive regret levels plus the ratio parameter a."""

    deltas: tuple[float, ...]
    a: float

    def __post_init__(self):
        deltas = tuple(float(d) for d in self.deltas)
        object.__setattr__(self, "deltas", deltas)
        object.__setattr__(self, "a", float(self.a))
        if len(deltas) < 2:
            raise ContractError("schedule needs at least two levels")
        if any(not math.isfinite(d) or d <= 0 for d in deltas):
            raise ContractError("schedule levels must be finite and positive")
        if any(b >= a for a, b in zip(deltas, deltas[1:])):
            raise ContractError("schedule levels must be strictly decreasing")
        if not (math.isfinite(self.a) and self.a > 1):
            raise ContractError(f"a must be finite and greater than 1, got {self.a}")

    @property
    def b(self) -> float:
        return 2.0 - 1.0 / self.a


def default_schedule(
    model: StructuralModel, a: float, ratio: float = 0.9, terms: int = 40, head: float = 1.01
) -> DeltaSchedule:
    """Geometric schedule whose head satisfies (1 - 1/a) * delta_0 > 2 * Hbar."""
    if not (1 < a) or not (0 < ratio < 1) or terms < 2 or head <= 1.0:
        raise ContractError("invalid schedule parameters")
    h2 = 2.0 * model.h_bar()
    d0 = head * h2 / (1.0 - 1.0 / a)
    deltas = tuple(d0 * ratio ** j for j in range(terms))
    return DeltaSchedule(deltas=deltas, a=a)


def t_sequence(j: int, kappa: float) -> float:
    """Deviation multiplier for interval j >= 1 at confidence kappa."""
    if not isinstance(j, (int, np.integer)) or j < 1:
        raise ContractError(f"interval index must be an integer >= 1, got {j!r}")
    if not (0.0 < kappa < 1.0):
        raise ContractError(f"kappa must lie in (0, 1), got {kappa}")
    c2 = (3.0 / (2.0 * (1.0 - kappa))) ** (2.0 / 5.0)
    arg = c2 * j
    if arg <= 1.0:
        raise ContractError(
            f"deviation multiplier undefined: c2 * j = {arg} <= 1 at j={j}, kappa={kappa}"
        )
    return math.sqrt(5.0 * math.log(arg))


def empirical_regret_curve(
    model: StructuralModel,
    sample: Sample,
    *,
    engine: Optional[EngineConfig] = None,
) -> dict[str, float]:
    """Empirical regret of every policy: sup of the lower envelope minus own value.

    Policies whose lower envelope is non-finite get infinite regret (they offer
    no usable guarantee and never enter a level set).
    """
    measure = empirical_measure(model, sample)
    return regret_curve(model, measure, engine=engine)


def regret_curve(
    model: StructuralModel,
    measure: WeightedMeasure,
    *,
    engine: Optional[EngineConfig] = None,
) -> dict[str, float]:
    curve = envelope_curve(model, measure, engine=engine)
    finite = np.isfinite(curve.lower)
    if not np.any(finite):
        raise ContractError("every policy has a non-finite lower envelope")
    sup = float(np.max(curve.lower[finite]))
    out: dict[str, float] = {}
    for gid, v in zip(curve.gamma_ids, curve.lower):
        out[gid] = max(0.0, sup - float(v)) if math.isfinite(v) else math.inf
    return out


def level_set(regrets: Mapping[str, float], delta: float) -> list[str]:
    """Policies whose regret is at most delta, in curve order."""
    if not (math.isfinite(delta) and delta >= 0):
        raise ContractError(f"delta must be finite and nonnegative, got {delta}")
    return [g for g, r in regrets.items() if r <= delta]


@dataclass
class StepBound:
    """Piecewise-constant error bound on intervals (lo_j, hi_j], hi decreasing."""

    hi: np.ndarray
    lo: np.ndarray
    values: np.ndarray
    subset_sizes: tuple[int, ...] = ()
    kappa: Optional[float] = None
    seed: Optional[int] = None
    n: Optional[int] = None
    dropped_rows: int = 0
    heuristic: bool = False

    def __post_init__(self):
        hi = np.asarray(self.hi, dtype=np.float64)
        lo = np.asarray(self.lo, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if not (hi.shape == lo.shape == values.shape) or hi.ndim != 1 or hi.size == 0:
            raise ContractError("step bound arrays must be 1d, nonempty, equal length")
        if np.any(~np.isfinite(hi)) or np.any(~np.isfinite(lo)) or np.any(~np.isfinite(values)):
            raise ContractError("step bound arrays must be finite")
        if np.any(lo < 0) or np.any(hi <= lo):
            raise ContractError("intervals need 0 <= lo < hi")
        if np.any(hi[1:] > lo[:-1] + 1e-15):
            raise ContractError("intervals must be decreasing and non-overlapping")
        if np.any(values < 0):
            raise ContractError("step bound values must be nonnegative")
        self.hi, self.lo, self.values = hi, lo, values


def step_bound(
    model: StructuralModel,
    sample: Sample,
    schedule: DeltaSchedule,
    kappa: float,
    seed: int = 0,
    *,
    engine: Optional[EngineConfig] = None,
) -> StepBound:
    """Interval-wise estimation-error bound along a level schedule.

    Interval j spans (delta_{j+1}, delta_j]. Its value is twice the Rademacher
    complexity of the difference class restricted to the empirical level set at
    b * delta_j, plus (for j >= 1) 3 * t_j * 2 * Hbar / sqrt(n); the head
    interval carries no deviation term. Sign draws are independent across
    intervals, derived from (seed, j).
    """
    if not (0.0 < kappa < 1.0):
        raise ContractError(f"kappa must lie in (0, 1), got {kappa}")
    h_bar = model.h_bar()
    if (1.0 - 1.0 / schedule.a) * schedule.deltas[0] <= 2.0 * h_bar:
        raise ContractError(
            f"schedule head too small: need (1 - 1/a) * delta_0 > {2.0 * h_bar}, "
            f"got delta_0 = {schedule.deltas[0]} at a = {schedule.a}"
        )
    regrets = empirical_regret_curve(model, sample, engine=engine)
    b = schedule.b
    n = sample.n
    diff_bound = 2.0 * h_bar

    his, los, vals, sizes = [], [], [], []
    dropped = 0
    heuristic = False
    for j in range(len(schedule.deltas) - 1):
        d_hi = schedule.deltas[j]
        d_lo = schedule.deltas[j + 1]
        subset = level_set(regrets, b * d_hi)
        child = int(np.random.SeedSequence([int(seed), j]).generate_state(1, np.uint64)[0])
        draw = RademacherDraw.draw(n, child)
        rad = rademacher_hlb(
            model, sample, draw, policy_ids=subset, differences=True, engine=engine
        )
        dropped += rad.dropped_rows
        heuristic = heuristic or rad.heuristic
        t_term = 0.0 if j == 0 else 3.0 * t_sequence(j, kappa) * diff_bound / math.sqrt(n)
        his.append(d_hi)
        los.append(d_lo)
        vals.append(2.0 * rad.value + t_term)
        sizes.append(len(subset))
    return StepBound(
        hi=np.asarray(his),
        lo=np.asarray(los),
        values=np.asarray(vals),
        subset_sizes=tuple(sizes),
        kappa=kappa,
        seed=int(seed),
        n=n,
        dropped_rows=dropped,
        heuristic=heuristic,
    )


def flat_transform(step: StepBound, sigma: float) -> float:
    """sup over levels delta >= sigma of T(delta) / delta, as a function of sigma.

    Zero when sigma exceeds every interval. Nonincreasing in sigma.
    """
    if not (math.isfinite(sigma) and sigma > 0):
        raise ContractError(f"sigma must be finite and positive, got {sigma}")
    best = 0.0
    for hi, lo, val in zip(step.hi, step.lo, step.values):
        if hi < sigma:
            continue
        denom = max(sigma, lo)
        if denom == 0.0:
            if val > 0.0:
                return math.inf
            continue
        best = max(best, val / denom)
    return best


def sharp_transform(step: StepBound, eta: float) -> float:
    """Generalized inverse of the flat transform: inf of {sigma : flat <= eta}.

    The infimum need not be attained. Returns 0.0 when the flattened curve is
    below eta everywhere.
    """
    if not (math.isfinite(eta) and eta > 0):
        raise ContractError(f"eta must be finite and positive, got {eta}")
    running = 0.0  # max of T_i / lo_i over intervals strictly above the current one
    m = step.hi.size
    for j in range(m):
        hi, lo, val = float(step.hi[j]), float(step.lo[j]), float(step.values[j])
        if running > eta:
            # flat(sigma) >= running > eta for every sigma at or below this interval
            return hi
        cross = val / eta
        if cross > hi:
            # even the right edge of this interval fails; the feasible ray is (hi, inf)
            return hi
        if cross > lo:
            return cross
        # the whole interval is feasible; fold its constant ratio into the running max
        running = max(running, math.inf if (lo == 0.0 and val > 0.0) else (val / lo if lo > 0 else 0.0))
    # below every interval the flattened curve equals the running constant
    return 0.0 if running <= eta else float(step.lo[m - 1])


def delta_star(step: StepBound, a: float, margin: float = 0.01) -> float:
    """Smallest usable level threshold: sharp transform at 1 - 1/a plus a margin.

    The margin keeps the strict inequality required of a usable threshold.
    """
    if not (math.isfinite(a) and a > 1):
        raise ContractError(f"a must be finite and greater than 1, got {a}")
    if not (math.isfinite(margin) and margin > 0):
        raise ContractError(f"margin must be finite and positive, got {margin}")
    return sharp_transform(step, 1.0 - 1.0 / a) + margin


@dataclass
class LevelSetResult:
    """Two-sided empirical bracket of a population regret level set."""

    delta: float
    delta_star: float
    a: float
    b: float
    kappa: float
    inner: tuple[str, ...]
    outer: tuple[str, ...]
    regrets: dict[str, float] = field(default_factory=dict)
    step: Optional[StepBound] = None
    seed: int = 0
    valid: bool = True


def level_set_sandwich(
    model: StructuralModel,
    sample: Sample,
    kappa: float,
    a: float,
    delta: Optional[float] = None,
    seed: int = 0,
    schedule: Optional[DeltaSchedule] = None,
    margin: float = 0.01,
    *,
    engine: Optional[EngineConfig] = None,
) -> LevelSetResult:
    """Bracket the population level set at delta between two empirical ones.

    With probability at least kappa, the empirical level set at delta / a is
    contained in the population level set at delta, which is contained in the
    empirical level set at b * delta. Requires delta >= a * delta_star; passing
    delta=None uses exactly a * delta_star.
    """
    if schedule is None:
        schedule = default_schedule(model, a)
    elif abs(schedule.a - a) > 1e-12:
        raise ContractError(
            f"schedule was built for a = {schedule.a}, request uses a = {a}"
        )
    step = step_bound(model, sample, schedule, kappa, seed, engine=engine)
    dstar = delta_star(step, a, margin)
    if delta is None:
        delta = a * dstar
    if delta < a * dstar - 1e-12:
        raise ContractError(
            f"delta = {delta} is below the procedure threshold a * delta_star = {a * dstar}"
        )
    regrets = empirical_regret_curve(model, sample, engine=engine)
    inner = tuple(level_set(regrets, delta / a))
    outer = tuple(level_set(regrets, schedule.b * delta))
    return LevelSetResult(
        delta=float(delta),
        delta_star=float(dstar),
        a=float(a),
        b=float(schedule.b),
        kappa=float(kappa),
        inner=inner,
        outer=outer,
        regrets=regrets,
        step=step,
        seed=int(seed),
        valid=step.dropped_rows == 0 and not step.heuristic,
    )
