"""Monte Carlo studies of the finite-sample guarantees.

Four experiment kinds, each drawing repeated samples from a known truth and
checking the corresponding guarantee against exact population quantities:

* "certificate": does the selected policy's population regret stay below the
  regret certificate at the stated confidence level?
* "sandwich": do the empirical level sets at delta/a and b*delta bracket the
  population level set at delta?
* "eme": does the selected policy land in the population level set at the
  data-driven threshold?
* "rate": how fast does the mean population regret of the selected policy
  fall as the sample grows (log-log slope across sample sizes)?

Replication seeds are spawned from a root seed so every rep is reproducible
in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .decision import certificate_cn, default_epsilon, eme_select
from .errors import ContractError
from .levelset import default_schedule, delta_star, regret_curve, step_bound
from .program_eval import PeTruth, ProgramEvalConfig
from .simulate import draw_sample, model_for, population_measure

EXPERIMENT_KINDS = ("certificate", "sandwich", "eme", "rate")


@dataclass
class ExperimentReport:
    kind: str
    params: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def payload(self) -> dict:
        return {"kind": self.kind, "params": self.params, "summary": self.summary}


def _rep_seed(root: int, *path: int) -> int:
    ss = np.random.SeedSequence([int(root), *[int(p) for p in path]])
    return int(ss.generate_state(1, np.uint64)[0])


def _fresh_model_each_rep(truth) -> bool:
    return not isinstance(truth, PeTruth)


def run_certificate_coverage(
    truth,
    n: int = 500,
    reps: int = 200,
    kappa: float = 0.9,
    seed: int = 0,
    epsilon: Optional[float] = None,
) -> ExperimentReport:
    """Share of reps whose certificate bounds the realized population regret."""
    pop = population_measure(truth)
    model = None
    pop_regrets = None
    covered = 0
    valid_count = 0
    cn_values = []
    for rep in range(reps):
        rep_seed = _rep_seed(seed, rep)
        sample = draw_sample(truth, n, rep_seed)
        if model is None or _fresh_model_each_rep(truth):
            model = model_for(truth, sample)
            pop_regrets = regret_curve(model, pop)
        cert = certificate_cn(model, sample, kappa, epsilon=epsilon, seed=rep_seed)
        cn_values.append(cert.c_n)
        valid_count += int(cert.valid)
        if cert.valid and pop_regrets[cert.gamma_id] <= cert.c_n:
            covered += 1
    return ExperimentReport(
        kind="certificate",
        params={"n": n, "reps": reps, "kappa": kappa, "seed": seed},
        summary={
            "coverage": covered / reps,
            "valid_fraction": valid_count / reps,
            "mean_cn": float(np.mean(cn_values)),
        },
    )


def run_sandwich_coverage(
    truth,
    n: int = 1000,
    reps: int = 200,
    kappa: float = 0.9,
    a: float = 2.0,
    seed: int = 0,
    margin: float = 0.01,
) -> ExperimentReport:
    """Share of reps where the empirical level sets bracket the population one."""
    from .levelset import level_set_sandwich

    pop = population_measure(truth)
    model = None
    pop_regrets = None
    covered = 0
    valid_count = 0
    deltas = []
    for rep in range(reps):
        rep_seed = _rep_seed(seed, rep)
        sample = draw_sample(truth, n, rep_seed)
        if model is None or _fresh_model_each_rep(truth):
            model = model_for(truth, sample)
            pop_regrets = regret_curve(model, pop)
        res = level_set_sandwich(
            model, sample, kappa=kappa, a=a, seed=rep_seed, margin=margin
        )
        deltas.append(res.delta)
        valid_count += int(res.valid)
        pop_set = {g for g, r in pop_regrets.items() if r <= res.delta}
        ok = set(res.inner) <= pop_set <= set(res.outer)
        if res.valid and ok:
            covered += 1
    return ExperimentReport(
        kind="sandwich",
        params={"n": n, "reps": reps, "kappa": kappa, "a": a, "seed": seed},
        summary={
            "coverage": covered / reps,
            "valid_fraction": valid_count / reps,
            "mean_delta": float(np.mean(deltas)),
        },
    )


def run_eme_containment(
    truth,
    n: int = 1000,
    reps: int = 200,
    kappa: float = 0.9,
    a: float = 2.0,
    seed: int = 0,
    epsilon: Optional[float] = None,
    margin: float = 0.01,
) -> ExperimentReport:
    """Share of reps where the selected policy's population regret is below
    the data-driven threshold delta-star (requires epsilon <= delta-star)."""
    pop = population_measure(truth)
    model = None
    pop_regrets = None
    covered = 0
    dstars = []
    for rep in range(reps):
        rep_seed = _rep_seed(seed, rep)
        sample = draw_sample(truth, n, rep_seed)
        if model is None or _fresh_model_each_rep(truth):
            model = model_for(truth, sample)
            pop_regrets = regret_curve(model, pop)
        sel = eme_select(model, sample, epsilon=epsilon)
        schedule = default_schedule(model, a)
        step = step_bound(model, sample, schedule, kappa, seed=rep_seed)
        dstar = delta_star(step, a, margin=margin)
        dstars.append(dstar)
        trustworthy = step.dropped_rows == 0 and not step.heuristic
        if trustworthy and sel.epsilon <= dstar and pop_regrets[sel.gamma_id] <= dstar:
            covered += 1
    return ExperimentReport(
        kind="eme",
        params={"n": n, "reps": reps, "kappa": kappa, "a": a, "seed": seed},
        summary={
            "coverage": covered / reps,
            "mean_delta_star": float(np.mean(dstars)),
        },
    )


def rate_slope(ns, means) -> Optional[float]:
    """Log-log slope of mean regret against sample size, over positive means.

    Sample sizes whose mean regret is exactly zero are dropped (the decay there
    is faster than any power, so dropping them only flattens the fit). Returns
    None when fewer than two points remain.
    """
    xs = [np.log(n) for n, m in zip(ns, means) if m > 0]
    ys = [np.log(m) for m in means if m > 0]
    if len(xs) < 2:
        return None
    return float(np.polyfit(xs, ys, 1)[0])


def run_rate(
    truth,
    ns=(125, 250, 500, 1000, 2000, 4000, 8000),
    reps: int = 100,
    seed: int = 0,
    epsilon: Optional[float] = None,
) -> ExperimentReport:
    """Mean population regret of the selected policy per sample size, with slope."""
    pop = population_measure(truth)
    model = None
    pop_regrets = None
    means = []
    for n in ns:
        total = 0.0
        for rep in range(reps):
            rep_seed = _rep_seed(seed, n, rep)
            sample = draw_sample(truth, n, rep_seed)
            if model is None or _fresh_model_each_rep(truth):
                model = model_for(truth, sample)
                pop_regrets = regret_curve(model, pop)
            sel = eme_select(model, sample, epsilon=epsilon)
            total += pop_regrets[sel.gamma_id]
        means.append(total / reps)
    return ExperimentReport(
        kind="rate",
        params={"ns": list(ns), "reps": reps, "seed": seed},
        summary={
            "ns": list(ns),
            "means": [float(m) for m in means],
            "slope": rate_slope(ns, means),
        },
    )


def run_experiment(kind: str, truth, **kwargs) -> ExperimentReport:
    if kind == "certificate":
        return run_certificate_coverage(truth, **kwargs)
    if kind == "sandwich":
        return run_sandwich_coverage(truth, **kwargs)
    if kind == "eme":
        return run_eme_containment(truth, **kwargs)
    if kind == "rate":
        return run_rate(truth, **kwargs)
    raise ContractError(f"unknown experiment kind {kind!r}; expected one of {EXPERIMENT_KINDS}")


def default_coverage_truth() -> PeTruth:
    """Small two-cell binary-outcome truth used by the coverage experiments."""
    cfg = ProgramEvalConfig(
        z0_values=(0.0, 1.0),
        outcome_atoms=(0.0, 1.0),
        u_bins=5,
        g_tables=((0.2, 0.8), (0.4, 0.6), (0.6, 0.4)),
        t_tables=((0.5, 0.5), (0.3, 0.7)),
        policies="all",
        name="coverage_truth",
    )
    return PeTruth(
        config=cfg,
        g0=(0.2, 0.8),
        z_probs=(0.5, 0.5),
        u_pair_probs=((0.1, 0.3), (0.4, 0.2)),
    )


def default_rate_truth() -> PeTruth:
    """Truth whose population envelope gaps form a staircase across scales.

    The identity policy is point identified and optimal.  The other three
    policies trail it by regrets 0.01125, 0.10875 and 0.12: the two coarse
    gaps are the full identification width (b - a) split by the instrument
    imbalance, and the fine gap comes from the rarely-drawn cell, so the
    empirical envelope keeps misranking the near-tie at every sample size
    in the sweep while the cost of each error shrinks.  That is what makes
    the mean-regret curve decay with a clean negative log-log slope instead
    of collapsing to zero after the first grid point.  All probabilities are
    dyadic and the thresholds sit on bin edges, so the population measure
    satisfies every moment to machine precision.
    """
    cfg = ProgramEvalConfig(
        z0_values=(0.0, 1.0),
        outcome_atoms=(0.0, 1.0),
        u_bins=25,
        g_tables=((0.44, 0.56),),
        t_tables=((0.90625, 0.09375),),
        policies="all",
        name="rate_truth",
    )
    return PeTruth(
        config=cfg,
        g0=(0.44, 0.56),
        z_probs=(0.90625, 0.09375),
        u_pair_probs=((0.25, 0.25), (0.25, 0.25)),
    )
