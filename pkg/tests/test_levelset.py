"""Level-set sandwich machinery: schedules, step bounds, transforms."""

import math

import numpy as np
import pytest

from polenv import (
    ContractError,
    DeltaSchedule,
    Sample,
    StepBound,
    default_schedule,
    delta_star,
    eme_from_curve,
    empirical_regret_curve,
    envelope_curve,
    flat_transform,
    level_set,
    level_set_sandwich,
    regret_curve,
    sharp_transform,
    step_bound,
    t_sequence,
)

from conftest import random_pe_truth


def test_t_sequence_fixtures():
    assert t_sequence(1, 0.9) == pytest.approx(2.3272516843273356, rel=1e-12)
    assert t_sequence(3, 0.9) == pytest.approx(3.3029020339006374, rel=1e-12)
    vals = [t_sequence(j, 0.9) for j in range(1, 8)]
    assert vals == sorted(vals)


def test_t_sequence_validation():
    with pytest.raises(ContractError):
        t_sequence(0, 0.9)
    with pytest.raises(ContractError):
        t_sequence(1.5, 0.9)
    with pytest.raises(ContractError):
        t_sequence(1, 0.0)
    with pytest.raises(ContractError):
        t_sequence(1, 1.0)


def test_schedule_validation():
    sched = DeltaSchedule(deltas=(1.0, 0.5, 0.25), a=2.0)
    assert sched.b == pytest.approx(1.5)
    with pytest.raises(ContractError):
        DeltaSchedule(deltas=(1.0,), a=2.0)
    with pytest.raises(ContractError):
        DeltaSchedule(deltas=(1.0, 1.0), a=2.0)
    with pytest.raises(ContractError):
        DeltaSchedule(deltas=(0.5, 1.0), a=2.0)
    with pytest.raises(ContractError):
        DeltaSchedule(deltas=(1.0, -0.5), a=2.0)
    with pytest.raises(ContractError):
        DeltaSchedule(deltas=(1.0, 0.5), a=1.0)


def test_default_schedule_head_condition():
    truth = random_pe_truth(2)
    model = truth.build_model()
    sched = default_schedule(model, a=2.0, terms=5)
    assert len(sched.deltas) == 5
    assert all(b < a for a, b in zip(sched.deltas, sched.deltas[1:]))
    assert (1.0 - 1.0 / sched.a) * sched.deltas[0] > 2.0 * model.h_bar()


def flat_step(value=0.2):
    return StepBound(
        hi=np.array([1.0, 0.5, 0.25]),
        lo=np.array([0.5, 0.25, 0.0]),
        values=np.full(3, value),
    )


def test_flat_transform_fixture():
    step = flat_step()
    assert flat_transform(step, 0.5) == pytest.approx(0.4, rel=1e-15)
    assert flat_transform(step, 0.3) == pytest.approx(0.2 / 0.3, rel=1e-12)
    assert flat_transform(step, 0.2) == pytest.approx(1.0, rel=1e-15)
    assert flat_transform(step, 2.0) == 0.0
    sigmas = np.linspace(0.05, 1.2, 24)
    vals = [flat_transform(step, s) for s in sigmas]
    assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ContractError):
        flat_transform(step, 0.0)


def test_sharp_transform_fixture():
    step = flat_step()
    assert sharp_transform(step, 0.4) == pytest.approx(0.5, rel=1e-15)
    assert sharp_transform(step, 0.5) == pytest.approx(0.4, rel=1e-15)
    assert sharp_transform(step, 1.1) == pytest.approx(0.2 / 1.1, rel=1e-12)
    etas = np.linspace(0.2, 3.0, 20)
    vals = [sharp_transform(step, e) for e in etas]
    assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ContractError):
        sharp_transform(step, 0.0)


def test_sharp_transform_inverts_flat():
    # at any eta the returned sigma is the exact boundary: slightly above is
    # feasible, slightly below is not (when the bound is positive there)
    step = flat_step()
    for eta in (0.3, 0.45, 0.7, 1.3):
        sig = sharp_transform(step, eta)
        assert flat_transform(step, sig + 1e-9) <= eta + 1e-6
        if sig > 1e-9:
            assert flat_transform(step, sig - 1e-9) > eta - 1e-6


def test_sharp_transform_zero_when_feasible_everywhere():
    step = StepBound(
        hi=np.array([1.0, 0.5]),
        lo=np.array([0.5, 0.25]),
        values=np.array([0.1, 0.025]),
    )
    assert sharp_transform(step, 0.5) == 0.0
    zero = StepBound(hi=np.array([1.0]), lo=np.array([0.25]), values=np.array([0.0]))
    assert sharp_transform(zero, 0.1) == 0.0
    assert flat_transform(zero, 0.1) == 0.0


def test_delta_star_fixture():
    assert delta_star(flat_step(), a=2.0) == pytest.approx(0.41, rel=1e-12)
    with pytest.raises(ContractError):
        delta_star(flat_step(), a=1.0)
    with pytest.raises(ContractError):
        delta_star(flat_step(), a=2.0, margin=0.0)


def test_step_bound_validation():
    with pytest.raises(ContractError):
        StepBound(hi=np.array([1.0]), lo=np.array([1.0]), values=np.array([0.1]))
    with pytest.raises(ContractError):
        StepBound(
            hi=np.array([1.0, 0.8]), lo=np.array([0.5, 0.2]), values=np.array([0.1, 0.1])
        )
    with pytest.raises(ContractError):
        StepBound(hi=np.array([1.0]), lo=np.array([0.5]), values=np.array([-0.1]))


def test_regret_curve_and_level_set():
    truth = random_pe_truth(7)
    model = truth.build_model()
    pop = truth.population()
    curve = envelope_curve(model, pop)
    regrets = regret_curve(model, pop)
    sup = max(v for v in curve.lower if np.isfinite(v))
    for gid, low in zip(curve.gamma_ids, curve.lower):
        if math.isfinite(low):
            assert regrets[gid] == pytest.approx(sup - low, abs=1e-12)
        else:
            assert regrets[gid] == math.inf
    fixture = {"a": 0.3, "b": 0.0, "c": 0.1}
    assert level_set(fixture, 0.15) == ["b", "c"]
    assert level_set(fixture, 0.0) == ["b"]
    assert level_set(fixture, 1.0) == ["a", "b", "c"]
    with pytest.raises(ContractError):
        level_set(fixture, -0.1)
    with pytest.raises(ContractError):
        level_set(fixture, math.inf)


def test_step_bound_on_program_eval():
    truth = random_pe_truth(4)
    model = truth.build_model()
    sample = Sample.from_pairs(truth.sample(50, seed=8).rows, model.support)
    sched = default_schedule(model, a=2.0, terms=6)
    step = step_bound(model, sample, sched, kappa=0.9, seed=13)
    assert step.hi.size == 5
    assert np.all(step.values >= 0)
    assert list(step.subset_sizes) == sorted(step.subset_sizes, reverse=True)
    floor = 3.0 * 2.0 * model.h_bar() / math.sqrt(50)
    for j in range(1, 5):
        assert step.values[j] >= t_sequence(j, 0.9) * floor - 1e-12
    again = step_bound(model, sample, sched, kappa=0.9, seed=13)
    assert np.array_equal(step.values, again.values)
    other = step_bound(model, sample, sched, kappa=0.9, seed=14)
    assert not np.array_equal(step.values, other.values)


def test_step_bound_head_condition():
    truth = random_pe_truth(4)
    model = truth.build_model()
    sample = Sample.from_pairs(truth.sample(20, seed=1).rows, model.support)
    tiny = DeltaSchedule(deltas=(1.0, 0.5), a=2.0)
    with pytest.raises(ContractError):
        step_bound(model, sample, tiny, kappa=0.9)


def test_level_set_sandwich_end_to_end():
    truth = random_pe_truth(4)
    model = truth.build_model()
    sample = Sample.from_pairs(truth.sample(50, seed=8).rows, model.support)
    sched = default_schedule(model, a=2.0, terms=6)
    res = level_set_sandwich(model, sample, kappa=0.9, a=2.0, seed=3, schedule=sched)
    assert res.delta == pytest.approx(res.a * res.delta_star)
    assert res.b == pytest.approx(1.5)
    assert set(res.inner) <= set(res.outer)
    assert res.valid
    best = eme_from_curve(
        [-r for r in res.regrets.values()], 0.0, list(res.regrets.keys())
    )
    assert best in res.inner
    # inner and outer match direct level-set evaluations of the regret curve
    regs = empirical_regret_curve(model, sample)
    assert list(res.inner) == level_set(regs, res.delta / res.a)
    assert list(res.outer) == level_set(regs, res.b * res.delta)
    with pytest.raises(ContractError):
        level_set_sandwich(
            model, sample, kappa=0.9, a=2.0, delta=res.delta_star * 0.5, seed=3,
            schedule=sched,
        )
    with pytest.raises(ContractError):
        level_set_sandwich(model, sample, kappa=0.9, a=3.0, seed=3, schedule=sched)
