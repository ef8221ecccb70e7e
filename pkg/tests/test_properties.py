"""Property-based invariants across the library."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polenv import (
    StepBound,
    certificate_value,
    empirical_covering_number,
    flat_transform,
    h_integrand,
    level_set,
    lower_envelope,
    sharp_transform,
    t_sequence,
    upper_envelope,
)
from polenv.complexity import RestrictedClass
from polenv._core import get_tables

from conftest import random_tabular_model


@given(seed=st.integers(0, 200), j=st.integers(1, 40),
       kappa=st.floats(0.01, 0.98))
def test_t_sequence_monotone(seed, j, kappa):
    del seed
    assert t_sequence(j + 1, kappa) > t_sequence(j, kappa)
    assert t_sequence(j, min(kappa + 0.01, 0.99)) > t_sequence(j, kappa)


@given(
    r=st.floats(0.0, 10.0),
    h=st.floats(0.01, 50.0),
    n=st.integers(1, 10 ** 6),
    kappa=st.floats(1e-6, 1 - 1e-6),
    eps=st.floats(0.0, 5.0),
)
def test_certificate_value_monotone(r, h, n, kappa, eps):
    base = certificate_value(r, h, n, kappa, eps)
    assert base >= 4.0 * r + 5.0 * eps
    assert certificate_value(r + 0.5, h, n, kappa, eps) > base
    assert certificate_value(r, h, n, kappa, eps + 0.5) > base
    assert certificate_value(r, h, 4 * n, kappa, eps) <= base
    if kappa < 0.99:
        assert certificate_value(r, h, n, min(kappa + 0.005, 1 - 1e-9), eps) >= base


@st.composite
def step_bounds(draw):
    edges = draw(
        st.lists(
            st.floats(0.01, 50.0, allow_nan=False),
            min_size=2,
            max_size=8,
            unique=True,
        )
    )
    edges = sorted(edges, reverse=True)
    values = draw(
        st.lists(
            st.floats(0.0, 20.0, allow_nan=False),
            min_size=len(edges) - 1,
            max_size=len(edges) - 1,
        )
    )
    return StepBound(
        hi=np.asarray(edges[:-1]), lo=np.asarray(edges[1:]), values=np.asarray(values)
    )


@given(step=step_bounds(), s1=st.floats(0.005, 60.0), s2=st.floats(0.005, 60.0))
def test_flat_transform_nonincreasing(step, s1, s2):
    lo, hi = min(s1, s2), max(s1, s2)
    assert flat_transform(step, lo) >= flat_transform(step, hi) - 1e-12


@given(step=step_bounds(), e1=st.floats(0.01, 30.0), e2=st.floats(0.01, 30.0))
def test_sharp_transform_nonincreasing_and_feasible(step, e1, e2):
    lo, hi = min(e1, e2), max(e1, e2)
    assert sharp_transform(step, lo) >= sharp_transform(step, hi) - 1e-12
    sig = sharp_transform(step, lo)
    if sig > 0:
        # just above the threshold the flattened curve meets the target
        assert flat_transform(step, sig * (1 + 1e-9) + 1e-12) <= lo * (1 + 1e-6) + 1e-9


@given(
    regs=st.dictionaries(
        st.text(min_size=1, max_size=4),
        st.one_of(st.floats(0.0, 100.0), st.just(math.inf)),
        min_size=1,
        max_size=8,
    ),
    d1=st.floats(0.0, 120.0),
    d2=st.floats(0.0, 120.0),
)
def test_level_set_monotone(regs, d1, d2):
    lo, hi = min(d1, d2), max(d1, d2)
    assert set(level_set(regs, lo)) <= set(level_set(regs, hi))


@given(seed=st.integers(0, 60), e1=st.floats(0.01, 5.0), e2=st.floats(0.01, 5.0))
@settings(max_examples=40)
def test_covering_monotone(seed, e1, e2):
    rng = np.random.default_rng(seed)
    cls = RestrictedClass(
        rows=rng.normal(size=(12, 5)), labels=tuple(range(12)), bound=10.0, n=5
    )
    lo, hi = min(e1, e2), max(e1, e2)
    assert empirical_covering_number(cls, lo) >= empirical_covering_number(cls, hi)


@given(seed=st.integers(0, 80))
@settings(max_examples=40, deadline=None)
def test_integrand_within_uniform_bound(seed):
    model, _ = random_tabular_model(seed)
    h_bar = model.h_bar()
    rng = np.random.default_rng(seed + 1)
    lam = rng.integers(0, 2, size=model.n_moments).astype(float)
    sup = model.support
    for tid in model.thetas.ids:
        for gid in model.policies.ids:
            for y in sup.y_atoms:
                for z in sup.z_atoms:
                    for side in ("lower", "upper"):
                        v = h_integrand(model, y, z, tid, gid, lam, side)
                        if math.isfinite(v):
                            assert abs(v) <= h_bar + 1e-9


@given(seed=st.integers(0, 80), alpha=st.floats(0.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_engine_value_convex_in_weights(seed, alpha):
    # per theta the optimized value is a max of linear functions of the weights
    model, _ = random_tabular_model(seed)
    tables = get_tables(model)
    rng = np.random.default_rng(seed + 7)
    w1 = rng.dirichlet(np.ones(tables.n_cells))
    w2 = rng.dirichlet(np.ones(tables.n_cells))
    mix = alpha * w1 + (1.0 - alpha) * w2
    for t in range(len(model.thetas)):
        for g in range(len(model.policies.ids)):
            s_mix = tables.s_value(t, g, "lower", mix).value
            s1 = tables.s_value(t, g, "lower", w1).value
            s2 = tables.s_value(t, g, "lower", w2).value
            assert s_mix <= alpha * s1 + (1.0 - alpha) * s2 + 1e-9


@given(seed=st.integers(0, 80))
@settings(max_examples=40, deadline=None)
def test_zero_penalty_relaxation_orders_envelopes(seed):
    # dropping the penalties shrinks the inner maximum pointwise, so the
    # zero-vector lower envelope sits at or below the optimized one (and the
    # zero-vector upper envelope at or above)
    model, measure = random_tabular_model(seed)
    for gid in model.policies.ids:
        full = lower_envelope(model, measure, gid).value
        zero = lower_envelope(model, measure, gid, lambda_zero=True).value
        assert zero <= full + 1e-12
        full_up = upper_envelope(model, measure, gid).value
        zero_up = upper_envelope(model, measure, gid, lambda_zero=True).value
        assert zero_up >= full_up - 1e-12
