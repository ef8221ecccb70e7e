"""Shared builders for the test suite.

The reference envelope here is a deliberately naive loop over h_integrand and
binary penalty vectors; it shares no code with the vectorized engine, which is
what makes the agreement tests meaningful.
"""

import itertools
import math

import numpy as np
import pytest

from polenv import (
    CounterfactualMap,
    ErrorBoundConstants,
    FactualMap,
    MomentSpec,
    Objective,
    PeTruth,
    PolicyGrid,
    ProgramEvalConfig,
    StructuralModel,
    SupportSpec,
    ThetaGrid,
    WeightedMeasure,
    h_integrand,
)


def make_tabular(
    *,
    n_y=2,
    n_z=1,
    n_u=2,
    n_star=2,
    theta_ids=("t0",),
    gamma_ids=("p0",),
    moment_values=None,
    moment_bounds=None,
    gminus_table=None,
    gstar_table=None,
    objective_values=(0.0, 1.0),
    mu=1.0,
    constants=(1.0, 0.0, 1.0),
    name="tabular_test",
):
    """Small explicit model from plain tables.

    moment_values: dict theta_id -> array (n_y, n_z, n_u, J); None means J = 0.
    gminus_table: dict theta_id -> nested list [iy][iz] of u index tuples.
    gstar_table: dict (theta_id, gamma_id) -> nested [iy][iz][iu] of y* index tuples.
    Missing tables default to "everything": full latent cells and full
    counterfactual sets.
    """
    y_atoms = tuple((float(i),) for i in range(n_y))
    z_atoms = tuple((float(i),) for i in range(n_z))
    u_atoms = tuple((float(i),) for i in range(n_u))
    star_atoms = tuple((float(i),) for i in range(n_star))
    support = SupportSpec(
        y_atoms=y_atoms, z_atoms=z_atoms, u_atoms=u_atoms, ystar_atoms=star_atoms
    )
    theta_ids = tuple(theta_ids)
    gamma_ids = tuple(gamma_ids)

    if moment_values is None:
        j = 0
        moment_values = {t: np.zeros((n_y, n_z, n_u, 0)) for t in theta_ids}
    else:
        moment_values = {t: np.asarray(v, dtype=float) for t, v in moment_values.items()}
        j = next(iter(moment_values.values())).shape[-1]
    if moment_bounds is None:
        moment_bounds = tuple(
            max(1e-9, max(float(np.max(np.abs(v[..., k]))) for v in moment_values.values()))
            for k in range(j)
        )

    if gminus_table is None:
        full = tuple(range(n_u))
        gminus_table = {t: [[full for _ in range(n_z)] for _ in range(n_y)] for t in theta_ids}
    if gstar_table is None:
        alls = tuple(range(n_star))
        gstar_table = {
            (t, g): [[[alls for _ in range(n_u)] for _ in range(n_z)] for _ in range(n_y)]
            for t in theta_ids
            for g in gamma_ids
        }

    yi = {a: i for i, a in enumerate(y_atoms)}
    zi = {a: i for i, a in enumerate(z_atoms)}
    ui = {a: i for i, a in enumerate(u_atoms)}
    si = {a: i for i, a in enumerate(star_atoms)}

    def moments_fn(y, z, u, theta):
        return moment_values[theta][yi[tuple(y)], zi[tuple(z)], ui[tuple(u)]]

    def gminus_fn(y, z, theta):
        return [u_atoms[i] for i in gminus_table[theta][yi[tuple(y)]][zi[tuple(z)]]]

    def gstar_fn(y, z, u, theta, gamma):
        cell = gstar_table[(theta, gamma)][yi[tuple(y)]][zi[tuple(z)]][ui[tuple(u)]]
        return [star_atoms[i] for i in cell]

    vals = tuple(float(v) for v in objective_values)
    assert len(vals) == n_star
    lb = min(min(vals), 0.0)
    ub = max(max(vals), lb + 1.0)

    return StructuralModel(
        support=support,
        thetas=ThetaGrid(ids=theta_ids, values=theta_ids),
        policies=PolicyGrid(ids=gamma_ids, values=gamma_ids),
        moments=MomentSpec(
            labels=tuple(f"m{k}" for k in range(j)), bounds=moment_bounds, fn=moments_fn
        ),
        gminus=FactualMap(fn=gminus_fn),
        gstar=CounterfactualMap(fn=gstar_fn),
        objective=Objective(fn=lambda s, y, z, u: vals[si[tuple(s)]], lb=lb, ub=ub),
        constants=ErrorBoundConstants(*constants),
        mu_star=mu,
        name=name,
    )


def random_tabular_model(seed, j_moments=None, allow_empty=False):
    """Random small explicit model; sizes and tables drawn from the seed."""
    rng = np.random.default_rng(seed)
    n_y = int(rng.integers(1, 3))
    n_z = int(rng.integers(1, 3))
    n_u = int(rng.integers(2, 4))
    n_star = int(rng.integers(2, 4))
    n_t = int(rng.integers(1, 4))
    n_g = int(rng.integers(1, 3))
    j = int(rng.integers(0, 4)) if j_moments is None else j_moments
    theta_ids = tuple(f"t{i}" for i in range(n_t))
    gamma_ids = tuple(f"p{i}" for i in range(n_g))

    moment_values = {
        t: np.round(rng.uniform(-1, 1, size=(n_y, n_z, n_u, j)), 3) for t in theta_ids
    }

    def subset(pool, can_be_empty):
        keep = [i for i in pool if rng.random() > 0.3]
        if not keep and not can_be_empty:
            keep = [int(rng.integers(0, len(pool)))]
        return tuple(keep)

    gminus_table = {
        t: [
            [subset(range(n_u), allow_empty and rng.random() < 0.15) for _ in range(n_z)]
            for _ in range(n_y)
        ]
        for t in theta_ids
    }
    gstar_table = {
        (t, g): [
            [
                [subset(range(n_star), allow_empty and rng.random() < 0.15) for _ in range(n_u)]
                for _ in range(n_z)
            ]
            for _ in range(n_y)
        ]
        for t in theta_ids
        for g in gamma_ids
    }
    objective_values = tuple(np.round(rng.uniform(0, 1, size=n_star), 3))
    model = make_tabular(
        n_y=n_y,
        n_z=n_z,
        n_u=n_u,
        n_star=n_star,
        theta_ids=theta_ids,
        gamma_ids=gamma_ids,
        moment_values=moment_values if j else None,
        gminus_table=gminus_table,
        gstar_table=gstar_table,
        objective_values=objective_values,
        mu=float(rng.choice([1.0, 1.5, 2.0])),
        name=f"random_{seed}",
    )
    w = rng.dirichlet(np.ones(n_y * n_z)).reshape(n_y, n_z)
    return model, WeightedMeasure(weights=w)


def brute_envelope(model, measure, gamma_id, side):
    """Reference envelope: loop over parameters and binary penalty vectors."""
    sup = model.support
    w = measure.weights
    j = model.n_moments
    lower = side == "lower"
    best = math.inf if lower else -math.inf
    for tid in model.thetas.ids:
        inner_best = -math.inf if lower else math.inf
        for bits in itertools.product((0, 1), repeat=j):
            total = 0.0
            for iy, y in enumerate(sup.y_atoms):
                for iz, z in enumerate(sup.z_atoms):
                    if w[iy, iz] == 0.0:
                        continue
                    h = h_integrand(model, y, z, tid, gamma_id, bits, side)
                    total += w[iy, iz] * h
                    if not math.isfinite(total):
                        break
                if not math.isfinite(total):
                    break
            inner_best = max(inner_best, total) if lower else min(inner_best, total)
        best = min(best, inner_best) if lower else max(best, inner_best)
    return best


LATTICE = (0.2, 0.4, 0.6, 0.8)


def random_pe_truth(seed, n_outcomes=3, max_thetas=25):
    """Random small program-evaluation truth with on-grid propensities.

    Two instrument cells, one covariate value, outcome atoms spanning [0, 1],
    five latent bins, the truth's propensity and cell tables always inside the
    candidate grids.
    """
    rng = np.random.default_rng(seed)
    if n_outcomes == 2:
        outcomes = (0.0, 1.0)
    else:
        inner = np.round(np.sort(rng.uniform(0.2, 0.8, size=n_outcomes - 2)), 2)
        outcomes = (0.0, *[float(v) for v in inner], 1.0)
    g0 = tuple(float(rng.choice(LATTICE)) for _ in range(2))
    n_g = int(rng.integers(2, 5))
    g_pool = {g0}
    while len(g_pool) < n_g:
        g_pool.add(tuple(float(rng.choice(LATTICE)) for _ in range(2)))
    p_raw = rng.integers(2, 9, size=2)
    z_probs = tuple(float(v) for v in p_raw / p_raw.sum())
    n_t = int(rng.integers(1, max(2, max_thetas // n_g)))
    t_pool = {z_probs}
    while len(t_pool) < min(n_t, 4):
        q = rng.dirichlet((2.0, 2.0))
        t_pool.add(tuple(float(v) for v in np.round(q, 2) / np.round(q, 2).sum()))
    cfg = ProgramEvalConfig(
        z0_values=(0.0, 1.0),
        outcome_atoms=outcomes,
        u_bins=5,
        g_tables=tuple(sorted(g_pool)),
        t_tables=tuple(sorted(t_pool)),
        policies="all",
        name=f"pe_random_{seed}",
    )
    pair = rng.dirichlet(np.ones(n_outcomes * n_outcomes)).reshape(n_outcomes, n_outcomes)
    pair = np.round(pair, 6)
    pair.flat[int(np.argmax(pair))] += 1.0 - pair.sum()
    return PeTruth(
        config=cfg,
        g0=g0,
        z_probs=z_probs,
        u_pair_probs=tuple(tuple(float(v) for v in row) for row in pair),
    )


@pytest.fixture
def coverage_truth():
    from polenv import default_coverage_truth

    return default_coverage_truth()
