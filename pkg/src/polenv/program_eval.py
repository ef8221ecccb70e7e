"""Program-evaluation example: binary treatment with latent selection.

Observables are (Y, D, Z) with Y = U0 (1 - D) + U1 D and D = 1{U <= g0(Z)};
the latent U is uniform conditional on Z, and Z = (Z0, X) has finite support.
The structural parameter is a pair theta = (g, t): a propensity table over z
cells and a probability table for the z cells themselves. Policies remap z
before the propensity is applied, so a policy's counterfactual outcome is
Y* = U1 if U <= g(gamma(z)) and U0 otherwise, and the transform of interest is
E[Y*], with the objective reading off the counterfactual outcome value.

Discretization: the latent u coordinate lives on the midpoints of u_bins equal
bins of [0, 1], so a uniform latent law satisfies P(U <= k/m) = k/m exactly for
levels on the k/m lattice; latent outcome coordinates (u0, u1) live on the
outcome atoms. Ten moment rows per z cell tie the model together: two pin the
propensity to the observed treatment share, two pin the uniform-latent
c.d.f. at the candidate propensity level, two pin the z-cell probabilities and
four impose mean independence of each potential outcome from the instrument.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BudgetError, ContractError
from .model import (
    CounterfactualMap,
    ErrorBoundConstants,
    FactualMap,
    MomentSpec,
    Objective,
    PolicyGrid,
    Sample,
    StructuralModel,
    SupportSpec,
    ThetaGrid,
)

POLICY_BUDGET = 1024


@dataclass(frozen=True)
class ProgramEvalConfig:
    """Grids and tables defining one program-evaluation model.

    ``g_tables`` and ``t_tables`` are tuples of candidate tables, each giving
    one value per z cell in enumeration order (z0 major, x minor); the theta
    grid is their product. ``policies`` is either "all" (every map from z cells
    to z cells) or an explicit tuple of index maps.
    """

    z0_values: tuple[float, ...]
    outcome_atoms: tuple[float, ...]
    u_bins: int
    g_tables: tuple[tuple[float, ...], ...]
    t_tables: tuple[tuple[float, ...], ...]
    x_values: tuple[float, ...] = (0.0,)
    policies: object = "all"
    mu_star_value: Optional[float] = None
    name: str = "program_eval"

    @property
    def z_atoms(self) -> tuple[tuple[float, float], ...]:
        return tuple((z0, x) for z0 in self.z0_values for x in self.x_values)

    @property
    def u_midpoints(self) -> tuple[float, ...]:
        m = self.u_bins
        return tuple((k + 0.5) / m for k in range(m))


def _policy_maps(cfg: ProgramEvalConfig) -> tuple[tuple[int, ...], ...]:
    n_z = len(cfg.z_atoms)
    if cfg.policies == "all":
        count = n_z ** n_z
        if count > POLICY_BUDGET:
            raise BudgetError(
                f"'all' would enumerate {count} policies, over the budget of {POLICY_BUDGET}; "
                "pass an explicit policy list"
            )
        return tuple(itertools.product(range(n_z), repeat=n_z))
    maps = tuple(tuple(int(i) for i in p) for p in cfg.policies)
    for p in maps:
        if len(p) != n_z or any(not (0 <= i < n_z) for i in p):
            raise ContractError(f"policy map {p} must map each of {n_z} z cells to a z cell")
    return maps


def policy_id(mapping: tuple[int, ...]) -> str:
    return "pi_" + "-".join(str(i) for i in mapping)


def build_program_evaluation(cfg: ProgramEvalConfig) -> StructuralModel:
    """Assemble the structural model for a program-evaluation configuration."""
    if cfg.u_bins < 2:
        raise ContractError(f"u_bins must be at least 2, got {cfg.u_bins}")
    outcomes = tuple(float(v) for v in cfg.outcome_atoms)
    if len(set(outcomes)) != len(outcomes) or len(outcomes) < 2:
        raise ContractError("outcome_atoms must hold at least two distinct values")
    if not cfg.z0_values or not cfg.x_values:
        raise ContractError("z0_values and x_values must be nonempty")
    z_atoms = cfg.z_atoms
    n_z = len(z_atoms)
    mids = cfg.u_midpoints
    lo_mid, hi_mid = mids[0], mids[-1]

    if not cfg.g_tables or not cfg.t_tables:
        raise ContractError("need at least one propensity table and one cell-probability table")
    for g in cfg.g_tables:
        if len(g) != n_z:
            raise ContractError(f"propensity table {g} must have one level per z cell ({n_z})")
        for v in g:
            if not (lo_mid - 1e-12 <= v <= hi_mid + 1e-12):
                raise ContractError(
                    f"u grid too coarse to contain propensity level {v}: with u_bins={cfg.u_bins} "
                    f"levels must lie within [{lo_mid}, {hi_mid}] so both treatment arms keep "
                    "latent support; widen u_bins or move the level inward"
                )
    for t in cfg.t_tables:
        if len(t) != n_z:
            raise ContractError(f"cell-probability table {t} must have {n_z} entries")
        if any(v < 0 for v in t) or abs(sum(t) - 1.0) > 1e-9:
            raise ContractError(f"cell-probability table {t} must be nonnegative and sum to 1")

    y_atoms = tuple((yv, d) for yv in outcomes for d in (0.0, 1.0))
    u_atoms = tuple((u0, u1, u) for u0 in outcomes for u1 in outcomes for u in mids)
    ystar_atoms = tuple((yv, d) for yv in outcomes for d in (0.0, 1.0))
    support = SupportSpec(
        y_atoms=y_atoms,
        z_atoms=z_atoms,
        u_atoms=u_atoms,
        ystar_atoms=ystar_atoms,
        y_cols=("y", "d"),
        z_cols=("z0", "x"),
        u_cols=("u0", "u1", "u"),
        ystar_cols=("ystar", "dstar"),
    )

    theta_ids, theta_values = [], []
    for ig, g in enumerate(cfg.g_tables):
        for it, t in enumerate(cfg.t_tables):
            theta_ids.append(f"g{ig}t{it}")
            theta_values.append((tuple(float(v) for v in g), tuple(float(v) for v in t)))
    thetas = ThetaGrid(ids=tuple(theta_ids), values=tuple(theta_values))

    maps = _policy_maps(cfg)
    policies = PolicyGrid(
        ids=tuple(policy_id(p) for p in maps), values=tuple(maps)
    )

    z_index = {z: i for i, z in enumerate(z_atoms)}
    x_of = [z[1] for z in z_atoms]

    labels, bounds = [], []
    y_abs = max(abs(v) for v in outcomes)
    for iz, (zb0, xb) in enumerate(z_atoms):
        labels += [f"prop_plus_z{iz}", f"prop_minus_z{iz}"]
        bounds += [1.0, 1.0]
        labels += [f"unif_plus_z{iz}", f"unif_minus_z{iz}"]
        bounds += [1.0, 1.0]
        labels += [f"cellp_plus_z{iz}", f"cellp_minus_z{iz}"]
        bounds += [1.0, 1.0]
        labels += [
            f"meanind_d0_plus_z{iz}",
            f"meanind_d0_minus_z{iz}",
            f"meanind_d1_plus_z{iz}",
            f"meanind_d1_minus_z{iz}",
        ]
        bounds += [y_abs, y_abs, y_abs, y_abs]

    def moments_fn(y, z, u, theta):
        g_tab, t_tab = theta
        yv, d = y
        u0, u1, uu = u
        iz_obs = z_index[z]
        x_obs = z[1]
        out = np.empty(10 * n_z, dtype=np.float64)
        k = 0
        for iz, zb in enumerate(z_atoms):
            same_z = 1.0 if iz == iz_obs else 0.0
            same_x = 1.0 if zb[1] == x_obs else 0.0
            gv = g_tab[iz]
            tv = t_tab[iz]
            t_x = sum(t_tab[j] for j, zc in enumerate(z_atoms) if zc[1] == zb[1])
            m1 = (d - gv) * same_z
            m3 = ((1.0 if uu <= gv else 0.0) - gv) * same_x
            m5 = tv - same_z
            coefu = same_z * t_x - same_x * tv
            m7_0 = u0 * coefu
            m7_1 = u1 * coefu
            out[k] = m1
            out[k + 1] = -m1
            out[k + 2] = m3
            out[k + 3] = -m3
            out[k + 4] = m5
            out[k + 5] = -m5
            out[k + 6] = m7_0
            out[k + 7] = -m7_0
            out[k + 8] = m7_1
            out[k + 9] = -m7_1
            k += 10
        return out

    moments = MomentSpec(labels=tuple(labels), bounds=tuple(bounds), fn=moments_fn)

    def gminus_fn(y, z, theta):
        g_tab, _ = theta
        yv, d = y
        gv = g_tab[z_index[z]]
        if d == 1.0:
            return [(u0, yv, u) for u0 in outcomes for u in mids if u <= gv]
        return [(yv, u1, u) for u1 in outcomes for u in mids if u >= gv]

    def gstar_fn(y, z, u, theta, gamma):
        g_tab, _ = theta
        u0, u1, uu = u
        gz = g_tab[gamma[z_index[z]]]
        if uu <= gz:
            return [(u1, 1.0)]
        return [(u0, 0.0)]

    objective = Objective(
        fn=lambda s, y, z, u: s[0], lb=min(outcomes), ub=max(outcomes)
    )
    constants = ErrorBoundConstants(c1=1.0, c2=1.0, delta=max(outcomes) - min(outcomes))
    mu = cfg.mu_star_value if cfg.mu_star_value is not None else 1.0
    return StructuralModel(
        support=support,
        thetas=thetas,
        policies=policies,
        moments=moments,
        gminus=FactualMap(fn=gminus_fn),
        gstar=CounterfactualMap(fn=gstar_fn),
        objective=objective,
        constants=constants,
        mu_star=mu,
        name=cfg.name,
    )


@dataclass(frozen=True)
class PeTruth:
    """A data-generating process compatible with a program-evaluation config.

    The latent selection coordinate is uniform on the grid midpoints (that is
    what makes the uniform-latent moments hold exactly); (u0, u1) follow the
    joint table and are independent of z and of the selection coordinate.
    """

    config: ProgramEvalConfig
    g0: tuple[float, ...]
    z_probs: tuple[float, ...]
    u_pair_probs: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        n_z = len(self.config.z_atoms)
        if len(self.g0) != n_z or len(self.z_probs) != n_z:
            raise ContractError("g0 and z_probs must have one entry per z cell")
        if any(p < 0 for p in self.z_probs) or abs(sum(self.z_probs) - 1.0) > 1e-9:
            raise ContractError("z_probs must be nonnegative and sum to 1")
        k = len(self.config.outcome_atoms)
        flat = [p for row in self.u_pair_probs for p in row]
        if len(self.u_pair_probs) != k or any(len(r) != k for r in self.u_pair_probs):
            raise ContractError(f"u_pair_probs must be {k} x {k}")
        if any(p < 0 for p in flat) or abs(sum(flat) - 1.0) > 1e-9:
            raise ContractError("u_pair_probs must be nonnegative and sum to 1")

    def build_model(self) -> StructuralModel:
        return build_program_evaluation(self.config)

    def population(self):
        """Exact population measure of (y, z) cells under the truth."""
        from .envelope import WeightedMeasure

        cfg = self.config
        outcomes = cfg.outcome_atoms
        mids = cfg.u_midpoints
        m = len(mids)
        pair = np.asarray(self.u_pair_probs, dtype=np.float64)
        marg0 = pair.sum(axis=1)
        marg1 = pair.sum(axis=0)
        n_y = 2 * len(outcomes)
        w = np.zeros((n_y, len(cfg.z_atoms)), dtype=np.float64)
        for iz in range(len(cfg.z_atoms)):
            share1 = sum(1 for u in mids if u <= self.g0[iz]) / m
            for io, yv in enumerate(outcomes):
                iy1 = io * 2 + 1  # y atoms enumerate (yv, 0), (yv, 1) per outcome
                iy0 = io * 2
                w[iy1, iz] = self.z_probs[iz] * marg1[io] * share1
                w[iy0, iz] = self.z_probs[iz] * marg0[io] * (1.0 - share1)
        return WeightedMeasure(weights=w)

    def sample(self, n: int, seed: int) -> Sample:
        cfg = self.config
        outcomes = cfg.outcome_atoms
        mids = cfg.u_midpoints
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        z_idx = rng.choice(len(cfg.z_atoms), size=n, p=np.asarray(self.z_probs))
        pair = np.asarray(self.u_pair_probs, dtype=np.float64).reshape(-1)
        pair_idx = rng.choice(pair.size, size=n, p=pair)
        u_idx = rng.integers(0, len(mids), size=n)
        k = len(outcomes)
        rows = []
        for i in range(n):
            io0, io1 = divmod(int(pair_idx[i]), k)
            z = cfg.z_atoms[int(z_idx[i])]
            u = mids[int(u_idx[i])]
            d = 1.0 if u <= self.g0[int(z_idx[i])] else 0.0
            yv = outcomes[io1] if d == 1.0 else outcomes[io0]
            rows.append(((yv, d), z))
        return Sample(rows=tuple(rows))
