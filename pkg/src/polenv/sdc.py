"""Strategic discrete choice example: simultaneous binary entry with payoffs
linear in the parameter.

Each of K players acts by Y_k = 1{pi_k(Z_k, Y_{-k}; theta) >= U_k} with latent
shocks supported on [-1, 1] and payoffs bounded by 1 in absolute value. The
factual support map is a box: coordinate k of u lies below pi_k when player k
entered and above it otherwise. A policy rewrites the (own instrument, peer
activity) pair each player perceives, and the counterfactual map collects the
pure-strategy fixed points of the rewired system, which can be empty when
K >= 2 (coherency failure is surfaced, not repaired).

Identification strengthens the median restriction on the shocks to a local
linear minorant with slope L0, producing two families of conditional moment
inequalities indexed by an observed (own z, peer action) cell and a probed
(z', peer action') cell. The error-bound constants come straight from the
declared payoff Lipschitz constants and the plug-in tau-hat, the smallest
nonzero distance of a conditional entry share from one half.
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
class SdcConfig:
    """Grids, payoff basis and constants for one strategic-choice model.

    ``coeff_tables`` lists the theta candidates; each candidate holds one
    coefficient tuple per player. With basis "per_z" the tuple has one payoff
    value per own-instrument value; "per_z_peer" appends a peer-activity slope,
    pi = c[z] + c[-1] * (number of active peers).
    """

    n_players: int
    z_values: tuple[float, ...]
    u_bins: int
    coeff_tables: tuple
    L0: float
    L: float
    L_prime: float
    basis: str = "per_z"
    policies: object = "all"
    target_player: int = 0
    mu_star_value: Optional[float] = None
    name: str = "sdc"

    @property
    def u_midpoints(self) -> tuple[float, ...]:
        m = self.u_bins
        return tuple(-1.0 + (k + 0.5) * 2.0 / m for k in range(m))


def _pi(cfg: SdcConfig, z_index: dict, coeffs, k: int, z_val: float, y_minus) -> float:
    c = coeffs[k]
    if cfg.basis == "per_z":
        return float(c[z_index[z_val]])
    return float(c[z_index[z_val]] + c[-1] * sum(y_minus))


def _domain_cells(cfg: SdcConfig) -> tuple:
    """Policy domain: (own z value, peer action tuple) pairs, enumerated."""
    peers = list(itertools.product((0.0, 1.0), repeat=cfg.n_players - 1))
    return tuple((z, ym) for z in cfg.z_values for ym in peers)


def _policy_values(cfg: SdcConfig) -> tuple:
    cells = _domain_cells(cfg)
    n_cells = len(cells)
    if cfg.policies == "identity":
        ident = tuple(range(n_cells))
        return (tuple(ident for _ in range(cfg.n_players)),)
    if cfg.policies == "all":
        if cfg.n_players != 1:
            raise ContractError(
                "policies='all' is only supported for one player; pass explicit maps"
            )
        count = n_cells ** n_cells
        if count > POLICY_BUDGET:
            raise BudgetError(
                f"'all' would enumerate {count} policies, over the budget of {POLICY_BUDGET}"
            )
        return tuple((m,) for m in itertools.product(range(n_cells), repeat=n_cells))
    out = []
    for pol in cfg.policies:
        pol = tuple(tuple(int(i) for i in per_player) for per_player in pol)
        if len(pol) != cfg.n_players:
            raise ContractError(f"policy {pol} must give one map per player")
        for per_player in pol:
            if len(per_player) != n_cells or any(not (0 <= i < n_cells) for i in per_player):
                raise ContractError(f"policy map {per_player} must map {n_cells} cells to cells")
        out.append(pol)
    return tuple(out)


def _policy_id(pol) -> str:
    return "pi_" + "|".join("-".join(str(i) for i in per_player) for per_player in pol)


def sdc_support(cfg: SdcConfig) -> SupportSpec:
    """Observable and latent supports implied by a configuration alone."""
    K = cfg.n_players
    z_vals = tuple(float(z) for z in cfg.z_values)
    y_atoms = tuple(itertools.product((0.0, 1.0), repeat=K))
    return SupportSpec(
        y_atoms=y_atoms,
        z_atoms=tuple(itertools.product(z_vals, repeat=K)),
        u_atoms=tuple(itertools.product(cfg.u_midpoints, repeat=K)),
        ystar_atoms=y_atoms,
        y_cols=tuple(f"y{k + 1}" for k in range(K)),
        z_cols=tuple(f"z{k + 1}" for k in range(K)),
        u_cols=tuple(f"u{k + 1}" for k in range(K)),
        ystar_cols=tuple(f"ystar{k + 1}" for k in range(K)),
    )


def tau_hat(cfg: SdcConfig, sample: Sample) -> float:
    """Plug-in tau: smallest nonzero |1/2 - conditional entry share|."""
    groups: dict = {}
    for y, z in sample.rows:
        for k in range(cfg.n_players):
            y_minus = tuple(v for i, v in enumerate(y) if i != k)
            key = (k, z[k], y_minus)
            tot, act = groups.get(key, (0, 0))
            groups[key] = (tot + 1, act + int(y[k] == 1.0))
    best = None
    for (k, zv, ym), (tot, act) in groups.items():
        gap = abs(0.5 - act / tot)
        if gap > 0 and (best is None or gap < best):
            best = gap
    if best is None:
        raise ContractError(
            "tau-hat undefined: every observed conditional entry share is exactly one half"
        )
    return float(best)


def build_sdc(cfg: SdcConfig, sample: Sample) -> StructuralModel:
    """Assemble the strategic-choice model; tau-hat is plugged in from the sample."""
    if cfg.n_players < 1:
        raise ContractError("need at least one player")
    if cfg.u_bins < 2:
        raise ContractError(f"u_bins must be at least 2, got {cfg.u_bins}")
    if cfg.basis not in ("per_z", "per_z_peer"):
        raise ContractError(f"unknown basis {cfg.basis!r}")
    if not (math.isfinite(cfg.L0) and cfg.L0 > 0):
        raise ContractError(f"L0 must be finite and positive, got {cfg.L0}")
    if not (0 < cfg.L_prime <= cfg.L):
        raise ContractError(
            f"need 0 < L_prime <= L, got L_prime={cfg.L_prime}, L={cfg.L}"
        )
    z_vals = tuple(float(z) for z in cfg.z_values)
    if len(set(z_vals)) != len(z_vals) or not z_vals:
        raise ContractError("z_values must be nonempty and distinct")
    z_index = {z: i for i, z in enumerate(z_vals)}
    K = cfg.n_players
    mids = cfg.u_midpoints
    lo_mid, hi_mid = mids[0], mids[-1]

    thetas_raw = tuple(
        tuple(tuple(float(v) for v in per_player) for per_player in th)
        for th in cfg.coeff_tables
    )
    if not thetas_raw:
        raise ContractError("need at least one coefficient table")
    n_basis = len(z_vals) + (1 if cfg.basis == "per_z_peer" else 0)
    peers = list(itertools.product((0.0, 1.0), repeat=K - 1))
    for th in thetas_raw:
        if len(th) != K or any(len(c) != n_basis for c in th):
            raise ContractError(
                f"each theta must hold {K} coefficient tuples of length {n_basis}"
            )
        for k in range(K):
            for z in z_vals:
                for ym in peers:
                    p = _pi(cfg, z_index, th, k, z, ym)
                    if not (-1.0 <= p <= 1.0):
                        raise ContractError(
                            f"payoff {p} outside [-1, 1] at theta={th}, player {k}, z={z}"
                        )
                    if not (lo_mid - 1e-12 <= p <= hi_mid + 1e-12):
                        raise ContractError(
                            f"u grid too coarse to contain payoff {p}: with u_bins={cfg.u_bins} "
                            f"payoffs must lie within [{lo_mid}, {hi_mid}]"
                        )

    support = sdc_support(cfg)
    y_atoms = support.y_atoms

    theta_ids = tuple(f"th{i}" for i in range(len(thetas_raw)))
    thetas = ThetaGrid(ids=theta_ids, values=thetas_raw)
    pol_values = _policy_values(cfg)
    policies = PolicyGrid(
        ids=tuple(_policy_id(p) for p in pol_values), values=pol_values
    )
    cells = _domain_cells(cfg)

    tau = tau_hat(cfg, sample)
    c1 = cfg.L0 * cfg.L_prime
    c2 = cfg.L0 * cfg.L
    delta = tau / (cfg.L0 * cfg.L_prime)

    # moment families: observed cell (k, z, y_minus) probed at (z', y_minus')
    labels, bounds, probes = [], [], []
    for k in range(K):
        for z in z_vals:
            for ym in peers:
                for zp in z_vals:
                    for ymp in peers:
                        pis = [_pi(cfg, z_index, th, k, zp, ymp) for th in thetas_raw]
                        up = cfg.L0 * max(max(p, 0.0) for p in pis)
                        dn = cfg.L0 * max(max(-p, 0.0) for p in pis)
                        tag = (
                            f"k{k + 1}_z{z_index[z]}_ym{''.join(str(int(v)) for v in ym)}"
                            f"_probe_z{z_index[zp]}_ym{''.join(str(int(v)) for v in ymp)}"
                        )
                        labels += [f"cons_lo_{tag}", f"cons_hi_{tag}"]
                        bounds += [0.5 + up, 0.5 + dn]
                        probes.append((k, z, ym, zp, ymp))

    def moments_fn(y, z, u, theta):
        out = np.zeros(2 * len(probes), dtype=np.float64)
        for i, (k, zc, ym, zp, ymp) in enumerate(probes):
            y_minus = tuple(v for j, v in enumerate(y) if j != k)
            if z[k] != zc or y_minus != ym:
                continue
            p = _pi(cfg, z_index, theta, k, zp, ymp)
            ind = 1.0 if u[k] <= p else 0.0
            out[2 * i] = ind - max(cfg.L0 * p, 0.0) - 0.5
            out[2 * i + 1] = 0.5 - ind - max(-cfg.L0 * p, 0.0)
        return out

    moments = MomentSpec(labels=tuple(labels), bounds=tuple(bounds), fn=moments_fn)

    def gminus_fn(y, z, theta):
        per_coord = []
        for k in range(K):
            y_minus = tuple(v for j, v in enumerate(y) if j != k)
            p = _pi(cfg, z_index, theta, k, z[k], y_minus)
            if y[k] == 1.0:
                per_coord.append([u for u in mids if u <= p])
            else:
                per_coord.append([u for u in mids if u >= p])
        return [tuple(c) for c in itertools.product(*per_coord)]

    def gstar_fn(y, z, u, theta, gamma):
        out = []
        for cand in itertools.product((0.0, 1.0), repeat=K):
            ok = True
            for k in range(K):
                y_minus = tuple(v for j, v in enumerate(cand) if j != k)
                cell_idx = cells.index((z[k], y_minus))
                z2, ym2 = cells[gamma[k][cell_idx]]
                p = _pi(cfg, z_index, theta, k, z2, ym2)
                if cand[k] != (1.0 if u[k] <= p else 0.0):
                    ok = False
                    break
            if ok:
                out.append(cand)
        return out

    target = cfg.target_player
    if not (0 <= target < K):
        raise ContractError(f"target_player must be in [0, {K}), got {target}")
    objective = Objective(fn=lambda s, y, z, u: s[target], lb=0.0, ub=1.0)
    constants = ErrorBoundConstants(c1=c1, c2=c2, delta=delta)
    floor = max(cfg.L / cfg.L_prime, 1.0 / tau)
    mu = cfg.mu_star_value if cfg.mu_star_value is not None else floor
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
class SdcTruth:
    """A data-generating process for the strategic-choice example.

    Latent shocks are uniform on the grid midpoints per coordinate (median
    zero when the bin count is even), independent across players and of z.
    When the factual system has several pure equilibria the selection rule
    picks the first in binary order ("first") or splits uniformly ("uniform").
    """

    config: SdcConfig
    theta0: tuple
    z_probs: tuple[float, ...]
    selection: str = "first"

    def __post_init__(self):
        z_atoms = tuple(itertools.product(tuple(float(z) for z in self.config.z_values),
                                          repeat=self.config.n_players))
        if len(self.z_probs) != len(z_atoms):
            raise ContractError(
                f"z_probs must have one entry per z vector ({len(z_atoms)})"
            )
        if any(p < 0 for p in self.z_probs) or abs(sum(self.z_probs) - 1.0) > 1e-9:
            raise ContractError("z_probs must be nonnegative and sum to 1")
        if self.selection not in ("first", "uniform"):
            raise ContractError(f"unknown selection rule {self.selection!r}")

    def _equilibria(self, z, u):
        cfg = self.config
        z_index = {zv: i for i, zv in enumerate(cfg.z_values)}
        K = cfg.n_players
        out = []
        for cand in itertools.product((0.0, 1.0), repeat=K):
            ok = True
            for k in range(K):
                y_minus = tuple(v for j, v in enumerate(cand) if j != k)
                p = _pi(cfg, z_index, self.theta0, k, z[k], y_minus)
                if cand[k] != (1.0 if u[k] <= p else 0.0):
                    ok = False
                    break
            if ok:
                out.append(cand)
        return out

    def build_model(self, sample: Sample) -> StructuralModel:
        return build_sdc(self.config, sample)

    def population(self):
        """Exact population (y, z) weights under the truth and selection rule."""
        from .envelope import WeightedMeasure

        cfg = self.config
        z_atoms = tuple(itertools.product(tuple(float(z) for z in cfg.z_values),
                                          repeat=cfg.n_players))
        y_atoms = tuple(itertools.product((0.0, 1.0), repeat=cfg.n_players))
        y_index = {a: i for i, a in enumerate(y_atoms)}
        mids = cfg.u_midpoints
        u_grid = tuple(itertools.product(mids, repeat=cfg.n_players))
        w = np.zeros((len(y_atoms), len(z_atoms)), dtype=np.float64)
        pu = 1.0 / len(u_grid)
        for iz, z in enumerate(z_atoms):
            pz = self.z_probs[iz]
            if pz == 0:
                continue
            for u in u_grid:
                eqs = self._equilibria(z, u)
                if not eqs:
                    raise ContractError(
                        f"truth is incoherent: no pure equilibrium at z={z}, u={u}"
                    )
                if self.selection == "first":
                    w[y_index[eqs[0]], iz] += pz * pu
                else:
                    share = pz * pu / len(eqs)
                    for eq in eqs:
                        w[y_index[eq], iz] += share
        return WeightedMeasure(weights=w)

    def sample(self, n: int, seed: int) -> Sample:
        cfg = self.config
        z_atoms = tuple(itertools.product(tuple(float(z) for z in cfg.z_values),
                                          repeat=cfg.n_players))
        mids = cfg.u_midpoints
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        z_idx = rng.choice(len(z_atoms), size=n, p=np.asarray(self.z_probs))
        u_idx = rng.integers(0, len(mids), size=(n, cfg.n_players))
        rows = []
        for i in range(n):
            z = z_atoms[int(z_idx[i])]
            u = tuple(mids[int(j)] for j in u_idx[i])
            eqs = self._equilibria(z, u)
            if not eqs:
                raise ContractError(
                    f"truth is incoherent: no pure equilibrium at z={z}, u={u}"
                )
            if self.selection == "first" or len(eqs) == 1:
                y = eqs[0]
            else:
                y = eqs[int(rng.integers(0, len(eqs)))]
            rows.append((y, z))
        return Sample(rows=tuple(rows))
