"""Core model types for finite-support partially identified structural models.

A structural model here is a finite description of:

* observable support (outcome atoms ``y``, covariate atoms ``z``),
* latent support (``u`` atoms) and counterfactual outcome support (``y*`` atoms),
* a grid of structural parameter candidates (theta grid),
* a grid of counterfactual policies (policy grid),
* a vector of moment functions ``m_j(y, z, u, theta)`` with known uniform bounds,
* a set-valued factual map ``G-(y, z, theta)`` giving the latent points consistent
  with an observed cell, and a set-valued counterfactual map
  ``G*(y, z, u, theta, gamma)`` giving the counterfactual outcomes consistent with
  a latent point under a policy,
* a bounded objective ``phi(y*, y, z, u)`` whose expectation is the policy
  transform of interest,
* error-bound constants (C1, C2, delta) and a penalty level ``mu*``.

Atoms are tuples of floats throughout, so a program-evaluation outcome atom looks
like ``(0.5, 1.0)`` (outcome value, treatment indicator). Each atom also carries a
canonical string label per coordinate, used for exact matching when reading and
writing CSV files.

Conventions: the infimum over an empty set is ``+inf`` and the supremum over an
empty set is ``-inf``. ``h_integrand`` below is the readable reference
implementation of the penalized integrand; the vectorized engine used by the
envelope and complexity modules must agree with it exactly and is tested against
it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError

Atom = tuple


def atom_label(value: float) -> str:
    """Canonical string for one atom coordinate.

    Integral values render without a decimal part ("1", not "1.0") and
    everything else uses repr, which round-trips floats exactly.
    """
    v = float(value)
    if not math.isfinite(v):
        raise ContractError(f"atom coordinates must be finite, got {value!r}")
    if v == int(v):
        return str(int(v))
    return repr(v)


def atom_labels(atom: Atom) -> tuple[str, ...]:
    return tuple(atom_label(c) for c in atom)


def _as_atoms(atoms: Iterable[Sequence[float]], what: str) -> tuple[Atom, ...]:
    out = []
    for a in atoms:
        if isinstance(a, (int, float)):
            a = (a,)
        out.append(tuple(float(c) for c in a))
    if not out:
        raise ContractError(f"{what} atom list is empty")
    widths = {len(a) for a in out}
    if len(widths) != 1:
        raise ContractError(f"{what} atoms have inconsistent arity: {sorted(widths)}")
    if len(set(out)) != len(out):
        raise ContractError(f"{what} atoms contain duplicates")
    return tuple(out)


@dataclass(frozen=True, eq=False)
class SupportSpec:
    """Finite supports for observables, latents and counterfactual outcomes."""

    y_atoms: tuple[Atom, ...]
    z_atoms: tuple[Atom, ...]
    u_atoms: tuple[Atom, ...]
    ystar_atoms: tuple[Atom, ...]
    y_cols: tuple[str, ...] = ("y",)
    z_cols: tuple[str, ...] = ("z",)
    u_cols: tuple[str, ...] = ("u",)
    ystar_cols: tuple[str, ...] = ("ystar",)

    def __post_init__(self):
        object.__setattr__(self, "y_atoms", _as_atoms(self.y_atoms, "y"))
        object.__setattr__(self, "z_atoms", _as_atoms(self.z_atoms, "z"))
        object.__setattr__(self, "u_atoms", _as_atoms(self.u_atoms, "u"))
        object.__setattr__(self, "ystar_atoms", _as_atoms(self.ystar_atoms, "ystar"))
        for atoms, cols, name in (
            (self.y_atoms, self.y_cols, "y"),
            (self.z_atoms, self.z_cols, "z"),
            (self.u_atoms, self.u_cols, "u"),
            (self.ystar_atoms, self.ystar_cols, "ystar"),
        ):
            if len(atoms[0]) != len(cols):
                raise ContractError(
                    f"{name} atoms have arity {len(atoms[0])} but {len(cols)} column names"
                )
        object.__setattr__(self, "_y_index", {a: i for i, a in enumerate(self.y_atoms)})
        object.__setattr__(self, "_z_index", {a: i for i, a in enumerate(self.z_atoms)})
        object.__setattr__(self, "_u_index", {a: i for i, a in enumerate(self.u_atoms)})
        object.__setattr__(
            self, "_ystar_index", {a: i for i, a in enumerate(self.ystar_atoms)}
        )

    def y_index(self, atom: Atom) -> int:
        return self._y_index[tuple(atom)]

    def z_index(self, atom: Atom) -> int:
        return self._z_index[tuple(atom)]

    def u_index(self, atom: Atom) -> int:
        return self._u_index[tuple(atom)]

    def ystar_index(self, atom: Atom) -> int:
        return self._ystar_index[tuple(atom)]


def _check_ids(ids: Sequence[str], what: str) -> tuple[str, ...]:
    ids = tuple(str(i) for i in ids)
    if not ids:
        raise ContractError(f"{what} grid is empty")
    if len(set(ids)) != len(ids):
        raise ContractError(f"{what} grid has duplicate ids")
    return ids


@dataclass(frozen=True, eq=False)
class ThetaGrid:
    """Ordered finite grid of structural parameter candidates."""

    ids: tuple[str, ...]
    values: tuple[object, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", _check_ids(self.ids, "theta"))
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.ids) != len(self.values):
            raise ContractError("theta ids and values differ in length")

    def __len__(self) -> int:
        return len(self.ids)

    def value(self, theta_id: str) -> object:
        try:
            return self.values[self.ids.index(theta_id)]
        except ValueError:
            raise ContractError(f"unknown theta id {theta_id!r}") from None


@dataclass(frozen=True, eq=False)
class PolicyGrid:
    """Ordered finite grid of counterfactual policies."""

    ids: tuple[str, ...]
    values: tuple[object, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", _check_ids(self.ids, "policy"))
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.ids) != len(self.values):
            raise ContractError("policy ids and values differ in length")

    def __len__(self) -> int:
        return len(self.ids)

    def value(self, gamma_id: str) -> object:
        try:
            return self.values[self.ids.index(gamma_id)]
        except ValueError:
            raise ContractError(f"unknown policy id {gamma_id!r}") from None


@dataclass(frozen=True, eq=False)
class MomentSpec:
    """Vector of moment functions with per-moment uniform bounds.

    ``fn(y, z, u, theta)`` returns a sequence of J floats; ``bounds[j]`` must
    dominate ``|m_j|`` on the whole support grid (validate_model spot checks
    this exhaustively).
    """

    labels: tuple[str, ...]
    bounds: tuple[float, ...]
    fn: Callable[[Atom, Atom, Atom, object], Sequence[float]]

    def __post_init__(self):
        # an empty vector is legitimate: it is the moment-free degenerate case
        labels = tuple(str(s) for s in self.labels)
        if len(set(labels)) != len(labels):
            raise ContractError("moment labels must be distinct")
        object.__setattr__(self, "labels", labels)
        bounds = tuple(float(b) for b in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if len(self.labels) != len(bounds):
            raise ContractError("moment labels and bounds differ in length")
        if any(not math.isfinite(b) or b < 0 for b in bounds):
            raise ContractError("moment bounds must be finite and nonnegative")

    @property
    def n_moments(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class FactualMap:
    """Set-valued map from an observed cell to its consistent latent points."""

    fn: Callable[[Atom, Atom, object], Iterable[Atom]]


@dataclass(frozen=True, eq=False)
class CounterfactualMap:
    """Set-valued map from a latent point to its counterfactual outcomes."""

    fn: Callable[[Atom, Atom, Atom, object, object], Iterable[Atom]]


@dataclass(frozen=True, eq=False)
class Objective:
    """Bounded objective phi(y*, y, z, u) defining the policy transform."""

    fn: Callable[[Atom, Atom, Atom, Atom], float]
    lb: float
    ub: float

    def __post_init__(self):
        lb, ub = float(self.lb), float(self.ub)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)
        if not (math.isfinite(lb) and math.isfinite(ub)) or lb >= ub:
            raise ContractError(f"objective bounds must be finite with lb < ub, got [{lb}, {ub}]")


@dataclass(frozen=True, eq=False)
class ErrorBoundConstants:
    """Constants of the polynomial minorant / local robustness conditions."""

    c1: float
    c2: float
    delta: float

    def __post_init__(self):
        c1, c2, delta = float(self.c1), float(self.c2), float(self.delta)
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "c2", c2)
        object.__setattr__(self, "delta", delta)
        if not math.isfinite(c1) or c1 <= 0:
            raise ContractError(f"c1 must be finite and positive, got {c1}")
        if not math.isfinite(c2) or c2 < 0:
            raise ContractError(f"c2 must be finite and nonnegative, got {c2}")
        if not math.isfinite(delta) or delta <= 0:
            raise ContractError(f"delta must be finite and positive, got {delta}")


def mu_star(constants: ErrorBoundConstants, objective: Objective) -> float:
    """Smallest penalty level that makes the penalized program exact.

    Returns max{C2 / C1, (phi_ub - phi_lb) / (C1 * delta)}.
    """
    ratio1 = constants.c2 / constants.c1
    ratio2 = (objective.ub - objective.lb) / (constants.c1 * constants.delta)
    value = max(ratio1, ratio2)
    if not math.isfinite(value) or value < 0:
        raise ContractError(f"penalty floor is not a valid number: {value}")
    return value


@dataclass(frozen=True, eq=False)
class StructuralModel:
    """Immutable bundle of everything the envelope machinery needs.

    Instances are treated as read-only; the computation engine caches derived
    tables keyed by model identity.
    """

    support: SupportSpec
    thetas: ThetaGrid
    policies: PolicyGrid
    moments: MomentSpec
    gminus: FactualMap
    gstar: CounterfactualMap
    objective: Objective
    constants: ErrorBoundConstants
    mu_star: float
    name: str = "model"

    def __post_init__(self):
        mu = float(self.mu_star)
        object.__setattr__(self, "mu_star", mu)
        if not math.isfinite(mu) or mu < 0:
            raise ContractError(f"mu_star must be finite and nonnegative, got {mu}")
        floor = mu_star(self.constants, self.objective)
        if mu < floor - 1e-12:
            raise ContractError(
                f"mu_star={mu} is below the exactness floor {floor}"
            )

    @property
    def n_moments(self) -> int:
        return self.moments.n_moments

    def h_bar(self) -> float:
        """Computable uniform bound on the penalized integrand class."""
        obj = max(abs(self.objective.lb), abs(self.objective.ub))
        return obj + self.mu_star * float(sum(self.moments.bounds))

    def theta_value(self, theta_id: str) -> object:
        return self.thetas.value(theta_id)

    def policy_value(self, gamma_id: str) -> object:
        return self.policies.value(gamma_id)


def h_integrand(
    model: StructuralModel,
    y: Atom,
    z: Atom,
    theta_id: str,
    gamma_id: str,
    lam: Sequence[float],
    side: str = "lower",
) -> float:
    """Reference evaluation of the penalized integrand at one observed cell.

    Lower side: inf over u in G-(y, z, theta) of
    [inf over y* in G*(y, z, u, theta, gamma) of phi] + mu* * sum_j lam_j m_j.
    Upper side mirrors it with suprema and the penalty subtracted. Empty sets
    follow the inf/sup conventions, so an empty factual cell returns +inf on the
    lower side and -inf on the upper side.
    """
    if side not in ("lower", "upper"):
        raise ContractError(f"side must be 'lower' or 'upper', got {side!r}")
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (model.n_moments,):
        raise ContractError(
            f"lambda has shape {lam.shape}, expected ({model.n_moments},)"
        )
    if not np.all((lam == 0.0) | (lam == 1.0)):
        raise ContractError("lambda entries must be 0 or 1")
    y = tuple(float(c) for c in y)
    z = tuple(float(c) for c in z)
    theta = model.theta_value(theta_id)
    gamma = model.policy_value(gamma_id)
    lower = side == "lower"

    best = math.inf if lower else -math.inf
    for u in model.gminus.fn(y, z, theta):
        u = tuple(float(c) for c in u)
        stars = [tuple(float(c) for c in s) for s in model.gstar.fn(y, z, u, theta, gamma)]
        vals = [model.objective.fn(s, y, z, u) for s in stars]
        if lower:
            inner = min(vals) if vals else math.inf
        else:
            inner = max(vals) if vals else -math.inf
        pen = model.mu_star * float(
            lam @ np.asarray(model.moments.fn(y, z, u, theta), dtype=float)
        )
        val = inner + pen if lower else inner - pen
        best = min(best, val) if lower else max(best, val)
    return best


@dataclass(frozen=True, eq=False)
class Sample:
    """An observed sample of (y, z) atom pairs, validated against a support."""

    rows: tuple[tuple[Atom, Atom], ...]

    def __post_init__(self):
        rows = tuple(
            (tuple(float(c) for c in y), tuple(float(c) for c in z))
            for y, z in self.rows
        )
        object.__setattr__(self, "rows", rows)
        if not rows:
            raise ContractError("sample is empty")

    @property
    def n(self) -> int:
        return len(self.rows)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Atom, Atom]], support: SupportSpec) -> "Sample":
        rows = []
        for k, (y, z) in enumerate(pairs):
            y = tuple(float(c) for c in (y if isinstance(y, tuple) else (y,)))
            z = tuple(float(c) for c in (z if isinstance(z, tuple) else (z,)))
            if y not in support._y_index:
                raise ContractError(f"sample row {k}: y atom {y} not in support")
            if z not in support._z_index:
                raise ContractError(f"sample row {k}: z atom {z} not in support")
            rows.append((y, z))
        return cls(rows=tuple(rows))


@dataclass
class ValidationReport:
    """Outcome of validate_model: a pass flag plus human-readable issues."""

    ok: bool
    issues: list[str] = field(default_factory=list)
    checked: dict = field(default_factory=dict)
    partial: bool = False


def validate_model(model: StructuralModel, max_checks: int = 2_000_000) -> ValidationReport:
    """Exhaustively spot-check a model's semantic contracts.

    Never raises; findings come back in the report. Checks moment bounds on the
    full (y, z, u, theta) grid, support-map ranges, objective bounds and the
    penalty floor. Very large grids are subsampled deterministically and the
    report is marked partial.
    """
    issues: list[str] = []
    sup = model.support
    n_y, n_z, n_u = len(sup.y_atoms), len(sup.z_atoms), len(sup.u_atoms)
    n_t, n_g = len(model.thetas), len(model.policies)
    J = model.n_moments

    total = n_t * n_y * n_z * n_u
    stride = max(1, int(math.ceil(total / max_checks)))
    partial = stride > 1
    bounds = np.asarray(model.moments.bounds, dtype=float)

    checked_moments = 0
    idx = 0
    for t_i, theta in enumerate(model.thetas.values):
        for y in sup.y_atoms:
            for z in sup.z_atoms:
                for u in sup.u_atoms:
                    idx += 1
                    if (idx - 1) % stride:
                        continue
                    try:
                        m = np.asarray(model.moments.fn(y, z, u, theta), dtype=float)
                    except Exception as exc:  # noqa: BLE001
                        issues.append(
                            f"moment evaluation failed at theta={model.thetas.ids[t_i]} "
                            f"y={y} z={z} u={u}: {exc}"
                        )
                        continue
                    checked_moments += 1
                    if m.shape != (J,):
                        issues.append(
                            f"moment vector has shape {m.shape}, expected ({J},) at "
                            f"theta={model.thetas.ids[t_i]} y={y} z={z} u={u}"
                        )
                        continue
                    bad = np.abs(m) > bounds + 1e-12
                    if np.any(bad):
                        j = int(np.argmax(bad))
                        issues.append(
                            f"moment {model.moments.labels[j]} exceeds its bound at "
                            f"theta={model.thetas.ids[t_i]} y={y} z={z} u={u}: "
                            f"|{m[j]}| > {bounds[j]}"
                        )

    checked_cells = 0
    for t_i, theta in enumerate(model.thetas.values):
        for y in sup.y_atoms:
            for z in sup.z_atoms:
                try:
                    us = [tuple(float(c) for c in u) for u in model.gminus.fn(y, z, theta)]
                except Exception as exc:  # noqa: BLE001
                    issues.append(
                        f"factual map failed at theta={model.thetas.ids[t_i]} y={y} z={z}: {exc}"
                    )
                    continue
                checked_cells += 1
                for u in us:
                    if u not in sup._u_index:
                        issues.append(
                            f"factual map returned atom {u} outside the u support at "
                            f"theta={model.thetas.ids[t_i]} y={y} z={z}"
                        )

    checked_stars = 0
    star_total = n_t * n_g * n_y * n_z * n_u
    star_stride = max(1, int(math.ceil(star_total / max_checks)))
    partial = partial or star_stride > 1
    idx = 0
    for t_i, theta in enumerate(model.thetas.values):
        for g_i, gamma in enumerate(model.policies.values):
            for y in sup.y_atoms:
                for z in sup.z_atoms:
                    for u in sup.u_atoms:
                        idx += 1
                        if (idx - 1) % star_stride:
                            continue
                        try:
                            stars = [
                                tuple(float(c) for c in s)
                                for s in model.gstar.fn(y, z, u, theta, gamma)
                            ]
                        except Exception as exc:  # noqa: BLE001
                            issues.append(
                                f"counterfactual map failed at theta={model.thetas.ids[t_i]} "
                                f"gamma={model.policies.ids[g_i]} y={y} z={z} u={u}: {exc}"
                            )
                            continue
                        checked_stars += 1
                        for s in stars:
                            if s not in sup._ystar_index:
                                issues.append(
                                    f"counterfactual map returned atom {s} outside the y* "
                                    f"support at theta={model.thetas.ids[t_i]} "
                                    f"gamma={model.policies.ids[g_i]} y={y} z={z} u={u}"
                                )

    checked_obj = 0
    obj_total = len(sup.ystar_atoms) * n_y * n_z * n_u
    obj_stride = max(1, int(math.ceil(obj_total / max_checks)))
    partial = partial or obj_stride > 1
    idx = 0
    for s in sup.ystar_atoms:
        for y in sup.y_atoms:
            for z in sup.z_atoms:
                for u in sup.u_atoms:
                    idx += 1
                    if (idx - 1) % obj_stride:
                        continue
                    try:
                        v = float(model.objective.fn(s, y, z, u))
                    except Exception as exc:  # noqa: BLE001
                        issues.append(f"objective failed at ystar={s} y={y} z={z} u={u}: {exc}")
                        continue
                    checked_obj += 1
                    if v < model.objective.lb - 1e-12 or v > model.objective.ub + 1e-12:
                        issues.append(
                            f"objective value {v} outside [{model.objective.lb}, "
                            f"{model.objective.ub}] at ystar={s} y={y} z={z} u={u}"
                        )

    try:
        floor = mu_star(model.constants, model.objective)
        if model.mu_star < floor - 1e-12:
            issues.append(f"mu_star={model.mu_star} below the exactness floor {floor}")
    except ContractError as exc:
        issues.append(str(exc))

    return ValidationReport(
        ok=not issues,
        issues=issues,
        checked={
            "moment_points": checked_moments,
            "factual_cells": checked_cells,
            "counterfactual_points": checked_stars,
            "objective_points": checked_obj,
        },
        partial=partial,
    )
