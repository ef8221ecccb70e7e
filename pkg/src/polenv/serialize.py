"""Reading and writing the on-disk formats.

Model documents are JSON with a ``kind`` field: "tabular" spells out every
table of a small model directly, while "program_eval" and "sdc" hold builder
configurations for the bundled examples. Truth documents ("program_eval_truth",
"sdc_truth") describe data-generating processes for simulation. Samples and
weight tables travel as CSV whose header must match the model's column names
exactly. All JSON emitted here carries a ``spec_version`` stamp, and non-finite
numbers are written as null.
"""

from __future__ import annotations

import csv
import json
import math
from typing import Optional

import numpy as np

from .decision import Certificate, EmeSelection
from .envelope import EnvelopeCurve, WeightedMeasure
from .errors import ContractError
from .levelset import LevelSetResult, StepBound
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
from .program_eval import PeTruth, ProgramEvalConfig, build_program_evaluation
from .sdc import SdcConfig, SdcTruth, build_sdc, sdc_support

SPEC_VERSION = "0.1.0"

MODEL_KINDS = ("tabular", "program_eval", "sdc")
TRUTH_KINDS = ("program_eval_truth", "sdc_truth")


def _tuplify(x):
    if isinstance(x, list):
        return tuple(_tuplify(v) for v in x)
    return x


def _require(doc: dict, keys, kind: str, optional=()):
    missing = [k for k in keys if k not in doc]
    if missing:
        raise ContractError(f"{kind} document is missing keys: {', '.join(missing)}")
    extra = [k for k in doc if k not in keys and k not in optional and k not in ("kind", "spec_version")]
    if extra:
        raise ContractError(f"{kind} document has unknown keys: {', '.join(extra)}")


def load_document(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ContractError(f"cannot read JSON document {path}: {exc}") from None
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ContractError(f"document {path} must be a JSON object with a 'kind' field")
    return doc


def _pe_config(doc: dict) -> ProgramEvalConfig:
    _require(
        doc,
        ("z0_values", "outcome_atoms", "u_bins", "g_tables", "t_tables"),
        "program_eval",
        optional=("x_values", "policies", "mu_star_value", "name"),
    )
    return ProgramEvalConfig(
        z0_values=_tuplify(doc["z0_values"]),
        outcome_atoms=_tuplify(doc["outcome_atoms"]),
        u_bins=int(doc["u_bins"]),
        g_tables=_tuplify(doc["g_tables"]),
        t_tables=_tuplify(doc["t_tables"]),
        x_values=_tuplify(doc.get("x_values", [0.0])),
        policies=_tuplify(doc.get("policies", "all")),
        mu_star_value=doc.get("mu_star_value"),
        name=doc.get("name", "program_eval"),
    )


def _sdc_config(doc: dict) -> SdcConfig:
    _require(
        doc,
        ("n_players", "z_values", "u_bins", "coeff_tables", "L0", "L", "L_prime"),
        "sdc",
        optional=("basis", "policies", "target_player", "mu_star_value", "name"),
    )
    return SdcConfig(
        n_players=int(doc["n_players"]),
        z_values=_tuplify(doc["z_values"]),
        u_bins=int(doc["u_bins"]),
        coeff_tables=_tuplify(doc["coeff_tables"]),
        L0=float(doc["L0"]),
        L=float(doc["L"]),
        L_prime=float(doc["L_prime"]),
        basis=doc.get("basis", "per_z"),
        policies=_tuplify(doc.get("policies", "all")),
        target_player=int(doc.get("target_player", 0)),
        mu_star_value=doc.get("mu_star_value"),
        name=doc.get("name", "sdc"),
    )


def _tabular_model(doc: dict) -> StructuralModel:
    _require(
        doc,
        ("support", "thetas", "policies", "moments", "gminus", "gstar", "objective", "constants"),
        "tabular",
        optional=("mu_star", "name"),
    )
    sup_doc = doc["support"]
    for part in ("y", "z", "u", "ystar"):
        if part not in sup_doc or "atoms" not in sup_doc[part]:
            raise ContractError(f"tabular support is missing '{part}' atoms")
    support = SupportSpec(
        y_atoms=_tuplify(sup_doc["y"]["atoms"]),
        z_atoms=_tuplify(sup_doc["z"]["atoms"]),
        u_atoms=_tuplify(sup_doc["u"]["atoms"]),
        ystar_atoms=_tuplify(sup_doc["ystar"]["atoms"]),
        y_cols=_tuplify(sup_doc["y"].get("cols", ["y"])),
        z_cols=_tuplify(sup_doc["z"].get("cols", ["z"])),
        u_cols=_tuplify(sup_doc["u"].get("cols", ["u"])),
        ystar_cols=_tuplify(sup_doc["ystar"].get("cols", ["ystar"])),
    )
    theta_ids = tuple(str(t) for t in doc["thetas"]["ids"])
    gamma_ids = tuple(str(g) for g in doc["policies"]["ids"])
    thetas = ThetaGrid(ids=theta_ids, values=theta_ids)
    policies = PolicyGrid(ids=gamma_ids, values=gamma_ids)

    mom_doc = doc["moments"]
    labels = tuple(str(s) for s in mom_doc["labels"])
    bounds = tuple(float(b) for b in mom_doc["bounds"])
    n_y, n_z, n_u, n_j = (
        len(support.y_atoms),
        len(support.z_atoms),
        len(support.u_atoms),
        len(labels),
    )
    mom_tables = {}
    for tid in theta_ids:
        if tid not in mom_doc["values"]:
            raise ContractError(f"tabular moments missing values for theta {tid!r}")
        arr = np.asarray(mom_doc["values"][tid], dtype=np.float64)
        if arr.shape != (n_y, n_z, n_u, n_j):
            raise ContractError(
                f"moment table for theta {tid!r} has shape {arr.shape}, "
                f"expected {(n_y, n_z, n_u, n_j)}"
            )
        mom_tables[tid] = arr

    def moments_fn(y, z, u, theta):
        return mom_tables[theta][support.y_index(y), support.z_index(z), support.u_index(u)]

    gm_tables = {}
    for tid in theta_ids:
        if tid not in doc["gminus"]:
            raise ContractError(f"tabular gminus missing table for theta {tid!r}")
        tab = doc["gminus"][tid]
        if len(tab) != n_y or any(len(row) != n_z for row in tab):
            raise ContractError(f"gminus table for theta {tid!r} must be {n_y} x {n_z}")
        gm_tables[tid] = [
            [tuple(support.u_atoms[int(i)] for i in cell) for cell in row] for row in tab
        ]

    def gminus_fn(y, z, theta):
        return gm_tables[theta][support.y_index(y)][support.z_index(z)]

    gs_tables = {}
    for tid in theta_ids:
        if tid not in doc["gstar"]:
            raise ContractError(f"tabular gstar missing table for theta {tid!r}")
        for gid in gamma_ids:
            if gid not in doc["gstar"][tid]:
                raise ContractError(
                    f"tabular gstar missing table for theta {tid!r}, policy {gid!r}"
                )
            tab = doc["gstar"][tid][gid]
            if len(tab) != n_y or any(
                len(row) != n_z or any(len(cell) != n_u for cell in row) for row in tab
            ):
                raise ContractError(
                    f"gstar table for ({tid!r}, {gid!r}) must be {n_y} x {n_z} x {n_u}"
                )
            gs_tables[(tid, gid)] = [
                [
                    [tuple(support.ystar_atoms[int(i)] for i in pt) for pt in cell]
                    for cell in row
                ]
                for row in tab
            ]

    def gstar_fn(y, z, u, theta, gamma):
        return gs_tables[(theta, gamma)][support.y_index(y)][support.z_index(z)][
            support.u_index(u)
        ]

    obj_doc = doc["objective"]
    obj_values = tuple(float(v) for v in obj_doc["values"])
    if len(obj_values) != len(support.ystar_atoms):
        raise ContractError("objective needs one value per counterfactual outcome atom")

    def obj_fn(s, y, z, u):
        return obj_values[support.ystar_index(s)]

    objective = Objective(fn=obj_fn, lb=float(obj_doc["lb"]), ub=float(obj_doc["ub"]))
    cons = doc["constants"]
    constants = ErrorBoundConstants(
        c1=float(cons["c1"]), c2=float(cons["c2"]), delta=float(cons["delta"])
    )
    from .model import mu_star as mu_floor

    mu = float(doc.get("mu_star", mu_floor(constants, objective)))
    return StructuralModel(
        support=support,
        thetas=thetas,
        policies=policies,
        moments=MomentSpec(labels=labels, bounds=bounds, fn=moments_fn),
        gminus=FactualMap(fn=gminus_fn),
        gstar=CounterfactualMap(fn=gstar_fn),
        objective=objective,
        constants=constants,
        mu_star=mu,
        name=str(doc.get("name", "tabular")),
    )


def model_from_document(doc: dict, sample: Optional[Sample] = None) -> StructuralModel:
    kind = doc.get("kind")
    if kind == "tabular":
        return _tabular_model(doc)
    if kind == "program_eval":
        return build_program_evaluation(_pe_config(doc))
    if kind == "sdc":
        if sample is None:
            raise ContractError(
                "the strategic-choice builder estimates tau-hat from data; pass a sample"
            )
        return build_sdc(_sdc_config(doc), sample)
    raise ContractError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def document_support(doc: dict) -> SupportSpec:
    """Support implied by a model document, available before any sample is read."""
    kind = doc.get("kind")
    if kind == "tabular":
        return _tabular_model(doc).support
    if kind == "program_eval":
        return build_program_evaluation(_pe_config(doc)).support
    if kind == "sdc":
        return sdc_support(_sdc_config(doc))
    raise ContractError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def truth_support(truth) -> SupportSpec:
    if isinstance(truth, PeTruth):
        return build_program_evaluation(truth.config).support
    return sdc_support(truth.config)


def truth_from_document(doc: dict):
    kind = doc.get("kind")
    if kind == "program_eval_truth":
        _require(doc, ("config", "g0", "z_probs", "u_pair_probs"), kind)
        cfg_doc = dict(doc["config"])
        cfg_doc.setdefault("kind", "program_eval")
        return PeTruth(
            config=_pe_config(cfg_doc),
            g0=_tuplify(doc["g0"]),
            z_probs=_tuplify(doc["z_probs"]),
            u_pair_probs=_tuplify(doc["u_pair_probs"]),
        )
    if kind == "sdc_truth":
        _require(doc, ("config", "theta0", "z_probs"), kind, optional=("selection",))
        cfg_doc = dict(doc["config"])
        cfg_doc.setdefault("kind", "sdc")
        return SdcTruth(
            config=_sdc_config(cfg_doc),
            theta0=_tuplify(doc["theta0"]),
            z_probs=_tuplify(doc["z_probs"]),
            selection=doc.get("selection", "first"),
        )
    raise ContractError(f"unknown truth kind {kind!r}; expected one of {TRUTH_KINDS}")


def _float_cell(text: str, path: str, line: int, col: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ContractError(
            f"{path} line {line}: column {col!r} has non-numeric value {text!r}"
        ) from None


def read_sample(path: str, support: SupportSpec) -> Sample:
    """Sample CSV: header must equal the y columns then z columns, exactly."""
    expected = list(support.y_cols) + list(support.z_cols)
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ContractError(f"cannot read sample {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise ContractError(
                f"{path}: sample header must be exactly {','.join(expected)}, "
                f"got {','.join(header) if header else '(empty file)'}"
            )
        ny = len(support.y_cols)
        pairs = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise ContractError(f"{path} line {lineno}: expected {len(expected)} fields")
            vals = [_float_cell(c, path, lineno, expected[i]) for i, c in enumerate(row)]
            pairs.append((tuple(vals[:ny]), tuple(vals[ny:])))
    if not pairs:
        raise ContractError(f"{path}: sample has no data rows")
    try:
        return Sample.from_pairs(pairs, support)
    except ContractError as exc:
        raise ContractError(f"{path}: {exc}") from None


def write_sample(path: str, sample: Sample, support: SupportSpec) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(support.y_cols) + list(support.z_cols))
        for y, z in sample.rows:
            writer.writerow([repr(v) for v in y] + [repr(v) for v in z])


def read_weights(path: str, support: SupportSpec) -> WeightedMeasure:
    """Weights CSV: y columns, z columns, then a 'weight' column. Missing cells are zero."""
    expected = list(support.y_cols) + list(support.z_cols) + ["weight"]
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ContractError(f"cannot read weights {path}: {exc}") from None
    w = np.zeros((len(support.y_atoms), len(support.z_atoms)), dtype=np.float64)
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise ContractError(
                f"{path}: weights header must be exactly {','.join(expected)}"
            )
        ny = len(support.y_cols)
        nz = len(support.z_cols)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise ContractError(f"{path} line {lineno}: expected {len(expected)} fields")
            vals = [_float_cell(c, path, lineno, expected[i]) for i, c in enumerate(row)]
            y = tuple(vals[:ny])
            z = tuple(vals[ny : ny + nz])
            try:
                iy = support.y_index(y)
                iz = support.z_index(z)
            except KeyError:
                raise ContractError(
                    f"{path} line {lineno}: atom pair ({y}, {z}) not in the model support"
                ) from None
            w[iy, iz] += vals[-1]
    try:
        return WeightedMeasure(weights=w)
    except ContractError as exc:
        raise ContractError(f"{path}: {exc}") from None


def write_weights(path: str, measure: WeightedMeasure, support: SupportSpec) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(support.y_cols) + list(support.z_cols) + ["weight"])
        for iy, y in enumerate(support.y_atoms):
            for iz, z in enumerate(support.z_atoms):
                wc = float(measure.weights[iy, iz])
                if wc > 0.0:
                    writer.writerow([repr(v) for v in y] + [repr(v) for v in z] + [repr(wc)])


def _num(v):
    """Floats for JSON: non-finite becomes null."""
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def write_curve_csv(path: str, curve: EnvelopeCurve) -> None:
    """Exactly five columns: gamma, lower, upper, theta_lower, theta_upper."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gamma", "lower", "upper", "theta_lower", "theta_upper"])
        for i, gid in enumerate(curve.gamma_ids):
            writer.writerow(
                [
                    gid,
                    repr(float(curve.lower[i])),
                    repr(float(curve.upper[i])),
                    curve.theta_lower[i] or "",
                    curve.theta_upper[i] or "",
                ]
            )


def curve_payload(curve: EnvelopeCurve) -> dict:
    rows = []
    for i, gid in enumerate(curve.gamma_ids):
        rows.append(
            {
                "gamma": gid,
                "lower": _num(curve.lower[i]),
                "upper": _num(curve.upper[i]),
                "theta_lower": curve.theta_lower[i],
                "theta_upper": curve.theta_upper[i],
            }
        )
    return {"policies": rows, "heuristic": bool(curve.heuristic)}


def selection_payload(sel: EmeSelection) -> dict:
    out = curve_payload(sel.curve)
    out.update({"gamma": sel.gamma_id, "epsilon": sel.epsilon})
    return out


def certificate_payload(cert: Certificate) -> dict:
    return {
        "gamma": cert.gamma_id,
        "c_n": _num(cert.c_n),
        "r_n": _num(cert.r_n),
        "h_bar": cert.h_bar,
        "n": cert.n,
        "kappa": cert.kappa,
        "epsilon": cert.epsilon,
        "seed": cert.seed,
        "class_rows": cert.class_rows,
        "dropped_rows": cert.dropped_rows,
        "valid": cert.valid,
    }


def step_payload(step: StepBound) -> dict:
    return {
        "hi": [float(v) for v in step.hi],
        "lo": [float(v) for v in step.lo],
        "values": [_num(v) for v in step.values],
        "subset_sizes": list(step.subset_sizes),
        "dropped_rows": step.dropped_rows,
        "heuristic": step.heuristic,
    }


def levelset_payload(res: LevelSetResult) -> dict:
    return {
        "delta": res.delta,
        "delta_star": res.delta_star,
        "a": res.a,
        "b": res.b,
        "kappa": res.kappa,
        "inner": list(res.inner),
        "outer": list(res.outer),
        "regrets": {g: _num(v) for g, v in res.regrets.items()},
        "seed": res.seed,
        "valid": res.valid,
        "step": step_payload(res.step) if res.step is not None else None,
    }


def json_text(payload: dict) -> str:
    out = dict(payload)
    out.setdefault("spec_version", SPEC_VERSION)
    return json.dumps(out, indent=2, sort_keys=True)


def write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json_text(payload))
        fh.write("\n")
