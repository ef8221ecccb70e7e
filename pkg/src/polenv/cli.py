"""Command-line interface.

Every subcommand reads a JSON model or truth document (``--model``), most read
a sample CSV (``--sample``), and results go to ``--out`` or stdout. Exit codes:
0 on success, 2 when inputs violate a contract, 3 when a computation is
refused because it would exceed a built-in budget.
"""

from __future__ import annotations

import sys

import click

from .complexity import RademacherDraw, rademacher_hlb
from .decision import certificate_cn, eme_select
from .envelope import empirical_measure, envelope_curve
from .errors import BudgetError, ContractError
from .experiment import (
    EXPERIMENT_KINDS,
    default_coverage_truth,
    default_rate_truth,
    run_experiment,
)
from .levelset import level_set_sandwich
from .model import validate_model
from .oracle import oracle_envelope
from .serialize import (
    certificate_payload,
    curve_payload,
    document_support,
    json_text,
    levelset_payload,
    load_document,
    model_from_document,
    read_sample,
    read_weights,
    selection_payload,
    truth_from_document,
    truth_support,
    write_curve_csv,
    write_json,
    write_sample,
)
from .simulate import draw_sample

SEED = click.IntRange(0, 2**64 - 1)


def _load_model_and_sample(model_path, sample_path, weights_path=None, need_sample=True):
    doc = load_document(model_path)
    support = document_support(doc)
    sample = read_sample(sample_path, support) if sample_path else None
    if need_sample and sample is None:
        raise ContractError("this command needs --sample")
    model = model_from_document(doc, sample)
    measure = None
    if weights_path:
        if sample is not None:
            raise ContractError("pass either --sample or --weights, not both")
        measure = read_weights(weights_path, support)
    elif sample is not None:
        measure = empirical_measure(model, sample)
    return model, sample, measure


def _emit_json(payload: dict, out) -> None:
    if out:
        write_json(out, payload)
    else:
        click.echo(json_text(payload))


def _emit_curve(curve, out, fmt) -> None:
    if fmt == "csv":
        if not out:
            raise ContractError("csv output needs --out")
        write_curve_csv(out, curve)
    else:
        _emit_json(curve_payload(curve), out)


@click.group()
def cli():
    """Sharp bounds on counterfactual policy transforms, robust policy choice
    and finite-sample guarantees over finite structural models."""


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--sample", "sample_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None)
def build(model_path, sample_path, out):
    """Build a model from a document and report its shape and constants."""
    model, _, _ = _load_model_and_sample(model_path, sample_path, need_sample=False)
    report = validate_model(model)
    sup = model.support
    payload = {
        "name": model.name,
        "n_thetas": len(model.thetas.ids),
        "n_policies": len(model.policies.ids),
        "n_moments": model.n_moments,
        "n_y_atoms": len(sup.y_atoms),
        "n_z_atoms": len(sup.z_atoms),
        "n_u_atoms": len(sup.u_atoms),
        "n_ystar_atoms": len(sup.ystar_atoms),
        "moment_labels": list(model.moments.labels),
        "constants": {
            "c1": model.constants.c1,
            "c2": model.constants.c2,
            "delta": model.constants.delta,
        },
        "mu_star": model.mu_star,
        "h_bar": model.h_bar(),
        "validation": {
            "ok": report.ok,
            "issues": list(report.issues),
            "checked": report.checked,
            "partial": report.partial,
        },
    }
    _emit_json(payload, out)


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(),
              help="Truth document (a *_truth kind).")
@click.option("-n", "--n", "n_rows", required=True, type=click.IntRange(1, None))
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
def simulate(model_path, n_rows, seed, out, fmt):
    """Draw a sample from a truth document."""
    truth = truth_from_document(load_document(model_path))
    sample = draw_sample(truth, n_rows, seed)
    support = truth_support(truth)
    if fmt == "csv":
        if not out:
            raise ContractError("csv output needs --out")
        write_sample(out, sample, support)
    else:
        cols = list(support.y_cols) + list(support.z_cols)
        rows = [dict(zip(cols, list(y) + list(z))) for y, z in sample.rows]
        _emit_json({"columns": cols, "rows": rows, "seed": seed}, out)


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--sample", "sample_path", type=click.Path(), default=None)
@click.option("--weights", "weights_path", type=click.Path(), default=None,
              help="Weight-table CSV instead of a sample.")
@click.option("--out", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="json",
              show_default=True)
def envelope(model_path, sample_path, weights_path, out, fmt):
    """Lower and upper envelope values for every policy."""
    model, _, measure = _load_model_and_sample(
        model_path, sample_path, weights_path, need_sample=False
    )
    if measure is None:
        raise ContractError("pass --sample or --weights")
    curve = envelope_curve(model, measure)
    _emit_curve(curve, out, fmt)


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--sample", "sample_path", required=True, type=click.Path())
@click.option("--epsilon", type=float, default=None,
              help="Slack entering the guarantee; defaults to 1e-3 of the objective range.")
@click.option("--out", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="json",
              show_default=True)
def decide(model_path, sample_path, epsilon, out, fmt):
    """Select the empirical maximin policy."""
    model, sample, _ = _load_model_and_sample(model_path, sample_path)
    sel = eme_select(model, sample, epsilon=epsilon)
    if fmt == "csv":
        if not out:
            raise ContractError("csv output needs --out")
        write_curve_csv(out, sel.curve)
        click.echo(sel.gamma_id)
    else:
        _emit_json(selection_payload(sel), out)


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--sample", "sample_path", required=True, type=click.Path())
@click.option("--kappa", type=click.FloatRange(0, 1, min_open=True, max_open=True),
              default=0.9, show_default=True)
@click.option("--epsilon", type=float, default=None)
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def certify(model_path, sample_path, kappa, epsilon, seed, out):
    """Select a policy and attach its finite-sample regret certificate."""
    model, sample, _ = _load_model_and_sample(model_path, sample_path)
    cert = certificate_cn(model, sample, kappa, epsilon=epsilon, seed=seed)
    _emit_json(certificate_payload(cert), out)


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--sample", "sample_path", required=True, type=click.Path())
@click.option("--kappa", type=click.FloatRange(0, 1, min_open=True, max_open=True),
              default=0.9, show_default=True)
@click.option("--ratio", "a", type=click.FloatRange(1, None, min_open=True),
              default=2.0, show_default=True, help="Inner/outer ratio parameter a.")
@click.option("--delta", type=float, default=None,
              help="Regret level; defaults to a times the data-driven threshold.")
@click.option("--margin", type=float, default=0.01, show_default=True)
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def levelset(model_path, sample_path, kappa, a, delta, margin, seed, out):
    """Bracket the population regret level set from both sides."""
    model, sample, _ = _load_model_and_sample(model_path, sample_path)
    res = level_set_sandwich(
        model, sample, kappa=kappa, a=a, delta=delta, seed=seed, margin=margin
    )
    _emit_json(levelset_payload(res), out)


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--sample", "sample_path", required=True, type=click.Path())
@click.option("--differences", is_flag=True, default=False,
              help="Complexity of the difference class instead of the base class.")
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def complexity(model_path, sample_path, differences, seed, out):
    """Empirical Rademacher complexity of the penalized integrand class."""
    model, sample, _ = _load_model_and_sample(model_path, sample_path)
    draw = RademacherDraw.draw(sample.n, seed)
    result = rademacher_hlb(model, sample, draw, differences=differences)
    payload = {
        "r_n": result.value,
        "n": sample.n,
        "differences": differences,
        "seed": seed,
        "class_rows": result.class_rows,
        "dropped_rows": result.dropped_rows,
        "dropped_pairs": result.dropped_pairs,
        "heuristic": result.heuristic,
    }
    _emit_json(payload, out)


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--sample", "sample_path", type=click.Path(), default=None)
@click.option("--weights", "weights_path", type=click.Path(), default=None)
@click.option("--side", type=click.Choice(["lower", "upper", "both"]), default="both",
              show_default=True)
@click.option("--out", type=click.Path(), default=None)
def oracle(model_path, sample_path, weights_path, side, out):
    """Envelope values via the independent linear-programming route."""
    model, _, measure = _load_model_and_sample(
        model_path, sample_path, weights_path, need_sample=False
    )
    if measure is None:
        raise ContractError("pass --sample or --weights")
    rows = []
    for gid in model.policies.ids:
        row = {"gamma": gid}
        feasible = True
        if side in ("lower", "both"):
            lo = oracle_envelope(model, measure, gid, "lower")
            row["lower"] = lo.value if lo.feasible else None
            row["theta_lower"] = lo.theta_id
            feasible = feasible and lo.feasible
        if side in ("upper", "both"):
            up = oracle_envelope(model, measure, gid, "upper")
            row["upper"] = up.value if up.feasible else None
            row["theta_upper"] = up.theta_id
            feasible = feasible and up.feasible
        row["feasible"] = feasible
        rows.append(row)
    _emit_json({"policies": rows, "side": side}, out)


@cli.command()
@click.option("--kind", type=click.Choice(list(EXPERIMENT_KINDS)), required=True)
@click.option("--model", "model_path", type=click.Path(), default=None,
              help="Truth document; a bundled default is used when omitted.")
@click.option("--reps", type=click.IntRange(1, None), default=None)
@click.option("-n", "--n", "n_rows", type=click.IntRange(1, None), default=None)
@click.option("--kappa", type=click.FloatRange(0, 1, min_open=True, max_open=True),
              default=None)
@click.option("--ratio", "a", type=click.FloatRange(1, None, min_open=True), default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def experiment(kind, model_path, reps, n_rows, kappa, a, epsilon, seed, out):
    """Run a Monte Carlo study of one of the finite-sample guarantees."""
    if model_path:
        truth = truth_from_document(load_document(model_path))
    else:
        truth = default_rate_truth() if kind == "rate" else default_coverage_truth()
    kwargs = {"seed": seed}
    if reps is not None:
        kwargs["reps"] = reps
    if n_rows is not None and kind != "rate":
        kwargs["n"] = n_rows
    if kappa is not None and kind != "rate":
        kwargs["kappa"] = kappa
    if a is not None and kind in ("sandwich", "eme"):
        kwargs["a"] = a
    if epsilon is not None and kind != "sandwich":
        kwargs["epsilon"] = epsilon
    report = run_experiment(kind, truth, **kwargs)
    _emit_json(report.payload(), out)


def main():
    try:
        cli.main(standalone_mode=False)
    except ContractError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except BudgetError as exc:
        click.echo(f"refused: {exc}", err=True)
        sys.exit(3)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    sys.exit(0)


if __name__ == "__main__":
    main()
