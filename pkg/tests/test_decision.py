"""Selection rule and regret certificates."""

import math

import numpy as np
import pytest

from polenv import (
    ContractError,
    Sample,
    certificate_cn,
    certificate_value,
    default_epsilon,
    eme_from_curve,
    eme_select,
    envelope_curve,
    true_regret,
)

from conftest import make_tabular, random_pe_truth


def test_certificate_closed_form_fixture():
    c = certificate_value(r_n=0.1, h_bar=1.0, n=100, kappa=0.9, epsilon=0.01)
    assert c == pytest.approx(1.1060812758675915, rel=1e-12)
    assert round(c, 4) == 1.1061


def test_certificate_small_kappa_limit():
    # as kappa -> 0 the deviation term vanishes, leaving 4 r_n + 5 epsilon
    c = certificate_value(r_n=0.1, h_bar=1.0, n=100, kappa=1e-12, epsilon=0.01)
    assert c == pytest.approx(0.45, abs=1e-6)


def test_certificate_monotone_in_kappa_and_n():
    lo = certificate_value(0.1, 1.0, 100, 0.5, 0.01)
    hi = certificate_value(0.1, 1.0, 100, 0.99, 0.01)
    assert hi > lo
    big_n = certificate_value(0.1, 1.0, 10000, 0.5, 0.01)
    assert big_n < lo


def test_certificate_validation():
    good = dict(r_n=0.1, h_bar=1.0, n=100, kappa=0.9, epsilon=0.01)
    for bad in (
        dict(good, kappa=0.0),
        dict(good, kappa=1.0),
        dict(good, n=0),
        dict(good, r_n=-0.1),
        dict(good, r_n=float("inf")),
        dict(good, h_bar=0.0),
        dict(good, epsilon=-1e-9),
    ):
        with pytest.raises(ContractError):
            certificate_value(**bad)


def test_eme_ties_break_to_first():
    assert eme_from_curve([0.2, 0.5, 0.5], 0.0) == "1"
    assert eme_from_curve([0.5, 0.2, 0.5], 0.0) == "0"
    assert eme_from_curve([0.2, 0.5, 0.5], 0.0, gamma_ids=["a", "b", "c"]) == "b"
    assert eme_from_curve({"a": 0.2, "b": 0.5, "c": 0.5}, 0.1) == "b"


def test_eme_skips_non_finite_policies():
    assert eme_from_curve([-math.inf, 0.3, 0.1], 0.0) == "1"
    with pytest.raises(ContractError):
        eme_from_curve([-math.inf, -math.inf], 0.0)
    with pytest.raises(ContractError):
        eme_from_curve([], 0.0)
    with pytest.raises(ContractError):
        eme_from_curve([0.1, 0.2], -1e-9)


def test_default_epsilon_is_relative_to_objective_range():
    model = make_tabular(objective_values=(0.0, 1.0))
    assert default_epsilon(model) == pytest.approx(1e-3)


def test_eme_select_deterministic_on_program_eval():
    truth = random_pe_truth(5)
    model = truth.build_model()
    sample = Sample.from_pairs(truth.sample(80, seed=11).rows, model.support)
    first = eme_select(model, sample)
    second = eme_select(model, sample)
    assert first.gamma_id == second.gamma_id
    assert first.gamma_id in model.policies.ids
    assert first.epsilon == pytest.approx(default_epsilon(model))
    assert first.curve.lower_of(first.gamma_id) == pytest.approx(
        max(v for v in first.curve.lower if np.isfinite(v))
    )


def test_certificate_end_to_end_reproducible():
    truth = random_pe_truth(5)
    model = truth.build_model()
    sample = Sample.from_pairs(truth.sample(60, seed=3).rows, model.support)
    cert = certificate_cn(model, sample, kappa=0.9, seed=21)
    again = certificate_cn(model, sample, kappa=0.9, seed=21)
    assert cert.c_n == again.c_n
    assert cert.r_n == again.r_n
    assert cert.valid
    assert cert.n == 60
    assert cert.class_rows == len(model.thetas) * len(model.policies.ids) * 2 ** 20
    assert cert.dropped_rows == 0
    assert cert.recomputed() == pytest.approx(cert.c_n, rel=1e-15)
    assert cert.c_n >= 4.0 * cert.r_n + 5.0 * cert.epsilon
    other = certificate_cn(model, sample, kappa=0.9, seed=22)
    assert other.gamma_id == cert.gamma_id
    assert other.r_n != cert.r_n


def test_true_regret_matches_curve():
    truth = random_pe_truth(5)
    model = truth.build_model()
    pop = truth.population()
    curve = envelope_curve(model, pop)
    sup = max(v for v in curve.lower if np.isfinite(v))
    for gid in model.policies.ids:
        reg = true_regret(model, pop, gid)
        val = curve.lower_of(gid)
        if math.isfinite(val):
            assert reg == pytest.approx(max(0.0, sup - val), abs=1e-12)
        else:
            assert reg == math.inf
    best = eme_from_curve(curve.lower, 0.0, curve.gamma_ids)
    assert true_regret(model, pop, best) == 0.0
    with pytest.raises(ContractError):
        true_regret(model, pop, "missing")
