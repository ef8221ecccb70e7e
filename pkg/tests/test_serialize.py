"""On-disk formats: model documents, CSV tables, JSON payloads."""

import json
import math

import numpy as np
import pytest

from polenv import (
    ContractError,
    EnvelopeCurve,
    PeTruth,
    SdcTruth,
    lower_envelope,
)
from polenv.serialize import (
    SPEC_VERSION,
    curve_payload,
    document_support,
    json_text,
    load_document,
    model_from_document,
    read_sample,
    read_weights,
    truth_from_document,
    write_json,
    write_sample,
    write_weights,
)

from conftest import brute_envelope, random_pe_truth


def pe_doc():
    return {
        "kind": "program_eval",
        "z0_values": [0.0, 1.0],
        "outcome_atoms": [0.0, 1.0],
        "u_bins": 5,
        "g_tables": [[0.3, 0.5], [0.5, 0.7]],
        "t_tables": [[0.5, 0.5]],
    }


def sdc_doc():
    return {
        "kind": "sdc",
        "n_players": 1,
        "z_values": [0.0, 1.0],
        "u_bins": 4,
        "coeff_tables": [[[-0.25, 0.25]]],
        "L0": 1.0,
        "L": 1.0,
        "L_prime": 1.0,
    }


def test_sample_csv_round_trip(tmp_path):
    truth = random_pe_truth(8)
    support = truth.build_model().support
    sample = truth.sample(60, seed=4)
    path = str(tmp_path / "sample.csv")
    write_sample(path, sample, support)
    with open(path) as fh:
        assert fh.readline().strip() == "y,d,z0,x"
    back = read_sample(path, support)
    assert back.rows == sample.rows


def test_sample_header_rejections(tmp_path):
    support = model_from_document(pe_doc()).support
    path = str(tmp_path / "bad.csv")

    def attempt(text):
        with open(path, "w") as fh:
            fh.write(text)
        with pytest.raises(ContractError):
            read_sample(path, support)

    attempt("y,d,z0\n0.0,1.0,0.0\n")                      # missing column
    attempt("d,y,z0,x\n1.0,0.0,0.0,0.0\n")                # reordered
    attempt("")                                            # empty file
    attempt("y,d,z0,x\n")                                  # no data rows
    attempt("y,d,z0,x\n0.0,one,0.0,0.0\n")                # non-numeric
    attempt("y,d,z0,x\n0.0,1.0,0.0\n")                    # short row
    attempt("y,d,z0,x\n9.0,1.0,0.0,0.0\n")                # atom off support


def test_weights_round_trip(tmp_path):
    truth = random_pe_truth(8)
    support = truth.build_model().support
    pop = truth.population()
    path = str(tmp_path / "weights.csv")
    write_weights(path, pop, support)
    back = read_weights(path, support)
    assert np.allclose(back.weights, pop.weights, atol=1e-12)


def test_weights_duplicates_add_and_validation(tmp_path):
    support = model_from_document(pe_doc()).support
    path = str(tmp_path / "w.csv")
    half = "0.0,1.0,0.0,0.0,0.25\n"
    with open(path, "w") as fh:
        fh.write("y,d,z0,x,weight\n" + half + half + "1.0,0.0,1.0,0.0,0.5\n")
    m = read_weights(path, support)
    assert m.weights.sum() == pytest.approx(1.0)
    assert m.weights[support.y_index((0.0, 1.0)), support.z_index((0.0, 0.0))] == 0.5
    with open(path, "w") as fh:
        fh.write("y,d,z0,x,weight\n0.0,1.0,0.0,0.0,0.4\n")
    with pytest.raises(ContractError):
        read_weights(path, support)  # does not sum to one
    with open(path, "w") as fh:
        fh.write("weight,y,d,z0,x\n0.4,0.0,1.0,0.0,0.0\n")
    with pytest.raises(ContractError):
        read_weights(path, support)  # header order is fixed


def tabular_doc():
    return {
        "kind": "tabular",
        "support": {
            "y": {"atoms": [[0.0], [1.0]]},
            "z": {"atoms": [[0.0]]},
            "u": {"atoms": [[0.0], [1.0]]},
            "ystar": {"atoms": [[0.0], [1.0]]},
        },
        "thetas": {"ids": ["t0"]},
        "policies": {"ids": ["p0"]},
        "moments": {
            "labels": ["m0"],
            "bounds": [0.5],
            "values": {"t0": [[[[0.5], [-0.5]]], [[[0.25], [-0.25]]]]},
        },
        "gminus": {"t0": [[[0, 1]], [[0, 1]]]},
        "gstar": {"t0": {"p0": [[[[0, 1], [1]]], [[[0], [0, 1]]]]}},
        "objective": {"values": [0.0, 1.0], "lb": 0.0, "ub": 1.0},
        "constants": {"c1": 1.0, "c2": 0.0, "delta": 1.0},
        "mu_star": 1.0,
    }


def test_tabular_document_builds_working_model(tmp_path):
    path = str(tmp_path / "model.json")
    with open(path, "w") as fh:
        json.dump(tabular_doc(), fh)
    doc = load_document(path)
    model = model_from_document(doc)
    assert model.n_moments == 1
    assert model.thetas.ids == ("t0",)
    from polenv import WeightedMeasure

    measure = WeightedMeasure(weights=np.array([[0.25], [0.75]]))
    got = lower_envelope(model, measure, "p0").value
    assert got == pytest.approx(brute_envelope(model, measure, "p0", "lower"), abs=1e-12)


def test_tabular_document_shape_errors():
    doc = tabular_doc()
    doc["moments"]["values"]["t0"] = [[[[0.5]]]]
    with pytest.raises(ContractError):
        model_from_document(doc)
    doc = tabular_doc()
    del doc["gstar"]["t0"]["p0"]
    with pytest.raises(ContractError):
        model_from_document(doc)
    doc = tabular_doc()
    del doc["objective"]
    with pytest.raises(ContractError):
        model_from_document(doc)


def test_pe_document_and_unknown_keys():
    model = model_from_document(pe_doc())
    assert model.n_moments == 20
    assert document_support(pe_doc()).y_cols == ("y", "d")
    bad = pe_doc()
    bad["surprise"] = 1
    with pytest.raises(ContractError):
        model_from_document(bad)
    missing = pe_doc()
    del missing["u_bins"]
    with pytest.raises(ContractError):
        model_from_document(missing)
    with pytest.raises(ContractError):
        model_from_document({"kind": "mystery"})


def test_sdc_document_needs_sample():
    with pytest.raises(ContractError):
        model_from_document(sdc_doc())
    support = document_support(sdc_doc())
    assert support.y_cols == ("y1",)
    from polenv import Sample

    rows = [((1.0,), (0.0,)), ((1.0,), (0.0,)), ((1.0,), (0.0,)), ((0.0,), (0.0,))]
    model = model_from_document(sdc_doc(), Sample(rows=tuple(rows)))
    assert model.n_moments == 8


def test_truth_documents():
    pe = {
        "kind": "program_eval_truth",
        "config": pe_doc(),
        "g0": [0.3, 0.5],
        "z_probs": [0.5, 0.5],
        "u_pair_probs": [[0.25, 0.25], [0.25, 0.25]],
    }
    truth = truth_from_document(pe)
    assert isinstance(truth, PeTruth)
    assert truth.g0 == (0.3, 0.5)
    sd = {
        "kind": "sdc_truth",
        "config": sdc_doc(),
        "theta0": [[-0.25, 0.25]],
        "z_probs": [0.5, 0.5],
    }
    truth2 = truth_from_document(sd)
    assert isinstance(truth2, SdcTruth)
    with pytest.raises(ContractError):
        truth_from_document({"kind": "program_eval"})


def test_json_stamp_and_non_finite_handling(tmp_path):
    text = json_text({"alpha": 1})
    doc = json.loads(text)
    assert doc["spec_version"] == SPEC_VERSION
    curve = EnvelopeCurve(
        gamma_ids=("a", "b"),
        lower=np.array([0.25, math.inf]),
        upper=np.array([0.75, -math.inf]),
        theta_lower=("t0", None),
        theta_upper=("t0", None),
    )
    payload = curve_payload(curve)
    assert payload["policies"][1]["lower"] is None
    assert payload["policies"][1]["upper"] is None
    assert payload["policies"][0]["lower"] == 0.25
    path = str(tmp_path / "out.json")
    write_json(path, payload)
    loaded = json.loads(open(path).read())
    assert loaded["spec_version"] == SPEC_VERSION
    assert loaded["policies"][1]["lower"] is None


def test_load_document_errors(tmp_path):
    path = str(tmp_path / "broken.json")
    with open(path, "w") as fh:
        fh.write("{not json")
    with pytest.raises(ContractError):
        load_document(path)
    with open(path, "w") as fh:
        fh.write("[1, 2]")
    with pytest.raises(ContractError):
        load_document(path)
    with pytest.raises(ContractError):
        load_document(str(tmp_path / "missing.json"))
