"""Dispatch helpers over the bundled data-generating processes."""

from __future__ import annotations

from typing import Optional, Union

from .errors import ContractError
from .model import Sample, StructuralModel
from .program_eval import PeTruth
from .sdc import SdcTruth

Truth = Union[PeTruth, SdcTruth]


def draw_sample(truth: Truth, n: int, seed: int) -> Sample:
    if n < 1:
        raise ContractError(f"sample size must be positive, got {n}")
    return truth.sample(n, seed)


def population_measure(truth: Truth):
    return truth.population()


def model_for(truth: Truth, sample: Optional[Sample] = None) -> StructuralModel:
    """Model implied by a truth object.

    The strategic-choice builder estimates tau-hat from data, so it needs a
    sample; the program-evaluation builder is sample-free.
    """
    if isinstance(truth, PeTruth):
        return truth.build_model()
    if sample is None:
        raise ContractError("this builder estimates constants from data; pass a sample")
    return truth.build_model(sample)
