from __future__ import annotations

import numpy as np
import pytest

from medex.kb import build_lexicon
from medex.textnorm import NormalizationPipeline

from helpers import coded_kb, tiny_kb


@pytest.fixture
def rng():
    return np.random.default_rng(20240911)


@pytest.fixture
def identity_pipe():
    return NormalizationPipeline(abbreviations={}, lemmas={})


@pytest.fixture
def medical_pipe():
    """Pipeline with a couple of abbreviations and lemmas worth exercising."""
    return NormalizationPipeline.from_tables(
        abbreviations={
            "mi": "myocardial infarction",
            "sob": "shortness of breath",
            "r/o": "rule out",
        },
        lemmas={"pains": "pain", "fevers": "fever", "attacks": "attack"},
    )


@pytest.fixture
def kb6():
    return tiny_kb()


@pytest.fixture
def kb50():
    return coded_kb(50)


@pytest.fixture
def lex6(kb6, identity_pipe):
    return build_lexicon(kb6, identity_pipe)
