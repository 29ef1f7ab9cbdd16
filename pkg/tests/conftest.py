import numpy as np
import pytest

from affectvlm.datagen import CorpusSpec, generate_corpus


@pytest.fixture(scope="session")
def small_spec():
    return CorpusSpec(n_subjects=10, frames_per_sequence=3, points_per_face=512,
                      seed=7, identity_scale=0.1, expression_scale=1.0)


@pytest.fixture(scope="session")
def small_corpus(small_spec):
    return generate_corpus(small_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
