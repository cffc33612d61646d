"""Shared fixtures: small synthetic worlds reused across test modules."""

import pytest

from flowinfill import ToyCorpusConfig, gen_corpus, toy_vocabulary


@pytest.fixture(scope="session")
def vocab():
    return toy_vocabulary()


@pytest.fixture(scope="session")
def small_world():
    config = ToyCorpusConfig(
        n_samples=24, n_speakers=4, n_words=12, noise_std=0.1, seed=5, split="unit"
    )
    return gen_corpus(config)


@pytest.fixture(scope="session")
def clean_world():
    config = ToyCorpusConfig(
        n_samples=12, n_speakers=4, n_words=12, noise_std=0.0, seed=5, split="unit"
    )
    return gen_corpus(config)
