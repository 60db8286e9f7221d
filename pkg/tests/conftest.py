import numpy as np
import pytest

from flightpref.artifacts import demo_bundle, train_bundle
from flightpref.game import generate_corpus
from flightpref.language import default_grammar
from flightpref.models import TrainConfig


@pytest.fixture(scope="session")
def grammar():
    return default_grammar()


@pytest.fixture(scope="session")
def support1(grammar):
    return grammar.enumerate_utterances(1)


@pytest.fixture(scope="session")
def support2(grammar):
    return grammar.enumerate_utterances(2)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(80, seed=7)


@pytest.fixture(scope="session")
def small_bundle():
    """Quickly trained models over the single-clause support; shared by the
    unit tests that need a working engine but not a strong one."""
    return demo_bundle(seed=7)


@pytest.fixture(scope="session")
def small_cfg(small_bundle):
    cfg = small_bundle.config()
    cfg.speaker_log_normalizers()
    return cfg


STRONG_CORPUS_GAMES = 500
STRONG_CORPUS_SEED = 101
STRONG_LISTENER_CFG = TrainConfig(lr=0.8, momentum=0.9, max_steps=4000,
                                  patience=300, seed=7)
STRONG_SPEAKER_CFG = TrainConfig(lr=0.5, momentum=0.9, max_steps=700,
                                 patience=80, seed=7)


@pytest.fixture(scope="session")
def strong_bundle():
    """Fully trained models over the two-clause support: the reference
    engine for the acceptance suite and sharper model-dependent checks."""
    corpus = generate_corpus(STRONG_CORPUS_GAMES, STRONG_CORPUS_SEED)
    return train_bundle(corpus, STRONG_LISTENER_CFG, STRONG_SPEAKER_CFG,
                        support_max_clauses=2)


@pytest.fixture(scope="session")
def strong_cfg(strong_bundle):
    cfg = strong_bundle.config()
    cfg.speaker_log_normalizers()
    return cfg


def approx_dist(p, q, tol=1e-9):
    return np.max(np.abs(np.asarray(p) - np.asarray(q))) < tol
