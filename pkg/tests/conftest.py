import numpy as np
import pytest

from audiocaptcha import pipeline as pl
from audiocaptcha.synth import CorpusConfig, gen_corpus, load_manifest

# lines appended by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """40 train / 6 test CAPTCHAs at default noise."""
    root = tmp_path_factory.mktemp("corpus")
    gen_corpus(CorpusConfig(40, 6, seed=11), root)
    return load_manifest(root / "manifest.json")


@pytest.fixture(scope="session")
def small_table(small_corpus):
    return pl.build_training_table(small_corpus)


@pytest.fixture(scope="session")
def small_model(small_table):
    return pl.train_final(small_table, "proposed_svm", 10.0, 0.9)
