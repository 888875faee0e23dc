import numpy as np
import pytest

from artivae import synthcorpus
from artivae.kernels import BACKENDS


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus():
    """Five short utterances with audio and babble."""
    return synthcorpus.generate(synthcorpus.SynthConfig(n_utterances=5, frames_per_utterance=100,
                                                        seed=11, n_babble_talkers=2))


@pytest.fixture(scope="session")
def text_corpus():
    """Corpus without audio, for the articulatory and training tests."""
    return synthcorpus.generate(synthcorpus.SynthConfig(n_utterances=8, frames_per_utterance=100,
                                                        seed=5, with_audio=False))


# acceptance criterion -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
