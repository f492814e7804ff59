import numpy as np
import pytest
import torch

from hifivc.audio import SAMPLE_RATE, Waveform
from hifivc.config import RunConfig
from hifivc.content import ToyEncoder
from hifivc.synth import make_speakers, synthesize

torch.set_num_threads(1)


def tone(freq, duration=1.0, amp=0.5, rate=SAMPLE_RATE):
    t = np.arange(int(round(duration * rate))) / rate
    return Waveform(amp * np.sin(2 * np.pi * freq * t), rate)


@pytest.fixture
def small_config():
    return RunConfig.small()


@pytest.fixture
def toy_encoder(small_config):
    return ToyEncoder(seed=small_config.content.seed, dim=small_config.content.dim)


@pytest.fixture(scope="session")
def speakers():
    return make_speakers(4, seed=3)


@pytest.fixture(scope="session")
def voice(speakers):
    return synthesize(speakers[0], 1.0, seed=11)


@pytest.fixture(scope="session")
def other_voice(speakers):
    return synthesize(speakers[1], 1.0, seed=12)


def make_training_set(config, num_utts=4, duration=0.5, seed=1, segment_frames=None):
    """Tiny cached feature set from two synthetic speakers."""
    from hifivc.data import TrainingSet, prepare_utterance

    encoder = ToyEncoder(seed=config.content.seed, dim=config.content.dim)
    spk = make_speakers(2, seed=seed)
    seg = segment_frames or config.train.segment_frames
    utts = [
        prepare_utterance(synthesize(spk[i % 2], duration, seed=i), encoder, config,
                          f"u{i}", spk[i % 2].speaker_id, min_frames=seg)
        for i in range(num_utts)
    ]
    return TrainingSet(utts, seg)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES):
            terminalreporter.write_line(line)
