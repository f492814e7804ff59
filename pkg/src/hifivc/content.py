"""Speaker-agnostic linguistic features on the 40 ms grid."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
import torch

from hifivc.audio import SAMPLE_RATE, MelConfig, Waveform, mel_spectrogram, resample
from hifivc.errors import ConfigurationError, ContractError, EmptyInputError
from hifivc.f0 import F0Features

FRAME_PERIOD_S = 0.040
HOP_SAMPLES = 960  # 40 ms at 24 kHz; also the generator's total upsampling


@dataclass(frozen=True)
class ContentFeatures:
    features: np.ndarray  # (frames, D)
    frame_period: float = FRAME_PERIOD_S

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@runtime_checkable
class LinguisticEncoder(Protocol):
    name: str
    dim: int
    frame_period: float

    def encode(self, waveform: Waveform) -> ContentFeatures: ...


def num_content_frames(num_samples: int) -> int:
    """Frames for a 24 kHz signal: 10 ms centred mel frames pooled in groups of 4."""
    return (num_samples // (HOP_SAMPLES // 4) + 1) // 4


class ToyEncoder:
    """Stand-in for the pretrained ASR: pooled log-mel through a fixed random projection."""

    frame_period = FRAME_PERIOD_S

    def __init__(self, seed: int = 0, dim: int = 256, mel_config: MelConfig = MelConfig()):
        self.seed = seed
        self.dim = dim
        self.mel_config = mel_config
        self.name = f"toy-{seed}"
        rng = np.random.default_rng(seed)
        self.projection = (
            rng.standard_normal((mel_config.n_mels, dim)) / np.sqrt(mel_config.n_mels)
        ).astype(np.float32)

    def encode(self, waveform: Waveform) -> ContentFeatures:
        if waveform.sample_rate != SAMPLE_RATE:
            raise ContractError(f"content encoder expects {SAMPLE_RATE} Hz audio")
        mel = mel_spectrogram(waveform, self.mel_config).values
        n = mel.shape[0] // 4
        pooled = mel[: 4 * n].reshape(n, 4, -1).mean(axis=1)
        return ContentFeatures(pooled @ self.projection)


class ConformerEncoder:
    """Pretrained NeMo Conformer-CTC; taps the encoder output before the CTC head.

    The model runs at 16 kHz and its encoder output has a 40 ms stride, so the
    frame grid matches the toy encoder's up to one frame of rounding.
    """

    frame_period = FRAME_PERIOD_S
    asr_rate = 16000

    def __init__(self, model_path: str | Path, name: str = "conformer-ctc"):
        try:
            from nemo.collections.asr.models import EncDecCTCModelBPE
        except ImportError as exc:
            raise ConfigurationError(
                "conformer content encoder requires the 'nemo_toolkit[asr]' backend"
            ) from exc
        path = Path(model_path)
        if not path.exists():
            raise ConfigurationError(f"conformer model artifact not found: {path}")
        self.model = EncDecCTCModelBPE.restore_from(str(path), map_location="cpu").eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.name = name
        self.dim = int(self.model.cfg.encoder.d_model)
        self._lock = threading.Lock()

    def parameters(self):
        return self.model.parameters()

    def encode(self, waveform: Waveform) -> ContentFeatures:
        if waveform.sample_rate != SAMPLE_RATE:
            raise ContractError(f"content encoder expects {SAMPLE_RATE} Hz audio")
        audio = torch.from_numpy(resample(waveform.samples, SAMPLE_RATE, self.asr_rate))[None]
        length = torch.tensor([audio.shape[1]])
        with self._lock, torch.no_grad():
            feats, feat_len = self.model.preprocessor(input_signal=audio, length=length)
            encoded, enc_len = self.model.encoder(audio_signal=feats, length=feat_len)
        out = encoded[0, :, : int(enc_len[0])].T.numpy()
        return ContentFeatures(out[: num_content_frames(len(waveform))])


def build_encoder(kind: str = "toy", seed: int = 0, dim: int = 256, model_path=None,
                  mel_config: MelConfig = MelConfig()) -> LinguisticEncoder:
    if kind == "toy":
        return ToyEncoder(seed=seed, dim=dim, mel_config=mel_config)
    if kind == "conformer":
        if model_path is None:
            raise ConfigurationError("conformer content encoder needs a model_path")
        return ConformerEncoder(model_path)
    raise ConfigurationError(f"unknown content encoder {kind!r}")


def extract_content(waveform: Waveform, encoder: LinguisticEncoder) -> ContentFeatures:
    if abs(encoder.frame_period - FRAME_PERIOD_S) > 1e-9:
        raise ContractError(f"encoder {encoder.name} has frame period {encoder.frame_period}")
    return encoder.encode(waveform)


def toy_encode(waveform: Waveform, seed: int = 0) -> ContentFeatures:
    return ToyEncoder(seed=seed).encode(waveform)


def align_features(content: ContentFeatures, f0feat: F0Features):
    if content.num_frames == 0 or f0feat.num_frames == 0:
        raise EmptyInputError("cannot align empty feature streams")
    n = min(content.num_frames, f0feat.num_frames)
    return (
        ContentFeatures(content.features[:n], content.frame_period),
        F0Features(f0feat.features[:n]),
    )
