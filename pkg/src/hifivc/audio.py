"""Waveform I/O, resampling and log-mel spectrograms."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import signal
from scipy.io import wavfile

from hifivc.errors import ContractError, EmptyInputError

SAMPLE_RATE = 24000


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        if samples.ndim != 1:
            raise ContractError(f"waveform must be mono, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ContractError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ContractError("waveform contains non-finite samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    n_fft: int = 1024
    hop: int = 240
    win: int = 1024
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 12000.0
    log_floor: float = 1e-5
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if not self.hop <= self.win <= self.n_fft:
            raise ContractError("mel config requires hop <= win <= n_fft")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ContractError("mel config requires fmin < fmax <= sample_rate / 2")

    def num_frames(self, num_samples: int) -> int:
        return num_samples // self.hop + 1


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray  # (frames, n_mels)
    config: MelConfig = field(default_factory=MelConfig)

    @property
    def hop(self) -> int:
        return self.config.hop

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]


def normalize_peak(samples: np.ndarray) -> np.ndarray:
    """Scale down so that max |sample| <= 1; quieter signals pass through untouched."""
    peak = float(np.max(np.abs(samples))) if len(samples) else 0.0
    if peak > 1.0:
        samples = samples / peak
    return samples


def resample(samples: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    """Polyphase windowed-sinc resampling; output length is ceil(n * dst / src)."""
    if src_rate == dst_rate:
        return np.asarray(samples, dtype=np.float32)
    g = math.gcd(src_rate, dst_rate)
    up, down = dst_rate // g, src_rate // g
    out = signal.resample_poly(np.asarray(samples, dtype=np.float64), up, down)
    return out.astype(np.float32)


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float32) / 32768.0
    if data.dtype == np.int32:
        return (data.astype(np.float64) / 2147483648.0).astype(np.float32)
    if data.dtype == np.uint8:
        return (data.astype(np.float32) - 128.0) / 128.0
    if np.issubdtype(data.dtype, np.floating):
        return data.astype(np.float32)
    raise ContractError(f"unsupported PCM sample type {data.dtype}")


def load_audio(path: str | Path, target_rate: int = SAMPLE_RATE) -> Waveform:
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read audio file {path}: {exc}") from exc
    samples = _pcm_to_float(np.asarray(data))
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if len(samples) == 0:
        raise EmptyInputError(f"audio file {path} contains no samples")
    samples = resample(samples, int(rate), target_rate)
    return Waveform(normalize_peak(samples), target_rate)


def save_audio(waveform: Waveform, path: str | Path) -> None:
    if len(waveform) == 0:
        raise EmptyInputError("refusing to write an empty waveform")
    pcm = np.clip(np.round(waveform.samples.astype(np.float64) * 32768.0), -32768, 32767)
    try:
        wavfile.write(Path(path), waveform.sample_rate, pcm.astype(np.int16))
    except OSError as exc:
        raise OSError(f"cannot write audio file {path}: {exc}") from exc


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(config: MelConfig) -> np.ndarray:
    """n_mels + 2 frequencies (Hz) equally spaced on the mel scale."""
    mels = np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2)
    return mel_to_hz(mels)


@functools.lru_cache(maxsize=16)
def mel_filterbank(config: MelConfig) -> np.ndarray:
    """Triangular area-normalised filters, shape (n_mels, n_fft // 2 + 1)."""
    fft_freqs = np.linspace(0.0, config.sample_rate / 2, config.n_fft // 2 + 1)
    edges = mel_band_edges(config)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (fft_freqs[None, :] - lower) / (center - lower)
    falling = (upper - fft_freqs[None, :]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    weights *= (2.0 / (upper - lower))
    return weights.astype(np.float32)


@functools.lru_cache(maxsize=16)
def _torch_constants(config: MelConfig):
    basis = torch.from_numpy(mel_filterbank(config))
    window = torch.hann_window(config.win, periodic=True)
    return basis, window


def log_mel(audio: torch.Tensor, config: MelConfig = MelConfig()) -> torch.Tensor:
    """Differentiable log-mel of a (batch, samples) tensor -> (batch, frames, n_mels).

    Zero (constant) centre padding keeps frame count at ``len // hop + 1`` for
    any input length, including inputs shorter than one window.
    """
    squeeze = audio.dim() == 1
    if squeeze:
        audio = audio[None]
    basis, window = _torch_constants(config)
    basis = basis.to(audio.dtype)
    window = window.to(audio.dtype)
    pad = config.n_fft // 2
    padded = torch.nn.functional.pad(audio, (pad, pad))
    spec = torch.stft(
        padded,
        n_fft=config.n_fft,
        hop_length=config.hop,
        win_length=config.win,
        window=window,
        center=False,
        return_complex=True,
    )
    power = spec.real.square() + spec.imag.square()
    mel = torch.matmul(basis, power).transpose(1, 2)
    out = torch.log(torch.clamp(mel, min=config.log_floor))
    return out[0] if squeeze else out


def mel_spectrogram(waveform: Waveform, config: MelConfig = MelConfig()) -> MelSpectrogram:
    if waveform.sample_rate != config.sample_rate:
        raise ContractError(
            f"waveform rate {waveform.sample_rate} does not match mel config rate {config.sample_rate}"
        )
    with torch.no_grad():
        values = log_mel(torch.from_numpy(np.array(waveform.samples)), config).numpy()
    return MelSpectrogram(values, config)
