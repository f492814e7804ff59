"""Pitch tracking at 10 ms, speaker normalisation and the strided F0 encoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch
from torch import nn

from hifivc.audio import SAMPLE_RATE, Waveform
from hifivc.errors import ConfigurationError, ContractError, EmptyInputError

FRAME_PERIOD_S = 0.010
F0_MIN = 50.0
F0_MAX = 1100.0
NORM_EPS = 1e-5


@dataclass(frozen=True)
class F0Track:
    f0_hz: np.ndarray
    voiced: np.ndarray

    def __post_init__(self):
        f0 = np.asarray(self.f0_hz, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        if f0.shape != voiced.shape or f0.ndim != 1:
            raise ContractError("f0 and voicing tracks must be 1-D and of equal length")
        if np.any((f0 > 0) != voiced):
            raise ContractError("f0 must be positive exactly on voiced frames")
        object.__setattr__(self, "f0_hz", f0)
        object.__setattr__(self, "voiced", voiced)

    def __len__(self) -> int:
        return len(self.f0_hz)


@dataclass(frozen=True)
class NormalizedF0:
    channels: np.ndarray  # (2, frames): standardised log-F0, voicing flag

    @property
    def num_frames(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True)
class F0Features:
    features: np.ndarray  # (frames, C) at 40 ms

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


def num_f0_frames(num_samples: int, sample_rate: int = SAMPLE_RATE) -> int:
    return num_samples // int(round(sample_rate * FRAME_PERIOD_S)) + 1


def _frame_signal(x: np.ndarray, hop: int, length: int, num_frames: int, offset: int) -> np.ndarray:
    """Frames of ``length`` samples starting at ``i * hop - offset`` (zero padded)."""
    padded = np.concatenate([np.zeros(offset), x, np.zeros(length + hop)])
    idx = np.arange(num_frames)[:, None] * hop + np.arange(length)[None, :]
    return padded[idx]


def yin_track(
    waveform: Waveform,
    threshold: float = 0.45,
    window_s: float = 0.025,
    fmin: float = F0_MIN,
    fmax: float = F0_MAX,
    dip_threshold: float = 0.1,
) -> F0Track:
    """YIN-style tracker on 10 ms centred frames.

    ``threshold`` bounds the cumulative-mean-normalised difference at the chosen
    lag: frames whose best dip stays above it are declared unvoiced.
    """
    sr = waveform.sample_rate
    x = waveform.samples.astype(np.float64)
    hop = int(round(sr * FRAME_PERIOD_S))
    win = int(round(sr * window_s))
    tau_min = int(np.floor(sr / fmax))
    tau_max = int(np.ceil(sr / fmin))
    n = num_f0_frames(len(x), sr)

    frames = _frame_signal(x, hop, win + tau_max + 1, n, win // 2)
    # difference d(tau) = E(0) + E(tau) - 2 r(tau), energies over sliding windows
    nfft = 1 << int(np.ceil(np.log2(2 * (win + tau_max + 1))))
    spec_full = np.fft.rfft(frames, nfft)
    spec_head = np.fft.rfft(frames[:, :win], nfft)
    corr = np.fft.irfft(np.conj(spec_head) * spec_full, nfft)[:, : tau_max + 1]
    sq = np.concatenate([np.zeros((n, 1)), np.cumsum(frames**2, axis=1)], axis=1)
    taus = np.arange(tau_max + 1)
    energy = sq[:, taus + win] - sq[:, taus]
    diff = np.maximum(energy[:, :1] + energy - 2.0 * corr, 0.0)

    cumulative = np.cumsum(diff[:, 1:], axis=1)
    cmndf = np.ones_like(diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmndf[:, 1:] = diff[:, 1:] * taus[1:] / cumulative
    cmndf[~np.isfinite(cmndf)] = 1.0

    f0 = np.zeros(n)
    silent = energy[:, 0] <= 1e-10 * win
    for i in range(n):
        if silent[i]:
            continue
        d = cmndf[i]
        band = d[tau_min : tau_max + 1]
        below = np.nonzero(band < dip_threshold)[0]
        if len(below):
            tau = below[0] + tau_min
            while tau + 1 <= tau_max and d[tau + 1] < d[tau]:
                tau += 1
        else:
            tau = int(np.argmin(band)) + tau_min
        if d[tau] >= threshold:
            continue
        shift = 0.0
        if tau_min < tau < tau_max:
            a, b, c = d[tau - 1], d[tau], d[tau + 1]
            denom = a - 2 * b + c
            if denom > 0:
                shift = 0.5 * (a - c) / denom
        hz = sr / (tau + shift)
        if fmin <= hz <= fmax:
            f0[i] = hz
    f0 = reject_jumps(f0)
    return F0Track(f0, f0 > 0)


def reject_jumps(f0: np.ndarray, radius: int = 5, ratio: float = 1.5) -> np.ndarray:
    """Unvoice frames more than ``ratio`` away from the median of nearby voiced frames.

    Catches formant-period and octave picks at voicing edges, where the analysis
    window is only partly periodic.
    """
    out = f0.copy()
    voiced = np.nonzero(f0 > 0)[0]
    for i in voiced:
        near = f0[max(0, i - radius) : i + radius + 1]
        near = near[near > 0]
        if len(near) < 3:
            continue
        med = np.median(near)
        if not 1 / ratio <= f0[i] / med <= ratio:
            out[i] = 0.0
    return out


def world_track(waveform: Waveform) -> F0Track:
    try:
        import pyworld
    except ImportError as exc:
        raise ConfigurationError(
            "external F0 extractor requested but the 'pyworld' WORLD adapter is not installed"
        ) from exc
    x = waveform.samples.astype(np.float64)
    f0, t = pyworld.dio(x, waveform.sample_rate, f0_floor=F0_MIN, f0_ceil=F0_MAX,
                        frame_period=FRAME_PERIOD_S * 1000)
    f0 = pyworld.stonemask(x, f0, t, waveform.sample_rate)
    f0 = np.where((f0 >= F0_MIN) & (f0 <= F0_MAX), f0, 0.0)
    return F0Track(f0, f0 > 0)


ExternalExtractor = Callable[[Waveform], "tuple[np.ndarray, np.ndarray] | F0Track"]


def extract_f0(
    waveform: Waveform,
    method: str = "builtin",
    adapter: ExternalExtractor | None = None,
    threshold: float = 0.45,
) -> F0Track:
    if waveform.sample_rate != SAMPLE_RATE:
        raise ContractError(f"F0 extraction expects {SAMPLE_RATE} Hz audio")
    if len(waveform) < int(SAMPLE_RATE * FRAME_PERIOD_S):
        raise EmptyInputError("waveform shorter than one 10 ms frame")
    if method == "builtin":
        return yin_track(waveform, threshold=threshold)
    if method == "external":
        if adapter is None:
            return world_track(waveform)
        out = adapter(waveform)
        if isinstance(out, F0Track):
            return out
        f0, voiced = out
        f0 = np.where(np.asarray(voiced, dtype=bool), f0, 0.0)
        return F0Track(f0, f0 > 0)
    raise ConfigurationError(f"unknown F0 extraction method {method!r}")


def normalize_f0(track: F0Track) -> NormalizedF0:
    """Standardise log-F0 with statistics of voiced frames only."""
    out = np.zeros((2, len(track)), dtype=np.float64)
    voiced = track.voiced
    if voiced.any():
        log_f0 = np.log(track.f0_hz[voiced])
        mean = log_f0.mean()
        var = log_f0.var()
        out[0, voiced] = (log_f0 - mean) / np.sqrt(var + NORM_EPS)
        out[1, voiced] = 1.0
    return NormalizedF0(out.astype(np.float32))


class InstanceNorm(nn.Module):
    """Per-utterance, per-channel standardisation over time (valid for length 1)."""

    def __init__(self, eps: float = NORM_EPS):
        super().__init__()
        self.eps = eps

    def forward(self, x):
        mean = x.mean(dim=-1, keepdim=True)
        var = x.var(dim=-1, unbiased=False, keepdim=True)
        return (x - mean) / torch.sqrt(var + self.eps)


class F0Encoder(nn.Module):
    """Three conv layers with instance norm; overall stride 4 (10 ms -> 40 ms)."""

    def __init__(self, in_channels=2, channels=(64, 128, 64), kernel_size=5, strides=(2, 2, 1)):
        super().__init__()
        layers = []
        prev = in_channels
        for ch, stride in zip(channels, strides):
            layers += [
                nn.Conv1d(prev, ch, kernel_size, stride=stride, padding=kernel_size // 2,
                          padding_mode="replicate"),
                InstanceNorm(),
                nn.LeakyReLU(0.1),
            ]
            prev = ch
        self.net = nn.Sequential(*layers)
        self.stride = int(np.prod(strides))
        self.out_channels = prev

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(batch, 2, n) -> (batch, C, n // 4)."""
        n = x.shape[-1] - x.shape[-1] % self.stride
        if n == 0:
            raise EmptyInputError(f"F0 encoder needs at least {self.stride} frames")
        return self.net(x[..., :n])


def encode_f0(normalized: NormalizedF0, encoder: F0Encoder) -> F0Features:
    if normalized.num_frames < encoder.stride:
        raise EmptyInputError(f"F0 encoder needs at least {encoder.stride} frames")
    x = torch.from_numpy(np.array(normalized.channels, dtype=np.float32))[None]
    with torch.no_grad():
        y = encoder(x)[0]
    return F0Features(y.T.numpy())
