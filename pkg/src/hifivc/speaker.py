"""Variational speaker embedder and its KL regulariser."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from hifivc.audio import MelConfig, Waveform, log_mel
from hifivc.errors import ContractError

MIN_REFERENCE_S = 0.5


@dataclass(frozen=True)
class SpeakerPosterior:
    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.log_var.shape:
            raise ContractError("mu and log_var must have the same shape")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.log_var))):
            raise ContractError("speaker posterior must be finite")

    @property
    def dim(self) -> int:
        return self.mu.shape[-1]


@dataclass(frozen=True)
class SpeakerEmbedding:
    e: np.ndarray


def mel_summary(audio: torch.Tensor, config: MelConfig = MelConfig()) -> torch.Tensor:
    """Time-mean of log-mel frames whose analysis window lies inside the signal.

    Frames touching the zero padding are skipped so that stationary signals give
    the same summary regardless of length; (samples,) -> (n_mels,).
    """
    mel = log_mel(audio, config)
    half = config.n_fft // 2
    first = -(-half // config.hop)
    last = (audio.shape[-1] - half) // config.hop
    if last >= first:
        mel = mel[first : last + 1]
    return mel.mean(dim=0)


class ResidualFC(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.fc1 = nn.Linear(width, width)
        self.norm = nn.LayerNorm(width)
        self.act = nn.LeakyReLU(0.2)
        self.fc2 = nn.Linear(width, width)

    def forward(self, x):
        return x + self.fc2(self.act(self.norm(self.fc1(x))))


class SpeakerEmbedder(nn.Module):
    def __init__(self, n_mels: int = 80, hidden: int = 256, dim: int = 128, num_blocks: int = 5):
        super().__init__()
        self.inp = nn.Linear(n_mels, hidden)
        self.blocks = nn.Sequential(*[ResidualFC(hidden) for _ in range(num_blocks)])
        self.mu = nn.Linear(hidden, dim)
        self.log_var = nn.Linear(hidden, dim)
        self.dim = dim

    def forward(self, summary: torch.Tensor):
        """Mel summary (batch, n_mels) -> (mu, log_var), each (batch, dim)."""
        h = self.blocks(self.inp(summary))
        return self.mu(h), self.log_var(h)


def embed_speaker(reference: Waveform, embedder: SpeakerEmbedder,
                  mel_config: MelConfig = MelConfig()) -> SpeakerPosterior:
    if reference.duration < MIN_REFERENCE_S:
        raise ContractError(
            f"reference must be at least {MIN_REFERENCE_S} s, got {reference.duration:.3f} s"
        )
    with torch.no_grad():
        summary = mel_summary(torch.from_numpy(np.array(reference.samples)), mel_config)
        mu, log_var = embedder(summary[None])
    return SpeakerPosterior(mu[0].numpy(), log_var[0].numpy())


def reparameterize(mu: torch.Tensor, log_var: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    return mu + torch.exp(0.5 * log_var) * noise


def sample_embedding(posterior: SpeakerPosterior, mode: str = "test",
                     noise: np.ndarray | None = None) -> SpeakerEmbedding:
    if mode == "test":
        return SpeakerEmbedding(posterior.mu.copy())
    if mode != "train":
        raise ContractError(f"unknown sampling mode {mode!r}")
    if noise is None or np.shape(noise) != posterior.mu.shape:
        raise ContractError(f"train-mode sampling needs noise of shape {posterior.mu.shape}")
    e = posterior.mu + np.exp(posterior.log_var / 2) * noise
    return SpeakerEmbedding(e)


def kl_divergence(mu: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, diag(exp(log_var))) || N(0, I)) summed over the last axis."""
    return 0.5 * torch.sum(mu.square() + torch.expm1(log_var) - log_var, dim=-1)


def kl_loss(posterior: SpeakerPosterior) -> float:
    mu = torch.as_tensor(posterior.mu, dtype=torch.float64)
    log_var = torch.as_tensor(posterior.log_var, dtype=torch.float64)
    return float(kl_divergence(mu, log_var).mean())
