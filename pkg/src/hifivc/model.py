"""The trainable predictor: F0 encoder, speaker embedder and generator."""

from __future__ import annotations

import torch
from torch import nn

from hifivc.f0 import F0Encoder
from hifivc.gan import Discriminators, Generator
from hifivc.speaker import SpeakerEmbedder, reparameterize


class Predictor(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.f0_encoder = F0Encoder(
            channels=config.f0.channels, kernel_size=config.f0.kernel_size, strides=config.f0.strides
        )
        self.speaker = SpeakerEmbedder(
            n_mels=config.mel.n_mels, hidden=config.speaker.hidden, dim=config.speaker.dim,
            num_blocks=config.speaker.num_blocks,
        )
        self.generator = Generator(config.generator)

    def forward(self, content, f0, summary, noise=None):
        """Return (waveform (B, 1, T), mu, log_var); ``noise=None`` uses the posterior mean."""
        mu, log_var = self.speaker(summary)
        embedding = mu if noise is None else reparameterize(mu, log_var, noise)
        f0_feat = self.f0_encoder(f0)
        n = min(content.shape[-1], f0_feat.shape[-1])
        x = torch.cat([content[..., :n], f0_feat[..., :n]], dim=1)
        return self.generator(x, embedding), mu, log_var


def build_models(config) -> tuple[Predictor, Discriminators]:
    return Predictor(config), Discriminators(config.discriminator)
