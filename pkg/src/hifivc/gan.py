"""Speaker-conditioned waveform generator and the period/scale discriminator ensemble."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.parametrizations import weight_norm

from hifivc.audio import SAMPLE_RATE, Waveform
from hifivc.errors import ContractError
from hifivc.speaker import SpeakerEmbedding

LRELU_SLOPE = 0.1
MIN_DISCRIMINATOR_SAMPLES = 256


@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 320
    cond_dim: int = 128
    initial_channels: int = 512
    upsample_factors: tuple = (10, 8, 4, 3)
    resblock_kernel_sizes: tuple = (3, 7, 11)
    resblock_dilations: tuple = (1, 3, 5)
    min_channels: int = 1   # floor on the per-stage halving

    def __post_init__(self):
        if math.prod(self.upsample_factors) != 960:
            raise ContractError(
                f"upsample factors {self.upsample_factors} must multiply to 960"
            )

    @property
    def hop(self) -> int:
        return math.prod(self.upsample_factors)


@dataclass(frozen=True)
class DiscriminatorConfig:
    periods: tuple = (2, 3, 5, 7, 11)
    period_channels: tuple = (32, 128, 512, 1024, 1024)
    num_scales: int = 3
    scale_channels: tuple = (128, 128, 256, 512, 1024, 1024, 1024)
    scale_groups: int = 16
    scale_kernel: int = 41


@dataclass
class DiscriminatorOutput:
    score: torch.Tensor
    feature_maps: list = field(default_factory=list)


class FiLM(nn.Module):
    """Per-channel scale and shift predicted from the speaker embedding."""

    def __init__(self, cond_dim: int, channels: int):
        super().__init__()
        self.proj = nn.Linear(cond_dim, 2 * channels)

    def forward(self, x, cond):
        gamma, beta = self.proj(cond).unsqueeze(-1).chunk(2, dim=1)
        return x * (1.0 + gamma) + beta


class ResBlock(nn.Module):
    def __init__(self, channels, kernel_size, dilations, cond_dim):
        super().__init__()
        self.film = FiLM(cond_dim, channels)
        self.convs1 = nn.ModuleList(
            weight_norm(nn.Conv1d(channels, channels, kernel_size, dilation=d,
                                  padding=d * (kernel_size - 1) // 2))
            for d in dilations
        )
        self.convs2 = nn.ModuleList(
            weight_norm(nn.Conv1d(channels, channels, kernel_size, padding=(kernel_size - 1) // 2))
            for _ in dilations
        )

    def forward(self, x, cond):
        x = self.film(x, cond)
        for c1, c2 in zip(self.convs1, self.convs2):
            xt = c1(F.leaky_relu(x, LRELU_SLOPE))
            xt = c2(F.leaky_relu(xt, LRELU_SLOPE))
            x = x + xt
        return x


class Generator(nn.Module):
    """Content+F0 features at 40 ms -> 24 kHz waveform, FiLM-conditioned on the speaker."""

    def __init__(self, config: GeneratorConfig = GeneratorConfig()):
        super().__init__()
        self.config = config
        ch = config.initial_channels
        self.conv_pre = weight_norm(nn.Conv1d(config.in_channels, ch, 7, padding=3))
        self.ups = nn.ModuleList()
        self.resblocks = nn.ModuleList()
        for stride in config.upsample_factors:
            out_ch = max(ch // 2, config.min_channels)
            # kernel 2*stride; output length is exactly stride * input length
            self.ups.append(weight_norm(nn.ConvTranspose1d(
                ch, out_ch, 2 * stride, stride,
                padding=(stride + 1) // 2, output_padding=stride % 2,
            )))
            self.resblocks.append(nn.ModuleList(
                ResBlock(out_ch, k, config.resblock_dilations, config.cond_dim)
                for k in config.resblock_kernel_sizes
            ))
            ch = out_ch
        self.conv_post = weight_norm(nn.Conv1d(ch, 1, 7, padding=3, bias=False))

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        """(batch, in_channels, frames), (batch, cond_dim) -> (batch, 1, frames * 960)."""
        x = self.conv_pre(x)
        for up, blocks in zip(self.ups, self.resblocks):
            x = up(F.leaky_relu(x, LRELU_SLOPE))
            x = sum(block(x, cond) for block in blocks) / len(blocks)
        x = self.conv_post(F.leaky_relu(x))
        return torch.tanh(x)


def generate(features: np.ndarray, embedding: SpeakerEmbedding, generator: Generator) -> Waveform:
    features = np.asarray(features, dtype=np.float32)
    cfg = generator.config
    if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] != cfg.in_channels:
        raise ContractError(
            f"generator expects (frames >= 1, {cfg.in_channels}) features, got {features.shape}"
        )
    e = np.asarray(embedding.e, dtype=np.float32)
    if e.shape != (cfg.cond_dim,):
        raise ContractError(f"embedding must have dimension {cfg.cond_dim}, got {e.shape}")
    with torch.no_grad():
        y = generator(torch.from_numpy(features.T.copy())[None], torch.from_numpy(e)[None])
    return Waveform(y[0, 0].numpy(), SAMPLE_RATE)


class PeriodDiscriminator(nn.Module):
    def __init__(self, period, channels):
        super().__init__()
        self.period = period
        convs = []
        prev = 1
        for i, ch in enumerate(channels):
            stride = 3 if i < len(channels) - 1 else 1
            convs.append(weight_norm(nn.Conv2d(prev, ch, (5, 1), (stride, 1), padding=(2, 0))))
            prev = ch
        self.convs = nn.ModuleList(convs)
        self.conv_post = weight_norm(nn.Conv2d(prev, 1, (3, 1), 1, padding=(1, 0)))

    def forward(self, x):
        b, c, t = x.shape
        if t % self.period:
            pad = self.period - t % self.period
            x = F.pad(x, (0, pad), mode="reflect")
            t = t + pad
        x = x.view(b, c, t // self.period, self.period)
        fmaps = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
            fmaps.append(x)
        x = self.conv_post(x)
        fmaps.append(x)
        return DiscriminatorOutput(torch.flatten(x, 1, -1), fmaps)


class ScaleDiscriminator(nn.Module):
    def __init__(self, channels, groups, kernel=41):
        super().__init__()
        pad = kernel // 2
        specs = [(15, 1, 1, 7)]  # kernel, stride, groups, padding
        specs += [(kernel, 2 if i < 2 else 4, groups, pad) for i in range(len(channels) - 3)]
        specs += [(kernel, 1, groups, pad), (5, 1, 1, 2)]
        convs = []
        prev = 1
        for ch, (k, s, g, p) in zip(channels, specs):
            g = math.gcd(g, math.gcd(prev, ch))
            convs.append(weight_norm(nn.Conv1d(prev, ch, k, s, groups=g, padding=p)))
            prev = ch
        self.convs = nn.ModuleList(convs)
        self.conv_post = weight_norm(nn.Conv1d(prev, 1, 3, 1, padding=1))

    def forward(self, x):
        fmaps = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
            fmaps.append(x)
        x = self.conv_post(x)
        fmaps.append(x)
        return DiscriminatorOutput(torch.flatten(x, 1, -1), fmaps)


class Discriminators(nn.Module):
    """Multi-period plus multi-scale ensemble; one output per sub-discriminator."""

    def __init__(self, config: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.config = config
        self.period_discs = nn.ModuleList(
            PeriodDiscriminator(p, config.period_channels) for p in config.periods
        )
        self.scale_discs = nn.ModuleList(
            ScaleDiscriminator(config.scale_channels, config.scale_groups, config.scale_kernel)
            for _ in range(config.num_scales)
        )
        self.pool = nn.AvgPool1d(4, 2, padding=2)

    def forward(self, x: torch.Tensor) -> list[DiscriminatorOutput]:
        """(batch, 1, samples) -> list of outputs, periods first then scales."""
        if x.shape[-1] < MIN_DISCRIMINATOR_SAMPLES:
            raise ContractError(
                f"discriminators need at least {MIN_DISCRIMINATOR_SAMPLES} samples, got {x.shape[-1]}"
            )
        outputs = [d(x) for d in self.period_discs]
        for i, d in enumerate(self.scale_discs):
            if i > 0:
                x = self.pool(x)
            outputs.append(d(x))
        return outputs


def discriminate(waveform: Waveform, discriminators: Discriminators) -> list[DiscriminatorOutput]:
    x = torch.from_numpy(np.array(waveform.samples))[None, None]
    with torch.no_grad():
        return discriminators(x)
