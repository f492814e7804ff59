"""Per-utterance feature caching and 40 ms-aligned training crops."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from hifivc.audio import Waveform
from hifivc.content import HOP_SAMPLES, LinguisticEncoder, extract_content
from hifivc.f0 import extract_f0, normalize_f0
from hifivc.speaker import mel_summary


@dataclass
class UtteranceFeatures:
    utt_id: str
    speaker: str
    audio: np.ndarray       # (frames * 960,) zero padded to the content grid
    content: np.ndarray     # (frames, D)
    f0: np.ndarray          # (2, 4 * frames) normalised log-F0 and voicing flag
    summary: np.ndarray     # (n_mels,) speaker-embedder input

    @property
    def num_frames(self) -> int:
        return self.content.shape[0]


@dataclass
class Batch:
    audio: torch.Tensor     # (B, frames * 960)
    content: torch.Tensor   # (B, D, frames)
    f0: torch.Tensor        # (B, 2, 4 * frames)
    summary: torch.Tensor   # (B, n_mels)


def prepare_utterance(waveform: Waveform, encoder: LinguisticEncoder, config,
                      utt_id: str = "", speaker: str = "", min_frames: int = 1) -> UtteranceFeatures:
    """Compute all frozen-side features once; the content encoder never sees gradients."""
    needed = min_frames * HOP_SAMPLES
    if len(waveform) < needed:
        waveform = Waveform(np.pad(waveform.samples, (0, needed - len(waveform))),
                            waveform.sample_rate)
    content = extract_content(waveform, encoder).features
    track = extract_f0(waveform, config.f0.method, threshold=config.f0.threshold)
    f0 = normalize_f0(track).channels
    n = min(content.shape[0], f0.shape[1] // 4)
    audio = np.zeros(n * HOP_SAMPLES, dtype=np.float32)
    m = min(len(waveform), len(audio))
    audio[:m] = waveform.samples[:m]
    with torch.no_grad():
        summary = mel_summary(torch.from_numpy(np.array(waveform.samples)), config.mel).numpy()
    return UtteranceFeatures(utt_id, speaker, audio, content[:n].astype(np.float32),
                             f0[:, : 4 * n].astype(np.float32), summary)


def crop(utt: UtteranceFeatures, start: int, frames: int):
    return (
        utt.audio[start * HOP_SAMPLES : (start + frames) * HOP_SAMPLES],
        utt.content[start : start + frames].T,
        utt.f0[:, 4 * start : 4 * (start + frames)],
    )


def collate(utts: list[UtteranceFeatures], starts: list[int], frames: int) -> Batch:
    parts = [crop(u, s, frames) for u, s in zip(utts, starts)]
    return Batch(
        audio=torch.from_numpy(np.stack([p[0] for p in parts])),
        content=torch.from_numpy(np.stack([p[1] for p in parts])),
        f0=torch.from_numpy(np.stack([p[2] for p in parts])),
        summary=torch.from_numpy(np.stack([u.summary for u in utts])),
    )


class TrainingSet:
    def __init__(self, utterances: list[UtteranceFeatures], segment_frames: int):
        self.segment_frames = segment_frames
        self.utterances = [u for u in utterances if u.num_frames >= segment_frames]
        if not self.utterances:
            raise ValueError(f"no utterance has at least {segment_frames} content frames")

    def __len__(self) -> int:
        return len(self.utterances)

    def batches(self, batch_size: int, rng: np.random.Generator, num_batches: int | None = None):
        """Shuffled pass over the set with random aligned crops; deterministic for a seeded rng."""
        order = rng.permutation(len(self.utterances))
        if num_batches is None:
            num_batches = max(1, len(order) // batch_size)
        while len(order) < num_batches * batch_size:
            order = np.concatenate([order, rng.permutation(len(self.utterances))])
        for b in range(num_batches):
            idx = order[b * batch_size : (b + 1) * batch_size]
            utts = [self.utterances[i] for i in idx]
            starts = [int(rng.integers(0, u.num_frames - self.segment_frames + 1)) for u in utts]
            yield collate(utts, starts, self.segment_frames)
