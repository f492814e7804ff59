"""Synthetic harmonic "voices" for hermetic tests and demos.

Each speaker has a base pitch and a formant set; utterances are glottal-like
harmonic stacks shaped by the formants, with a smooth pitch contour and short
unvoiced gaps.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hifivc.audio import SAMPLE_RATE, Waveform, save_audio

WORDS = ("please call stella ask her to bring these things with her from the store "
         "six spoons of fresh snow peas five thick slabs of blue cheese").split()


@dataclass(frozen=True)
class SyntheticSpeaker:
    speaker_id: str
    gender: str
    base_f0: float
    formants: tuple


def make_speakers(n: int, seed: int = 0) -> list[SyntheticSpeaker]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        gender = "F" if i % 2 == 0 else "M"
        base = rng.uniform(190, 250) if gender == "F" else rng.uniform(95, 140)
        scale = 1.15 if gender == "F" else 1.0
        formants = tuple(float(f * scale * rng.uniform(0.92, 1.08)) for f in (700, 1200, 2600))
        out.append(SyntheticSpeaker(f"s{i:03d}", gender, float(base), formants))
    return out


def _envelope(freqs: np.ndarray, formants) -> np.ndarray:
    gain = np.zeros_like(freqs)
    for k, fc in enumerate(formants):
        bw = 80.0 + 40.0 * k
        gain += 1.0 / (1.0 + ((freqs - fc) / bw) ** 2) / (k + 1)
    return gain + 0.02


def pitch_contour(num_samples: int, base_f0: float, rng, sample_rate=SAMPLE_RATE) -> np.ndarray:
    t = np.arange(num_samples) / sample_rate
    depth = rng.uniform(0.10, 0.20)
    rate = rng.uniform(0.5, 1.5)
    phase = rng.uniform(0, 2 * np.pi)
    slope = rng.uniform(-0.1, 0.1)
    return base_f0 * (1.0 + depth * np.sin(2 * np.pi * rate * t + phase) + slope * t)


def synthesize(speaker: SyntheticSpeaker, duration: float, seed: int = 0,
               unvoiced_gaps: int = 1, sample_rate=SAMPLE_RATE) -> Waveform:
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    f0 = pitch_contour(n, speaker.base_f0, rng, sample_rate)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    x = np.zeros(n)
    for h in range(1, 40):
        fh = h * f0
        amp = _envelope(fh, speaker.formants) / h ** 0.5
        amp = np.where(fh < sample_rate / 2 - 200, amp, 0.0)
        x += amp * np.sin(h * phase)
    voiced = np.ones(n, dtype=bool)
    for _ in range(unvoiced_gaps):
        length = int(rng.uniform(0.04, 0.08) * sample_rate)
        if n > 4 * length:
            start = int(rng.integers(length, n - 2 * length))
            voiced[start : start + length] = False
    ramp = np.convolve(voiced.astype(float), np.hanning(241) / np.hanning(241).sum(), mode="same")
    noise = 0.02 * rng.standard_normal(n)
    x = x * ramp + noise * (1.0 - ramp)
    x = 0.6 * x / max(np.max(np.abs(x)), 1e-9)
    return Waveform(x.astype(np.float32), sample_rate)


def random_sentence(rng, n_words=(4, 8)) -> str:
    k = int(rng.integers(n_words[0], n_words[1] + 1))
    return " ".join(rng.choice(WORDS, size=k))


def write_corpus(root: str | Path, num_speakers: int = 8, utts_per_speaker: int = 4,
                 duration: float = 1.0, seed: int = 0) -> Path:
    """Write a VCTK-shaped corpus: wav48/<spk>/*.wav, txt/<spk>/*.txt, speaker-info.txt."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    speakers = make_speakers(num_speakers, seed)
    lines = ["ID  AGE  GENDER  ACCENTS  REGION"]
    for spk in speakers:
        lines.append(f"{spk.speaker_id}  23  {spk.gender}  Synthetic  None")
        (root / "wav48" / spk.speaker_id).mkdir(parents=True, exist_ok=True)
        (root / "txt" / spk.speaker_id).mkdir(parents=True, exist_ok=True)
        for u in range(utts_per_speaker):
            utt = f"{spk.speaker_id}_{u:03d}"
            wav = synthesize(spk, duration, seed=int(rng.integers(1 << 31)))
            save_audio(wav, root / "wav48" / spk.speaker_id / f"{utt}.wav")
            (root / "txt" / spk.speaker_id / f"{utt}.txt").write_text(random_sentence(rng) + "\n")
    (root / "speaker-info.txt").write_text("\n".join(lines) + "\n")
    return root
