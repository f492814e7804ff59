"""Objective evaluation metrics: word/character error rate and F0 correlation."""

from __future__ import annotations

import math
import re
from typing import Sequence

import numpy as np

from hifivc.audio import SAMPLE_RATE, Waveform
from hifivc.errors import ContractError
from hifivc.f0 import F0Track, extract_f0

UNDEFINED = math.nan
MIN_COMMON_VOICED = 10

_PUNCT = re.compile(r"[^\w\s']")
_SPACE = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Lowercase, drop punctuation except apostrophes, collapse whitespace."""
    text = _PUNCT.sub(" ", text.lower()).replace("_", " ")
    return _SPACE.sub(" ", text).strip()


def edit_distance(ref: Sequence, hyp: Sequence) -> int:
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1]


def wer(ref_text: str, hyp_text: str) -> float:
    ref = normalize_text(ref_text).split()
    if not ref:
        return UNDEFINED
    return edit_distance(ref, normalize_text(hyp_text).split()) / len(ref)


def cer(ref_text: str, hyp_text: str) -> float:
    ref = normalize_text(ref_text)
    if not ref:
        return UNDEFINED
    return edit_distance(ref, normalize_text(hyp_text)) / len(ref)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if denom == 0.0:
        return UNDEFINED
    return float(np.clip(np.dot(da, db) / denom, -1.0, 1.0))


def track_pcc(source: F0Track, converted: F0Track, scale: str = "linear") -> float:
    n = min(len(source), len(converted))
    both = source.voiced[:n] & converted.voiced[:n]
    if both.sum() < MIN_COMMON_VOICED:
        return UNDEFINED
    a, b = source.f0_hz[:n][both], converted.f0_hz[:n][both]
    if scale == "log":
        a, b = np.log(a), np.log(b)
    elif scale != "linear":
        raise ContractError(f"unknown pcc scale {scale!r}")
    return pearson(a, b)


def pcc(source_wav: Waveform, converted_wav: Waveform, scale: str = "linear",
        method: str = "builtin") -> float:
    if source_wav.sample_rate != SAMPLE_RATE or converted_wav.sample_rate != SAMPLE_RATE:
        raise ContractError(f"pcc expects {SAMPLE_RATE} Hz audio")
    return track_pcc(extract_f0(source_wav, method), extract_f0(converted_wav, method), scale)
