import math
import string
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hifivc.audio import Waveform
from hifivc.f0 import F0Track
from hifivc.metrics import (
    MIN_COMMON_VOICED, cer, normalize_text, pcc, pearson, track_pcc, wer,
)


def levenshtein_oracle(a, b):
    """Top-down memoised recursion, written independently of the library's table fill."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def covariance_oracle(x, y):
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    c = np.cov(x, y, ddof=1)
    return c[0, 1] / math.sqrt(c[0, 0] * c[1, 1])


def random_text(rng, max_words=8):
    alphabet = "abcde"
    return " ".join(
        "".join(rng.choice(list(alphabet), size=int(rng.integers(1, 4))))
        for _ in range(int(rng.integers(1, max_words + 1)))
    )


def test_wer_examples():
    assert wer("a b c", "a b c") == 0
    assert wer("a b c", "a x c") == pytest.approx(1 / 3)
    assert wer("a b", "a b c d") == 1.0


def test_cer_examples():
    assert cer("hello there", "hello there") == 0
    assert cer("abc", "axc") == pytest.approx(1 / 3)
    assert cer("ab", "") == 1.0


def test_empty_reference_is_undefined():
    assert math.isnan(wer("", "a b"))
    assert math.isnan(cer(" ,. ", "x"))


def test_normalizer():
    assert normalize_text("  Hello,   WORLD! It's  fine.") == "hello world it's fine"
    assert wer("Hello, world.", "hello world") == 0


def test_error_rates_match_levenshtein_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        ref, hyp = random_text(rng), random_text(rng)
        rw, hw = ref.split(), hyp.split()
        assert wer(ref, hyp) == levenshtein_oracle(rw, hw) / len(rw)
        assert cer(ref, hyp) == levenshtein_oracle(ref, hyp) / len(ref)


def test_distance_symmetric_rate_not():
    ref, hyp = "a b", "a b c d"
    assert wer(ref, hyp) * 2 == wer(hyp, ref) * 4   # same distance, different denominators
    assert wer(ref, hyp) != wer(hyp, ref)


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet=string.ascii_lowercase + " ", min_size=1, max_size=30),
       st.text(alphabet=string.ascii_lowercase + " ", max_size=30))
def test_zero_iff_equal_after_normalization(ref, hyp):
    if not normalize_text(ref):
        return
    assert (cer(ref, hyp) == 0) == (normalize_text(ref) == normalize_text(hyp))
    assert wer(ref, hyp) >= 0 and cer(ref, hyp) >= 0


def test_pearson_matches_covariance_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(3, 200))
        x = rng.standard_normal(n) * rng.uniform(0.1, 100) + rng.uniform(-100, 100)
        y = 0.3 * x + rng.standard_normal(n)
        assert abs(pearson(x, y) - covariance_oracle(x, y)) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10), st.floats(-100, 100), st.floats(0.1, 10))
def test_pcc_affine_invariance_and_sign_flip(seed, a, b, c):
    rng = np.random.default_rng(seed)
    x = rng.uniform(80, 300, size=50)
    y = x + rng.standard_normal(50) * 20
    r = pearson(x, y)
    assert pearson(a * x + b, c * y - b) == pytest.approx(r, abs=1e-9)
    assert pearson(-a * x + b, y) == pytest.approx(-r, abs=1e-9)


def _track(values):
    f0 = np.asarray(values, dtype=np.float64)
    return F0Track(f0, f0 > 0)


def test_track_examples():
    ramp = np.linspace(100, 200, 40)
    assert track_pcc(_track(ramp), _track(ramp)) == pytest.approx(1.0)
    assert track_pcc(_track(ramp), _track(2 * ramp + 30)) == pytest.approx(1.0)
    assert track_pcc(_track(ramp), _track(ramp[::-1])) == pytest.approx(-1.0)
    assert track_pcc(_track(ramp), _track(ramp), scale="log") == pytest.approx(1.0)


def test_track_uses_mutually_voiced_frames_and_common_length():
    rng = np.random.default_rng(0)
    a = rng.uniform(100, 200, 60)
    b = a.copy()
    b[::3] = 0.0                         # unvoiced in the converted track
    a_long = np.concatenate([a, rng.uniform(100, 200, 10)])
    both = b > 0
    assert track_pcc(_track(a_long), _track(b)) == pytest.approx(1.0)
    noisy = b + np.where(both, rng.standard_normal(60), 0)
    expected = covariance_oracle(a[both], noisy[both])
    assert abs(track_pcc(_track(a_long), _track(noisy)) - expected) <= 1e-10


def test_too_few_common_voiced_frames_is_undefined():
    a = np.zeros(40)
    a[: MIN_COMMON_VOICED - 1] = 150 + np.arange(MIN_COMMON_VOICED - 1)
    assert math.isnan(track_pcc(_track(a), _track(a)))
    a[: MIN_COMMON_VOICED] = 150 + np.arange(MIN_COMMON_VOICED)
    assert track_pcc(_track(a), _track(a)) == pytest.approx(1.0)


def test_waveform_self_pcc(voice):
    assert pcc(voice, voice) == pytest.approx(1.0)


def test_silence_pcc_undefined():
    silent = Waveform(np.zeros(24000), 24000)
    assert math.isnan(pcc(silent, silent))
