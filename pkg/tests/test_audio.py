import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.io import wavfile

from conftest import tone
from hifivc.audio import (
    MelConfig, Waveform, load_audio, mel_spectrogram, resample, save_audio,
)
from hifivc.errors import ContractError, EmptyInputError


def test_load_stereo_48k_downsamples_to_24k(tmp_path):
    t = np.arange(48000) / 48000
    left = 0.3 * np.sin(2 * np.pi * 300 * t)
    right = 0.1 * np.sin(2 * np.pi * 500 * t)
    wavfile.write(tmp_path / "st.wav", 48000, np.stack([left, right], 1).astype(np.float32))
    w = load_audio(tmp_path / "st.wav", 24000)
    assert w.sample_rate == 24000
    assert len(w) == 24000


def test_load_24k_mono_is_identity(tmp_path):
    x = (0.25 * np.sin(np.linspace(0, 60, 2400))).astype(np.float32)
    wavfile.write(tmp_path / "m.wav", 24000, x)
    np.testing.assert_array_equal(load_audio(tmp_path / "m.wav").samples, x)


def test_load_16k_half_second_length(tmp_path):
    wavfile.write(tmp_path / "a.wav", 16000, np.zeros(8000, dtype=np.int16) + 100)
    assert len(load_audio(tmp_path / "a.wav", 24000)) == round(8000 * 24000 / 16000)


def test_load_peak_normalises_loud_float_files(tmp_path):
    wavfile.write(tmp_path / "loud.wav", 24000, np.array([0.0, 3.0, -1.5], dtype=np.float32))
    w = load_audio(tmp_path / "loud.wav")
    assert np.max(np.abs(w.samples)) == pytest.approx(1.0)


def test_load_errors(tmp_path):
    with pytest.raises(OSError):
        load_audio(tmp_path / "missing.wav")
    (tmp_path / "junk.wav").write_bytes(b"not a wav file at all")
    with pytest.raises(OSError):
        load_audio(tmp_path / "junk.wav")
    wavfile.write(tmp_path / "empty.wav", 24000, np.zeros(0, dtype=np.int16))
    with pytest.raises(EmptyInputError):
        load_audio(tmp_path / "empty.wav")


def test_save_silence_round_trip(tmp_path):
    save_audio(Waveform(np.zeros(1000), 24000), tmp_path / "s.wav")
    rate, data = wavfile.read(tmp_path / "s.wav")
    assert data.dtype == np.int16 and rate == 24000
    np.testing.assert_array_equal(load_audio(tmp_path / "s.wav").samples, np.zeros(1000))


@pytest.mark.parametrize("signal", ["sine", "random", "full_scale"])
def test_save_load_round_trip_within_one_lsb(tmp_path, signal):
    rng = np.random.default_rng(0)
    x = {
        "sine": tone(440, 0.2).samples,
        "random": rng.uniform(-1, 1, 5000),
        "full_scale": np.array([1.0, -1.0, 0.99999, -0.99999, 0.0]),
    }[signal]
    w = Waveform(x, 24000)
    save_audio(w, tmp_path / "r.wav")
    back = load_audio(tmp_path / "r.wav")
    assert np.max(np.abs(back.samples.astype(np.float64) - w.samples)) <= 2.0 ** -15


def test_save_errors(tmp_path):
    with pytest.raises(EmptyInputError):
        save_audio(Waveform(np.zeros(0), 24000), tmp_path / "e.wav")
    with pytest.raises(OSError):
        save_audio(Waveform(np.zeros(10), 24000), tmp_path / "no" / "such" / "dir.wav")


def test_waveform_rejects_non_finite():
    with pytest.raises(ContractError):
        Waveform(np.array([0.0, np.nan]), 24000)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 20000), src=st.sampled_from([8000, 16000, 22050, 44100, 48000]),
       dst=st.sampled_from([16000, 24000]))
def test_resampling_preserves_duration(n, src, dst):
    out = resample(np.zeros(n), src, dst)
    assert abs(len(out) / dst - n / src) < 1 / dst


def test_mel_silence_is_log_floor():
    cfg = MelConfig()
    mel = mel_spectrogram(Waveform(np.zeros(24000), 24000), cfg)
    assert np.all(mel.values == np.float32(np.log(cfg.log_floor)))


@pytest.mark.parametrize("n", [24000, 23999, 240, 100, 0])
def test_mel_frame_count(n):
    cfg = MelConfig()
    mel = mel_spectrogram(Waveform(np.zeros(n), 24000), cfg)
    assert mel.num_frames == n // 240 + 1
    assert mel.values.shape[1] == 80


def _htk_centres(n_mels, fmin, fmax):
    # independent of the implementation's own helpers
    lo, hi = 2595 * np.log10(1 + fmin / 700), 2595 * np.log10(1 + fmax / 700)
    mels = lo + (hi - lo) * np.arange(1, n_mels + 1) / (n_mels + 1)
    return 700 * (10 ** (mels / 2595) - 1)


def test_mel_tone_peaks_in_bin_nearest_440():
    cfg = MelConfig()
    mel = mel_spectrogram(tone(440), cfg).values
    centres = _htk_centres(cfg.n_mels, cfg.fmin, cfg.fmax)
    expected = int(np.argmin(np.abs(centres - 440)))
    interior = mel[5:-5]
    assert np.all(interior.argmax(axis=1) == expected)


def test_mel_is_deterministic(voice):
    a = mel_spectrogram(voice).values
    b = mel_spectrogram(voice).values
    assert a.tobytes() == b.tobytes()


def test_mel_appended_silence_adds_only_floor_frames(voice):
    cfg = MelConfig()
    padded = Waveform(np.concatenate([voice.samples, np.zeros(24000)]), 24000)
    mel = mel_spectrogram(padded, cfg).values
    base = mel_spectrogram(voice, cfg).values
    # frames whose window lies entirely inside the appended silence
    first_silent = -(-(len(voice) + cfg.n_fft // 2) // cfg.hop)
    assert np.all(mel[first_silent:] == np.float32(np.log(cfg.log_floor)))
    untouched = (len(voice) - cfg.n_fft // 2) // cfg.hop
    np.testing.assert_allclose(mel[:untouched], base[:untouched], atol=1e-4)


def test_mel_config_validation():
    with pytest.raises(ContractError):
        MelConfig(hop=2048)
    with pytest.raises(ContractError):
        MelConfig(fmax=13000)
    with pytest.raises(ContractError):
        mel_spectrogram(Waveform(np.zeros(100), 16000), MelConfig())
