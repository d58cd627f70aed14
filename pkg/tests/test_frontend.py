"""Frontend checks: framing, mel geometry, log energies, context stacking,
WAV IO, and the feature dump format."""

import numpy as np
import numpy.testing as npt
import pytest

from kwslite import (
    Context,
    FrameConfig,
    Waveform,
    build_mel_filterbank,
    frame_signal,
    log_mel,
    log_mel_frames,
    mel_filter_centers,
    read_feature_dump,
    read_wav,
    stack_context,
    write_feature_dump,
    write_wav,
)
from kwslite.errors import AudioFormatError, InsufficientAudioError, KwsError
from kwslite.frontend import frame_count

SR = 16000


def tone(freq, seconds=1.0, amp=0.5):
    t = np.arange(int(round(seconds * SR))) / SR
    return (amp * np.sin(2 * np.pi * freq * t)).astype(np.float32)


# --- framing ---------------------------------------------------------------


def test_one_second_gives_98_frames():
    frames = frame_signal(Waveform(np.zeros(SR, dtype=np.float32)))
    assert frames.shape == (98, 400)


def test_frame_count_law(rng):
    # formula against brute-force placement enumeration
    cfg = FrameConfig()
    for _ in range(200):
        n = int(rng.integers(0, 4 * SR))
        expected = len([s for s in range(0, max(n - cfg.window_length, 0) + 1, cfg.hop)
                        if s + cfg.window_length <= n])
        assert frame_count(n, cfg) == expected


def test_exactly_one_window():
    assert frame_signal(Waveform(np.zeros(400, dtype=np.float32))).shape == (1, 400)
    with pytest.raises(InsufficientAudioError):
        frame_signal(Waveform(np.zeros(399, dtype=np.float32)))


def test_preemphasis_and_window_applied():
    # a constant signal: frame = (1 - 0.97) * hamming except the first sample
    x = np.ones(400, dtype=np.float32)
    frames = frame_signal(Waveform(x))
    ham = np.hamming(400)
    npt.assert_allclose(frames[0, 0], ham[0], rtol=1e-6)
    npt.assert_allclose(frames[0, 1:], 0.03 * ham[1:], rtol=1e-4)


def test_hop_shift_moves_frames_by_one():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(SR).astype(np.float32)
    a = log_mel_frames(Waveform(x))
    b = log_mel_frames(Waveform(x[160:]))
    npt.assert_allclose(a[1:], b[: a.shape[0] - 1], atol=1e-4)


# --- mel filterbank ---------------------------------------------------------


def test_melbank_shape_and_coverage():
    bank = build_mel_filterbank()
    assert bank.shape == (40, 257)
    assert np.all(bank >= 0.0)
    assert np.all(bank.sum(axis=1) > 0.0)


def test_mel_centers_match_independent_formula():
    # recompute the equal-mel spacing directly from the 2595*log10(1+f/700) map
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges = np.linspace(to_mel(20.0), to_mel(8000.0), 42)
    expected = from_mel(edges)[1:-1]
    npt.assert_allclose(mel_filter_centers(), expected, rtol=1e-12)
    assert np.all(np.diff(expected) > 0)
    # equal spacing on the mel axis
    npt.assert_allclose(np.diff(to_mel(expected)), np.diff(to_mel(expected))[0], rtol=1e-9)


def test_filters_too_many_for_fft():
    with pytest.raises(KwsError):
        build_mel_filterbank(FrameConfig(window_length=8, hop=4, fft_size=16, mel_filters=40))


# --- log-mel ----------------------------------------------------------------


def test_silence_hits_log_floor():
    frames = log_mel_frames(Waveform(np.zeros(SR, dtype=np.float32)))
    npt.assert_allclose(frames, np.log(1e-10), rtol=1e-6)


def test_pure_tone_peaks_at_nearest_filter():
    frames = log_mel_frames(Waveform(tone(1000.0)))
    centers = mel_filter_centers()
    peak = int(np.argmax(frames.mean(axis=0)))
    assert peak == int(np.argmin(np.abs(centers - 1000.0)))


def test_amplitude_doubling_adds_log4():
    lo = log_mel_frames(Waveform(tone(1000.0, amp=0.2)))
    hi = log_mel_frames(Waveform(tone(1000.0, amp=0.4)))
    # compare only comfortably unclamped energies
    mask = lo > np.log(1e-10) + 2.0
    diff = (hi - lo)[mask]
    npt.assert_allclose(diff, np.log(4.0), atol=1e-4)


def test_features_float32_and_finite():
    frames = log_mel_frames(Waveform(tone(440.0)))
    assert frames.dtype == np.float32
    assert np.all(np.isfinite(frames))


def test_frontend_deterministic():
    x = np.random.default_rng(11).standard_normal(SR).astype(np.float32)
    a = log_mel_frames(Waveform(x))
    b = log_mel_frames(Waveform(x.copy()))
    npt.assert_array_equal(a, b)


def test_log_mel_rejects_overlong_frames():
    bank = build_mel_filterbank()
    with pytest.raises(Exception):
        log_mel(np.zeros((3, 600)), bank)


# --- context stacking -------------------------------------------------------


def test_stack_shapes():
    frames = np.zeros((98, 40), dtype=np.float32)
    assert stack_context(frames, Context(25, 10)).shape == (98, 36, 40)
    assert stack_context(frames, Context(23, 8)).shape == (98, 32, 40)
    assert stack_context(frames, Context(39, 8)).shape == (98, 48, 40)


def test_stack_zero_context_identity(rng):
    frames = rng.standard_normal((10, 4)).astype(np.float32)
    npt.assert_array_equal(stack_context(frames, Context(0, 0))[:, 0, :], frames)


def test_stack_edge_replication(rng):
    frames = rng.standard_normal((6, 3)).astype(np.float32)
    windows = stack_context(frames, Context(2, 2))
    # window 0: frames [0,0,0,1,2]; window 5: frames [3,4,5,5,5]
    npt.assert_array_equal(windows[0], frames[[0, 0, 0, 1, 2]])
    npt.assert_array_equal(windows[5], frames[[3, 4, 5, 5, 5]])
    # interior rows are exact copies
    npt.assert_array_equal(windows[3], frames[1:6])


def test_stack_empty_errors():
    with pytest.raises(InsufficientAudioError):
        stack_context(np.zeros((0, 40), dtype=np.float32), Context(1, 1))


# --- WAV IO -----------------------------------------------------------------


def test_wav_roundtrip(tmp_path, rng):
    x = np.clip(rng.standard_normal(SR // 2) * 0.2, -1, 1).astype(np.float32)
    path = tmp_path / "x.wav"
    write_wav(path, x)
    back = read_wav(path)
    assert back.sample_rate == SR
    npt.assert_allclose(back.samples, x, atol=1.0 / 32768.0)


def test_wav_rejects_wrong_formats(tmp_path):
    import struct
    import wave

    stereo = tmp_path / "stereo.wav"
    with wave.open(str(stereo), "wb") as wf:
        wf.setnchannels(2)
        wf.setsampwidth(2)
        wf.setframerate(SR)
        wf.writeframes(b"\x00" * 64)
    with pytest.raises(AudioFormatError):
        read_wav(stereo)

    wrong_rate = tmp_path / "rate.wav"
    with wave.open(str(wrong_rate), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(44100)
        wf.writeframes(b"\x00" * 64)
    with pytest.raises(AudioFormatError):
        read_wav(wrong_rate)

    eight_bit = tmp_path / "w8.wav"
    with wave.open(str(eight_bit), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(1)
        wf.setframerate(SR)
        wf.writeframes(b"\x00" * 64)
    with pytest.raises(AudioFormatError):
        read_wav(eight_bit)

    not_wav = tmp_path / "junk.wav"
    not_wav.write_bytes(struct.pack("<I", 0xDEADBEEF) * 8)
    with pytest.raises(AudioFormatError):
        read_wav(not_wav)


# --- feature dump -----------------------------------------------------------


def test_feature_dump_roundtrip(tmp_path, rng):
    windows = rng.standard_normal((7, 32, 40)).astype(np.float32)
    path = tmp_path / "feats.bin"
    write_feature_dump(path, windows)
    with open(path, "rb") as fh:
        assert fh.readline() == b"32 40 7\n"
    npt.assert_array_equal(read_feature_dump(path), windows)


def test_feature_dump_truncation_detected(tmp_path, rng):
    path = tmp_path / "feats.bin"
    write_feature_dump(path, rng.standard_normal((3, 2, 4)).astype(np.float32))
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(KwsError):
        read_feature_dump(path)
