import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distress_screen import audio_features as af
from distress_screen.errors import DataError, SampleRateError
from distress_screen.wav import AudioClip, load_wav, write_wav

from conftest import SR, sine
from oracles import naive_dct_ortho, naive_dft_magnitudes

# frames whose window lies entirely inside a 1 s clip (edges see reflected audio)
INTERIOR = slice(2, -2)


# -- STFT ------------------------------------------------------------------


def test_stft_zero_clip():
    spec = af.stft_magnitude(AudioClip(np.zeros(SR), SR))
    assert spec.magnitudes.shape == (1025, 1 + SR // 512)
    assert not spec.magnitudes.any()


def test_stft_dc_energy_in_bin_zero():
    spec = af.stft_magnitude(AudioClip(np.ones(SR), SR))
    assert np.all(np.argmax(spec.magnitudes, axis=0) == 0)


@pytest.mark.parametrize("k", [5, 37, 128, 400])
def test_stft_bin_centered_sine(k):
    freq = k * SR / af.FRAME_LENGTH
    clip = sine(freq)
    spec = af.stft_magnitude(clip)
    assert np.all(np.argmax(spec.magnitudes[:, INTERIOR], axis=0) == k)
    oracle = naive_dft_magnitudes(clip.samples, af.FRAME_LENGTH, af.HOP_LENGTH)
    np.testing.assert_allclose(spec.magnitudes, oracle, rtol=1e-6, atol=1e-6 * oracle.max())


def test_stft_rejects_bad_parameters():
    clip = sine(440)
    with pytest.raises(DataError):
        af.stft_magnitude(clip, frame_length=1000)
    with pytest.raises(DataError):
        af.stft_magnitude(clip, frame_length=512, hop_length=1024)
    with pytest.raises(DataError):
        af.stft_magnitude(AudioClip(np.zeros(0), SR))


# -- mel / mfcc ------------------------------------------------------------


def test_mel_zero():
    spec = af.stft_magnitude(AudioClip(np.zeros(SR), SR))
    assert not af.mel_spectrogram(spec).any()


def test_mel_1khz_peaks_at_nearest_center():
    mel = af.mel_spectrogram(af.stft_magnitude(sine(1000)))
    centers = af.mel_band_edges(128, 0.0, SR / 2)[1:-1]
    assert np.argmax(mel.mean(axis=1)) == np.argmin(np.abs(centers - 1000))


def test_mel_single_bin_support():
    mags = np.zeros((1025, 3))
    mags[200] = 1.0
    spec = af.Spectrogram(mags, 2048, 512, SR)
    mel = af.mel_spectrogram(spec)
    fb = af.mel_filterbank(SR, 2048)
    assert set(np.flatnonzero(mel[:, 0])) == set(np.flatnonzero(fb[:, 200]))
    assert 1 <= np.count_nonzero(mel[:, 0]) <= 2


def test_mel_filterbank_rejects_fmax_above_nyquist():
    with pytest.raises(DataError):
        af.mel_filterbank(SR, 2048, fmax=9000)


def test_mfcc_flat_column():
    out = af.mfcc(np.full((128, 4), 3.0))
    assert np.all(out[0] != 0)
    np.testing.assert_allclose(out[1:], 0.0, atol=1e-12)


def test_mfcc_zero_mel_identical_columns():
    out = af.mfcc(np.zeros((128, 5)))
    assert np.all(np.isfinite(out))
    assert np.all(out == out[:, :1])


def test_mfcc_matches_naive_dct(rng):
    mel = rng.uniform(0, 5, (128, 3))
    log_mel = 10 * np.log10(mel + af.LOG_FLOOR)
    expected = np.stack([naive_dct_ortho(log_mel[:, t])[:13] for t in range(3)], axis=1)
    np.testing.assert_allclose(af.mfcc(mel), expected, rtol=1e-9, atol=1e-9)


# -- delta -----------------------------------------------------------------


def test_delta_constant_is_zero():
    assert not af.delta(np.full((3, 20), 7.5)).any()


def test_delta_ramp_interior_equals_slope():
    track = np.arange(30.0)[None, :] * 0.7
    d = af.delta(track)
    np.testing.assert_allclose(d[0, 4:-4], 0.7, rtol=1e-12)


def test_delta_matches_padded_regression_oracle(rng):
    track = rng.standard_normal((2, 12))
    width, half = 9, 4
    expected = np.zeros_like(track)
    for t in range(track.shape[1]):
        ks = np.arange(-half, half + 1)
        idx = np.clip(t + ks, 0, track.shape[1] - 1)
        for row in range(2):
            y = track[row, idx]
            # least-squares slope of y against ks
            expected[row, t] = np.sum(ks * (y - y.mean())) / np.sum(ks * ks)
    np.testing.assert_allclose(af.delta(track, width), expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("width", [2, 1, 8])
def test_delta_rejects_bad_width(width):
    with pytest.raises(DataError):
        af.delta(np.zeros((1, 5)), width)


# -- chroma / tonnetz / contrast ------------------------------------------


def _class_of(freq):
    # independent oracle: semitones from A4, A = class 9
    semis = round(12 * np.log2(freq / 440.0))
    return (semis + 9) % 12


def test_chroma_zero():
    assert not af.chroma(af.stft_magnitude(AudioClip(np.zeros(SR), SR))).any()


def test_chroma_a440():
    c = af.chroma(af.stft_magnitude(sine(440)))
    assert _class_of(440) == 9
    assert np.all(np.argmax(c, axis=0) == 9)


def test_chroma_octaves_accumulate():
    t = np.arange(SR) / SR
    clip = AudioClip(0.3 * np.sin(2 * np.pi * 220 * t) + 0.3 * np.sin(2 * np.pi * 440 * t), SR)
    spec = af.stft_magnitude(clip)
    c = af.chroma(spec)
    assert np.all(np.argmax(c[:, INTERIOR], axis=0) == 9)
    bins_220 = int(round(220 * 2048 / SR))
    bins_440 = int(round(440 * 2048 / SR))
    assert _class_of(spec.frequencies[bins_220]) == _class_of(spec.frequencies[bins_440]) == 9


def test_tonnetz_zero():
    assert not af.tonnetz(np.zeros((12, 4))).any()


@pytest.mark.parametrize("c", range(12))
def test_tonnetz_one_hot(c):
    chroma = np.zeros((12, 1))
    chroma[c] = 2.0
    np.testing.assert_allclose(af.tonnetz(chroma)[:, 0], af.tonnetz_projection()[:, c])


def test_tonnetz_uniform_is_zero():
    proj = af.tonnetz_projection()
    np.testing.assert_allclose(proj.sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(af.tonnetz(np.ones((12, 3))), 0.0, atol=1e-12)


def test_contrast_flat_spectrum():
    spec = af.Spectrogram(np.ones((1025, 4)), 2048, 512, SR)
    np.testing.assert_allclose(af.spectral_contrast(spec), 0.0, atol=1e-12)


def test_contrast_zero_spectrum():
    spec = af.Spectrogram(np.zeros((1025, 4)), 2048, 512, SR)
    assert not af.spectral_contrast(spec).any()


@pytest.mark.parametrize("band", range(7))
def test_contrast_peaks_in_band_with_dominant_bin(band, rng):
    edges = af.contrast_band_edges(SR)
    freqs = np.arange(1025) * SR / 2048
    lo, hi = edges[band], (edges[band + 1] if band < 6 else SR / 2)
    target = np.flatnonzero((freqs >= lo) & (freqs < hi))[len(np.flatnonzero((freqs >= lo) & (freqs < hi))) // 2]
    mags = 1e-3 * (1 + 0.1 * rng.random((1025, 2)))
    mags[target] = 10.0
    out = af.spectral_contrast(af.Spectrogram(mags, 2048, 512, SR))
    assert np.all(np.argmax(out, axis=0) == band)


def test_contrast_band_edge_beyond_nyquist():
    with pytest.raises(DataError):
        af.contrast_band_edges(SR, n_bands=7)


# -- pitch -----------------------------------------------------------------


def _pitch(clip):
    return af.pitch_estimate(af.stft_magnitude(clip), af.frame_rms(clip))


def test_pitch_silence():
    assert _pitch(AudioClip(np.zeros(SR), SR)) == 0.0


def test_pitch_440():
    assert abs(_pitch(sine(440)) - 440) <= 5


def test_pitch_100():
    assert abs(_pitch(sine(100)) - 100) <= 2


def test_parabolic_oracle_agrees():
    # oracle: fit a parabola through the three log-magnitudes around the peak with numpy.polyfit
    clip = sine(440)
    spec = af.stft_magnitude(clip)
    col = spec.magnitudes[:, 10]
    k = int(np.argmax(col))
    coeffs = np.polyfit([-1, 0, 1], np.log(col[k - 1 : k + 2]), 2)
    vertex = k - coeffs[1] / (2 * coeffs[0])
    single = af.pitch_estimate(
        af.Spectrogram(spec.magnitudes[:, 10:11], 2048, 512, SR), np.array([1.0])
    )
    assert single == pytest.approx(vertex * SR / 2048, rel=1e-9)


# -- assembly --------------------------------------------------------------


def test_segment_layout_sums_to_193():
    sizes = [s.stop - s.start for s in af.SEGMENTS.values()]
    assert sizes == [13, 13, 13, 12, 128, 7, 6, 1]
    assert sum(sizes) == af.N_AUDIO_FEATURES == 193
    starts = [s.start for s in af.SEGMENTS.values()]
    assert starts == [0, 13, 26, 39, 51, 179, 186, 192]


def test_one_second_clip_shape(rng):
    vec = af.extract_audio_features(AudioClip(rng.uniform(-0.5, 0.5, SR), SR))
    assert vec.shape == (193,)
    assert np.all(np.isfinite(vec))


def test_silence_features_finite_and_static():
    vec = af.extract_audio_features(AudioClip(np.zeros(SR), SR))
    assert np.all(np.isfinite(vec))
    assert not vec[af.SEGMENTS["delta_mfcc"]].any()
    assert not vec[af.SEGMENTS["delta2_mfcc"]].any()


def test_sine_chroma_and_pitch():
    vec = af.extract_audio_features(sine(440))
    assert np.argmax(vec[af.SEGMENTS["chroma"]]) == 9
    assert abs(vec[192] - 440) <= 5


def test_rejects_other_sample_rates():
    with pytest.raises(SampleRateError):
        af.extract_audio_features(AudioClip(np.zeros(8000), 8000))


def test_rejects_too_short_clip():
    with pytest.raises(DataError):
        af.extract_audio_features(AudioClip(np.zeros(1000), SR))


def test_extraction_is_pure(tmp_path, rng):
    path = tmp_path / "a.wav"
    write_wav(path, rng.uniform(-0.5, 0.5, SR), SR)
    a = af.extract_audio_features(load_wav(path))
    b = af.extract_audio_features(load_wav(path))
    assert a.tobytes() == b.tobytes()


def test_extract_directory_parallel_matches_serial(tmp_path, rng):
    for i in range(3):
        write_wav(tmp_path / f"p{i}.wav", rng.uniform(-0.3, 0.3, SR // 2), SR)
    serial = af.extract_directory(tmp_path, workers=1)
    parallel = af.extract_directory(tmp_path, workers=2)
    assert list(serial) == ["p0", "p1", "p2"]
    for k in serial:
        assert serial[k].tobytes() == parallel[k].tobytes()


@settings(max_examples=15, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    alpha=st.floats(0.25, 4.0),
    freq=st.floats(120.0, 1500.0),
)
def test_scale_invariance(seed, alpha, freq):
    rng = np.random.default_rng(seed)
    t = np.arange(SR) / SR
    x = 0.2 * np.sin(2 * np.pi * freq * t) + 0.02 * rng.standard_normal(SR)
    assert np.sqrt(np.mean((alpha * x) ** 2)) >= 1e-3
    a = af.extract_audio_features(AudioClip(x, SR))
    b = af.extract_audio_features(AudioClip(alpha * x, SR))
    chroma = af.SEGMENTS["chroma"]
    assert np.argmax(a[chroma]) == np.argmax(b[chroma])
    assert b[192] == pytest.approx(a[192], rel=1e-9)
    np.testing.assert_allclose(b[1:13], a[1:13], rtol=1e-6, atol=1e-6)
