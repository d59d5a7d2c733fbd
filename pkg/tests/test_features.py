import numpy as np
import pytest
import torch

from helpers import speech_like, tone, white_noise
from mosanet.audio import Waveform, mix_at_snr
from mosanet.configfile import ConfigError
from mosanet.features import (
    FeatureBundle,
    FeatureConfig,
    FeatureExtractor,
    FilterbankParams,
    SincFilterbank,
    SslStubProvider,
    assemble_bundle,
    istft,
    istft_complex,
    log_power_spec,
    lps_to_magnitude,
    power_spec,
    project_ssl,
    read_cache,
    ri_features,
    sinc_filterbank,
    spectral_features,
    ssl_embed,
    stft,
    write_cache,
)
from mosanet.features.ssl import SslProviderError


# ---- STFT / ISTFT ----------------------------------------------------------

def test_single_window_gives_one_frame():
    frames = stft(Waveform(np.zeros(512) + 0.1))
    assert frames.shape == (1, 257)


def test_frame_count_formula():
    n = 16000
    frames = stft(speech_like(1.0, seed=0))
    assert frames.shape[0] == 1 + (n - 512) // 256


def test_too_short_input_rejected():
    with pytest.raises(ValueError, match="shorter than one"):
        stft(Waveform(np.ones(100)))


def test_dc_input_matches_hamming_dft_oracle():
    # closed form: periodic Hamming 0.54 - 0.46 cos -> rfft bins
    # [0.54*M, -0.23*M, 0, ...]; one-sided bin-0 energy fraction
    # 0.54^2 / (0.54^2 + 0.23^2)
    frames = stft(Waveform(np.ones(512)))
    spectrum = frames[0]
    assert spectrum[0].real == pytest.approx(0.54 * 512, rel=1e-12)
    assert spectrum[1].real == pytest.approx(-0.23 * 512, rel=1e-12)
    assert np.max(np.abs(spectrum[2:])) < 1e-9
    energy = np.abs(spectrum) ** 2
    frac0 = energy[0] / energy.sum()
    assert frac0 == pytest.approx(0.54**2 / (0.54**2 + 0.23**2), rel=1e-9)
    assert int(np.argmax(energy)) == 0
    assert energy[:3].sum() / energy.sum() > 0.99


def test_istft_roundtrip_is_exact_on_covered_samples():
    for seed in range(10):
        wav = speech_like(0.4 + 0.07 * seed, seed=seed)
        rec = istft_complex(stft(wav))
        n = len(rec)
        assert np.max(np.abs(rec.samples - wav.samples[:n])) < 1e-6
        assert len(wav) - n < 512  # at most one window of tail loss


def test_istft_zero_magnitude_gives_silence():
    frames = stft(speech_like(0.5, seed=1))
    out = istft(np.zeros(np.abs(frames).shape), np.angle(frames))
    assert np.allclose(out.samples, 0.0)


def test_istft_shape_mismatch():
    frames = stft(speech_like(0.5, seed=1))
    with pytest.raises(ValueError, match="shapes differ"):
        istft(np.abs(frames), np.angle(frames)[:-1])


def test_clean_magnitude_with_noisy_phase_reanalysis():
    # derived tolerances measured from this re-analysis oracle: phase
    # inconsistency bounds the magnitude error, shrinking with SNR
    clean = speech_like(1.0, seed=3)
    ref = np.abs(stft(clean))
    for snr, bound in ((5.0, 0.1), (40.0, 0.01)):
        noisy = mix_at_snr(clean, white_noise(1.5, seed=4), snr, rng=0)
        y = istft(np.abs(stft(clean)), np.angle(stft(noisy)))
        got = np.abs(stft(y))
        rel = np.linalg.norm(got - ref[: got.shape[0]]) / np.linalg.norm(ref[: got.shape[0]])
        assert rel < bound


# ---- spectral kinds --------------------------------------------------------

def test_power_spec_is_squared_magnitude():
    frames = stft(speech_like(0.3, seed=2))
    ps = power_spec(frames)
    assert ps.kind == "PS"
    np.testing.assert_allclose(ps.values, frames.real**2 + frames.imag**2, atol=1e-12)
    assert np.all(ps.values >= 0)


def test_zero_frame_gives_zero_power():
    ps = power_spec(np.zeros((3, 257), dtype=complex))
    assert np.all(ps.values == 0.0)


def test_lps_of_unit_magnitude_is_near_zero():
    frames = np.ones((2, 257), dtype=complex)
    lps = log_power_spec(frames)
    assert np.max(np.abs(lps.values)) < 1e-11


def test_lps_magnitude_inversion():
    frames = stft(speech_like(0.3, seed=4))
    lps = log_power_spec(frames)
    mag = lps_to_magnitude(lps.values)
    # the ignored eps floor shifts tiny bins by sqrt(m^2+1e-12)-m < 1e-8
    np.testing.assert_allclose(mag, np.abs(frames), rtol=1e-6, atol=1e-8)


def test_ri_features_stack():
    frames = stft(speech_like(0.3, seed=5))
    ri = ri_features(frames)
    assert ri.kind == "COMPLEX_RI"
    assert ri.bin_count == 514
    np.testing.assert_array_equal(ri.values[:, :257], frames.real)
    np.testing.assert_array_equal(ri.values[:, 257:], frames.imag)


# ---- sinc filterbank -------------------------------------------------------

@pytest.fixture(scope="module")
def fb_params():
    return FilterbankParams.mel_initialized(40)


def test_tone_hits_containing_band(fb_params):
    for freq in (200.0, 800.0, 2000.0, 5000.0):
        out = sinc_filterbank(tone(freq, 0.3), fb_params)
        ch = int(np.mean(out, axis=0).argmax())
        assert fb_params.band_low_hz[ch] <= freq <= fb_params.band_high_hz[ch]


def test_silence_gives_log_floor(fb_params):
    out = sinc_filterbank(Waveform(np.zeros(8000)), fb_params)
    np.testing.assert_allclose(out, np.log(1e-12))


def test_lfb_frame_count_tracks_stft(fb_params):
    wav = speech_like(0.9, seed=6)
    lfb = sinc_filterbank(wav, fb_params)
    assert abs(lfb.shape[0] - stft(wav).shape[0]) <= 1


def test_cutoff_gradients_match_finite_differences():
    torch.manual_seed(0)
    params = FilterbankParams(
        band_low_hz=np.array([300.0, 1000.0, 2500.0]),
        band_high_hz=np.array([800.0, 2000.0, 4000.0]),
        kernel_ms=4.0,
    )
    fb = SincFilterbank(params).double()
    x = torch.as_tensor(np.random.default_rng(0).standard_normal(1600))
    weights = torch.as_tensor(np.random.default_rng(1).standard_normal((5, 3)))
    (fb(x) * weights).sum().backward()
    h = 1e-3
    for param in (fb.low_hz, fb.high_hz):
        for i in range(3):
            with torch.no_grad():
                param[i] += h
                up = (fb(x) * weights).sum().item()
                param[i] -= 2 * h
                down = (fb(x) * weights).sum().item()
                param[i] += h
            fd = (up - down) / (2 * h)
            assert fd == pytest.approx(param.grad[i].item(), rel=1e-4)


def test_band_projection_repairs_invalid_cutoffs():
    fb = SincFilterbank(FilterbankParams.mel_initialized(8))
    with torch.no_grad():
        fb.low_hz[0] = 5000.0   # above its high cutoff
        fb.high_hz[1] = 9000.0  # above Nyquist
        fb.low_hz[2] = -4.0
    fb.project_valid_bands_()
    low = fb.low_hz.detach().numpy()
    high = fb.high_hz.detach().numpy()
    assert np.all(low > 0) and np.all(low < high) and np.all(high < 8000.0)
    FilterbankParams(band_low_hz=low, band_high_hz=high)  # invariants hold


def test_invalid_params_rejected():
    with pytest.raises(ValueError, match="Nyquist"):
        FilterbankParams(band_low_hz=np.array([100.0]), band_high_hz=np.array([9000.0]))


# ---- SSL provider / cache --------------------------------------------------

def test_stub_provider_is_deterministic():
    wav = speech_like(0.5, seed=7)
    provider = SslStubProvider(dim=8)
    a = provider.embed(wav)
    b = provider.embed(wav)
    np.testing.assert_array_equal(a, b)
    assert a.shape[1] == 8


def test_stub_frame_count_tracks_stride():
    provider = SslStubProvider(dim=8, stride_ms=20.0)
    for dur in (0.4, 0.75, 1.3):
        wav = speech_like(dur, seed=8)
        frames = provider.embed(wav).shape[0]
        assert abs(frames - len(wav) / provider.stride) <= 1


def test_cache_roundtrip_bit_identical(tmp_path):
    provider = SslStubProvider(dim=8)
    wav = speech_like(0.5, seed=9)
    matrix = provider.embed(wav)
    path = write_cache(tmp_path / "u.emb", matrix)
    np.testing.assert_array_equal(read_cache(path), matrix)
    header = path.read_bytes()[:16]
    assert header[:8] == b"MOSASSL1"
    assert int.from_bytes(header[8:12], "little") == matrix.shape[0]
    assert int.from_bytes(header[12:16], "little") == 8


def test_ssl_embed_prefers_cache(tmp_path):
    wav = speech_like(0.5, seed=10)
    provider = SslStubProvider(dim=8)
    path = tmp_path / "x.emb"
    first = ssl_embed(wav, path, provider)
    # cache answers even without a provider
    second = ssl_embed(None, path, None)
    np.testing.assert_array_equal(first, second)


def test_ssl_embed_without_provider_or_cache_errors(tmp_path):
    with pytest.raises(SslProviderError, match="ssl provider unavailable"):
        ssl_embed(None, tmp_path / "missing.emb", None)


def test_bad_cache_magic_rejected(tmp_path):
    path = tmp_path / "bad.emb"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(SslProviderError, match="not an embedding cache"):
        read_cache(path)


# ---- bundle ----------------------------------------------------------------

def test_bundle_total_is_stream_sum():
    spectral = spectral_features(speech_like(0.5, seed=11), "PS")
    lfb = np.zeros((spectral.frame_count, 80))
    ssl = np.zeros((5, 128))
    bundle = assemble_bundle(spectral=spectral, lfb=lfb, ssl=ssl, d_common=128)
    assert bundle.total_frames == spectral.frame_count * 2 + 5


def test_bundle_without_ssl():
    spectral = spectral_features(speech_like(0.5, seed=12), "PS")
    bundle = assemble_bundle(spectral=spectral, lfb=np.zeros((7, 80)))
    assert bundle.total_frames == spectral.frame_count + 7


def test_bundle_single_stream():
    spectral = spectral_features(speech_like(0.5, seed=13), "PS")
    assert assemble_bundle(spectral=spectral).total_frames == spectral.frame_count


def test_bundle_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        assemble_bundle(ssl=np.zeros((5, 64)), d_common=128)
    with pytest.raises(ValueError, match="at least one"):
        assemble_bundle()


def test_project_ssl_identity_and_zero():
    ssl = np.random.default_rng(0).standard_normal((6, 16))
    np.testing.assert_allclose(project_ssl(ssl, np.eye(16)), ssl)
    assert np.all(project_ssl(ssl, np.zeros((8, 16))) == 0.0)
    with pytest.raises(ValueError, match="widen"):
        project_ssl(ssl, np.zeros((32, 16)))


def test_project_ssl_gradients():
    torch.manual_seed(1)
    ssl = torch.randn(4, 16, dtype=torch.float64)
    weight = torch.randn(8, 16, dtype=torch.float64, requires_grad=True)
    bias = torch.randn(8, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(
        lambda w, b: project_ssl(ssl, w, b).sum(), (weight, bias)
    )


# ---- feature config / extractor ---------------------------------------------

def test_feature_config_validation():
    with pytest.raises(ValueError, match="pick one"):
        FeatureConfig(streams=("PS", "COMPLEX"))
    with pytest.raises(ValueError, match="unknown streams"):
        FeatureConfig(streams=("MEL",))


def test_feature_config_from_file(tmp_path):
    path = tmp_path / "features.cfg"
    path.write_text(
        "[stft]\nkind = \"PS\"\n\n"
        "[lfb]\nenabled = true\nfilters = 16\n\n"
        "[ssl]\nenabled = true\nprovider = \"stub\"\ndim = 4\n"
    )
    config = FeatureConfig.from_file(path)
    assert config.streams == ("PS", "LFB", "SSL")
    assert config.lfb_filters == 16
    assert config.ssl_dim == 4


def test_feature_config_unknown_key(tmp_path):
    path = tmp_path / "features.cfg"
    path.write_text("[stft]\nkind = \"PS\"\nwindow = \"hann\"\n")
    with pytest.raises(ConfigError, match="window"):
        FeatureConfig.from_file(path)


def test_extractor_produces_configured_streams(tmp_path):
    config = FeatureConfig(
        streams=("PS", "LFB", "SSL"), ssl_dim=4, ssl_cache_dir=str(tmp_path)
    )
    extractor = FeatureExtractor(config)
    wav = speech_like(0.5, seed=14)
    raw = extractor.extract(wav, "utt0")
    assert raw.spectral is not None and raw.spectral.kind == "PS"
    assert raw.samples is not None
    assert raw.ssl is not None and raw.ssl.shape[1] == 4
    # second call hits the on-disk cache
    again = extractor.extract(wav, "utt0")
    np.testing.assert_array_equal(raw.ssl, again.ssl)
    assert (tmp_path / "stub4" / "utt0.emb").exists()
