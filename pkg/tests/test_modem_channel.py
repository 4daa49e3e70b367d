import numpy as np
import pytest
from scipy.stats import ks_2samp

from ftnpolar.modem_channel import (
    NoiseSpec,
    add_awgn,
    apply_isi,
    discrete_channel,
    ebn0_to_sigma2,
    ftn_modulate,
    gram_factor,
    map_bits,
    matched_filter_sample,
)
from ftnpolar.pulse_isi import PulseSpec, autocorrelation_g, isi_taps, rrc_pulse
from ftnpolar.sim_harness import SimConfig, run_ber_point

SPEC08 = PulseSpec(beta=0.3, tau=0.8)


def tap_model(a, spec):
    """y_k = sum_n a_n g((k - n) tau) with the closed-form g, dense."""
    k = np.arange(len(a))
    return autocorrelation_g((k[:, None] - k[None, :]) * spec.tau, spec) @ a


class TestMapBits:
    def test_bpsk(self):
        np.testing.assert_array_equal(map_bits(np.array([0, 1, 0])), [1.0, -1.0, 1.0])

    def test_bpsk_zeros(self):
        assert np.all(map_bits(np.zeros(16, dtype=int)) == 1.0)

    def test_qpsk_gray(self):
        s = map_bits(np.array([0, 0, 0, 1, 1, 0, 1, 1]), "qpsk")
        np.testing.assert_allclose(s * np.sqrt(2), [1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])
        np.testing.assert_allclose(np.abs(s), 1.0)

    def test_qpsk_odd_length(self):
        with pytest.raises(ValueError):
            map_bits(np.array([0, 1, 1]), "qpsk")


class TestEbN0:
    @pytest.mark.parametrize("ebn0,rate,expected", [(0.0, 1.0, 0.5), (0.0, 0.5, 1.0),
                                                    (3.0103, 0.5, 0.5)])
    def test_values(self, ebn0, rate, expected):
        assert ebn0_to_sigma2(ebn0, rate, 1) == pytest.approx(expected, rel=1e-5)

    def test_qpsk_halves_variance(self):
        assert ebn0_to_sigma2(2.0, 1.0, 2) == pytest.approx(ebn0_to_sigma2(2.0, 1.0, 1) / 2)

    @pytest.mark.parametrize("rate", [0.0, -0.5, 1.5])
    def test_bad_rate(self, rate):
        with pytest.raises(ValueError):
            ebn0_to_sigma2(0.0, rate)


class TestWaveformPath:
    def test_single_symbol_is_the_pulse(self):
        s = ftn_modulate(np.array([1.0]), SPEC08)
        np.testing.assert_allclose(s, rrc_pulse(SPEC08.grid(), SPEC08), atol=1e-12)

    def test_single_symbol_samples_the_taps(self):
        a = np.zeros(16)
        a[0] = 1.0
        y = matched_filter_sample(ftn_modulate(a, SPEC08), SPEC08, 16)
        g = isi_taps(SPEC08, 1e-3).g
        np.testing.assert_allclose(y[:g.size], g, atol=1e-4)

    def test_nyquist_identity(self):
        # truncation tails cost ~1e-5 at 32 symbols of span; 64 keeps them below 1e-6
        spec = PulseSpec(beta=0.3, tau=1.0, span_symbols=64)
        a = map_bits(np.random.default_rng(0).integers(0, 2, 24))
        y = matched_filter_sample(ftn_modulate(a, spec), spec, 24)
        np.testing.assert_allclose(y, a, atol=1e-6)

    @pytest.mark.parametrize("tau", [0.8, 0.7, 0.6])
    def test_frame_matches_tap_model(self, tau):
        # lags stay well inside the 32-symbol pulse span
        spec = PulseSpec(beta=0.3, tau=tau)
        a = map_bits(np.random.default_rng(1).integers(0, 2, 24))
        y = matched_filter_sample(ftn_modulate(a, spec), spec, 24)
        np.testing.assert_allclose(y, tap_model(a, spec), atol=1e-4)

    def test_two_symbol_peak(self):
        s = ftn_modulate(np.array([1.0, 1.0]), SPEC08)
        pad = (s.size - SPEC08.oversampling - 1) // 2
        t = (np.arange(s.size) - pad) * SPEC08.dt
        direct = rrc_pulse(t, SPEC08) + rrc_pulse(t - SPEC08.tau, SPEC08)
        np.testing.assert_allclose(s, direct, atol=1e-12)
        mid = np.abs(t - SPEC08.tau / 2) <= SPEC08.tau / 2
        assert s[mid].max() > 1.0

    def test_energy(self):
        a = map_bits(np.random.default_rng(2).integers(0, 2, 20))
        s = ftn_modulate(a, SPEC08)
        energy = np.sum(s ** 2) * SPEC08.dt
        k = np.arange(20)
        expected = a @ autocorrelation_g((k[:, None] - k[None, :]) * SPEC08.tau, SPEC08) @ a
        assert energy == pytest.approx(expected, abs=1e-3)

    def test_grid_mismatch(self):
        s = ftn_modulate(np.ones(8), SPEC08)
        with pytest.raises(ValueError):
            matched_filter_sample(s[:-1], SPEC08, 8)

    def test_zero_noise_is_identity(self):
        s = ftn_modulate(np.ones(8), SPEC08)
        out = add_awgn(s, NoiseSpec(0.0, 0.0), SPEC08, np.random.default_rng(0))
        np.testing.assert_array_equal(out, s)


@pytest.fixture(scope="module")
def mf_noise():
    rng = np.random.default_rng(2024)
    sigma2 = 0.5
    n_sym, frames = 1000, 1000
    s = ftn_modulate(np.zeros(n_sym), SPEC08)
    out = np.empty((frames, n_sym))
    for i in range(frames):
        r = add_awgn(s, NoiseSpec(0.0, sigma2), SPEC08, rng)
        out[i] = matched_filter_sample(r, SPEC08, n_sym)
    return out, sigma2


class TestNoiseStatistics:
    def test_variance(self, mf_noise):
        w, sigma2 = mf_noise
        assert np.mean(w ** 2) / sigma2 == pytest.approx(1.0, rel=0.01)

    def test_lag_one_correlation(self, mf_noise):
        w, sigma2 = mf_noise
        corr = np.mean(w[:, 1:] * w[:, :-1]) / sigma2
        assert corr == pytest.approx(isi_taps(SPEC08).g[1], rel=0.02)


class TestDiscretePath:
    def test_tau_one_white(self):
        spec = PulseSpec(beta=0.3, tau=1.0)
        taps = isi_taps(spec)
        a = map_bits(np.random.default_rng(0).integers(0, 2, 64))
        y = discrete_channel(a, taps, NoiseSpec(0.0, 0.0), np.random.default_rng(0))
        np.testing.assert_array_equal(y, a)
        chol, loading = gram_factor(taps, 64)
        np.testing.assert_array_equal(chol, np.eye(64))
        assert loading == 0.0

    def test_noiseless_matches_waveform(self):
        # fine taps: the 1e-3 default leaves a few 1e-3 of truncated ISI
        taps = isi_taps(SPEC08, 1e-9)
        a = map_bits(np.random.default_rng(3).integers(0, 2, 24))
        yd = discrete_channel(a, taps, NoiseSpec(0.0, 0.0), np.random.default_rng(0))
        yw = matched_filter_sample(ftn_modulate(a, SPEC08), SPEC08, 24)
        np.testing.assert_allclose(yd, yw, atol=1e-4)

    def test_indefinite_gram_gets_loading(self):
        taps = isi_taps(PulseSpec(beta=0.3, tau=0.6), 1e-3)
        chol, loading = gram_factor(taps, 256)
        assert loading > 0
        gram = chol @ chol.T
        np.testing.assert_allclose(np.diag(gram), 1.0 + loading)
        np.testing.assert_allclose(gram[0, 1:taps.L], taps.g[1:], atol=1e-12)

    def test_noisy_paths_indistinguishable(self):
        taps = isi_taps(SPEC08, 1e-9)
        rng = np.random.default_rng(99)
        a = map_bits(rng.integers(0, 2, 1000))
        sigma2 = 0.3
        s = ftn_modulate(a, SPEC08)
        yw = np.concatenate([
            matched_filter_sample(add_awgn(s, NoiseSpec(0.0, sigma2), SPEC08, rng), SPEC08, 1000)
            for _ in range(100)
        ])
        yd = discrete_channel(np.tile(a, (100, 1)), taps, NoiseSpec(0.0, sigma2), rng).ravel()
        assert ks_2samp(yw, yd).pvalue > 0.01

    def test_apply_isi_batched(self):
        taps = isi_taps(SPEC08)
        a = map_bits(np.random.default_rng(4).integers(0, 2, (3, 30)))
        batch = apply_isi(a, taps)
        for row, y in zip(a, batch):
            np.testing.assert_allclose(apply_isi(row, taps), y, atol=1e-12)

    def test_ber_matches_waveform_path(self):
        common = dict(tau=0.8, detector="sss", coding="none", n=512, min_bit_errors=300,
                      batch_frames=16)
        rd = run_ber_point(SimConfig(channel_path="discrete", **common), 6.0)
        rw = run_ber_point(SimConfig(channel_path="waveform", **common), 6.0)
        # both estimates come from binomial counts: 3 sigma of the difference
        p = (rd.bit_errors + rw.bit_errors) / (rd.bits_simulated + rw.bits_simulated)
        sd = np.sqrt(p * (1 - p) * (1 / rd.bits_simulated + 1 / rw.bits_simulated))
        assert abs(rd.ber - rw.ber) <= 3 * sd
