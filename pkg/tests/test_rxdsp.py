import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from imddlink.core import PAM4, PAM6, PAM8
from imddlink.rxdsp import (
    AdaptationError,
    BerReport,
    EqualizerConfig,
    EqualizerKind,
    SyncError,
    detect,
    dfe_equalize,
    estimate_postcursor,
    ffe_equalize,
    guard_symbols,
    ls_equalizer,
    measure_ber,
    mlse_1tap,
    resample_to_2sps,
    slice_levels,
    synchronize,
)
from imddlink.signal import Waveform, fft_resample
from imddlink.txdsp import SymbolSequence, demap, generate_bits, map_symbols
from oracles import brute_force_ml

N = 1 << 14


def symbols(seed=3, n=N, fmt=PAM4):
    bits = generate_bits(seed, int(n * fmt.bits_per_symbol))
    return map_symbols(bits, fmt, 100.0)


def through(sym, h=(1.0,), sigma=0.0, seed=0):
    """T-spaced circular channel h, then band-limited 2 sps waveform."""
    s = sym.levels
    y = sum(c * np.roll(s, k) for k, c in enumerate(h))
    if sigma:
        y = y + np.random.default_rng(seed).standard_normal(len(y)) * sigma
    return fft_resample(Waveform(y, 100.0), 200.0)


def cfg(kind=EqualizerKind.FFE, ff=51, fb=0, **kw):
    kw.setdefault("training_symbols", 8192)
    return EqualizerConfig(kind, ff, fb, **kw)


def q(x):
    return norm.sf(x)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(ff_taps=50), dict(ff_taps=0), dict(step_size=0), dict(step_size=1),
                                    dict(fb_taps=-1), dict(step_decay=0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            EqualizerConfig(**kw)

    def test_ffe_has_no_feedback(self):
        assert EqualizerConfig(EqualizerKind.FFE, 51, 21).fb_taps == 0

    def test_dfe_needs_feedback(self):
        with pytest.raises(ValueError):
            EqualizerConfig(EqualizerKind.DFE, 51, 0)

    def test_kind_from_string(self):
        assert EqualizerConfig("FFE+MLSE1").kind is EqualizerKind.FFE_MLSE


class TestResample2sps:
    def test_identity(self, rng):
        w = Waveform(rng.standard_normal(1000), 225.0)
        out = resample_to_2sps(w, 112.5)
        assert out.sample_rate_gsa == 225.0
        np.testing.assert_array_equal(out.samples, w.samples)

    def test_tone_preserved(self):
        n = 25600  # 100 ns at 256 GSa/s, integer cycles of 10 GHz
        t = np.arange(n) / 256.0
        out = resample_to_2sps(Waveform(np.cos(2 * np.pi * 10 * t), 256.0), 112.5)
        assert out.sample_rate_gsa == 225.0
        spec = np.abs(np.fft.rfft(out.samples)) * 2 / len(out)
        f = np.fft.rfftfreq(len(out), 1 / 225.0)
        amp = spec[np.argmin(np.abs(f - 10))]
        assert abs(20 * np.log10(amp)) <= 0.1

    def test_constant(self):
        out = resample_to_2sps(Waveform(np.full(512, 0.7), 256.0), 112.5)
        np.testing.assert_allclose(out.samples, 0.7, atol=1e-12)

    def test_rejects_slow_input(self):
        with pytest.raises(ValueError):
            resample_to_2sps(Waveform(np.zeros(64), 100.0), 112.5)


class TestSync:
    def test_integer_delay(self):
        sym = symbols(n=4096)
        w = through(sym)
        aligned, delay = synchronize(w.with_samples(np.roll(w.samples, 37)), sym)
        assert delay == 37
        np.testing.assert_allclose(aligned.samples, w.samples - w.samples.mean(), atol=1e-9)

    def test_polarity_flip(self):
        sym = symbols(n=4096)
        w = through(sym)
        aligned, delay = synchronize(w.with_samples(-np.roll(w.samples, 10)), sym)
        assert delay == 10
        np.testing.assert_allclose(aligned.samples, w.samples - w.samples.mean(), atol=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_noise_only_fails(self, seed):
        sym = symbols(n=4096)
        noise = Waveform(np.random.default_rng(seed).standard_normal(8192), 200.0)
        with pytest.raises(SyncError):
            synchronize(noise, sym)

    def test_noisy_signal_syncs(self):
        sym = symbols(n=4096)
        w = through(sym, (1, 0.3), sigma=0.5, seed=2)
        _, delay = synchronize(w.with_samples(np.roll(w.samples, 123)), sym)
        assert delay == 123


class TestFfe:
    def test_flat_noiseless(self):
        sym = symbols()
        out = ffe_equalize(through(sym), cfg(), sym)
        assert out.training_mse <= 1e-4
        assert np.max(np.abs(out.soft[100:] - sym.levels[100:])) <= 1e-2

    def test_matches_least_squares(self):
        sym = symbols()
        w = through(sym, (1.0, 0.35, -0.15))
        out = ffe_equalize(w, cfg(), sym)
        _, _, ls_mse = ls_equalizer(w, sym, 51)
        isi = np.mean((out.soft[200:] - sym.levels[200:]) ** 2)
        assert 10 * np.log10(ls_mse) <= -30
        assert 10 * np.log10(isi) <= -30

    def test_large_step_diverges(self):
        sym = symbols()
        with pytest.raises(AdaptationError):
            ffe_equalize(through(sym, (1.0, 0.35, -0.15)), cfg(step_size=0.5), sym)

    def test_training_longer_than_record(self):
        sym = symbols(n=4096)
        with pytest.raises(ValueError):
            ffe_equalize(through(sym), cfg(training_symbols=8192), sym)


class TestDfe:
    def test_postcursor_channel(self):
        sym = symbols()
        # a single feed-forward tap leaves the whole postcursor to the feedback tap
        out = dfe_equalize(through(sym, (1.0, 0.5)), cfg(EqualizerKind.DFE, 1, 1), sym)
        assert np.count_nonzero(out.decisions != sym.indices) == 0
        assert out.fb_taps[0] == pytest.approx(-0.5, abs=0.02)

    def test_flat_matches_ffe(self):
        sym = symbols()
        w = through(sym)
        a = ffe_equalize(w, cfg(), sym)
        b = dfe_equalize(w, cfg(EqualizerKind.DFE, 51, 5), sym)
        assert np.max(np.abs(b.fb_taps)) <= 1e-2
        np.testing.assert_allclose(b.soft[100:], a.soft[100:], atol=2e-2)

    def test_forced_error_burst_is_finite(self):
        sym = symbols()
        w = through(sym, (1.0, 0.5), sigma=0.02, seed=4)
        c = cfg(EqualizerKind.DFE, 5, 1)
        clean = dfe_equalize(w, c, sym)
        k = 12000
        wrong = (int(clean.decisions[k]) + 2) % 4
        forced = dfe_equalize(w, c, sym, force_decision=(k, wrong))
        diff = np.flatnonzero(forced.decisions != clean.decisions)
        assert diff[0] == k
        burst = diff[-1] - k + 1
        # with a 0.5 postcursor the feedback error decays geometrically
        assert 1 <= burst <= 20
        assert np.array_equal(forced.decisions[:k], clean.decisions[:k])


def enumerate_ml(y, h1, lv):
    """Plain numpy enumeration; a slow check on the compiled oracle."""
    n = len(y)
    idx = np.array(list(itertools.product(range(len(lv)), repeat=n)), dtype=np.int8)
    s = lv[idx]
    prev = np.hstack([np.zeros((len(s), 1)), s[:, :-1]])
    return idx[np.argmin(((y - s - h1 * prev) ** 2).sum(1))]


def pr_block(seed, n, h1, sigma, fmt=PAM4):
    r = np.random.default_rng(seed)
    idx = r.integers(0, fmt.order, n)
    s = fmt.level_array[idx]
    prev = np.concatenate([[0.0], s[:-1]])
    return idx, s + h1 * prev + sigma * r.standard_normal(n)


class TestMlse:
    def test_zero_postcursor_is_slicing(self, rng):
        y = rng.standard_normal(5000)
        for fmt in (PAM4, PAM6, PAM8):
            assert np.array_equal(mlse_1tap(y, 0.0, fmt), slice_levels(y, fmt))

    @pytest.mark.parametrize("seed", range(3))
    def test_oracles_agree(self, seed):
        _, y = pr_block(seed, 7, 0.5, 0.4)
        lv = PAM4.level_array
        assert np.array_equal(brute_force_ml(y, 0.5, lv), enumerate_ml(y, 0.5, lv))

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1), st.floats(-0.9, 0.9), st.floats(0.05, 0.6))
    def test_matches_brute_force(self, seed, h1, sigma):
        _, y = pr_block(seed, 10, h1, sigma)
        assert np.array_equal(mlse_1tap(y, h1, PAM4), brute_force_ml(y, h1, PAM4.level_array))

    @given(st.integers(0, 2**32 - 1), st.floats(-0.9, 0.9), st.floats(0.05, 0.6))
    def test_matches_brute_force_pam8(self, seed, h1, sigma):
        _, y = pr_block(seed, 6, h1, sigma, PAM8)
        assert np.array_equal(mlse_1tap(y, h1, PAM8), brute_force_ml(y, h1, PAM8.level_array))

    @given(st.integers(0, 2**32 - 1), st.floats(-0.95, 0.95), st.sampled_from([PAM4, PAM6, PAM8]))
    def test_noiseless(self, seed, h1, fmt):
        idx, y = pr_block(seed, 300, h1, 0.0, fmt)
        assert np.array_equal(mlse_1tap(y, h1, fmt), idx)

    def test_rejects_unit_postcursor(self):
        with pytest.raises(ValueError):
            mlse_1tap(np.zeros(4), 1.0, PAM4)


class TestPostcursor:
    def test_zero_residual(self):
        s = symbols().levels
        assert estimate_postcursor(s, s) == 0.0

    def test_synthetic(self):
        s = symbols().levels
        assert estimate_postcursor(s + 0.3 * np.roll(s, 1), s) == pytest.approx(0.3, abs=0.02)

    def test_white_residual(self, rng):
        s = symbols().levels
        assert abs(estimate_postcursor(s + 0.2 * rng.standard_normal(len(s)), s)) <= 0.02

    def test_needs_1000(self):
        with pytest.raises(ValueError):
            estimate_postcursor(np.zeros(999), np.zeros(999))


class TestDetect:
    @pytest.mark.parametrize("kind,fb", [("FFE", 0), ("FFE+MLSE1", 0), ("DFE", 5), ("DFE+MLSE1", 5)])
    def test_noiseless_zero_errors(self, kind, fb):
        sym = symbols()
        det = detect(through(sym, (1.0, 0.45, 0.1)), cfg(kind, 31, fb), sym)
        assert np.count_nonzero(det.decisions[64:-64] != sym.indices[64:-64]) == 0

    def test_ffe_mlse_learns_postcursor(self):
        sym = symbols()
        det = detect(through(sym, (1.0, 0.6), sigma=0.05, seed=1), cfg("FFE+MLSE1", 31), sym)
        assert 0.2 < det.postcursor < 0.95

    def test_guard(self):
        assert guard_symbols(cfg("DFE", 51, 21)) == 64
        assert guard_symbols(cfg("FFE", 101)) == 101


class TestAwgnOracle:
    @pytest.mark.parametrize("fmt,x,expected", [
        (PAM4, 1.0, 0.237982880897),
        (PAM8, 1.5, 0.116912602221),
        (PAM8, 2.0, 0.0398127309093),
    ])
    def test_slicer_ser(self, fmt, x, expected):
        m = fmt.order
        assert 2 * (m - 1) / m * q(x) == pytest.approx(expected, rel=1e-9)
        n = 1 << 18
        idx = np.random.default_rng(8).integers(0, m, n)
        sigma = fmt.min_distance / (2 * x)
        y = fmt.level_array[idx] + sigma * np.random.default_rng(9).standard_normal(n)
        ser = np.mean(slice_levels(y, fmt) != idx)
        assert abs(ser - expected) <= 3 * math.sqrt(expected * (1 - expected) / n)

    def test_pam4_sigma(self):
        assert PAM4.min_distance / 2 == pytest.approx(1 / math.sqrt(5))

    @pytest.mark.parametrize("fmt,x", [(PAM4, 3.0), (PAM8, 3.0)])
    def test_gray_bound(self, fmt, x):
        n = 1 << 18
        sym = symbols(5, n, fmt)
        sigma = fmt.min_distance / (2 * x)
        y = sym.levels + sigma * np.random.default_rng(1).standard_normal(n)
        dec = SymbolSequence(slice_levels(y, fmt), fmt)
        rep = measure_ber(demap(dec), demap(sym), 0, fmt.bits_per_symbol, dec.indices, sym.indices)
        assert rep.symbol_errors > 100
        assert rep.ber <= rep.ser <= fmt.bits_per_symbol * rep.ber


class TestMeasureBer:
    def test_identical(self):
        b = generate_bits(1, 1000)
        assert measure_ber(b, b).ber == 0

    def test_complement(self):
        b = generate_bits(1, 1000)
        assert measure_ber(1 - b, b).ber == 1

    def test_one_flip_per_million(self):
        b = generate_bits(1, 10**6)
        r = b.copy()
        r[123456] ^= 1
        rep = measure_ber(r, b)
        assert (rep.bit_errors, rep.bits_compared, rep.ber) == (1, 10**6, 1e-6)

    def test_guard_excluded_symmetrically(self):
        b = np.zeros(1000, np.uint8)
        r = b.copy()
        r[:20] = 1
        r[-20:] = 1
        rep = measure_ber(r, b, guard_symbols=10, bits_per_symbol=2)
        assert rep.bit_errors == 0 and rep.bits_compared == 960

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            measure_ber(np.zeros(10), np.zeros(12))

    def test_upper_bound(self):
        assert BerReport(0, 3000).upper_bound == pytest.approx(1e-3)
        assert BerReport(5, 1000).upper_bound == 5e-3

    def test_empty_window(self):
        with pytest.raises(ValueError):
            BerReport(0, 0)
