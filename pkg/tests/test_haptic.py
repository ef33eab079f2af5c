import numpy as np
import pytest

from texturefuse import haptic as hp


def full_spectrum_energy(signal):
    return float((np.abs(np.fft.fft(signal)) ** 2).sum())


class TestAccelTrace:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            hp.AccelTrace3(np.zeros((0, 3)))

    def test_rejects_nonfinite(self):
        s = np.zeros((4, 3))
        s[2, 1] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            hp.AccelTrace3(s)

    def test_rejects_bad_rate(self, rng):
        with pytest.raises(ValueError, match="rate"):
            hp.AccelTrace3(rng.normal(0, 1, (4, 3)), sample_rate_hz=0.0)


class TestDft321:
    def test_single_live_axis_preserves_magnitude(self, rng):
        s = rng.normal(0, 1, 256)
        trace = hp.AccelTrace3(np.stack([s, np.zeros(256), np.zeros(256)], axis=1))
        out = hp.dft321_combine(trace)
        np.testing.assert_allclose(np.abs(np.fft.rfft(out)), np.abs(np.fft.rfft(s)), atol=1e-9)

    def test_three_identical_axes_scale_sqrt3(self, rng):
        s = rng.normal(0, 1, 200)
        trace = hp.AccelTrace3(np.stack([s, s, s], axis=1))
        out = hp.dft321_combine(trace)
        np.testing.assert_allclose(np.abs(np.fft.rfft(out)), np.sqrt(3) * np.abs(np.fft.rfft(s)), atol=1e-9)

    def test_energy_identity(self, rng):
        samples = rng.normal(0, 2, (500, 3))
        trace = hp.AccelTrace3(samples)
        out = hp.dft321_combine(trace)
        axis_energy = sum(full_spectrum_energy(samples[:, a]) for a in range(3))
        assert abs(full_spectrum_energy(out) - axis_energy) / axis_energy < 1e-6

    def test_magnitude_postcondition_every_bin(self, rng):
        samples = rng.normal(0, 1, (321, 3))
        out = hp.dft321_combine(hp.AccelTrace3(samples))
        want = np.sqrt((np.abs(np.fft.rfft(samples, axis=0)) ** 2).sum(axis=1))
        got = np.abs(np.fft.rfft(out))
        mask = want > 1e-12
        assert (np.abs(got - want)[mask] / want[mask]).max() < 1e-4

    def test_output_real_and_finite(self, rng):
        out = hp.dft321_combine(hp.AccelTrace3(rng.normal(0, 1, (123, 3))))
        assert out.dtype.kind == "f" and np.all(np.isfinite(out))
        assert len(out) == 123

    def test_length_preserved_odd_even(self, rng):
        for n in (100, 101):
            out = hp.dft321_combine(hp.AccelTrace3(rng.normal(0, 1, (n, 3))))
            assert len(out) == n


class TestEnframe:
    def test_single_window(self, rng):
        spec = hp.enframe_spectrogram(rng.normal(0, 1, 500))
        assert spec.frames.shape == (1, 50, 1)

    def test_sixteen_frames_at_2000(self, rng):
        spec = hp.enframe_spectrogram(rng.normal(0, 1, 2000))
        assert spec.num_frames == 16  # floor((2000-500)/100)+1

    def test_window_spans_50ms_at_10khz(self):
        assert hp.WINDOW_LEN / hp.SAMPLE_RATE_HZ == 0.05

    def test_frame_count_formula_against_enumeration(self):
        for length in range(500, 5001):
            count = 0
            start = 0
            while start + 500 <= length:
                count += 1
                start += 100
            assert hp.frame_count(length) == count

    def test_too_short_names_minimum(self):
        with pytest.raises(ValueError, match="500"):
            hp.enframe_spectrogram(np.zeros(499))

    def test_hamming_window_and_low_bins(self):
        # pure tone at bin 10 of a 500-sample window: energy concentrated there
        t = np.arange(1000)
        signal = np.sin(2 * np.pi * 10 * t / 500.0)
        spec = hp.enframe_spectrogram(signal)
        assert spec.frames.shape[1] == 50
        assert np.argmax(spec.frames[0, :, 0]) == 10

    def test_mode_variants(self, rng):
        sig = rng.normal(0, 1, 700)
        mag = hp.enframe_spectrogram(sig, mode="magnitude")
        power = hp.enframe_spectrogram(sig, mode="power")
        log = hp.enframe_spectrogram(sig, mode="log")
        np.testing.assert_allclose(power.frames, mag.frames**2, rtol=1e-4)
        np.testing.assert_allclose(log.frames, np.log1p(mag.frames), rtol=1e-4)
        with pytest.raises(ValueError, match="mode"):
            hp.enframe_spectrogram(sig, mode="mel")

    def test_deterministic(self, rng):
        sig = rng.normal(0, 1, 1500)
        a = hp.enframe_spectrogram(sig)
        b = hp.enframe_spectrogram(sig)
        np.testing.assert_array_equal(a.frames, b.frames)


class TestNormalize:
    def test_simple_channel(self):
        frames = np.zeros((1, 2, 3), np.float32)
        frames[0, 0] = [2.0, 4.0, 6.0]
        frames[0, 1] = [5.0, 5.0, 5.0]
        out = hp.normalize_channels(hp.Spectrogram(frames))
        np.testing.assert_allclose(out.frames[0, 0], [0.0, 0.5, 1.0])
        np.testing.assert_array_equal(out.frames[0, 1], [0.0, 0.0, 0.0])

    def test_random_channels_hit_exact_bounds(self, rng):
        spec = hp.Spectrogram(rng.random((1, 50, 37)).astype(np.float32))
        out = hp.normalize_channels(spec).frames
        np.testing.assert_array_equal(out.min(axis=2), np.zeros((1, 50)))
        np.testing.assert_array_equal(out.max(axis=2), np.ones((1, 50)))


class TestSubsample:
    def test_full_length_is_identity(self, rng):
        spec = hp.Spectrogram(rng.random((1, 50, 300)).astype(np.float32))
        out = hp.subsample_training_window(spec, 300, rng)
        np.testing.assert_array_equal(out.frames, spec.frames)

    def test_too_long_rejected(self, rng):
        spec = hp.Spectrogram(rng.random((1, 50, 100)).astype(np.float32))
        with pytest.raises(ValueError, match="100"):
            hp.subsample_training_window(spec, 101, rng)

    def test_offsets_cover_full_range(self):
        rng = np.random.default_rng(0)
        base = np.arange(400, dtype=np.float32)[None, None, :].repeat(50, axis=1)
        spec = hp.Spectrogram(base)
        seen = set()
        for _ in range(10_000):
            out = hp.subsample_training_window(spec, 300, rng)
            seen.add(int(out.frames[0, 0, 0]))
        assert seen == set(range(101))


class TestTraceFiles:
    def test_three_axis_round_trip(self, tmp_path, rng):
        trace = hp.AccelTrace3(rng.normal(0, 1, (800, 3)).astype(np.float32), 10_000.0)
        path = tmp_path / "t.acc3"
        hp.save_trace(path, trace)
        back = hp.load_trace(path)
        np.testing.assert_allclose(back.samples, trace.samples, atol=1e-6)
        assert back.sample_rate_hz == 10_000.0

    def test_combined_signal_loader_merges_axes(self, tmp_path, rng):
        trace = hp.AccelTrace3(rng.normal(0, 1, (600, 3)))
        path = tmp_path / "t.acc3"
        hp.save_trace(path, trace)
        signal, rate = hp.load_combined_signal(path)
        assert len(signal) == 600 and rate == 10_000.0

    def test_single_axis_passthrough(self, tmp_path, rng):
        sig = rng.normal(0, 1, 700).astype(np.float32)
        path = tmp_path / "t.acc1"
        hp.save_combined_trace(path, sig, 8000.0)
        signal, rate = hp.load_combined_signal(path)
        np.testing.assert_allclose(signal, sig, atol=1e-6)
        assert rate == 8000.0

    def test_leading_trim(self, tmp_path, rng):
        trace = hp.AccelTrace3(rng.normal(0, 1, (900, 3)))
        path = tmp_path / "t.acc3"
        hp.save_trace(path, trace)
        assert hp.load_trace(path, trim_samples=150).samples.shape[0] == 750

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "bad.acc3"
        path.write_bytes(b"\x00" * 16)  # 4 floats: not a whole number of triples
        with pytest.raises(ValueError, match="triples"):
            hp.load_trace(path)
