import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gyrocompass as gc
from gyrocompass.data import add_noise_to_split
from gyrocompass.errors import ConfigError, MissingLabel, RateMismatch, ShapeError

DEG = np.pi / 180.0


class TestGenerateCleanSequence:
    def test_north_equator_rows(self):
        seq = gc.generate_clean_sequence(0.0, 0.0, 100.0, 3.0)
        assert seq.samples.shape == (300, 3)
        np.testing.assert_array_equal(seq.samples, np.tile([gc.EARTH_RATE, 0.0, 0.0], (300, 1)))

    def test_east_equator_rows(self):
        seq = gc.generate_clean_sequence(np.pi / 2, 0.0, 100.0, 3.0)
        np.testing.assert_allclose(seq.samples[0], [0.0, -gc.EARTH_RATE, 0.0], atol=1e-15)
        assert np.all(seq.samples == seq.samples[0])

    def test_label_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            psi = rng.uniform(0, 2 * np.pi)
            seq = gc.generate_clean_sequence(psi, 0.0, 10.0, 3.0)
            got = gc.heading_from_rates_leveled(seq.samples[0])
            assert abs(np.arctan2(np.sin(got - psi), np.cos(got - psi))) < 1e-9

    def test_non_integer_sample_count(self):
        with pytest.raises(ConfigError):
            gc.generate_clean_sequence(0.0, 0.0, 10.5, 3.0)


class TestGenerateSyntheticDataset:
    def test_default_protocol(self):
        ds = gc.generate_synthetic_dataset()
        assert ds.sizes == (432, 144, 144)
        assert all(s.samples.shape == (300, 3) for s in ds.train[:3])
        total = sum(ds.sizes)
        assert total == 720

    def test_each_split_covers_the_circle(self):
        ds = gc.generate_synthetic_dataset()
        for part in (ds.train, ds.val, ds.test):
            headings = np.sort([s.heading_label for s in part])
            gaps = np.diff(np.concatenate([headings, [headings[0] + 2 * np.pi]]))
            assert np.max(gaps) < 10 * DEG

    def test_coarse_increment(self):
        ds = gc.generate_synthetic_dataset(gc.SynthesisConfig(increment_deg=90.0))
        assert sum(ds.sizes) == 4

    def test_non_divisible_increment(self):
        with pytest.raises(ConfigError):
            gc.generate_synthetic_dataset(gc.SynthesisConfig(increment_deg=0.7))

    def test_splits_disjoint_and_exhaustive(self):
        ds = gc.generate_synthetic_dataset(gc.SynthesisConfig(increment_deg=2.0))
        ids = [s.seq_id for part in (ds.train, ds.val, ds.test) for s in part]
        assert len(ids) == len(set(ids)) == 180

    def test_regeneration_is_bit_identical(self):
        a = gc.generate_synthetic_dataset(gc.SynthesisConfig(increment_deg=5.0))
        b = gc.generate_synthetic_dataset(gc.SynthesisConfig(increment_deg=5.0))
        for sa, sb in zip(a.train, b.train):
            np.testing.assert_array_equal(sa.samples, sb.samples)
            assert sa.heading_label == sb.heading_label

    def test_classical_recovers_labels(self):
        ds = gc.generate_synthetic_dataset(gc.SynthesisConfig(increment_deg=30.0))
        for part in (ds.train, ds.val, ds.test):
            for seq in part:
                got = gc.classical_gyrocompass(seq, seq.duration)
                err = np.arctan2(np.sin(got - seq.heading_label), np.cos(got - seq.heading_label))
                assert abs(err) < 1e-9


class TestAddSensorNoise:
    def test_zero_stds_bitwise_identity(self):
        seq = gc.generate_clean_sequence(1.0, 0.0, 10.0, 3.0)
        out = gc.add_sensor_noise(seq, gc.NoiseModel(0.0, 0.0, seed=1))
        np.testing.assert_array_equal(out.samples, seq.samples)

    def test_white_noise_std_scale(self):
        seq = gc.generate_clean_sequence(0.0, 0.0, 100.0, 3.0)
        sigma = 5e-5
        out = gc.add_sensor_noise(seq, gc.NoiseModel(sigma, 0.0, seed=2))
        stds = out.samples.std(axis=0)
        np.testing.assert_allclose(stds, sigma, rtol=0.15)

    def test_per_channel_stds(self):
        seq = gc.generate_clean_sequence(0.0, 0.0, 1000.0, 3.0)
        target = (1e-5, 5e-5, 2.5e-5)
        out = gc.add_sensor_noise(seq, gc.NoiseModel(target, 0.0, seed=3))
        np.testing.assert_allclose(out.samples.std(axis=0), target, rtol=0.1)

    def test_same_seed_identical(self):
        seq = gc.generate_clean_sequence(2.0, 0.0, 10.0, 3.0)
        noise = gc.NoiseModel(seed=9)
        a = gc.add_sensor_noise(seq, noise)
        b = gc.add_sensor_noise(seq, noise)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_bias_is_constant_within_sequence(self):
        seq = gc.generate_clean_sequence(0.0, 0.0, 100.0, 3.0)
        out = gc.add_sensor_noise(seq, gc.NoiseModel(0.0, 1e-5, seed=4))
        deltas = out.samples - seq.samples
        assert np.all(deltas == deltas[0])

    def test_split_noising_derives_per_sequence_seeds(self):
        ds = gc.generate_synthetic_dataset(gc.SynthesisConfig(increment_deg=30.0))
        noisy = add_noise_to_split(ds, gc.NoiseModel(seed=50))
        residual_a = noisy.train[0].samples - ds.train[0].samples
        residual_b = noisy.train[1].samples - ds.train[1].samples
        assert np.abs(residual_a - residual_b).max() > 0


class TestAugmentation:
    def test_single_zero_offset_is_identity(self):
        seq = gc.generate_clean_sequence(0.3, 0.0, 10.0, 3.0)
        (out,) = gc.augment_by_heading_rotation(seq, 1, 0.0)
        np.testing.assert_array_equal(out.samples, seq.samples)
        assert out.heading_label == seq.heading_label

    def test_rotation_regenerates_target_heading(self):
        seq = gc.generate_clean_sequence(30 * DEG, 0.0, 10.0, 3.0)
        outs = gc.augment_by_heading_rotation(seq, 3, 20 * DEG)
        rotated = outs[-1]  # offset +20 deg
        expected = gc.generate_clean_sequence(50 * DEG, 0.0, 10.0, 3.0)
        assert rotated.heading_label == pytest.approx(50 * DEG, abs=1e-12)
        np.testing.assert_allclose(rotated.samples, expected.samples, atol=1e-12)

    def test_count_expansion(self):
        seqs = [gc.generate_clean_sequence(i * DEG, 0.0, 10.0, 3.0) for i in range(24)]
        augmented = [a for s in seqs for a in gc.augment_by_heading_rotation(s, 100, 20 * DEG)]
        assert len(augmented) == 2400

    def test_z_channel_and_norm_preserved(self):
        seq = gc.generate_clean_sequence(1.0, 0.5, 10.0, 3.0)
        noisy = gc.add_sensor_noise(seq, gc.NoiseModel(seed=3))
        for out in gc.augment_by_heading_rotation(noisy, 5, 20 * DEG):
            np.testing.assert_array_equal(out.samples[:, 2], noisy.samples[:, 2])
            np.testing.assert_allclose(
                np.hypot(out.samples[:, 0], out.samples[:, 1]),
                np.hypot(noisy.samples[:, 0], noisy.samples[:, 1]),
                atol=1e-12,
            )

    def test_missing_label(self):
        seq = gc.TimeSequence(np.zeros((5, 3)), 1.0)
        with pytest.raises(MissingLabel):
            gc.augment_by_heading_rotation(seq, 2, 0.1)


class TestDownsample:
    def test_600_to_3_hz(self):
        seq = gc.generate_clean_sequence(0.0, 0.0, 100.0, 600.0)
        out = gc.downsample(seq, 3.0)
        assert out.samples.shape == (300, 3)
        assert out.sample_rate == 3.0

    def test_constant_sequence_unchanged(self):
        seq = gc.generate_clean_sequence(1.2, 0.1, 10.0, 30.0)
        out = gc.downsample(seq, 3.0)
        np.testing.assert_allclose(out.samples, np.broadcast_to(seq.samples[0], out.samples.shape), atol=1e-20)

    def test_alternating_cancels(self):
        samples = np.tile([[1e-4, -1e-4, 1e-4], [-1e-4, 1e-4, -1e-4]], (5, 1))
        seq = gc.TimeSequence(samples, 2.0)
        out = gc.downsample(seq, 1.0)
        np.testing.assert_array_equal(out.samples, np.zeros((5, 3)))

    def test_non_integer_ratio(self):
        seq = gc.generate_clean_sequence(0.0, 0.0, 10.0, 3.0)
        with pytest.raises(RateMismatch):
            gc.downsample(seq, 2.0)

    def test_noise_std_shrinks_with_ratio(self):
        clean = gc.generate_clean_sequence(0.0, 0.0, 200.0, 12.0)
        sigma, ratio = 6e-5, 4
        stds = []
        for seed in range(200):
            noisy = gc.add_sensor_noise(clean, gc.NoiseModel(sigma, 0.0, seed=seed))
            stds.append(gc.downsample(noisy, 3.0).samples.std(axis=0).mean())
        assert np.mean(stds) == pytest.approx(sigma / np.sqrt(ratio), rel=0.1)


class TestFlattenUnflatten:
    def test_flatten_shape_and_order(self):
        seq = gc.generate_clean_sequence(0.7, 0.0, 100.0, 3.0)
        flat = gc.flatten(seq)
        assert flat.shape == (900,)
        np.testing.assert_array_equal(flat[:3], seq.samples[0])
        np.testing.assert_array_equal(flat[3:6], seq.samples[1])

    @given(st.integers(min_value=1, max_value=40))
    @settings(max_examples=30, deadline=None)
    def test_round_trip(self, n):
        samples = np.random.default_rng(n).standard_normal((n, 3)) * 1e-4
        seq = gc.TimeSequence(samples, 3.0)
        back = gc.unflatten(gc.flatten(seq), n, like=seq)
        np.testing.assert_array_equal(back.samples, seq.samples)

    def test_bad_length(self):
        with pytest.raises(ShapeError):
            gc.unflatten(np.zeros(899), 300)


class TestDatasetPersistence:
    def test_bit_exact_round_trip(self, tmp_path):
        ds = gc.generate_synthetic_dataset(gc.SynthesisConfig(increment_deg=10.0))
        noisy = add_noise_to_split(ds, gc.NoiseModel(seed=5))
        gc.save_dataset(noisy, tmp_path / "ds", metadata={"note": "test"})
        loaded, meta = gc.load_dataset(tmp_path / "ds")
        assert meta["note"] == "test"
        assert loaded.sizes == noisy.sizes
        for part in ("train", "val", "test"):
            for a, b in zip(noisy.part(part), loaded.part(part)):
                np.testing.assert_array_equal(a.samples, b.samples)
                assert a.heading_label == b.heading_label
                assert a.seq_id == b.seq_id
                assert a.sample_rate == b.sample_rate

    def test_array_files_are_little_endian_float64(self, tmp_path):
        ds = gc.generate_synthetic_dataset(gc.SynthesisConfig(increment_deg=90.0))
        gc.save_dataset(ds, tmp_path / "ds")
        arr = np.load(tmp_path / "ds" / "train.npy")
        assert arr.dtype == np.dtype("<f8")
        header = (tmp_path / "ds" / "train.npy").read_bytes()[:128]
        assert b"'<f8'" in header and b"shape" in header

    def test_save_twice_identical_bytes(self, tmp_path):
        ds = gc.generate_synthetic_dataset(gc.SynthesisConfig(increment_deg=45.0))
        gc.save_dataset(ds, tmp_path / "a")
        gc.save_dataset(ds, tmp_path / "b")
        for name in ("metadata.json", "train.npy", "train_labels.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestTimeSequenceValidation:
    def test_rejects_bad_shape(self):
        with pytest.raises(ShapeError):
            gc.TimeSequence(np.zeros((5, 4)), 1.0)

    def test_rejects_non_finite(self):
        samples = np.zeros((5, 3))
        samples[2, 1] = np.nan
        with pytest.raises(ValueError):
            gc.TimeSequence(samples, 1.0)

    def test_rejects_out_of_range_label(self):
        with pytest.raises(ValueError):
            gc.TimeSequence(np.zeros((5, 3)), 1.0, heading_label=7.0)

    def test_split_rejects_duplicate_ids(self):
        a = gc.TimeSequence(np.zeros((2, 3)), 1.0, seq_id=1)
        b = dataclasses.replace(a)
        with pytest.raises(ConfigError):
            gc.DatasetSplit([a], [b], [])
