import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gyrocompass as gc
from gyrocompass.errors import DegenerateSignal, EmptyWindow

DEG = np.pi / 180.0


def random_angles(rng):
    return gc.EulerAngles(
        rng.uniform(-np.pi, np.pi),
        rng.uniform(-np.pi / 2, np.pi / 2),
        rng.uniform(0.0, 2 * np.pi),
    )


class TestRotationMatrices:
    def test_identity_attitude(self):
        np.testing.assert_allclose(
            gc.body_to_nav_matrix(gc.EulerAngles(0, 0, 0)), np.eye(3), atol=1e-15
        )

    def test_pure_yaw_quarter_turn(self):
        expected = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        got = gc.body_to_nav_matrix(gc.EulerAngles(0, 0, np.pi / 2))
        np.testing.assert_allclose(got, expected, atol=1e-15)

    def test_ecef_to_nav_at_origin(self):
        expected = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
        np.testing.assert_allclose(gc.ecef_to_nav_matrix(gc.GeoPosition(0.0, 0.0)), expected, atol=1e-15)

    def test_ecef_to_nav_at_pole(self):
        got = gc.ecef_to_nav_matrix(gc.GeoPosition(np.pi / 2, 0.0))
        np.testing.assert_allclose(got[0], [-1.0, 0.0, 0.0], atol=1e-15)

    def test_orthonormality_and_determinant(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            angles = random_angles(rng)
            pos = gc.GeoPosition(rng.uniform(-np.pi / 2, np.pi / 2), rng.uniform(-np.pi, np.pi))
            for mat in (gc.body_to_nav_matrix(angles), gc.ecef_to_nav_matrix(pos)):
                assert np.max(np.abs(mat @ mat.T - np.eye(3))) < 1e-12
                assert abs(np.linalg.det(mat) - 1.0) < 1e-12


class TestEarthRateInBody:
    def test_leveled_north_equator(self):
        r = gc.earth_rate_in_body(gc.EulerAngles(0, 0, 0), gc.GeoPosition(0.0))
        np.testing.assert_allclose(r.as_array(), [gc.EARTH_RATE, 0.0, 0.0], atol=1e-20)

    def test_leveled_east_equator(self):
        r = gc.earth_rate_in_body(gc.EulerAngles(0, 0, np.pi / 2), gc.GeoPosition(0.0))
        np.testing.assert_allclose(r.as_array(), [0.0, -gc.EARTH_RATE, 0.0], atol=1e-15)

    def test_pole_nulls_horizontal(self):
        r = gc.earth_rate_in_body(gc.EulerAngles(0, 0, 1.0), gc.GeoPosition(np.pi / 2))
        np.testing.assert_allclose(r.as_array(), [0.0, 0.0, -gc.EARTH_RATE], atol=1e-15)

    def test_leveled_reduction_formula(self):
        # leveled projection must equal omega*(c_psi c_lat, -s_psi c_lat, -s_lat)
        rng = np.random.default_rng(3)
        for _ in range(200):
            psi = rng.uniform(0, 2 * np.pi)
            lat = rng.uniform(-np.pi / 2, np.pi / 2)
            r = gc.earth_rate_in_body(gc.EulerAngles(0, 0, psi), gc.GeoPosition(lat)).as_array()
            expected = gc.EARTH_RATE * np.array(
                [np.cos(psi) * np.cos(lat), -np.sin(psi) * np.cos(lat), -np.sin(lat)]
            )
            np.testing.assert_allclose(r, expected, atol=1e-19)

    def test_horizontal_norm_matches_max_signal(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            psi = rng.uniform(0, 2 * np.pi)
            pos = gc.GeoPosition(rng.uniform(-np.pi / 2, np.pi / 2))
            r = gc.earth_rate_in_body(gc.EulerAngles(0, 0, psi), pos).as_array()
            horizontal = np.hypot(r[0], r[1])
            expected = gc.max_horizontal_signal(pos)
            assert abs(horizontal - expected) <= 1e-15 * max(expected, 1e-300)


class TestMaxHorizontalSignal:
    def test_reference_latitude(self):
        got = np.rad2deg(gc.max_horizontal_signal(gc.GeoPosition(32.11 * DEG)))
        assert got == pytest.approx(0.0035, rel=0.02)

    def test_equator_is_full_rate(self):
        assert gc.max_horizontal_signal(gc.GeoPosition(0.0)) == gc.EARTH_RATE

    def test_pole_is_null(self):
        assert gc.max_horizontal_signal(gc.GeoPosition(np.pi / 2)) == pytest.approx(0.0, abs=1e-19)


class TestHeadingFromRates:
    def test_leveled_round_trip(self):
        r = gc.earth_rate_in_body(gc.EulerAngles(0, 0, 30 * DEG), gc.GeoPosition(0.0))
        assert gc.heading_from_rates(r, 0.0, 0.0) == pytest.approx(30 * DEG, abs=1e-9)

    def test_tilted_round_trip(self):
        angles = gc.EulerAngles(10 * DEG, 5 * DEG, 200 * DEG)
        r = gc.earth_rate_in_body(angles, gc.GeoPosition(45 * DEG))
        got = gc.heading_from_rates(r, angles.roll, angles.pitch)
        assert got == pytest.approx(200 * DEG, abs=1e-9)

    def test_pole_signal_is_degenerate(self):
        with pytest.raises(DegenerateSignal):
            gc.heading_from_rates(gc.AngularRate(0.0, 0.0, -gc.EARTH_RATE), 0.0, 0.0)

    def test_leveled_equals_general_form(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            rates = rng.normal(0, 1e-4, 3)
            assert gc.heading_from_rates(rates, 0.0, 0.0) == pytest.approx(
                gc.heading_from_rates_leveled(rates), abs=1e-12
            )


class TestHeadingFromRatesLeveled:
    @pytest.mark.parametrize(
        "rates, expected",
        [
            ((gc.EARTH_RATE, 0.0, 0.0), 0.0),
            ((0.0, -gc.EARTH_RATE, 0.0), np.pi / 2),
            ((-1e-5, 0.0, 0.0), np.pi),
        ],
    )
    def test_cardinal_directions(self, rates, expected):
        assert gc.heading_from_rates_leveled(rates) == pytest.approx(expected, abs=1e-12)

    def test_round_trip_across_latitudes(self):
        rng = np.random.default_rng(13)
        for _ in range(500):
            psi = rng.uniform(0, 2 * np.pi)
            lat = rng.uniform(-80 * DEG, 80 * DEG)
            r = gc.earth_rate_in_body(gc.EulerAngles(0, 0, psi), gc.GeoPosition(lat))
            got = gc.heading_from_rates_leveled(r)
            err = np.arctan2(np.sin(got - psi), np.cos(got - psi))
            assert abs(err) < 1e-9

    @given(
        st.floats(min_value=0.0, max_value=2 * np.pi, exclude_max=True),
        st.floats(min_value=1e-6, max_value=1e6),
    )
    @settings(max_examples=200, deadline=None)
    def test_scale_invariance(self, psi, k):
        rates = np.array([np.cos(psi), -np.sin(psi), 0.3]) * gc.EARTH_RATE
        a = gc.heading_from_rates_leveled(rates)
        b = gc.heading_from_rates_leveled(k * rates)
        assert abs(np.arctan2(np.sin(a - b), np.cos(a - b))) < 1e-12

    def test_output_range(self):
        rng = np.random.default_rng(17)
        for _ in range(1000):
            psi = gc.heading_from_rates_leveled(rng.normal(0, 1e-4, 3))
            assert 0.0 <= psi < 2 * np.pi


class TestClassicalGyrocompass:
    def test_recovers_constant_sequence(self):
        seq = gc.generate_clean_sequence(123 * DEG, 0.0, 100.0, 3.0)
        for window in (10.0, 40.0, 100.0):
            assert gc.classical_gyrocompass(seq, window) == pytest.approx(123 * DEG, abs=1e-9)

    def test_error_shrinks_with_window(self):
        # white-noise error std should scale ~1/sqrt(window)
        clean = gc.generate_clean_sequence(77 * DEG, 0.0, 100.0, 3.0)
        errors = {10.0: [], 100.0: []}
        for seed in range(1000):
            noisy = gc.add_sensor_noise(
                clean, gc.NoiseModel(white_noise_std=4e-5, constant_bias_std=0.0, seed=seed)
            )
            for window in errors:
                est = gc.classical_gyrocompass(noisy, window)
                errors[window].append(np.arctan2(np.sin(est - clean.heading_label), np.cos(est - clean.heading_label)))
        ratio = np.std(errors[10.0]) / np.std(errors[100.0])
        assert ratio == pytest.approx(np.sqrt(10.0), rel=0.12)

    def test_window_larger_than_sequence(self):
        seq = gc.generate_clean_sequence(0.0, 0.0, 10.0, 3.0)
        with pytest.raises(EmptyWindow):
            gc.classical_gyrocompass(seq, 11.0)

    def test_zero_window(self):
        seq = gc.generate_clean_sequence(0.0, 0.0, 10.0, 3.0)
        with pytest.raises(EmptyWindow):
            gc.classical_gyrocompass(seq, 0.0)


class TestWrapHeading:
    def test_negative_wraps_positive(self):
        assert gc.wrap_heading(-np.pi) == pytest.approx(np.pi)

    def test_tiny_negative_stays_in_range(self):
        assert 0.0 <= gc.wrap_heading(-1e-300) < 2 * np.pi

    def test_array_input(self):
        out = gc.wrap_heading(np.array([-0.5, 0.5, 7.0]))
        assert np.all((out >= 0) & (out < 2 * np.pi))
