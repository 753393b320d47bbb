import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fxretina import GeometryMismatchError
from fxretina.fixedpoint import DEFAULT_FORMAT, quantize, quantize_array
from fxretina.temporal import HighPassBank, LowPassBank, highpass_step, lowpass_step, pole

F = DEFAULT_FORMAT
DT = 0.005


class TestPole:
    def test_value(self):
        assert pole(0.01, DT) == math.exp(-0.5)

    def test_zero_tau_passes_through(self):
        assert pole(0.0, DT) == 0.0


class TestLowPassReference:
    def test_coefficients(self):
        lp = LowPassBank(0.01, DT, (1,))
        assert 0 < lp.coeff_a < 1
        assert lp.coeff_a + lp.coeff_b == 1.0

    def test_impulse_response(self):
        lp = LowPassBank(0.02, DT, (1,))
        a = lp.a
        ys = [lowpass_step(lp, np.array([1.0 if n == 0 else 0.0]))[0] for n in range(51)]
        for n, y in enumerate(ys):
            assert y == pytest.approx((1 - a) * a ** n, rel=1e-12)

    def test_step_response(self):
        lp = LowPassBank(0.02, DT, (1,))
        a = lp.a
        for n in range(51):
            y = lp.step(np.ones(1))[0]
            assert y == pytest.approx(1 - a ** (n + 1), rel=1e-12)

    def test_dc_fixed_point(self):
        lp = LowPassBank(0.01, DT, (3, 3))
        lp.reset(0.4)
        for _ in range(100):
            out = lp.step(np.full((3, 3), 0.4))
        assert np.allclose(out, 0.4, rtol=0, atol=1e-15)

    def test_rejects_bad_constants(self):
        with pytest.raises(ValueError):
            LowPassBank(0.0, DT, (1,))

    def test_geometry_checked(self):
        lp = LowPassBank(0.01, DT, (4, 4))
        with pytest.raises(GeometryMismatchError):
            lp.step(np.zeros((4, 5)))


class TestLowPassFixed:
    def test_double_quantization(self):
        lp = LowPassBank(0.01, DT, (1,), F)
        assert lp.tau_effective == quantize(0.01).to_real() == 10 / 1024
        assert lp.a == quantize(math.exp(-DT / lp.tau_effective)).raw
        assert lp.a + lp.b == F.scale

    @pytest.mark.parametrize("c", [0.0, 0.3, 1.0, -2.5, 17.0])
    def test_dc_gain_within_two_lsb(self, c):
        lp = LowPassBank(0.01, DT, (1,), F)
        raw, _ = quantize_array(np.array([c]))
        for _ in range(300):
            out = lp.step(raw)
        assert abs(int(out[0]) - int(raw[0])) <= 2

    def test_saturation_counted(self):
        lp = LowPassBank(0.01, DT, (2,), F)
        lp.reset(F.max_raw)
        out = lp.step(np.array([F.max_raw, F.max_raw]))
        assert out.max() <= F.max_raw


class TestHighPass:
    def test_zero_weight_is_identity(self, rng):
        hp = HighPassBank(0.0, 0.01, DT, (5,))
        for _ in range(20):
            x = rng.standard_normal(5)
            assert np.array_equal(highpass_step(hp, x), x)

    def test_zero_weight_fixed_is_identity(self, rng):
        hp = HighPassBank(0.0, 0.01, DT, (5,), F)
        for _ in range(20):
            x = rng.integers(F.min_raw, F.max_raw, 5)
            assert np.array_equal(hp.step(x), x)

    @pytest.mark.parametrize("w", [1.0, 0.5, 0.3])
    def test_steady_state_dc_gain(self, w):
        hp = HighPassBank(w, 0.01, DT, (1,))
        for _ in range(int(10 * 0.01 / DT) + 100):
            y = hp.step(np.array([0.8]))
        assert y[0] == pytest.approx((1 - w) * 0.8, abs=1e-9)

    def test_weight_validated(self):
        with pytest.raises(ValueError):
            HighPassBank(1.5, 0.01, DT, (1,))

    @given(st.floats(0.0, 1.0), st.lists(st.floats(-5, 5), min_size=1, max_size=200))
    def test_bounded(self, w, xs):
        hp = HighPassBank(w, 0.01, DT, (1,))
        bound = max(abs(x) for x in xs) * (1 + w)
        for x in xs:
            assert abs(hp.step(np.array([x]))[0]) <= bound + 1e-12

    def test_reset_reproducible(self, rng):
        xs = rng.integers(-5000, 5000, (40, 3, 3))
        hp = HighPassBank(0.7, 0.02, DT, (3, 3), F)
        first = [hp.step(x) for x in xs]
        hp.reset()
        second = [hp.step(x) for x in xs]
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    def test_fixed_tracks_reference(self, rng):
        xs = rng.uniform(-1, 1, (200, 4))
        ref = HighPassBank(0.7, 0.02, DT, (4,))
        fix = HighPassBank(0.7, 0.02, DT, (4,), F)
        worst = max(np.max(np.abs(ref.step(x) - fix.step(quantize_array(x)[0]) / F.scale))
                    for x in xs)
        # coefficient quantization moves the pole; errors stay a few LSB
        assert worst < 0.02
