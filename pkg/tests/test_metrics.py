import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fxretina.ganglion import OFF, ON, SpikeTrain
from fxretina.metrics import (
    TraceComparison,
    UndefinedMetricError,
    spike_agreement,
    variance_explained,
    xcorr_peak_lag,
)


class TestVarianceExplained:
    def test_identical(self, rng):
        x = rng.standard_normal(50)
        assert variance_explained(x, x) == 1.0

    def test_mean_prediction_scores_zero(self, rng):
        x = rng.standard_normal(50)
        assert variance_explained(x, np.full(50, x.mean())) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("n", [4, 10, 100])
    def test_alternating_with_one_flip(self, n):
        ref = np.tile([0.0, 1.0], n // 2)
        test = ref.copy()
        test[3] = 1 - test[3]
        assert variance_explained(ref, test) == pytest.approx(1 - 4 / n, rel=1e-12)

    def test_not_translation_invariant(self, rng):
        x = rng.standard_normal(30)
        assert variance_explained(x, x + 1.0) < 1.0

    def test_constant_reference_undefined(self):
        with pytest.raises(UndefinedMetricError):
            variance_explained(np.ones(5), np.arange(5.0))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            variance_explained(np.arange(4.0), np.arange(5.0))

    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=40))
    def test_one_iff_identical(self, xs):
        ref = np.array(xs)
        assume(np.sum((ref - ref.mean()) ** 2) > 0)
        other = ref.copy()
        other[0] += 1.0
        assert variance_explained(ref, ref) == 1.0
        assert variance_explained(ref, other) < 1.0


class TestLag:
    def test_identical(self, rng):
        x = rng.standard_normal(80)
        assert xcorr_peak_lag(x, x, 10) == 0

    @pytest.mark.parametrize("shift", [1, 3, 7])
    def test_delayed(self, rng, shift):
        x = rng.standard_normal(120)
        delayed = np.concatenate([np.zeros(shift), x[:-shift]])
        assert xcorr_peak_lag(x, delayed, 10) == shift
        assert xcorr_peak_lag(delayed, x, 10) == -shift

    def test_amplitude_does_not_move_peak(self, rng):
        x = rng.standard_normal(100)
        assert xcorr_peak_lag(x, 5 * x + 2, 10) == 0

    def test_tie_prefers_zero_then_negative(self):
        x = np.tile([1.0, -1.0], 20)
        assert xcorr_peak_lag(x, x, 4) == 0
        # period-2 signal shifted by one matches lags -1 and +1 equally
        y = np.roll(x, 1)
        assert xcorr_peak_lag(x, y, 1) == -1

    def test_bounds(self, rng):
        x = rng.standard_normal(10)
        with pytest.raises(ValueError):
            xcorr_peak_lag(x, x, 5)

    def test_constant_undefined(self):
        with pytest.raises(UndefinedMetricError):
            xcorr_peak_lag(np.ones(10), np.arange(10.0), 2)

    def test_comparison_bundle(self, rng):
        x = rng.standard_normal(60)
        c = TraceComparison.of(x, x)
        assert (c.variance_explained, c.best_lag, c.rms_error) == (1.0, 0, 0.0)


def train(*events):
    if not events:
        return SpikeTrain()
    return SpikeTrain(*zip(*events))


class TestSpikeAgreement:
    def test_identical(self):
        a = train((1, 0, 0, ON), (5, 2, 3, OFF))
        assert spike_agreement(a, a) == 1.0

    def test_disjoint_pixels(self):
        assert spike_agreement(train((1, 0, 0, ON)), train((1, 1, 0, ON))) == 0.0

    def test_polarity_must_match(self):
        assert spike_agreement(train((1, 0, 0, ON)), train((1, 0, 0, OFF))) == 0.0

    @pytest.mark.parametrize("slack", [0, 1, 3])
    def test_slack_boundary(self, slack):
        a = train((10, 4, 4, ON))
        assert spike_agreement(a, train((10 + slack, 4, 4, ON)), slack) == 1.0
        assert spike_agreement(a, train((10 - slack, 4, 4, ON)), slack) == 1.0
        assert spike_agreement(a, train((11 + slack, 4, 4, ON)), slack) == 0.0

    def test_one_to_one(self):
        a = train((5, 0, 0, ON), (6, 0, 0, ON))
        b = train((5, 0, 0, ON))
        assert spike_agreement(a, b) == 0.5
        assert spike_agreement(b, a) == 1.0

    def test_greedy_earliest(self):
        a = train((4, 0, 0, ON), (6, 0, 0, ON))
        b = train((5, 0, 0, ON), (7, 0, 0, ON))
        assert spike_agreement(a, b) == 1.0

    def test_empty(self):
        assert spike_agreement(SpikeTrain(), SpikeTrain()) == 1.0
        assert spike_agreement(SpikeTrain(), train((0, 0, 0, ON))) == 0.0
        assert spike_agreement(train((0, 0, 0, ON)), SpikeTrain()) == 0.0

    def test_negative_slack(self):
        with pytest.raises(ValueError):
            spike_agreement(SpikeTrain(), SpikeTrain(), -1)

    @given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 2), st.integers(0, 2),
                              st.sampled_from([ON, OFF])), min_size=1, max_size=25, unique=True),
           st.lists(st.integers(-2, 2), min_size=25, max_size=25), st.integers(0, 2))
    def test_symmetric_for_equal_counts(self, events, jitter, slack):
        a = train(*events)
        b = train(*((f + j, x, y, p) for (f, x, y, p), j in zip(events, jitter)))
        assert spike_agreement(a, b, slack) == spike_agreement(b, a, slack)
