import numpy as np
import pytest

from fxretina import GeometryMismatchError
from fxretina.fixedpoint import quantize_array
from fxretina.metrics import variance_explained
from fxretina.params import RetinaParams
from fxretina.pipeline import SCORED_STAGES, STAGES, Retina, run_fixed
from fxretina.reference import run_reference
from fxretina.stimulus import ChirpSpec, FrameStream, make_chirp, make_pulse


@pytest.fixture(scope="module")
def chirp16():
    s = make_chirp(ChirpSpec(), (16, 16), 200)
    return FrameStream(s.as_array()[:400], 200)


def test_zero_stream_is_quiet(small_params):
    stream = FrameStream(np.zeros((60, 16, 16)), 200)
    for res in (run_fixed(stream, small_params), run_reference(stream, small_params)):
        for s in ("C", "S", "I_OPL", "V_Bip"):
            assert not res.traces[s].any()
        assert len(res.spikes) == 0
        assert np.allclose(res.traces["I_Gang_ON"], small_params.ganglion.i0_g, atol=1e-3)


def test_float_retina_matches_reference(small_params, chirp16):
    a = Retina(small_params, fixed=False).run(chirp16, snapshot_frames=[150])
    b = run_reference(chirp16, small_params, snapshot_frames=[150])
    for s in STAGES:
        assert np.allclose(a.traces[s], b.traces[s], rtol=1e-9, atol=1e-12), s
        assert np.allclose(a.snapshots[150][s], b.snapshots[150][s], rtol=1e-9, atol=1e-12), s
    assert a.spikes == b.spikes and len(a.spikes) > 0


def test_float_retina_matches_reference_with_feedback(small_params, chirp16):
    p = small_params.replace(lambda_a=10.0, w_c=0.4)
    a = Retina(p, fixed=False).run(chirp16)
    b = run_reference(chirp16, p)
    for s in STAGES:
        assert np.allclose(a.traces[s], b.traces[s], rtol=1e-9, atol=1e-12), s


@pytest.mark.parametrize("block", [1, 7, 400])
def test_reference_block_size_invariant(small_params, chirp16, block):
    base = run_reference(chirp16, small_params, block=64)
    other = run_reference(chirp16, small_params, block=block)
    for s in STAGES:
        assert np.allclose(base.traces[s], other.traces[s], rtol=1e-12, atol=1e-14)
    assert base.spikes == other.spikes


def test_reference_doubling_input_doubles_linear_stages(small_params, chirp16):
    half = FrameStream(chirp16.as_array() / 2, 200)
    a, b = run_reference(half, small_params), run_reference(chirp16, small_params)
    # power-of-two scaling is exact through every linear stage
    for s in ("C", "S", "I_OPL", "V_Bip"):
        assert np.array_equal(2 * a.traces[s], b.traces[s])


def test_bipolar_matches_refined_explicit_euler():
    params = RetinaParams().replace(width=8, height=8, inputamp=1.0)
    stream = make_chirp(ChirpSpec(), (8, 8), 200)
    res = run_reference(stream, params)
    g, dt, sub = params.bipolar.g0_a, params.dt, 1000
    h = dt / sub
    v, worst = 0.0, 0.0
    for i_opl, v_bip in zip(res.traces["I_OPL"], res.traces["V_Bip"]):
        e_inf = i_opl / g
        # ``sub`` explicit Euler steps with the input held over the frame
        v = e_inf + (v - e_inf) * (1 - h * g) ** sub
        worst = max(worst, abs(v - v_bip))
    assert worst <= 1e-6


def test_fixed_tracks_quantized_reference():
    params = RetinaParams().replace(width=24, height=24)
    stream = make_chirp(ChirpSpec(), (24, 24), 200)
    fx = run_fixed(stream, params)
    ref = run_reference(stream, params.quantized())
    assert variance_explained(ref.traces["I_OPL"], fx.traces["I_OPL"]) >= 0.95
    assert variance_explained(ref.traces["V_Bip"], fx.traces["V_Bip"]) >= 0.99


def test_fixed_run_is_deterministic(small_params, chirp16):
    a, b = run_fixed(chirp16, small_params), run_fixed(chirp16, small_params)
    for s in STAGES:
        assert np.array_equal(a.traces[s], b.traces[s])
    assert a.spikes == b.spikes


def test_step_returns_raw_taps(small_params):
    r = Retina(small_params)
    taps, spikes = r.step(np.full((16, 16), 0.5))
    assert set(taps) == set(STAGES)
    assert all(t.dtype == np.int64 and t.shape == (16, 16) for t in taps.values())
    assert len(spikes) == 0


def test_reset_replays(small_params, chirp16):
    r = Retina(small_params)
    a = r.run(chirp16)
    r.reset()
    b = r.run(chirp16)
    assert all(np.array_equal(a.traces[s], b.traces[s]) for s in STAGES)
    assert a.spikes == b.spikes and a.saturations == b.saturations


def test_input_saturation_counted(small_params):
    r = Retina(small_params)
    r.step(np.full((16, 16), 1e6))
    assert r.saturations()["input"] == 256


def test_spikes_sorted_and_on_grid(small_params, chirp16):
    res = run_fixed(chirp16, small_params)
    f = res.spikes.frame
    assert len(f) and np.all(np.diff(f) >= 0)
    assert res.spikes.x.max() < 16 and res.spikes.y.max() < 16


def test_scored_stages_are_the_currents():
    assert SCORED_STAGES == ("C", "S", "I_OPL", "V_Bip", "I_Gang_ON", "I_Gang_OFF")


class TestErrors:
    def test_geometry_mismatch(self, small_params):
        stream = make_pulse(0, 1, 0.01, 0.02, 0.05, (8, 16), 200)
        with pytest.raises(GeometryMismatchError):
            run_fixed(stream, small_params)
        with pytest.raises(GeometryMismatchError):
            run_reference(stream, small_params)

    def test_empty_stream(self, small_params):
        stream = FrameStream(np.zeros((0, 16, 16)), 200)
        with pytest.raises(ValueError):
            run_fixed(stream, small_params)
        with pytest.raises(ValueError):
            run_reference(stream, small_params)

    @pytest.mark.parametrize("probe", [(16, 0), (0, -1)])
    def test_probe_outside(self, small_params, chirp16, probe):
        with pytest.raises(ValueError):
            run_fixed(chirp16, small_params, probe=probe)
        with pytest.raises(ValueError):
            run_reference(chirp16, small_params, probe=probe)

    def test_snapshot_outside(self, small_params, chirp16):
        with pytest.raises(ValueError):
            run_fixed(chirp16, small_params, snapshot_frames=[400])


def test_input_is_quantized_once(small_params):
    frame = np.random.default_rng(3).random((16, 16))
    raw, _ = quantize_array(frame, small_params.fmt)
    a = Retina(small_params).step(frame)[0]
    b = Retina(small_params).step(raw / small_params.fmt.scale)[0]
    assert all(np.array_equal(a[s], b[s]) for s in STAGES)
