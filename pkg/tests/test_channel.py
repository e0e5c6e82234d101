import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ghostflare.exceptions import DimMismatch, NonPositiveAmbient, NonPositiveDistance, PlacementOutOfBounds
from ghostflare.optics.channel import (
    ChannelParams,
    Placement,
    digital_composite,
    digital_composite_backward,
    dimming,
    emulate,
    emulate_backward,
    emulate_forward,
    flare_pixel,
    illuminance,
)


def test_illuminance_examples(reference_params):
    assert illuminance(1.0, 1.0, 1.0, reference_params) == pytest.approx(299.877, abs=0.01)
    assert illuminance(0.0, 0.0, 1.0, reference_params) == pytest.approx(0.1229, abs=0.001)


@pytest.mark.parametrize("t_d,p_a", [(0.0, 0.0), (0.3, 0.7), (1.0, 1.0)])
def test_illuminance_inverse_square(reference_params, t_d, p_a):
    near = illuminance(t_d, p_a, 1.0, reference_params)
    assert illuminance(t_d, p_a, 2.0, reference_params) == pytest.approx(near / 4, rel=1e-15)


def test_illuminance_is_monotone(reference_params):
    t = np.linspace(0, 1, 11)
    assert np.all(np.diff(illuminance(t, 0.5, 1.0, reference_params)) > 0)
    assert np.all(np.diff(illuminance(0.5, t, 1.0, reference_params)) > 0)
    assert np.all(np.diff(illuminance(0.5, 0.5, np.linspace(0.5, 5, 10), reference_params)) < 0)


def test_illuminance_rejects_bad_distance(reference_params):
    with pytest.raises(NonPositiveDistance):
        illuminance(0.5, 0.5, 0.0, reference_params)


def test_dimming_examples():
    assert dimming(0.0, 300.0) == 1.0
    assert dimming(300.0, 300.0) == 0.5
    assert dimming(400.0, 300.0) == pytest.approx(3 / 7)
    with pytest.raises(NonPositiveAmbient):
        dimming(10.0, 0.0)


@given(st.floats(min_value=0, max_value=1e6), st.floats(min_value=1e-3, max_value=1e6))
def test_dimming_identity(lux, ambient):
    assert dimming(lux, ambient) * (lux + ambient) == pytest.approx(ambient, rel=1e-12)


def test_flare_pixel_black_is_zero(reference_params):
    np.testing.assert_array_equal(flare_pixel((0.0, 0.0, 0.0), reference_params), np.zeros(3))
    np.testing.assert_array_equal(flare_pixel((1e-7, 0.0, 0.0), reference_params), np.zeros(3))


def test_flare_pixel_red(reference_params):
    lux = illuminance(1.0, 1.0, 1.0, reference_params)
    np.testing.assert_allclose(flare_pixel((1.0, 0.0, 0.0), reference_params), [30 * lux * 0.5, 0.0, 0.0])


def test_flare_pixel_direction_is_scale_free(reference_params):
    delta = np.array([0.8, 0.2, 0.4])
    full = flare_pixel(delta, reference_params)
    half = flare_pixel(0.5 * delta, reference_params)
    np.testing.assert_allclose(full / np.linalg.norm(full), half / np.linalg.norm(half), atol=1e-15)
    assert np.linalg.norm(half) < np.linalg.norm(full)


def test_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(i_env=0.0)
    with pytest.raises(ValueError):
        ChannelParams(bulb_power=1.5)
    with pytest.raises(ValueError):
        ChannelParams(color_matrix=((1.0, 0.0), (0.0, 1.0)))
    assert ChannelParams().at(distance=2.0).distance == 2.0


def test_emulate_projector_off_returns_benign(rng):
    benign = rng.uniform(size=(8, 8, 3))
    y = emulate(None, benign, Placement(0, 0, 8, 8), ChannelParams())
    np.testing.assert_array_equal(y, benign)


def test_emulate_single_red_pixel(reference_params):
    benign = np.zeros((8, 8, 3))
    placement = Placement(3, 4, 1, 1)
    y = emulate(np.array([[[1.0, 0.0, 0.0]]]), benign, placement, reference_params)

    lux = illuminance(1.0, 1.0, 1.0, reference_params)
    expected = np.clip(dimming(lux, 300.0) * 30 * lux * np.array([0.5, 0.0, 0.0]), 0, 1)
    np.testing.assert_allclose(y[4, 3], expected)
    y[4, 3] = 0.0
    assert not y.any()


def test_brighter_ambient_brightens_background(rng):
    benign = np.full((8, 8, 3), 0.3)
    placement = Placement(2, 2, 4, 4)
    delta = rng.uniform(0.2, 0.9, size=(4, 4, 3))
    dim = emulate_forward(delta, benign, placement, ChannelParams(i_env=200.0)).pre_clip
    bright = emulate_forward(delta, benign, placement, ChannelParams(i_env=600.0)).pre_clip
    assert np.all(bright[0, 0] > dim[0, 0])


@pytest.mark.parametrize("mode", ["per_pixel", "global_mean", "global_max"])
def test_bulb_power_raises_ghost_and_dims_background(rng, mode):
    benign = np.full((8, 8, 3), 0.4)
    placement = Placement(2, 2, 4, 4)
    delta = np.full((4, 4, 3), 0.6) + rng.uniform(0, 0.2, size=(4, 4, 3))
    low = emulate_forward(delta, benign, placement, ChannelParams(bulb_power=0.2), mode).pre_clip
    high = emulate_forward(delta, benign, placement, ChannelParams(bulb_power=0.9), mode).pre_clip
    if mode == "per_pixel":
        assert np.all(high[2:6, 2:6] >= low[2:6, 2:6])
    assert np.all(high[0, 0] < low[0, 0])


def test_quantized_emulate_is_bit_stable(rng, reference_params):
    benign = rng.uniform(size=(8, 8, 3))
    delta = rng.uniform(size=(4, 4, 3))
    first = emulate(delta, benign, Placement(2, 2, 4, 4), reference_params, quantize_output=True)
    second = emulate(delta, benign, Placement(2, 2, 4, 4), reference_params, quantize_output=True)
    assert first.tobytes() == second.tobytes()
    assert np.all(np.abs(first * 255 - np.round(first * 255)) < 1e-9)


def test_emulate_rejects_bad_placement():
    benign = np.zeros((8, 8, 3))
    with pytest.raises(PlacementOutOfBounds):
        emulate(np.zeros((4, 4, 3)), benign, Placement(6, 6, 4, 4), ChannelParams())
    with pytest.raises(PlacementOutOfBounds):
        emulate(np.zeros((4, 4, 3)), benign, Placement(0, 0, 4, 4, 3, 3), ChannelParams())
    with pytest.raises(DimMismatch):
        emulate(np.zeros((3, 4, 3)), benign, Placement(0, 0, 4, 4), ChannelParams())


def test_centered_placement():
    placement = Placement.centered(32, 32, 5)
    assert (placement.x0, placement.y0, placement.width, placement.height) == (1, 1, 30, 30)
    placement.validate_for((32, 32, 3))
    with pytest.raises(PlacementOutOfBounds):
        Placement.centered(4, 4, 8)


def _finite_difference_check(forward, backward, point, rng, coordinates=30, h=1e-5):
    grad_out = rng.normal(size=forward(point).shape)
    analytic = backward(point, grad_out)
    flat = point.ravel()
    for index in rng.choice(flat.size, size=min(coordinates, flat.size), replace=False):
        plus, minus = flat.copy(), flat.copy()
        plus[index] += h
        minus[index] -= h
        numeric = (
            np.sum(grad_out * forward(plus.reshape(point.shape)))
            - np.sum(grad_out * forward(minus.reshape(point.shape)))
        ) / (2 * h)
        exact = analytic.ravel()[index]
        assert abs(exact - numeric) <= 1e-4 * max(abs(exact), abs(numeric)) + 1e-7


@pytest.mark.parametrize("mode", ["per_pixel", "global_mean", "global_max"])
def test_emulate_gradient_matches_finite_differences(rng, faint_params, mode):
    benign = rng.uniform(0.1, 0.4, size=(8, 8, 3))
    placement = Placement(2, 1, 4, 6)
    delta = rng.uniform(0.2, 0.9, size=(6, 4, 3))

    def forward(d):
        return emulate_forward(d, benign, placement, faint_params, mode).pre_clip

    def backward(d, grad):
        state = emulate_forward(d, benign, placement, faint_params, mode)
        return emulate_backward(state, grad, faint_params)

    assert np.all((forward(delta) > 0) & (forward(delta) < 1))
    _finite_difference_check(forward, backward, delta, rng, coordinates=72)


@pytest.mark.parametrize("seed", range(50))
def test_emulate_gradient_on_random_configurations(seed):
    rng = np.random.default_rng(seed)
    width, height = (int(v) for v in rng.integers(1, 7, size=2))
    x0, y0 = int(rng.integers(0, 9 - width)), int(rng.integers(0, 9 - height))
    params = ChannelParams(
        rho=float(rng.uniform(0.001, 0.01)),
        distance=float(rng.uniform(0.5, 5.0)),
        bulb_power=float(rng.uniform(0.1, 1.0)),
    )
    mode = ["per_pixel", "global_mean", "global_max"][seed % 3]
    benign = rng.uniform(0.0, 0.5, size=(8, 8, 3))
    placement = Placement(x0, y0, width, height)
    delta = rng.uniform(0.1, 1.0, size=(height, width, 3))

    def forward(d):
        return emulate_forward(d, benign, placement, params, mode).pre_clip

    def backward(d, grad):
        return emulate_backward(emulate_forward(d, benign, placement, params, mode), grad, params)

    _finite_difference_check(forward, backward, delta, rng)


def test_black_pixels_have_no_gradient(faint_params, rng):
    benign = rng.uniform(size=(4, 4, 3))
    delta = rng.uniform(0.2, 0.9, size=(4, 4, 3))
    delta[1, 2] = 0.0
    state = emulate_forward(delta, benign, Placement(0, 0, 4, 4), faint_params)
    grad = emulate_backward(state, rng.normal(size=(4, 4, 3)), faint_params)
    np.testing.assert_array_equal(grad[1, 2], np.zeros(3))


def test_digital_composite(rng):
    benign = rng.uniform(0, 0.5, size=(6, 6, 3))
    delta = rng.uniform(0, 0.8, size=(2, 2, 3))
    placement = Placement(2, 2, 2, 2)
    y = digital_composite(delta, benign, placement)
    assert y.max() == pytest.approx(1.0)

    def backward(d, grad):
        return digital_composite_backward(d, benign, placement, grad)

    _finite_difference_check(lambda d: digital_composite(d, benign, placement), backward, delta, rng, coordinates=12)
