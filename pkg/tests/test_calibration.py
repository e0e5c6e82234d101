import itertools

import numpy as np
import pytest

from ghostflare.exceptions import AllZeroIlluminance, InsufficientVariation, ParseError, RankDeficient
from ghostflare.optics.calibration import (
    fit_color_matrix,
    fit_flare_gain,
    fit_illuminance,
    normalize_color_samples,
    read_color_csv,
    read_flare_csv,
    read_illuminance_csv,
)
from ghostflare.optics.channel import REFERENCE_COLOR_MATRIX, ChannelParams, dimming, illuminance
from ghostflare.utils.numkit import RngStream, randn

TRUE_CONSTANTS = np.array([8.9, 6.7, -7.8, 0.25])


def illuminance_samples(noise=0.0, seed=0, params=ChannelParams()):
    grid = itertools.product(np.linspace(0.1, 1.0, 5), (0.3, 0.6, 0.8, 1.0), (1.0, 2.0, 3.0))
    rows = np.array([(t, p, d, illuminance(t, p, d, params)) for t, p, d in grid])
    if noise:
        rows[:, 3] += noise * randn(RngStream(seed), len(rows))
    return rows


def test_fit_illuminance_noise_free():
    fit = fit_illuminance(illuminance_samples())
    np.testing.assert_allclose([fit.a, fit.b, fit.c_t, fit.c_d], TRUE_CONSTANTS, rtol=1e-6)
    assert fit.rmse < 1e-6


def test_fit_illuminance_apply_updates_params():
    fit = fit_illuminance(illuminance_samples())
    params = fit.apply(ChannelParams(a=1.0, rho=12.0))
    assert params.a == pytest.approx(8.9, rel=1e-6)
    assert params.rho == 12.0


def test_fit_illuminance_single_distance():
    samples = illuminance_samples()
    samples[:, 2] = 1.0
    with pytest.raises(InsufficientVariation):
        fit_illuminance(samples)


def test_fit_illuminance_too_few_samples():
    with pytest.raises(InsufficientVariation):
        fit_illuminance(illuminance_samples()[:3])


@pytest.mark.slow
def test_fit_illuminance_noisy_recovery():
    rng = np.random.default_rng(5)
    errors = []
    for seed in range(100):
        # 60 samples across three distances
        t = rng.uniform(0.1, 1.0, 60)
        p = rng.uniform(0.3, 1.0, 60)
        d = np.repeat([1.0, 2.0, 3.0], 20)
        lux = illuminance(t, p, d, ChannelParams()) + 2.0 * randn(RngStream(seed), 60)
        fit = fit_illuminance(np.column_stack([t, p, d, lux]))
        errors.append(np.max(np.abs(np.array([fit.a, fit.b, fit.c_t, fit.c_d]) / TRUE_CONSTANTS - 1)))
    assert np.percentile(errors, 95) < 0.05


def test_fit_color_identity(rng):
    x_hat = rng.uniform(size=(10, 3))
    np.testing.assert_allclose(fit_color_matrix(x_hat, x_hat), np.eye(3), atol=1e-12)


def test_fit_color_recovers_reference_matrix(rng):
    h_c = np.array(REFERENCE_COLOR_MATRIX)
    x_hat = rng.uniform(size=(100, 3))
    fitted = fit_color_matrix(x_hat, x_hat @ h_c.T)
    assert np.linalg.norm(fitted - h_c) < 1e-9


def test_fit_color_noisy_recovery_and_residual_orthogonality():
    h_c = np.array(REFERENCE_COLOR_MATRIX)
    errors = []
    for seed in range(100):
        stream = RngStream(seed)
        x_hat = stream.uniform(size=(100, 3))
        y_hat = x_hat @ h_c.T + 0.01 * randn(stream, (100, 3))
        fitted = fit_color_matrix(x_hat, y_hat)
        errors.append(np.linalg.norm(fitted - h_c) / np.linalg.norm(h_c))
        residual = y_hat - x_hat @ fitted.T
        np.testing.assert_allclose(x_hat.T @ residual, 0.0, atol=1e-8)
    assert np.percentile(errors, 95) < 0.02


def test_fit_color_rank_deficient():
    x_hat = np.tile([1.0, 0.5, 0.2], (10, 1))
    with pytest.raises(RankDeficient):
        fit_color_matrix(x_hat, x_hat)


def test_normalized_flare_samples_recover_color_matrix(rng):
    params = ChannelParams(bulb_power=0.8)
    h_c = params.h_c
    deltas = rng.uniform(0.05, 1.0, size=(50, 3))
    amplitude = deltas.max(axis=1)
    lux = illuminance(amplitude, params.bulb_power, params.distance, params)
    observed = (params.rho * lux * dimming(lux, params.i_env))[:, None] * ((deltas / amplitude[:, None]) @ h_c.T)
    x_hat, y_hat = normalize_color_samples(deltas, observed, params)
    np.testing.assert_allclose(fit_color_matrix(x_hat, y_hat), h_c, atol=1e-9)


def test_fit_flare_gain_exact():
    lux = np.array([10.0, 50.0, 120.0, 300.0])
    peak = 30.0 * dimming(lux, 300.0) * lux
    assert fit_flare_gain(list(zip(lux, peak)), 300.0) == pytest.approx(30.0)


def test_fit_flare_gain_single_sample():
    # gamma = 0.5 at I = I_env
    assert fit_flare_gain([(300.0, 0.5 * 30.0 * 300.0)], 300.0) == pytest.approx(30.0)


def test_fit_flare_gain_noisy():
    lux = np.linspace(5, 300, 50)
    peak = 30.0 * dimming(lux, 300.0) * lux
    noisy = peak * (1 + 0.01 * randn(RngStream(2), 50))
    assert fit_flare_gain(list(zip(lux, noisy)), 300.0) == pytest.approx(30.0, rel=0.03)


def test_fit_flare_gain_all_zero():
    with pytest.raises(AllZeroIlluminance):
        fit_flare_gain([(0.0, 0.0), (0.0, 1.0)], 300.0)


def test_read_illuminance_csv(tmp_path):
    path = tmp_path / "lux.csv"
    path.write_text("T_d,P_a,d,I\n0.5,1.0,1.0,120.5\n1.0,0.3,2.0,40\n")
    np.testing.assert_array_equal(read_illuminance_csv(path), [[0.5, 1.0, 1.0, 120.5], [1.0, 0.3, 2.0, 40.0]])


def test_read_color_csv(tmp_path):
    path = tmp_path / "color.csv"
    path.write_text("r,g,b,yr,yg,yb\n1,0,0,0.5,0,0\n")
    deltas, observed = read_color_csv(path)
    np.testing.assert_array_equal(deltas, [[1.0, 0.0, 0.0]])
    np.testing.assert_array_equal(observed, [[0.5, 0.0, 0.0]])


def test_read_csv_errors(tmp_path):
    bad_header = tmp_path / "bad.csv"
    bad_header.write_text("a,b\n1,2\n")
    with pytest.raises(ParseError):
        read_illuminance_csv(bad_header)
    bad_value = tmp_path / "value.csv"
    bad_value.write_text("T_d,P_a,d,I\n0.5,x,1,2\n")
    with pytest.raises(ParseError):
        read_illuminance_csv(bad_value)
    with pytest.raises(ParseError):
        read_illuminance_csv(tmp_path / "missing.csv")


def test_read_flare_csv(tmp_path):
    path = tmp_path / "flare.csv"
    path.write_text("I,y\n100,0.25\n")
    assert read_flare_csv(path) == [(100.0, 0.25)]
    path.write_text("lux,peak\n100,0.25\n")
    with pytest.raises(ParseError) as info:
        read_flare_csv(path)
    assert info.value.offset == 0
