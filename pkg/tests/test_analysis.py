"""Spectral estimation, fitting, sweep decomposition, and calibrations."""

from dataclasses import replace

import numpy as np
import pytest

from conftest import boxcar_droop
from optomech import analysis, dynamics, montecarlo, params, response
from optomech.montecarlo import PhotocurrentRecord

TWO_PI = 2.0 * np.pi


def synthetic_record(x, dt, mean=1.0, y=None, index=0):
    y = x if y is None else y
    return PhotocurrentRecord(dt=dt, i_signal=mean * (1.0 + x),
                              i_meter=mean * (1.0 + y), mean_signal=mean,
                              mean_meter=mean, seed=0, record_index=index)


# ---------------------------------------------------------------------------
# spectral estimators
# ---------------------------------------------------------------------------

def test_white_noise_level():
    rng = np.random.default_rng(1)
    dt, n = 1e-6, 4096
    sigma = 0.3
    recs = [synthetic_record(sigma * rng.standard_normal(n), dt)
            for _ in range(300)]
    spec = analysis.power_spectrum(recs, channel="signal")
    # one-sided white level 2 sigma^2 dt
    assert np.mean(spec.values) == pytest.approx(2.0 * sigma**2 * dt, rel=0.01)
    assert np.std(spec.values) < 0.1 * np.mean(spec.values)
    assert spec.rbw == pytest.approx(1.0 / (n * dt), rel=1e-12)


def test_sine_power_recovery():
    dt, n = 1e-6, 8192
    t = np.arange(n) * dt
    amp = 0.02
    k = 160                      # on-bin frequency
    x = amp * np.sin(TWO_PI * k / (n * dt) * t)
    spec = analysis.power_spectrum([synthetic_record(x, dt)], channel="meter")
    total = np.sum(spec.values) * spec.rbw
    assert total == pytest.approx(amp**2 / 2.0, rel=0.01)
    i_pk = np.argmax(spec.values)
    assert spec.grid[i_pk] == pytest.approx(TWO_PI * k / (n * dt), rel=1e-9)


def test_window_preserves_white_level():
    rng = np.random.default_rng(2)
    dt, n = 1e-6, 4096
    recs = [synthetic_record(rng.standard_normal(n), dt) for _ in range(200)]
    rect = analysis.power_spectrum(recs, channel="signal",
                                   window="rectangular")
    hann = analysis.power_spectrum(recs, channel="signal", window="hann")
    assert np.mean(hann.values) == pytest.approx(np.mean(rect.values),
                                                 rel=0.02)


def test_power_spectrum_input_validation():
    with pytest.raises(ValueError):
        analysis.power_spectrum([])
    rec = synthetic_record(np.zeros(64), 1e-6, mean=0.0)
    with pytest.raises(ValueError):
        analysis.power_spectrum([rec], channel="signal")


def test_identical_channels_cross_equals_power():
    rng = np.random.default_rng(3)
    dt, n = 1e-6, 2048
    recs = [synthetic_record(rng.standard_normal(n), dt) for _ in range(50)]
    res = analysis.cross_spectrum(recs)
    np.testing.assert_allclose(res.cross.real, res.s_signal, rtol=1e-10)
    np.testing.assert_allclose(res.cross.real, res.s_meter, rtol=1e-10)
    assert np.max(np.abs(res.cross.imag)) < 1e-12 * np.max(res.s_signal)


def test_independent_channels_cross_rejected():
    rng = np.random.default_rng(4)
    dt, n = 1e-6, 2048
    recs = [synthetic_record(rng.standard_normal(n), dt,
                             y=rng.standard_normal(n)) for _ in range(200)]
    res = analysis.cross_spectrum(recs)
    # vector averaging drives uncorrelated content toward zero as 1/sqrt(n)
    assert np.mean(np.abs(res.cross)) < 3.0 * np.mean(res.cross_stderr)
    assert np.mean(np.abs(res.cross)) < 0.15 * np.mean(res.s_signal)


def test_campaign_meter_spectrum_matches_analytic(campaign_device1, device1,
                                                  gamma_m_device1):
    spec = analysis.power_spectrum(campaign_device1, channel="meter")
    wm = device1.mechanics.omega_m
    band = (spec.grid > wm - 3 * gamma_m_device1) \
        & (spec.grid < wm + 3 * gamma_m_device1)
    parts = response.meter_photocurrent_spectrum(spec.grid[band], device1)
    droop = boxcar_droop(spec.grid[band], campaign_device1[0].dt)
    predicted = parts["transduced"] * droop + parts["shot_floor"] \
        + parts["dark_floor"]
    assert np.mean(spec.values[band]) == pytest.approx(np.mean(predicted),
                                                       rel=0.05)


# ---------------------------------------------------------------------------
# Lorentzian fitting
# ---------------------------------------------------------------------------

def test_lorentzian_exact_recovery():
    center, fwhm, peak, offset = 9.7e6, 1.0e4, 3.0e-12, 2.0e-13
    grid = np.linspace(center - 6e4, center + 6e4, 600)
    vals = offset + peak / (1.0 + ((grid - center) / (fwhm / 2.0)) ** 2)
    fit = analysis.lorentzian_fit(grid, vals)
    assert fit.converged
    assert fit.center == pytest.approx(center, rel=1e-8)
    assert fit.fwhm == pytest.approx(fwhm, rel=1e-8)
    assert fit.peak == pytest.approx(peak, rel=1e-8)
    assert fit.offset == pytest.approx(offset, rel=1e-6)
    assert fit.area == pytest.approx(peak * fwhm / 4.0, rel=1e-8)
    assert fit.residual_rms < 1e-8 * peak


def test_lorentzian_fit_window_and_errors():
    grid = np.linspace(0.0, 1.0, 50)
    with pytest.raises(ValueError):
        analysis.lorentzian_fit(grid, np.ones_like(grid),
                                window=(0.0, 0.1))     # too few points
    with pytest.raises(ValueError):
        analysis.lorentzian_fit(grid, np.ones_like(grid))   # no peak


def test_analytic_meter_fit_linewidth(device1):
    # meter beam alone: fitted photocurrent linewidth against the damping
    # model, and against the 1.43 kHz operating-point figure (which is a
    # rounded value, hence the slightly relaxed second tolerance)
    cfg = params.with_signal_photons(device1, 0.0)
    gamma = dynamics.total_damping(cfg)
    grid = response.default_grid(cfg, gamma, n_points=3001)
    vals = response.meter_photocurrent_spectrum(grid, cfg)["total"]
    fit = analysis.lorentzian_fit(grid, vals)
    assert fit.fwhm == pytest.approx(gamma, rel=0.005)
    assert fit.fwhm / TWO_PI == pytest.approx(1.43e3, rel=0.012)


def test_campaign_fit_within_uncertainty(campaign_device1, device1,
                                         gamma_m_device1):
    spec = analysis.power_spectrum(campaign_device1, channel="meter")
    wm = device1.mechanics.omega_m
    fit = analysis.lorentzian_fit(
        spec.grid, spec.values,
        window=(wm - 8 * gamma_m_device1, wm + 8 * gamma_m_device1))
    assert fit.converged
    assert fit.fwhm == pytest.approx(gamma_m_device1, rel=0.05)
    assert abs(fit.fwhm - gamma_m_device1) < 4.0 * fit.fwhm_err
    peak_pred = np.max(response.meter_photocurrent_spectrum(
        np.array([fit.center]), device1)["total"])
    droop = boxcar_droop(np.array([fit.center]),
                         campaign_device1[0].dt)[0]
    assert fit.peak + fit.offset == pytest.approx(peak_pred * droop, rel=0.1)


# ---------------------------------------------------------------------------
# power-sweep decomposition and damping correction
# ---------------------------------------------------------------------------

def sweep_peaks(device1, ns, b_at_max=0.0):
    """Analytic peak displacement PSD and linewidth versus signal power.

    Constant laser relative intensity noise corresponds to a shot-relative
    level growing linearly with photon number, hence the b scaling.
    """
    n_max = max(ns)
    peaks, gammas = [], []
    for n in ns:
        cfg = params.with_signal_photons(device1, n)
        cfg = replace(cfg, signal=replace(cfg.signal,
                                          classical_noise_B=b_at_max * n / n_max))
        gm = dynamics.total_damping(cfg)
        grid = response.default_grid(cfg, gm, n_points=2001,
                                     half_width_linewidths=3.0)
        peaks.append(float(np.max(response.displacement_spectrum(
            grid, cfg).total)))
        gammas.append(gm)
    return np.array(peaks), np.array(gammas)


def test_polynomial_recovery_exact():
    n = np.array([0.0, 1e8, 2e8, 3e8, 4e8])
    c0, c1, c2 = 2.5e-26, 3.0e-35, 1.0e-43
    dec = analysis.power_sweep_decomposition(n, c0 + c1 * n + c2 * n**2)
    assert dec.constant == pytest.approx(c0, rel=1e-9)
    assert dec.linear == pytest.approx(c1, rel=1e-9)
    assert dec.quadratic == pytest.approx(c2, rel=1e-6)
    assert sum(dec.shares_at_max) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        analysis.power_sweep_decomposition([1.0, 1.0, 2.0, 2.0], [1, 1, 2, 2])


def test_quiet_sweep_has_no_quadratic_share(device1):
    ns = np.linspace(0.0, 3.6e8, 6)
    peaks, gammas = sweep_peaks(device1, ns)
    corr = analysis.correct_damping(ns, peaks, gammas)
    dec = analysis.power_sweep_decomposition(ns, corr.corrected_peaks)
    assert abs(dec.shares_at_max[2]) < 0.02
    assert dec.shares_at_max[1] > 0.4


def test_noisy_sweep_shot_share_of_increase(device1):
    ns = np.linspace(0.0, 3.6e8, 6)
    peaks, gammas = sweep_peaks(device1, ns, b_at_max=0.43)
    corr = analysis.correct_damping(ns, peaks, gammas)
    dec = analysis.power_sweep_decomposition(ns, corr.corrected_peaks)
    n_max = ns[-1]
    increase_shot = dec.linear * n_max
    increase_cl = dec.quadratic * n_max**2
    share = increase_shot / (increase_shot + increase_cl)
    assert 0.60 < share < 0.90


def test_correct_damping_identity_and_trend(device1):
    ns = np.linspace(0.0, 3.6e8, 5)
    gammas = np.full(5, 2.0)
    peaks = np.linspace(1.0, 2.0, 5)
    flat = analysis.correct_damping(ns, peaks, gammas)
    np.testing.assert_allclose(flat.corrected_peaks, peaks, rtol=1e-12)
    assert flat.gamma_at_zero == pytest.approx(2.0, rel=1e-12)
    assert flat.warning is None

    slope_true = 3.0e-6
    trend = 2.0 + slope_true * ns
    corr = analysis.correct_damping(ns, peaks, trend)
    assert corr.slope == pytest.approx(slope_true, rel=1e-9)
    np.testing.assert_allclose(corr.corrected_peaks,
                               peaks * (trend / 2.0) ** 2, rtol=1e-9)

    bent = 2.0 + slope_true * ns + 1e-14 * ns**2
    assert analysis.correct_damping(ns, peaks, bent).warning is not None


def test_blue_signal_beam_reduces_damping(device1):
    # a slightly blue signal beam antidamps: the measured linewidth drops by
    # roughly twenty percent at full power and the extrapolation recovers it
    blue = replace(device1, signal=replace(device1.signal,
                                           detuning=-TWO_PI * 4.0e3))
    ns = np.linspace(0.0, 3.6e8, 6)
    gammas = []
    for n in ns:
        gammas.append(dynamics.total_damping(params.with_signal_photons(blue, n)))
    gammas = np.array(gammas)
    drop = 1.0 - gammas[-1] / gammas[0]
    assert drop == pytest.approx(0.20, abs=0.07)
    corr = analysis.correct_damping(ns, np.ones_like(ns), gammas)
    assert corr.gamma_at_zero == pytest.approx(gammas[0], rel=0.01)


# ---------------------------------------------------------------------------
# coupling calibrations
# ---------------------------------------------------------------------------

def test_damping_calibration_round_trip(device1):
    cfg = params.with_signal_photons(device1, 0.0)
    gamma_m = dynamics.total_damping(cfg)
    g = analysis.calibrate_g_from_damping(
        gamma_m, cfg.meter.photon_number, cfg.cavity, cfg.meter.detuning,
        cfg.mechanics)
    assert g == pytest.approx(cfg.meter.coupling_g, rel=1e-10)
    assert g / TWO_PI == pytest.approx(16.1, rel=1e-6)


def test_damping_calibration_errors(device1):
    mech, cav = device1.mechanics, device1.cavity
    with pytest.raises(ValueError):
        analysis.calibrate_g_from_damping(0.5 * mech.gamma_0, 1e6, cav,
                                          TWO_PI * 0.7e6, mech)
    with pytest.raises(ValueError):
        analysis.calibrate_g_from_damping(10.0, 1e6, cav, -TWO_PI * 0.7e6,
                                          mech)
    with pytest.raises(ValueError):
        analysis.calibrate_g_from_damping(10.0, 0.0, cav, TWO_PI * 0.7e6,
                                          mech)


def test_damping_calibration_from_campaign(campaign_device1, device1,
                                           gamma_m_device1):
    spec = analysis.power_spectrum(campaign_device1, channel="meter")
    wm = device1.mechanics.omega_m
    fit = analysis.lorentzian_fit(
        spec.grid, spec.values,
        window=(wm - 8 * gamma_m_device1, wm + 8 * gamma_m_device1))
    # remove the signal beam's known contribution before inverting for the
    # meter coupling
    gamma_s = dynamics.optical_damping(device1.signal, device1.cavity,
                                       device1.mechanics)
    g = analysis.calibrate_g_from_damping(
        fit.fwhm - gamma_s, device1.meter.photon_number, device1.cavity,
        device1.meter.detuning, device1.mechanics)
    assert g == pytest.approx(device1.meter.coupling_g, rel=0.03)


def test_thermal_calibration_closure(device1):
    # classical-limit bias is about 1/(4 n_m); at n_m ~ 22 that is within
    # the two-percent budget
    cfg = params.with_signal_photons(device1, 0.0)
    gamma_m = dynamics.total_damping(cfg)
    grid = response.default_grid(cfg, gamma_m, n_points=4001)
    parts = response.meter_photocurrent_spectrum(grid, cfg)
    s_peak = float(np.max(parts["transduced"]))
    g = analysis.calibrate_g_from_thermal(s_peak, gamma_m,
                                          cfg.env.temperature, cfg)
    assert g == pytest.approx(cfg.meter.coupling_g, rel=0.02)


def test_thermal_calibration_scaling_properties(device1):
    cfg = params.with_signal_photons(device1, 0.0)
    gamma_m = dynamics.total_damping(cfg)
    g = analysis.calibrate_g_from_thermal(1e-9, gamma_m, 4.9, cfg)
    # jointly rescaling peak and bath temperature leaves g unchanged
    g2 = analysis.calibrate_g_from_thermal(2e-9, gamma_m, 9.8, cfg)
    assert g2 == pytest.approx(g, rel=1e-12)
    # absolute-units input: dividing by the mean current squared
    mean = 3.4e-5
    g3 = analysis.calibrate_g_from_thermal(1e-9 * mean**2, gamma_m, 4.9, cfg,
                                           mean_current=mean)
    assert g3 == pytest.approx(g, rel=1e-12)
    with pytest.raises(ValueError):
        analysis.calibrate_g_from_thermal(-1.0, gamma_m, 4.9, cfg)


def test_calibrations_agree(device1):
    cfg = params.with_signal_photons(device1, 0.0)
    gamma_m = dynamics.total_damping(cfg)
    g_damp = analysis.calibrate_g_from_damping(
        gamma_m, cfg.meter.photon_number, cfg.cavity, cfg.meter.detuning,
        cfg.mechanics)
    grid = response.default_grid(cfg, gamma_m, n_points=4001)
    s_peak = float(np.max(response.meter_photocurrent_spectrum(
        grid, cfg)["transduced"]))
    g_th = analysis.calibrate_g_from_thermal(s_peak, gamma_m,
                                             cfg.env.temperature, cfg)
    assert g_th == pytest.approx(g_damp, rel=0.05)
