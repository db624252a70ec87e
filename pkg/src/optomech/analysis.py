"""Spectral estimation and parameter extraction for photocurrent records.

Conventions
-----------
One-sided spectra, normalized so a pure sinusoid of RMS amplitude A carries
integrated power A^2 (equivalently, integrating the PSD over ordinary
frequency gives the variance).  Record averaging is scalar for power spectra
and vector (complex, phase-preserving) for cross spectra; the cross spectrum
is defined as S_12(omega) = <I_1(-omega) I_2(omega)> under the e^{+i omega t}
transform convention, which for sampled real currents is
FFT(I_1) conj(FFT(I_2)) binwise.

The default window is rectangular: records are long compared to 1/Gamma_m so
leakage is negligible; a Hann option is provided with the standard power
normalization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .constants import hbar, k_B
from .params import Beam, Cavity, DeviceConfig, MechanicalMode
from .response import ComplexSpectrum, cavity_asymmetry
from .montecarlo import PhotocurrentRecord


@dataclass(frozen=True)
class PowerSpectrum:
    grid: np.ndarray        # angular frequency (rad/s), DC bin dropped
    values: np.ndarray      # one-sided PSD
    stderr: np.ndarray      # standard error over records, per bin
    rbw: float              # resolution bandwidth (Hz)
    n_records: int
    relative: bool          # True: units 1/Hz (normalized by mean current)


@dataclass(frozen=True)
class CrossSpectrumResult:
    grid: np.ndarray
    cross: np.ndarray       # complex, vector-averaged, relative units (1/Hz)
    cross_stderr: np.ndarray    # scalar circular standard error per bin
    s_signal: np.ndarray    # scalar-averaged power spectra for normalization
    s_meter: np.ndarray
    rbw: float
    n_records: int

    def normalized_correlation(self, omega: float) -> float:
        """C(omega) = |S_12|^2 / (S_1 S_2) at the bin nearest ``omega``."""
        i = int(np.argmin(np.abs(self.grid - omega)))
        return float(np.abs(self.cross[i]) ** 2
                     / (self.s_signal[i] * self.s_meter[i]))

    def as_complex_spectrum(self) -> ComplexSpectrum:
        return ComplexSpectrum(grid=self.grid, values=self.cross,
                               sidedness="one_sided")


def _window(name: str, n: int) -> np.ndarray:
    if name == "rectangular":
        return np.ones(n)
    if name == "hann":
        return np.hanning(n)
    raise ValueError(f"unknown window {name!r}")


def _channel_fluct(record: PhotocurrentRecord, channel: str
                   ) -> tuple[np.ndarray, float]:
    if channel == "signal":
        x, mean = record.i_signal, record.mean_signal
    elif channel == "meter":
        x, mean = record.i_meter, record.mean_meter
    else:
        raise ValueError("channel must be 'signal' or 'meter'")
    return x - x.mean(), mean


def power_spectrum(records: Iterable[PhotocurrentRecord], channel: str = "meter",
                   window: str = "rectangular", relative: bool = True
                   ) -> PowerSpectrum:
    """Scalar-averaged one-sided periodogram of one channel.

    ``relative=True`` normalizes each record by its mean current squared
    (units 1/Hz); requires a nonzero mean current.
    """
    acc = acc2 = None
    n_rec = 0
    dt = n_samp = None
    for rec in records:
        x, mean = _channel_fluct(rec, channel)
        if dt is None:
            dt, n_samp = rec.dt, x.size
            win = _window(window, n_samp)
            u = float(np.mean(win**2))
        elif rec.dt != dt or x.size != n_samp:
            raise ValueError("inconsistent record lengths or sample rates")
        if relative:
            if mean == 0:
                raise ValueError("relative spectrum needs nonzero mean current")
            x = x / mean
        p = 2.0 * np.abs(np.fft.rfft(x * win)) ** 2 * dt / (n_samp * u)
        acc = p if acc is None else acc + p
        acc2 = p**2 if acc2 is None else acc2 + p**2
        n_rec += 1
    if n_rec == 0:
        raise ValueError("no records")
    mean_p = acc / n_rec
    var = np.maximum(acc2 / n_rec - mean_p**2, 0.0)
    se = np.sqrt(var / max(n_rec - 1, 1))
    freqs = np.fft.rfftfreq(n_samp, dt)
    return PowerSpectrum(grid=2.0 * np.pi * freqs[1:], values=mean_p[1:],
                         stderr=se[1:], rbw=1.0 / (n_samp * dt),
                         n_records=n_rec, relative=relative)


def cross_spectrum(records: Iterable[PhotocurrentRecord],
                   window: str = "rectangular") -> CrossSpectrumResult:
    """Vector-averaged complex cross spectrum of the two channels, in
    relative units, plus the scalar-averaged single-channel power spectra
    from the same records."""
    acc_x = acc_x2 = acc_s = acc_m = None
    n_rec = 0
    dt = n_samp = None
    for rec in records:
        xs, mean_s = _channel_fluct(rec, "signal")
        xm, mean_m = _channel_fluct(rec, "meter")
        if mean_s == 0 or mean_m == 0:
            raise ValueError("cross spectrum needs nonzero mean currents")
        if dt is None:
            dt, n_samp = rec.dt, xs.size
            win = _window(window, n_samp)
            u = float(np.mean(win**2))
        elif rec.dt != dt or xs.size != n_samp:
            raise ValueError("inconsistent record lengths or sample rates")
        fs = np.fft.rfft(xs / mean_s * win)
        fm = np.fft.rfft(xm / mean_m * win)
        norm = 2.0 * dt / (n_samp * u)
        x = fs * np.conj(fm) * norm
        ps = np.abs(fs) ** 2 * norm
        pm = np.abs(fm) ** 2 * norm
        if acc_x is None:
            acc_x, acc_x2, acc_s, acc_m = x, np.abs(x)**2, ps, pm
        else:
            acc_x += x
            acc_x2 += np.abs(x)**2
            acc_s += ps
            acc_m += pm
        n_rec += 1
    if n_rec == 0:
        raise ValueError("no records")
    mean_x = acc_x / n_rec
    # circular standard error of the complex mean
    var = np.maximum(acc_x2 / n_rec - np.abs(mean_x)**2, 0.0)
    se = np.sqrt(var / max(n_rec - 1, 1))
    freqs = np.fft.rfftfreq(n_samp, dt)
    return CrossSpectrumResult(
        grid=2.0 * np.pi * freqs[1:], cross=mean_x[1:], cross_stderr=se[1:],
        s_signal=(acc_s / n_rec)[1:], s_meter=(acc_m / n_rec)[1:],
        rbw=1.0 / (n_samp * dt), n_records=n_rec)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    center: float           # rad/s
    fwhm: float             # rad/s
    peak: float             # height above offset, PSD units
    offset: float
    covariance: np.ndarray  # 4x4 for (center, fwhm, peak, offset)
    converged: bool
    residual_rms: float

    @property
    def area(self) -> float:
        """Integrated power of the fitted peak (PSD units times Hz)."""
        return self.peak * self.fwhm / 4.0

    @property
    def center_err(self) -> float:
        return float(np.sqrt(self.covariance[0, 0]))

    @property
    def fwhm_err(self) -> float:
        return float(np.sqrt(self.covariance[1, 1]))

    @property
    def peak_err(self) -> float:
        return float(np.sqrt(self.covariance[2, 2]))

    @property
    def area_err(self) -> float:
        """First-order error propagation including peak/width covariance."""
        j = np.array([0.0, self.peak / 4.0, self.fwhm / 4.0, 0.0])
        return float(np.sqrt(j @ self.covariance @ j))


def _lorentzian(w, center, fwhm, peak, offset):
    hw = fwhm / 2.0
    return offset + peak * hw**2 / (hw**2 + (w - center) ** 2)


def lorentzian_fit(grid: np.ndarray, values: np.ndarray,
                   window: tuple[float, float] | None = None,
                   stderr: np.ndarray | None = None) -> FitResult:
    """Least-squares Lorentzian profile fit.

    ``window`` restricts the fit to [lo, hi] (rad/s); it should span at
    least three linewidths.  ``stderr`` provides per-bin weights.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = np.ones(grid.size, dtype=bool)
    if window is not None:
        mask = (grid >= window[0]) & (grid <= window[1])
    w, v = grid[mask], values[mask]
    if w.size < 20:
        raise ValueError("need at least 20 points in the fit window")
    sig = None
    if stderr is not None:
        sig = np.asarray(stderr, dtype=float)[mask]
        if np.any(sig <= 0):
            sig = None

    offset0 = float(np.median(v))
    i_pk = int(np.argmax(v))
    peak0 = float(v[i_pk] - offset0)
    if peak0 <= 0:
        raise ValueError("no peak above the median level")
    above = v - offset0 > peak0 / 2.0
    fwhm0 = max(float(np.sum(above)) * float(np.mean(np.diff(w))),
                2.0 * float(np.mean(np.diff(w))))

    # rescale to order-unity parameters: the raw problem mixes scales of
    # ~1e7 (frequency) and ~1e-12 (spectral density), which defeats the
    # optimizer's default step sizing
    w_ref, w_span = float(w[i_pk]), float(w[-1] - w[0])
    x = (w - w_ref) / w_span
    y = v / peak0
    sig_s = None if sig is None else sig / peak0
    p0 = [0.0, fwhm0 / w_span, 1.0, offset0 / peak0]
    try:
        popt, pcov = optimize.curve_fit(
            _lorentzian, x, y, p0=p0, sigma=sig_s,
            bounds=([x[0], 0.0, 0.0, -np.inf], [x[-1], np.inf, np.inf, np.inf]),
            maxfev=20000)
        converged = bool(np.all(np.isfinite(pcov)))
    except RuntimeError:
        raise RuntimeError("Lorentzian fit did not converge")
    if popt[1] <= 0:
        raise RuntimeError("fit produced a nonpositive linewidth")
    resid = (y - _lorentzian(x, *popt)) * peak0
    scale = np.array([w_span, w_span, peak0, peak0])
    popt = popt * scale
    popt[0] += w_ref
    pcov = pcov * np.outer(scale, scale)
    return FitResult(center=float(popt[0]), fwhm=float(popt[1]),
                     peak=float(popt[2]), offset=float(popt[3]),
                     covariance=pcov, converged=converged,
                     residual_rms=float(np.sqrt(np.mean(resid**2))))


# ---------------------------------------------------------------------------
# Power-sweep decomposition and damping correction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepDecomposition:
    constant: float         # thermal motion
    linear: float           # shot-noise backaction per photon
    quadratic: float        # classical intensity noise per photon squared
    shares_at_max: tuple[float, float, float]   # fractions of peak at max N


def power_sweep_decomposition(photon_numbers: Sequence[float],
                              peaks: Sequence[float]) -> SweepDecomposition:
    """Polynomial decomposition of damping-corrected peak spectral densities
    versus signal photon number: constant (thermal), linear (shot-noise
    backaction), quadratic (classical noise)."""
    n = np.asarray(photon_numbers, dtype=float)
    p = np.asarray(peaks, dtype=float)
    if np.unique(n).size < 4:
        raise ValueError("need at least 4 distinct photon numbers")
    coeffs = np.polynomial.polynomial.polyfit(n, p, deg=2)
    c0, c1, c2 = (float(c) for c in coeffs)
    n_max = float(n.max())
    parts = np.array([c0, c1 * n_max, c2 * n_max**2])
    total = parts.sum()
    if total == 0:
        raise ValueError("degenerate sweep: zero total peak at max power")
    return SweepDecomposition(constant=c0, linear=c1, quadratic=c2,
                              shares_at_max=tuple(parts / total))


@dataclass(frozen=True)
class DampingCorrection:
    corrected_peaks: np.ndarray
    gamma_at_zero: float    # extrapolated Gamma_m(N_S = 0) (rad/s)
    slope: float            # dGamma/dN (rad/s per photon)
    linear_residual: float  # rms of linear fit residuals / mean Gamma
    warning: str | None


def correct_damping(photon_numbers: Sequence[float], peaks: Sequence[float],
                    gammas: Sequence[float],
                    nonlinearity_tol: float = 0.05) -> DampingCorrection:
    """Remove the signal-beam optical-damping trend from fitted peaks.

    Each peak is rescaled by (Gamma_m(N)/Gamma_m(0))^2, which preserves the
    fitted area (peak times width) against the power-dependent linewidth;
    Gamma_m(0) comes from a linear extrapolation of the damping trend.
    """
    n = np.asarray(photon_numbers, dtype=float)
    p = np.asarray(peaks, dtype=float)
    g = np.asarray(gammas, dtype=float)
    slope, g0 = np.polyfit(n, g, 1)
    resid = g - (g0 + slope * n)
    rel = float(np.sqrt(np.mean(resid**2)) / np.mean(g))
    warning = None
    if rel > nonlinearity_tol:
        warning = (f"damping trend deviates from linear by {rel:.1%} rms; "
                   "correction may be biased")
    corrected = p * (g / g0) ** 2
    return DampingCorrection(corrected_peaks=corrected, gamma_at_zero=float(g0),
                             slope=float(slope), linear_residual=rel,
                             warning=warning)


# ---------------------------------------------------------------------------
# Coupling-rate calibrations
# ---------------------------------------------------------------------------

def calibrate_g_from_damping(gamma_m: float, photon_number: float,
                             cavity: Cavity, detuning: float,
                             mechanics: MechanicalMode,
                             gamma_0: float | None = None) -> float:
    """Invert the optical damping relation for the coupling rate:
    Gamma_opt = g^2 N kappa (|chi_c(omega_m)|^2 - |chi_c(-omega_m)|^2).

    Valid when the measured Gamma_m is dominated by the one beam described
    by (photon_number, detuning)."""
    if gamma_0 is None:
        gamma_0 = mechanics.gamma_0
    if gamma_m <= gamma_0:
        raise ValueError("measured damping does not exceed the intrinsic rate")
    if photon_number <= 0:
        raise ValueError("photon number must be positive")
    probe = Beam(detuning=detuning, photon_number=photon_number, coupling_g=1.0)
    re_pi = float(np.real(cavity_asymmetry(mechanics.omega_m, cavity, probe)))
    if re_pi <= 0:
        raise ValueError("beam at this detuning does not damp the mode")
    return float(np.sqrt((gamma_m - gamma_0) / (2.0 * photon_number * re_pi)))


def calibrate_g_from_thermal(s_im_peak: float, gamma_m: float, t_bath: float,
                             config: DeviceConfig,
                             mean_current: float | None = None) -> float:
    """Coupling rate from the thermally driven meter spectrum.

    ``s_im_peak`` is the one-sided, floor-subtracted meter PSD at the
    mechanical peak, measured with the signal beam off; pass the mean
    photocurrent as ``mean_current`` if the PSD is in absolute units
    (A^2/Hz), or leave it None for a relative PSD (1/Hz).  Uses

        g^2 = s_im_peak Gamma_m^2 hbar omega_m
              / (8 |Pi_2(omega_m)|^2 k_B T_bath Gamma_0)

    which encodes the effective mode temperature T_eff = T_bath
    Gamma_0/Gamma_m; the one-sided peak collects the resonances at both
    +/- omega_m, hence the prefactor 8.  The classical limit n >> 1 is
    assumed (fractional bias in g of about 1/(4 n_m)).
    """
    if s_im_peak <= 0 or gamma_m <= 0 or t_bath <= 0:
        raise ValueError("inputs must be positive")
    if mean_current is not None:
        if mean_current <= 0:
            raise ValueError("mean current must be positive")
        s_im_peak = s_im_peak / mean_current**2
    mech = config.mechanics
    pi2 = cavity_asymmetry(mech.omega_m, config.cavity, config.meter)
    g2 = s_im_peak * gamma_m**2 * hbar * mech.omega_m \
        / (8.0 * np.abs(pi2) ** 2 * k_B * t_bath * mech.gamma_0)
    return float(np.sqrt(g2))
