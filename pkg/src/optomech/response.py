"""Analytic frequency-domain response of the two-beam optomechanical system.

Fourier convention f(omega) = Integral e^{+i omega t} f(t) dt.  The cavity
susceptibility pole sits at +Delta (detuning defined cavity minus laser), so
a beam with positive detuning (red-detuned laser) produces positive optical
damping; see the dynamics module for the damping rate itself.

All public spectra are one-sided, folded as S(omega) = S2(omega) + S2(-omega)
from the internal two-sided forms, and normalized so that the integral over
ordinary frequency (equivalently d omega / 2 pi) gives the variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .constants import q_e
from .params import Beam, Cavity, DeviceConfig, MechanicalMode, \
    thermal_occupation, validate, zero_point_amplitude

ArrayLike = float | np.ndarray


@dataclass(frozen=True)
class ComplexSpectrum:
    """Frequency grid plus complex values with an explicit sidedness tag."""

    grid: np.ndarray        # angular frequencies (rad/s), strictly increasing
    values: np.ndarray      # complex amplitudes
    sidedness: str          # "one_sided" | "two_sided"

    def __post_init__(self):
        if self.sidedness not in ("one_sided", "two_sided"):
            raise ValueError(f"bad sidedness {self.sidedness!r}")
        if len(self.grid) != len(self.values):
            raise ValueError("grid/values length mismatch")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")


@dataclass(frozen=True)
class SpectrumDecomposition:
    """One-sided displacement spectrum split by physical drive (m^2/Hz)."""

    grid: np.ndarray
    thermal: np.ndarray
    rpsn_signal: np.ndarray
    meter_backaction_zp: np.ndarray
    classical: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.thermal + self.rpsn_signal + self.meter_backaction_zp \
            + self.classical


def chi_m(omega: ArrayLike, mechanics: MechanicalMode) -> np.ndarray:
    """Mechanical susceptibility (Gamma_0/2 - i(omega - omega_m))^-1."""
    return 1.0 / (mechanics.gamma_0 / 2.0 - 1j * (omega - mechanics.omega_m))


def chi_c(omega: ArrayLike, cavity: Cavity, beam: Beam) -> np.ndarray:
    """Cavity susceptibility (kappa/2 - i(omega - Delta))^-1.

    Delta = omega_cavity - omega_laser, so a red-detuned beam has Delta > 0.
    With the e^{+i omega t} transform convention the rotating-frame equation
    d' = -(i Delta + kappa/2) d + ... places the response pole at +Delta,
    which enhances the upper (anti-Stokes) mechanical sideband for Delta > 0
    and yields positive optical damping through the effective denominator.
    This is the locked global sign convention.
    """
    return 1.0 / (cavity.kappa / 2.0 - 1j * (omega - beam.detuning))


def cavity_asymmetry(omega: ArrayLike, cavity: Cavity, beam: Beam) -> np.ndarray:
    """Pi(omega) = chi_c(omega) - chi_c*(-omega), the sideband asymmetry factor
    that transduces displacement onto transmitted intensity."""
    return chi_c(omega, cavity, beam) - np.conj(chi_c(-np.asarray(omega, dtype=float),
                                                      cavity, beam))


def effective_denominator(omega: ArrayLike, config: DeviceConfig) -> np.ndarray:
    """Inverse effective mechanical susceptibility including both beams.

    (chi_m(omega) chi_m*(-omega))^-1
        - 2 i omega_m (N_1 g_1^2 Pi_1(omega) + N_2 g_2^2 Pi_2(omega))
    """
    w = np.asarray(omega, dtype=float)
    mech = config.mechanics
    bare = 1.0 / (chi_m(w, mech) * np.conj(chi_m(-w, mech)))
    shift = 0.0
    for beam in (config.signal, config.meter):
        shift = shift + beam.photon_number * beam.coupling_g**2 \
            * cavity_asymmetry(w, config.cavity, beam)
    return bare - 2j * mech.omega_m * shift


def _two_sided_terms(omega: np.ndarray, config: DeviceConfig) -> dict[str, np.ndarray]:
    """Two-sided displacement spectrum, term by term, in m^2/Hz."""
    mech = config.mechanics
    cav = config.cavity
    zzp2 = zero_point_amplitude(mech) ** 2
    n_th = thermal_occupation(mech, config.env)
    inv_n2 = 1.0 / np.abs(effective_denominator(omega, config)) ** 2

    thermal = mech.gamma_0 * (
        (n_th + 1.0) / np.abs(chi_m(omega, mech)) ** 2
        + n_th / np.abs(chi_m(-omega, mech)) ** 2
    )

    def shot(beam: Beam) -> np.ndarray:
        return 4.0 * mech.omega_m**2 * cav.kappa * beam.photon_number \
            * beam.coupling_g**2 * np.abs(chi_c(-omega, cav, beam)) ** 2

    sig = config.signal
    classical = 4.0 * mech.omega_m**2 * cav.kappa_L * sig.photon_number \
        * sig.coupling_g**2 * sig.classical_noise_B \
        * np.abs(chi_c(omega, cav, sig) + np.conj(chi_c(-omega, cav, sig))) ** 2

    return {
        "thermal": zzp2 * thermal * inv_n2,
        "rpsn_signal": zzp2 * shot(sig) * inv_n2,
        "meter_backaction_zp": zzp2 * shot(config.meter) * inv_n2,
        "classical": zzp2 * classical * inv_n2,
    }


def displacement_spectrum(grid: np.ndarray, config: DeviceConfig) -> SpectrumDecomposition:
    """One-sided displacement noise spectrum with per-term decomposition.

    The four parts are residual thermal motion, shot-noise backaction from the
    signal beam, meter-beam backaction (carrying most of the zero-point
    contribution), and the response to classical signal-beam intensity noise.
    """
    grid = np.asarray(grid, dtype=float)
    violations = validate(config)
    if violations:
        raise ValueError("invalid config: " + "; ".join(violations))
    if np.any(grid <= 0):
        raise ValueError("one-sided grid must be strictly positive")
    pos = _two_sided_terms(grid, config)
    neg = _two_sided_terms(-grid, config)
    return SpectrumDecomposition(
        grid=grid,
        thermal=pos["thermal"] + neg["thermal"],
        rpsn_signal=pos["rpsn_signal"] + neg["rpsn_signal"],
        meter_backaction_zp=pos["meter_backaction_zp"] + neg["meter_backaction_zp"],
        classical=pos["classical"] + neg["classical"],
    )


def displacement_term_areas(config: DeviceConfig) -> dict[str, float]:
    """Variance contribution of each displacement-spectrum term (m^2).

    Integrates the two-sided terms over the full line with adaptive
    quadrature; used for occupation bookkeeping and sum-rule checks.
    """
    wm = config.mechanics.omega_m
    # effective resonance and linewidth set the narrow-peak geometry; the
    # semi-infinite quad segments would otherwise miss peaks narrower than
    # ~1e-4 of their interval
    spring = 0.0
    gamma_eff = config.mechanics.gamma_0
    for beam in (config.signal, config.meter):
        pi_res = cavity_asymmetry(wm, config.cavity, beam)
        weight = beam.photon_number * beam.coupling_g**2
        spring += weight * float(np.imag(pi_res))
        gamma_eff += 2.0 * weight * float(np.real(pi_res))
    w_eff = wm + spring
    gamma = max(abs(gamma_eff), config.mechanics.gamma_0)
    half = min(400.0 * gamma, 0.5 * w_eff)
    # geometric ladder of breakpoints hugging each peak so quad resolves
    # linewidths many orders of magnitude below the resonance frequency
    ladder = [x * gamma for x in (0.5, 5.0, 50.0)]
    offsets = sorted({-half, *(-x for x in ladder), 0.0, *ladder, half})
    peak_breaks = [w_eff + o for o in offsets] \
        + [-w_eff + o for o in offsets]
    areas: dict[str, float] = {}
    for name in ("thermal", "rpsn_signal", "meter_backaction_zp", "classical"):
        def f(w, name=name):
            return _two_sided_terms(np.asarray([w]), config)[name][0]
        total = 0.0
        brk = sorted({-np.inf, 0.0, np.inf, *peak_breaks})
        for a, b in zip(brk[:-1], brk[1:]):
            val, _ = integrate.quad(f, a, b, limit=400)
            total += val
        areas[name] = total / (2.0 * np.pi)
    return areas


def default_grid(config: DeviceConfig, gamma_m: float, n_points: int = 4001,
                 half_width_linewidths: float = 20.0) -> np.ndarray:
    """Dense grid spanning omega_m +/- ``half_width_linewidths`` Gamma_m."""
    wm = config.mechanics.omega_m
    half = half_width_linewidths * gamma_m
    lo = max(wm - half, 1e-6 * wm)
    return np.linspace(lo, wm + half, n_points)


def shot_floor_relative(beam: Beam, cavity: Cavity, detection_efficiency: float) -> float:
    """One-sided shot-noise floor of a photocurrent in relative intensity
    units: 2 / (detected photon flux)."""
    flux = detection_efficiency * cavity.kappa_R * beam.photon_number
    if flux <= 0:
        raise ValueError("no transduction: zero detected photon flux")
    return 2.0 / flux


def dark_floor_relative(beam: Beam, cavity: Cavity, detection_efficiency: float,
                        dark_current_psd: float) -> float:
    """One-sided dark-current floor scaled to relative intensity units."""
    mean_current = q_e * detection_efficiency * cavity.kappa_R * beam.photon_number
    if mean_current <= 0:
        raise ValueError("no transduction: zero mean photocurrent")
    return dark_current_psd / mean_current**2


def beam_photocurrent_spectrum(grid: np.ndarray, config: DeviceConfig,
                               which: str = "meter") -> dict[str, np.ndarray | float]:
    """One-sided transmitted-intensity spectrum of one beam (relative
    intensity units, 1/Hz): transduced displacement plus shot and dark floors.

    Returns a dict with keys ``total``, ``transduced``, ``shot_floor``,
    ``dark_floor``.
    """
    grid = np.asarray(grid, dtype=float)
    if which == "meter":
        beam, det = config.meter, config.detect_meter
    elif which == "signal":
        beam, det = config.signal, config.detect_signal
    else:
        raise ValueError("which must be 'meter' or 'signal'")
    if beam.photon_number <= 0:
        raise ValueError("no transduction: beam carries no power")

    s_z = displacement_spectrum(grid, config).total
    big_g = beam.coupling_g / zero_point_amplitude(config.mechanics)
    transduced = np.abs(cavity_asymmetry(grid, config.cavity, beam)) ** 2 \
        * big_g**2 * s_z
    shot = shot_floor_relative(beam, config.cavity, det.efficiency)
    dark = dark_floor_relative(beam, config.cavity, det.efficiency,
                               det.dark_current_psd)
    if which == "signal":
        # classical intensity noise passes the cavity filter onto the output
        a_cn = 2.0 * classical_output_level(grid, config)
        transduced = transduced + a_cn
    return {
        "total": transduced + shot + dark,
        "transduced": transduced,
        "shot_floor": shot,
        "dark_floor": dark,
    }


def meter_photocurrent_spectrum(grid: np.ndarray, config: DeviceConfig) -> dict:
    """Meter-beam transmitted-intensity spectrum; see
    :func:`beam_photocurrent_spectrum`."""
    return beam_photocurrent_spectrum(grid, config, which="meter")


def invert_meter_spectrum(grid: np.ndarray, relative_psd: np.ndarray,
                          config: DeviceConfig) -> np.ndarray:
    """Convert a floor-subtracted meter intensity spectrum back to an
    effective displacement spectrum: S_z = (S_I/Ibar^2) / (|Pi|^2 G^2)."""
    grid = np.asarray(grid, dtype=float)
    big_g = config.meter.coupling_g / zero_point_amplitude(config.mechanics)
    gain = np.abs(cavity_asymmetry(grid, config.cavity, config.meter)) ** 2 * big_g**2
    return np.asarray(relative_psd, dtype=float) / gain


def classical_output_level(omega: ArrayLike, config: DeviceConfig) -> np.ndarray:
    """Two-sided relative-intensity level of classical noise on the
    transmitted signal beam (cavity-filtered): kappa_L |chi + chi*|^2 B / N."""
    sig = config.signal
    cav = config.cavity
    comb = np.abs(chi_c(omega, cav, sig) + np.conj(chi_c(-np.asarray(omega, float),
                                                         cav, sig))) ** 2
    return cav.kappa_L * comb * sig.classical_noise_B / sig.photon_number


def shot_classical_output_ratio(omega: ArrayLike, config: DeviceConfig
                                ) -> tuple[np.ndarray, np.ndarray]:
    """Two-sided relative-intensity levels (A_sn, A_cn) of the transmitted
    signal beam: flat shot noise 1/(kappa_R N) and cavity-filtered classical
    noise.  Valid only near zero signal detuning (|Delta| < kappa/100)."""
    sig = config.signal
    cav = config.cavity
    if abs(sig.detuning) >= cav.kappa / 100.0:
        raise ValueError("signal detuning outside the near-resonant validity "
                         "range |Delta| < kappa/100")
    if sig.photon_number <= 0:
        raise ValueError("signal beam carries no power")
    w = np.asarray(omega, dtype=float)
    a_sn = np.full_like(w, 1.0 / (cav.kappa_R * sig.photon_number)) if w.shape \
        else np.float64(1.0 / (cav.kappa_R * sig.photon_number))
    a_cn = cav.kappa_L * np.abs(
        chi_c(w, cav, sig) + np.conj(chi_c(-w, cav, sig))) ** 2 \
        * sig.classical_noise_B / sig.photon_number
    return a_sn, a_cn
