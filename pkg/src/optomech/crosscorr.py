"""Two-detector photocurrent cross-correlation spectra.

The full expression is evaluated term by term (thirteen terms: one from
motion imprinted on both photocurrents, six from correlations between the
position and the meter-beam input noises, six from correlations with the
signal-beam input noises including its classical intensity noise).  The
normalized output S_12 / (Ibar_1 Ibar_2) is independent of detection
efficiencies and dark currents by construction.

One-sided spectra are folded as S1(omega) = S2(omega) + conj(S2(-omega)),
which preserves both total power and the phase of the correlation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from .params import DeviceConfig, backaction_thermal_ratio, validate, \
    zero_point_amplitude
from .response import ComplexSpectrum, _two_sided_terms, cavity_asymmetry, \
    chi_c, effective_denominator

N_TERMS = 13


def _terms_two_sided(omega: np.ndarray, config: DeviceConfig) -> np.ndarray:
    """All thirteen two-sided cross-spectrum terms, shape (13, len(omega)),
    in relative-intensity units (1/Hz, normalized by Ibar_1 Ibar_2)."""
    w = np.asarray(omega, dtype=float)
    cav = config.cavity
    mech = config.mechanics
    wm = mech.omega_m
    zzp = zero_point_amplitude(mech)
    sig, met = config.signal, config.meter

    a1 = np.sqrt(sig.photon_number)
    a2 = np.sqrt(met.photon_number)
    n1, n2 = sig.photon_number, met.photon_number
    g1, g2 = sig.coupling_g, met.coupling_g
    big_g1, big_g2 = g1 / zzp, g2 / zzp

    chi1 = chi_c(w, cav, sig)
    chi1_neg = chi_c(-w, cav, sig)
    chi2 = chi_c(w, cav, met)
    chi2_neg = chi_c(-w, cav, met)
    pi1_neg = cavity_asymmetry(-w, cav, sig)
    pi2 = cavity_asymmetry(w, cav, met)
    n_om = effective_denominator(w, config)
    n_neg = effective_denominator(-w, config)

    # symmetrized displacement spectrum <z(-w) z(w)>_s
    parts = _two_sided_terms(w, config)
    s_z = sum(parts.values())

    sqrt_kl = np.sqrt(cav.kappa_L)
    sqrt_kr = np.sqrt(cav.kappa_R)
    sqrt_ki = np.sqrt(cav.kappa_int)

    # <z(-w) xi_j2(w)>_s and the daggered partner, per port rate
    def e_z_xi2(sqrt_kj):
        return -wm * sqrt_kj * g2 * zzp * a2 * np.conj(chi2) / n_neg

    def e_z_xi2_dag(sqrt_kj):
        return -wm * sqrt_kj * g2 * zzp * a2 * chi2_neg / n_neg

    # <xi_j1(-w) z(w)>_s and the daggered partner
    def e_xi1_z(sqrt_kj):
        return -wm * sqrt_kj * g1 * zzp * a1 * np.conj(chi1_neg) / n_om

    def e_xi1_z_dag(sqrt_kj):
        return -wm * sqrt_kj * g1 * zzp * a1 * chi1 / n_om

    # classical intensity noise correlation <dx_1(-w) z(w)>_s
    e_dx_z = -2.0 * wm * sqrt_kl * g1 * zzp \
        * (a1 * chi1 + a1 * np.conj(chi1_neg)) * sig.classical_noise_B / n_om

    pre1 = np.sqrt(cav.kappa_R) * big_g1 * n1 * 1j * pi1_neg
    pre2 = np.sqrt(cav.kappa_R) * big_g2 * n2 * 1j * pi2

    terms = np.empty((N_TERMS, w.size), dtype=complex)
    terms[0] = cav.kappa_R * big_g1 * n1 * pi1_neg * big_g2 * n2 * pi2 * s_z
    terms[1] = pre1 * a2 * sqrt_kl * sqrt_kr * chi2 * e_z_xi2(sqrt_kl)
    terms[2] = pre1 * a2 * sqrt_ki * sqrt_kr * chi2 * e_z_xi2(sqrt_ki)
    terms[3] = pre1 * a2 * (cav.kappa_R * chi2 - 1.0) * e_z_xi2(sqrt_kr)
    terms[4] = pre1 * a2 * sqrt_kl * sqrt_kr * np.conj(chi2_neg) * e_z_xi2_dag(sqrt_kl)
    terms[5] = pre1 * a2 * sqrt_ki * sqrt_kr * np.conj(chi2_neg) * e_z_xi2_dag(sqrt_ki)
    terms[6] = pre1 * a2 * (cav.kappa_R * np.conj(chi2_neg) - 1.0) * e_z_xi2_dag(sqrt_kr)
    terms[7] = pre2 * a1 * sqrt_kl * sqrt_kr * chi1_neg * (e_xi1_z(sqrt_kl) + e_dx_z)
    terms[8] = pre2 * a1 * sqrt_ki * sqrt_kr * chi1_neg * e_xi1_z(sqrt_ki)
    terms[9] = pre2 * a1 * (cav.kappa_R * chi1_neg - 1.0) * e_xi1_z(sqrt_kr)
    terms[10] = pre2 * a1 * sqrt_kl * sqrt_kr * np.conj(chi1) * (e_xi1_z_dag(sqrt_kl) + e_dx_z)
    terms[11] = pre2 * a1 * sqrt_ki * sqrt_kr * np.conj(chi1) * e_xi1_z_dag(sqrt_ki)
    terms[12] = pre2 * a1 * (cav.kappa_R * np.conj(chi1) - 1.0) * e_xi1_z_dag(sqrt_kr)

    prefactor = -1.0 / (cav.kappa_R * n1 * n2)
    return prefactor * terms


def cross_spectrum_two_sided(omega: np.ndarray, config: DeviceConfig,
                             term_mask: np.ndarray | None = None) -> np.ndarray:
    """Two-sided normalized cross spectrum; ``term_mask`` (length 13 boolean)
    selects individual terms for debugging."""
    terms = _terms_two_sided(omega, config)
    if term_mask is not None:
        mask = np.asarray(term_mask, dtype=bool)
        if mask.shape != (N_TERMS,):
            raise ValueError(f"term_mask must have shape ({N_TERMS},)")
        terms = terms[mask]
    return terms.sum(axis=0)


def cross_spectrum_full(grid: np.ndarray, config: DeviceConfig,
                        term_mask: np.ndarray | None = None,
                        phase_offset_deg: float = 0.0) -> ComplexSpectrum:
    """One-sided photocurrent cross-correlation spectrum, all terms.

    ``phase_offset_deg`` applies a constant instrument phase rotation
    (detection electronics), default none.
    """
    grid = np.asarray(grid, dtype=float)
    violations = validate(config)
    if violations:
        raise ValueError("invalid config: " + "; ".join(violations))
    pos = cross_spectrum_two_sided(grid, config, term_mask)
    neg = cross_spectrum_two_sided(-grid, config, term_mask)
    values = pos + np.conj(neg)
    if phase_offset_deg:
        values = values * np.exp(1j * np.deg2rad(phase_offset_deg))
    return ComplexSpectrum(grid=grid, values=values, sidedness="one_sided")


@dataclass(frozen=True)
class ResonantCrossSpectrum:
    """Zero-detuning cross spectrum split into shot and classical drives."""

    grid: np.ndarray
    shot: np.ndarray        # complex, one-sided
    classical: np.ndarray   # complex, one-sided

    @property
    def total(self) -> np.ndarray:
        return self.shot + self.classical


def cross_spectrum_resonant(grid: np.ndarray, config: DeviceConfig,
                            phase_offset_deg: float = 0.0) -> ResonantCrossSpectrum:
    """Simplified cross spectrum for a resonant signal beam.

    Shot drive: 2 i g1 g2 omega_m Pi_2(omega) chi_c1*(omega) / N(omega).
    Classical drive adds 2 i g1 g2 omega_m kappa_L Pi_2(omega)
    |chi_c1(omega) + chi_c1*(-omega)|^2 B_1 / N(omega).
    """
    if config.signal.detuning != 0.0:
        raise ValueError("resonant form requires zero signal detuning; "
                         "use cross_spectrum_full for a detuned beam")
    grid = np.asarray(grid, dtype=float)
    sig, met, cav = config.signal, config.meter, config.cavity
    wm = config.mechanics.omega_m
    g1, g2 = sig.coupling_g, met.coupling_g

    def two_sided(w):
        chi1 = chi_c(w, cav, sig)
        chi1_neg_conj = np.conj(chi_c(-w, cav, sig))
        pi2 = cavity_asymmetry(w, cav, met)
        n_om = effective_denominator(w, config)
        shot = 2j * g1 * g2 * wm * pi2 * np.conj(chi1) / n_om
        classical = 2j * g1 * g2 * wm * cav.kappa_L * pi2 \
            * np.abs(chi1 + chi1_neg_conj) ** 2 * sig.classical_noise_B / n_om
        return shot, classical

    shot_p, cl_p = two_sided(grid)
    shot_n, cl_n = two_sided(-grid)
    rot = np.exp(1j * np.deg2rad(phase_offset_deg)) if phase_offset_deg else 1.0
    return ResonantCrossSpectrum(
        grid=grid,
        shot=(shot_p + np.conj(shot_n)) * rot,
        classical=(cl_p + np.conj(cl_n)) * rot,
    )


def shot_drive_fraction(config: DeviceConfig) -> float:
    """Fraction of the resonant cross-correlation amplitude at omega_m that
    comes from shot noise rather than classical intensity noise."""
    cfg0 = replace(config, signal=replace(config.signal, detuning=0.0))
    grid = np.asarray([config.mechanics.omega_m])
    res = cross_spectrum_resonant(grid, cfg0)
    shot = float(np.abs(res.shot[0]))
    classical = float(np.abs(res.classical[0]))
    return shot / (shot + classical)


@dataclass(frozen=True)
class CorrelationResult:
    c_measured: float       # |S_12|^2 / (S_1 S_2) at omega_m
    c_ideal: float          # R/(1+R) * kappa_R/kappa * efficiency estimate
    rpsn_fraction: float    # R/(1+R)


def normalized_correlation(config: DeviceConfig, s_is: float, s_im: float,
                           s_ism: complex) -> CorrelationResult:
    """Peak normalized correlation from measured (or predicted) spectral
    values at the mechanical resonance, plus the ideal zero-detuning,
    no-classical-noise estimate."""
    if s_is <= 0 or s_im <= 0:
        raise ValueError("power spectral densities must be positive")
    r = backaction_thermal_ratio(config.signal, config.cavity,
                                 config.mechanics, config.env)
    frac = r / (1.0 + r)
    ideal = frac * (config.cavity.kappa_R / config.cavity.kappa) \
        * config.detect_signal.efficiency
    return CorrelationResult(
        c_measured=float(abs(s_ism) ** 2 / (s_is * s_im)),
        c_ideal=ideal,
        rpsn_fraction=frac,
    )


@dataclass(frozen=True)
class DetuningFit:
    detuning: float         # rad/s
    sigma: float            # 1-sigma uncertainty (rad/s)
    scale: float
    residual_norm: float
    converged: bool
    n_iterations: int


def fit_detuning(grid: np.ndarray, measured: np.ndarray,
                 config_template: DeviceConfig,
                 max_iterations: int = 200) -> DetuningFit:
    """Least-squares estimate of the signal-beam detuning from a measured
    cross spectrum, fitting the full model over (detuning, overall scale)
    with a bounded derivative-free simplex."""
    grid = np.asarray(grid, dtype=float)
    measured = np.asarray(measured, dtype=complex)
    gamma_span = grid[-1] - grid[0]

    def model(delta: float) -> np.ndarray:
        cfg = replace(config_template,
                      signal=replace(config_template.signal, detuning=delta))
        return cross_spectrum_full(grid, cfg).values

    def ssr(params: np.ndarray) -> float:
        resid = measured - params[1] * model(params[0])
        return float(np.sum(resid.real**2 + resid.imag**2))

    # analytic starting scale at zero detuning
    m0 = model(0.0)
    s0 = float(np.sum((np.conj(m0) * measured).real) / np.sum(np.abs(m0) ** 2))
    # explicit simplex: the default perturbation of a zero-valued detuning
    # coordinate is far below any physical scale
    dstep = 0.1 * gamma_span
    simplex = np.array([[0.0, s0], [dstep, s0], [0.0, 1.05 * s0 or 0.1]])
    f0 = ssr(np.array([0.0, s0]))
    res = optimize.minimize(
        ssr, x0=np.array([0.0, s0]), method="Nelder-Mead",
        options={"maxiter": max_iterations, "xatol": 1e-10 * gamma_span,
                 "fatol": 1e-10 * max(f0, 1e-300),
                 "initial_simplex": simplex})
    delta, scale = float(res.x[0]), float(res.x[1])
    n_pts = 2 * grid.size

    # curvature-based 1-sigma from a quadratic slice through the optimum
    h = max(1e-4 * gamma_span, 1e-12)
    curv = (ssr(res.x + [h, 0.0]) - 2.0 * res.fun + ssr(res.x - [h, 0.0])) / h**2
    dof = max(n_pts - 2, 1)
    s2 = res.fun / dof
    sigma = math_sqrt_safe(2.0 * s2 / curv) if curv > 0 else float("inf")

    return DetuningFit(detuning=delta, sigma=sigma, scale=scale,
                       residual_norm=float(np.sqrt(res.fun)),
                       converged=bool(res.success), n_iterations=res.nit)


def math_sqrt_safe(x: float) -> float:
    return float(np.sqrt(x)) if x > 0 else 0.0
