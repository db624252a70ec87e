"""Optomechanical rates, occupations, stability, and multimode coupling.

The optical damping rate follows from the effective mechanical denominator:
near resonance the half-linewidth is Gamma_0/2 + N g^2 Re Pi(omega_m), so

    Gamma_opt = 2 N g^2 Re Pi(omega_m)
              = N g^2 kappa (|chi_c(omega_m)|^2 - |chi_c(-omega_m)|^2),

positive (cooling) for a red-detuned beam (Delta > 0) under the locked sign
convention, where the pole of chi_c sits at +Delta and the anti-Stokes
sideband is the enhanced one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize

from .constants import hbar
from .params import Beam, Cavity, DeviceConfig, MechanicalMode, \
    thermal_occupation, zero_point_amplitude
from . import response


def optical_damping(beam: Beam, cavity: Cavity, mechanics: MechanicalMode) -> float:
    """Signed optical damping rate of one beam (rad/s); positive = cooling.

    Valid in the weak-coupling regime Gamma_opt << kappa.
    """
    wm = mechanics.omega_m
    pi_res = response.cavity_asymmetry(wm, cavity, beam)
    return 2.0 * beam.photon_number * beam.coupling_g**2 * float(np.real(pi_res))


def total_damping(config: DeviceConfig) -> float:
    """Gamma_m = Gamma_0 + Gamma_S + Gamma_M."""
    return config.mechanics.gamma_0 \
        + optical_damping(config.signal, config.cavity, config.mechanics) \
        + optical_damping(config.meter, config.cavity, config.mechanics)


def optical_spring(beam: Beam, cavity: Cavity, mechanics: MechanicalMode,
                   resolution_fraction: float = 1e-3) -> float:
    """Light-induced mechanical frequency shift (rad/s).

    Located numerically as the displacement of the |N(omega)|^-2 peak from
    omega_m, to a resolution of ``resolution_fraction`` times the effective
    linewidth.
    """
    if beam.photon_number == 0:
        return 0.0
    gamma_m = mechanics.gamma_0 + optical_damping(beam, cavity, mechanics)
    if gamma_m <= 0:
        raise ValueError("beam antidamps the mode; no stable peak to locate")

    wm = mechanics.omega_m

    def denom_mag(w: float) -> float:
        chi_m = response.chi_m(w, mechanics)
        chi_m_neg = response.chi_m(-w, mechanics)
        bare = 1.0 / (chi_m * np.conj(chi_m_neg))
        pi = response.cavity_asymmetry(w, cavity, beam)
        n = bare - 2j * wm * beam.photon_number * beam.coupling_g**2 * pi
        return float(np.abs(n))

    # analytic first guess from the imaginary part of the backaction shift
    pi_res = response.cavity_asymmetry(wm, cavity, beam)
    guess = beam.photon_number * beam.coupling_g**2 * float(np.imag(pi_res))
    half = 3.0 * abs(guess) + 10.0 * gamma_m
    lo, hi = wm + guess - half, wm + guess + half
    if not (denom_mag(lo) > denom_mag(wm + guess) < denom_mag(hi)):
        # fall back to a wide bracket around the bare resonance
        lo, hi = wm - 100.0 * gamma_m, wm + 100.0 * gamma_m
    res = optimize.minimize_scalar(
        denom_mag, bounds=(lo, hi), method="bounded",
        options={"xatol": resolution_fraction * gamma_m})
    if not res.success:
        raise RuntimeError("effective-resonance peak not bracketed")
    return float(res.x) - wm


@dataclass(frozen=True)
class OccupationReport:
    n_m: float                  # mean phonon occupation
    gamma_m: float              # total damping (rad/s)
    thermal_flux: float         # n_th * Gamma_0 (rad/s)
    signal_flux: float          # effective n_S * Gamma_S from spectral area
    meter_flux: float           # effective n_M * Gamma_M from spectral area
    classical_flux: float       # classical-noise contribution


def phonon_occupation(config: DeviceConfig) -> OccupationReport:
    """Phonon occupation from the rate equation, with the effective bath
    products defined through the spectral areas of the corresponding
    displacement-spectrum terms (which makes the rate equation an identity
    of the spectral model)."""
    gamma_m = total_damping(config)
    if gamma_m <= 0:
        raise ValueError("dynamically unstable: net damping <= 0")
    zzp2 = zero_point_amplitude(config.mechanics) ** 2
    areas = response.displacement_term_areas(config)
    flux = {k: a / (2.0 * zzp2) * gamma_m for k, a in areas.items()}
    total_flux = sum(flux.values())
    # the area bookkeeping carries the zero-point half quantum once
    n_m = total_flux / gamma_m - 0.5
    return OccupationReport(
        n_m=n_m,
        gamma_m=gamma_m,
        thermal_flux=flux["thermal"],
        signal_flux=flux["rpsn_signal"],
        meter_flux=flux["meter_backaction_zp"],
        classical_flux=flux["classical"],
    )


# ---------------------------------------------------------------------------
# Multimode geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MembraneMode:
    i: int
    j: int
    omega: float            # rad/s
    gamma: float            # intrinsic damping (rad/s)
    relative_G: float       # coupling constant relative to the reference mode


@dataclass(frozen=True)
class MembraneModeSet:
    side_length: float              # m
    modes: tuple[MembraneMode, ...]
    spot: tuple[float, float]       # optical spot center on the membrane (m)
    spot_waist: float               # 1/e^2 intensity radius (m)
    reference: tuple[int, int] = (2, 2)


def _overlap_1d(index: int, center: float, waist: float, length: float) -> float:
    def f(x):
        return math.exp(-2.0 * (x - center) ** 2 / waist**2) \
            * math.sin(index * math.pi * x / length)
    val, _ = integrate.quad(f, 0.0, length, limit=200, epsrel=1e-10)
    return val


def mode_coupling_ratio(modeset: MembraneModeSet, mode: tuple[int, int]) -> float:
    """Optomechanical coupling of mode (i, j) relative to the reference mode,
    from the overlap of the Gaussian intensity spot with the sinusoidal mode
    shapes.  The Gaussian normalization cancels in the ratio."""
    x0, y0 = modeset.spot
    length = modeset.side_length
    if not (0.0 <= x0 <= length and 0.0 <= y0 <= length):
        raise ValueError("spot outside membrane")
    w = modeset.spot_waist

    def overlap(ij: tuple[int, int]) -> float:
        return _overlap_1d(ij[0], x0, w, length) * _overlap_1d(ij[1], y0, w, length)

    return abs(overlap(mode)) / abs(overlap(modeset.reference))


def default_modeset(mechanics: MechanicalMode, max_index: int = 8,
                    side_length: float = 0.5e-3,
                    spot: tuple[float, float] | None = None,
                    spot_waist: float = 72e-6) -> MembraneModeSet:
    """Drumhead modes (i, j) up to ``max_index`` with the tensioned-membrane
    dispersion omega_ij = omega_ref sqrt((i^2+j^2)/8) relative to the (2,2)
    reference, spot at the (2,2) antinode by default.

    Intrinsic damping of non-reference modes is not independently known and
    defaults to the reference value.
    """
    if spot is None:
        spot = (side_length / 4.0, side_length / 4.0)
    proto = MembraneModeSet(side_length=side_length, modes=(), spot=spot,
                            spot_waist=spot_waist)
    ref_i, ref_j = proto.reference
    ref_norm = ref_i**2 + ref_j**2
    modes = []
    for i in range(1, max_index + 1):
        for j in range(1, max_index + 1):
            rel = mode_coupling_ratio(proto, (i, j))
            omega = mechanics.omega_m * math.sqrt((i**2 + j**2) / ref_norm)
            modes.append(MembraneMode(i=i, j=j, omega=omega,
                                      gamma=mechanics.gamma_0, relative_G=rel))
    return replace(proto, modes=tuple(modes))


@dataclass(frozen=True)
class BistabilityReport:
    n_critical: float                       # combined threshold photon number
    per_mode: dict[tuple[int, int], float]  # single-mode thresholds


def bistability_threshold(modeset: MembraneModeSet, cavity: Cavity,
                          mechanics: MechanicalMode,
                          coupling_g: float) -> BistabilityReport:
    """Critical signal photon number for static optomechanical bistability.

    Each mode contributes a single-mode threshold 0.77 kappa m omega^2 /
    (hbar G^2); the static frequency pulls of the modes add, so the combined
    threshold is the harmonic sum of the per-mode values.  A zero-coupling
    mode has an infinite single-mode threshold and drops out of the sum.
    """
    if not modeset.modes:
        raise ValueError("empty modeset")
    g_ref = coupling_g / zero_point_amplitude(mechanics)  # frequency pull per meter
    per_mode: dict[tuple[int, int], float] = {}
    inv_sum = 0.0
    for mode in modeset.modes:
        big_g = g_ref * mode.relative_G
        if big_g == 0.0:
            per_mode[(mode.i, mode.j)] = math.inf
            continue
        n_c = 0.77 * cavity.kappa * mechanics.mass * mode.omega**2 \
            / (hbar * big_g**2)
        per_mode[(mode.i, mode.j)] = n_c
        inv_sum += 1.0 / n_c
    if inv_sum == 0.0:
        raise ValueError("all modes uncoupled; threshold undefined")
    return BistabilityReport(n_critical=1.0 / inv_sum, per_mode=per_mode)


@dataclass(frozen=True)
class ModeStability:
    mode: tuple[int, int]
    omega: float
    relative_G: float
    gamma_net: float
    stable: bool


def stability_check(config: DeviceConfig, modeset: MembraneModeSet
                    ) -> list[ModeStability]:
    """Net damping per membrane mode from both beams; flags any mode whose
    net rate is nonpositive (dynamical instability)."""
    out = []
    for mode in modeset.modes:
        mech_ij = MechanicalMode(omega_m=mode.omega, gamma_0=mode.gamma,
                                 mass=config.mechanics.mass,
                                 mode_indices=(mode.i, mode.j))
        # single-photon coupling scales with relative G and this mode's z_zp
        scale = mode.relative_G * math.sqrt(
            config.mechanics.omega_m / mode.omega)
        gamma_net = mode.gamma
        for beam in (config.signal, config.meter):
            beam_ij = replace(beam, coupling_g=beam.coupling_g * scale)
            gamma_net += optical_damping(beam_ij, config.cavity, mech_ij)
        out.append(ModeStability(mode=(mode.i, mode.j), omega=mode.omega,
                                 relative_G=mode.relative_G,
                                 gamma_net=gamma_net, stable=gamma_net > 0))
    return out
