"""Physical parameter sets for a two-beam membrane-in-cavity optomechanical device.

All rates and frequencies are stored internally as angular frequencies (rad/s).
Config files quote ordinary frequencies in Hz (keys ending in ``_hz``) and the
loader multiplies by 2*pi, so the pervasive "X/2pi" bookkeeping never leaks
into the numerics.

Sign convention: a beam's ``detuning`` is cavity resonance minus laser
frequency (after the static optomechanical shift), so the red-detuned cooling
beam has positive detuning.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .constants import hbar, k_B, q_e, c_light

TWO_PI = 2.0 * math.pi

# relative tolerance for the cavity rate partition closure
KAPPA_CLOSURE_RTOL = 1e-9


@dataclass(frozen=True)
class MechanicalMode:
    """One drumhead mode of the membrane resonator."""

    omega_m: float          # resonance frequency (rad/s)
    gamma_0: float          # intrinsic amplitude damping rate (rad/s)
    mass: float             # effective mass (kg)
    mode_indices: tuple[int, int] = (2, 2)


@dataclass(frozen=True)
class Cavity:
    """Optical cavity linewidth and its partition into coupling channels."""

    kappa: float            # total linewidth (rad/s)
    kappa_L: float          # input mirror coupling (rad/s)
    kappa_R: float          # output mirror coupling (rad/s)
    kappa_int: float        # internal loss (rad/s)


@dataclass(frozen=True)
class Beam:
    """One intracavity drive beam."""

    detuning: float             # cavity minus laser frequency, shifted (rad/s)
    photon_number: float        # mean intracavity photon occupation
    coupling_g: float           # single-photon optomechanical rate (rad/s)
    classical_noise_B: float = 0.0  # classical intensity noise relative to shot
    wavelength: float = 1.064e-6    # optical wavelength (m)

    @property
    def omega_laser(self) -> float:
        """Optical carrier frequency (rad/s), used for photon-energy conversions."""
        return TWO_PI * c_light / self.wavelength


@dataclass(frozen=True)
class Environment:
    temperature: float      # bath temperature (K)


@dataclass(frozen=True)
class Detection:
    """Direct photodetection of one transmitted beam."""

    efficiency: float = 1.0         # post-cavity detection efficiency (0..1)
    dark_current_psd: float = 0.0   # one-sided dark current PSD (A^2/Hz)

    def responsivity(self, omega_laser: float) -> float:
        """Photodetection sensitivity q_e/(hbar*omega) in A/W."""
        return q_e / (hbar * omega_laser)


@dataclass(frozen=True)
class DeviceConfig:
    """Full parameter set for one device: mechanics, cavity, two beams, bath, detectors."""

    mechanics: MechanicalMode
    cavity: Cavity
    signal: Beam
    meter: Beam
    env: Environment
    detect_signal: Detection = field(default_factory=Detection)
    detect_meter: Detection = field(default_factory=Detection)


@dataclass(frozen=True)
class DerivedQuantities:
    z_zp: float             # zero-point amplitude (m)
    n_th: float             # thermal phonon occupation
    cooperativity_CS: float
    ratio_RS: float
    n_min: float            # Doppler limit occupation
    sz_sql: float           # SQL displacement PSD at resonance (m^2/Hz)
    output_power: float     # signal beam output power hbar*omega*kappa_R*N (W)


def zero_point_amplitude(mechanics: MechanicalMode) -> float:
    """sqrt(hbar / 2 m omega_m), the oscillator ground-state spread in meters."""
    return math.sqrt(hbar / (2.0 * mechanics.mass * mechanics.omega_m))


def thermal_occupation(mechanics: MechanicalMode, env: Environment) -> float:
    """Thermal phonon occupation k_B T / (hbar omega_m).

    The classical (Rayleigh-Jeans) form is used; at the operating point
    n_th ~ 6.6e4 so the Bose-Einstein correction is negligible.
    """
    return k_B * env.temperature / (hbar * mechanics.omega_m)


def cooperativity(beam: Beam, cavity: Cavity, mechanics: MechanicalMode) -> float:
    """Multiphoton cooperativity 4 N g^2 / (kappa Gamma_0)."""
    return 4.0 * beam.photon_number * beam.coupling_g**2 / (
        cavity.kappa * mechanics.gamma_0
    )


def backaction_thermal_ratio(
    beam: Beam, cavity: Cavity, mechanics: MechanicalMode, env: Environment
) -> float:
    """Ratio of radiation-pressure shot-noise drive to thermal drive.

    R = (C / n_th) / (1 + (2 omega_m / kappa)^2); backaction dominates the
    displacement spectrum once R exceeds unity.
    """
    c = cooperativity(beam, cavity, mechanics)
    n = thermal_occupation(mechanics, env)
    lorentz = 1.0 + (2.0 * mechanics.omega_m / cavity.kappa) ** 2
    return (c / n) / lorentz


def photon_number_to_power(config: DeviceConfig, photon_number: float) -> float:
    """Optical power leaving the cavity output mirror for a given intracavity
    occupation: P = hbar * omega_laser * kappa_R * N (pre-detection-loss)."""
    if photon_number < 0:
        raise ValueError("photon_number must be nonnegative")
    return hbar * config.signal.omega_laser * config.cavity.kappa_R * photon_number


def power_to_photon_number(config: DeviceConfig, power: float) -> float:
    """Inverse of :func:`photon_number_to_power`."""
    return power / (hbar * config.signal.omega_laser * config.cavity.kappa_R)


def derive(config: DeviceConfig, gamma_m_total: float) -> DerivedQuantities:
    """Closed-form derived quantities for a device.

    ``gamma_m_total`` is the total mechanical damping rate (intrinsic plus
    optical), needed only for the SQL displacement scale.
    """
    if gamma_m_total <= 0:
        raise ValueError("gamma_m_total must be positive")
    mech = config.mechanics
    out = DerivedQuantities(
        z_zp=zero_point_amplitude(mech),
        n_th=thermal_occupation(mech, config.env),
        cooperativity_CS=cooperativity(config.signal, config.cavity, mech),
        ratio_RS=backaction_thermal_ratio(
            config.signal, config.cavity, mech, config.env
        ),
        n_min=(config.cavity.kappa / (4.0 * mech.omega_m)) ** 2,
        sz_sql=hbar / (mech.mass * mech.omega_m * gamma_m_total),
        output_power=photon_number_to_power(config, config.signal.photon_number),
    )
    for name in ("z_zp", "n_th", "cooperativity_CS", "ratio_RS", "n_min",
                 "sz_sql", "output_power"):
        if not math.isfinite(getattr(out, name)):
            raise ValueError(f"derived quantity {name} is non-finite; "
                             "check config for zero mass or rates")
    return out


def validate(config: DeviceConfig) -> list[str]:
    """Check every type invariant; returns a list of violation messages.

    Validation never raises: an empty list means the config is consistent.
    """
    v: list[str] = []
    m = config.mechanics
    if not m.omega_m > 0:
        v.append("mechanics.omega_m > 0")
    if not m.gamma_0 > 0:
        v.append("mechanics.gamma_0 > 0")
    if not m.mass > 0:
        v.append("mechanics.mass > 0")
    if m.omega_m > 0 and not m.gamma_0 < m.omega_m:
        v.append("mechanics.gamma_0 < mechanics.omega_m")

    cav = config.cavity
    for name in ("kappa", "kappa_L", "kappa_R", "kappa_int"):
        if getattr(cav, name) < 0:
            v.append(f"cavity.{name} >= 0")
    part = cav.kappa_L + cav.kappa_R + cav.kappa_int
    if cav.kappa > 0 and abs(part - cav.kappa) > KAPPA_CLOSURE_RTOL * cav.kappa:
        v.append("cavity partition kappa_L + kappa_R + kappa_int == kappa")

    for label, beam in (("signal", config.signal), ("meter", config.meter)):
        if beam.photon_number < 0:
            v.append(f"{label}.photon_number >= 0")
        if beam.classical_noise_B < 0:
            v.append(f"{label}.classical_noise_B >= 0")
        if not beam.wavelength > 0:
            v.append(f"{label}.wavelength > 0")

    if not config.env.temperature > 0:
        v.append("env.temperature > 0")

    for label, det in (("detect_signal", config.detect_signal),
                       ("detect_meter", config.detect_meter)):
        if not 0.0 <= det.efficiency <= 1.0:
            v.append(f"{label}.efficiency in [0, 1]")
        if det.dark_current_psd < 0:
            v.append(f"{label}.dark_current_psd >= 0")
    return v


# ---------------------------------------------------------------------------
# Flat key-value config files
# ---------------------------------------------------------------------------

def _parse_flat(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def config_from_dict(kv: dict[str, str]) -> DeviceConfig:
    """Build a DeviceConfig from a flat dotted-key dictionary.

    Keys ending in ``_hz`` are ordinary frequencies and are converted to
    angular frequencies here.
    """
    def f(key: str, default: float | None = None) -> float:
        if key in kv:
            return float(kv[key])
        if default is None:
            raise KeyError(f"missing config key: {key}")
        return default

    def hz(key: str, default: float | None = None) -> float:
        return TWO_PI * f(key, default)

    kappa = hz("cavity.kappa_hz")
    mech = MechanicalMode(
        omega_m=hz("mechanics.omega_m_hz"),
        gamma_0=hz("mechanics.gamma_0_hz"),
        mass=f("mechanics.mass_kg"),
        mode_indices=(int(f("mechanics.mode_i", 2)), int(f("mechanics.mode_j", 2))),
    )
    cavity = Cavity(
        kappa=kappa,
        kappa_L=hz("cavity.kappa_l_hz"),
        kappa_R=hz("cavity.kappa_r_hz"),
        kappa_int=hz("cavity.kappa_int_hz"),
    )

    def beam(prefix: str) -> Beam:
        return Beam(
            detuning=hz(f"{prefix}.detuning_hz"),
            photon_number=f(f"{prefix}.photon_number"),
            coupling_g=hz(f"{prefix}.coupling_g_hz"),
            classical_noise_B=f(f"{prefix}.classical_noise_b", 0.0),
            wavelength=f(f"{prefix}.wavelength_m", 1.064e-6),
        )

    def det(prefix: str) -> Detection:
        return Detection(
            efficiency=f(f"{prefix}.efficiency", 1.0),
            dark_current_psd=f(f"{prefix}.dark_current_psd", 0.0),
        )

    return DeviceConfig(
        mechanics=mech,
        cavity=cavity,
        signal=beam("signal"),
        meter=beam("meter"),
        env=Environment(temperature=f("env.temperature_k")),
        detect_signal=det("detect_signal"),
        detect_meter=det("detect_meter"),
    )


def config_to_dict(config: DeviceConfig) -> dict[str, str]:
    """Serialize a DeviceConfig back to the flat dotted-key form (Hz units)."""
    m, cav = config.mechanics, config.cavity
    kv = {
        "mechanics.omega_m_hz": repr(m.omega_m / TWO_PI),
        "mechanics.gamma_0_hz": repr(m.gamma_0 / TWO_PI),
        "mechanics.mass_kg": repr(m.mass),
        "mechanics.mode_i": str(m.mode_indices[0]),
        "mechanics.mode_j": str(m.mode_indices[1]),
        "cavity.kappa_hz": repr(cav.kappa / TWO_PI),
        "cavity.kappa_l_hz": repr(cav.kappa_L / TWO_PI),
        "cavity.kappa_r_hz": repr(cav.kappa_R / TWO_PI),
        "cavity.kappa_int_hz": repr(cav.kappa_int / TWO_PI),
        "env.temperature_k": repr(config.env.temperature),
    }
    for prefix, beam in (("signal", config.signal), ("meter", config.meter)):
        kv[f"{prefix}.detuning_hz"] = repr(beam.detuning / TWO_PI)
        kv[f"{prefix}.photon_number"] = repr(beam.photon_number)
        kv[f"{prefix}.coupling_g_hz"] = repr(beam.coupling_g / TWO_PI)
        kv[f"{prefix}.classical_noise_b"] = repr(beam.classical_noise_B)
        kv[f"{prefix}.wavelength_m"] = repr(beam.wavelength)
    for prefix, det in (("detect_signal", config.detect_signal),
                        ("detect_meter", config.detect_meter)):
        kv[f"{prefix}.efficiency"] = repr(det.efficiency)
        kv[f"{prefix}.dark_current_psd"] = repr(det.dark_current_psd)
    return kv


def load_config(path: str | Path) -> DeviceConfig:
    return config_from_dict(_parse_flat(Path(path).read_text()))


def save_config(config: DeviceConfig, path: str | Path) -> None:
    lines = [f"{k} = {v}" for k, v in sorted(config_to_dict(config).items())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_preset(name: str) -> DeviceConfig:
    """Load a bundled preset (``device1``, ``device2``) or one found in the
    directory named by the OPTOMECH_PRESET_DIR environment variable."""
    preset_dir = os.environ.get("OPTOMECH_PRESET_DIR")
    if preset_dir:
        cand = Path(preset_dir) / f"{name}.cfg"
        if cand.exists():
            return load_config(cand)
    ref = resources.files("optomech").joinpath(f"presets/{name}.cfg")
    try:
        text = ref.read_text()
    except FileNotFoundError:
        raise KeyError(f"unknown preset {name!r}") from None
    return config_from_dict(_parse_flat(text))


def with_signal_photons(config: DeviceConfig, n_s: float) -> DeviceConfig:
    """Copy of ``config`` with the signal beam photon number replaced."""
    return replace(config, signal=replace(config.signal, photon_number=n_s))
