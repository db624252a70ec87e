"""Time-domain stochastic integrator for the linearized two-beam system.

Produces synthetic two-channel photocurrent records with the same statistics
as the analytic spectra, so the estimation pipeline can be exercised end to
end on raw time series.

Model
-----
Rotating-frame linear Langevin equations for the two intracavity fluctuation
fields d_1, d_2 and the mechanical mode c (all complex):

    d_k' = -(i Delta_k + kappa/2) d_k - i g_k abar_k (c + conj(c)) + zeta_k
    c'   = (-i omega_m - Gamma_0/2) c
           - i sum_k g_k abar_k (d_k + conj(d_k)) + sqrt(Gamma_0) eta

with abar_k = sqrt(N_k) taken real and zeta_k the sum of the three port
inputs sqrt(kappa_j) xi_jk.  Quantum inputs are replaced by classical white
Gaussian surrogates with symmetrized spectral weights (vacuum ports one half
quantum, thermal bath n_th + 1/2); this reproduces every symmetrized
observable but cannot produce sideband asymmetry.  The beat between the two
beams is not modeled (it falls far from the mechanical band).

Integration is an exact one-step update of the linear SDE: the discrete
transition matrix and process-noise covariance are obtained from a single
matrix exponential per campaign, so no step-size bias exists at any stable
step size.  An Euler-Maruyama mode is retained for cross-validation.

Reproducibility
---------------
All randomness comes from counter-based Philox streams keyed by
SeedSequence(entropy=master_seed, spawn_key=(record_index, stream_id)) with
stream_id 0 for the state integration and 1 for detection noise.  Draw order
within a stream is fixed (initial state, then step noise in time order;
detection draws loss_signal, loss_meter, dark_signal, dark_meter), so records
are bitwise reproducible and independent of batching.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import linalg

from .constants import q_e
from .params import Detection, DeviceConfig, config_to_dict, save_config, \
    thermal_occupation, validate

MAGIC = b"OMRC"
FORMAT_VERSION = 1

VALID_KINDS = (
    "input_L1", "input_R1", "internal_1",
    "input_L2", "input_R2", "internal_2",
    "thermal", "classical_intensity_1", "piezo_drive",
)

# real state layout: cavity quadratures, mechanical quadratures, then the
# per-step accumulators of the transmitted-port input noise (u) and of the
# intracavity fields (v); the accumulators provide step-averaged quantities
# so the detected output is a consistently boxcar-filtered sampling
STATE_LABELS = ("re_d1", "im_d1", "re_d2", "im_d2", "re_c", "im_c",
                "re_u1", "im_u1", "re_u2", "im_u2",
                "re_v1", "im_v1", "re_v2", "im_v2")
N_STATE = len(STATE_LABELS)
_IX = {name: i for i, name in enumerate(STATE_LABELS)}
_DYN = slice(0, 6)
_ACC = slice(6, 14)

_CHUNK_STEPS = 4096     # performance knob only; results do not depend on it


@dataclass(frozen=True)
class NoiseChannel:
    """One white-noise drive; ``psd_level`` is a two-sided PSD in the
    channel's native units (quanta for optical and thermal channels,
    relative intensity for classical noise, quanta flux for piezo)."""

    kind: str
    psd_level: float

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown noise channel kind {self.kind!r}")
        if self.psd_level < 0:
            raise ValueError("psd_level must be nonnegative")


def default_channels(config: DeviceConfig) -> tuple[NoiseChannel, ...]:
    """Standard channel set: half-quantum vacuum at every port, thermal bath
    at n_th + 1/2, classical intensity noise at the configured level."""
    n_th = thermal_occupation(config.mechanics, config.env)
    return (
        NoiseChannel("input_L1", 0.5),
        NoiseChannel("input_R1", 0.5),
        NoiseChannel("internal_1", 0.5),
        NoiseChannel("input_L2", 0.5),
        NoiseChannel("input_R2", 0.5),
        NoiseChannel("internal_2", 0.5),
        NoiseChannel("thermal", n_th + 0.5),
        NoiseChannel("classical_intensity_1", config.signal.classical_noise_B),
    )


def merge_channels(config: DeviceConfig,
                   extra: Sequence[NoiseChannel] = ()) -> tuple[NoiseChannel, ...]:
    """Default channels with overrides/additions from ``extra`` (same kind
    replaces the default)."""
    chans = {ch.kind: ch for ch in default_channels(config)}
    for ch in extra:
        chans[ch.kind] = ch
    return tuple(chans.values())


def min_sample_rate(config: DeviceConfig) -> float:
    """Smallest acceptable sampling rate (Hz): 2.5 times the highest
    characteristic frequency max(kappa, omega_m + |Delta|) / 2 pi.

    The exact one-step integrator has no discretization bias, so the rate
    only needs to keep the transduced mechanical band clear of aliasing and
    resolve the cavity-filtered noise shape.
    """
    w_max = max(config.cavity.kappa,
                config.mechanics.omega_m + abs(config.signal.detuning),
                config.mechanics.omega_m + abs(config.meter.detuning))
    return 2.5 * w_max / (2.0 * np.pi)


def _drift_matrix(config: DeviceConfig) -> np.ndarray:
    a = np.zeros((N_STATE, N_STATE))
    cav, mech = config.cavity, config.mechanics

    def rotate(i_re, i_im, rate, freq):
        # zdot = (i*freq - rate) z in real coordinates
        a[i_re, i_re] += -rate
        a[i_im, i_im] += -rate
        a[i_re, i_im] += -freq
        a[i_im, i_re] += freq

    # rotating frame: d' = -(i Delta + kappa/2) d + ..., Delta = cavity - laser
    rotate(_IX["re_d1"], _IX["im_d1"], cav.kappa / 2.0, -config.signal.detuning)
    rotate(_IX["re_d2"], _IX["im_d2"], cav.kappa / 2.0, -config.meter.detuning)
    rotate(_IX["re_c"], _IX["im_c"], mech.gamma_0 / 2.0, -mech.omega_m)
    for beam, re_d in ((config.signal, "re_d1"), (config.meter, "re_d2")):
        amp = beam.coupling_g * np.sqrt(beam.photon_number)
        # -i g abar (c + conj c) drives the imaginary cavity quadrature
        a[_IX["im_d" + re_d[-1]], _IX["re_c"]] += -2.0 * amp
        # -i g abar (d + conj d) drives the imaginary mechanical quadrature
        a[_IX["im_c"], _IX[re_d]] += -2.0 * amp
    # intracavity-field accumulators
    for b in "12":
        a[_IX["re_v" + b], _IX["re_d" + b]] = 1.0
        a[_IX["im_v" + b], _IX["im_d" + b]] = 1.0
    return a


def _diffusion_columns(config: DeviceConfig,
                       channels: Sequence[NoiseChannel]) -> np.ndarray:
    """Matrix B such that dX = A X dt + B dW with dW standard Wiener
    increments; complex channels contribute two columns."""
    cav = config.cavity
    cols: list[np.ndarray] = []

    def col(entries: dict[str, float]) -> None:
        v = np.zeros(N_STATE)
        for label, val in entries.items():
            v[_IX[label]] = val
        cols.append(v)

    port_rates = {"L": cav.kappa_L, "R": cav.kappa_R, "int": cav.kappa_int}
    for ch in channels:
        amp = np.sqrt(ch.psd_level)
        if ch.kind.startswith("input_") or ch.kind.startswith("internal"):
            beam_id = ch.kind[-1]
            port = "int" if ch.kind.startswith("internal") else ch.kind[6]
            k = np.sqrt(port_rates[port])
            # complex vacuum input: each quadrature at half the PSD
            q = amp / np.sqrt(2.0)
            extra_re = {}
            extra_im = {}
            if port == "R":
                # transmitted-port noise also feeds its accumulator so the
                # detected output stays correlated with the cavity field
                extra_re = {"re_u" + beam_id: q}
                extra_im = {"im_u" + beam_id: q}
            col({"re_d" + beam_id: k * q, **extra_re})
            col({"im_d" + beam_id: k * q, **extra_im})
        elif ch.kind == "thermal":
            q = np.sqrt(config.mechanics.gamma_0) * amp / np.sqrt(2.0)
            col({"re_c": q})
            col({"im_c": q})
        elif ch.kind == "classical_intensity_1":
            # real amplitude noise entering through the input mirror
            col({"re_d1": np.sqrt(cav.kappa_L) * amp})
        elif ch.kind == "piezo_drive":
            q = amp / np.sqrt(2.0)
            col({"re_c": q})
            col({"im_c": q})
    return np.column_stack(cols) if cols else np.zeros((N_STATE, 0))


def _psd_sqrt(q: np.ndarray) -> np.ndarray:
    """Square root of a symmetric positive-semidefinite matrix."""
    vals, vecs = np.linalg.eigh((q + q.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


class DiscreteModel:
    """One-step discretization of the linear SDE for a fixed dt.

    ``transition`` has the accumulator columns zeroed, so those components
    hold the per-step integral of the transmitted-port input noise instead
    of a running sum.
    """

    def __init__(self, config: DeviceConfig, dt: float,
                 channels: Sequence[NoiseChannel], method: str = "exact"):
        if method not in ("exact", "euler"):
            raise ValueError("method must be 'exact' or 'euler'")
        if dt <= 0:
            raise ValueError("dt must be positive")
        if 1.0 / dt < min_sample_rate(config):
            raise ValueError(
                f"sample rate {1.0 / dt:.3g} Hz below the minimum "
                f"{min_sample_rate(config):.3g} Hz for this config")
        self.config = config
        self.dt = dt
        self.method = method
        a = _drift_matrix(config)
        b = _diffusion_columns(config, channels)
        bbt = b @ b.T
        if method == "exact":
            # block matrix exponential yields both the transition matrix and
            # the exact discrete process-noise covariance
            m = np.zeros((2 * N_STATE, 2 * N_STATE))
            m[:N_STATE, :N_STATE] = -a * dt
            m[:N_STATE, N_STATE:] = bbt * dt
            m[N_STATE:, N_STATE:] = a.T * dt
            em = linalg.expm(m)
            f22 = em[N_STATE:, N_STATE:]
            transition = f22.T
            cov = f22.T @ em[:N_STATE, N_STATE:]
        else:
            transition = np.eye(N_STATE) + a * dt
            cov = bbt * dt
        transition[:, _ACC] = 0.0
        self.transition = transition
        self.noise_sqrt = _psd_sqrt(cov)
        dyn_eigs = np.linalg.eigvals(a[_DYN, _DYN])
        self.unstable = bool(np.max(dyn_eigs.real) > 0.0)
        self.initial_cov = np.zeros((N_STATE, N_STATE))
        if not self.unstable:
            p = linalg.solve_discrete_lyapunov(self.transition[_DYN, _DYN],
                                               cov[_DYN, _DYN])
            self.initial_cov[_DYN, _DYN] = (p + p.T) / 2.0
        self.initial_sqrt = _psd_sqrt(self.initial_cov)


def record_rng(master_seed: int, record_index: int, stream_id: int) -> np.random.Generator:
    """The documented seed-splitting rule."""
    ss = np.random.SeedSequence(entropy=master_seed,
                                spawn_key=(record_index, stream_id))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TrajectoryRecord:
    """Intracavity state samples plus the transmitted-port noise realization
    needed to build the detected output field."""

    dt: float
    d1: np.ndarray          # complex cavity fluctuation, signal beam (step-averaged)
    d2: np.ndarray          # complex cavity fluctuation, meter beam (step-averaged)
    c: np.ndarray           # complex mechanical amplitude (point samples)
    xi_r1: np.ndarray       # band-limited transmitted-port input noise
    xi_r2: np.ndarray
    seed: int
    record_index: int
    config: DeviceConfig
    unstable: bool
    method: str


@dataclass(frozen=True)
class PhotocurrentRecord:
    dt: float
    i_signal: np.ndarray    # A
    i_meter: np.ndarray     # A
    mean_signal: float      # A
    mean_meter: float       # A
    seed: int
    record_index: int = 0
    unstable: bool = False


def _batch_states(model: DiscreteModel, rngs: Sequence[np.random.Generator],
                  n_samples: int) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (start_index, states[batch, steps, N_STATE]) chunks.

    Each record consumes its own stream in a fixed order, so the output is
    bitwise independent of batch composition and chunk size.
    """
    n_rec = len(rngs)
    x = np.empty((n_rec, N_STATE))
    for r, rng in enumerate(rngs):
        x[r] = model.initial_sqrt @ rng.standard_normal(N_STATE)
    f_t = model.transition.T
    l_t = model.noise_sqrt.T
    done = 0
    while done < n_samples:
        k = min(_CHUNK_STEPS, n_samples - done)
        z = np.stack([rng.standard_normal((k, N_STATE)) for rng in rngs])
        w = z @ l_t
        out = np.empty((n_rec, k, N_STATE))
        for j in range(k):
            x = x @ f_t + w[:, j, :]
            out[:, j, :] = x
        yield done, out
        done += k


def simulate(config: DeviceConfig, duration: float, dt: float, seed: int,
             extra_channels: Sequence[NoiseChannel] = (),
             method: str = "exact", record_index: int = 0) -> TrajectoryRecord:
    """Integrate one record of the linear Langevin system.

    ``duration`` should cover many damping times for stationary statistics;
    the initial state is drawn from the stationary distribution (so no
    burn-in is needed) unless the config is dynamically unstable, in which
    case integration starts at zero and the record is tagged.
    """
    violations = validate(config)
    if violations:
        raise ValueError("invalid config: " + "; ".join(violations))
    n_samples = int(round(duration / dt))
    if n_samples < 1:
        raise ValueError("duration shorter than one step")
    model = DiscreteModel(config, dt, merge_channels(config, extra_channels),
                          method)
    rng = record_rng(seed, record_index, 0)
    states = np.empty((n_samples, N_STATE))
    for start, chunk in _batch_states(model, [rng], n_samples):
        states[start:start + chunk.shape[1]] = chunk[0]

    def cplx(re_label: str) -> np.ndarray:
        i = _IX[re_label]
        return states[:, i] + 1j * states[:, i + 1]

    return TrajectoryRecord(
        dt=dt, d1=cplx("re_v1") / dt, d2=cplx("re_v2") / dt, c=cplx("re_c"),
        xi_r1=cplx("re_u1") / dt, xi_r2=cplx("re_u2") / dt,
        seed=seed, record_index=record_index, config=config,
        unstable=model.unstable, method=method)


def _detect_channel(re_d: np.ndarray, re_xi: np.ndarray, photon_number: float,
                    kappa_r: float, det: Detection, dt: float,
                    rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Photocurrent (A) for one beam from the real output quadrature."""
    n = re_d.shape[0]
    eps = det.efficiency
    dark = np.zeros(n)
    if det.dark_current_psd > 0:
        dark = rng.standard_normal(n) * np.sqrt(det.dark_current_psd / (2.0 * dt))
    else:
        rng.standard_normal(n)     # keep draw order fixed across configs
    if eps <= 0.0 or photon_number <= 0.0:
        return dark, 0.0
    abar = np.sqrt(photon_number)
    mean = q_e * eps * kappa_r * photon_number
    # output field sqrt(kappa_R) d - xi_R, relative intensity fluctuation
    rel = 2.0 * re_d / abar - 2.0 * re_xi / (np.sqrt(kappa_r) * abar)
    if eps < 1.0:
        # detection loss admixes fresh vacuum at sqrt(eps(1-eps)) weight
        loss = rng.standard_normal(n) * np.sqrt(1.0 / dt) \
            / (np.sqrt(kappa_r) * abar)
        rel = rel + np.sqrt((1.0 - eps) / eps) * loss
    else:
        rng.standard_normal(n)
    return mean * (1.0 + rel) + dark, mean


def detect(trajectory: TrajectoryRecord, detection_s: Detection,
           detection_m: Detection, seed: int) -> PhotocurrentRecord:
    """Turn a trajectory into a two-channel photocurrent record.

    The transmitted-port noise realization stored in the trajectory is
    reused, keeping the output field correlated with the intracavity field;
    only detection loss and dark current draw fresh noise.
    """
    cfg = trajectory.config
    rng = record_rng(seed, trajectory.record_index, 1)
    kr = cfg.cavity.kappa_R
    # draw order: loss/dark for signal channel, then meter channel
    i_s, mean_s = _detect_channel(
        trajectory.d1.real, trajectory.xi_r1.real, cfg.signal.photon_number,
        kr, detection_s, trajectory.dt, rng)
    i_m, mean_m = _detect_channel(
        trajectory.d2.real, trajectory.xi_r2.real, cfg.meter.photon_number,
        kr, detection_m, trajectory.dt, rng)
    return PhotocurrentRecord(
        dt=trajectory.dt, i_signal=i_s, i_meter=i_m,
        mean_signal=mean_s, mean_meter=mean_m, seed=seed,
        record_index=trajectory.record_index, unstable=trajectory.unstable)


def iter_campaign(config: DeviceConfig, n_records: int, duration: float,
                  fs: float, master_seed: int,
                  extra_channels: Sequence[NoiseChannel] = (),
                  method: str = "exact", batch_size: int = 50,
                  start_record: int = 0) -> Iterator[PhotocurrentRecord]:
    """Stream photocurrent records one at a time (records are integrated in
    batches internally for speed; the output is bitwise independent of
    ``batch_size``).  ``start_record`` allows resuming a campaign."""
    if n_records < 1:
        raise ValueError("need at least one record")
    violations = validate(config)
    if violations:
        raise ValueError("invalid config: " + "; ".join(violations))
    dt = 1.0 / fs
    n_samples = int(round(duration * fs))
    model = DiscreteModel(config, dt, merge_channels(config, extra_channels),
                          method)
    kr = config.cavity.kappa_R
    indices = range(start_record, start_record + n_records)
    for lo in range(0, n_records, batch_size):
        batch = list(indices[lo:lo + batch_size])
        rngs = [record_rng(master_seed, r, 0) for r in batch]
        sig = np.empty((len(batch), n_samples, 2))
        met = np.empty((len(batch), n_samples, 2))
        for start, chunk in _batch_states(model, rngs, n_samples):
            sl = slice(start, start + chunk.shape[1])
            sig[:, sl, 0] = chunk[:, :, _IX["re_v1"]] / dt
            sig[:, sl, 1] = chunk[:, :, _IX["re_u1"]] / dt
            met[:, sl, 0] = chunk[:, :, _IX["re_v2"]] / dt
            met[:, sl, 1] = chunk[:, :, _IX["re_u2"]] / dt
        for b, r in enumerate(batch):
            det_rng = record_rng(master_seed, r, 1)
            i_s, mean_s = _detect_channel(
                sig[b, :, 0], sig[b, :, 1], config.signal.photon_number,
                kr, config.detect_signal, dt, det_rng)
            i_m, mean_m = _detect_channel(
                met[b, :, 0], met[b, :, 1], config.meter.photon_number,
                kr, config.detect_meter, dt, det_rng)
            yield PhotocurrentRecord(
                dt=dt, i_signal=i_s, i_meter=i_m,
                mean_signal=mean_s, mean_meter=mean_m,
                seed=master_seed, record_index=r, unstable=model.unstable)


# ---------------------------------------------------------------------------
# Record and manifest I/O
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIdQq16sddB")


def config_digest(config: DeviceConfig) -> str:
    text = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def write_record(path: str | Path, record: PhotocurrentRecord,
                 config: DeviceConfig) -> None:
    """Little-endian binary record: header (magic, version, dt, n_samples,
    seed, config hash, mean currents, unstable flag) followed by the two
    float64 channel blocks."""
    digest = bytes.fromhex(config_digest(config))[:16]
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, record.dt,
                          record.i_signal.size, record.seed, digest,
                          record.mean_signal, record.mean_meter,
                          int(record.unstable))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(record.i_signal, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(record.i_meter, dtype="<f8").tobytes())


def read_record(path: str | Path) -> PhotocurrentRecord:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        magic, version, dt, n, seed, _digest, mean_s, mean_m, unstable = \
            _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a photocurrent record")
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        data = np.frombuffer(fh.read(2 * 8 * n), dtype="<f8")
    return PhotocurrentRecord(
        dt=dt, i_signal=data[:n].copy(), i_meter=data[n:].copy(),
        mean_signal=mean_s, mean_meter=mean_m, seed=seed,
        unstable=bool(unstable))


def record_to_csv(path: str | Path, record: PhotocurrentRecord) -> None:
    t = np.arange(record.i_signal.size) * record.dt
    data = np.column_stack([t, record.i_signal, record.i_meter])
    np.savetxt(path, data, delimiter=",",
               header="time_s,i_signal_a,i_meter_a", comments="")


def read_csv_timeseries(path: str | Path) -> PhotocurrentRecord:
    """Plain two- or three-column CSV (time, channel 1[, channel 2])."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2:
        raise ValueError("need at least time and one channel column")
    t = data[:, 0]
    dt = float(np.mean(np.diff(t)))
    i_s = data[:, 1]
    i_m = data[:, 2] if data.shape[1] > 2 else np.zeros_like(i_s)
    return PhotocurrentRecord(dt=dt, i_signal=i_s, i_meter=i_m,
                              mean_signal=float(i_s.mean()),
                              mean_meter=float(i_m.mean()), seed=-1)


def run_campaign(config: DeviceConfig, n_records: int, duration: float,
                 fs: float, master_seed: int, out_dir: str | Path,
                 extra_channels: Sequence[NoiseChannel] = (),
                 method: str = "exact", batch_size: int = 50) -> dict:
    """Write a full record set plus a manifest; resumes if a compatible
    manifest already exists with fewer records."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    save_config(config, out / "config.cfg")
    digest = config_digest(config)
    done = 0
    if manifest_path.exists():
        old = json.loads(manifest_path.read_text())
        if (old["config_digest"] == digest and old["master_seed"] == master_seed
                and old["fs"] == fs and old["duration"] == duration):
            done = len(old["records"])
    entries = []
    if done:
        entries = json.loads(manifest_path.read_text())["records"]
    for rec in iter_campaign(config, n_records - done, duration, fs,
                             master_seed, extra_channels, method, batch_size,
                             start_record=done):
        name = f"record_{rec.record_index:05d}.bin"
        write_record(out / name, rec, config)
        entries.append({"file": name, "record_index": rec.record_index,
                        "unstable": rec.unstable})
    manifest = {
        "format_version": FORMAT_VERSION,
        "config_digest": digest,
        "master_seed": master_seed,
        "fs": fs,
        "duration": duration,
        "n_records": n_records,
        "method": method,
        "records": entries,
    }
    manifest_path.write_text(json.dumps(manifest, indent=1))
    return manifest


def load_campaign(out_dir: str | Path) -> Iterator[PhotocurrentRecord]:
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    for entry in manifest["records"]:
        yield read_record(out / entry["file"])
