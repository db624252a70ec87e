"""Shared fixtures: device presets and a cached medium-size campaign."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from optomech import dynamics, montecarlo, params

# one medium campaign shared by the montecarlo and analysis tests
CAMPAIGN_SEED = 11
CAMPAIGN_FS = 8e6
CAMPAIGN_LEN = 0.01
CAMPAIGN_N = 120


@pytest.fixture(scope="session")
def device1() -> params.DeviceConfig:
    return params.load_preset("device1")


@pytest.fixture(scope="session")
def device2() -> params.DeviceConfig:
    return params.load_preset("device2")


@pytest.fixture(scope="session")
def campaign_device1(device1) -> list[montecarlo.PhotocurrentRecord]:
    return list(montecarlo.iter_campaign(
        device1, CAMPAIGN_N, CAMPAIGN_LEN, CAMPAIGN_FS,
        master_seed=CAMPAIGN_SEED, batch_size=60))


@pytest.fixture(scope="session")
def gamma_m_device1(device1) -> float:
    return dynamics.total_damping(device1)


def boxcar_droop(omega: np.ndarray, dt: float) -> np.ndarray:
    """Attenuation of narrowband content under step-averaged sampling.

    The integrator reports boxcar averages over each step, which multiplies
    transduced (narrowband) spectral content by sinc^2(omega dt / 2) while
    white floors are sampled at their nominal level; analytic predictions
    must be corrected by this factor before comparing with simulated
    spectra.
    """
    return np.sinc(np.asarray(omega) * dt / (2.0 * np.pi)) ** 2
