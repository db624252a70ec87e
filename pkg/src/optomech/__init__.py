"""Two-beam cavity optomechanics: analytic spectra, stochastic photocurrent
synthesis, and the matching estimation pipeline."""

__version__ = "0.1.0"

from . import analysis, constants, crosscorr, dynamics, montecarlo, params, \
    response  # noqa: E402,F401
