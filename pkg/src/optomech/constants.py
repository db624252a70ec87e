"""CODATA 2018 physical constants used throughout the package (SI units)."""

hbar = 1.054571817e-34   # reduced Planck constant (J s)
k_B = 1.380649e-23       # Boltzmann constant (J/K)
q_e = 1.602176634e-19    # elementary charge (C)
c_light = 299792458.0    # speed of light in vacuum (m/s)
