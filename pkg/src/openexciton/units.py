"""Unit conventions.

Energies and rates are stored in wavenumbers (cm^-1), times in femtoseconds.
Internally the propagators work with angular frequencies in rad/fs, where
hbar = 1, so an energy ``E`` in cm^-1 becomes ``E * CM_TO_RAD_FS``.
"""

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT_CM_PER_FS = 2.99792458e-5
BOLTZMANN_CM_PER_K = 0.6950348

CM_TO_RAD_FS = 2.0 * np.pi * SPEED_OF_LIGHT_CM_PER_FS


@dataclass(frozen=True)
class UnitSystem:
    """Conversion constants between spectroscopic and propagation units."""

    speed_of_light: float = SPEED_OF_LIGHT_CM_PER_FS
    boltzmann: float = BOLTZMANN_CM_PER_K

    @property
    def cm_to_rad_fs(self) -> float:
        return 2.0 * np.pi * self.speed_of_light

    def to_angular(self, energy_cm):
        """cm^-1 -> rad/fs."""
        return np.asarray(energy_cm) * self.cm_to_rad_fs

    def to_wavenumber(self, omega):
        """rad/fs -> cm^-1."""
        return np.asarray(omega) / self.cm_to_rad_fs

    def rate_from_time(self, tau_fs):
        """Inverse correlation time (fs) -> decay rate in cm^-1."""
        return 1.0 / (np.asarray(tau_fs) * self.cm_to_rad_fs)

    def time_from_rate(self, rate_cm):
        """Decay rate in cm^-1 -> correlation time in fs."""
        return 1.0 / (np.asarray(rate_cm) * self.cm_to_rad_fs)

    def kT(self, temperature):
        """Thermal energy in cm^-1."""
        return self.boltzmann * temperature

    def beta(self, temperature):
        """Inverse thermal energy in cm."""
        return 1.0 / (self.boltzmann * temperature)


UNITS = UnitSystem()


def cm_to_angular(energy_cm):
    return np.asarray(energy_cm) * CM_TO_RAD_FS


def angular_to_cm(omega):
    return np.asarray(omega) / CM_TO_RAD_FS


def invnu_to_cm(tau_fs):
    """Bath correlation time in fs -> decay rate nu in cm^-1."""
    return UNITS.rate_from_time(tau_fs)


def cm_to_invnu(rate_cm):
    return UNITS.time_from_rate(rate_cm)
