"""Linear absorption of the dimer with HEOM and Redfield, peak positions against the exciton energies.

    python scripts/dimer_absorption.py --lam 35
"""

import argparse

import numpy as np

from openexciton.model import DipoleModel, Environment, ExcitonSystem, SpectralDensity, diagonalize, site_hamiltonian
from openexciton.spectroscopy import fwhm, linear_absorption

DIMER = [[-75.0, 100.0], [100.0, 75.0]]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lam", type=float, default=35.0)
    p.add_argument("--invnu", type=float, default=50.0)
    p.add_argument("--temperature", type=float, default=277.0)
    p.add_argument("--t-max", type=float, default=2000.0)
    args = p.parse_args(argv)

    system = ExcitonSystem.from_hamiltonian(DIMER)
    env = Environment.uniform(2, SpectralDensity.drude_lorentz(args.lam, args.invnu), args.temperature)
    dipoles = DipoleModel([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    _, E = diagonalize(site_hamiltonian(system, env))
    print(f"dressed exciton energies: {np.round(E, 1)} cm^-1")
    for method in ("heom", "redfield", "redfield_secular"):
        spec = linear_absorption(system, env, dipoles, method, t_max=args.t_max, dt=1.0)
        s = spec.intensity
        peaks = spec.omega[1:-1][(s[1:-1] > s[:-2]) & (s[1:-1] > s[2:]) & (s[1:-1] > 0.05 * s.max())]
        print(f"{method}: peaks {np.round(peaks, 1)} cm^-1, FWHM of the strongest {fwhm(spec.omega, s):.1f} cm^-1")


if __name__ == "__main__":
    main()
