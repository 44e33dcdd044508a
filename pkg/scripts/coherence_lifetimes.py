"""Exciton coherence and relaxation times of the dimer for a plain and a shifted Drude-Lorentz bath.

    python scripts/coherence_lifetimes.py --shift 420
"""

import argparse

from openexciton.model import Environment, ExcitonSystem, SpectralDensity
from openexciton.studies import HeomSettings, lifetimes

DIMER = [[-75.0, 100.0], [100.0, 75.0]]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lam", type=float, default=35.0)
    p.add_argument("--invnu", type=float, default=50.0)
    p.add_argument("--shift", type=float, default=420.0, help="peak position of the shifted bath (cm^-1)")
    p.add_argument("--temperature", type=float, default=277.0)
    p.add_argument("--t-end", type=float, default=4000.0)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--dt", type=float, default=0.5)
    args = p.parse_args(argv)

    system = ExcitonSystem.from_hamiltonian(DIMER)
    settings = HeomSettings(args.depth, 1, args.dt)
    print("bath\tcoherence_fs\trelaxation_fs\tfinal_upper")
    for label, shift in (("DL", 0.0), (f"SDL({args.shift:g})", args.shift)):
        env = Environment.uniform(2, SpectralDensity.drude_lorentz(args.lam, args.invnu, shift), args.temperature)
        out = lifetimes(system, env, initial_site=1, t_end=args.t_end, settings=settings)
        print(f"{label}\t{out.coherence:.1f}\t{out.relaxation:.1f}\t{out.final_upper:.4f}")


if __name__ == "__main__":
    main()
