"""Thermalization time of the seven-site FMO complex versus bath reorganization energy.

The highest exciton starts fully populated; the reported time is when its
population first drops below that of the lowest exciton.

    python scripts/thermalization_sweep.py --lambdas 20 60 110 160 200
"""

import argparse

import numpy as np

from openexciton.config import parse_config, reference_listing
from openexciton.model import ExcitonSystem
from openexciton.studies import HeomSettings, thermalization_sweep


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lambdas", type=float, nargs="+", default=[20.0, 60.0, 110.0, 160.0, 200.0])
    p.add_argument("--invnu", type=float, default=50.0, help="bath correlation time (fs)")
    p.add_argument("--temperature", type=float, default=277.0)
    p.add_argument("--t-end", type=float, default=1500.0)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--matsubara", type=int, default=1)
    p.add_argument("--dt", type=float, default=1.0)
    args = p.parse_args(argv)

    H = np.array(parse_config(reference_listing()).system.hamiltonian, dtype=float)
    settings = HeomSettings(args.depth, args.matsubara, args.dt)
    times = thermalization_sweep(ExcitonSystem.from_hamiltonian(H), args.lambdas, args.invnu, args.temperature, args.t_end, settings)
    print("lambda_cm\tcrossing_fs")
    for lam, t in times.items():
        print(f"{lam:g}\t{t:.1f}")
    best = min(times, key=times.get)
    print(f"# fastest thermalization at lambda = {best:g} cm^-1")


if __name__ == "__main__":
    main()
