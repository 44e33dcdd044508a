"""Parameter studies built on the propagators: thermalization and coherence lifetimes."""

from dataclasses import dataclass

import numpy as np

from .model import Environment, ExcitonSystem, SpectralDensity, diagonalize, site_hamiltonian
from .propagators import HEOMSolver, decay_time, redfield_propagate, redfield_tensor, thermalization_metric


@dataclass(frozen=True)
class HeomSettings:
    """Hierarchy depth, Matsubara count and RK4 step (fs)."""

    depth: int = 3
    matsubara: int = 1
    dt: float = 1.0


def exciton_state(system, environment, k):
    """|E_k><E_k| in the site basis, E_k of the dressed Hamiltonian (ascending)."""
    A, _ = diagonalize(site_hamiltonian(system, environment))
    return np.outer(A[k], A[k]).astype(complex), A


def exciton_trajectory(system, environment, rho0, t_end, settings=HeomSettings(), method="heom", stride=1):
    """Trajectory in the exciton basis of the dressed Hamiltonian.

    ``method`` is ``heom``, ``redfield`` or ``redfield_secular``.
    """
    A, _ = diagonalize(site_hamiltonian(system, environment))
    if method == "heom":
        solver = HEOMSolver.from_system(system, environment, settings.depth, settings.matsubara)
        return solver.propagate(rho0, t_end, settings.dt, stride=stride).in_basis(A)
    R = redfield_tensor(system, environment, secular=(method == "redfield_secular"))
    return redfield_propagate(A @ rho0 @ A.T, R, t_end, settings.dt, stride)


def crossing_time(system, environment, t_end, settings=HeomSettings()) -> float:
    """Time (fs) at which the top exciton, initially fully populated, drops below the bottom one."""
    rho0, _ = exciton_state(system, environment, system.n_sites - 1)
    traj = exciton_trajectory(system, environment, rho0, t_end, settings)
    return thermalization_metric(traj.times, traj.populations)


def thermalization_sweep(system: ExcitonSystem, reorganizations, invnu, temperature, t_end, settings=HeomSettings()):
    """Crossing time for each reorganization energy, one Drude-Lorentz bath per site."""
    out = {}
    for lam in reorganizations:
        env = Environment.uniform(system.n_sites, SpectralDensity.drude_lorentz(lam, invnu), temperature)
        out[float(lam)] = crossing_time(system, env, t_end, settings)
    return out


@dataclass(frozen=True)
class Lifetimes:
    """1/e times (fs) of the exciton coherence and of the population relaxation."""

    coherence: float
    relaxation: float
    final_upper: float


def lifetimes(system, environment, initial_site, t_end, settings=HeomSettings()) -> Lifetimes:
    """Coherence and relaxation times of a dimer started on one site.

    The coherence time is taken from Re<E1|rho|E2>, the relaxation time from
    the upper-exciton population measured from its value at ``t_end``.
    """
    n = system.n_sites
    rho0 = np.zeros((n, n), dtype=complex)
    rho0[initial_site, initial_site] = 1.0
    traj = exciton_trajectory(system, environment, rho0, t_end, settings)
    upper = traj.populations[:, -1]
    return Lifetimes(
        decay_time(traj.times, np.real(traj.states[:, 0, -1])),
        decay_time(traj.times, upper - upper[-1]),
        float(upper[-1]),
    )
