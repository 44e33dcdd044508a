"""Foerster incoherent hopping between sites and rate-equation propagation."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from ..bath import decompose_exponentials, lineshape_from_expansion
from ..model import Environment, ExcitonSystem, ValidationError
from ..units import CM_TO_RAD_FS

PREFACTORS = ("linear", "golden_rule")


class OverlapNotConverged(RuntimeError):
    """The donor/acceptor overlap integrand did not decay on the time grid."""


@dataclass(frozen=True)
class RateMatrix:
    """Master-equation generator dp/dt = K p over sites (fs^-1).

    ``K[n, m]`` is the rate m -> n for n != m and ``K[m, m]`` the total
    outflow from m with a minus sign, so every column sums to zero.
    """

    K: np.ndarray
    prefactor: str = "linear"

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        off = K - np.diag(np.diag(K))
        if np.any(off < 0):
            raise ValidationError("negative off-diagonal transfer rate")
        if np.any(np.abs(K.sum(axis=0)) > 1e-12 * max(1.0, np.abs(K).max())):
            raise ValidationError("rate matrix columns do not sum to zero")
        object.__setattr__(self, "K", K)

    @property
    def n_sites(self) -> int:
        return self.K.shape[0]

    def stationary(self) -> np.ndarray:
        """Normalized null vector of K."""
        w, v = np.linalg.eig(self.K)
        p = np.real(v[:, np.argmin(np.abs(w))])
        return p / p.sum()


def overlap_integrand(times, eps_donor, lam_donor, g_donor, eps_acceptor, lam_acceptor, g_acceptor):
    """F_m^*(t) A_n(t) for donor m and acceptor n.

    Absorption A_n = exp[-i(eps_n + lam_n) t - g_n(t)] and fluorescence
    F_m^* = exp[+i(eps_m - lam_m) t - g_m(t)], with zero-phonon energies
    eps in cm^-1 and the lineshapes sampled on ``times`` (fs).
    """
    t = np.asarray(times, dtype=float)
    phase = ((eps_donor - lam_donor) - (eps_acceptor + lam_acceptor)) * CM_TO_RAD_FS * t
    return np.exp(1j * phase - g_donor - g_acceptor)


def _overlap_integrals(system, environment, matsubara, dt, t_max, max_t, tail):
    N = system.n_sites
    eps = system.zero_phonon_energies
    lam = environment.site_reorganization()
    exps = [decompose_exponentials(environment.site_density(m), environment.temperature, matsubara) for m in range(N)]
    while True:
        times = np.arange(0.0, t_max + 0.5 * dt, dt)
        g = [lineshape_from_expansion(e, times) if len(e) else np.zeros_like(times, dtype=complex) for e in exps]
        out = np.zeros((N, N))
        converged = True
        for m in range(N):
            for n in range(N):
                if m == n or system.couplings[m, n] == 0.0:
                    continue
                f = overlap_integrand(times, eps[m], lam[m], g[m], eps[n], lam[n], g[n])
                peak = np.max(np.abs(f))
                if np.abs(f[-1]) > tail * peak:
                    converged = False
                    break
                out[n, m] = np.real(np.trapezoid(f, times))
            if not converged:
                break
        if converged:
            return out
        if 2 * t_max > max_t:
            raise OverlapNotConverged(
                f"overlap integrand still above {tail:g} of its peak at t = {t_max:g} fs; "
                "the lineshape damping is too small, use a longer grid (max_time) or stronger coupling to the bath"
            )
        t_max *= 2


def foerster_rates(
    system: ExcitonSystem,
    environment: Environment,
    prefactor: str = "linear",
    matsubara: int = 200,
    dt: float = 0.5,
    t_max: float = 1000.0,
    max_time: float = 1.0e5,
    tail: float = 1e-6,
) -> RateMatrix:
    """Foerster hopping rates from lineshape overlaps.

    Parameters
    ----------
    prefactor : {"linear", "golden_rule"}
        ``"linear"`` (default) multiplies the overlap by 2|J_mn| with J in
        rad/fs, which is not dimensionally a rate. ``"golden_rule"`` uses
        2|J_mn|^2, the Fermi golden-rule rate.
    dt, t_max : float
        Initial trapezoid grid (fs); the grid is doubled until the integrand
        falls below ``tail`` times its peak, up to ``max_time``.

    Raises
    ------
    OverlapNotConverged
        If the integrand does not decay within ``max_time``.
    """
    if prefactor not in PREFACTORS:
        raise ValidationError(f"prefactor must be one of {PREFACTORS}, got {prefactor!r}")
    if system.n_sites < 2:
        raise ValidationError("Foerster rates need at least two sites")
    if environment.n_sites != system.n_sites:
        raise ValidationError(f"bath map covers {environment.n_sites} sites, system has {system.n_sites}")
    J = np.abs(system.couplings) * CM_TO_RAD_FS
    factor = 2.0 * J if prefactor == "linear" else 2.0 * J**2
    overlap = _overlap_integrals(system, environment, matsubara, dt, t_max, max_time, tail)
    K = factor * overlap  # overlap[n, m] belongs to m -> n
    K = np.clip(K, 0.0, None)
    np.fill_diagonal(K, 0.0)
    K[np.diag_indices_from(K)] = -K.sum(axis=0)
    return RateMatrix(K, prefactor)


def rate_propagate(p0, rates, times) -> np.ndarray:
    """Populations p(t) = expm(K t) p0 at each requested time.

    Returns
    -------
    ndarray, shape (len(times), n_sites)
    """
    K = rates.K if isinstance(rates, RateMatrix) else np.asarray(rates, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (K.shape[0],):
        raise ValidationError(f"initial populations have shape {p0.shape}, expected ({K.shape[0]},)")
    if np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-10:
        raise ValidationError("initial populations must be non-negative and sum to 1")
    return np.array([expm(K * t) @ p0 for t in np.atleast_1d(times)])
