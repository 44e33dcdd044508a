"""Redfield (second-order time-convolutionless) relaxation in the exciton basis.

The relaxation tensor uses the standard index structure

    R_{ab,cd} = G_{dbac} + conj(G_{cabd})
                - delta_{bd} sum_k G_{akkc} - delta_{ac} sum_k conj(G_{bkkd})

with G_{abcd} = sum_m V^m_{ab} V^m_{cd} C_m(w_d - w_c), where C_m is the
half-sided transform of the correlation function of site m and V^m is the
site projector expressed in the eigenbasis.
"""

from dataclasses import dataclass

import numpy as np

from ..bath import correlation_freq
from ..model import Environment, ExcitonSystem, ValidationError, diagonalize, site_hamiltonian
from ..units import CM_TO_RAD_FS
from .rk4 import integrate, n_steps_for
from .trajectory import Trajectory, check_density

SECULAR_TOLERANCE = 1e-9  # cm^-1


@dataclass(frozen=True)
class RedfieldTensor:
    """Relaxation tensor R[a, b, c, d] in fs^-1 acting as d rho_ab/dt = R_abcd rho_cd.

    Attributes
    ----------
    energies : ndarray
        Eigenenergies (cm^-1) in the order of the basis.
    transform : ndarray
        Rows are eigenvectors in the original (site or state) basis.
    """

    tensor: np.ndarray
    energies: np.ndarray
    transform: np.ndarray
    secular: bool

    @property
    def n(self) -> int:
        return self.energies.size

    def generator(self) -> np.ndarray:
        """Liouvillian on row-major vectorized rho, including -i w_ab."""
        n = self.n
        w = self.energies * CM_TO_RAD_FS
        L = self.tensor.reshape(n * n, n * n).astype(complex).copy()
        L[np.diag_indices(n * n)] += -1j * (w[:, None] - w[None, :]).ravel()
        return L

    def population_rates(self) -> np.ndarray:
        """K[a, b] = R_aabb: population transfer matrix (fs^-1)."""
        idx = np.arange(self.n)
        return np.real(self.tensor[idx, idx][:, idx, idx])


def secular_mask(energies, tol=SECULAR_TOLERANCE):
    """True where (w_a - w_b) equals (w_c - w_d) within ``tol`` cm^-1."""
    w = np.asarray(energies, dtype=float)
    gap = w[:, None] - w[None, :]
    return np.abs(gap[:, :, None, None] - gap[None, None, :, :]) <= tol


def _block_eigenbasis(H, blocks):
    n = H.shape[0]
    A = np.zeros((n, n))
    E = np.zeros(n)
    for sl in blocks:
        idx = np.arange(n)[sl]
        sub = H[np.ix_(idx, idx)]
        if np.any(H[np.ix_(idx, np.setdiff1d(np.arange(n), idx))] != 0):
            raise ValidationError("Hamiltonian is not block diagonal over the given blocks")
        a, e = diagonalize(sub)
        A[np.ix_(idx, idx)] = a
        E[idx] = e
    return A, E


def redfield_tensor(
    system,
    environment: Environment,
    secular: bool = False,
    site_occupation=None,
    blocks=None,
    matsubara: int = 400,
) -> RedfieldTensor:
    """Build the Redfield tensor.

    Parameters
    ----------
    system : ExcitonSystem or array_like
        An ExcitonSystem (its reorganization-dressed site Hamiltonian is
        used) or an explicit Hamiltonian in cm^-1.
    site_occupation : array_like, shape (n_sites, n), optional
        Diagonals of the site coupling operators when ``system`` is an
        extended Hamiltonian; identity by default.
    blocks : sequence of slice, optional
        Diagonalize each block separately (e.g. ground/single/double
        manifolds) so eigenvectors never mix manifolds.
    """
    if isinstance(system, ExcitonSystem):
        H = site_hamiltonian(system, environment)
    else:
        H = np.asarray(system, dtype=float)
    n = H.shape[0]
    occ = np.eye(n) if site_occupation is None else np.asarray(site_occupation, dtype=float)
    if occ.shape != (environment.n_sites, n):
        raise ValidationError(f"site occupation has shape {occ.shape}, expected ({environment.n_sites}, {n})")
    A, E = _block_eigenbasis(H, blocks or [slice(0, n)])
    gap = E[None, :] - E[:, None]  # gap[c, d] = w_d - w_c
    G = np.zeros((n, n, n, n), dtype=complex)
    for m in range(environment.n_sites):
        density = environment.site_density(m)
        if density.total_reorganization == 0.0:
            continue
        V = A @ np.diag(occ[m]) @ A.T
        W = correlation_freq(density, environment.temperature, gap.ravel(), matsubara).reshape(n, n)
        G += np.einsum("ab,cd,cd->abcd", V, V, W)
    G *= CM_TO_RAD_FS
    eye = np.eye(n)
    X = np.einsum("akkc->ac", G)
    R = (
        np.einsum("dbac->abcd", G)
        + np.einsum("cabd->abcd", G.conj())
        - np.einsum("bd,ac->abcd", eye, X)
        - np.einsum("ac,bd->abcd", eye, X.conj())
    )
    if secular:
        R = np.where(secular_mask(E), R, 0.0)
    return RedfieldTensor(R, E, A, bool(secular))


def redfield_propagate(rho0_exc, tensor: RedfieldTensor, t_end: float, dt: float, stride: int = 1) -> Trajectory:
    """RK4 trajectory of the exciton-basis density matrix.

    Parameters
    ----------
    rho0_exc : array_like
        Initial density matrix in the eigenbasis of ``tensor``.
    """
    n = tensor.n
    rho0 = check_density(rho0_exc, n)
    L = tensor.generator()
    n_steps = n_steps_for(t_end, dt)
    _, records = integrate(lambda y: L @ y, rho0.ravel(), dt, n_steps, observe=lambda y: y.reshape(n, n).copy(), stride=stride)
    times = dt * stride * np.arange(len(records))
    return Trajectory(times, np.array(records), basis="exciton", meta={"method": "redfield", "secular": tensor.secular, "dt": dt})


def propagate_vectorized(L, y0, dt, n_steps, observe=None, stride=1):
    """RK4 for ``dy/dt = L y`` with ``y`` of shape (n*n, batch)."""
    return integrate(lambda y: L @ y, y0, dt, n_steps, observe=observe, stride=stride)
