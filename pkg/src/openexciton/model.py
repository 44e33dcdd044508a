"""Frenkel exciton model: Hamiltonian, baths, dipoles and state manifolds.

All energies are in cm^-1. Site indices are zero-based throughout.
"""

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .units import invnu_to_cm


class ValidationError(ValueError):
    """Raised when model input violates a structural invariant."""


def _frozen(array, dtype=float):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ExcitonSystem:
    """Single-exciton Frenkel Hamiltonian in the site basis.

    Parameters
    ----------
    zero_phonon_energies : array_like, shape (N,)
        Site energies without reorganization shift.
    couplings : array_like, shape (N, N)
        Symmetric inter-site couplings with zero diagonal.
    ground_energy : float
        Energy of the common ground state.
    """

    zero_phonon_energies: np.ndarray
    couplings: np.ndarray
    ground_energy: float = 0.0

    def __post_init__(self):
        eps = _frozen(np.atleast_1d(self.zero_phonon_energies))
        J = _frozen(np.atleast_2d(self.couplings))
        if eps.ndim != 1 or eps.size < 1:
            raise ValidationError("need at least one site")
        n = eps.size
        if J.shape != (n, n):
            raise ValidationError(
                f"couplings have shape {J.shape}, expected ({n}, {n}) for {n} sites"
            )
        scale = max(1.0, float(np.max(np.abs(J))))
        if not np.allclose(J, J.T, rtol=0.0, atol=1e-12 * scale):
            raise ValidationError("coupling matrix is not symmetric")
        if np.any(np.diag(J) != 0.0):
            raise ValidationError("coupling matrix must have a zero diagonal")
        object.__setattr__(self, "zero_phonon_energies", eps)
        object.__setattr__(self, "couplings", J)

    @classmethod
    def from_hamiltonian(cls, hamiltonian, ground_energy=0.0):
        """Split a site Hamiltonian into diagonal energies and couplings."""
        H = np.asarray(hamiltonian, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValidationError(f"Hamiltonian must be square, got shape {H.shape}")
        J = H - np.diag(np.diag(H))
        return cls(np.diag(H).copy(), J, ground_energy)

    @property
    def n_sites(self) -> int:
        return self.zero_phonon_energies.size

    @property
    def hamiltonian(self) -> np.ndarray:
        """Site-basis single-exciton Hamiltonian built from zero-phonon energies."""
        return np.diag(self.zero_phonon_energies) + self.couplings

    def with_site_energies(self, energies) -> "ExcitonSystem":
        return ExcitonSystem(energies, self.couplings, self.ground_energy)


@dataclass(frozen=True)
class DrudeLorentzPeak:
    """One (shifted) Drude-Lorentz peak; all parameters in cm^-1."""

    reorganization: float
    rate: float
    shift: float = 0.0

    def __post_init__(self):
        if self.reorganization < 0:
            raise ValidationError(f"reorganization energy must be >= 0, got {self.reorganization}")
        if not self.rate > 0:
            raise ValidationError(f"bath rate must be > 0, got {self.rate}")
        if self.shift < 0:
            raise ValidationError(f"peak shift must be >= 0, got {self.shift}")

    @classmethod
    def from_correlation_time(cls, reorganization, invnu_fs, shift=0.0):
        """Build from the inverse bath rate given in femtoseconds."""
        return cls(float(reorganization), float(invnu_to_cm(invnu_fs)), float(shift))


@dataclass(frozen=True)
class SpectralDensity:
    """Superposition of shifted Drude-Lorentz peaks, J(w) in cm^-1."""

    terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @classmethod
    def drude_lorentz(cls, reorganization, invnu_fs, shift=0.0):
        return cls((DrudeLorentzPeak.from_correlation_time(reorganization, invnu_fs, shift),))

    def __add__(self, other):
        return SpectralDensity(self.terms + other.terms)

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        out = np.zeros_like(w)
        for t in self.terms:
            lam, nu, Om = t.reorganization, t.rate, t.shift
            out = out + lam * w * nu * (
                1.0 / ((w - Om) ** 2 + nu**2) + 1.0 / ((w + Om) ** 2 + nu**2)
            )
        return out

    def slope_at_zero(self) -> float:
        """lim_{w->0} J(w)/w."""
        return float(sum(2.0 * t.reorganization * t.rate / (t.shift**2 + t.rate**2) for t in self.terms))

    @property
    def total_reorganization(self) -> float:
        return float(sum(t.reorganization for t in self.terms))

    @property
    def min_rate(self) -> float:
        return min((t.rate for t in self.terms), default=np.inf)


@dataclass(frozen=True)
class BathMap:
    """Assignment of independent baths to sites.

    ``assignments[m]`` lists the bath indices coupled to site ``m``.
    """

    assignments: tuple

    def __post_init__(self):
        assignments = tuple(tuple(int(b) for b in site) for site in self.assignments)
        flat = [b for site in assignments for b in site]
        if sorted(flat) != list(range(len(flat))):
            raise ValidationError(
                f"bath indices {sorted(flat)} must each appear exactly once and cover 0..{len(flat) - 1}"
            )
        object.__setattr__(self, "assignments", assignments)

    @classmethod
    def one_per_site(cls, n_sites):
        return cls(tuple((m,) for m in range(n_sites)))

    @property
    def n_sites(self) -> int:
        return len(self.assignments)

    @property
    def n_baths(self) -> int:
        return sum(len(site) for site in self.assignments)

    def site_of(self, bath: int) -> int:
        for m, site in enumerate(self.assignments):
            if bath in site:
                return m
        raise KeyError(bath)


@dataclass(frozen=True)
class Environment:
    """Baths, their site assignment and the common temperature (K)."""

    baths: tuple
    bath_map: BathMap
    temperature: float

    def __post_init__(self):
        object.__setattr__(self, "baths", tuple(self.baths))
        if len(self.baths) != self.bath_map.n_baths:
            raise ValidationError(
                f"{len(self.baths)} spectral densities given for {self.bath_map.n_baths} baths"
            )
        if not self.temperature > 0:
            raise ValidationError(f"temperature must be > 0 K, got {self.temperature}")

    @classmethod
    def uniform(cls, n_sites, density: SpectralDensity, temperature):
        """Same spectral density on every site, one bath each."""
        return cls((density,) * n_sites, BathMap.one_per_site(n_sites), temperature)

    @property
    def n_sites(self) -> int:
        return self.bath_map.n_sites

    def site_density(self, site: int) -> SpectralDensity:
        out = SpectralDensity()
        for b in self.bath_map.assignments[site]:
            out = out + self.baths[b]
        return out

    def site_reorganization(self) -> np.ndarray:
        return np.array([self.site_density(m).total_reorganization for m in range(self.n_sites)])

    def with_temperature(self, temperature) -> "Environment":
        return Environment(self.baths, self.bath_map, temperature)


@dataclass(frozen=True)
class DipoleModel:
    """Transition dipoles: unit directions, scalar strengths, and centers."""

    directions: np.ndarray
    strengths: np.ndarray = None
    centers: np.ndarray = None

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if d.shape[1] != 3:
            raise ValidationError(f"dipole directions must be 3-vectors, got shape {d.shape}")
        norms = np.linalg.norm(d, axis=1)
        if np.any(norms == 0):
            raise ValidationError("zero-length dipole direction")
        d = d / norms[:, None]
        n = d.shape[0]
        s = np.ones(n) if self.strengths is None else np.asarray(self.strengths, dtype=float)
        c = np.zeros((n, 3)) if self.centers is None else np.atleast_2d(np.asarray(self.centers, dtype=float))
        if s.shape != (n,) or c.shape != (n, 3):
            raise ValidationError("dipole strengths/centers do not match number of directions")
        object.__setattr__(self, "directions", _frozen(d))
        object.__setattr__(self, "strengths", _frozen(s))
        object.__setattr__(self, "centers", _frozen(c))

    @property
    def n_sites(self) -> int:
        return self.directions.shape[0]

    @property
    def vectors(self) -> np.ndarray:
        return self.directions * self.strengths[:, None]

    def rotated(self, rotation) -> "DipoleModel":
        R = np.asarray(rotation, dtype=float)
        return DipoleModel(self.directions @ R.T, self.strengths, self.centers @ R.T)


@dataclass(frozen=True)
class TwoExcitonManifold:
    """Ground, single- and (optionally) double-exciton states.

    Attributes
    ----------
    states : tuple of tuples
        ``()`` for the ground state, ``(m,)`` for singles, ``(m, n)`` with
        ``m < n`` for pairs.
    hamiltonian : ndarray
        Block-diagonal Hamiltonian over all states.
    raising : ndarray, shape (3, N_states, N_states)
        Cartesian components of the raising dipole operator.
    site_occupation : ndarray, shape (N_sites, N_states)
        ``site_occupation[m, s]`` is 1 if state ``s`` contains an excitation
        on site ``m``; the diagonal of the bath coupling operator of site m.
    """

    states: tuple
    hamiltonian: np.ndarray
    raising: np.ndarray
    site_occupation: np.ndarray
    n_sites: int

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def has_pairs(self) -> bool:
        return self.n_states > 1 + self.n_sites

    @property
    def ground(self) -> slice:
        return slice(0, 1)

    @property
    def singles(self) -> slice:
        return slice(1, 1 + self.n_sites)

    @property
    def pairs(self) -> slice:
        return slice(1 + self.n_sites, self.n_states)

    def block(self, name: str) -> slice:
        return {"g": self.ground, "e": self.singles, "f": self.pairs}[name]


def n_two_exciton_states(n_sites: int) -> int:
    return 1 + n_sites + n_sites * (n_sites - 1) // 2


def diagonalize(system):
    """Exciton eigenbasis of the single-exciton Hamiltonian.

    Parameters
    ----------
    system : ExcitonSystem or array_like
        System, or a symmetric site Hamiltonian.

    Returns
    -------
    A : ndarray
        Orthogonal matrix whose rows are eigenvectors, so that
        ``A @ H @ A.T`` is diagonal.
    energies : ndarray
        Eigenvalues in ascending order.
    """
    H = system.hamiltonian if isinstance(system, ExcitonSystem) else np.asarray(system, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValidationError(f"Hamiltonian must be square, got shape {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H))))
    if not np.allclose(H, H.T, rtol=0.0, atol=1e-12 * scale):
        raise ValidationError("Hamiltonian is not symmetric")
    energies, vecs = np.linalg.eigh(0.5 * (H + H.T))
    A = vecs.T.copy()
    # deterministic sign: largest-magnitude component of each eigenvector positive
    lead = np.argmax(np.abs(A), axis=1)
    signs = np.sign(A[np.arange(A.shape[0]), lead])
    A *= signs[:, None]
    return A, energies


def _check_basis(rho, A):
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] != A.shape[0]:
        raise ValidationError(f"density matrix shape {rho.shape} incompatible with transform {A.shape}")
    return rho


def to_exciton_basis(rho_site, A):
    """rho_exc = A rho_site A^T."""
    rho = _check_basis(rho_site, A)
    return A @ rho @ A.T


def to_site_basis(rho_exc, A):
    """rho_site = A^T rho_exc A."""
    rho = _check_basis(rho_exc, A)
    return A.T @ rho @ A


def dressed_site_energies(system: ExcitonSystem, environment: Environment = None) -> np.ndarray:
    """Zero-phonon energies plus the reorganization energy of each site's baths."""
    eps = np.array(system.zero_phonon_energies, dtype=float)
    if environment is None:
        return eps
    if environment.n_sites != system.n_sites:
        raise ValidationError(
            f"bath map covers {environment.n_sites} sites, system has {system.n_sites}"
        )
    return eps + environment.site_reorganization()


def site_hamiltonian(system: ExcitonSystem, environment: Environment = None) -> np.ndarray:
    """Single-exciton Hamiltonian including reorganization shifts."""
    return np.diag(dressed_site_energies(system, environment)) + system.couplings


def build_two_exciton(
    system: ExcitonSystem,
    dipoles: DipoleModel = None,
    site_energies: Sequence[float] = None,
    pairs: bool = True,
) -> TwoExcitonManifold:
    """Extend the single-exciton model by the ground state and exciton pairs.

    Pair energies are ``eps_m + eps_n`` (no binding shift). Pair states
    sharing site ``m`` couple through ``J_nk``; the raising operator connects
    ``|0> -> |m>`` with ``d_m`` and ``|m> -> |mn>`` with ``d_n``.

    Parameters
    ----------
    site_energies : sequence of float, optional
        Overrides the diagonal energies (e.g. dressed energies).
    pairs : bool
        Include the double-exciton block.
    """
    N = system.n_sites
    eps = np.asarray(system.zero_phonon_energies if site_energies is None else site_energies, dtype=float)
    if eps.shape != (N,):
        raise ValidationError(f"expected {N} site energies, got shape {eps.shape}")
    if dipoles is not None and dipoles.n_sites != N:
        raise ValidationError(f"{dipoles.n_sites} dipoles for {N} sites")
    J = system.couplings

    states = [()] + [(m,) for m in range(N)]
    if pairs:
        states += list(combinations(range(N), 2))
    index = {s: i for i, s in enumerate(states)}
    n = len(states)

    H = np.zeros((n, n))
    H[0, 0] = system.ground_energy
    H[1 : N + 1, 1 : N + 1] = np.diag(eps) + J
    if pairs:
        for (a, b) in states[N + 1 :]:
            i = index[(a, b)]
            H[i, i] = eps[a] + eps[b]
        # <mn|H|mk> = J_nk for shared m
        for (a, b) in states[N + 1 :]:
            i = index[(a, b)]
            for (c, d) in states[N + 1 :]:
                j = index[(c, d)]
                if i == j:
                    continue
                shared = {a, b} & {c, d}
                if len(shared) == 1:
                    (x,) = {a, b} - shared
                    (y,) = {c, d} - shared
                    H[i, j] = J[x, y]

    occ = np.zeros((N, n))
    for i, s in enumerate(states):
        for m in s:
            occ[m, i] = 1.0

    mu = np.zeros((3, n, n))
    if dipoles is not None:
        vec = dipoles.vectors
        for m in range(N):
            mu[:, index[(m,)], 0] = vec[m]
        if pairs:
            for m in range(N):
                for k in range(N):
                    if k != m:
                        mu[:, index[tuple(sorted((m, k)))], index[(m,)]] = vec[k]

    H.setflags(write=False)
    mu.setflags(write=False)
    occ.setflags(write=False)
    return TwoExcitonManifold(tuple(states), H, mu, occ, N)
