"""Hierarchical equations of motion for diagonal (site-projector) bath couplings.

The auxiliary density operators (ADOs) are stored in one contiguous array
with the ADO index first, ``state[u, ..., i, j]``, and coupled through
neighbour tables built once at enumeration.
ADOs are rescaled by ``prod_k sqrt(u_k! |c_k|^u_k)`` which keeps their
magnitudes comparable across depths.
"""

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from ..bath import CorrelationExpansion, decompose_exponentials
from ..model import Environment, ExcitonSystem, ValidationError, site_hamiltonian
from ..units import CM_TO_RAD_FS
from ._kernels import heom_rhs_kernel
from .rk4 import PropagationError, integrate, n_steps_for
from .trajectory import Trajectory, check_density

DEFAULT_MAX_ADOS = 20_000_000


class HierarchyTooLarge(ValidationError):
    """Raised before allocation when the hierarchy would exceed the size cap."""


def hierarchy_size(n_terms: int, depth: int) -> int:
    """Number of multi-indices of total degree <= depth over ``n_terms`` terms."""
    if depth < 0 or n_terms < 0:
        raise ValueError("depth and term count must be non-negative")
    return comb(n_terms + depth, depth)


def _compositions(total, parts):
    """Vectors of ``parts`` non-negative ints summing to ``total``, descending lex."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class Hierarchy:
    """Enumerated multi-indices with neighbour tables.

    Attributes
    ----------
    indices : ndarray, shape (n_ados, n_terms)
        Multi-index of every ADO; row 0 is the physical density matrix.
    up, down : ndarray, shape (n_ados, n_terms)
        Row of ``u + e_k`` / ``u - e_k``, or -1 if it lies outside the
        hierarchy (truncation) or has a negative entry.
    term_counts : tuple
        Expansion terms per bath; terms are numbered bath by bath.
    """

    indices: np.ndarray
    up: np.ndarray
    down: np.ndarray
    depth: int
    term_counts: tuple

    @property
    def n_ados(self) -> int:
        return self.indices.shape[0]

    @property
    def n_terms(self) -> int:
        return self.indices.shape[1]

    def bath_of_term(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.term_counts)), self.term_counts)

    def __len__(self):
        return self.n_ados


def enumerate_hierarchy(term_counts, depth: int, n_baths: int = None, max_ados: int = DEFAULT_MAX_ADOS) -> Hierarchy:
    """All multi-indices of total degree <= ``depth``.

    Parameters
    ----------
    term_counts : int or sequence of int
        Expansion terms per bath. An int is repeated for ``n_baths`` baths.
    depth : int
        Maximum total degree D.
    max_ados : int
        Refuse (before allocating) if binomial(K + D, D) exceeds this.

    Returns
    -------
    Hierarchy
        Members ordered by depth, then descending lexicographically, e.g.
        ``(0,0), (1,0), (0,1), (2,0), (1,1), (0,2)`` for K = D = 2.
    """
    if np.ndim(term_counts) == 0:
        if n_baths is None:
            raise ValueError("n_baths is required when term_counts is a single integer")
        term_counts = [int(term_counts)] * int(n_baths)
    term_counts = tuple(int(k) for k in term_counts)
    if any(k < 0 for k in term_counts):
        raise ValueError("term counts must be non-negative")
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    K = sum(term_counts)
    count = hierarchy_size(K, depth)
    if count > max_ados:
        raise HierarchyTooLarge(
            f"hierarchy with {K} terms and depth {depth} has {count} members, above the cap of {max_ados}"
        )
    indices = np.zeros((count, K), dtype=np.int32)
    row = 0
    for d in range(depth + 1):
        for vec in _compositions(d, K):
            indices[row] = vec
            row += 1
    lookup = {tuple(v): i for i, v in enumerate(indices.tolist())}
    up = np.full((count, K), -1, dtype=np.int64)
    down = np.full((count, K), -1, dtype=np.int64)
    for i, v in enumerate(indices.tolist()):
        for k in range(K):
            v[k] += 1
            up[i, k] = lookup.get(tuple(v), -1)
            v[k] -= 2
            if v[k] >= 0:
                down[i, k] = lookup[tuple(v)]
            v[k] += 1
    for arr in (indices, up, down):
        arr.setflags(write=False)
    return Hierarchy(indices, up, down, int(depth), term_counts)


def memory_estimate(n_ados: int, n_states: int, copies: int = 1) -> int:
    """Bytes for ``copies`` complex128 hierarchy states."""
    return int(n_ados) * int(n_states) ** 2 * 16 * int(copies)


@dataclass
class HeomBlock:
    """Linear HEOM generator restricted to one ``(left, right)`` state block.

    The bath couplings are diagonal, so the equations never mix matrix
    elements between different blocks of a block-diagonal Hamiltonian;
    propagating a single block is exact.

    Attributes
    ----------
    up, down : ndarray, shape (n_ados, n_terms)
        Neighbour rows, -1 where absent.
    up_coef : ndarray
        Coefficient of ``[V, sigma_up]`` (elementwise weight V_l - V_r).
    down_left, down_right : ndarray
        Coefficients of ``V sigma_down`` and ``sigma_down V``.
    """

    h_left: np.ndarray
    h_right: np.ndarray
    damping: np.ndarray
    up: np.ndarray
    up_coef: np.ndarray
    down: np.ndarray
    down_left: np.ndarray
    down_right: np.ndarray
    bath: np.ndarray
    v_left: np.ndarray
    v_right: np.ndarray
    adjoint: bool = False

    @property
    def n_ados(self) -> int:
        return self.damping.shape[0]

    @property
    def shape(self):
        return (self.h_left.shape[0], self.h_right.shape[0])

    def rhs(self, y):
        """Time derivative of ``y`` with shape ``(n_ados, *batch, nl, nr)``."""
        y = np.ascontiguousarray(y, dtype=complex)
        y4 = y.reshape((self.n_ados, -1) + self.shape)
        out = np.empty_like(y4)
        heom_rhs_kernel(
            y4, out, self.h_left, self.h_right, self.damping, self.up, self.up_coef,
            self.down, self.down_left, self.down_right, self.bath, self.v_left, self.v_right,
        )
        return out.reshape(y.shape)

    def dagger(self) -> "HeomBlock":
        """Generator of the adjoint dynamics under the Frobenius inner product.

        RK4 applied to the adjoint generator yields the exact adjoint of the
        forward RK4 step, so backward-propagated observables reproduce
        forward traces to rounding.
        """
        # row j of the adjoint receives from u = down[j, t] what u took from j
        up_coef = np.zeros_like(self.up_coef)
        ok = self.down >= 0
        t_idx = np.nonzero(ok)[1]
        up_coef[ok] = np.conj(self.up_coef[self.down[ok], t_idx])
        down_left = np.zeros_like(self.down_left)
        down_right = np.zeros_like(self.down_right)
        ok = self.up >= 0
        t_idx = np.nonzero(ok)[1]
        down_left[ok] = np.conj(self.down_left[self.up[ok], t_idx])
        down_right[ok] = np.conj(self.down_right[self.up[ok], t_idx])
        return HeomBlock(
            # the kernel applies -i[h, .]; the adjoint of -iH is +iH^dagger
            np.ascontiguousarray(-self.h_left.conj().T),
            np.ascontiguousarray(-self.h_right.conj().T),
            self.damping.conj(),
            self.down, up_coef, self.up, down_left, down_right,
            self.bath, self.v_left, self.v_right, not self.adjoint,
        )

    def zeros(self, batch=()):
        return np.zeros((self.n_ados,) + tuple(batch) + self.shape, dtype=complex)

    def propagate(self, y0, dt, n_steps, observe=None, stride=1):
        """RK4 for ``n_steps`` steps of ``dt`` fs; see :func:`rk4.integrate`."""
        return integrate(self.rhs, y0, dt, n_steps, observe=observe, stride=stride, check=lambda y: y[0])


class HEOMSolver:
    """HEOM for a Hamiltonian with diagonal system-bath coupling operators.

    Parameters
    ----------
    hamiltonian : array_like, shape (n, n)
        System Hamiltonian in cm^-1 (real symmetric or Hermitian).
    coupling_diagonals : sequence of array_like, shape (n,)
        Diagonal of the coupling operator V_b of each bath.
    expansions : sequence of CorrelationExpansion
        Correlation function of each bath.
    depth : int
        Hierarchy depth D (hard truncation).
    filtering : str
        Only ``"none"`` is supported; kept as a hook for filtering strategies.
    """

    def __init__(
        self,
        hamiltonian,
        coupling_diagonals: Sequence,
        expansions: Sequence[CorrelationExpansion],
        depth: int,
        filtering: str = "none",
        max_ados: int = DEFAULT_MAX_ADOS,
    ):
        H = np.asarray(hamiltonian)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValidationError(f"Hamiltonian must be square, got {H.shape}")
        if not np.allclose(H, H.conj().T, atol=1e-10 * max(1.0, np.abs(H).max())):
            raise ValidationError("Hamiltonian is not Hermitian")
        if len(coupling_diagonals) != len(expansions):
            raise ValidationError(f"{len(coupling_diagonals)} coupling operators for {len(expansions)} expansions")
        if filtering != "none":
            raise ValidationError(f"unsupported filtering strategy {filtering!r}")
        self.n_states = H.shape[0]
        self.hamiltonian = H * CM_TO_RAD_FS
        self.V = [np.asarray(v, dtype=float).reshape(self.n_states) for v in coupling_diagonals]
        self.expansions = list(expansions)
        self.hierarchy = enumerate_hierarchy([len(e) for e in self.expansions], depth, max_ados=max_ados)
        self._blocks = {}
        self._build_links()

    @classmethod
    def from_system(cls, system: ExcitonSystem, environment: Environment, depth: int, matsubara: int, **kw):
        """Single-exciton HEOM with reorganization-dressed site energies."""
        H = site_hamiltonian(system, environment)
        V, exps = _bath_terms(np.eye(system.n_sites), environment, matsubara)
        return cls(H, V, exps, depth, **kw)

    @classmethod
    def from_manifold(cls, hamiltonian, site_occupation, environment: Environment, depth: int, matsubara: int, **kw):
        """HEOM on an extended state space; ``site_occupation[m]`` is V_m's diagonal."""
        V, exps = _bath_terms(site_occupation, environment, matsubara)
        return cls(hamiltonian, V, exps, depth, **kw)

    @property
    def n_ados(self) -> int:
        return self.hierarchy.n_ados

    def memory_bytes(self, copies=6) -> int:
        return memory_estimate(self.n_ados, self.n_states, copies)

    def _build_links(self):
        h = self.hierarchy
        A, K = h.indices.shape
        if K:
            gamma = np.concatenate([e.rates for e in self.expansions])
            c = np.concatenate([e.amplitudes_angular for e in self.expansions])
            cbar = np.concatenate([e.conj_amplitudes_angular for e in self.expansions])
        else:
            gamma = c = cbar = np.zeros(0, complex)
        u = h.indices.astype(float)
        scale = np.abs(c)
        self.damping = np.ascontiguousarray(-(u @ gamma)) if K else np.zeros(A, complex)
        self.up_coef = np.where(h.up >= 0, -1j * np.sqrt((u + 1.0) * scale), 0.0)
        s = np.sqrt(u / np.where(scale > 0, scale, 1.0))
        self.down_left = np.where(h.down >= 0, -1j * s * c, 0.0)
        self.down_right = np.where(h.down >= 0, 1j * s * cbar, 0.0)
        self.bath = np.ascontiguousarray(h.bath_of_term(), dtype=np.int64)
        self.V = np.array(self.V, dtype=float).reshape(len(self.expansions), self.n_states)

    def block(self, left=None, right=None) -> HeomBlock:
        """Generator for the sub-block ``rho[left, right]`` (index arrays or slices)."""
        left = _as_index(left, self.n_states)
        right = _as_index(right, self.n_states)
        key = (tuple(left), tuple(right))
        if key not in self._blocks:
            H = self.hamiltonian.astype(complex)
            h = self.hierarchy
            self._blocks[key] = HeomBlock(
                np.ascontiguousarray(H[np.ix_(left, left)]),
                np.ascontiguousarray(H[np.ix_(right, right)]),
                self.damping,
                np.ascontiguousarray(h.up), self.up_coef,
                np.ascontiguousarray(h.down), self.down_left, self.down_right,
                self.bath,
                np.ascontiguousarray(self.V[:, left]),
                np.ascontiguousarray(self.V[:, right]),
            )
        return self._blocks[key]

    def initial_state(self, rho0):
        """Hierarchy with ``rho0`` as the physical ADO and zero auxiliaries."""
        rho0 = np.asarray(rho0, dtype=complex)
        y = np.zeros((self.n_ados,) + rho0.shape, dtype=complex)
        y[0] = rho0
        return y

    def rhs(self, state):
        return self.block().rhs(state)

    def propagate(self, rho0, t_end, dt, stride=1):
        """Propagate a full density matrix; returns a :class:`Trajectory`."""
        rho0 = check_density(rho0, self.n_states)
        n = n_steps_for(t_end, dt)
        _, records = self.block().propagate(self.initial_state(rho0), dt, n, observe=lambda y: y[0].copy(), stride=stride)
        times = dt * stride * np.arange(len(records))
        return Trajectory(times, np.array(records), basis="site")


def _as_index(sel, n):
    if sel is None:
        return np.arange(n)
    if isinstance(sel, slice):
        return np.arange(n)[sel]
    return np.asarray(sel, dtype=int)


def _bath_terms(site_occupation, environment: Environment, matsubara: int):
    occ = np.asarray(site_occupation, dtype=float)
    if occ.shape[0] != environment.n_sites:
        raise ValidationError(f"bath map covers {environment.n_sites} sites, model has {occ.shape[0]}")
    V, exps = [], []
    for m, baths in enumerate(environment.bath_map.assignments):
        for b in baths:
            e = decompose_exponentials(environment.baths[b], environment.temperature, matsubara)
            if len(e):
                V.append(occ[m])
                exps.append(e)
    return V, exps


def heom_propagate(
    system: ExcitonSystem,
    environment: Environment,
    rho0,
    t_end: float,
    dt: float,
    depth: int,
    matsubara: int,
    stride: int = 1,
) -> Trajectory:
    """HEOM trajectory of the site-basis density matrix with RK4 steps of ``dt`` fs."""
    solver = HEOMSolver.from_system(system, environment, depth, matsubara)
    traj = solver.propagate(rho0, t_end, dt, stride=stride)
    traj.meta.update(method="heom", depth=depth, matsubara=matsubara, n_ados=solver.n_ados, dt=dt)
    return traj


__all__ = [
    "Hierarchy",
    "HierarchyTooLarge",
    "HEOMSolver",
    "HeomBlock",
    "PropagationError",
    "Trajectory",
    "enumerate_hierarchy",
    "heom_propagate",
    "hierarchy_size",
    "memory_estimate",
]
