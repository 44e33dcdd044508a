"""Container for stored density-matrix trajectories."""

from dataclasses import dataclass, field

import numpy as np

from ..model import ValidationError


@dataclass
class Trajectory:
    """Stored density matrices ``states[i]`` at ``times[i]`` (fs)."""

    times: np.ndarray
    states: np.ndarray
    basis: str = "site"
    meta: dict = field(default_factory=dict)

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.states))

    def in_basis(self, A, name="exciton") -> "Trajectory":
        """Transform every state with ``A rho A^T``."""
        A = np.asarray(A)
        return Trajectory(self.times, np.einsum("ai,tij,bj->tab", A, self.states, A), name, dict(self.meta))

    def trace_drift(self) -> float:
        tr = np.einsum("tii->t", self.states)
        return float(np.max(np.abs(tr - tr[0])))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.states - np.conj(np.swapaxes(self.states, 1, 2)))))


def check_density(rho0, n):
    """Validate a Hermitian unit-trace density matrix of dimension n."""
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (n, n):
        raise ValidationError(f"initial density matrix has shape {rho0.shape}, expected ({n}, {n})")
    if not np.allclose(rho0, rho0.conj().T, atol=1e-12):
        raise ValidationError("initial density matrix is not Hermitian")
    if abs(np.trace(rho0) - 1.0) > 1e-10:
        raise ValidationError(f"initial density matrix has trace {np.trace(rho0).real:.6g}, expected 1")
    return rho0
