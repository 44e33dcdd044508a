from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import DIMER_H, dimer
from openexciton.bath import decompose_exponentials, lineshape_from_expansion
from openexciton.model import Environment, ExcitonSystem, SpectralDensity, site_hamiltonian
from openexciton.propagators import (
    HEOMSolver,
    HierarchyTooLarge,
    enumerate_hierarchy,
    heom_propagate,
    hierarchy_size,
    memory_estimate,
)
from openexciton.propagators.rk4 import PropagationError, integrate, n_steps_for, rk4_step
from openexciton.units import CM_TO_RAD_FS


# ---------------------------------------------------------------- hierarchy


@given(st.lists(st.integers(0, 3), min_size=1, max_size=4), st.integers(0, 4))
def test_hierarchy_count_and_links(counts, depth):
    h = enumerate_hierarchy(counts, depth)
    K = sum(counts)
    assert h.n_ados == comb(K + depth, depth) == hierarchy_size(K, depth)
    assert np.all(h.indices.sum(axis=1) <= depth)
    assert np.all(np.diff(h.indices.sum(axis=1)) >= 0)  # graded by depth
    for j in range(h.n_ados):
        for k in range(K):
            if h.up[j, k] >= 0:
                assert h.down[h.up[j, k], k] == j
                np.testing.assert_array_equal(h.indices[h.up[j, k]] - h.indices[j], np.eye(K, dtype=int)[k])
            else:
                assert h.indices[j].sum() == depth
            assert (h.down[j, k] >= 0) == (h.indices[j, k] > 0)


def test_hierarchy_order_within_depth():
    h = enumerate_hierarchy([2], 2)
    assert h.indices.tolist() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]


def test_seven_single_term_baths_depth_three():
    # binomial(7 + 3, 3)
    assert enumerate_hierarchy(1, 3, n_baths=7).n_ados == 120


def test_hierarchy_cap_refuses_before_allocation():
    with pytest.raises(HierarchyTooLarge, match="members"):
        enumerate_hierarchy([2] * 50, 40, max_ados=10**6)


def test_memory_estimate():
    assert memory_estimate(680, 29) == 680 * 29 * 29 * 16


# ---------------------------------------------------------------- generator vs dense reference


def _dense_reference(solver):
    """HEOM Liouvillian assembled term by term from the scaled-ADO equation."""
    h = solver.hierarchy
    n = solver.n_states
    H = solver.hamiltonian
    gam = np.concatenate([e.rates for e in solver.expansions])
    c = np.concatenate([e.amplitudes_angular for e in solver.expansions])
    cb = np.concatenate([e.conj_amplitudes_angular for e in solver.expansions])
    bath = h.bath_of_term()
    V = [np.diag(v) for v in solver.V]
    I = np.eye(n)
    left = lambda X: np.kron(X, I)  # noqa: E731  X rho (row-major vec)
    right = lambda X: np.kron(I, X.T)  # noqa: E731  rho X
    A = h.n_ados
    L = np.zeros((A * n * n, A * n * n), dtype=complex)
    blk = lambda i: slice(i * n * n, (i + 1) * n * n)  # noqa: E731
    for j, u in enumerate(h.indices):
        L[blk(j), blk(j)] += -1j * (left(H) - right(H)) - np.sum(u * gam) * np.eye(n * n)
        for k in range(h.n_terms):
            Vk = V[bath[k]]
            if h.up[j, k] >= 0:
                L[blk(j), blk(h.up[j, k])] += -1j * np.sqrt((u[k] + 1) * abs(c[k])) * (left(Vk) - right(Vk))
            if h.down[j, k] >= 0:
                s = np.sqrt(u[k] / abs(c[k]))
                L[blk(j), blk(h.down[j, k])] += -1j * s * (c[k] * left(Vk) - cb[k] * right(Vk))
    return L


@pytest.mark.parametrize("shift", [0.0, 420.0])
def test_kernel_matches_dense_reference(shift, rng):
    system, env = dimer(35.0, 50.0, shift)
    solver = HEOMSolver.from_system(system, env, depth=2, matsubara=1)
    L = _dense_reference(solver)
    y = rng.normal(size=(solver.n_ados, 2, 2)) + 1j * rng.normal(size=(solver.n_ados, 2, 2))
    np.testing.assert_allclose(solver.rhs(y).ravel(), L @ y.ravel(), rtol=1e-12, atol=1e-14)


@given(st.integers(0, 2**31 - 1))
def test_adjoint_block_is_adjoint(seed):
    rng = np.random.default_rng(seed)
    system, env = dimer(35.0, 50.0, 420.0)
    H = np.zeros((4, 4))
    H[1:3, 1:3] = site_hamiltonian(system, env)
    H[3, 3] = H[1, 1] + H[2, 2]
    occ = np.array([[0, 1, 0, 1], [0, 0, 1, 1.0]])
    solver = HEOMSolver.from_manifold(H, occ, env, depth=2, matsubara=1)
    blk = solver.block([1, 2], [0])
    X = rng.normal(size=(solver.n_ados, 2, 1)) + 1j * rng.normal(size=(solver.n_ados, 2, 1))
    Y = rng.normal(size=X.shape) + 1j * rng.normal(size=X.shape)
    lhs = np.vdot(Y, blk.rhs(X))
    rhs = np.vdot(blk.dagger().rhs(Y), X)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    # RK4 step inherits the adjoint relation
    fwd, _ = blk.propagate(X, 0.5, 3)
    bwd, _ = blk.dagger().propagate(Y, 0.5, 3)
    assert np.vdot(Y, fwd) == pytest.approx(np.vdot(bwd, X), rel=1e-12)


# ---------------------------------------------------------------- dynamics oracles


def test_no_bath_is_unitary():
    system, _ = dimer()
    env = Environment.uniform(2, SpectralDensity(), 277.0)
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    traj = heom_propagate(system, env, rho0, 200.0, 0.5, depth=3, matsubara=1, stride=40)
    assert traj.meta["n_ados"] == 1
    U = lambda t: expm(-1j * DIMER_H * CM_TO_RAD_FS * t)  # noqa: E731
    for t, rho in zip(traj.times, traj.states):
        np.testing.assert_allclose(rho, U(t) @ rho0 @ U(t).conj().T, atol=1e-8)


def test_pure_dephasing_matches_lineshape():
    # ground + one excited state, bath on the excited state: rho_eg(t) = exp(-i e t - g(t))
    density = SpectralDensity.drude_lorentz(35.0, 50.0)
    env = Environment.uniform(1, density, 277.0)
    eps = 100.0
    H = np.diag([0.0, eps])
    solver = HEOMSolver.from_manifold(H, [[0.0, 1.0]], env, depth=8, matsubara=2)
    blk = solver.block([1], [0])
    y0 = blk.zeros()
    y0[0] = 1.0
    _, rec = blk.propagate(y0, 0.5, 600, observe=lambda y: complex(y[0, 0, 0]), stride=20)
    t = 10.0 * np.arange(len(rec))
    g = lineshape_from_expansion(decompose_exponentials(density, 277.0, 2), t)
    exact = np.exp(-1j * eps * CM_TO_RAD_FS * t - g)
    np.testing.assert_allclose(rec, exact, atol=2e-4)


@given(st.integers(0, 2**31 - 1))
def test_trace_and_hermiticity_conserved(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho0 = M @ M.conj().T
    rho0 /= np.trace(rho0)
    system, env = dimer(60.0)
    traj = HEOMSolver.from_system(system, env, depth=3, matsubara=1).propagate(rho0, 100.0, 1.0)
    assert traj.trace_drift() < 1e-12
    assert traj.hermiticity_defect() < 1e-12


def test_zero_phonon_energies_are_dressed():
    system, env = dimer(35.0)
    solver = HEOMSolver.from_system(system, env, 1, 0)
    np.testing.assert_allclose(solver.hamiltonian / CM_TO_RAD_FS, DIMER_H + 35.0 * np.eye(2))


def test_zero_reorganization_bath_is_skipped():
    system = ExcitonSystem.from_hamiltonian(DIMER_H)
    env = Environment((SpectralDensity.drude_lorentz(0.0, 50.0), SpectralDensity.drude_lorentz(20.0, 50.0)),
                      Environment.uniform(2, SpectralDensity(), 1.0).bath_map, 277.0)
    assert HEOMSolver.from_system(system, env, 2, 1).hierarchy.n_terms == 2


# ---------------------------------------------------------------- RK4


@given(st.complex_numbers(max_magnitude=2.0))
def test_rk4_step_is_fourth_order_taylor(z):
    y = rk4_step(lambda y: z * y, np.array([1.0 + 0j]), 1.0)
    assert y[0] == pytest.approx(1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24, rel=1e-12, abs=1e-12)


def test_integrate_observes_with_stride():
    y, rec = integrate(lambda y: -y, np.array([1.0]), 0.1, 10, observe=lambda y: y[0], stride=5)
    assert len(rec) == 3 and rec[0] == 1.0
    assert y[0] == pytest.approx(np.exp(-1.0), rel=1e-5)


def test_integrate_detects_divergence():
    with pytest.raises(PropagationError, match="step"):
        integrate(lambda y: 100.0 * y, np.array([1.0]), 1.0, 100)


def test_step_count_validation():
    assert n_steps_for(10.0, 0.5) == 20
    with pytest.raises(ValueError):
        n_steps_for(10.0, 3.0)
