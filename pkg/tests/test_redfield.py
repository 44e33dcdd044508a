import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import DIMER_H, FMO_H, dimer, fmo
from openexciton.bath import correlation_freq, dephasing_rates
from openexciton.model import Environment, ExcitonSystem, SpectralDensity, ValidationError, diagonalize, site_hamiltonian
from openexciton.propagators import redfield_propagate, redfield_tensor, secular_mask
from openexciton.units import CM_TO_RAD_FS, UNITS


def _operator_form(system, env, rho):
    """d rho/dt = -i[H, rho] - sum_m [V_m, L_m rho - rho L_m^dag] in the eigenbasis.

    (L_m)_ab = (V_m)_ab C_m(w_b - w_a) with C the half-sided transform.
    """
    A, E = diagonalize(site_hamiltonian(system, env))
    w = E * CM_TO_RAD_FS
    out = -1j * (w[:, None] - w[None, :]) * rho
    for m in range(system.n_sites):
        V = np.outer(A[:, m], A[:, m])
        C = correlation_freq(env.site_density(m), env.temperature, (E[None, :] - E[:, None]).ravel()).reshape(E.size, E.size)
        Lam = V * C * CM_TO_RAD_FS
        X = Lam @ rho - rho @ Lam.conj().T
        out -= V @ X - X @ V
    return out


@pytest.mark.parametrize("shift", [0.0, 420.0])
def test_tensor_matches_operator_form(shift, rng):
    system, env = dimer(35.0, 50.0, shift)
    R = redfield_tensor(system, env)
    M = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = M @ M.conj().T
    np.testing.assert_allclose((R.generator() @ rho.ravel()).reshape(2, 2), _operator_form(system, env, rho), rtol=1e-12, atol=1e-15)


def test_tensor_matches_operator_form_fmo(rng):
    system, env, _ = fmo()
    R = redfield_tensor(system, env)
    M = rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7))
    rho = M @ M.conj().T
    np.testing.assert_allclose((R.generator() @ rho.ravel()).reshape(7, 7), _operator_form(system, env, rho), rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("secular", [False, True])
def test_trace_preserving_and_hermitian(secular):
    system, env, _ = fmo()
    R = redfield_tensor(system, env, secular=secular).tensor
    np.testing.assert_allclose(np.einsum("aacd->cd", R), 0.0, atol=1e-14)
    np.testing.assert_allclose(R, np.conj(np.transpose(R, (1, 0, 3, 2))), atol=1e-15)


def test_secular_steady_state_is_boltzmann():
    system, env, _ = fmo(temperature=100.0)
    R = redfield_tensor(system, env, secular=True)
    K = R.population_rates()
    w, v = np.linalg.eig(K)
    p = np.real(v[:, np.argmin(np.abs(w))])
    p /= p.sum()
    boltz = np.exp(-(R.energies - R.energies[0]) / UNITS.kT(100.0))
    np.testing.assert_allclose(p, boltz / boltz.sum(), rtol=1e-8)


@given(st.floats(10.0, 400.0), st.floats(20.0, 500.0))
def test_dimer_transfer_equals_twice_relaxation_rate(lam, T):
    system, env = dimer(lam, 50.0, 0.0, T)
    K = redfield_tensor(system, env).population_rates()
    # dressed gap 150, coupling 2 x 100
    g_r, _ = dephasing_rates(150.0, 200.0, env.site_density(0), T)
    assert K[0, 1] + K[1, 0] == pytest.approx(2 * g_r, rel=1e-10)


def test_secular_mask_pairs_equal_gaps():
    m = secular_mask([0.0, 1.0, 2.0])
    assert m[0, 1, 1, 2] and m[0, 0, 2, 2] and not m[0, 1, 0, 2]


def test_secular_propagation_decouples_populations_from_coherences():
    system, env = dimer()
    R = redfield_tensor(system, env, secular=True)
    rho0 = np.diag([0.3, 0.7]).astype(complex)
    traj = redfield_propagate(rho0, R, 200.0, 1.0)
    assert np.max(np.abs(traj.states[:, 0, 1])) == 0.0
    assert traj.trace_drift() < 1e-12


def test_zero_coupling_gives_no_relaxation():
    system, env = dimer(0.0)
    env = Environment.uniform(2, SpectralDensity(), 277.0)
    assert np.all(redfield_tensor(system, env).tensor == 0)


def test_block_diagonal_extended_basis():
    system, env = dimer()
    Hs = site_hamiltonian(system, env)
    H = np.zeros((4, 4))
    H[1:3, 1:3] = Hs
    H[3, 3] = np.trace(Hs)
    occ = [[0, 1, 0, 1], [0, 0, 1, 1]]
    R = redfield_tensor(H, env, site_occupation=occ, blocks=[slice(0, 1), slice(1, 3), slice(3, 4)])
    # single-exciton block reproduces the plain tensor
    ref = redfield_tensor(system, env)
    np.testing.assert_allclose(R.tensor[1:3, 1:3, 1:3, 1:3], ref.tensor, atol=1e-16)
    H[0, 1] = 1.0
    H[1, 0] = 1.0
    with pytest.raises(ValidationError, match="block diagonal"):
        redfield_tensor(H, env, site_occupation=occ, blocks=[slice(0, 1), slice(1, 3), slice(3, 4)])


def test_occupation_shape_validated():
    system, env = dimer()
    with pytest.raises(ValidationError, match="site occupation"):
        redfield_tensor(np.eye(3), env)
