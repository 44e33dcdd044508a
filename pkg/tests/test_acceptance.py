"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (collected again in
the terminal summary) and then asserts the same condition.
"""

import io
from contextlib import redirect_stdout
from fractions import Fraction

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from conftest import FMO_H, ORTHOGONAL_DIMER_DIPOLES, dimer, fmo
from openexciton.averaging import ALL_PARALLEL, DOUBLE_CROSSED, cklmn
from openexciton.bath import converge_matsubara, reorganization_energy
from openexciton.cli import main
from openexciton.config import parse_config, reference_listing, serialize
from openexciton.model import (
    DipoleModel,
    Environment,
    ExcitonSystem,
    SpectralDensity,
    build_two_exciton,
    diagonalize,
    dressed_site_energies,
    site_hamiltonian,
)
from openexciton.output import read_table, write_outputs
from openexciton.propagators import (
    HEOMSolver,
    enumerate_hierarchy,
    foerster_rates,
    rate_propagate,
    redfield_tensor,
)
from openexciton.spectroscopy import (
    PATHWAYS,
    ResponseCalculator,
    combine,
    fwhm,
    linear_absorption,
    make_dynamics,
    transform_2d,
)
from openexciton.studies import HeomSettings, exciton_trajectory, lifetimes, thermalization_sweep
from openexciton.tasks import derived_quantities, run_task
from openexciton.units import SPEED_OF_LIGHT_CM_PER_FS


def _native_bin(t_max):
    """Frequency resolution 1/(c T) in cm^-1 of a record of length T fs."""
    return 1.0 / (SPEED_OF_LIGHT_CM_PER_FS * t_max)


def _local_maxima(y, count):
    idx = [i for i in range(1, len(y) - 1) if y[i] > y[i - 1] and y[i] >= y[i + 1]]
    return sorted(sorted(idx, key=lambda i: -y[i])[:count])


def _isotropic_responses(system, env, dipoles, t2s, n_t, dt, substeps, pathways=tuple(PATHWAYS), depth=3):
    manifold = build_two_exciton(system, dipoles, dressed_site_energies(system, env))
    dyn = make_dynamics(manifold, env, "heom", depth, 1)
    average = cklmn(ALL_PARALLEL)
    grids = ResponseCalculator(dyn, dipoles).compute(list(pathways), average.components, t2s, n_t, dt, substeps)
    iso = {}
    for (p, c, t2), g in grids.items():
        iso[(p, t2)] = iso.get((p, t2), 0.0) + average.coefficients[c] * g.values
    return iso, dyn.frame


def _spectrum(iso, names, t2, dt, frame):
    parts = []
    for kind in ("RP", "NR"):
        members = [p for p in names if PATHWAYS[p].kind == kind]
        if members:
            parts.append(transform_2d(sum(iso[(p, t2)] for p in members), kind, dt, frame))
    return combine(parts)


# ---------------------------------------------------------------- 1


def test_criterion_01_reorganization_identity(report):
    errs = []
    for shift in (0.0, 420.0):
        lam = reorganization_energy(SpectralDensity.drude_lorentz(35.0, 50.0, shift))
        errs.append(abs(lam - 35.0) / 35.0)
    ok = max(errs) <= 1e-6
    report(1, ok, f"relative errors Omega=0: {errs[0]:.2e}, Omega=420: {errs[1]:.2e} (tol 1e-6)")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_02_correlation_decomposition(report):
    density = SpectralDensity.drude_lorentz(35.0, 50.0)
    parts = []
    ok = True
    for T in (277.0, 100.0):
        rep = converge_matsubara(density, T, t_max=1000.0)
        rel = rep.error / rep.reference
        ok &= rep.converged and rel <= 0.01
        parts.append(f"T={T:g} K: M={rep.matsubara}, err/|C(t_min)|={rel:.2e}")
    report(2, ok, "; ".join(parts) + " (tol 1e-2, t in [1 fs, 1 ps])")
    assert ok


# ---------------------------------------------------------------- 3, 4


def test_criterion_03_heom_conservation(report):
    system, env = dimer()
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    traj = HEOMSolver.from_system(system, env, depth=4, matsubara=2).propagate(rho0, 1000.0, 1.0)
    drift, herm = traj.trace_drift(), traj.hermiticity_defect()
    ok = drift <= 1e-8 and herm <= 1e-9
    report(3, ok, f"trace drift {drift:.1e} (tol 1e-8), Hermiticity defect {herm:.1e} (tol 1e-9)")
    assert ok


def test_criterion_04_thermal_fixed_point(report):
    system, env = dimer()
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    traj = exciton_trajectory(system, env, rho0, 5000.0, HeomSettings(depth=4, matsubara=2, dt=1.0), stride=100)
    upper = traj.populations[-1, 1]
    kT = 0.6950348 * 277.0
    boltzmann = np.exp(-250.0 / kT) / (1.0 + np.exp(-250.0 / kT))
    ok = abs(upper - 0.215) <= 0.02
    report(4, ok, f"upper-exciton population at 5 ps {upper:.4f} (Boltzmann {boltzmann:.4f}; target 0.215 +- 0.02)")
    assert ok


# ---------------------------------------------------------------- 5


@pytest.mark.slow
def test_criterion_05_weak_coupling_equivalence(report):
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    devs = {}
    for lam, settings in ((2.0, HeomSettings(depth=4, matsubara=1, dt=1.0)), (150.0, HeomSettings(depth=6, matsubara=1, dt=0.5))):
        system, env = dimer(lam)
        h = exciton_trajectory(system, env, rho0, 1000.0, settings, stride=int(round(2.0 / settings.dt)))
        r = exciton_trajectory(system, env, rho0, 1000.0, HeomSettings(dt=2.0), method="redfield")
        devs[lam] = float(np.max(np.abs(h.populations - r.populations)))
    ok = devs[2.0] <= 0.02 and devs[150.0] > 0.05
    report(5, ok, f"max |HEOM - Redfield| lambda=2: {devs[2.0]:.4f} (tol 0.02); lambda=150: {devs[150.0]:.4f} (needs > 0.05)")
    assert ok


# ---------------------------------------------------------------- 6


@pytest.mark.slow
def test_criterion_06_optimal_reorganization(report):
    system = ExcitonSystem.from_hamiltonian(FMO_H)
    lams = (20.0, 60.0, 110.0, 160.0, 200.0)
    times = thermalization_sweep(system, lams, 50.0, 277.0, t_end=1500.0, settings=HeomSettings(3, 1, 1.0))
    best = min(times, key=times.get)
    ok = 70.0 <= best <= 150.0 and times[20.0] > times[best] and times[200.0] > times[best]
    table = ", ".join(f"{lam:g}: {t:.0f} fs" for lam, t in times.items())
    report(6, ok, f"crossing times {table}; minimum at lambda={best:g} (needs interior, in [70, 150])")
    assert ok


# ---------------------------------------------------------------- 7


@pytest.mark.slow
def test_criterion_07_prolonged_coherence(report):
    settings = HeomSettings(depth=6, matsubara=1, dt=0.5)
    out = {}
    for name, shift in (("DL,0", 0.0), ("SDL,420", 420.0)):
        system, env = dimer(35.0, 50.0, shift)
        out[name] = lifetimes(system, env, initial_site=1, t_end=4000.0, settings=settings)
    dl, sdl = out["DL,0"], out["SDL,420"]
    ratio = sdl.coherence / dl.coherence
    rel = abs(sdl.relaxation - dl.relaxation) / dl.relaxation
    ok = ratio >= 2.0 and rel <= 0.30
    report(
        7, ok,
        f"coherence 1/e: DL {dl.coherence:.0f} fs, SDL {sdl.coherence:.0f} fs (ratio {ratio:.2f}, needs >= 2); "
        f"relaxation {dl.relaxation:.0f} vs {sdl.relaxation:.0f} fs (diff {100 * rel:.0f}%, tol 30%)",
    )
    assert ok


# ---------------------------------------------------------------- 8


@pytest.mark.filterwarnings("ignore:polarization not decayed")  # sub-percent tail, below one bin
def test_criterion_08_linear_absorption_peaks(report):
    system, env = dimer(5.0)
    dipoles = DipoleModel([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    t_max = 2000.0
    spec = linear_absorption(system, env, dipoles, "heom", t_max=t_max, dt=1.0, depth=3, matsubara=1)
    _, E = diagonalize(site_hamiltonian(system, env))
    peaks = spec.omega[_local_maxima(spec.intensity, 2)]
    bin_ = _native_bin(t_max)
    dimer_ok = np.all(np.abs(np.sort(peaks) - E) <= bin_)

    fsys, fenv, fdip = fmo()
    fspec = linear_absorption(fsys, fenv, fdip, "heom", t_max=1200.0, dt=2.0, depth=3, matsubara=1)
    mono_env = Environment.uniform(1, fenv.baths[0], fenv.temperature)
    mono = linear_absorption(ExcitonSystem.from_hamiltonian([[0.0]]), mono_env, DipoleModel([[1.0, 0.0, 0.0]]), "heom", 1200.0, 2.0, 3, 1)
    width = fwhm(mono.omega, mono.intensity)
    _, fE = diagonalize(site_hamiltonian(fsys, fenv))
    w, I = fspec.omega, fspec.intensity
    outside = (w < fE[0] - 3 * width) | (w > fE[-1] + 3 * width)
    frac = np.sum(np.abs(I[outside])) / np.sum(np.abs(I))
    fmo_ok = frac <= 0.01
    ok = bool(dimer_ok and fmo_ok)
    report(
        8, ok,
        f"dimer peaks {np.round(np.sort(peaks), 1)} vs eigenvalues {E} (bin {bin_:.1f} cm^-1); "
        f"FMO weight outside [E_min, E_max] +- 3 x {width:.0f} cm^-1: {100 * frac:.2f}% (tol 1%)",
    )
    assert ok


# ---------------------------------------------------------------- 9


@pytest.mark.slow
def test_criterion_09_two_dimensional_pipeline(report):
    n_t, dt, sub = 64, 10.0, 4
    system, env = dimer(35.0)
    iso, frame = _isotropic_responses(system, env, ORTHOGONAL_DIMER_DIPOLES, [0.0, 40.0], n_t, dt, sub)
    _, E = diagonalize(site_hamiltonian(system, env))
    bin_ = _native_bin(n_t * dt)
    diag_ok, sign_ok, notes = True, True, []
    for t2 in (0.0, 40.0):
        total = _spectrum(iso, list(PATHWAYS), t2, dt, frame)
        w = total.omega1
        peaks = np.sort(w[_local_maxima(np.diag(total.absorptive()), 2)])
        diag_ok &= peaks.size == 2 and bool(np.all(np.abs(peaks - E) <= bin_))
        esa = _spectrum(iso, ["esarp", "esanr"], t2, dt, frame).absorptive()
        gbse = _spectrum(iso, ["gbrp", "serp", "gbnr", "senr"], t2, dt, frame).absorptive()
        i, j = (int(np.argmin(np.abs(w - e))) for e in E)
        for a, b in ((i, j), (j, i)):  # values[i3, i1]
            sign_ok &= np.sign(esa[a, b]) == -np.sign(gbse[a, b]) != 0
        notes.append(f"T2={t2:g}: diagonal maxima {np.round(peaks, 1)}")

    s0, e0 = dimer(0.0)
    gb, _ = _isotropic_responses(s0, e0, ORTHOGONAL_DIMER_DIPOLES, [0.0, 40.0], n_t, dt, sub, pathways=("gbrp", "gbnr"))
    gb_dev = max(np.max(np.abs(gb[(p, 40.0)] - gb[(p, 0.0)])) / np.max(np.abs(gb[(p, 0.0)])) for p in ("gbrp", "gbnr"))
    gb_ok = gb_dev <= 1e-10
    ok = bool(diag_ok and sign_ok and gb_ok)
    report(
        9, ok,
        f"{'; '.join(notes)} vs eigenvalues {E} (bin {bin_:.1f}); ESA opposite to GB+SE at both cross peaks: {sign_ok}; "
        f"GB T2-dependence at lambda=0: {gb_dev:.1e}",
    )
    assert ok


# ---------------------------------------------------------------- 10


def test_criterion_10_table_regeneration(report):
    parallel = cklmn(ALL_PARALLEL)
    crossed = cklmn(DOUBLE_CROSSED)
    par_ok = len(parallel.exact) == len(parallel) == 21
    par_ok &= all(v * 60 == (12 if len(set(k)) == 1 else 4) for k, v in parallel.exact.items())
    cross_ok = len(crossed.exact) == len(crossed) == 12
    cross_ok &= all(abs(v * 60) == 5 for v in crossed.exact.values())
    cross_ok &= all(isinstance(v, Fraction) and (v * 60).denominator == 1 for v in crossed.exact.values())
    ok = bool(par_ok and cross_ok)
    report(
        10, ok,
        f"all-parallel: {len(parallel)} components, x60 = {sorted({int(v * 60) for v in parallel.exact.values()})}; "
        f"double-crossed: {len(crossed)} components, x60 = {sorted({int(v * 60) for v in crossed.exact.values()})}",
    )
    assert ok


# ---------------------------------------------------------------- 11


@pytest.mark.filterwarnings("ignore:polarization not decayed")  # truncation is identical for both orientations
def test_criterion_11_rotational_invariance(report):
    R = Rotation.random(random_state=7).as_matrix()
    fsys, fenv, fdip = fmo()
    a = linear_absorption(fsys, fenv, fdip, "heom", t_max=600.0, dt=2.0).intensity
    b = linear_absorption(fsys, fenv, fdip.rotated(R), "heom", t_max=600.0, dt=2.0).intensity
    lin = np.max(np.abs(a - b)) / np.max(np.abs(a))

    system, env = dimer()
    dip = DipoleModel([[1.0, 0.2, -0.3], [0.1, 1.0, 0.4]])
    r1, _ = _isotropic_responses(system, env, dip, [20.0], 24, 10.0, 4)
    r2, _ = _isotropic_responses(system, env, dip.rotated(R), [20.0], 24, 10.0, 4)
    dev2 = max(np.max(np.abs(r1[k] - r2[k])) / np.max(np.abs(r1[k])) for k in r1)
    ok = lin <= 1e-8 and dev2 <= 1e-6
    report(11, ok, f"linear FMO relative change {lin:.1e} (tol 1e-8); dimer 2DES relative change {dev2:.1e} (tol 1e-6)")
    assert ok


# ---------------------------------------------------------------- 12


def test_criterion_12_ado_counting(report):
    direct = enumerate_hierarchy([1] * 7, 3).n_ados
    cfg = parse_config(reference_listing().replace("matsubaras=1", "matsubaras=0"))
    from_config = derived_quantities(cfg)["n_ados"]
    ok = direct == 120 and from_config == 120
    report(12, ok, f"7 baths x 1 term, depth 3: enumerated {direct}, from config {from_config} (expected 120)")
    assert ok


# ---------------------------------------------------------------- 13


@pytest.mark.slow
def test_criterion_13_config_fidelity(report, tmp_path):
    text = reference_listing()
    cfg = parse_config(text)
    listing = tmp_path / "listing.cfg"
    listing.write_text(text)
    out = io.StringIO()
    with redirect_stdout(out):
        code = main(["--config", str(listing), "--dry-run"])
    dry = dict(line.split(": ", 1) for line in out.getvalue().splitlines())
    dry_ok = code == 0 and dry["n_states"] == "29" and dry["grids_per_delay"] == "126" and "memory_bytes" in dry

    reduced = serialize(cfg).replace("steps_t_1=200", "steps_t_1=50").replace("steps_t_3=200", "steps_t_3=50")
    records = run_task(parse_config(reduced))
    paths = write_outputs(records, tmp_path / "out")
    target = tmp_path / "out" / "fmo_0000_400fs.dat"
    header, columns, data = read_table(target)
    run_ok = target in paths and data.shape == (2500, 5) and np.all(np.isfinite(data)) and header["N"] == "50"
    ok = bool(dry_ok and run_ok)
    report(
        13, ok,
        f"dry run: {dry['n_states']} states, {dry['n_ados']} ADOs, {dry['grids_per_delay']} grids/delay, "
        f"memory {dry['memory_bytes']}; 50x50 run wrote {target.name} {data.shape}",
    )
    assert ok


# ---------------------------------------------------------------- 14


def test_criterion_14_foerster_properties(report):
    system, env = dimer()
    rates = foerster_rates(system, env)
    col = float(np.max(np.abs(rates.K.sum(axis=0))))
    sym = ExcitonSystem.from_hamiltonian([[0.0, 100.0], [100.0, 0.0]])
    K = foerster_rates(sym, env).K
    sym_dev = abs(K[0, 1] - K[1, 0]) / K[0, 1]
    p = rate_propagate([0.0, 1.0], rates, np.linspace(0.0, 1e4, 51))
    cons = float(np.max(np.abs(p.sum(axis=1) - 1.0)))
    ok = col <= 1e-12 and sym_dev <= 1e-12 and cons <= 1e-10
    report(14, ok, f"column sums {col:.1e} (tol 1e-12); symmetric dimer asymmetry {sym_dev:.1e}; population drift {cons:.1e} (tol 1e-10)")
    assert ok
