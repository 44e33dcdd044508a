"""Turn a parsed configuration into computed output records."""

import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .averaging import DisorderModel, TensorAverage, cklmn, sample_disorder
from .bath import decompose_exponentials
from .config import ConfigWarning, RunConfig
from .model import (
    BathMap,
    DipoleModel,
    Environment,
    ExcitonSystem,
    SpectralDensity,
    ValidationError,
    build_two_exciton,
    diagonalize,
    dressed_site_energies,
    n_two_exciton_states,
    site_hamiltonian,
)
from .propagators import foerster_rates, heom_propagate, hierarchy_size, memory_estimate, rate_propagate
from .propagators.redfield import redfield_propagate, redfield_tensor
from .spectroscopy import PATHWAYS, ResponseCalculator, combine, linear_absorption, make_dynamics, transform_2d

DEFAULT_MEMORY_CAP = 4 * 1024**3  # bytes
_SPECTRAL_METHOD = {"heom": "heom", "redfield_full": "redfield", "redfield_secular": "redfield_secular"}

FOURIER_LINEAR = "I(w) = Re sum_t w_t P(t) exp(+i w t) dt, w_0 = 1/2, zero padded"
FOURIER_2D = {
    "RP": "S(w3,w1) = dt^2 sum S(T3,T1) exp(+i w3 T3 - i w1 T1), plain DFT",
    "NR": "S(w3,w1) = dt^2 sum S(T3,T1) exp(+i w3 T3 + i w1 T1), plain DFT",
    "RP+NR": "sum of the RP and NR transforms",
}


class MemoryRefused(ValidationError):
    """Estimated state storage exceeds the configured cap."""


@dataclass
class OutputRecord:
    """One output file: metadata header plus a real-valued table.

    ``columns`` names every column with its unit; ``block`` > 0 inserts a
    blank line every ``block`` rows (grid files, one block per omega1).
    """

    name: str
    kind: str
    columns: list
    data: np.ndarray
    metadata: dict = field(default_factory=dict)
    block: int = 0

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.size and self.data.shape[1] != len(self.columns):
            raise ValidationError(f"{self.name}: {self.data.shape[1]} data columns for {len(self.columns)} names")
        if "units" not in self.metadata or "axes" not in self.metadata:
            raise ValidationError(f"{self.name}: record must declare units and axes")


# ---------------------------------------------------------------- model construction


def build_model(cfg: RunConfig):
    """ExcitonSystem, Environment and DipoleModel (or None) from a configuration."""
    system = ExcitonSystem.from_hamiltonian(np.array(cfg.system.hamiltonian, dtype=float))
    b = cfg.baths
    densities = [
        SpectralDensity.drude_lorentz(float(lam), float(inv), float(om))
        for lam, inv, om in zip(b.reorganization, b.invnu, b.Omega)
    ]
    assignments = [[] for _ in range(cfg.n_sites)]
    for bath, sites in enumerate(b.coupling):
        site = sites[0] if isinstance(sites, list) else sites
        assignments[site].append(bath)
    environment = Environment(densities, BathMap(tuple(tuple(a) for a in assignments)), b.temperature)
    d = cfg.dipole
    dipoles = None
    if d.directions:
        dipoles = DipoleModel(d.directions, d.strengths or None, d.centers or None)
    return system, environment, dipoles


def tensor_average(cfg: RunConfig) -> TensorAverage:
    """Isotropic-average coefficients for the configured polarization sequence.

    Configured ``tensor_components``/``tensor_prefactors`` select the
    components; each prefactor within 1e-5 of the computed value is replaced
    by the exact rational, any other value is used as given with a warning.
    """
    computed = cklmn(tuple(float(a) for a in cfg.spectra.polarization))
    d = cfg.dipole
    if not d.tensor_components:
        return computed
    coeffs, exact = {}, {}
    listed = set()
    for comp, value in zip(d.tensor_components, d.tensor_prefactors):
        comp = tuple(comp)
        listed.add(comp)
        ref = computed.coefficients.get(comp, 0.0)
        if abs(float(value) - ref) <= 1e-5:
            if ref != 0.0:
                coeffs[comp] = ref
                if comp in computed.exact:
                    exact[comp] = computed.exact[comp]
        else:
            warnings.warn(
                f"tensor prefactor {value} for component {comp} differs from the computed {ref:.6g}; using the configured value",
                ConfigWarning,
                stacklevel=2,
            )
            coeffs[comp] = float(value)
            exact[comp] = Fraction(str(value))
    missing = sorted(set(computed.coefficients) - listed)
    if missing:
        warnings.warn(f"configured tensor components omit non-zero components {missing}", ConfigWarning, stacklevel=2)
    return TensorAverage(coeffs, exact)


def delays(cfg: RunConfig) -> list:
    """T2 values in fs: explicit ``delays`` or ``steps_t_delay`` solver steps."""
    sp = cfg.spectra
    if sp.delays:
        out = []
        for t in sp.delays:
            if isinstance(t, bool) or not isinstance(t, (int, float)) or t < 0:
                raise ValidationError(f"delays must be non-negative numbers, got {t!r}")
            out.append(float(t))
        return out
    return [sp.steps_t_delay * cfg.solver.dt_fs]


def _n_expansion_terms(environment: Environment, matsubara: int) -> int:
    return sum(len(decompose_exponentials(d, environment.temperature, matsubara)) for d in environment.baths if d.total_reorganization > 0)


def derived_quantities(cfg: RunConfig) -> dict:
    """Sizes that follow from the configuration without propagating anything."""
    system, environment, _ = build_model(cfg)
    task = cfg.program.task
    method = cfg.program.method
    N = cfg.n_sites
    n_states = {"population_dynamics": N, "linear_absorption": N + 1}.get(task, n_two_exciton_states(N))
    info = {"task": task, "method": method, "n_sites": N, "n_states": n_states, "n_baths": cfg.baths.number}
    if method == "heom":
        K = _n_expansion_terms(environment, cfg.baths.matsubaras)
        info["expansion_terms"] = K
        info["n_ados"] = hierarchy_size(K, cfg.system.ado_depth)
        info["memory_bytes"] = memory_estimate(info["n_ados"], n_states)
    elif method == "foerster":
        info["n_ados"] = 0
        info["memory_bytes"] = N * N * 8
    else:
        info["n_ados"] = 1
        info["memory_bytes"] = n_states**4 * 16
    dt = cfg.solver.dt_fs
    info["dt_fs"] = dt
    info["integrator_step_fs"] = dt / cfg.solver.substeps
    if task == "population_dynamics":
        info["n_time_points"] = cfg.solver.steps // cfg.program.observe_steps + 1
        info["t_end_fs"] = cfg.solver.steps * dt
    elif task == "linear_absorption":
        info["n_time_points"] = cfg.spectra.steps_t_1 + 1
        info["t_end_fs"] = cfg.spectra.steps_t_1 * dt
    else:
        n_comp = len(tensor_average(cfg))
        info["tensor_components"] = n_comp
        info["pathways"] = len(cfg.spectra.pathways)
        info["grids_per_delay"] = n_comp * len(cfg.spectra.pathways)
        info["grid_shape"] = (cfg.spectra.steps_t_3, cfg.spectra.steps_t_1)
        info["delays_fs"] = delays(cfg)
    info["disorder_samples"] = cfg.disorder.samples if cfg.disorder.sigma > 0 else 1
    return info


def check_memory(info: dict, cap: int = DEFAULT_MEMORY_CAP):
    if info["memory_bytes"] > cap:
        raise MemoryRefused(
            f"estimated state storage {info['memory_bytes'] / 1024**2:.1f} MiB "
            f"({info['n_ados']} ADOs x {info['n_states']}^2 states x 16 B) exceeds the cap of {cap / 1024**2:.1f} MiB"
        )


# ---------------------------------------------------------------- helpers


def _realizations(cfg: RunConfig, system: ExcitonSystem):
    dz = cfg.disorder
    if dz.sigma == 0:
        return [system]
    return sample_disorder(DisorderModel(dz.sigma, dz.samples, dz.seed), system)


def _map_samples(fn, samples, threads):
    if threads <= 1 or len(samples) == 1:
        return [fn(s) for s in samples]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, samples))


def _metadata(cfg, info, seed, **extra):
    meta = {
        "task": cfg.program.task,
        "method": cfg.program.method,
        "config_hash": cfg.digest(),
        "seed": seed,
    }
    if info.get("n_ados"):
        meta["ado_depth"] = cfg.system.ado_depth
        meta["matsubaras"] = cfg.baths.matsubaras
        meta["n_ados"] = info["n_ados"]
    if info["disorder_samples"] > 1:
        meta["disorder"] = f"sigma={cfg.disorder.sigma} cm^-1, samples={cfg.disorder.samples}"
    meta.update(extra)
    return meta


def _observation_name(cfg, index, t2=None, n_delays=1):
    obs = cfg.program.observations
    if index >= len(obs):
        return None
    name = obs[index][1]
    if t2 is None or n_delays == 1:
        return name
    tag = f"{t2:g}fs"
    if re.search(r"\d+(\.\d+)?fs", name):
        return re.sub(r"\d+(\.\d+)?fs", tag, name, count=1)
    stem, dot, ext = name.rpartition(".")
    return f"{stem}_{tag}.{ext}" if dot else f"{name}_{tag}"


# ---------------------------------------------------------------- tasks


def _initial_state(cfg, system, environment):
    N = system.n_sites
    A, _ = diagonalize(site_hamiltonian(system, environment))
    if cfg.program.initial_exciton >= 0:
        v = A[cfg.program.initial_exciton]
        return np.outer(v, v).astype(complex), A
    rho = np.zeros((N, N), dtype=complex)
    rho[cfg.program.initial_site, cfg.program.initial_site] = 1.0
    return rho, A


def _population_sample(cfg, environment):
    method = cfg.program.method
    dt = cfg.solver.dt_fs
    sub = cfg.solver.substeps
    t_end = cfg.solver.steps * dt
    stride = cfg.program.observe_steps

    def run(system):
        rho0, A = _initial_state(cfg, system, environment)
        if method == "foerster":
            rates = foerster_rates(system, environment, cfg.program.foerster_prefactor)
            times = dt * stride * np.arange(cfg.solver.steps // stride + 1)
            return {"times": times, "p": rate_propagate(np.real(np.diag(rho0)), rates, times)}
        if method == "heom":
            traj = heom_propagate(
                system, environment, rho0, t_end, dt / sub, cfg.system.ado_depth, cfg.baths.matsubaras, stride * sub
            )
        else:
            R = redfield_tensor(system, environment, secular=(method == "redfield_secular"))
            traj = redfield_propagate(A @ rho0 @ A.T, R, t_end, dt / sub, stride * sub)
            traj = traj.in_basis(A.T, "site")
        return {"times": traj.times, "rho": traj.states, "exc": traj.in_basis(A).populations}

    return run


def _mean(results, key):
    return np.mean([r[key] for r in results], axis=0)


def run_population_dynamics(cfg, info, seed, threads=1):
    system, environment, _ = build_model(cfg)
    results = _map_samples(_population_sample(cfg, environment), _realizations(cfg, system), threads)
    times = results[0]["times"]
    N = system.n_sites
    if cfg.program.method == "foerster":
        p = _mean(results, "p")
        meta = _metadata(cfg, info, seed, units="time fs; populations dimensionless", axes="rows: time; columns: site populations")
        cols = ["time_fs"] + [f"p_site{m}" for m in range(N)]
        name = _observation_name(cfg, 0) or "populations.dat"
        return [OutputRecord(name, "populations", cols, np.column_stack([times, p]), meta)]
    rho = _mean(results, "rho")
    cols = ["time_fs"]
    flat = []
    for i in range(N):
        for j in range(N):
            cols += [f"rho_{i}{j}_re", f"rho_{i}{j}_im"]
            flat += [rho[:, i, j].real, rho[:, i, j].imag]
    meta = _metadata(
        cfg, info, seed, units="time fs; density matrix dimensionless", axes="rows: time; columns: site-basis matrix entries",
        basis="site",
    )
    name = _observation_name(cfg, 0) or "populations.dat"
    exc = _mean(results, "exc")
    meta_exc = _metadata(
        cfg, info, seed, units="time fs; populations dimensionless",
        axes="rows: time; columns: exciton populations, ascending energy of the dressed Hamiltonian", basis="exciton",
    )
    return [
        OutputRecord(name, "populations", cols, np.column_stack([times] + flat), meta),
        OutputRecord(
            "populations_exciton.dat", "populations", ["time_fs"] + [f"p_exc{k}" for k in range(N)],
            np.column_stack([times, exc]), meta_exc,
        ),
    ]


def _frame(system, environment):
    return float(np.mean(dressed_site_energies(system, environment)))


def run_linear_absorption(cfg, info, seed, threads=1):
    system, environment, dipoles = build_model(cfg)
    dt = cfg.solver.dt_fs
    frame = _frame(system, environment)
    t_max = cfg.spectra.steps_t_1 * dt

    def run(sample):
        spec = linear_absorption(
            sample, environment, dipoles, _SPECTRAL_METHOD[cfg.program.method], t_max, dt,
            cfg.system.ado_depth, cfg.baths.matsubaras, cfg.spectra.zero_pad, frame, cfg.solver.substeps,
        )
        return {"omega": spec.omega, "I": spec.intensity, "P": spec.polarization}

    results = _map_samples(run, _realizations(cfg, system), threads)
    omega = results[0]["omega"]
    intensity = _mean(results, "I")
    n = cfg.spectra.steps_t_1 + 1
    meta = _metadata(
        cfg, info, seed, units="omega cm^-1; intensity arbitrary (dipole strength^2 fs)",
        axes="rows: omega ascending", dt_fs=dt, N=n, zero_pad=cfg.spectra.zero_pad,
        fourier=FOURIER_LINEAR, frame_cm=frame,
    )
    name = _observation_name(cfg, 0) or "linear_absorption.dat"
    return [OutputRecord(name, "linear_spectrum", ["omega_cm", "absorption"], np.column_stack([omega, intensity]), meta)]


def _grid_record(name, spec, meta):
    w1, w3 = np.meshgrid(spec.omega1, spec.omega3, indexing="xy")  # values[i3, i1]
    data = np.column_stack([
        w1.T.ravel(), w3.T.ravel(), spec.absorptive().T.ravel(), spec.values.real.T.ravel(), spec.values.imag.T.ravel(),
    ])
    cols = ["omega1_cm", "omega3_cm", "absorptive", "re", "im"]
    return OutputRecord(name, "spectrum_2d", cols, data, meta, block=spec.omega3.size)


def _response_record(name, values, dt, meta):
    n = values.shape[0]
    t = dt * np.arange(n)
    T1, T3 = np.meshgrid(t, t, indexing="xy")
    data = np.column_stack([T1.T.ravel(), T3.T.ravel(), values.real.T.ravel(), values.imag.T.ravel()])
    return OutputRecord(name, "response", ["t1_fs", "t3_fs", "re", "im"], data, meta, block=n)


def run_two_dimensional_spectra(cfg, info, seed, threads=1, on_progress=None):
    system, environment, dipoles = build_model(cfg)
    dt = cfg.solver.dt_fs
    n_t = cfg.spectra.steps_t_1
    t2s = delays(cfg)
    average = tensor_average(cfg)
    comps = average.components
    pathways = list(cfg.spectra.pathways)
    frame = _frame(system, environment)
    keep_components = cfg.spectra.write_components

    def run(sample):
        manifold = build_two_exciton(sample, dipoles, dressed_site_energies(sample, environment))
        dyn = make_dynamics(
            manifold, environment, _SPECTRAL_METHOD[cfg.program.method], cfg.system.ado_depth, cfg.baths.matsubaras, frame
        )
        grids = ResponseCalculator(dyn, dipoles).compute(
            pathways, comps, t2s, n_t, dt, cfg.solver.substeps, on_grid=on_progress
        )
        iso = {}
        for (p, c, t2), g in grids.items():
            key = (p, t2)
            iso[key] = iso.get(key, 0.0) + average.coefficients[c] * g.values
        out = {"iso": iso}
        if keep_components:
            out["raw"] = {k: g.values for k, g in grids.items()}
        return out

    results = _map_samples(run, _realizations(cfg, system), threads)
    n_samples = len(results)
    iso = {k: sum(r["iso"][k] for r in results) / n_samples for k in results[0]["iso"]}
    records = []
    for t2 in sorted({t for _, t in iso}):
        tag = f"{t2:g}fs"
        base = dict(dt_fs=dt, N=n_t, t2_fs=t2, frame_cm=frame, pathways=",".join(pathways))
        parts = []
        for kind in ("RP", "NR"):
            members = [p for p in pathways if PATHWAYS[p].kind == kind]
            if not members:
                continue
            S = sum(iso[(p, t2)] for p in members)
            spec = transform_2d(S, kind, dt, frame, label=kind)
            parts.append(spec)
            meta = _metadata(
                cfg, info, seed, units="omega cm^-1; signal arbitrary", axes="rows: omega1 blocks, omega3 inside a block",
                fourier=FOURIER_2D[kind], absorptive="Re(-i S)", **base,
            )
            records.append(_grid_record(f"spectrum_{kind.lower()}_{tag}.dat", spec, meta))
        total = combine(parts, "RP+NR") if len(parts) > 1 else parts[0]
        meta = _metadata(
            cfg, info, seed, units="omega cm^-1; signal arbitrary", axes="rows: omega1 blocks, omega3 inside a block",
            fourier=FOURIER_2D[total.kind] if total.kind in FOURIER_2D else FOURIER_2D["RP+NR"],
            absorptive="Re(-i S)", **base,
        )
        name = _observation_name(cfg, 0, t2, len(t2s)) or f"spectrum_2d_{tag}.dat"
        records.append(_grid_record(name, total, meta))
        for p in pathways:
            meta = _metadata(
                cfg, info, seed, units="time fs; response arbitrary, rotating frame", axes="rows: t1 blocks, t3 inside a block",
                pathway=p, **base,
            )
            records.append(_response_record(f"response_{p}_{tag}.dat", iso[(p, t2)], dt, meta))
        if keep_components:
            for (p, c, t), _ in sorted(results[0]["raw"].items()):
                if t != t2:
                    continue
                values = sum(r["raw"][(p, c, t)] for r in results) / n_samples
                meta = _metadata(
                    cfg, info, seed, units="time fs; response arbitrary, rotating frame",
                    axes="rows: t1 blocks, t3 inside a block", pathway=p, components="".join(map(str, c)), **base,
                )
                records.append(_response_record(f"response_{p}_{''.join(map(str, c))}_{tag}.dat", values, dt, meta))
    return records


_RUNNERS = {
    "population_dynamics": run_population_dynamics,
    "linear_absorption": run_linear_absorption,
    "two_dimensional_spectra": run_two_dimensional_spectra,
}


def run_task(cfg: RunConfig, seed: int = None, threads: int = 1, memory_cap: int = DEFAULT_MEMORY_CAP) -> list:
    """Run the configured task and return its output records.

    Raises
    ------
    MemoryRefused
        Before any allocation, when the storage estimate exceeds ``memory_cap``.
    """
    if seed is not None:
        cfg = cfg.with_overrides(seed=seed)
    info = derived_quantities(cfg)
    check_memory(info, memory_cap)
    return _RUNNERS[cfg.program.task](cfg, info, cfg.disorder.seed, threads=max(1, int(threads)))
