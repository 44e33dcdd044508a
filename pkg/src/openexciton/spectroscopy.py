"""Impulsive-limit optical response: linear absorption and third-order 2D spectra.

Propagation happens in a rotating frame: every state with ``k`` excitations
has ``k * frame`` subtracted from its energy. Such a shift commutes with the
Hamiltonian and the bath couplings, so responses are only multiplied by known
phases; frequency axes are shifted back by ``frame`` on output.

Time convention: states evolve as exp(-iHt), so a coherence |e><g| rotates
as exp(-i E t).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import (
    DipoleModel,
    Environment,
    ExcitonSystem,
    TwoExcitonManifold,
    ValidationError,
    build_two_exciton,
    dressed_site_energies,
)
from .propagators.heom import HEOMSolver
from .propagators.redfield import redfield_tensor
from .propagators.rk4 import integrate
from .units import CM_TO_RAD_FS

METHODS = ("heom", "redfield", "redfield_secular")


# ---------------------------------------------------------------- dipoles


@dataclass(frozen=True)
class DipoleOperator:
    """Raising part of the dipole operator along one Cartesian axis."""

    raising: np.ndarray
    component: int

    @property
    def lowering(self) -> np.ndarray:
        return self.raising.conj().T


def dipole_operators(manifold: TwoExcitonManifold, dipoles: DipoleModel, component: int) -> DipoleOperator:
    """mu^+ along axis ``component`` (0, 1, 2 for x, y, z).

    Connects |0> -> |m> with d_m and, when pairs are present, |m> -> |mn>
    with d_n.
    """
    if component not in (0, 1, 2):
        raise ValidationError(f"Cartesian component must be 0, 1 or 2, got {component}")
    if dipoles.n_sites != manifold.n_sites:
        raise ValidationError(f"{dipoles.n_sites} dipoles for {manifold.n_sites} sites")
    d = dipoles.vectors[:, component]
    index = {s: i for i, s in enumerate(manifold.states)}
    mu = np.zeros((manifold.n_states, manifold.n_states))
    for s, i in index.items():
        if len(s) == 1:
            mu[i, 0] = d[s[0]]
        elif len(s) == 2:
            a, b = s
            mu[i, index[(a,)]] = d[b]
            mu[i, index[(b,)]] = d[a]
    return DipoleOperator(mu, component)


def polarization_trace(state, operator) -> complex:
    """Tr(state @ operator)."""
    state = np.asarray(state)
    operator = np.asarray(operator)
    if state.shape[-1] != operator.shape[0] or state.shape[-2] != operator.shape[1]:
        raise ValidationError(f"state shape {state.shape} does not match operator shape {operator.shape}")
    return complex(np.einsum("ij,ji->", state, operator))


# ---------------------------------------------------------------- dynamics


def _excitation_number(manifold):
    return np.array([len(s) for s in manifold.states], dtype=float)


class _RedfieldBlock:
    """Redfield generator restricted to a block, with the HeomBlock interface."""

    n_ados = 1

    def __init__(self, L, shape, adjoint=False):
        self.L = L
        self.shape = shape
        self.adjoint = adjoint

    def rhs(self, y):
        flat = y.reshape(-1, self.shape[0] * self.shape[1])
        return (flat @ self.L.T).reshape(y.shape)

    def dagger(self):
        return _RedfieldBlock(self.L.conj().T.copy(), self.shape, not self.adjoint)

    def propagate(self, y0, dt, n_steps, observe=None, stride=1):
        return integrate(self.rhs, y0, dt, n_steps, observe=observe, stride=stride)


@dataclass
class Dynamics:
    """Open-system propagator on a ground/single/double manifold.

    ``to_internal`` maps operators into the basis the states are stored in
    (identity for HEOM, the block eigenbasis for Redfield).
    """

    manifold: TwoExcitonManifold
    method: str
    frame: float
    n_ados: int
    _block_factory: object = field(repr=False)
    _transform: np.ndarray = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def block(self, left: str, right: str):
        key = (left, right)
        if key not in self._cache:
            self._cache[key] = self._block_factory(self.manifold.block(left), self.manifold.block(right))
        return self._cache[key]

    def to_internal(self, op):
        if self._transform is None:
            return np.asarray(op)
        A = self._transform
        return A @ np.asarray(op) @ A.T

    def slice(self, op, rows: str, cols: str):
        """Internal-basis operator restricted to block (rows, cols)."""
        return np.ascontiguousarray(self.to_internal(op)[self.manifold.block(rows), self.manifold.block(cols)])


def make_dynamics(
    manifold: TwoExcitonManifold,
    environment: Environment,
    method: str = "heom",
    depth: int = 3,
    matsubara: int = 1,
    frame: float = None,
    redfield_matsubara: int = 400,
) -> Dynamics:
    """Build the propagator for ``method`` in ``heom``, ``redfield``, ``redfield_secular``.

    ``frame`` defaults to the mean single-exciton energy of the manifold.
    """
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; choose from {METHODS}")
    H = np.array(manifold.hamiltonian, dtype=float)
    if frame is None:
        frame = float(np.mean(np.diag(H)[manifold.singles]))
    H = H - frame * np.diag(_excitation_number(manifold))
    if method == "heom":
        solver = HEOMSolver.from_manifold(H, manifold.site_occupation, environment, depth, matsubara)
        return Dynamics(manifold, method, frame, solver.n_ados, lambda l, r: solver.block(l, r))
    blocks = [manifold.ground, manifold.singles] + ([manifold.pairs] if manifold.has_pairs else [])
    R = redfield_tensor(
        H, environment, secular=(method == "redfield_secular"), site_occupation=manifold.site_occupation,
        blocks=blocks, matsubara=redfield_matsubara,
    )
    L = R.generator().reshape((R.n,) * 4)
    n = R.n

    def factory(left, right):
        li = np.arange(n)[left]
        ri = np.arange(n)[right]
        sub = L[np.ix_(li, ri, li, ri)].reshape(li.size * ri.size, li.size * ri.size)
        return _RedfieldBlock(np.ascontiguousarray(sub), (li.size, ri.size))

    return Dynamics(manifold, method, frame, 1, factory, R.transform)


def _embed(dyn: Dynamics, matrix, batch=()):
    """Hierarchy state with ``matrix`` (shape batch + block) as physical ADO."""
    matrix = np.asarray(matrix, dtype=complex)
    y = np.zeros((dyn.n_ados,) + matrix.shape, dtype=complex)
    y[0] = matrix
    return y


# ---------------------------------------------------------------- linear absorption


@dataclass
class LinearSpectrum:
    """Absorption on the frequency grid ``omega`` (cm^-1).

    ``polarization`` is the p-summed P(t) on ``times`` in the rotating frame
    ``frame`` (multiply by exp(-i frame t) for the lab frame).
    """

    omega: np.ndarray
    intensity: np.ndarray
    times: np.ndarray
    polarization: np.ndarray
    frame: float
    zero_pad: int
    warning: str = None

    def normalized(self) -> np.ndarray:
        m = np.max(np.abs(self.intensity))
        return self.intensity / m if m > 0 else self.intensity


def half_fourier(signal, dt, zero_pad=4):
    """sum_t w_t s(t) e^{i w t} dt with w_0 = 1/2, on an ascending grid (cm^-1)."""
    s = np.asarray(signal, dtype=complex).copy()
    s[0] *= 0.5
    L = int(zero_pad) * s.size
    spec = np.fft.ifft(s, n=L) * L * dt
    freq = np.fft.fftfreq(L, d=dt) / (CM_TO_RAD_FS / (2 * np.pi))
    order = np.argsort(freq)
    return freq[order], spec[order]


def linear_polarization(dyn: Dynamics, dipoles: DipoleModel, t_max: float, dt: float, substeps: int = 1):
    """P(t) = sum_p Tr[mu_p^- sigma_0(t)] after sigma_0(0) = mu_p^+ |0><0|.

    P is sampled every ``dt`` fs; the RK4 step is ``dt / substeps``.
    """
    n_steps = int(round(t_max / dt))
    substeps = int(substeps)
    mus = np.stack([dyn.slice(dipole_operators(dyn.manifold, dipoles, p).raising, "e", "g") for p in range(3)])
    block = dyn.block("e", "g")
    y0 = _embed(dyn, mus)  # (A, 3, N, 1)
    _, rec = block.propagate(
        y0, dt / substeps, n_steps * substeps, observe=lambda y: np.einsum("pij,pij->", mus, y[0]), stride=substeps
    )
    times = dt * np.arange(n_steps + 1)
    return times, np.array(rec)


def linear_absorption(
    system: ExcitonSystem,
    environment: Environment,
    dipoles: DipoleModel,
    method: str = "heom",
    t_max: float = 2000.0,
    dt: float = 1.0,
    depth: int = 3,
    matsubara: int = 1,
    zero_pad: int = 4,
    frame: float = None,
    substeps: int = 1,
) -> LinearSpectrum:
    """Isotropic linear absorption: Re of the half-sided transform of sum_p P_p(t).

    Warns (and records ``warning``) when |P(t_max)| > 1e-3 max|P|.
    """
    manifold = build_two_exciton(system, dipoles, dressed_site_energies(system, environment), pairs=False)
    dyn = make_dynamics(manifold, environment, method, depth, matsubara, frame)
    times, P = linear_polarization(dyn, dipoles, t_max, dt, substeps)
    omega, spec = half_fourier(P, dt, zero_pad)
    msg = None
    if np.abs(P[-1]) > 1e-3 * np.max(np.abs(P)):
        msg = f"polarization not decayed at t_max={t_max} fs: |P(t_max)|/max|P| = {np.abs(P[-1]) / np.max(np.abs(P)):.3g}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return LinearSpectrum(omega + dyn.frame, spec.real, times, P, dyn.frame, zero_pad, msg)


def fwhm(omega, spectrum) -> float:
    """Full width at half maximum of the highest peak (linear interpolation)."""
    w = np.asarray(omega, dtype=float)
    s = np.asarray(spectrum, dtype=float)
    i = int(np.argmax(s))
    half = 0.5 * s[i]
    lo = i
    while lo > 0 and s[lo] > half:
        lo -= 1
    hi = i
    while hi < s.size - 1 and s[hi] > half:
        hi += 1
    if s[lo] > half or s[hi] > half:
        raise ValueError("peak does not fall to half maximum inside the grid")
    left = w[lo] + (half - s[lo]) * (w[lo + 1] - w[lo]) / (s[lo + 1] - s[lo])
    right = w[hi - 1] + (half - s[hi - 1]) * (w[hi] - w[hi - 1]) / (s[hi] - s[hi - 1])
    return float(right - left)


# ---------------------------------------------------------------- third order


@dataclass(frozen=True)
class Pathway:
    """One Liouville pathway: three dipole interactions and the blocks they reach.

    ``steps[i] = (side, kind, block)``: multiply by mu^kind ("+" or "-") from
    ``side`` ("left" or "right"), landing in ``block`` (row, column
    manifolds). The signal is ``sign * Tr[mu^- rho]`` after the third step.
    """

    name: str
    family: str
    kind: str
    steps: tuple
    sign: complex


PATHWAYS = {
    "gbrp": Pathway("gbrp", "GB", "RP", (("right", "-", ("g", "e")), ("right", "+", ("g", "g")), ("left", "+", ("e", "g"))), 1j),
    "serp": Pathway("serp", "SE", "RP", (("right", "-", ("g", "e")), ("left", "+", ("e", "e")), ("right", "+", ("e", "g"))), 1j),
    "esarp": Pathway("esarp", "ESA", "RP", (("right", "-", ("g", "e")), ("left", "+", ("e", "e")), ("left", "+", ("f", "e"))), -1j),
    "gbnr": Pathway("gbnr", "GB", "NR", (("left", "+", ("e", "g")), ("left", "-", ("g", "g")), ("left", "+", ("e", "g"))), 1j),
    "senr": Pathway("senr", "SE", "NR", (("left", "+", ("e", "g")), ("right", "-", ("e", "e")), ("right", "+", ("e", "g"))), 1j),
    "esanr": Pathway("esanr", "ESA", "NR", (("left", "+", ("e", "g")), ("right", "-", ("e", "e")), ("left", "+", ("f", "e"))), -1j),
}


@dataclass
class ResponseGrid:
    """S(T3, T2, T1) for one pathway and polarization tuple at fixed T2.

    ``values[i3, i1]`` is the response at T3 = i3*dt, T1 = i1*dt in the
    rotating frame ``frame``.
    """

    pathway: str
    components: tuple
    t2: float
    dt: float
    values: np.ndarray
    frame: float = 0.0

    @property
    def kind(self) -> str:
        return PATHWAYS[self.pathway].kind

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.shape[0])

    def lab_frame(self) -> np.ndarray:
        """Values with the rotating-frame phases restored."""
        t = self.times * self.frame * CM_TO_RAD_FS
        s1 = 1.0 if self.kind == "RP" else -1.0
        return self.values * np.exp(-1j * t)[:, None] * np.exp(1j * s1 * t)[None, :]


def _apply(op_block, y, side):
    """Multiply every ADO by ``op_block`` from ``side``."""
    if side == "left":
        return np.matmul(op_block, y)
    return np.matmul(y, op_block)


def _op_for(dyn, mu, kind, side, old, new):
    op = mu if kind == "+" else mu.conj().T
    if side == "left":
        return dyn.slice(op, new[0], old[0])
    return dyn.slice(op, old[1], new[1])


class ResponseCalculator:
    """Third-order responses for several pathways, tuples and delays.

    The T3 stage is evaluated with the adjoint propagator: the trace
    observable is propagated backwards once per final block and Cartesian
    component, and each response column becomes an inner product with the
    state prepared after the third interaction.
    """

    def __init__(self, dyn: Dynamics, dipoles: DipoleModel):
        self.dyn = dyn
        self.mu = [dipole_operators(dyn.manifold, dipoles, p).raising for p in range(3)]
        self._observables = {}

    def _observable(self, block, n, n_t, dt, substeps):
        """Adjoint-propagated Tr[mu_n^- .] on ``block``; shape (n_t, A, nl, nr)."""
        key = (block, n, n_t, dt, substeps)
        if key not in self._observables:
            O = self.dyn.slice(self.mu[n], *block)  # Tr[mu^- s] = <mu^+, s>
            adj = self.dyn.block(*block).dagger()
            _, rec = adj.propagate(
                _embed(self.dyn, O), dt / substeps, (n_t - 1) * substeps, observe=lambda y: y.copy(), stride=substeps
            )
            self._observables[key] = np.array(rec)
        return self._observables[key]

    def compute(self, pathways, components, t2_values, n_t: int, dt: float, substeps: int = 1, on_grid=None):
        """Return ``{(pathway, tuple, t2): ResponseGrid}``.

        Parameters
        ----------
        pathways : iterable of str
            Keys of :data:`PATHWAYS`.
        components : iterable of (k, l, m, n)
            Polarization tuples (0-based Cartesian axes).
        t2_values : iterable of float
            Delays in fs; each must be a multiple of ``dt``.
        n_t : int
            Points on each of the T1 and T3 axes.
        dt : float
            Spacing of the T1 and T3 grids (fs).
        substeps : int
            RK4 steps per grid spacing; the integrator step is dt / substeps.
        on_grid : callable, optional
            Called with every finished :class:`ResponseGrid`.
        """
        dyn = self.dyn
        pathways = [PATHWAYS[p] if isinstance(p, str) else p for p in pathways]
        components = [tuple(int(x) for x in c) for c in components]
        substeps = int(substeps)
        h = dt / substeps
        t2_steps = sorted({int(round(t / h)) for t in t2_values})
        for t in t2_values:
            if abs(t / h - round(t / h)) > 1e-9:
                raise ValidationError(f"T2 = {t} fs is not a multiple of the step {h} fs")
        for p in pathways:
            if p.family == "ESA" and not dyn.manifold.has_pairs:
                raise ValidationError(f"pathway {p.name} needs the two-exciton manifold")
        out = {}
        # group pathways sharing the first two interactions
        prefixes = {}
        for p in pathways:
            prefixes.setdefault(p.steps[:2], []).append(p)
        ground = _embed(dyn, np.ones((1, 1)))
        for prefix, group in prefixes.items():
            (s0, k0, b0), (s1, k1, b1) = prefix
            for k in sorted({c[0] for c in components}):
                y = _apply(_op_for(dyn, self.mu[k], k0, s0, ("g", "g"), b0), ground, s0)
                _, rec = dyn.block(*b0).propagate(y, h, (n_t - 1) * substeps, observe=lambda y: y.copy(), stride=substeps)
                stage1 = np.stack(rec, axis=1)  # (A, T1, nl, nr)
                for l in sorted({c[1] for c in components if c[0] == k}):
                    y = _apply(_op_for(dyn, self.mu[l], k1, s1, b0, b1), stage1, s1)
                    done = 0
                    for steps in t2_steps:
                        if steps > done:
                            y, _ = dyn.block(*b1).propagate(y, h, steps - done)
                            done = steps
                        self._finish(group, components, k, l, y, b1, steps * h, n_t, dt, substeps, out, on_grid)
        return out

    def _finish(self, group, components, k, l, y, b1, t2, n_t, dt, substeps, out, on_grid):
        dyn = self.dyn
        for p in group:
            s2, k2, b2 = p.steps[2]
            for m in sorted({c[2] for c in components if c[:2] == (k, l)}):
                x = _apply(_op_for(dyn, self.mu[m], k2, s2, b1, b2), y, s2)
                xf = np.moveaxis(x, 1, 0).reshape(n_t, -1)  # (T1, A*nl*nr)
                for c in components:
                    if c[:3] != (k, l, m):
                        continue
                    Y = self._observable(b2, c[3], n_t, dt, substeps).reshape(n_t, -1)
                    values = p.sign * (Y.conj() @ xf.T)
                    grid = ResponseGrid(p.name, c, float(t2), dt, values, dyn.frame)
                    out[(p.name, c, float(t2))] = grid
                    if on_grid is not None:
                        on_grid(grid)


def pathway_response(
    pathway: str,
    manifold: TwoExcitonManifold,
    dipoles: DipoleModel,
    environment: Environment,
    components,
    t2: float,
    n_t: int,
    dt: float,
    method: str = "heom",
    depth: int = 3,
    matsubara: int = 1,
    frame: float = None,
    substeps: int = 1,
) -> ResponseGrid:
    """Single-pathway response grid for one polarization tuple and delay."""
    dyn = make_dynamics(manifold, environment, method, depth, matsubara, frame)
    res = ResponseCalculator(dyn, dipoles).compute([pathway], [tuple(components)], [t2], n_t, dt, substeps)
    return next(iter(res.values()))


# ---------------------------------------------------------------- Fourier transforms


@dataclass
class Spectrum2D:
    """values[i3, i1] on ascending (omega3, omega1) grids in cm^-1."""

    omega1: np.ndarray
    omega3: np.ndarray
    values: np.ndarray
    kind: str
    dt: float
    n_t: int
    frame: float = 0.0
    label: str = ""

    def absorptive(self) -> np.ndarray:
        """Re(-i S): the pathway prefactors +-i removed, so GB/SE peaks are
        positive and ESA peaks negative."""
        return np.imag(self.values)

    def normalized(self) -> np.ndarray:
        """Absorptive part scaled to max |value| = 1."""
        a = self.absorptive()
        m = np.max(np.abs(a))
        return a / m if m > 0 else a


def _freq_axis(n, dt, frame):
    return np.fft.fftshift(np.fft.fftfreq(n, d=dt)) / (CM_TO_RAD_FS / (2 * np.pi)) + frame


def transform_2d(values, kind: str = None, dt: float = None, frame: float = 0.0, label: str = "") -> Spectrum2D:
    """Discrete double transform of S[i3, i1].

    RP uses the kernel exp(-i T1 w1 + i T3 w3), NR exp(+i T1 w1 + i T3 w3).
    With exp(-iHt) evolution both put a coherence at energy E on the
    positive diagonal w1 = w3 = E, so no axis flip is applied.
    """
    if isinstance(values, ResponseGrid):
        grid = values
        values, kind, dt, frame, label = grid.values, grid.kind, grid.dt, grid.frame, label or grid.pathway
    S = np.asarray(values, dtype=complex)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"response grid must be square, got {S.shape}")
    if kind not in ("RP", "NR"):
        raise ValidationError(f"kind must be RP or NR, got {kind!r}")
    n = S.shape[0]
    F = np.fft.ifft(S, axis=0) * n  # + i T3 w3
    F = np.fft.fft(F, axis=1) if kind == "RP" else np.fft.ifft(F, axis=1) * n
    F = np.fft.fftshift(F) * dt * dt
    w = _freq_axis(n, dt, frame)
    return Spectrum2D(w, w.copy(), F, kind, dt, n, frame, label)


def inverse_transform_2d(spectrum: Spectrum2D) -> np.ndarray:
    """Recover S[i3, i1] from :func:`transform_2d` output."""
    n = spectrum.n_t
    F = np.fft.ifftshift(spectrum.values) / (spectrum.dt * spectrum.dt)
    F = np.fft.ifft(F, axis=1) if spectrum.kind == "RP" else np.fft.fft(F, axis=1) / n
    return np.fft.fft(F, axis=0) / n


def combine(spectra, label="RP+NR") -> Spectrum2D:
    """Sum spectra on identical grids."""
    spectra = list(spectra)
    first = spectra[0]
    for s in spectra[1:]:
        if s.values.shape != first.values.shape or not np.allclose(s.omega1, first.omega1):
            raise ValidationError("spectra are on different grids")
    total = sum(s.values for s in spectra)
    kind = first.kind if all(s.kind == first.kind for s in spectra) else "RP+NR"
    return Spectrum2D(first.omega1, first.omega3, total, kind, first.dt, first.n_t, first.frame, label)
