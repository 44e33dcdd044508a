"""Bath correlation functions for shifted Drude-Lorentz spectral densities.

Conventions: frequencies and spectral densities in cm^-1, times in fs.
The correlation function

    C(t) = 1/pi int_0^inf dw J(w) [n(w) e^{iwt} + (n(w)+1) e^{-iwt}]

is returned in cm^-2. Its exponential expansion stores amplitudes in cm^-2
and decay rates in fs^-1.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .model import SpectralDensity
from .units import BOLTZMANN_CM_PER_K, CM_TO_RAD_FS


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested accuracy."""

    def __init__(self, message, residual=None):
        if residual is not None:
            message = f"{message} (error estimate {residual:.3e})"
        super().__init__(message)
        self.residual = residual


def _beta(temperature):
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0 K, got {temperature}")
    return 1.0 / (BOLTZMANN_CM_PER_K * temperature)


def spectral_density(density: SpectralDensity, omega):
    """J(w) in cm^-1 for ``omega`` in cm^-1 (odd in w)."""
    return density(omega)


def _spectral_density_complex(density: SpectralDensity, z):
    z = np.asarray(z, dtype=complex)
    out = np.zeros_like(z)
    for t in density.terms:
        lam, nu, Om = t.reorganization, t.rate, t.shift
        out = out + lam * z * nu * (1.0 / ((z - Om) ** 2 + nu**2) + 1.0 / ((z + Om) ** 2 + nu**2))
    return out


def _quad(f, a, b, what, rel=1e-10, abs_tol=0.0, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=abs_tol, epsrel=rel, limit=500, **kw)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"{what}: {exc}".splitlines()[0]) from None
    return val, err


def reorganization_energy(density: SpectralDensity, rtol=1e-9) -> float:
    """lambda = int_0^inf J(w)/(pi w) dw by adaptive quadrature (cm^-1)."""
    if not density.terms:
        return 0.0

    def integrand(w):
        # J(w)/w is regular at w = 0
        out = 0.0
        for t in density.terms:
            out += t.reorganization * t.rate * (
                1.0 / ((w - t.shift) ** 2 + t.rate**2) + 1.0 / ((w + t.shift) ** 2 + t.rate**2)
            )
        return out / np.pi

    # split finite core (containing all peaks) from the algebraic tail
    edge = max(t.shift + 50.0 * t.rate for t in density.terms)
    # breakpoints hugging 0 would make a zero-width subinterval
    breaks = sorted({t.shift for t in density.terms if 1e-8 * edge < t.shift < edge})
    core, err_core = _quad(integrand, 0.0, edge, "reorganization core", rel=rtol, points=breaks or None)
    tail, err_tail = _quad(integrand, edge, np.inf, "reorganization tail", rel=rtol)
    total = core + tail
    err = err_core + err_tail
    if err > 10 * rtol * max(abs(total), 1e-300):
        raise QuadratureError("reorganization integral did not converge", err)
    return total


def bose(omega, temperature):
    """Bose occupation 1/(exp(beta w) - 1) for ``omega`` in cm^-1."""
    w = np.asarray(omega, dtype=float)
    if np.any(w == 0):
        raise ZeroDivisionError("Bose function has a pole at w = 0; use the analytic limit of J(w) n(w)")
    return 1.0 / np.expm1(_beta(temperature) * w)


def _jn_limit(density, beta):
    """lim_{w->0} J(w) n(w) = J'(0)/beta."""
    return density.slope_at_zero() / beta


def _j_coth(density, beta, w_cut):
    slope_limit = 2.0 * density.slope_at_zero() / beta

    def f(w):
        if w < w_cut:
            return slope_limit
        return float(density(w)) / np.tanh(0.5 * beta * w)

    return f


def correlation_time_quadrature(density: SpectralDensity, temperature, t, form="one_sided") -> complex:
    """C(t) in cm^-2 by adaptive Fourier quadrature.

    Parameters
    ----------
    t : float
        Time in fs; must be > 0 for spectral densities with a 1/w tail
        (Drude-Lorentz), where Re C(0) diverges logarithmically.
    form : {"one_sided", "two_sided"}
        Integrate ``J [n e^{iwt} + (n+1) e^{-iwt}]`` on the positive axis,
        or ``J n e^{iwt}`` over the whole real axis.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if density.total_reorganization == 0.0:
        return 0j
    if t == 0:
        raise QuadratureError(
            "Re C(0) = (1/pi) int J coth dw diverges for Drude-Lorentz spectral densities"
        )
    beta = _beta(temperature)
    tau = t * CM_TO_RAD_FS
    w_cut = 1e-3 * density.min_rate
    # QAWF needs an absolute tolerance; scale it by the amplitude lambda * nu
    atol = 1e-11 * sum(p.reorganization * max(p.rate, p.shift) for p in density.terms)

    edge = max(p.shift + 20.0 * p.rate for p in density.terms)

    def fourier(f, kind):
        core, _ = _quad(f, 0.0, edge, f"C(t) core ({kind})", rel=1e-10, abs_tol=atol, weight=kind, wvar=tau)
        tail, _ = _quad(f, edge, np.inf, f"C(t) tail ({kind})", rel=1e-10, abs_tol=atol, weight=kind, wvar=tau)
        return core + tail

    if form == "one_sided":
        re = fourier(_j_coth(density, beta, w_cut), "cos")
        im = fourier(lambda w: float(density(w)), "sin")
        return complex(re, -im) / np.pi
    if form == "two_sided":
        limit = _jn_limit(density, beta)

        def jn(w):
            if abs(w) < w_cut:
                return limit
            if w > 0:
                x = np.exp(-beta * w)
                return float(density(w)) * x / (1.0 - x)
            return float(density(w)) / np.expm1(beta * w)

        # negative half-axis mapped by w -> -w: J(-w) n(-w) e^{-iwt}
        neg = lambda w: jn(-w)  # noqa: E731
        re = fourier(jn, "cos") + fourier(neg, "cos")
        im = fourier(jn, "sin") - fourier(neg, "sin")
        return complex(re, im) / np.pi
    raise ValueError(f"unknown form {form!r}")


@dataclass(frozen=True)
class CorrelationExpansion:
    """C(t) = sum_k c_k exp(-gamma_k t) for t >= 0.

    Attributes
    ----------
    amplitudes : ndarray of complex
        c_k in cm^-2.
    rates : ndarray of complex
        gamma_k in fs^-1, Re(gamma_k) > 0.
    conj_amplitudes : ndarray of complex
        Coefficient of exp(-gamma_k t) in C(t)^*; requires the rate set to
        be closed under complex conjugation.
    """

    amplitudes: np.ndarray
    rates: np.ndarray
    conj_amplitudes: np.ndarray
    temperature: float
    matsubara: int

    def __post_init__(self):
        if np.any(np.real(self.rates) <= 0):
            raise ValueError("all expansion rates must have positive real part")

    def __len__(self):
        return len(self.amplitudes)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.tensordot(self.amplitudes, np.exp(-np.multiply.outer(self.rates, t)), axes=1)

    @property
    def amplitudes_angular(self):
        """c_k in fs^-2 (hbar = 1 with energies as angular frequencies)."""
        return self.amplitudes * CM_TO_RAD_FS**2

    @property
    def conj_amplitudes_angular(self):
        return self.conj_amplitudes * CM_TO_RAD_FS**2

    @property
    def rates_cm(self):
        return self.rates / CM_TO_RAD_FS


def _merge(amps, rates, tol=1e-12):
    out_a, out_r = [], []
    for a, r in zip(amps, rates):
        for i, r0 in enumerate(out_r):
            if abs(r - r0) <= tol * max(1.0, abs(r0)):
                out_a[i] += a
                break
        else:
            out_a.append(complex(a))
            out_r.append(complex(r))
    return np.array(out_a, dtype=complex), np.array(out_r, dtype=complex)


def _conjugate_partners(amps, rates, tol=1e-12):
    cbar = np.zeros_like(amps)
    for k, r in enumerate(rates):
        hits = [j for j, rj in enumerate(rates) if abs(np.conj(rj) - r) <= tol * max(1.0, abs(r))]
        if not hits:
            raise ValueError("expansion rates are not closed under complex conjugation")
        cbar[k] = sum(np.conj(amps[j]) for j in hits)
    return cbar


def decompose_exponentials(density: SpectralDensity, temperature, matsubara: int) -> CorrelationExpansion:
    """Residue expansion of C(t) for a shifted Drude-Lorentz density.

    Each peak contributes the poles w = +-Omega + i nu (rates nu -+ i Omega);
    the Bose function contributes Matsubara poles w = i 2 pi k / beta for
    k = 1..matsubara. Terms with identical rates are merged, so an unshifted
    peak yields a single Drude term.
    """
    if matsubara < 0:
        raise ValueError("matsubara must be >= 0")
    beta = _beta(temperature)
    amps, rates = [], []
    for t in density.terms:
        if t.reorganization == 0.0:
            continue
        for z in (t.shift + 1j * t.rate, -t.shift + 1j * t.rate):
            n_z = 1.0 / np.expm1(beta * z)
            amps.append(t.reorganization * z * n_z)
            rates.append(-1j * z)
    if amps:
        for k in range(1, matsubara + 1):
            nu_k = 2.0 * np.pi * k / beta
            amps.append((2j / beta) * complex(_spectral_density_complex(density, 1j * nu_k)))
            rates.append(complex(nu_k))
    a, r = _merge(amps, rates)
    keep = np.abs(a) > 0
    a, r = a[keep], r[keep]
    cbar = _conjugate_partners(a, r)
    return CorrelationExpansion(a, r * CM_TO_RAD_FS, cbar, float(temperature), int(matsubara))


@dataclass(frozen=True)
class MatsubaraReport:
    matsubara: int
    error: float
    reference: float
    converged: bool
    expansion: CorrelationExpansion


def reconstruction_error(expansion: CorrelationExpansion, density, temperature, times, reference=None):
    """Max deviation of the expansion from quadrature over ``times`` (cm^-2)."""
    times = np.asarray(times, dtype=float)
    exact = np.array([correlation_time_quadrature(density, temperature, t) for t in times])
    err = float(np.max(np.abs(expansion(times) - exact)))
    ref = float(np.abs(exact[0])) if reference is None else reference
    return err, ref


def converge_matsubara(
    density: SpectralDensity,
    temperature,
    t_max=1000.0,
    t_min=1.0,
    n_times=400,
    rtol=0.01,
    max_matsubara=256,
) -> MatsubaraReport:
    """Grow the Matsubara count until the expansion matches quadrature.

    The count is doubled (0, 1, 2, 4, ...) until the maximal reconstruction
    error over ``[t_min, t_max]`` fs falls below ``rtol * |C(t_min)|``. The
    grid starts at ``t_min > 0`` since Re C(t) diverges as t -> 0.
    """
    times = np.linspace(t_min, t_max, n_times)
    exact = np.array([correlation_time_quadrature(density, temperature, t) for t in times])
    ref = float(np.abs(exact[0]))
    M = 0
    while True:
        exp = decompose_exponentials(density, temperature, M)
        err = float(np.max(np.abs(exp(times) - exact)))
        if err <= rtol * ref or M >= max_matsubara:
            return MatsubaraReport(M, err, ref, err <= rtol * ref, exp)
        M = 1 if M == 0 else 2 * M


def correlation_freq(density: SpectralDensity, temperature, omega, matsubara=400):
    """Half-sided transform C(w) = int_0^inf C(t) e^{iwt} dt in cm^-1.

    The real part is the exact fluctuation-dissipation value J(w)(n(w)+1)
    (so detailed balance holds to rounding); the imaginary part is summed
    from the exponential expansion, whose Matsubara tail decays as k^-3.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if density.total_reorganization == 0.0:
        out = np.zeros(w.shape, dtype=complex)
        return out if np.ndim(omega) else complex(out[0])
    beta = _beta(temperature)
    exp = decompose_exponentials(density, temperature, matsubara)
    gam = exp.rates_cm
    im = np.imag(np.sum(exp.amplitudes[:, None] / (gam[:, None] - 1j * w[None, :]), axis=0))
    re = np.empty_like(w)
    small = np.abs(w) < 1e-10
    re[small] = _jn_limit(density, beta)
    ws = w[~small]
    # n(w) + 1 = -1/expm1(-beta w) avoids cancellation for w < 0
    with np.errstate(over="ignore"):
        re[~small] = -density(ws) / np.expm1(-beta * ws)
    out = re + 1j * im
    return out if np.ndim(omega) else complex(out[0])


def correlation_freq_sum(expansion: CorrelationExpansion, omega):
    """sum_k c_k / (gamma_k - i w) with rates in cm^-1 (cm^-1 result)."""
    w = np.asarray(omega, dtype=float)
    gam = expansion.rates_cm
    return np.sum(expansion.amplitudes[:, None] / (gam[:, None] - 1j * np.atleast_1d(w)[None, :]), axis=0)


@dataclass(frozen=True)
class LineshapeTable:
    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.times, self.values.real) + 1j * np.interp(t, self.times, self.values.imag)


def lineshape_from_expansion(expansion: CorrelationExpansion, times) -> np.ndarray:
    """g(t) = sum_k c_k (e^{-g_k t} + g_k t - 1)/g_k^2, dimensionless."""
    t = np.asarray(times, dtype=float)
    c = expansion.amplitudes_angular
    g = expansion.rates
    x = np.multiply.outer(g, t)
    # expm1 keeps small-x accuracy: e^{-x} + x - 1
    body = np.expm1(-x) + x
    return np.tensordot(c / g**2, body, axes=1)


def lineshape(density: SpectralDensity, temperature, times, matsubara=2000) -> LineshapeTable:
    """Lineshape function g(t) on a uniform grid starting at 0 fs."""
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 1 or t[0] != 0.0:
        raise ValueError("time grid must be one-dimensional and start at 0")
    if t.size > 2 and not np.allclose(np.diff(t), t[1] - t[0]):
        raise ValueError("time grid must be uniform")
    if density.total_reorganization == 0.0:
        return LineshapeTable(t, np.zeros(t.shape, dtype=complex))
    exp = decompose_exponentials(density, temperature, matsubara)
    return LineshapeTable(t, lineshape_from_expansion(exp, t))


def _tail(f, edge):
    """int_edge^inf f(w) dw for algebraically decaying f, via u = 1/w on (0, 1/edge]."""
    val, _ = integrate.quad(lambda u: f(1.0 / u) / u**2, 0.0, 1.0 / edge, epsrel=1e-12, limit=500)
    return val


def lineshape_quadrature(density: SpectralDensity, temperature, t) -> complex:
    """g(t) from the spectral representation of the double time integral.

    g(t) = 1/pi int_0^inf J/w^2 [coth(beta w/2)(1 - cos wt) + i(sin wt - wt)] dw.
    """
    if t == 0:
        return 0j
    beta = _beta(temperature)
    tau = t * CM_TO_RAD_FS
    s = density.slope_at_zero()

    def re_f(w):
        if w * tau < 1e-4:
            # (1 - cos x)/w^2 -> tau^2/2, J coth -> 2 s / beta
            return (2.0 * s / beta) * 0.5 * tau**2
        return float(density(w)) / np.tanh(0.5 * beta * w) * (1.0 - np.cos(w * tau)) / w**2

    def im_f(w):
        x = w * tau
        if x < 1e-3:
            return -float(density(w)) / w**2 * x**3 / 6.0
        return float(density(w)) * (np.sin(x) - x) / w**2

    edge = max(p.shift + 50.0 * p.rate for p in density.terms)
    edge = max(edge, 200.0 / tau)
    pts = list(np.linspace(0, edge, 64)[1:-1])
    re0, _ = integrate.quad(re_f, 0.0, edge, limit=2000, points=pts, epsrel=1e-10)
    re1 = _tail(lambda w: float(density(w)) / np.tanh(0.5 * beta * w) / w**2, edge)
    re1c, _ = integrate.quad(
        lambda w: -float(density(w)) / np.tanh(0.5 * beta * w) / w**2, edge, np.inf, weight="cos", wvar=tau
    )
    im0, _ = integrate.quad(im_f, 0.0, edge, limit=2000, points=pts, epsrel=1e-10)
    im1 = _tail(lambda w: -float(density(w)) * tau / w, edge)
    im1s, _ = integrate.quad(lambda w: float(density(w)) / w**2, edge, np.inf, weight="sin", wvar=tau)
    return complex(re0 + re1 + re1c, im0 + im1 + im1s) / np.pi


def dephasing_rates(epsilon, coupling, density: SpectralDensity, temperature):
    """Two-site relaxation and pure-dephasing rates in fs^-1.

    For H = [[-eps/2, d/2], [d/2, eps/2]] (cm^-1):

        gamma_r  = d^2 J(w) coth(beta w/2) / (2 (eps^2 + d^2)),  w = sqrt(eps^2 + d^2)
        gamma_pd = eps^2 lim_{w->0} J(w) coth(beta w/2) / (2 (eps^2 + d^2))
    """
    beta = _beta(temperature)
    eps2, d2 = float(epsilon) ** 2, float(coupling) ** 2
    w = np.sqrt(eps2 + d2)
    if w == 0:
        return 0.0, 0.0
    gamma_r = d2 * float(density(w)) / np.tanh(0.5 * beta * w) / (2.0 * w**2)
    limit = 2.0 * density.slope_at_zero() / beta
    gamma_pd = eps2 * limit / (2.0 * w**2)
    return gamma_r * CM_TO_RAD_FS, gamma_pd * CM_TO_RAD_FS
