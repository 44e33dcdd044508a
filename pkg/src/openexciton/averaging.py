"""Orientational averaging of optical responses and static site-energy disorder."""

from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .model import ExcitonSystem, ValidationError


@dataclass(frozen=True)
class PolarizationSequence:
    """Lab-frame field unit vectors f0..f3 of the four interactions."""

    fields: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.fields, dtype=float)
        if f.shape != (4, 3):
            raise ValidationError(f"need four 3-vectors, got shape {f.shape}")
        if np.any(np.abs(np.linalg.norm(f, axis=1) - 1.0) > 1e-9):
            raise ValidationError("field vectors must have unit length")
        object.__setattr__(self, "fields", f)

    @classmethod
    def from_angles(cls, degrees):
        """Fields in the xy plane at the given angles from x (pulses along z)."""
        a = np.radians(np.asarray(degrees, dtype=float))
        return cls(np.stack([np.cos(a), np.sin(a), np.zeros_like(a)], axis=1))


ALL_PARALLEL = (0.0, 0.0, 0.0, 0.0)
DOUBLE_CROSSED = (45.0, -45.0, 90.0, 0.0)


@dataclass(frozen=True)
class TensorAverage:
    """Non-zero isotropic-average coefficients ``{(k, l, m, n): C}``.

    ``exact`` holds the same coefficients as fractions when they are
    rational to 1e-12 (true for the usual 0/45/90 degree sequences).
    """

    coefficients: dict
    exact: dict

    def __len__(self):
        return len(self.coefficients)

    @property
    def components(self):
        return list(self.coefficients)

    def total(self) -> float:
        return float(sum(self.coefficients.values()))


def _rational(x, tol=1e-12):
    f = Fraction(x).limit_denominator(10_000)
    return f if abs(float(f) - x) <= tol else None


def cklmn(sequence, tol: float = 1e-12) -> TensorAverage:
    """Isotropic rotational-average coefficients for a four-field sequence.

    C_klmn = d_kl d_mn [4 a b - c d - e f]/30 + d_km d_ln [4 c d - a b - e f]/30
           + d_kn d_lm [4 e f - a b - c d]/30
    with a b = (f0.f1)(f2.f3), c d = (f0.f2)(f1.f3), e f = (f0.f3)(f1.f2).

    Parameters
    ----------
    sequence : PolarizationSequence or sequence of 4 angles in degrees
    """
    if not isinstance(sequence, PolarizationSequence):
        sequence = PolarizationSequence.from_angles(sequence)
    f = sequence.fields
    d = f @ f.T
    p01_23 = d[0, 1] * d[2, 3]
    p02_13 = d[0, 2] * d[1, 3]
    p03_12 = d[0, 3] * d[1, 2]
    a = (4 * p01_23 - p02_13 - p03_12) / 30.0
    b = (4 * p02_13 - p01_23 - p03_12) / 30.0
    c = (4 * p03_12 - p01_23 - p02_13) / 30.0
    coeffs, exact = {}, {}
    for k, l, m, n in product(range(3), repeat=4):
        value = a * (k == l and m == n) + b * (k == m and l == n) + c * (k == n and l == m)
        if abs(value) > tol:
            coeffs[(k, l, m, n)] = float(value)
            r = _rational(value)
            if r is not None:
                exact[(k, l, m, n)] = r
    return TensorAverage(coeffs, exact)


def isotropic_2d(responses: dict, average: TensorAverage):
    """Sum_klmn C_klmn S_klmn over the non-zero coefficients.

    Raises
    ------
    ValidationError
        If a needed component is missing; the message lists all absent tuples.
    """
    missing = [c for c in average.coefficients if c not in responses]
    if missing:
        raise ValidationError(f"responses missing for components {sorted(missing)}")
    total = None
    for comp, coeff in average.coefficients.items():
        term = coeff * np.asarray(responses[comp])
        total = term if total is None else total + term
    if total is None:
        return 0.0
    return total


def isotropic_linear(spectra):
    """Sum of the three Cartesian-field spectra."""
    spectra = list(spectra)
    if len(spectra) != 3:
        raise ValidationError(f"need exactly three spectra (x, y, z), got {len(spectra)}")
    return np.asarray(spectra[0]) + np.asarray(spectra[1]) + np.asarray(spectra[2])


@dataclass(frozen=True)
class DisorderModel:
    """Independent Gaussian offsets of each site energy.

    Attributes
    ----------
    sigma : float or array_like
        Standard deviation per site (cm^-1), scalar applies to all sites.
    samples : int
    seed : int
    """

    sigma: object = 0.0
    samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.sigma, dtype=float) < 0):
            raise ValidationError("disorder width must be >= 0")
        if self.samples < 1:
            raise ValidationError("need at least one disorder sample")


def sample_disorder(model: DisorderModel, base: ExcitonSystem):
    """Realizations of ``base`` with shifted zero-phonon energies; couplings untouched.

    Uses numpy's PCG64 generator seeded with ``model.seed``.
    """
    rng = np.random.default_rng(model.seed)
    sigma = np.broadcast_to(np.asarray(model.sigma, dtype=float), (base.n_sites,))
    offsets = rng.standard_normal((model.samples, base.n_sites)) * sigma
    return [base.with_site_energies(base.zero_phonon_energies + off) for off in offsets]
