"""Open-system exciton dynamics and optical spectroscopy.

Hierarchical equations of motion, Redfield and Foerster propagation for
Frenkel-exciton models, with linear and two-dimensional electronic spectra
and isotropic orientational averaging.
"""

from .averaging import (
    ALL_PARALLEL,
    DOUBLE_CROSSED,
    DisorderModel,
    PolarizationSequence,
    TensorAverage,
    cklmn,
    isotropic_2d,
    isotropic_linear,
    sample_disorder,
)
from .bath import (
    CorrelationExpansion,
    correlation_freq,
    converge_matsubara,
    decompose_exponentials,
    dephasing_rates,
    lineshape,
    reorganization_energy,
    spectral_density,
)
from .config import ConfigError, RunConfig, parse_config, serialize
from .model import (
    BathMap,
    DipoleModel,
    DrudeLorentzPeak,
    Environment,
    ExcitonSystem,
    SpectralDensity,
    TwoExcitonManifold,
    ValidationError,
    build_two_exciton,
    diagonalize,
    site_hamiltonian,
    to_exciton_basis,
    to_site_basis,
)
from .propagators import (
    HEOMSolver,
    RateMatrix,
    RedfieldTensor,
    Trajectory,
    decay_time,
    enumerate_hierarchy,
    foerster_rates,
    heom_propagate,
    rate_propagate,
    redfield_propagate,
    redfield_tensor,
    thermalization_metric,
)
from .spectroscopy import (
    PATHWAYS,
    ResponseCalculator,
    Spectrum2D,
    linear_absorption,
    make_dynamics,
    pathway_response,
    transform_2d,
)
from .tasks import OutputRecord, run_task
from .output import write_outputs

__version__ = "0.1.0"
