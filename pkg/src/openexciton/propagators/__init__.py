"""Density-matrix propagation: HEOM, Redfield and Foerster rate equations."""

from .foerster import OverlapNotConverged, RateMatrix, foerster_rates, overlap_integrand, rate_propagate
from .heom import (
    HEOMSolver,
    HeomBlock,
    Hierarchy,
    HierarchyTooLarge,
    enumerate_hierarchy,
    heom_propagate,
    hierarchy_size,
    memory_estimate,
)
from .metrics import decay_time, thermalization_metric
from .redfield import RedfieldTensor, redfield_propagate, redfield_tensor, secular_mask
from .rk4 import PropagationError, integrate, rk4_step
from .trajectory import Trajectory, check_density
