"""mcflab: a phase-field mean curvature flow laboratory.

Runs the scalar phase equation with well-prepared initial data and checks
the geometric-measure identities of the sharp-interface limit (energy
dissipation, discrepancy decay, moving-measure inequalities, the phase
volume-change formula and its failure mode) at desk scale.
"""

from .errors import ConfigError, RefusalError
from .fields import Grid, ScalarField, TestFunction, integrate, laplacian, spatial_gradient
from .geometry import (Ball, Box, HalfSpace, ReferenceFlow, Shape,
                       exact_flow_radius, phase_indicator, phase_volume,
                       prepare_initial_data, volume_and_perimeter)
from .measures import DensitySnapshot, InterfaceFields, density_ratio, density_snapshot, interface_fields
from .potential import DoubleWell, STANDARD_WELL, standard_double_well
from .solver import PhaseField, PhaseTrajectory, evolve, normalized_energy, phase_rate, stable_dt, step

__version__ = "0.1.0"
