"""Density fields of charging-aware random waypoint mobility on the unit disk,
and mixture density networks that learn them."""

from .geometry import GridSpec, Point2, PolarPoint, cartesian_to_polar, in_unit_disk, polar_to_cartesian
from .densities import GaussianParams, MobiusParams, gaussian_log_pdf, mobius_log_pdf, quadrature_disk_integral
from .scenario import REFERENCE_SCENARIOS, Scenario, ScenarioConstraintError
from .mixture import DensityField, Kind, MixtureModel, evaluate_on_grid, mixture_pdf, read_field_csv, write_field_csv
from .mdn import MdnModel, forward, forward_batch, init_model, load_model, save_model
from .training import TrainConfig, TrainingDiverged, TrainingSet, TrainReport, loss_gradient, quartic_loss, train
from .simulator import SimConfig, detect_diversion, next_waypoint, simulate_counts, simulate_density
from .metrics import GridMismatchError, MetricReport, evaluate, kl_divergence, mse

__version__ = "0.1.0"
