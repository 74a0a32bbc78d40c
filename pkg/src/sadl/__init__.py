"""Scale-aware joint-likelihood loss for crowd density maps."""

from .core import DensityMap, Scene, ScaleConfig, ScaleGrid, build_grids, to_scale_coords
from .covariance import CovQuery, covariance_entry, omega
from .fit import FitReport, SynthSpec, fit_density, mae_mse, synth_scene
from .gaussian_moments import MomentMaps, gauss2d_iso, gt_density_map, moment_maps
from .loss import LossBreakdown, loss_gradient, precompute, regularizer, total_loss
from .lowrank import LowRankCov, LowRankInverse, build_lowrank, invert_lowrank, quadratic_form, select_top_m

__version__ = "0.1.0"
