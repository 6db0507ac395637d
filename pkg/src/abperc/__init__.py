"""Monte Carlo tools for continuum AB percolation and its one-type thinning."""

__version__ = "0.1.0"

from .geometry import (Annulus, Ball, Box, PointConfig, Role, RngStream, build_cell_grid,
                       neighbors_within, sample_poisson, unit_ball_volume)
from .graphs import ClusterLabels, ab_components, one_type_components
from .thinning import MarkedConfig, ThinningParams, classify_useful, pq_thin
from .estimators import (AnnulusSpec, CrossingEstimate, ThresholdEstimate, estimate_theta_n,
                         threshold_lambda, threshold_mu)
