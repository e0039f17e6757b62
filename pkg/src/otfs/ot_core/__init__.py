"""Optimal-transport kernels: exact and sliced W1, Gromov-Wasserstein."""

from otfs.ot_core.emd import SimplexSolution, emd_exact, network_simplex
from otfs.ot_core.gromov import entropic_gw, gw_objective, normalize_metric, round_to_marginals, sinkhorn
from otfs.ot_core.types import GwConfig, TransportPlan, WeightedPointCloud
from otfs.ot_core.wasserstein import (
    pairwise_distances,
    random_directions,
    sliced_wasserstein1,
    wasserstein1_1d,
    wasserstein1_nd,
)

__all__ = [
    "GwConfig",
    "SimplexSolution",
    "TransportPlan",
    "WeightedPointCloud",
    "emd_exact",
    "entropic_gw",
    "gw_objective",
    "network_simplex",
    "normalize_metric",
    "pairwise_distances",
    "random_directions",
    "round_to_marginals",
    "sinkhorn",
    "sliced_wasserstein1",
    "wasserstein1_1d",
    "wasserstein1_nd",
]
