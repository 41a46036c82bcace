"""Simulation and estimation toolkit for marked random connection models."""
from .estimators import Estimate
from .explorer import ClusterSample, ExplorationLimits, explore_cluster, phi_lambda_of_cluster
from .graph import GraphSample, build_graph, coupled_boundary_graphs
from .model import MarkDistribution, PointConfiguration, Window, make_model, sample_poisson, thin
from .rng import RngStream

__all__ = [
    "ClusterSample", "Estimate", "ExplorationLimits", "GraphSample", "MarkDistribution", "PointConfiguration",
    "RngStream", "Window", "build_graph", "coupled_boundary_graphs", "explore_cluster", "make_model",
    "phi_lambda_of_cluster", "sample_poisson", "thin",
]
