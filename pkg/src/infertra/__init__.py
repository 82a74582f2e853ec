"""Uncertain trajectory inference on road networks from sparse observations.

Learn a time-aware, variable-order Markov mobility model from historical
trajectories, then infer an edge-weighted uncertain trajectory for a sparse
observation with random walks with restart.
"""

from .evaluation import EvalReport, f_score, kfold_eval, precision_recall, run_baseline
from .inference import RwrConfig, TrajectoryInferer, UnreachableError, infer, restart_probability, sample_trajectory
from .model_selection import select_order
from .network import RoadNetwork, haversine, load_network, read_network, write_network
from .nmm import NetworkMobilityModel, learn, load_model
from .oracle import exact_marginals, naive_gibbs
from .trajectory import Observation, Trajectory, downsample, read_observations, read_trajectories
from .uncertain import UncertainTrajectory

__version__ = "0.1.0"

__all__ = [
    "EvalReport", "NetworkMobilityModel", "Observation", "RoadNetwork", "RwrConfig", "Trajectory",
    "TrajectoryInferer", "UncertainTrajectory", "UnreachableError", "downsample", "exact_marginals",
    "f_score", "haversine", "infer", "kfold_eval", "learn", "load_model", "load_network", "naive_gibbs",
    "precision_recall", "read_network", "read_observations", "read_trajectories", "restart_probability",
    "run_baseline", "sample_trajectory", "select_order", "write_network",
]
