"""MaxCut via SDP relaxation, random-hyperplane rounding and a PPO rounding agent."""
from .graph import Graph, brute_force_maxcut, cut_value, generate_er, parse_gset
from .policy import AgentParams, forward, init_params
from .ppo import TrainConfig, train
from .rounding import cut_of_hyperplane, expected_cut_analytic, pgw, round_embedding, sample_uniform_sphere
from .sdp import Embedding, SdpReport, default_rank, sdp_objective, solve_sdp

__version__ = "0.1.0"

__all__ = [
    "AgentParams",
    "Embedding",
    "Graph",
    "SdpReport",
    "TrainConfig",
    "brute_force_maxcut",
    "cut_of_hyperplane",
    "cut_value",
    "default_rank",
    "expected_cut_analytic",
    "forward",
    "generate_er",
    "init_params",
    "parse_gset",
    "pgw",
    "round_embedding",
    "sample_uniform_sphere",
    "sdp_objective",
    "solve_sdp",
    "train",
]
