"""Bayesian network clustering with the stochastic block model and its
community-finding constrained variant, by collapsed MCMC over (z, K)."""

__version__ = "0.1.0"

from .analysis import (PosteriorSummary, Relabeler, compare_to_truth, nmi,
                       occupancy_of, relabel, summarize)
from .datasets import load_karate, load_monks
from .model import (BlockStats, Hyperparameters, State, apply_move,
                    collapsed_log_mass, compute_block_stats, constraint_check,
                    draw_pi_posterior, estimate_constraint_prob, log_mass_x_given_zK,
                    log_mass_z_given_K, log_prior_K)
from .network import (Network, generate_from_model, generate_two_star_network,
                      parse_edge_list, write_network)
from .sampler import ChainConfig, MemoryTraceSink, MoveRecord, run_chain

__all__ = [
    "PosteriorSummary", "Relabeler", "compare_to_truth", "nmi", "occupancy_of", "relabel",
    "summarize", "load_karate", "load_monks", "BlockStats", "Hyperparameters", "State",
    "apply_move", "collapsed_log_mass", "compute_block_stats", "constraint_check",
    "draw_pi_posterior", "estimate_constraint_prob", "log_mass_x_given_zK",
    "log_mass_z_given_K", "log_prior_K", "Network", "generate_from_model",
    "generate_two_star_network", "parse_edge_list", "write_network", "ChainConfig",
    "MemoryTraceSink", "MoveRecord", "run_chain",
]
