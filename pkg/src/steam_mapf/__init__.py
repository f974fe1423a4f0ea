"""Congestion-aware test-time enhancement for decentralized grid MAPF policies."""

from ._kernels import BACKEND
from .costfield import CostField, PathPlan, base_weights, compute_cost_field, extract_path, local_channel
from .executor import EpisodeReport, aggregate_reports, compute_density, resolve_moves, run_episode
from .grid import Action, GridMap, Scenario, find_transition_conflicts, next_vertex, parse_map, validate_scenario
from .policy import Observation, PolicyConfig, build_observation, greedy_logits, select_action
from .scengen import GenSpec, generate
from .steam import SteamConfig, SteamController

__version__ = "0.1.0"
