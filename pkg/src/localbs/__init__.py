"""Simulation and exact-sampling toolkit for the local Bak-Sneppen model on finite graphs."""
from __future__ import annotations

from .distributions import Exp1, ExpPlus, sample_exp_plus, solve_bc, threshold_exceedance
from .dynamics import ChainState, StepRecord, initial_state, run, step
from .errors import (
    GraphConstructionError,
    InputError,
    InsufficientDataError,
    InternalError,
    StatisticalTestFailure,
)
from .graph import Graph, cycle, parse_graph_spec, vertex_stationary_measure
from .rng import stream
from .stationary import sample_stationary, stationary_marginal

__version__ = "0.1.0"

__all__ = [
    "ChainState",
    "Exp1",
    "ExpPlus",
    "Graph",
    "GraphConstructionError",
    "InputError",
    "InsufficientDataError",
    "InternalError",
    "StatisticalTestFailure",
    "StepRecord",
    "cycle",
    "initial_state",
    "parse_graph_spec",
    "run",
    "sample_exp_plus",
    "sample_stationary",
    "solve_bc",
    "stationary_marginal",
    "step",
    "stream",
    "threshold_exceedance",
    "vertex_stationary_measure",
]
