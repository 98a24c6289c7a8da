"""Randomized patrolling strategies for fully connected security games."""
from .bounds import BoundSolution, invert_vertex_q, min_patrollers, protection_upper_bound
from .evaluation import (ProtectionReport, best_response_level, brute_force_window_damage, relative_deviation,
                         simulate, visit_profile)
from .model import GameStructure, Infeasible, PatrolError, VertexGroup, alpha_max, damage, validate
from .synthesis import (Assignment, BasicSet, ModularStrategy, NaiveStrategy, basic_set_visit_schedule, compose,
                        decompose, naive_strategy, sample_allocation, solve_assignment, synthesize)

__version__ = "0.1.0"

__all__ = [
    "Assignment", "BasicSet", "BoundSolution", "GameStructure", "Infeasible", "ModularStrategy", "NaiveStrategy",
    "PatrolError", "ProtectionReport", "VertexGroup", "alpha_max", "basic_set_visit_schedule",
    "best_response_level", "brute_force_window_damage", "compose", "damage", "decompose", "invert_vertex_q",
    "min_patrollers", "naive_strategy", "protection_upper_bound", "relative_deviation", "sample_allocation",
    "simulate", "solve_assignment", "synthesize", "validate", "visit_profile",
]
