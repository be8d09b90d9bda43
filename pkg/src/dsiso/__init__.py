"""Distributed resilient interval observers for LTI systems under false data injection."""
from .agent import ObserverGains, ObserverMatrices, build_observer_matrices, local_input_update, local_state_update
from .decomposition import (AgentMeasurementModel, AssumptionViolated, DecomposedAgentModel, PlantModel, decompose,
                            reconstruct_input, transform_measurement)
from .intervals import EmptyIntersection, IntervalVector, SplitMatrix, bound_linear_map, intersect, split
from .kernels import DEFAULT_BACKEND
from .messaging import CommGraph, MessageBus
from .network import DistributedObserver, SwitchRecord, network_update, run_observer, steady_state_bounds
from .synthesis import design_lp, feasibility_lp, run_initialization, spectral_radius

__version__ = "0.1.0"
