"""Receding-horizon better-response dynamics for periodic aggregative routing games."""

from ._kernel import BACKEND
from .engine import (
    RHState,
    Trajectory,
    convergence_report,
    phase_step,
    rh_step,
    rotate,
    run,
)
from .model import (
    AgentSpec,
    ExternalLoad,
    Game,
    PriceModel,
    aggregate_traffic,
    feasibility_check,
    gamma,
    local_cost,
    path_price,
    potential,
)
from .network import NetworkModel, build_network
from .oracle import equilibrium_residual, fixed_point_cross_check, frozen_best_response
from .routing import (
    SwapTuple,
    agent_update,
    apply_swap,
    availability_pairs_base,
    availability_set,
    best_swaps,
    population_update,
    swap_amount,
    swap_gain,
)

__version__ = "0.1.0"
