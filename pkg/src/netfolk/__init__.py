"""Repeated games on networks: equilibrium construction and simulation."""

from .errors import (
    AcyclicGraphError,
    DegenerateProtocolError,
    FeasibilityError,
    InputError,
    NetfolkError,
    PreconditionError,
)
from .graph import (
    CycleWitness,
    Network,
    articulation_vertices,
    cycle_through,
    distance,
    is_two_connected,
    longest_cycle_length,
    neighbors,
    network,
    network_from_json,
    remove_vertex,
)

__all__ = [
    "AcyclicGraphError",
    "CycleWitness",
    "DegenerateProtocolError",
    "FeasibilityError",
    "InputError",
    "Network",
    "NetfolkError",
    "PreconditionError",
    "articulation_vertices",
    "cycle_through",
    "distance",
    "is_two_connected",
    "longest_cycle_length",
    "neighbors",
    "network",
    "network_from_json",
    "remove_vertex",
]

__version__ = "0.1.0"
