"""Bundled networks and stage economies for tests, campaigns, and the CLI.

Three reference economies:

* ``contribution_ring`` — four players on a ring; contributing costs 1 and
  pays 2 to each neighbor. Defection is dominant, punishments are pure.
* ``matched_bonus_square`` — four players, fully connected; each player plays
  a matching game with the next player around the ring and collects the other
  two players' contributions. Minmaxing is genuinely mixed, which exercises
  punisher indifference.
* ``contribution_web`` — the same contribution economy on a 26-player union
  of a 12-cycle and a 16-cycle sharing two vertices; the large-scale gossip
  fixture (longest cycle 20, communication span 630).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .game import StageGame, StructuredGame, TensorGame
from .graph import Network, network


# ----------------------------------------------------------------- networks


def triangle() -> Network:
    return network(3, [(1, 2), (2, 3), (1, 3)])


def ring(n: int) -> Network:
    """Simple cycle on n vertices."""
    return network(n, [(i, i % n + 1) for i in range(1, n + 1)])


def chorded_ring(n: int = 6, chord: Tuple[int, int] = (1, 4)) -> Network:
    edges = [(i, i % n + 1) for i in range(1, n + 1)] + [chord]
    return network(n, edges)


def theta_graph() -> Network:
    """Two hubs joined by three internally disjoint paths; 8 vertices."""
    return network(
        8,
        [(1, 2), (2, 3), (3, 4), (4, 5), (1, 6), (6, 7), (7, 5), (1, 8), (8, 5)],
    )


def complete(n: int) -> Network:
    return network(n, [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)])


def cut_pair_triangles() -> Network:
    """Two triangles sharing a single vertex — NOT 2-connected (vertex 3 cuts)."""
    return network(5, [(1, 2), (2, 3), (1, 3), (3, 4), (4, 5), (3, 5)])


def path_graph(n: int) -> Network:
    return network(n, [(i, i + 1) for i in range(1, n)])


def two_cycle_union() -> Network:
    """A 12-cycle and a 16-cycle sharing exactly two vertices (6 and 8).

    26 players; the longest simple cycle runs the long way around both rings
    (20 vertices), so the communication span is 1 + 17*37 = 630.
    """
    edges = [(i, i + 1) for i in range(1, 12)] + [(12, 1)]
    outer = [13, 14, 15, 6, 16, 17, 18, 19, 20, 21, 22, 23, 24, 8, 25, 26]
    for a, b in zip(outer, outer[1:] + outer[:1]):
        edges.append((a, b))
    return network(26, edges)


# ---------------------------------------------------------------- economies


@dataclass(frozen=True)
class Economy:
    """A normalized stage game on a network with a recommended payoff target."""

    name: str
    game: StageGame
    net: Network
    v: np.ndarray
    n_prime_override: Optional[int] = None


def contribution_economy(
    net: Network, name: str, v_scale: float = 0.75, n_prime_override: Optional[int] = None
) -> Economy:
    """Networked contribution game: pay 1 to grant 2 to every neighbor.

    Defection is dominant and the minmax level is 0 for everyone, so the game
    is already normalized. The payoff pool holds the all-in and all-out
    profiles plus every one-off variation of each, which spans the full
    payoff space on any connected network.
    """
    n = net.player_count
    self_terms = {i: np.array([0.0, -1.0]) for i in range(1, n + 1)}
    edge = np.array([[0.0, 2.0], [0.0, 2.0]])
    edge_terms = {}
    for a, b in net.edges:
        edge_terms[(a, b)] = edge
        edge_terms[(b, a)] = edge
    pool = [tuple([0] * n), tuple([1] * n)]
    for i in range(n):
        pool.append(tuple(0 if j == i else 1 for j in range(n)))
        pool.append(tuple(1 if j == i else 0 for j in range(n)))
    game = StructuredGame(net, (2,) * n, self_terms, edge_terms, pool)
    v = v_scale * game.payoff(tuple([1] * n))
    return Economy(name=name, game=game, net=net, v=np.asarray(v), n_prime_override=n_prime_override)


def contribution_ring(n: int = 4, v_scale: float = 0.9) -> Economy:
    return contribution_economy(ring(n), name=f"contribution-ring-{n}", v_scale=v_scale)


def matched_bonus_square() -> Economy:
    """Fully connected 4-player game with a genuinely mixed minmax.

    Player i plays a matching game against player i+1 (win 1 on a match,
    lose 1 otherwise) and additionally collects the raw actions of the other
    two players. Minmaxing player i requires player i+1 to mix half-half,
    leaving i indifferent between her actions — the fixture for punisher
    indifference and compensated rewards.
    """
    def stage_payoffs(profile):
        out = []
        for i in range(4):
            match = 1.0 if profile[i] == profile[(i + 1) % 4] else -1.0
            out.append(match + profile[(i - 1) % 4] + profile[(i + 2) % 4])
        return out

    tensor = np.zeros((2, 2, 2, 2, 4))
    for prof in itertools.product(range(2), repeat=4):
        tensor[prof] = stage_payoffs(prof)
    game = TensorGame(action_counts=(2, 2, 2, 2), payoff_tensor=tensor)
    return Economy(
        name="matched-bonus-square",
        game=game,
        net=complete(4),
        v=np.array([1.5, 1.5, 1.5, 1.5]),
    )


def contribution_web() -> Economy:
    return contribution_economy(two_cycle_union(), name="contribution-web", v_scale=0.75)


def cut_vertex_economy() -> Economy:
    """Contribution game on the cut-vertex graph; out-of-hypothesis fixture.

    The graph is not 2-connected and its longest cycle is a triangle, so the
    gossip schedule is run with an explicit block-length override.
    """
    return contribution_economy(
        cut_pair_triangles(), name="cut-pair-triangles", v_scale=0.75, n_prime_override=4
    )


_BUILDERS: Dict[str, Callable[[], Economy]] = {
    "contribution-ring-4": contribution_ring,
    "matched-bonus-square": matched_bonus_square,
    "contribution-web": contribution_web,
    "cut-pair-triangles": cut_vertex_economy,
    "contribution-ring-5": lambda: contribution_economy(ring(5), "contribution-ring-5"),
    "contribution-ring-12": lambda: contribution_economy(ring(12), "contribution-ring-12"),
    "contribution-chorded-6": lambda: contribution_economy(
        chorded_ring(6), "contribution-chorded-6"
    ),
    "contribution-theta-8": lambda: contribution_economy(theta_graph(), "contribution-theta-8"),
}


def economy(name: str) -> Economy:
    if name not in _BUILDERS:
        raise KeyError(f"unknown economy {name!r}; choose from {sorted(_BUILDERS)}")
    return _BUILDERS[name]()


def economy_names() -> Tuple[str, ...]:
    return tuple(sorted(_BUILDERS))


def campaign_economies() -> Tuple[Economy, ...]:
    """The gossip-verification fixture set: five graphs of varied shape."""
    return (
        economy("contribution-ring-5"),
        economy("contribution-chorded-6"),
        economy("contribution-theta-8"),
        economy("contribution-ring-12"),
        economy("contribution-web"),
    )
