"""Undirected player networks: connectivity, cycles, distances.

The monitoring/communication structure of the repeated game is an undirected
graph over players 1..n. Everything here is exact and deterministic: the
longest-cycle search is an exhaustive DFS (desk scale), and cycle witnesses
break ties lexicographically so golden tests are stable.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

from .errors import AcyclicGraphError, InputError


def _canonical_edges(edges: Iterable[Tuple[int, int]]) -> Tuple[Tuple[int, int], ...]:
    out = []
    for e in edges:
        pair = tuple(e)
        if len(pair) != 2:
            raise InputError(f"edge {list(e)} must have exactly two endpoints")
        a, b = pair
        out.append((a, b) if a < b else (b, a))
    # deterministic order, duplicates collapsed
    return tuple(sorted(set(out)))


@dataclass(frozen=True)
class Network:
    """Undirected graph over a fixed vertex set (1-based labels by default).

    ``vertices`` is kept explicit so that vertex removal preserves the labels
    of the remaining players.
    """

    player_count: int
    edges: Tuple[Tuple[int, int], ...]
    vertices: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.player_count < 1:
            raise InputError(f"player_count must be positive, got {self.player_count}")
        verts = self.vertices or tuple(range(1, self.player_count + 1))
        object.__setattr__(self, "vertices", verts)
        if len(verts) != self.player_count:
            raise InputError(
                f"vertex list has {len(verts)} entries but player_count is {self.player_count}"
            )
        vset = set(verts)
        object.__setattr__(self, "edges", _canonical_edges(self.edges))
        for (a, b) in self.edges:
            if a == b:
                raise InputError(f"edge [{a}, {b}] is a self-loop")
            if a not in vset or b not in vset:
                raise InputError(f"edge [{a}, {b}] has an endpoint outside the vertex set")

    def vertex_set(self) -> FrozenSet[int]:
        return frozenset(self.vertices)


def network(player_count: int, edges: Iterable[Tuple[int, int]]) -> Network:
    """Convenience constructor over vertices 1..player_count."""
    return Network(player_count=player_count, edges=tuple(tuple(e) for e in edges))


def network_from_json(data) -> Network:
    """Build a Network from ``{"n": int, "edges": [[i, j], ...]}`` (dict or JSON text)."""
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    if not isinstance(data, dict) or "n" not in data or "edges" not in data:
        raise InputError('graph JSON must be an object with keys "n" and "edges"')
    n = data["n"]
    if not isinstance(n, int) or n < 1:
        raise InputError(f'"n" must be a positive integer, got {n!r}')
    edges = []
    for e in data["edges"]:
        if not isinstance(e, (list, tuple)) or len(e) != 2:
            raise InputError(f"edge {e!r} must be a pair [i, j]")
        a, b = e
        if not isinstance(a, int) or not isinstance(b, int):
            raise InputError(f"edge {e!r} has non-integer endpoints")
        if a == b:
            raise InputError(f"edge [{a}, {b}] is a self-loop")
        if not (1 <= a <= n) or not (1 <= b <= n):
            raise InputError(f"edge [{a}, {b}] out of range for n={n}")
        edges.append((a, b))
    return Network(player_count=n, edges=tuple(edges))


@dataclass(frozen=True)
class CycleWitness:
    """A simple cycle, written as its vertex sequence (closed implicitly)."""

    vertices: Tuple[int, ...]
    length: int

    def __post_init__(self):
        if len(set(self.vertices)) != len(self.vertices):
            raise InputError("cycle witness vertices must be distinct")
        if self.length != len(self.vertices):
            raise InputError("cycle witness length must equal its vertex count")
        if self.length < 3:
            raise InputError("a cycle needs at least 3 vertices")


@lru_cache(maxsize=None)
def adjacency(g: Network) -> Dict[int, Tuple[int, ...]]:
    """Adjacency map with neighbor tuples in ascending order."""
    adj: Dict[int, List[int]] = {v: [] for v in g.vertices}
    for (a, b) in g.edges:
        adj[a].append(b)
        adj[b].append(a)
    return {v: tuple(sorted(ns)) for v, ns in adj.items()}


def _require_vertex(g: Network, i: int) -> None:
    if i not in adjacency(g):
        raise InputError(f"player {i} is not a vertex of this network")


def neighbors(g: Network, i: int) -> FrozenSet[int]:
    """The set of players adjacent to i."""
    _require_vertex(g, i)
    return frozenset(adjacency(g)[i])


def remove_vertex(g: Network, i: int) -> Network:
    """The network with player i (and all incident edges) deleted; labels kept."""
    _require_vertex(g, i)
    verts = tuple(v for v in g.vertices if v != i)
    edges = tuple(e for e in g.edges if i not in e)
    return Network(player_count=len(verts), edges=edges, vertices=verts)


def is_connected(g: Network) -> bool:
    """BFS connectivity over the network's vertex set (empty/singleton count as connected)."""
    verts = g.vertices
    if len(verts) <= 1:
        return True
    adj = adjacency(g)
    seen = {verts[0]}
    queue = deque([verts[0]])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == len(verts)


def is_two_connected(g: Network) -> bool:
    """True iff g is connected and removing any single vertex leaves it connected.

    Uses articulation-point detection (iterative lowpoint DFS); agrees with the
    remove-each-vertex brute force by construction of the lowpoint condition.
    """
    if g.player_count < 2:
        raise InputError("2-connectivity needs at least 2 players")
    if not is_connected(g):
        return False
    if g.player_count == 2:
        # Removing either endpoint leaves a single vertex, which is connected.
        return True
    adj = adjacency(g)
    root = g.vertices[0]
    disc: Dict[int, int] = {}
    low: Dict[int, int] = {}
    parent: Dict[int, Optional[int]] = {root: None}
    counter = 0
    root_children = 0
    stack: List[Tuple[int, int]] = [(root, 0)]
    disc[root] = low[root] = counter
    counter += 1
    while stack:
        v, idx = stack[-1]
        ns = adj[v]
        if idx < len(ns):
            stack[-1] = (v, idx + 1)
            w = ns[idx]
            if w not in disc:
                parent[w] = v
                if v == root:
                    root_children += 1
                disc[w] = low[w] = counter
                counter += 1
                stack.append((w, 0))
            elif w != parent[v]:
                low[v] = min(low[v], disc[w])
        else:
            stack.pop()
            p = parent[v]
            if p is not None:
                low[p] = min(low[p], low[v])
                if p != root and low[v] >= disc[p]:
                    return False  # p is an articulation vertex
    if root_children > 1:
        return False
    return True


def articulation_vertices(g: Network) -> Tuple[int, ...]:
    """All cut vertices, found by the brute-force definition (used for witnesses)."""
    if g.player_count < 3:
        return ()
    out = []
    for v in g.vertices:
        if not is_connected(remove_vertex(g, v)):
            out.append(v)
    return tuple(out)


def distance(g: Network, i: int, j: int):
    """Shortest-path edge count between i and j; ``math.inf`` if disconnected."""
    _require_vertex(g, i)
    _require_vertex(g, j)
    if i == j:
        return 0
    adj = adjacency(g)
    dist = {i: 0}
    queue = deque([i])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                if w == j:
                    return dist[w]
                queue.append(w)
    return math.inf


def distances_from(g: Network, i: int) -> Dict[int, float]:
    """BFS distance from i to every vertex (math.inf where unreachable)."""
    _require_vertex(g, i)
    adj = adjacency(g)
    dist: Dict[int, float] = {i: 0}
    queue = deque([i])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return {v: dist.get(v, math.inf) for v in g.vertices}


def _reachable(adj: Dict[int, Tuple[int, ...]], start: int, blocked: set) -> set:
    """Vertices reachable from start while never entering ``blocked``."""
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen and w not in blocked:
                seen.add(w)
                queue.append(w)
    return seen


def cycle_through(g: Network, i: int, j: int) -> Optional[CycleWitness]:
    """A simple cycle containing both i and j, or None if no such cycle exists.

    Among all witnesses the lexicographically smallest vertex sequence starting
    at min(i, j) is returned, which a depth-first search in ascending neighbor
    order finds first (ending a sequence is lexicographically smaller than
    extending it, so we try to close the cycle before recursing).
    """
    _require_vertex(g, i)
    _require_vertex(g, j)
    if i == j:
        raise InputError(f"cycle_through needs two distinct players, got {i} twice")
    start, other = min(i, j), max(i, j)
    adj = adjacency(g)
    start_adj = set(adj[start])

    path: List[int] = [start]
    on_path = {start}

    def _prune(frontier: int) -> bool:
        """Can a path from ``frontier`` still pick up ``other`` and re-enter start?"""
        reach = _reachable(adj, frontier, on_path - {frontier})
        if other not in on_path and other not in reach:
            return False
        return any(u in start_adj for u in reach)

    def _extend(v: int) -> Optional[List[int]]:
        if len(path) >= 3 and other in on_path and v in start_adj:
            return list(path)
        for w in adj[v]:
            if w in on_path:
                continue
            path.append(w)
            on_path.add(w)
            if _prune(w):
                found = _extend(w)
                if found is not None:
                    return found
            on_path.remove(w)
            path.pop()
        return None

    seq = _extend(start)
    if seq is None:
        return None
    return CycleWitness(vertices=tuple(seq), length=len(seq))


def longest_cycle_length(g: Network) -> int:
    """Length (vertex count) of the longest simple cycle, by exhaustive DFS.

    Exact but exponential in the worst case; fine for the desk-scale graphs
    this package targets (roughly n <= 15, or larger sparse graphs). Callers
    needing protocol constants on bigger graphs can supply an explicit
    override through their config instead of calling this.
    """
    adj = adjacency(g)
    n = g.player_count
    best = 0

    # Each simple cycle is found once, rooted at its smallest vertex.
    for root in g.vertices:
        allowed = {v for v in g.vertices if v > root}
        path = [root]
        on_path = {root}
        root_adj = set(adj[root])

        def _extend(v: int):
            nonlocal best
            if len(path) >= 3 and v in root_adj and len(path) > best:
                best = len(path)
            if best == n:
                return
            for w in adj[v]:
                if w not in allowed or w in on_path:
                    continue
                path.append(w)
                on_path.add(w)
                # Upper bound: current path plus everything still reachable
                # from w outside the path (only vertices above the root count).
                reach = _reachable(adj, w, on_path - {w})
                reach &= allowed
                bound = len(path) + len(reach - on_path)
                if bound > best and any(u in root_adj for u in reach):
                    _extend(w)
                on_path.remove(w)
                path.pop()

        _extend(root)
        if best == n:
            break

    if best < 3:
        raise AcyclicGraphError("no cycle; graph cannot be 2-connected")
    return best


def validate_cycle_witness(g: Network, w: CycleWitness) -> bool:
    """Check cyclic adjacency of a witness against its host graph."""
    adj = adjacency(g)
    k = len(w.vertices)
    for idx, v in enumerate(w.vertices):
        nxt = w.vertices[(idx + 1) % k]
        if nxt not in adj.get(v, ()):
            return False
    return True
