"""Stage games: payoffs, minmax levels, feasible payoff geometry, targeting.

Two game representations share one interface:

* ``TensorGame`` stores the full payoff tensor (fine for a handful of
  players).
* ``StructuredGame`` stores graph-local payoffs (own-action term plus one
  term per network edge) together with a declared profile pool, so that the
  hull machinery stays tractable for dozens of players.

All hull computations (feasibility, interior, targeting) run over the game's
profile pool. For tensor games the pool is exhaustive; for structured games
it is the declared list, which by construction contains each player's payoff
maximizer and enough points to span the payoff space.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog, lsq_linear

from .errors import FeasibilityError, InputError
from .graph import Network, adjacency

Profile = Tuple[int, ...]

_WEIGHT_TOL = 1e-9
_HULL_TOL = 1e-9
_BR_TIE_TOL = 1e-9


# ----------------------------------------------------------------------------
# game representations
# ----------------------------------------------------------------------------

class StageGame:
    """Common interface of the two game representations (players are 1-based)."""

    action_counts: Tuple[int, ...]

    @property
    def n_players(self) -> int:
        return len(self.action_counts)

    def payoff(self, profile: Profile) -> np.ndarray:
        raise NotImplementedError

    def profile_pool(self) -> Tuple[Profile, ...]:
        """Profiles whose payoff vectors the hull machinery works over."""
        raise NotImplementedError

    def pool_payoffs(self) -> np.ndarray:
        """Payoff matrix of the pool, one row per pool profile."""
        raise NotImplementedError

    def opponents_affecting(self, k: int) -> Tuple[int, ...]:
        """Players other than k whose actions can change k's payoff."""
        raise NotImplementedError

    def max_payoff(self, i: int) -> float:
        """Player i's greatest one-shot payoff (exact)."""
        raise NotImplementedError

    def shifted(self, offsets: np.ndarray) -> "StageGame":
        """Same game with u_i replaced by u_i - offsets[i]."""
        raise NotImplementedError

    def _validate_counts(self):
        if any(m < 2 for m in self.action_counts):
            raise InputError(
                f"every player needs at least 2 actions, got {self.action_counts}"
            )


@dataclass(frozen=True)
class TensorGame(StageGame):
    """Explicit payoff tensor with shape action_counts + (n_players,)."""

    action_counts: Tuple[int, ...]
    payoff_tensor: np.ndarray = field(compare=False)

    def __post_init__(self):
        self._validate_counts()
        expected = tuple(self.action_counts) + (len(self.action_counts),)
        tensor = np.asarray(self.payoff_tensor, dtype=float)
        if tensor.shape != expected:
            raise InputError(
                f"payoff tensor shape {tensor.shape} does not match actions {expected}"
            )
        object.__setattr__(self, "payoff_tensor", tensor)

    def payoff(self, profile: Profile) -> np.ndarray:
        return self.payoff_tensor[tuple(profile)]

    def profile_pool(self) -> Tuple[Profile, ...]:
        return tuple(itertools.product(*[range(m) for m in self.action_counts]))

    def pool_payoffs(self) -> np.ndarray:
        n = self.n_players
        return self.payoff_tensor.reshape(-1, n)

    def opponents_affecting(self, k: int) -> Tuple[int, ...]:
        return tuple(i for i in range(1, self.n_players + 1) if i != k)

    def max_payoff(self, i: int) -> float:
        return float(self.payoff_tensor[..., i - 1].max())

    def shifted(self, offsets: np.ndarray) -> "TensorGame":
        return TensorGame(
            action_counts=self.action_counts,
            payoff_tensor=self.payoff_tensor - np.asarray(offsets, dtype=float),
        )


class StructuredGame(StageGame):
    """Graph-local payoffs: u_i(a) = self_term_i(a_i) + sum_j edge_term(i,j)(a_i,a_j).

    ``self_terms[i]`` is a vector over player i's actions; ``edge_terms[(i, j)]``
    is a matrix indexed [a_i, a_j] giving i's payoff from the interaction with
    neighbor j. The declared ``pool`` drives all hull computations.
    """

    def __init__(
        self,
        net: Network,
        action_counts: Sequence[int],
        self_terms: Dict[int, np.ndarray],
        edge_terms: Dict[Tuple[int, int], np.ndarray],
        pool: Sequence[Profile],
    ):
        self.net = net
        self.action_counts = tuple(int(m) for m in action_counts)
        self._validate_counts()
        self.self_terms = {i: np.asarray(v, dtype=float) for i, v in self_terms.items()}
        self.edge_terms = {e: np.asarray(m, dtype=float) for e, m in edge_terms.items()}
        self.pool = tuple(tuple(p) for p in pool)
        self._adj = adjacency(net)
        for i in range(1, self.n_players + 1):
            if i not in self.self_terms:
                raise InputError(f"missing self-payoff term for player {i}")
            for j in self._adj[i]:
                if (i, j) not in self.edge_terms:
                    raise InputError(f"missing edge payoff term for pair ({i}, {j})")
        self._payoff_cache: Dict[Profile, np.ndarray] = {}

    def payoff(self, profile: Profile) -> np.ndarray:
        profile = tuple(profile)
        hit = self._payoff_cache.get(profile)
        if hit is not None:
            return hit
        out = np.empty(self.n_players)
        for i in range(1, self.n_players + 1):
            ai = profile[i - 1]
            total = self.self_terms[i][ai]
            for j in self._adj[i]:
                total += self.edge_terms[(i, j)][ai, profile[j - 1]]
            out[i - 1] = total
        out.setflags(write=False)
        self._payoff_cache[profile] = out
        return out

    def profile_pool(self) -> Tuple[Profile, ...]:
        return self.pool

    def pool_payoffs(self) -> np.ndarray:
        return np.array([self.payoff(p) for p in self.pool])

    def opponents_affecting(self, k: int) -> Tuple[int, ...]:
        return tuple(self._adj[k])

    def max_payoff(self, i: int) -> float:
        best = -math.inf
        for ai in range(self.action_counts[i - 1]):
            total = self.self_terms[i][ai]
            for j in self._adj[i]:
                total += self.edge_terms[(i, j)][ai].max()
            best = max(best, float(total))
        return best

    def shifted(self, offsets: np.ndarray) -> "StructuredGame":
        offsets = np.asarray(offsets, dtype=float)
        new_self = {
            i: self.self_terms[i] - offsets[i - 1] for i in self.self_terms
        }
        return StructuredGame(
            net=self.net,
            action_counts=self.action_counts,
            self_terms=new_self,
            edge_terms=self.edge_terms,
            pool=self.pool,
        )


def game_from_json(data) -> TensorGame:
    """Build a TensorGame from {"actions": [m_1..m_n], "payoffs": {"a1,a2,...": [u...]}}.

    Profile keys are comma-joined 0-based action indices; the payoff table must
    be total (one entry per profile).
    """
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    if not isinstance(data, dict) or "actions" not in data or "payoffs" not in data:
        raise InputError('game JSON must be an object with keys "actions" and "payoffs"')
    counts = tuple(data["actions"])
    if not counts or any((not isinstance(m, int)) or m < 2 for m in counts):
        raise InputError(f'"actions" must list per-player action counts >= 2, got {counts}')
    n = len(counts)
    tensor = np.full(counts + (n,), np.nan)
    for key, val in data["payoffs"].items():
        try:
            profile = tuple(int(x) for x in key.split(","))
        except ValueError:
            raise InputError(f"malformed profile key {key!r}")
        if len(profile) != n or any(not (0 <= a < m) for a, m in zip(profile, counts)):
            raise InputError(f"profile key {key!r} out of range for actions {counts}")
        if len(val) != n:
            raise InputError(f"payoff vector for profile {key!r} must have {n} entries")
        tensor[profile] = val
    if np.isnan(tensor).any():
        missing = next(
            p for p in itertools.product(*[range(m) for m in counts])
            if np.isnan(tensor[p]).any()
        )
        raise InputError(f"payoff table is missing profile {','.join(map(str, missing))}")
    return TensorGame(action_counts=counts, payoff_tensor=tensor)


# ----------------------------------------------------------------------------
# mixed profiles and minmax
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MixedProfile:
    """Independent mixes: one probability vector per participating player."""

    distributions: Dict[int, np.ndarray] = field(compare=False)

    def __post_init__(self):
        cleaned = {}
        for player, vec in self.distributions.items():
            vec = np.asarray(vec, dtype=float)
            if (vec < -_WEIGHT_TOL).any():
                raise InputError(f"negative probability in player {player}'s mix")
            if abs(vec.sum() - 1.0) > 1e-9:
                raise InputError(
                    f"player {player}'s mix sums to {vec.sum():.12f}, not 1 within 1e-9"
                )
            cleaned[player] = vec
        object.__setattr__(self, "distributions", cleaned)

    def support(self, player: int, tol: float = 1e-12) -> Tuple[int, ...]:
        vec = self.distributions[player]
        return tuple(int(a) for a in np.nonzero(vec > tol)[0])

    def is_pure(self, tol: float = 1e-12) -> bool:
        return all(len(self.support(p, tol)) == 1 for p in self.distributions)


@dataclass(frozen=True)
class MinmaxCertificate:
    """The independent minmax of one player, with the profile that enforces it.

    ``minmaxing_payoffs`` records every player's expected per-period payoff
    while the profile is played and the target best-responds (needed by the
    punishment-phase gain bounds).
    """

    target: int
    value: float
    punisher_profile: MixedProfile
    best_response_value: float
    best_response_action: int
    exact: bool
    minmaxing_payoffs: np.ndarray = field(compare=False)

    def __post_init__(self):
        if abs(self.value - self.best_response_value) > 1e-7:
            raise InputError(
                "minmax certificate inconsistent: value "
                f"{self.value} vs best response {self.best_response_value}"
            )


def _target_payoff_matrix(game: StageGame, k: int, opponents: Tuple[int, ...]) -> np.ndarray:
    """k's payoff as an array over (A_k, A_opp1, A_opp2, ...).

    Players outside ``opponents`` cannot change k's payoff and are pinned to
    action 0 during the computation.
    """
    mk = game.action_counts[k - 1]
    opp_counts = [game.action_counts[j - 1] for j in opponents]
    out = np.empty([mk] + opp_counts)
    base = [0] * game.n_players
    for ak in range(mk):
        for combo in itertools.product(*[range(m) for m in opp_counts]):
            profile = list(base)
            profile[k - 1] = ak
            for j, aj in zip(opponents, combo):
                profile[j - 1] = aj
            out[(ak,) + combo] = game.payoff(tuple(profile))[k - 1]
    return out


def _zero_sum_punisher_lp(matrix: np.ndarray) -> Tuple[np.ndarray, float]:
    """Solve min_y max_x x.M.y for the column player; returns (y, value)."""
    m_rows, m_cols = matrix.shape
    # variables: y (m_cols), t; minimize t subject to M y <= t, sum y = 1
    c = np.zeros(m_cols + 1)
    c[-1] = 1.0
    a_ub = np.hstack([matrix, -np.ones((m_rows, 1))])
    b_ub = np.zeros(m_rows)
    a_eq = np.zeros((1, m_cols + 1))
    a_eq[0, :m_cols] = 1.0
    b_eq = [1.0]
    bounds = [(0, None)] * m_cols + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if not res.success:
        raise FeasibilityError(f"zero-sum punisher LP failed: {res.message}")
    y = np.clip(res.x[:m_cols], 0.0, None)
    y /= y.sum()
    return y, float(res.x[-1])


def _correlated_minmax_lp(matrix: np.ndarray) -> float:
    """Lower bound: the minmax when opponents may correlate their mixing."""
    flat = matrix.reshape(matrix.shape[0], -1)
    _, value = _zero_sum_punisher_lp(flat)
    return value


def _alternating_minimization(
    matrix: np.ndarray, inits: List[List[np.ndarray]], max_rounds: int = 60
) -> Tuple[float, List[np.ndarray]]:
    """Best-response dynamics over opponent simplices, keeping the best run."""
    n_opp = matrix.ndim - 1
    best_val = math.inf
    best_mix: Optional[List[np.ndarray]] = None
    for init in inits:
        mixes = [m.copy() for m in init]
        current = math.inf
        for _ in range(max_rounds):
            improved = False
            for idx in range(n_opp):
                # move opponent idx's axis last, contract the other opponents
                reduced = np.moveaxis(matrix, 1 + idx, -1)
                for other in range(n_opp):
                    if other == idx:
                        continue
                    reduced = np.tensordot(reduced, mixes[other], axes=([1], [0]))
                # reduced is now (A_k, A_idx): exact inner minimization by LP
                y, val = _zero_sum_punisher_lp(reduced)
                if val < current - 1e-12:
                    current = val
                    improved = True
                mixes[idx] = y
            if not improved:
                break
        if current < best_val:
            best_val = current
            best_mix = mixes
    return best_val, best_mix


def minmax(game: StageGame, k: int, rng_seed: int = 0) -> MinmaxCertificate:
    """Independent minmax of player k over product mixes of the opponents.

    Exact for a single effective opponent (zero-sum LP). Otherwise multi-start
    alternating minimization plus exhaustive pure search; the result is flagged
    exact only when it meets the correlated-mixing lower bound, which certifies
    that no independent profile can do better.
    """
    if not (1 <= k <= game.n_players):
        raise InputError(f"player {k} out of range for {game.n_players}-player game")
    opponents = game.opponents_affecting(k)
    mk = game.action_counts[k - 1]
    if not opponents:
        raise InputError(f"player {k} is unaffected by every opponent; not supported")

    matrix = _target_payoff_matrix(game, k, opponents)

    if len(opponents) == 1:
        y, value = _zero_sum_punisher_lp(matrix)
        mixes = [y]
        exact = True
    else:
        # exhaustive pure opponent profiles
        opp_shapes = matrix.shape[1:]
        pure_best = math.inf
        pure_combo = None
        flat = matrix.reshape(mk, -1)
        maxima = flat.max(axis=0)
        idx = int(np.argmin(maxima))
        pure_best = float(maxima[idx])
        pure_combo = np.unravel_index(idx, opp_shapes)

        rng = np.random.default_rng(rng_seed)
        inits: List[List[np.ndarray]] = []
        uniform = [np.full(m, 1.0 / m) for m in opp_shapes]
        inits.append(uniform)
        pure_init = [np.eye(m)[a] for m, a in zip(opp_shapes, pure_combo)]
        inits.append(pure_init)
        for _ in range(4):
            inits.append([rng.dirichlet(np.ones(m)) for m in opp_shapes])

        alt_val, alt_mix = _alternating_minimization(matrix, inits)
        if pure_best <= alt_val:
            value = pure_best
            mixes = pure_init
        else:
            value = alt_val
            mixes = alt_mix
        lower = _correlated_minmax_lp(matrix)
        exact = value <= lower + 1e-9

    expected = matrix
    for mix in mixes:
        expected = np.tensordot(expected, mix, axes=([1], [0]))
    best_response_value = float(expected.max())
    best_response_action = int(np.nonzero(expected >= best_response_value - _BR_TIE_TOL)[0][0])

    profile = MixedProfile(distributions={j: m for j, m in zip(opponents, mixes)})

    # every player's expected payoff while this profile is played and k best-responds
    pure_actions = {k: best_response_action}
    for j in range(1, game.n_players + 1):
        if j != k and j not in profile.distributions:
            pure_actions[j] = 0
    minmaxing = expected_payoff_vector(game, pure_actions, profile.distributions)

    return MinmaxCertificate(
        target=k,
        value=float(value),
        punisher_profile=profile,
        best_response_value=best_response_value,
        best_response_action=best_response_action,
        exact=bool(exact),
        minmaxing_payoffs=minmaxing,
    )


def expected_payoff_vector(
    game: StageGame, pure_actions: Dict[int, int], mixes: Dict[int, np.ndarray]
) -> np.ndarray:
    """Expected payoff vector under pure actions for some players, mixes for the rest."""
    mixed_players = [p for p in sorted(mixes) if p not in pure_actions]
    supports = []
    for p in mixed_players:
        vec = mixes[p]
        supports.append([(a, vec[a]) for a in np.nonzero(vec > 1e-15)[0]])
    total = np.zeros(game.n_players)
    base = [0] * game.n_players
    for p, a in pure_actions.items():
        base[p - 1] = a
    for combo in itertools.product(*supports) if supports else [()]:
        profile = list(base)
        prob = 1.0
        for p, (a, q) in zip(mixed_players, combo):
            profile[p - 1] = int(a)
            prob *= q
        total += prob * game.payoff(tuple(profile))
    return total


def minmax_vector(game: StageGame, rng_seed: int = 0) -> Tuple[np.ndarray, List[MinmaxCertificate]]:
    certs = [minmax(game, k, rng_seed) for k in range(1, game.n_players + 1)]
    return np.array([c.value for c in certs]), certs


def normalize(game: StageGame, certificates: Optional[List[MinmaxCertificate]] = None) -> StageGame:
    """Shift payoffs so every player's minmax level is zero."""
    if certificates is None:
        values, _ = minmax_vector(game)
    else:
        values = np.array([c.value for c in certificates])
    return game.shifted(values)


# ----------------------------------------------------------------------------
# feasible / individually rational geometry
# ----------------------------------------------------------------------------

def hull_weights(points: np.ndarray, v: np.ndarray, tol: float = _HULL_TOL) -> Optional[np.ndarray]:
    """Convex-combination weights expressing v over the rows of points, or None.

    Solved as a nonnegative least-squares fit (with the weight-sum condition
    as an extra scaled row) using the BVLS active-set solver: the global
    minimum is zero exactly when v is in the hull, and the residual check is
    as tight as float arithmetic allows.
    """
    m, d = points.shape
    v = np.asarray(v, dtype=float)
    if v.shape != (d,):
        raise InputError(f"payoff point has dimension {v.shape}, expected {d}")
    scale = max(1.0, float(np.abs(points).max()))
    a = np.vstack([points.T, np.full(m, scale)])
    b = np.concatenate([v, [scale]])
    lam = lsq_linear(a, b, bounds=(0.0, np.inf), method="bvls").x
    total = lam.sum()
    if total <= 0:
        return None
    lam = lam / total
    if np.abs(points.T @ lam - v).max() > tol:
        return None
    return lam


def feasible_ir(game: StageGame, v: Sequence[float]) -> bool:
    """Is v in the convex hull of the pool payoffs with every coordinate > 0?

    The game must already be normalized (minmax vector at zero), so strict
    positivity is exactly strict individual rationality.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (game.n_players,):
        raise InputError(
            f"payoff point has {v.shape[0] if v.ndim == 1 else v.shape} entries, "
            f"expected {game.n_players}"
        )
    if not (v > 0).all():
        return False
    return hull_weights(game.pool_payoffs(), v) is not None


def positive_hull_margin(game: StageGame) -> Tuple[float, Optional[np.ndarray]]:
    """max t such that some hull point has every coordinate >= t; (t, point)."""
    points = game.pool_payoffs()
    m, n = points.shape
    # variables: lambda (m), t; maximize t s.t. P^T lambda >= t
    c = np.zeros(m + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-points.T, np.ones((n, 1))])
    b_ub = np.zeros(n)
    a_eq = np.zeros((1, m + 1))
    a_eq[0, :m] = 1.0
    res = linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
        bounds=[(0, None)] * m + [(None, None)], method="highs",
    )
    if not res.success:
        return -math.inf, None
    lam = np.clip(res.x[:m], 0.0, None)
    lam /= lam.sum()
    return float(res.x[-1]), points.T @ lam


def interior_nonempty(game: StageGame) -> bool:
    """Does the feasible & strictly-IR set have full dimension?

    Equivalent two-part check: the pool payoffs affinely span the whole payoff
    space, and some hull point is strictly positive. (Mixing such a point
    toward a hull-interior point stays strictly positive, so a full-dimensional
    positive ball exists exactly when both parts hold.)
    """
    points = game.pool_payoffs()
    n = game.n_players
    rank = np.linalg.matrix_rank(points[1:] - points[0], tol=1e-9 * max(1.0, np.abs(points).max()))
    if rank < n:
        return False
    margin, _ = positive_hull_margin(game)
    return margin > 1e-9


def interior_witness(game: StageGame) -> Optional[Dict[str, object]]:
    """n+1 affinely independent strictly positive hull points, if they exist."""
    if not interior_nonempty(game):
        return None
    points = game.pool_payoffs()
    n = game.n_players
    margin, center = positive_hull_margin(game)
    # choose pool points with affinely independent offsets via pivoted elimination
    offsets = points - center
    chosen: List[int] = []
    basis: List[np.ndarray] = []
    for idx in np.argsort(-np.linalg.norm(offsets, axis=1)):
        vec = offsets[idx].copy()
        for b in basis:
            vec -= (vec @ b) * b
        norm = np.linalg.norm(vec)
        if norm > 1e-9:
            basis.append(vec / norm)
            chosen.append(int(idx))
        if len(chosen) == n:
            break
    if len(chosen) < n:
        return None
    spread = max(np.linalg.norm(points[i] - center) for i in chosen)
    eta = min(0.5, (margin / 2.0) / (spread + 1.0))
    witness = [center] + [(1 - eta) * center + eta * points[i] for i in chosen]
    if any((w <= 0).any() for w in witness):
        return None
    return {"margin": margin, "points": [w.tolist() for w in witness]}


# ----------------------------------------------------------------------------
# discounting and payoff targeting
# ----------------------------------------------------------------------------

def discounted_payoff(stage_payoffs: Sequence, delta: float) -> np.ndarray:
    """(1 - delta) * sum_t delta^(t-1) * u_t over the given finite sequence."""
    if not (0.0 < delta < 1.0):
        raise InputError(f"delta must lie in (0, 1), got {delta}")
    total: Optional[np.ndarray] = None
    weight = 1.0
    for u in stage_payoffs:
        u = np.asarray(u, dtype=float)
        total = weight * u if total is None else total + weight * u
        weight *= delta
    if total is None:
        raise InputError("empty payoff sequence")
    return (1.0 - delta) * total


def sorin_bound(n_players: int) -> float:
    return max(0.5, 1.0 / n_players)


class SorinStream:
    """Deterministic pure-action stream whose continuation targets track v.

    Maintains the exact invariant
        v = (1-delta) * sum_{s<t} delta^(s-1) u(a_s) + delta^(t-1) * w_t,
    where w_t is the stage-t continuation target. Each step plays a profile
    whose hull weight is at least (1-delta) when possible (keeping the weight
    update closed-form), preferring the candidate whose next target stays
    closest to v; otherwise it falls back to re-expressing the target by LP.
    """

    def __init__(self, game: StageGame, v: Sequence[float], delta: float):
        self.game = game
        self.delta = float(delta)
        self.v = np.asarray(v, dtype=float)
        self.pool = game.profile_pool()
        self.points = game.pool_payoffs()
        lam = hull_weights(self.points, self.v)
        if lam is None:
            raise FeasibilityError(
                "target payoff is not a convex combination of the game's payoff pool",
                certificate={"v": list(map(float, self.v))},
            )
        self.weights = lam
        self.target = self.v.copy()
        self.actions: List[Profile] = []
        self.targets: List[np.ndarray] = [self.v.copy()]
        self.max_drift = 0.0
        self._scale = max(1.0, float(np.abs(self.points).max()))

    def _step(self) -> Profile:
        d = self.delta
        need = 1.0 - d
        # the closed-form weight update amplifies float noise by 1/delta per
        # step, so re-derive the weights from the target once they disagree
        # beyond roundoff; otherwise the candidate set eventually corrupts
        residual = np.abs(self.points.T @ self.weights - self.target).max()
        if residual > 1e-12 * self._scale:
            lam = hull_weights(self.points, self.target)
            if lam is not None:
                self.weights = lam
        candidates = np.nonzero(self.weights >= need - 1e-12)[0]
        if candidates.size:
            nxt = (self.target[None, :] - need * self.points[candidates]) / d
            dist = np.linalg.norm(nxt - self.v[None, :], axis=1)
            # deterministic tie-break: smallest pool index among near-minimal
            near = candidates[dist <= dist.min() + 1e-12]
            best = int(near.min())
            new_w = self.weights.copy()
            new_w[best] -= need
            new_w /= d
            self.weights = np.clip(new_w, 0.0, None)
        else:
            order = np.argsort(
                np.linalg.norm(
                    (self.target[None, :] - need * self.points) / d - self.v[None, :], axis=1
                ),
                kind="stable",
            )
            best = -1
            for idx in order:
                cand = (self.target - need * self.points[idx]) / d
                lam = hull_weights(self.points, cand)
                if lam is not None:
                    best = int(idx)
                    self.weights = lam
                    break
            if best < 0:
                raise FeasibilityError(
                    "no pure profile keeps the continuation target feasible; "
                    "delta is too low for this target",
                    certificate={"target": self.target.tolist(), "delta": d},
                )
        self.target = (self.target - need * self.points[best]) / d
        profile = self.pool[best]
        self.actions.append(profile)
        self.targets.append(self.target.copy())
        self.max_drift = max(self.max_drift, float(np.abs(self.target - self.v).max()))
        return profile

    def extend_to(self, horizon: int) -> None:
        while len(self.actions) < horizon:
            self._step()

    def action_at(self, t: int) -> Profile:
        """1-based stage index into the stream."""
        if t < 1:
            raise InputError(f"stream stages are 1-based, got {t}")
        self.extend_to(t)
        return self.actions[t - 1]

    def target_after(self, t: int) -> np.ndarray:
        """Continuation target at the start of stage t+1 (0 gives v itself)."""
        self.extend_to(t)
        return self.targets[t]


def sorin_sequence(
    game: StageGame,
    v: Sequence[float],
    delta: float,
    horizon: int,
    epsilon: float,
) -> List[Profile]:
    """A deterministic pure-action sequence targeting v at discount delta.

    Every continuation discounted average of the (infinitely extended) stream
    equals the stream's running target, which this construction keeps within
    epsilon of v; if the greedy construction cannot honor epsilon, that is
    reported rather than silently returned.
    """
    v = np.asarray(v, dtype=float)
    n = game.n_players
    bound = sorin_bound(n)
    if not (bound <= delta < 1.0):
        raise InputError(
            f"delta {delta} outside [{bound}, 1): the targeting bound max(1/2, 1/n) is violated"
        )
    if horizon < 1:
        raise InputError("horizon must be at least 1")
    if not feasible_ir(game, v):
        raise FeasibilityError(
            "target payoff is infeasible or not strictly individually rational",
            certificate={"v": v.tolist()},
        )
    stream = SorinStream(game, v, delta)
    stream.extend_to(horizon)
    if stream.max_drift > epsilon:
        raise FeasibilityError(
            f"continuation targets drift {stream.max_drift:.3e} from v, beyond epsilon {epsilon:.3e}",
            certificate={"max_drift": stream.max_drift},
        )
    return list(stream.actions)


# ----------------------------------------------------------------------------
# thresholds: v', rho, punishment lengths, delta_bar
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Thresholds:
    """Punishment/reward constants certified for a (game, v, protocol horizon)."""

    v_prime: np.ndarray = field(compare=False)
    rho: float = 0.0
    T: Tuple[int, ...] = ()
    delta_bar: float = 0.0
    max_payoffs: np.ndarray = field(compare=False, default=None)
    certificates: Tuple[MinmaxCertificate, ...] = field(compare=False, default=())


def reward_vector(v_prime: np.ndarray, rho: float, k: int) -> np.ndarray:
    """v' plus the bonus for everyone except the punished player k."""
    w = v_prime + rho
    w[k - 1] = v_prime[k - 1]
    return w


def punishment_length(v_bar_i: float, v_prime_i: float) -> int:
    """Smallest integer T >= 1 with v_bar_i / v_prime_i < 1 + T."""
    if v_prime_i <= 0:
        raise InputError(f"punishment payoff floor must be positive, got {v_prime_i}")
    ratio = v_bar_i / v_prime_i
    return max(1, math.floor(ratio - 1.0) + 1)


def _max_feasible_bonus(game: StageGame, v_prime: np.ndarray) -> float:
    """Largest rho with every bonus-shifted point still feasible (bisection)."""
    lo, hi = 0.0, float(game.pool_payoffs().max() - v_prime.min() + 1.0)

    def ok(rho: float) -> bool:
        return all(
            hull_weights(game.pool_payoffs(), reward_vector(v_prime.copy(), rho, k)) is not None
            for k in range(1, game.n_players + 1)
        )

    if not ok(0.0):
        return -1.0
    for _ in range(50):
        mid = (lo + hi) / 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def phase_one_gain_expr(
    v_bar_k: float, v_k: float, v_prime_k: float, t_k: int, horizon_l: int, delta: float
) -> float:
    """Upper bound (sign only matters) on the gain from a one-shot path deviation."""
    return v_bar_k - v_k - delta ** (horizon_l + 1) * (1 - delta ** t_k) / (1 - delta) * v_prime_k


def punisher_gain_expr(
    v_bar_k: float,
    minmaxing_payoff_k: float,
    v_prime_k: float,
    t_k: int,
    horizon_l: int,
    rho: float,
    delta: float,
) -> float:
    """Upper bound (sign only matters) on the gain from deviating while punishing."""
    return (
        v_bar_k
        - minmaxing_payoff_k
        - delta ** (horizon_l + 1) * (1 - delta ** t_k) / (1 - delta) * v_prime_k
        - delta ** (horizon_l + 1) / (1 - delta) * rho
    )


def _all_gain_exprs_negative(
    delta: float,
    v: np.ndarray,
    v_bar: np.ndarray,
    v_prime: np.ndarray,
    t_vec: Sequence[int],
    rho: float,
    horizon_l: int,
    certs: Sequence[MinmaxCertificate],
) -> bool:
    n = len(v)
    for k in range(1, n + 1):
        if phase_one_gain_expr(v_bar[k - 1], v[k - 1], v_prime[k - 1], t_vec[k - 1], horizon_l, delta) >= 0:
            return False
    for target in range(1, n + 1):
        w = certs[target - 1].minmaxing_payoffs
        for k in range(1, n + 1):
            if k == target:
                continue
            expr = punisher_gain_expr(
                v_bar[k - 1], w[k - 1], v_prime[k - 1], t_vec[k - 1], horizon_l, rho, delta
            )
            if expr >= 0:
                return False
    return True


def thresholds(
    game: StageGame,
    v: Sequence[float],
    protocol_horizon: int,
    certificates: Optional[List[MinmaxCertificate]] = None,
) -> Thresholds:
    """Select v', rho, punishment lengths T_i and the discount threshold delta_bar.

    The game must be normalized. ``protocol_horizon`` is the L constant of the
    communication protocol on the governing network, which enters both gain
    expressions through the delay of the punishment phase.
    """
    v = np.asarray(v, dtype=float)
    n = game.n_players
    if certificates is None:
        _, certificates = minmax_vector(game)
    if not feasible_ir(game, v):
        raise FeasibilityError(
            "v is not feasible and strictly individually rational",
            certificate={"v": v.tolist()},
        )
    if not interior_nonempty(game):
        raise FeasibilityError("the feasible strictly-IR set has empty interior")

    v_bar = np.array([game.max_payoff(i) for i in range(1, n + 1)])

    chosen = None
    for lam_pct in range(9, 0, -1):
        lam = lam_pct / 10.0
        v_prime = (1 - lam) * v
        if not (v_prime > 0).all():
            continue
        if hull_weights(game.pool_payoffs(), v_prime) is None:
            continue
        max_rho = _max_feasible_bonus(game, v_prime)
        if max_rho <= 1e-9:
            continue
        chosen = (v_prime, max_rho / 2.0)
        break
    if chosen is None:
        raise FeasibilityError(
            "no scaled-down v' admits a positive feasible bonus",
            certificate={"v": v.tolist()},
        )
    v_prime, rho = chosen

    t_vec = tuple(punishment_length(v_bar[i], v_prime[i]) for i in range(n))

    lower = sorin_bound(n)
    # scan 1-delta on a log grid from coarse to fine, then bisect the boundary
    grid = 1.0 - np.logspace(math.log10(1.0 - lower), -7, 160)
    passing = [
        d for d in grid
        if _all_gain_exprs_negative(d, v, v_bar, v_prime, t_vec, rho, protocol_horizon, certificates)
    ]
    if not passing:
        raise FeasibilityError(
            "no discount factor below 1 makes all gain expressions negative",
            certificate={"v_bar": v_bar.tolist(), "v_prime": v_prime.tolist(), "T": t_vec},
        )
    first_pass = min(passing)
    failing = [d for d in grid if d < first_pass]
    lo = max(failing) if failing else lower
    hi = first_pass
    for _ in range(60):
        mid = (lo + hi) / 2
        if _all_gain_exprs_negative(mid, v, v_bar, v_prime, t_vec, rho, protocol_horizon, certificates):
            hi = mid
        else:
            lo = mid
    delta_bar = max(hi, lower)

    # robustness: re-validate on samples above delta_bar, nudging up if needed
    for _ in range(5):
        samples = delta_bar + (1.0 - delta_bar) * np.linspace(0.01, 0.99, 10)
        bad = [
            d for d in samples
            if not _all_gain_exprs_negative(
                d, v, v_bar, v_prime, t_vec, rho, protocol_horizon, certificates
            )
        ]
        if not bad:
            break
        delta_bar = max(bad)
    else:
        raise FeasibilityError("could not certify a discount threshold below 1")

    return Thresholds(
        v_prime=v_prime,
        rho=float(rho),
        T=t_vec,
        delta_bar=float(delta_bar),
        max_payoffs=v_bar,
        certificates=tuple(certificates),
    )
