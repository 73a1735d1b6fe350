"""Finite stochastic games: profile values, deviation checks and equilibrium search.

Payoffs are stored per player as arrays of shape ``(n_states, *action_counts)``
and the transition as ``(n_states, *action_counts, n_states)``. The value of
a stationary profile solves ``v = r + c T v`` with continuation weight
``c = 1 - theta`` (``continuation="complement"``) or ``c = theta``
(``continuation="standard"``).
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidSpec


@dataclass
class FiniteGame:
    payoff: np.ndarray
    transition: np.ndarray
    theta: float
    continuation: str = "complement"
    state_labels: list | None = None
    weather_tag: float = 0.0

    def __post_init__(self):
        self.payoff = np.asarray(self.payoff, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        if self.payoff.ndim < 2:
            raise InvalidSpec("payoff must have shape (players, states, *actions)")
        n_players = self.payoff.shape[0]
        if self.payoff.ndim != n_players + 2:
            raise InvalidSpec(f"payoff has {self.payoff.ndim - 2} action axes for {n_players} players")
        if self.transition.shape != self.payoff.shape[1:] + (self.n_states,):
            raise InvalidSpec(f"transition shape {self.transition.shape} does not match payoff {self.payoff.shape}")
        if not 0.0 < self.theta < 1.0:
            raise InvalidSpec("theta must lie in (0, 1)")
        if self.continuation not in ("complement", "standard"):
            raise InvalidSpec("continuation must be 'complement' or 'standard'")
        if not np.all(np.isfinite(self.payoff)):
            raise InvalidSpec("payoffs must be finite")
        if np.any(self.transition < 0) or np.max(np.abs(self.transition.sum(axis=-1) - 1.0)) > 1e-12:
            raise InvalidSpec("transition rows must be non-negative and sum to 1")
        if self.state_labels is None:
            self.state_labels = list(range(self.n_states))

    @property
    def n_players(self) -> int:
        return self.payoff.shape[0]

    @property
    def n_states(self) -> int:
        return self.payoff.shape[1]

    @property
    def action_counts(self) -> tuple[int, ...]:
        return self.payoff.shape[2:]

    @property
    def cont(self) -> float:
        return 1.0 - self.theta if self.continuation == "complement" else self.theta

    def permuted(self, perm: Sequence[int]) -> "FiniteGame":
        """Same game with state ``k`` of the result being state ``perm[k]`` here."""
        perm = np.asarray(perm)
        trans = self.transition[perm][..., perm]
        labels = [self.state_labels[k] for k in perm]
        return FiniteGame(self.payoff[:, perm], trans, self.theta, self.continuation, labels, self.weather_tag)


Profile = list  # one (n_states, n_actions_i) array per player


def uniform_profile(game: FiniteGame) -> Profile:
    return [np.full((game.n_states, n), 1.0 / n) for n in game.action_counts]


def pure_profile(game: FiniteGame, actions: Sequence[Sequence[int]]) -> Profile:
    out = []
    for i, n in enumerate(game.action_counts):
        p = np.zeros((game.n_states, n))
        p[np.arange(game.n_states), np.asarray(actions[i])] = 1.0
        out.append(p)
    return out


def _joint(profile: Profile, skip: int | None = None) -> np.ndarray:
    """Per-state product measure over joint actions, shape (n_states, *actions)."""
    n_states = profile[0].shape[0]
    out = np.ones((n_states,))
    for i, p in enumerate(profile):
        q = np.ones_like(p) if i == skip else p
        out = out[..., None] * q.reshape((n_states,) + (1,) * (out.ndim - 1) + (q.shape[1],))
    return out


def _sum_actions(arr: np.ndarray, n_players: int) -> np.ndarray:
    return arr.sum(axis=tuple(range(1, n_players + 1)))


def value_of_profile(game: FiniteGame, profile: Profile) -> np.ndarray:
    """Per-player, per-state values, shape ``(n_players, n_states)``."""
    joint = _joint(profile)
    n = game.n_players
    t_alpha = _sum_actions(joint[..., None] * game.transition, n)
    a = np.eye(game.n_states) - game.cont * t_alpha
    rewards = np.stack([_sum_actions(joint * game.payoff[i], n) for i in range(n)], axis=1)
    return np.linalg.solve(a, rewards).T


def action_values(game: FiniteGame, profile: Profile, v: np.ndarray, player: int) -> np.ndarray:
    """Q(s, a_i): player's payoff plus continuation against the others' mix."""
    n = game.n_players
    others = _joint(profile, skip=player)
    cont = game.payoff[player] + game.cont * np.tensordot(game.transition, v[player], axes=([-1], [0]))
    weighted = others * cont
    axes = tuple(k + 1 for k in range(n) if k != player)
    return weighted.sum(axis=axes)


def deviation_check(game: FiniteGame, profile: Profile, v: np.ndarray, tol: float = 1e-9) -> list[np.ndarray]:
    """For each player an (n_states, n_actions) table: True where no pure deviation gains."""
    return [v[i][:, None] >= action_values(game, profile, v, i) - tol for i in range(game.n_players)]


def certified(checks: list[np.ndarray]) -> bool:
    return all(bool(c.all()) for c in checks)


@dataclass
class KnowledgePartition:
    blocks: list[list[list[int]]]

    @classmethod
    def singletons(cls, game: FiniteGame) -> "KnowledgePartition":
        return cls([[[s] for s in range(game.n_states)] for _ in range(game.n_players)])

    def validate(self, n_states: int):
        for i, blocks in enumerate(self.blocks):
            seen = sorted(s for b in blocks for s in b)
            if seen != list(range(n_states)):
                raise InvalidSpec(f"player {i} blocks do not partition the states")

    def is_trivial(self) -> bool:
        return all(len(b) == 1 for blocks in self.blocks for b in blocks)


@dataclass
class FeasibilityReport:
    simplex: list[str] = field(default_factory=list)
    measurability: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.simplex and not self.measurability


def feasibility_checks(profile: Profile, partition: KnowledgePartition | None = None, tol: float = 1e-12) -> FeasibilityReport:
    rep = FeasibilityReport()
    for i, p in enumerate(profile):
        for s in range(p.shape[0]):
            if np.any(p[s] < 0):
                rep.simplex.append(f"player {i} state {s}: negative probability")
            if abs(p[s].sum() - 1.0) > tol:
                rep.simplex.append(f"player {i} state {s}: probabilities sum to {p[s].sum()!r}")
    if partition is not None:
        for i, blocks in enumerate(partition.blocks):
            for b in blocks:
                for s in b[1:]:
                    if np.max(np.abs(profile[i][s] - profile[i][b[0]])) > tol:
                        rep.measurability.append(f"player {i}: strategy differs between states {b[0]} and {s}")
    return rep


# ---------------------------------------------------------------------------
# Best responses
# ---------------------------------------------------------------------------


def best_response(game: FiniteGame, profile: Profile, player: int, blocks=None, tol: float = 1e-12, max_iters: int = 1000) -> np.ndarray:
    """Optimal pure stationary reply of ``player`` by policy iteration.

    With ``blocks`` the reply is held constant on each block, choosing the
    action with the best block-summed value. Ties go to the lowest index.
    """
    n_states = game.n_states
    n_act = game.action_counts[player]
    n = game.n_players
    others = _joint(profile, skip=player)
    axes = tuple(k + 1 for k in range(n) if k != player)
    reward = (others * game.payoff[player]).sum(axis=axes)  # (S, A_i)
    trans = (others[..., None] * game.transition).sum(axis=axes)  # (S, A_i, S)
    policy = np.zeros(n_states, dtype=int)
    for _ in range(max_iters):
        p = trans[np.arange(n_states), policy]
        r = reward[np.arange(n_states), policy]
        v = np.linalg.solve(np.eye(n_states) - game.cont * p, r)
        q = reward + game.cont * trans @ v
        new = policy.copy()
        groups = blocks if blocks is not None else [[s] for s in range(n_states)]
        for b in groups:
            qb = q[b].sum(axis=0)
            best = qb.max()
            if qb[policy[b[0]]] < best - tol * max(1.0, abs(best)):
                new[b] = int(np.flatnonzero(qb >= best - tol * max(1.0, abs(best)))[0])
        if np.array_equal(new, policy):
            break
        policy = new
    out = np.zeros((n_states, n_act))
    out[np.arange(n_states), policy] = 1.0
    return out


def _support_enumeration(a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> list[tuple[np.ndarray, np.ndarray]]:
    """All equal-support-size Nash equilibria of the bimatrix game (a, b)."""
    m, n = a.shape
    found = []
    for k in range(1, min(m, n) + 1):
        for rows in itertools.combinations(range(m), k):
            for cols in itertools.combinations(range(n), k):
                y = _indifference(a[np.ix_(rows, cols)])
                x = _indifference(b[np.ix_(rows, cols)].T)
                if x is None or y is None:
                    continue
                xf = np.zeros(m)
                yf = np.zeros(n)
                xf[list(rows)] = x
                yf[list(cols)] = y
                u = a @ yf
                w = xf @ b
                if u[list(rows)].min() >= u.max() - tol and w[list(cols)].min() >= w.max() - tol:
                    found.append((xf, yf))
    return found


def _indifference(m: np.ndarray) -> np.ndarray | None:
    """Mix y >= 0 over columns making every row of m earn the same."""
    k = m.shape[0]
    lhs = np.zeros((k + 1, k + 1))
    lhs[:k, :k] = m
    lhs[:k, k] = -1.0
    lhs[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        return None
    y = sol[:k]
    if np.any(y < -1e-12):
        return None
    y = np.maximum(y, 0.0)
    return y / y.sum()


def _stage_matrices(game: FiniteGame, v: np.ndarray, s: int):
    cont = np.tensordot(game.transition[s], v, axes=([-1], [1]))  # (A1, A2, players)
    return [game.payoff[i, s] + game.cont * cont[..., i] for i in range(game.n_players)]


# ---------------------------------------------------------------------------
# Equilibrium search
# ---------------------------------------------------------------------------


@dataclass
class EquilibriumResult:
    profile: Profile
    values: np.ndarray
    certificate: bool
    iterations: int
    method: str


def find_equilibrium(
    game: FiniteGame,
    partition: KnowledgePartition | None = None,
    max_iters: int = 500,
    damping: float = 0.5,
    tol: float = 1e-9,
) -> EquilibriumResult:
    """Damped best response on block-constant profiles, then a stage-game polish.

    Each round tests both the damped iterate and the pure joint best reply
    against the deviation inequalities. Two-player games with singleton
    blocks that remain uncertified are polished by iterating stage games
    (each solved by support enumeration) on the continuation values.
    """
    partition = partition or KnowledgePartition.singletons(game)
    partition.validate(game.n_states)
    profile = uniform_profile(game)
    best = None
    for it in range(1, max_iters + 1):
        v = value_of_profile(game, profile)
        if certified(deviation_check(game, profile, v, tol)):
            return EquilibriumResult(profile, v, True, it, "damped-best-response")
        replies = [best_response(game, profile, i, partition.blocks[i]) for i in range(game.n_players)]
        v_pure = value_of_profile(game, replies)
        if certified(deviation_check(game, replies, v_pure, tol)):
            return EquilibriumResult(replies, v_pure, True, it, "pure-best-response")
        gap = max(float(np.max(action_values(game, profile, v, i) - v[i][:, None])) for i in range(game.n_players))
        if best is None or gap < best[0]:
            best = (gap, [p.copy() for p in profile], v)
        if gap < 1e-13 or it > 50 and game.n_players == 2 and partition.is_trivial():
            break
        profile = [(1 - damping) * p + damping * r for p, r in zip(profile, replies)]

    if game.n_players == 2 and partition.is_trivial():
        res = _stage_polish(game, profile, max_iters, tol)
        if res is not None:
            return res
    gap, prof, v = best
    return EquilibriumResult(prof, v, False, max_iters, "damped-best-response")


def _stage_polish(game: FiniteGame, start: Profile, max_iters: int, tol: float) -> EquilibriumResult | None:
    profile = [p.copy() for p in start]
    v = value_of_profile(game, profile)
    for it in range(1, max_iters + 1):
        new = [np.empty_like(p) for p in profile]
        for s in range(game.n_states):
            a, b = _stage_matrices(game, v, s)
            eqs = _support_enumeration(a, b)
            if not eqs:
                return None
            cur = np.concatenate([profile[0][s], profile[1][s]])
            x, y = min(eqs, key=lambda e: float(np.sum((np.concatenate(e) - cur) ** 2)))
            new[0][s], new[1][s] = x, y
        profile = new
        v_new = value_of_profile(game, profile)
        settled = np.max(np.abs(v_new - v)) < 1e-13
        v = v_new
        if certified(deviation_check(game, profile, v, tol)):
            return EquilibriumResult(profile, v, True, it, "stage-polish")
        if settled:
            break
    return EquilibriumResult(profile, v, False, max_iters, "stage-polish")


# ---------------------------------------------------------------------------
# Truncation, builders and IO
# ---------------------------------------------------------------------------


def reachable_states(transition: np.ndarray, start: int, depth: int = 4) -> list[int]:
    """States reachable from ``start`` in at most ``depth`` steps under any joint action."""
    n_states = transition.shape[0]
    edges = transition.reshape(n_states, -1, n_states).max(axis=1) > 0
    seen = {start: 0}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        if seen[s] == depth:
            continue
        for t in np.flatnonzero(edges[s]):
            if int(t) not in seen:
                seen[int(t)] = seen[s] + 1
                queue.append(int(t))
    return sorted(seen)


def truncate(game: FiniteGame, start: int, depth: int = 4) -> FiniteGame:
    """Restrict to the reachable set; outgoing mass is renormalised onto it."""
    keep = reachable_states(game.transition, start, depth)
    trans = game.transition[keep][..., keep]
    mass = trans.sum(axis=-1, keepdims=True)
    trans = np.where(mass > 0, trans / np.where(mass > 0, mass, 1.0), 0.0)
    # a row with all mass outside the set becomes a self-loop
    dead = np.argwhere(mass[..., 0] == 0)
    for idx in dead:
        trans[tuple(idx)][idx[0]] = 1.0
    labels = [game.state_labels[k] for k in keep]
    return FiniteGame(game.payoff[:, keep], trans, game.theta, game.continuation, labels, game.weather_tag)


def matching_pennies(theta: float = 0.999999, continuation: str = "complement") -> FiniteGame:
    a = np.array([[1.0, -1.0], [-1.0, 1.0]])
    payoff = np.stack([a, -a])[:, None]
    trans = np.ones((1, 2, 2, 1))
    return FiniteGame(payoff, trans, theta, continuation)


def goal_race(n_goals: int = 4, theta: float = 0.3, continuation: str = "complement") -> FiniteGame:
    """Two sides, states = goal difference clipped to [-n, n]; attack (0) or defend (1).

    Attacking raises the chance of scoring and of conceding; the scorer
    earns 1 and the other side -1.
    """
    states = list(range(-n_goals, n_goals + 1))
    n_s = len(states)
    score_p = np.array([[0.3, 0.2], [0.15, 0.05]])  # side 0 scores, indexed (a0, a1)
    concede_p = score_p.T
    payoff = np.zeros((2, n_s, 2, 2))
    trans = np.zeros((n_s, 2, 2, n_s))
    for k, diff in enumerate(states):
        for a0 in range(2):
            for a1 in range(2):
                up = score_p[a0, a1]
                down = concede_p[a0, a1]
                payoff[0, k, a0, a1] = up - down + 0.05 * diff
                payoff[1, k, a0, a1] = down - up - 0.05 * diff
                trans[k, a0, a1, min(k + 1, n_s - 1)] += up
                trans[k, a0, a1, max(k - 1, 0)] += down
                trans[k, a0, a1, k] += 1.0 - up - down
    return FiniteGame(payoff, trans, theta, continuation, states)


def game_from_dict(spec: dict) -> FiniteGame:
    """Build from a mapping with ``payoff``, ``transition``, ``theta`` and optional labels."""
    if "builtin" in spec:
        name = spec["builtin"]
        kwargs = {k: v for k, v in spec.items() if k not in ("builtin", "start", "depth")}
        builders = {"matching_pennies": matching_pennies, "goal_race": goal_race}
        if name not in builders:
            raise InvalidSpec(f"unknown built-in game {name!r}")
        game = builders[name](**kwargs)
    else:
        for key in ("payoff", "transition", "theta"):
            if key not in spec:
                raise InvalidSpec(f"game definition lacks {key!r}")
        game = FiniteGame(
            np.asarray(spec["payoff"], dtype=float),
            np.asarray(spec["transition"], dtype=float),
            float(spec["theta"]),
            spec.get("continuation", "complement"),
            spec.get("states"),
            float(spec.get("weather_tag", 0.0)),
        )
    if "start" in spec:
        game = truncate(game, int(spec["start"]), int(spec.get("depth", 4)))
    return game


def profile_rows(game: FiniteGame, profile: Profile) -> list[list]:
    rows = []
    for i, p in enumerate(profile):
        for s in range(game.n_states):
            for a in range(p.shape[1]):
                rows.append([i, game.state_labels[s], a, float(p[s, a])])
    return rows
