"""Finite constrained MDP model, chain simulation, and instance generators.

A :class:`TabularCmdp` owns the transition tensor, the reward in [0, 1], the
cost in [-1, 1] and the initial state distribution.  Simulation threads one
continuous chain through a :class:`ChainCursor`; nothing in this package ever
resets the chain between subroutine calls.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ErgodicityError

_ATOL = 1e-12


class Transition(NamedTuple):
    s: int
    a: int
    s_next: int
    reward: float
    cost: float


@dataclass(frozen=True)
class TabularCmdp:
    """Finite CMDP: transition P[s,a,s'], reward r[s,a], cost c[s,a], initial rho."""

    transition: np.ndarray
    reward: np.ndarray
    cost: np.ndarray
    initial_dist: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.transition, dtype=float)
        r = np.asarray(self.reward, dtype=float)
        c = np.asarray(self.cost, dtype=float)
        rho = np.asarray(self.initial_dist, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ConfigError(f"transition must have shape (S, A, S), got {p.shape}")
        ns, na = p.shape[0], p.shape[1]
        if r.shape != (ns, na) or c.shape != (ns, na) or rho.shape != (ns,):
            raise ConfigError("reward/cost/initial_dist shapes inconsistent with transition")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=2) - 1.0) > _ATOL):
            raise ConfigError("each transition slice P[s,a,:] must be a distribution")
        if np.any(r < 0) or np.any(r > 1):
            raise ConfigError("reward entries must lie in [0, 1]")
        if np.any(c < -1) or np.any(c > 1):
            raise ConfigError("cost entries must lie in [-1, 1]")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > _ATOL:
            raise ConfigError("initial_dist must be a distribution")
        for name, arr in (("transition", p), ("reward", r), ("cost", c), ("initial_dist", rho)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def signal(self, which: str) -> np.ndarray:
        """Reward or cost table selected by ``which`` in {"reward", "cost"}."""
        if which == "reward":
            return self.reward
        if which == "cost":
            return self.cost
        raise ConfigError(f"unknown signal {which!r}, expected 'reward' or 'cost'")

    def to_json(self) -> str:
        doc = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
            "cost": self.cost.tolist(),
            "initial_dist": self.initial_dist.tolist(),
            "meta": self.meta,
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "TabularCmdp":
        doc = json.loads(text)
        known = {"n_states", "n_actions", "transition", "reward", "cost", "initial_dist", "meta"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown CMDP fields: {sorted(unknown)}")
        cmdp = TabularCmdp(
            transition=np.array(doc["transition"], dtype=float),
            reward=np.array(doc["reward"], dtype=float),
            cost=np.array(doc["cost"], dtype=float),
            initial_dist=np.array(doc["initial_dist"], dtype=float),
            meta=doc.get("meta", {}),
        )
        if cmdp.n_states != doc["n_states"] or cmdp.n_actions != doc["n_actions"]:
            raise ConfigError("declared n_states/n_actions do not match array shapes")
        return cmdp


class ChainCursor:
    """Single-owner position on one continuous chain plus its random stream.

    Advancing the cursor (via :func:`sample_trajectory`) is the only way the
    state evolves; the stream may be swapped between subroutine blocks but the
    state is never reset.
    """

    __slots__ = ("state", "rng")

    def __init__(self, state: int, rng: np.random.Generator):
        self.state = int(state)
        self.rng = rng

    @staticmethod
    def from_initial(cmdp: TabularCmdp, rng: np.random.Generator) -> "ChainCursor":
        s0 = int(rng.choice(cmdp.n_states, p=cmdp.initial_dist))
        return ChainCursor(s0, rng)


def _cumulative_rows(mat: np.ndarray) -> list[list[float]]:
    """Row-wise inclusive cumulative sums as Python lists, last entry pinned to 1."""
    cum = np.cumsum(mat, axis=1)
    cum[:, -1] = 1.0
    return [row.tolist() for row in cum]


class PolicyTables:
    """Per-policy sampling tables: cumulative action and transition rows.

    Built once per epoch so the per-transition sampling cost is two bisects.
    """

    __slots__ = ("cum_pi", "cum_p", "n_states", "n_actions")

    def __init__(self, cmdp: TabularCmdp, action_probs: np.ndarray):
        ns, na = cmdp.n_states, cmdp.n_actions
        if action_probs.shape != (ns, na):
            raise ConfigError(
                f"policy table shape {action_probs.shape} does not match CMDP ({ns}, {na})"
            )
        self.n_states = ns
        self.n_actions = na
        self.cum_pi = _cumulative_rows(action_probs)
        self.cum_p = [_cumulative_rows(cmdp.transition[s]) for s in range(ns)]


def sample_steps(tables: PolicyTables, cursor: ChainCursor, n: int):
    """Advance the chain n steps; returns (states[n+1], actions[n]) as arrays.

    Consumes exactly 2n uniforms from the cursor stream (action then next
    state per step), so two calls of lengths L1, L2 replay identically as one
    call of length L1 + L2.
    """
    u = cursor.rng.random(2 * n).tolist()
    cum_pi = tables.cum_pi
    cum_p = tables.cum_p
    states = np.empty(n + 1, dtype=np.int64)
    actions = np.empty(n, dtype=np.int64)
    s = cursor.state
    states[0] = s
    k = 0
    for t in range(n):
        a = bisect_right(cum_pi[s], u[k])
        k += 1
        s = bisect_right(cum_p[s][a], u[k])
        k += 1
        actions[t] = a
        states[t + 1] = s
    cursor.state = s
    return states, actions


def sample_trajectory(cmdp: TabularCmdp, policy, cursor: ChainCursor, length: int) -> list[Transition]:
    """Roll the chain forward ``length`` steps under ``policy`` from the cursor."""
    if length < 1:
        raise ConfigError("trajectory length must be >= 1")
    probs = policy.all_probs()
    if probs.shape != (cmdp.n_states, cmdp.n_actions):
        raise ConfigError(
            f"policy is over {probs.shape} but CMDP is ({cmdp.n_states}, {cmdp.n_actions})"
        )
    tables = PolicyTables(cmdp, probs)
    states, actions = sample_steps(tables, cursor, length)
    r = cmdp.reward
    c = cmdp.cost
    return [
        Transition(int(states[t]), int(actions[t]), int(states[t + 1]),
                   float(r[states[t], actions[t]]), float(c[states[t], actions[t]]))
        for t in range(length)
    ]


def make_random_ergodic(n_states: int, n_actions: int, seed: int, smoothing: float = 0.1) -> TabularCmdp:
    """Random CMDP whose chain is ergodic under every policy by construction.

    Each P[s,a,:] is a Dirichlet draw mixed with the uniform distribution at
    weight ``smoothing``, which floors every entry at smoothing/n_states and
    hence makes the induced chain irreducible and aperiodic for any policy.
    """
    if not 0.0 < smoothing < 1.0:
        raise ConfigError("smoothing must lie in (0, 1); 0 would forfeit ergodicity")
    rng = np.random.default_rng(seed)
    raw = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    transition = (1.0 - smoothing) * raw + smoothing / n_states
    reward = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    cost = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    rho = rng.dirichlet(np.ones(n_states))
    return TabularCmdp(
        transition=transition,
        reward=reward,
        cost=cost,
        initial_dist=rho,
        meta={"seed": seed, "generator": "make_random_ergodic", "smoothing": smoothing},
    )


def induced_chain(cmdp: TabularCmdp, action_probs: np.ndarray) -> np.ndarray:
    """State transition matrix P^pi[s, s'] = sum_a pi(a|s) P[s,a,s']."""
    return np.einsum("sa,sap->sp", action_probs, cmdp.transition)


def _bool_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a.astype(float) @ b.astype(float)) > 0.0


def _reachability_closure(adj: np.ndarray) -> np.ndarray:
    reach = adj | np.eye(adj.shape[0], dtype=bool)
    for _ in range(math.ceil(math.log2(max(adj.shape[0], 2)))):
        reach = reach | _bool_product(reach, reach)
    return reach


def _is_irreducible(chain: np.ndarray) -> bool:
    reach = _reachability_closure(chain > 0.0)
    return bool(reach.all())


def _is_primitive(chain: np.ndarray) -> bool:
    # Wielandt: an irreducible nonnegative matrix is primitive iff
    # A^((n-1)^2 + 1) is entrywise positive.
    n = chain.shape[0]
    target = (n - 1) ** 2 + 1
    power = chain > 0.0
    result = np.eye(n, dtype=bool)
    k = target
    while k:
        if k & 1:
            result = _bool_product(result, power)
        power = _bool_product(power, power)
        k >>= 1
    return bool(result.all())


def check_ergodic(cmdp: TabularCmdp, n_probe_policies: int = 8, seed: int = 0) -> bool:
    """Spot-check ergodicity under the uniform policy and random probe policies.

    Sound at desk scale, not a proof over all policies: a reducible or
    periodic chain under any probe fails the check.
    """
    if n_probe_policies < 1:
        raise ConfigError("n_probe_policies must be >= 1")
    ns, na = cmdp.n_states, cmdp.n_actions
    rng = np.random.default_rng(seed)
    probes = [np.full((ns, na), 1.0 / na)]
    for _ in range(n_probe_policies):
        probes.append(rng.dirichlet(np.ones(na), size=ns))
    for probs in probes:
        chain = induced_chain(cmdp, probs)
        if not (_is_irreducible(chain) and _is_primitive(chain)):
            return False
    return True


def require_ergodic(chain: np.ndarray, context: str = "") -> None:
    if not (_is_irreducible(chain) and _is_primitive(chain)):
        suffix = f" ({context})" if context else ""
        raise ErgodicityError(f"induced chain is not irreducible and aperiodic{suffix}")
