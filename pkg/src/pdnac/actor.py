"""NPG inner loop: estimate the Fisher-preconditioned gradient direction.

With the critic output frozen, each of the H steps draws an MLMC level,
consumes that many transitions, and moves omega along the strongly convex
surrogate gradient F_hat omega - A_hat * score.  The ridge term is folded into
the deterministic part of every Fisher application, so the loop targets
(F + mu_ridge I)^{-1} grad J.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cmdp import ChainCursor, PolicyTables, TabularCmdp, Transition, sample_steps
from .errors import ConfigError, DivergenceError
from .mlmc import MlmcConfig, combine_levels, draw_level
from .policy import SoftmaxPolicy

from .critic import CriticVec


@dataclass(frozen=True)
class ActorConfig:
    gamma_omega: float = 0.1
    h_inner: int = 64
    mlmc: MlmcConfig = field(default_factory=MlmcConfig)
    mu_ridge: float = 1e-6
    guard: float = 1e6

    def __post_init__(self):
        if self.gamma_omega < 0 or self.h_inner < 0 or self.mu_ridge < 0:
            raise ConfigError("gamma_omega, h_inner and mu_ridge must be >= 0")


def npg_sample_grad(omega: np.ndarray, z: Transition, xi: CriticVec,
                    policy: SoftmaxPolicy, phi: np.ndarray, g_value: float,
                    mu_ridge: float = 0.0) -> np.ndarray:
    """Single-transition surrogate gradient F_hat(z) omega - A_hat(z) score.

    The advantage estimate is the TD error g - eta + <zeta, phi(s') - phi(s)>;
    F_hat is the score outer product plus the ridge.
    """
    score = policy.score(z.s, z.a)
    adv = g_value - xi.eta + xi.zeta @ (phi[z.s_next] - phi[z.s])
    return score * (score @ omega) + mu_ridge * omega - adv * score


def _advantages(xi: CriticVec, phi: np.ndarray, states, states_next, g_vals) -> np.ndarray:
    return g_vals - xi.eta + (phi[states_next] - phi[states]) @ xi.zeta


def _step_omega(omega, fisher_mlmc, grad_mlmc, mu_ridge, gamma, guard):
    update = fisher_mlmc @ omega + mu_ridge * omega - grad_mlmc
    omega = omega - gamma * update
    norm = np.linalg.norm(omega)
    if not np.isfinite(norm) or norm > guard:
        raise DivergenceError(
            f"NPG iterate norm {norm:.3g} exceeded guard {guard:.3g}; reduce gamma_omega"
        )
    return omega


def run_npg(cmdp: TabularCmdp, policy: SoftmaxPolicy, cursor: ChainCursor,
            cfg: ActorConfig, xi: CriticVec, which: str, phi: np.ndarray,
            omega_star: np.ndarray | None = None, k: int = 0,
            tables: PolicyTables | None = None):
    """H inner steps for one signal; returns (omega, telemetry, samples_used)."""
    if tables is None:
        tables = PolicyTables(cmdp, policy.all_probs())
    scores = policy.score_table().reshape(cmdp.n_states * cmdp.n_actions, policy.dim)
    g_table = cmdp.signal(which)
    omega = np.zeros(policy.dim)
    telemetry = []
    samples = 0
    na = cmdp.n_actions
    for h in range(cfg.h_inner):
        draw = draw_level(cursor.rng, cfg.mlmc)
        states, actions = sample_steps(tables, cursor, draw.traj_len)
        samples += draw.traj_len
        s_prev = states[:-1]
        rows = scores[s_prev * na + actions]
        g_vals = g_table[s_prev, actions]
        adv = _advantages(xi, phi, s_prev, states[1:], g_vals)
        fisher = combine_levels(rows[:, :, None] * rows[:, None, :], draw)
        grad = combine_levels(adv[:, None] * rows, draw)
        omega = _step_omega(omega, fisher, grad, cfg.mu_ridge, cfg.gamma_omega, cfg.guard)
        row = {"k": k, "h": h, "which": which, "level": draw.level,
               "omega_norm": float(np.linalg.norm(omega))}
        if omega_star is not None:
            row["err_to_oracle"] = float(np.linalg.norm(omega - omega_star))
        telemetry.append(row)
    return omega, telemetry, samples


def run_npg_joint(cmdp: TabularCmdp, policy: SoftmaxPolicy, tables: PolicyTables,
                  cursor: ChainCursor, cfg: ActorConfig, xi_r: CriticVec,
                  xi_c: CriticVec, phi_r: np.ndarray, phi_c: np.ndarray):
    """Both NPG directions from shared per-step trajectories.

    Returns (omega_reward, omega_cost, samples_used).
    """
    scores = policy.score_table().reshape(cmdp.n_states * cmdp.n_actions, policy.dim)
    omega_r = np.zeros(policy.dim)
    omega_c = np.zeros(policy.dim)
    r_table, c_table = cmdp.reward, cmdp.cost
    na = cmdp.n_actions
    samples = 0
    for _ in range(cfg.h_inner):
        draw = draw_level(cursor.rng, cfg.mlmc)
        states, actions = sample_steps(tables, cursor, draw.traj_len)
        samples += draw.traj_len
        s_prev, s_next = states[:-1], states[1:]
        rows = scores[s_prev * na + actions]
        fisher = combine_levels(rows[:, :, None] * rows[:, None, :], draw)
        adv_r = _advantages(xi_r, phi_r, s_prev, s_next, r_table[s_prev, actions])
        adv_c = _advantages(xi_c, phi_c, s_prev, s_next, c_table[s_prev, actions])
        grad_r = combine_levels(adv_r[:, None] * rows, draw)
        grad_c = combine_levels(adv_c[:, None] * rows, draw)
        omega_r = _step_omega(omega_r, fisher, grad_r, cfg.mu_ridge, cfg.gamma_omega, cfg.guard)
        omega_c = _step_omega(omega_c, fisher, grad_c, cfg.mu_ridge, cfg.gamma_omega, cfg.guard)
    return omega_r, omega_c, samples
