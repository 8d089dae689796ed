"""Critic inner loop: track the average value and linear value weights.

For a frozen policy the critic runs H semi-gradient steps.  Each step draws an
MLMC level, consumes that many transitions from the shared chain cursor, and
moves xi = (eta, zeta) along the single-transition linear system
A(z) xi - b(z) telescoped across levels.  Because the sample gradient is
affine in xi, the MLMC combination is applied to the (A, b) statistics once
per step and the update is a small matrix-vector product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cmdp import ChainCursor, PolicyTables, TabularCmdp, Transition, sample_steps
from .errors import ConfigError, DivergenceError
from .features import validate_features
from .mlmc import MlmcConfig, combine_levels, draw_level
from .policy import SoftmaxPolicy


@dataclass
class CriticVec:
    """eta tracks the average value, zeta the linear value weights."""

    eta: float
    zeta: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.eta], self.zeta])

    @staticmethod
    def zero(m: int) -> "CriticVec":
        return CriticVec(eta=0.0, zeta=np.zeros(m))

    @staticmethod
    def from_array(x: np.ndarray) -> "CriticVec":
        return CriticVec(eta=float(x[0]), zeta=np.array(x[1:], dtype=float))


def compliant_c_gamma(lambda_hat: float) -> float:
    """Smallest coupling that keeps the critic matrix positive definite.

    For the positive-definiteness constant lambda_hat in (0, 1) the bound is
    lambda_hat + sqrt(1/lambda_hat^2 - 1); for lambda_hat >= 1 the quadratic
    form is already comfortable and lambda_hat + 1 suffices.
    """
    if lambda_hat <= 0:
        raise ConfigError("lambda_hat must be > 0 for a compliant c_gamma")
    if lambda_hat >= 1:
        return lambda_hat + 1.0
    return lambda_hat + math.sqrt(1.0 / lambda_hat**2 - 1.0)


@dataclass(frozen=True)
class CriticConfig:
    phi_r: np.ndarray
    phi_c: np.ndarray
    c_gamma: float = 2.0
    gamma_xi: float = 0.25
    h_inner: int = 64
    mlmc: MlmcConfig = field(default_factory=MlmcConfig)
    lambda_hat: float | None = None

    def __post_init__(self):
        if self.c_gamma <= 0 or self.gamma_xi < 0 or self.h_inner < 0:
            raise ConfigError("c_gamma must be > 0; gamma_xi and h_inner must be >= 0")
        if self.lambda_hat is not None and self.c_gamma < compliant_c_gamma(self.lambda_hat) - 1e-12:
            raise ConfigError(
                f"c_gamma {self.c_gamma:.4g} below the compliant bound "
                f"{compliant_c_gamma(self.lambda_hat):.4g} for lambda_hat={self.lambda_hat:.4g}"
            )

    def phi(self, which: str) -> np.ndarray:
        return self.phi_r if which == "reward" else self.phi_c

    def divergence_guard(self) -> float:
        if self.lambda_hat is not None and self.lambda_hat > 0:
            return 1e3 * (1.0 + self.c_gamma / self.lambda_hat)
        return 1e6


def critic_config(cmdp: TabularCmdp, phi: np.ndarray, **kwargs) -> CriticConfig:
    """Shared-feature config with the norms validated against the CMDP."""
    phi = validate_features(phi, cmdp.n_states)
    return CriticConfig(phi_r=phi, phi_c=phi, **kwargs)


def critic_sample_grad(xi: CriticVec, z: Transition, g_value: float,
                       phi: np.ndarray, c_gamma: float) -> np.ndarray:
    """Single-transition semi-gradient A(z) xi - b(z).

    First coordinate: c_gamma (eta - g).  Value block: the TD error
    (<zeta, phi(s)> - g + eta - <zeta, phi(s')>) times phi(s).
    """
    phi_s = phi[z.s]
    phi_next = phi[z.s_next]
    out = np.empty(1 + phi.shape[1])
    out[0] = c_gamma * (xi.eta - g_value)
    td = xi.eta + xi.zeta @ (phi_s - phi_next) - g_value
    out[1:] = td * phi_s
    return out


def _mlmc_system(phi: np.ndarray, states, states_next, g_vals, c_gamma, draw):
    """MLMC-combined (A, b) statistics for one trajectory and one feature map."""
    phi_s = phi[states]
    diff = phi_s - phi[states_next]
    col0 = combine_levels(phi_s, draw)
    block = combine_levels(phi_s[:, :, None] * diff[:, None, :], draw)
    b0 = c_gamma * combine_levels(g_vals, draw)
    b1 = combine_levels(g_vals[:, None] * phi_s, draw)
    return col0, block, b0, b1


def _apply_update(xi_arr: np.ndarray, col0, block, b0, b1, c_gamma, gamma_xi, guard):
    eta = xi_arr[0]
    zeta = xi_arr[1:]
    v0 = c_gamma * eta - b0
    v1 = col0 * eta + block @ zeta - b1
    xi_arr = xi_arr.copy()
    xi_arr[0] -= gamma_xi * v0
    xi_arr[1:] -= gamma_xi * v1
    norm = np.linalg.norm(xi_arr)
    if not np.isfinite(norm) or norm > guard:
        raise DivergenceError(
            f"critic iterate norm {norm:.3g} exceeded guard {guard:.3g}; reduce gamma_xi"
        )
    return xi_arr


def run_critic(cmdp: TabularCmdp, policy: SoftmaxPolicy, cursor: ChainCursor,
               cfg: CriticConfig, which: str, xi_star: np.ndarray | None = None,
               k: int = 0, tables: PolicyTables | None = None):
    """H inner steps for one signal; returns (CriticVec, telemetry, samples_used)."""
    phi = cfg.phi(which)
    g_table = cmdp.signal(which)
    if tables is None:
        tables = PolicyTables(cmdp, policy.all_probs())
    guard = cfg.divergence_guard()
    xi = np.zeros(1 + phi.shape[1])
    telemetry = []
    samples = 0
    for h in range(cfg.h_inner):
        draw = draw_level(cursor.rng, cfg.mlmc)
        states, actions = sample_steps(tables, cursor, draw.traj_len)
        samples += draw.traj_len
        g_vals = g_table[states[:-1], actions]
        col0, block, b0, b1 = _mlmc_system(
            phi, states[:-1], states[1:], g_vals, cfg.c_gamma, draw)
        xi = _apply_update(xi, col0, block, b0, b1, cfg.c_gamma, cfg.gamma_xi, guard)
        row = {"k": k, "h": h, "which": which, "level": draw.level,
               "eta": float(xi[0]), "zeta_norm": float(np.linalg.norm(xi[1:]))}
        if xi_star is not None:
            row["err_to_oracle"] = float(np.linalg.norm(xi - xi_star))
        telemetry.append(row)
    return CriticVec.from_array(xi), telemetry, samples


def run_critics_joint(cmdp: TabularCmdp, tables: PolicyTables, cursor: ChainCursor,
                      cfg: CriticConfig):
    """Both critics from the same per-step trajectories (the listing's sharing).

    Returns (xi_reward, xi_cost, samples_used).
    """
    shared_phi = cfg.phi_r is cfg.phi_c
    guard = cfg.divergence_guard()
    xi_r = np.zeros(1 + cfg.phi_r.shape[1])
    xi_c = np.zeros(1 + cfg.phi_c.shape[1])
    r_table, c_table = cmdp.reward, cmdp.cost
    samples = 0
    for _ in range(cfg.h_inner):
        draw = draw_level(cursor.rng, cfg.mlmc)
        states, actions = sample_steps(tables, cursor, draw.traj_len)
        samples += draw.traj_len
        s_prev, s_next = states[:-1], states[1:]
        r_vals = r_table[s_prev, actions]
        c_vals = c_table[s_prev, actions]
        col0, block, b0r, b1r = _mlmc_system(cfg.phi_r, s_prev, s_next, r_vals, cfg.c_gamma, draw)
        if shared_phi:
            b0c = cfg.c_gamma * combine_levels(c_vals, draw)
            b1c = combine_levels(c_vals[:, None] * cfg.phi_r[s_prev], draw)
            col0c, blockc = col0, block
        else:
            col0c, blockc, b0c, b1c = _mlmc_system(
                cfg.phi_c, s_prev, s_next, c_vals, cfg.c_gamma, draw)
        xi_r = _apply_update(xi_r, col0, block, b0r, b1r, cfg.c_gamma, cfg.gamma_xi, guard)
        xi_c = _apply_update(xi_c, col0c, blockc, b0c, b1c, cfg.c_gamma, cfg.gamma_xi, guard)
    return CriticVec.from_array(xi_r), CriticVec.from_array(xi_c), samples
