"""Outer primal-dual loop: epochs of critic + NPG blocks, then theta and lambda.

Each epoch freezes the policy, runs the critic block for both signals over one
shared chain (never reset), runs the NPG block the same way, combines the two
directions with the current multiplier, ascends theta and projects the
descended multiplier onto [0, 2/delta].  The schedule helpers implement the
known- and unknown-mixing-time parameter choices.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .actor import ActorConfig, run_npg_joint
from .cmdp import ChainCursor, PolicyTables, TabularCmdp
from .critic import CriticConfig, CriticVec, run_critics_joint
from .errors import ConfigError, NumericError
from .oracle import LpSolution, average_returns, solve_cmdp_lp
from .policy import SoftmaxPolicy

log = logging.getLogger("pdnac")

KNOWN_MIXING = "known_mixing"
UNKNOWN_MIXING = "unknown_mixing"

_STREAM_INIT = 0
_STREAM_CRITIC = 1
_STREAM_ACTOR = 2


@dataclass(frozen=True)
class PdConfig:
    epochs: int
    alpha: float
    beta: float
    delta: float
    critic: CriticConfig
    actor: ActorConfig
    t_budget: int | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be >= 0")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")

    @property
    def lambda_cap(self) -> float:
        return 2.0 / self.delta


@dataclass
class RunRecord:
    k: int
    lam: float
    eta_r: float
    eta_c: float
    theta: np.ndarray
    samples_so_far: int
    j_r: float | None = None
    j_c: float | None = None
    gap: float | None = None
    violation: float | None = None

    def wire(self) -> dict:
        row = {"k": self.k, "lambda": self.lam, "eta_r": self.eta_r,
               "eta_c": self.eta_c, "samples_so_far": self.samples_so_far}
        if self.j_r is not None:
            row.update({"J_r_exact": self.j_r, "J_c_exact": self.j_c,
                        "gap": self.gap, "violation": self.violation})
        return row


def dual_update(lam: float, beta: float, eta_c: float, delta: float) -> float:
    """Projected multiplier step: clip(lambda - beta * eta_c, 0, 2/delta)."""
    return float(np.clip(lam - beta * eta_c, 0.0, 2.0 / delta))


def primal_update(theta: np.ndarray, alpha: float, omega: np.ndarray) -> np.ndarray:
    if theta.shape != omega.shape:
        raise ConfigError("theta and omega dimensions differ")
    if not np.all(np.isfinite(omega)):
        raise NumericError("non-finite NPG direction; epoch aborted")
    return theta + alpha * omega


def _epoch_stream(seed: int, stream: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, k)))


def run_pdnac(cmdp: TabularCmdp, policy0: SoftmaxPolicy, cfg: PdConfig, seed: int,
              lp: LpSolution | None = None, oracle_metrics: bool = True) -> list[RunRecord]:
    """Run K epochs from (theta0, lambda0 = 0); returns the per-epoch records.

    With oracle metrics enabled, each record carries the exact averages, the
    optimality gap against the LP optimum and the constraint violation.
    """
    if oracle_metrics and lp is None:
        lp = solve_cmdp_lp(cmdp)
    policy = policy0
    lam = 0.0
    init_rng = _epoch_stream(seed, _STREAM_INIT, 0)
    cursor = ChainCursor.from_initial(cmdp, init_rng)
    records: list[RunRecord] = []
    samples_total = 0
    for k in range(cfg.epochs):
        tables = PolicyTables(cmdp, policy.all_probs())

        cursor.rng = _epoch_stream(seed, _STREAM_CRITIC, k)
        xi_r, xi_c, n1 = run_critics_joint(cmdp, tables, cursor, cfg.critic)

        cursor.rng = _epoch_stream(seed, _STREAM_ACTOR, k)
        omega_r, omega_c, n2 = run_npg_joint(
            cmdp, policy, tables, cursor, cfg.actor, xi_r, xi_c,
            cfg.critic.phi_r, cfg.critic.phi_c)
        samples_total += n1 + n2

        record = RunRecord(k=k, lam=lam, eta_r=xi_r.eta, eta_c=xi_c.eta,
                           theta=policy.theta, samples_so_far=samples_total)
        if oracle_metrics:
            j_r, j_c = average_returns(cmdp, policy)
            record.j_r = j_r
            record.j_c = j_c
            record.gap = lp.j_star - j_r
            record.violation = max(0.0, -j_c)
        records.append(record)

        omega = omega_r + lam * omega_c
        policy = policy.with_theta(primal_update(policy.theta, cfg.alpha, omega))
        lam = dual_update(lam, cfg.beta, xi_c.eta, cfg.delta)
    return records


@dataclass(frozen=True)
class Schedule:
    epochs: int
    h_inner: int
    alpha: float
    beta: float
    notes: dict = field(default_factory=dict)


def schedule_params(t_budget: int, schedule: str, tau_mix: int | None = None,
                    epsilon: float | None = None, h_const: float = 1.0 / 24.0,
                    lambda_hat: float | None = None, mu: float | None = None,
                    c_gamma: float | None = None, g1: float | None = None,
                    t_max: int | None = None) -> Schedule:
    """Theorem-prescribed (K, H, alpha, beta) for the chosen mixing regime.

    Known mixing time: H = h_const * tau_mix^2 * ceil(log2 T)^2 and K = T/H.
    Unknown: H = T^epsilon, K = T^(1-epsilon).  Both use alpha = beta =
    T^(-1/2).  The theorem-form inner step sizes and their admissibility
    inequalities are evaluated and logged when their constants are supplied;
    at desk scale they are essentially never satisfiable and the run records
    that fact rather than aborting.
    """
    if t_budget < 4:
        raise ConfigError("t_budget must be >= 4")
    alpha = beta = t_budget**-0.5
    if schedule == KNOWN_MIXING:
        if tau_mix is None:
            raise ConfigError("known_mixing schedule requires tau_mix")
        polylog = math.ceil(math.log2(t_budget)) ** 2
        h_inner = max(1, round(h_const * tau_mix**2 * polylog))
    elif schedule == UNKNOWN_MIXING:
        if epsilon is None or not 0.0 < epsilon < 1.0:
            raise ConfigError("unknown_mixing schedule requires epsilon in (0, 1)")
        h_inner = max(1, round(t_budget**epsilon))
        if tau_mix is not None:
            needed = h_const * tau_mix**2 * math.ceil(math.log2(t_budget)) ** 2
            if h_inner < needed:
                log.warning(
                    "T^epsilon = %d is below the tau_mix^2 polylog threshold %.1f; "
                    "the unknown-mixing rate guarantee may not apply", h_inner, needed)
    else:
        raise ConfigError(f"unknown schedule {schedule!r}")
    epochs = max(1, t_budget // h_inner)

    notes: dict = {"schedule": schedule, "h_const": h_const}
    logt = math.log(t_budget)
    if lambda_hat is not None and lambda_hat > 0:
        gamma_xi = 2.0 * logt / (lambda_hat * h_inner)
        notes["gamma_xi_theorem"] = gamma_xi
        if c_gamma is not None and tau_mix is not None and t_max is not None:
            cap = lambda_hat / (24.0 * c_gamma**2 * tau_mix * math.log(t_max))
            notes["gamma_xi_cap"] = cap
            notes["gamma_xi_admissible"] = bool(gamma_xi <= cap)
    if mu is not None and mu > 0:
        gamma_omega = 2.0 * logt / (mu * h_inner)
        notes["gamma_omega_theorem"] = gamma_omega
        if g1 is not None and tau_mix is not None and t_max is not None:
            cap = mu / (4.0 * (6.0 * g1**4 * tau_mix + 2.0 * g1**2 * tau_mix**2)
                        * math.log(t_max))
            notes["gamma_omega_cap"] = cap
            notes["gamma_omega_admissible"] = bool(gamma_omega <= cap)
    if "gamma_xi_admissible" in notes or "gamma_omega_admissible" in notes:
        log.info("schedule admissibility: %s", {
            key: notes[key] for key in notes if key.endswith("admissible")})
    return Schedule(epochs=epochs, h_inner=h_inner, alpha=alpha, beta=beta, notes=notes)
