"""Exact tabular ground truth for everything the learner estimates.

All quantities are computed by dense linear algebra and full enumeration over
(s, a, s'), so they are exact up to solver round-off and serve as oracles for
the sampled estimators.  Conventions: the differential value function is
centered so that sum_s d_pi(s) V(s) = 0, the mixing-time norm is total
variation (half L1), and V/Q magnitudes are checked against their mixing-time
bounds on every evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .cmdp import TabularCmdp, induced_chain, require_ergodic
from .errors import ConfigError, InfeasibleError, NumericError
from .features import validate_features
from .policy import SoftmaxPolicy

_MIX_TV_THRESHOLD = 0.25
_MIX_CAP = 10**6


@dataclass(frozen=True)
class StationaryInfo:
    d_pi: np.ndarray
    nu_pi: np.ndarray
    mixing_time: int
    spectral_gap: float


@dataclass(frozen=True)
class ValueBundle:
    J: float
    V: np.ndarray
    Q: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class CriticFixpoint:
    xi_star: np.ndarray
    lambda_min: float
    A_mat: np.ndarray
    b_vec: np.ndarray


@dataclass(frozen=True)
class LpSolution:
    j_star: float
    occupancy: np.ndarray
    slater_margin: float


def stationary(cmdp: TabularCmdp, policy: SoftmaxPolicy) -> StationaryInfo:
    """Stationary distribution, occupancy measure, TV mixing time, spectral gap."""
    probs = policy.all_probs()
    chain = induced_chain(cmdp, probs)
    require_ergodic(chain, "stationary")
    d_pi = _stationary_dist(chain)
    nu_pi = d_pi[:, None] * probs

    mixing_time = _mixing_time(chain, d_pi)
    eigvals = np.linalg.eigvals(chain)
    mods = np.sort(np.abs(eigvals))[::-1]
    spectral_gap = float(1.0 - (mods[1] if len(mods) > 1 else 0.0))
    return StationaryInfo(d_pi=d_pi, nu_pi=nu_pi, mixing_time=mixing_time, spectral_gap=spectral_gap)


def _stationary_dist(chain: np.ndarray) -> np.ndarray:
    ns = chain.shape[0]
    sys = np.vstack([chain.T - np.eye(ns), np.ones((1, ns))])
    rhs = np.zeros(ns + 1)
    rhs[-1] = 1.0
    d, *_ = np.linalg.lstsq(sys, rhs, rcond=None)
    if np.linalg.norm(sys @ d - rhs) > 1e-10 or d.min() < -1e-10:
        raise NumericError("stationary distribution solve failed; chain may not be ergodic")
    return np.clip(d, 0.0, None)


def _mixing_time(chain: np.ndarray, d_pi: np.ndarray, cap: int = _MIX_CAP) -> int:
    power = chain.copy()
    for t in range(1, cap + 1):
        tv = 0.5 * np.abs(power - d_pi[None, :]).sum(axis=1).max()
        if tv <= _MIX_TV_THRESHOLD:
            return t
        power = power @ chain
    raise NumericError(f"mixing time exceeds cap {cap}; chain is nearly reducible")


def exact_values(cmdp: TabularCmdp, policy: SoftmaxPolicy, which: str,
                 info: StationaryInfo | None = None) -> ValueBundle:
    """Average value J, differential V (Poisson equation), Q and advantage A."""
    g = cmdp.signal(which)
    probs = policy.all_probs()
    if info is None:
        info = stationary(cmdp, policy)
    chain = induced_chain(cmdp, probs)
    d_pi = info.d_pi
    ns = cmdp.n_states

    g_pi = (probs * g).sum(axis=1)
    J = float(d_pi @ g_pi)
    # Poisson equation (I - P^pi) V = g^pi - J, pinned by sum_s d(s) V(s) = 0.
    sys = np.vstack([np.eye(ns) - chain, d_pi[None, :]])
    rhs = np.concatenate([g_pi - J, [0.0]])
    V, *_ = np.linalg.lstsq(sys, rhs, rcond=None)
    if np.linalg.norm(sys @ V - rhs) > 1e-8:
        raise NumericError("Poisson equation residual too large; chain may not be ergodic")
    Q = g - J + cmdp.transition @ V
    A = Q - V[:, None]

    tau = info.mixing_time
    if np.abs(V).max() > 5.0 * tau + 1e-9 or np.abs(Q).max() > 6.0 * tau + 1e-9:
        raise NumericError(
            f"value bounds violated: max|V|={np.abs(V).max():.3g}, "
            f"max|Q|={np.abs(Q).max():.3g}, tau_mix={tau}"
        )
    return ValueBundle(J=J, V=V, Q=Q, A=A)


def exact_policy_gradient(cmdp: TabularCmdp, policy: SoftmaxPolicy, which: str,
                          info: StationaryInfo | None = None,
                          values: ValueBundle | None = None) -> np.ndarray:
    """Policy gradient by full enumeration: sum_nu A(s,a) grad log pi(a|s)."""
    if info is None:
        info = stationary(cmdp, policy)
    if values is None:
        values = exact_values(cmdp, policy, which, info=info)
    scores = policy.score_table()
    return np.einsum("sa,sa,sad->d", info.nu_pi, values.A, scores)


def exact_fisher(cmdp: TabularCmdp, policy: SoftmaxPolicy,
                 info: StationaryInfo | None = None) -> np.ndarray:
    """Fisher matrix: occupancy-weighted expectation of score outer products."""
    if info is None:
        info = stationary(cmdp, policy)
    scores = policy.score_table()
    return np.einsum("sa,sad,sae->de", info.nu_pi, scores, scores)


def exact_npg(cmdp: TabularCmdp, policy: SoftmaxPolicy, which: str, mu_ridge: float = 1e-6,
              info: StationaryInfo | None = None) -> np.ndarray:
    """Natural gradient: solve (F + mu_ridge I) w = grad J; pinv when mu_ridge = 0."""
    if mu_ridge < 0:
        raise ConfigError("mu_ridge must be >= 0")
    if info is None:
        info = stationary(cmdp, policy)
    fisher = exact_fisher(cmdp, policy, info=info)
    grad = exact_policy_gradient(cmdp, policy, which, info=info)
    return solve_npg_system(fisher, grad, mu_ridge)


def solve_npg_system(fisher: np.ndarray, grad: np.ndarray, mu_ridge: float) -> np.ndarray:
    if mu_ridge > 0:
        return np.linalg.solve(fisher + mu_ridge * np.eye(fisher.shape[0]), grad)
    omega, *_ = np.linalg.lstsq(fisher, grad, rcond=None)
    residual = fisher @ omega - grad
    # Minimum-norm solution is valid only if grad lies in range(F).
    if np.linalg.norm(residual) > 1e-8 * max(1.0, np.linalg.norm(grad)):
        raise NumericError("singular Fisher with gradient outside its range; use mu_ridge > 0")
    return omega


def exact_critic_fixpoint(cmdp: TabularCmdp, policy: SoftmaxPolicy, phi: np.ndarray,
                          c_gamma: float, which: str,
                          info: StationaryInfo | None = None) -> CriticFixpoint:
    """Fixed point xi* of the expected critic recursion, by enumeration.

    Assembles A = E[[c_gamma, 0], [phi(s), phi(s)(phi(s) - phi(s'))^T]] and
    b = E[c_gamma g, g phi(s)] over the occupancy measure and returns
    xi* = A^{-1} b together with the minimum eigenvalue of the symmetrized
    feature block (the positive-definiteness constant).

    A feature map that represents constants makes the feature block singular
    in exactly one direction (value functions are defined up to a constant).
    That benign case is solved with the d_pi-centered representative;
    any other singularity raises.
    """
    if c_gamma <= 0:
        raise ConfigError("c_gamma must be > 0")
    phi = validate_features(phi, cmdp.n_states)
    m = phi.shape[1]
    if info is None:
        info = stationary(cmdp, policy)
    probs = policy.all_probs()
    chain = induced_chain(cmdp, probs)
    d_pi = info.d_pi
    g = cmdp.signal(which)
    g_pi = (probs * g).sum(axis=1)

    phi_next = chain @ phi
    mean_phi = d_pi @ phi
    feature_block = np.einsum("s,si,sj->ij", d_pi, phi, phi - phi_next)
    lambda_min = float(np.linalg.eigvalsh(0.5 * (feature_block + feature_block.T)).min())

    A_mat = np.zeros((1 + m, 1 + m))
    A_mat[0, 0] = c_gamma
    A_mat[1:, 0] = mean_phi
    A_mat[1:, 1:] = feature_block
    b_vec = np.concatenate([[c_gamma * float(d_pi @ g_pi)], phi.T @ (d_pi * g_pi)])

    xi, *_ = np.linalg.lstsq(A_mat, b_vec, rcond=None)
    if np.linalg.norm(A_mat @ xi - b_vec) > 1e-9 * max(1.0, np.linalg.norm(b_vec)):
        raise NumericError(
            "critic system A xi = b is inconsistent: positive-definiteness "
            "assumption fails for these features (or c_gamma is too small)"
        )
    rank = np.linalg.matrix_rank(A_mat, tol=1e-10)
    if rank < 1 + m:
        xi = _resolve_benign_singularity(A_mat, xi, phi, d_pi, rank)
    return CriticFixpoint(xi_star=xi, lambda_min=lambda_min, A_mat=A_mat, b_vec=b_vec)


def _resolve_benign_singularity(A_mat, xi, phi, d_pi, rank) -> np.ndarray:
    """Accept exactly one null direction that shifts the fitted V by a constant."""
    n = A_mat.shape[0]
    if np.abs(A_mat[1:, 1:]).max() < 1e-12:
        raise NumericError(
            "critic feature block E[phi (phi - phi')^T] is identically zero "
            "(features are constant along transitions): positive-definiteness "
            "assumption fails and no coupling c_gamma can repair it"
        )
    if rank != n - 1:
        raise NumericError(
            "critic matrix A is singular beyond the constant direction: "
            "positive-definiteness assumption fails (e.g. constant features)"
        )
    _, _, vt = np.linalg.svd(A_mat)
    null = vt[-1]
    shift = phi @ null[1:]
    if abs(null[0]) > 1e-8 or np.ptp(shift) > 1e-8 or np.abs(shift).max() < 1e-8:
        raise NumericError(
            "critic matrix A is singular in a non-constant direction: "
            "positive-definiteness assumption fails for these features"
        )
    # Center the fitted values: sum_s d(s) <phi(s), zeta> = 0.
    t = float(d_pi @ (phi @ xi[1:])) / float(d_pi @ shift)
    return xi - t * null


def lagrangian(cmdp: TabularCmdp, policy: SoftmaxPolicy, lam: float) -> float:
    """Exact L(theta, lambda) = J_r + lambda * J_c."""
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    info = stationary(cmdp, policy)
    j_r = float(info.nu_pi.ravel() @ cmdp.reward.ravel())
    j_c = float(info.nu_pi.ravel() @ cmdp.cost.ravel())
    return j_r + lam * j_c


def average_returns(cmdp: TabularCmdp, policy: SoftmaxPolicy,
                    info: StationaryInfo | None = None) -> tuple[float, float]:
    """(J_r, J_c) from the stationary distribution alone; the cheap per-epoch path."""
    probs = policy.all_probs()
    if info is None:
        d_pi = _stationary_dist(induced_chain(cmdp, probs))
    else:
        d_pi = info.d_pi
    nu = (d_pi[:, None] * probs).ravel()
    return float(nu @ cmdp.reward.ravel()), float(nu @ cmdp.cost.ravel())


def solve_cmdp_lp(cmdp: TabularCmdp) -> LpSolution:
    """Occupancy-measure LP for the constrained optimum and the Slater margin.

    maximize sum mu r  s.t.  flow conservation, sum mu = 1, sum mu c >= 0,
    mu >= 0.  The Slater margin is the optimum of the cost-maximizing LP over
    the same polytope; a negative margin means the instance is infeasible.
    """
    ns, na = cmdp.n_states, cmdp.n_actions
    flow = np.zeros((ns, ns * na))
    for s in range(ns):
        for a in range(na):
            col = s * na + a
            flow[s, col] += 1.0
            flow[:, col] -= cmdp.transition[s, a]
    a_eq = np.vstack([flow, np.ones((1, ns * na))])
    b_eq = np.concatenate([np.zeros(ns), [1.0]])
    c_flat = cmdp.cost.ravel()
    r_flat = cmdp.reward.ravel()

    slater = linprog(-c_flat, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not slater.success:
        raise NumericError(f"cost LP failed: {slater.message}")
    slater_margin = float(-slater.fun)
    if slater_margin < -1e-9:
        raise InfeasibleError(
            f"no feasible policy: max_pi J_c = {slater_margin:.6g} < 0"
        )

    res = linprog(-r_flat, A_eq=a_eq, b_eq=b_eq,
                  A_ub=-c_flat[None, :], b_ub=[0.0], bounds=(0, None), method="highs")
    if not res.success:
        raise InfeasibleError(f"reward LP infeasible: {res.message}")
    occupancy = res.x.reshape(ns, na)
    return LpSolution(j_star=float(-res.fun), occupancy=occupancy, slater_margin=slater_margin)


def occupancy_policy(occupancy: np.ndarray, fallback: float | None = None) -> np.ndarray:
    """Recover pi(a|s) from an occupancy measure; uniform where mu(s) = 0."""
    ns, na = occupancy.shape
    probs = np.full((ns, na), 1.0 / na if fallback is None else fallback)
    mass = occupancy.sum(axis=1)
    for s in range(ns):
        if mass[s] > 1e-12:
            probs[s] = occupancy[s] / mass[s]
    return probs
