"""Differentiable softmax policy families and their score functions.

Both families put a softmax over per-(s, a) logits.  The tabular family uses
one logit per state-action pair; the linear family uses logits <psi(s,a),
theta> for a fixed feature map psi.  The tabular family is the linear one with
one-hot features, and that identity is exact here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NumericError

TABULAR_SOFTMAX = "tabular_softmax"
LINEAR_SOFTMAX = "linear_softmax"


@dataclass(frozen=True)
class SoftmaxPolicy:
    """Immutable policy pi_theta(a|s) = softmax_a <psi(s,a), theta>.

    ``psi`` has shape (n_states, n_actions, d).  Evaluation is pure; use
    :meth:`with_theta` to move in parameter space.
    """

    family: str
    psi: np.ndarray
    theta: np.ndarray
    _probs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in (TABULAR_SOFTMAX, LINEAR_SOFTMAX):
            raise ConfigError(f"unknown policy family {self.family!r}")
        psi = np.asarray(self.psi, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        if psi.ndim != 3:
            raise ConfigError(f"psi must have shape (S, A, d), got {psi.shape}")
        if theta.shape != (psi.shape[2],):
            raise ConfigError(f"theta has dim {theta.shape}, features expect d={psi.shape[2]}")
        if not np.all(np.isfinite(theta)):
            raise NumericError("theta has non-finite entries")
        psi.setflags(write=False)
        theta.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "theta", theta)
        logits = psi @ theta
        if not np.all(np.isfinite(logits)):
            raise NumericError("policy logits are non-finite")
        shifted = logits - logits.max(axis=1, keepdims=True)
        expl = np.exp(shifted)
        probs = expl / expl.sum(axis=1, keepdims=True)
        probs.setflags(write=False)
        object.__setattr__(self, "_probs", probs)

    @property
    def n_states(self) -> int:
        return self.psi.shape[0]

    @property
    def n_actions(self) -> int:
        return self.psi.shape[1]

    @property
    def dim(self) -> int:
        return self.psi.shape[2]

    def with_theta(self, theta: np.ndarray) -> "SoftmaxPolicy":
        return replace(self, theta=np.array(theta, dtype=float))

    def all_probs(self) -> np.ndarray:
        """Action probabilities for every state, shape (S, A)."""
        return self._probs

    def action_probs(self, s: int) -> np.ndarray:
        if not 0 <= s < self.n_states:
            raise ConfigError(f"state {s} out of range")
        return self._probs[s]

    def score_table(self) -> np.ndarray:
        """grad_theta log pi(a|s) for every (s, a), shape (S, A, d)."""
        mean = np.einsum("sa,sad->sd", self._probs, self.psi)
        return self.psi - mean[:, None, :]

    def score(self, s: int, a: int) -> np.ndarray:
        if not (0 <= s < self.n_states and 0 <= a < self.n_actions):
            raise ConfigError(f"state-action ({s}, {a}) out of range")
        return self.psi[s, a] - self._probs[s] @ self.psi[s]

    def fisher_outer(self, s: int, a: int) -> np.ndarray:
        """Single-sample Fisher term: outer product of the score with itself."""
        g = self.score(s, a)
        return np.outer(g, g)

    def log_prob(self, s: int, a: int) -> float:
        return float(np.log(self._probs[s, a]))

    def score_bound(self) -> float:
        """G1 with sup ||grad log pi|| <= G1 over all theta, per family."""
        if self.family == TABULAR_SOFTMAX:
            return float(np.sqrt(2.0))
        return 2.0 * float(np.linalg.norm(self.psi, axis=2).max())

    def score_lipschitz(self) -> float:
        """G2 with ||score(theta1) - score(theta2)|| <= G2 ||theta1 - theta2||.

        The score difference is a difference of pi-means of psi, whose
        theta-Jacobian is the action covariance of psi; its norm is at most
        max ||psi||^2.  A factor 2 keeps headroom.
        """
        return 2.0 * float((np.linalg.norm(self.psi, axis=2) ** 2).max())


def tabular_softmax(n_states: int, n_actions: int, theta: np.ndarray | None = None) -> SoftmaxPolicy:
    """Tabular softmax: d = S*A, psi(s,a) = one-hot at index s*A + a."""
    d = n_states * n_actions
    psi = np.eye(d).reshape(n_states, n_actions, d)
    if theta is None:
        theta = np.zeros(d)
    return SoftmaxPolicy(family=TABULAR_SOFTMAX, psi=psi, theta=theta)


def linear_softmax(psi: np.ndarray, theta: np.ndarray | None = None) -> SoftmaxPolicy:
    psi = np.asarray(psi, dtype=float)
    if theta is None:
        theta = np.zeros(psi.shape[2])
    return SoftmaxPolicy(family=LINEAR_SOFTMAX, psi=psi, theta=theta)


def features_from_matrix(mat: np.ndarray, n_states: int, n_actions: int) -> np.ndarray:
    """Reshape a dense d x (S*A) feature matrix into the (S, A, d) layout."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[1] != n_states * n_actions:
        raise ConfigError(
            f"feature matrix must be d x (S*A) = d x {n_states * n_actions}, got {mat.shape}"
        )
    return np.ascontiguousarray(mat.T.reshape(n_states, n_actions, mat.shape[0]))
