"""Biased constant-step stochastic linear recursion and its error-bound check.

The recursion x_{h+1} = x_h - step * (P_hat_h x_h - q_hat_h) approximates
x* = P^{-1} q under noisy, possibly biased estimates of (P, q).  Both the
critic and the NPG inner loops are instances of this engine; the bound
verified here is the contract their convergence tests rely on.

``lambda_p`` is the quadratic-form lower bound x^T sym(P) x >= lambda_p |x|^2
(the coercivity the error recursion actually uses), not merely a lower bound
on |P|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DivergenceError


@dataclass(frozen=True)
class NoiseModel:
    """Samplers for (P_hat, q_hat) plus their declared bias/variance bounds.

    sample(rng, h) -> (P_hat, q_hat).  The declared bounds are trusted by the
    bound computation; builders below construct models whose bounds are exact
    by construction.
    """

    sample: Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]
    sigma_p: float = 0.0
    sigma_q: float = 0.0
    delta_p: float = 0.0
    delta_q: float = 0.0
    delta_q_bar: float | None = None

    def q_mean_bias(self) -> float:
        return self.delta_q if self.delta_q_bar is None else self.delta_q_bar


@dataclass(frozen=True)
class RecursionSpec:
    P: np.ndarray
    q: np.ndarray
    noise: NoiseModel
    step: float
    horizon: int
    theorem_mode: bool = True
    lambda_p: float = field(init=False)
    lambda_p_cap: float = field(init=False)
    q_cap: float = field(init=False)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or q.shape != (P.shape[0],):
            raise ConfigError("P must be n x n and q length n")
        lam = float(np.linalg.eigvalsh(0.5 * (P + P.T)).min())
        cap = float(np.linalg.norm(P, 2))
        if lam <= 0:
            raise ConfigError(f"quadratic-form bound lambda_p = {lam:.3g} must be > 0")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "lambda_p", lam)
        object.__setattr__(self, "lambda_p_cap", cap)
        object.__setattr__(self, "q_cap", float(np.linalg.norm(q)))
        if self.step <= 0 or self.horizon < 1:
            raise ConfigError("step must be > 0 and horizon >= 1")
        if self.theorem_mode:
            step_cap = lam / (4.0 * (6.0 * self.noise.sigma_p**2 + 2.0 * cap**2))
            if self.step > step_cap + 1e-15:
                raise ConfigError(
                    f"step {self.step:.3g} exceeds theorem cap {step_cap:.3g}"
                )
            if self.noise.delta_p > lam / 8.0 + 1e-15:
                raise ConfigError(
                    f"P-bias {self.noise.delta_p:.3g} exceeds lambda_p/8 = {lam / 8:.3g}"
                )

    @property
    def x_star(self) -> np.ndarray:
        return np.linalg.solve(self.P, self.q)


def run_recursion(spec: RecursionSpec, x0: np.ndarray, seed: int) -> np.ndarray:
    """Iterate the recursion; returns the (horizon+1, n) trajectory of iterates."""
    rng = np.random.default_rng(seed)
    x = np.array(x0, dtype=float)
    if x.shape != spec.q.shape:
        raise ConfigError("x0 has the wrong dimension")
    out = np.empty((spec.horizon + 1, x.size))
    out[0] = x
    for h in range(spec.horizon):
        p_hat, q_hat = spec.noise.sample(rng, h)
        x = x - spec.step * (p_hat @ x - q_hat)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"recursion diverged at step {h}")
        out[h + 1] = x
    return out


def theorem_bound(spec: RecursionSpec, x0: np.ndarray, slack: float = 10.0) -> float:
    """exp(-H step lambda_p) |x0 - x*|^2 + slack * (step * R0 + R1)."""
    lam = spec.lambda_p
    noise = spec.noise
    r0 = lam**-3 * spec.q_cap**2 * noise.sigma_p**2 + lam**-1 * noise.sigma_q**2
    r1 = lam**-2 * (noise.delta_p**2 * lam**-2 * spec.q_cap**2 + noise.delta_q**2)
    init = float(np.linalg.norm(np.asarray(x0, dtype=float) - spec.x_star) ** 2)
    return math.exp(-spec.horizon * spec.step * lam) * init + slack * (spec.step * r0 + r1)


def verify_theorem6_bound(spec: RecursionSpec, x0: np.ndarray, replicas: int,
                          seed: int = 0, slack: float = 10.0) -> dict:
    """Monte Carlo check that E|x_H - x*|^2 respects the error bound.

    Replica reduction is pairwise over a fixed order, so the report is
    deterministic for a given seed.
    """
    if replicas < 1:
        raise ConfigError("need at least one replica")
    x_star = spec.x_star
    errs = np.empty(replicas)
    base = np.random.SeedSequence(seed)
    for i, child in enumerate(base.spawn(replicas)):
        traj = run_recursion(spec, x0, seed=child)
        errs[i] = np.linalg.norm(traj[-1] - x_star) ** 2
    measured = float(errs.mean())
    bound = theorem_bound(spec, x0, slack=slack)
    ratio = measured / bound if bound > 0 else math.inf
    return {
        "measured": measured,
        "bound": bound,
        "ratio": ratio,
        "passed": bool(measured <= bound),
        "replicas": replicas,
        "lambda_p": spec.lambda_p,
        "slack": slack,
    }


def exact_noise(P: np.ndarray, q: np.ndarray) -> NoiseModel:
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    return NoiseModel(sample=lambda rng, h: (P, q))


def gaussian_noise(P: np.ndarray, q: np.ndarray, sigma_p: float = 0.0, sigma_q: float = 0.0,
                   bias_p: np.ndarray | None = None, bias_q: np.ndarray | None = None) -> NoiseModel:
    """Entrywise Gaussian perturbations plus optional constant biases.

    The declared bounds are exact: the Frobenius second moment of the P-matrix
    noise is n^2 sigma_p^2 entrywise -> scaled so E|P_hat - P|_F^2 = sigma_p^2,
    and likewise for q.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    n = P.shape[0]
    bp = np.zeros_like(P) if bias_p is None else np.asarray(bias_p, dtype=float)
    bq = np.zeros_like(q) if bias_q is None else np.asarray(bias_q, dtype=float)
    p_entry = sigma_p / n
    q_entry = sigma_q / math.sqrt(n)

    def sample(rng: np.random.Generator, h: int):
        p_hat = P + bp
        q_hat = q + bq
        if sigma_p > 0:
            p_hat = p_hat + rng.normal(0.0, p_entry, size=P.shape)
        if sigma_q > 0:
            q_hat = q_hat + rng.normal(0.0, q_entry, size=q.shape)
        return p_hat, q_hat

    sigma_p_total = math.sqrt(sigma_p**2 + np.linalg.norm(bp) ** 2)
    sigma_q_total = math.sqrt(sigma_q**2 + np.linalg.norm(bq) ** 2)
    return NoiseModel(
        sample=sample,
        sigma_p=sigma_p_total,
        sigma_q=sigma_q_total,
        delta_p=float(np.linalg.norm(bp, 2)),
        delta_q=float(np.linalg.norm(bq)),
    )
