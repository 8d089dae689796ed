"""Multi-level Monte Carlo estimation shared by the critic and actor loops.

A draw picks a level Q ~ Geom(1/2) and consumes a trajectory of 2^Q
transitions when 2^Q <= t_max, else a single transition.  The estimate is the
one-sample base term plus the 2^Q-weighted telescoping correction between the
2^Q- and 2^{Q-1}-sample prefix averages; when the level is truncated only the
base term survives.  This matches the bias of a t_max-sample average at
O(log t_max) expected cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class MlmcConfig:
    """Truncation level for the telescoping correction; the level law is Geom(1/2)."""

    t_max: int = 32

    def __post_init__(self):
        if self.t_max < 1:
            raise ConfigError("t_max must be >= 1")

    @property
    def top_level(self) -> int:
        return int(np.floor(np.log2(self.t_max)))


@dataclass(frozen=True)
class MlmcDraw:
    level: int
    traj_len: int

    @property
    def truncated(self) -> bool:
        return 2**self.level != self.traj_len

    @property
    def samples_used(self) -> int:
        return self.traj_len


def draw_level(rng: np.random.Generator, cfg: MlmcConfig) -> MlmcDraw:
    """Level Q >= 1 with P(Q = j) = 2^-j; traj_len = 2^Q in range, else 1."""
    q = int(rng.geometric(0.5))
    return make_draw(q, cfg)


def make_draw(level: int, cfg: MlmcConfig) -> MlmcDraw:
    if level < 1:
        raise ConfigError("MLMC level must be >= 1")
    traj_len = 2**level if 2**level <= cfg.t_max else 1
    return MlmcDraw(level=level, traj_len=traj_len)


def mlmc_estimate(estimator, trajectory, draw: MlmcDraw) -> np.ndarray:
    """Combine per-transition estimates into the telescoped MLMC estimate.

    ``estimator`` maps one transition to a vector (or scalar); the trajectory
    must contain exactly ``draw.traj_len`` transitions.
    """
    if len(trajectory) != draw.traj_len:
        raise ConfigError(
            f"trajectory has {len(trajectory)} transitions, draw needs {draw.traj_len}"
        )
    values = np.asarray([np.asarray(estimator(z), dtype=float) for z in trajectory])
    return combine_levels(values, draw)


def combine_levels(values: np.ndarray, draw: MlmcDraw) -> np.ndarray:
    """MLMC combination of per-transition values stacked along axis 0."""
    base = values[0]
    half = 2 ** (draw.level - 1)
    full = 2**draw.level
    if len(values) != draw.traj_len:
        raise ConfigError("value array length does not match the draw")
    if full > len(values):
        return np.array(base, dtype=float)
    top = values[:full].mean(axis=0)
    prev = values[:half].mean(axis=0)
    return base + full * (top - prev)


def mlmc_cost_report(samples_used, t_max: int) -> dict:
    """Aggregate per-draw sample counts; checks the O(log t_max) mean-cost law."""
    counts = np.asarray(list(samples_used), dtype=float)
    if counts.size == 0:
        raise ConfigError("empty sample log")
    mean = float(counts.mean())
    p99 = float(np.percentile(counts, 99))
    report = {"mean_samples": mean, "p99_samples": p99, "n_draws": int(counts.size)}
    if t_max >= 8:
        log2t = np.log2(t_max)
        lo, hi = 0.5 * log2t, 2.0 * log2t + 2.0
        report["mean_in_band"] = bool(lo <= mean <= hi)
        if not report["mean_in_band"]:
            raise ConfigError(
                f"mean samples/draw {mean:.3f} outside [{lo:.3f}, {hi:.3f}] for t_max={t_max}"
            )
    return report


def expected_traj_len(cfg: MlmcConfig) -> float:
    """Closed form: sum_{j<=log2 t_max} 2^-j 2^j + P(2^Q > t_max) * 1."""
    top = cfg.top_level
    return float(top + 2.0**-top)
