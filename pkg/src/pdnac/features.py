"""State feature maps for the linear critic, all with ||phi(s)|| <= 1.

The critic approximates the differential value function, which is only
defined up to an additive constant.  A feature map that can represent
constants therefore has a zero direction in its TD matrix; ``one_hot_anchored``
pins one state's feature to zero, which removes that direction and makes the
positive-definiteness constant strictly positive while still representing
every value function up to its free constant.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ConfigError


def one_hot(n_states: int) -> np.ndarray:
    """Full one-hot basis phi(s) = e_s, shape (S, S)."""
    return np.eye(n_states)


def one_hot_anchored(n_states: int, anchor: int | None = None) -> np.ndarray:
    """One-hot basis with the anchor state's feature zeroed, shape (S, S-1)."""
    if n_states < 2:
        raise ConfigError("anchored one-hot needs at least 2 states")
    if anchor is None:
        anchor = n_states - 1
    phi = np.eye(n_states)
    return np.delete(phi, anchor, axis=1)


def validate_features(phi: np.ndarray, n_states: int) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != n_states:
        raise ConfigError(f"critic features must have shape ({n_states}, m), got {phi.shape}")
    norms = np.linalg.norm(phi, axis=1)
    if norms.max() > 1.0 + 1e-12:
        raise ConfigError(f"critic feature norms must be <= 1, max is {norms.max():.6g}")
    return phi


def features_from_json(text: str, n_states: int) -> np.ndarray:
    return validate_features(np.array(json.loads(text), dtype=float), n_states)


def build_features(kind: str, n_states: int) -> np.ndarray:
    if kind == "one_hot":
        return one_hot(n_states)
    if kind == "one_hot_anchored":
        return one_hot_anchored(n_states)
    raise ConfigError(f"unknown critic feature kind {kind!r}")
