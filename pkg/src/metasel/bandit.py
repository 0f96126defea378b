"""Disjoint linear contextual bandits over two arms (LinUCB and LinTS)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array

ARM_NAMES = ("A", "B")
POLICIES = ("linucb", "lints")


class ContextVector(NamedTuple):
    """Per-trial context ``[c_A, mu_A, c_B, mu_B]``."""

    c_a: float
    mu_a: float
    c_b: float
    mu_b: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


@dataclass
class ArmState:
    """Ridge sufficient statistics of one arm: ``A = I + sum s s^T``, ``b = sum r s``."""

    A: np.ndarray
    b: np.ndarray

    @classmethod
    def fresh(cls, d: int = 4) -> "ArmState":
        return cls(np.eye(d), np.zeros(d))

    @property
    def d(self) -> int:
        return self.b.shape[0]

    def copy(self) -> "ArmState":
        return ArmState(self.A.copy(), self.b.copy())


@dataclass(frozen=True)
class BanditConfig:
    policy: str = "linucb"
    alpha: float = 1.0
    sigma: float = 1.0
    epsilon: float = 1e-6
    rng_seed: int = 0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        for name in ("alpha", "sigma", "epsilon"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")


def _chol(M: np.ndarray) -> np.ndarray:
    # np.linalg.cholesky raises LinAlgError on a non-positive-definite matrix.
    return np.linalg.cholesky(M)


def score_linucb(arm: ArmState, s, alpha: float) -> float:
    """Upper confidence bound ``theta^T s + alpha * sqrt(s^T A^{-1} s)``."""
    s = np.asarray(s, dtype=float)
    factor = (_chol(arm.A), True)
    theta = cho_solve(factor, arm.b)
    width = float(s @ cho_solve(factor, s))
    return float(theta @ s) + alpha * np.sqrt(max(width, 0.0))


def score_lints(arm: ArmState, s, sigma: float, epsilon: float, rng) -> float:
    """Posterior-sample score ``theta~^T s`` with ``theta~ ~ N(theta, sigma^2 (A + eps I)^{-1})``.

    A standard-normal vector is drawn even when ``sigma == 0`` so the random
    stream does not depend on ``sigma``.
    """
    s = np.asarray(s, dtype=float)
    d = arm.d
    factor = (_chol(arm.A + epsilon * np.eye(d)), True)
    theta = cho_solve(factor, arm.b)
    cov = cho_solve(factor, np.eye(d))
    cov = 0.5 * (cov + cov.T)
    z = rng.standard_normal(d)
    sample = theta + sigma * (_chol(cov) @ z)
    return float(sample @ s)


def arm_scores(arms, s, cfg: BanditConfig, rng=None) -> np.ndarray:
    if cfg.policy == "linucb":
        return np.array([score_linucb(a, s, cfg.alpha) for a in arms])
    return np.array([score_lints(a, s, cfg.sigma, cfg.epsilon, rng) for a in arms])


def select(arms, s, cfg: BanditConfig, rng=None) -> int:
    """Index of the highest-scoring arm; ties go to arm 0 (A)."""
    return int(np.argmax(arm_scores(arms, s, cfg, rng)))


def update(arm: ArmState, s, r: int) -> ArmState:
    """Return ``arm`` after the rank-one update for context ``s`` and reward ``r``."""
    s = np.asarray(s, dtype=float)
    return ArmState(arm.A + np.outer(s, s), arm.b + r * s)


class _LinearBandit(BaseEstimator):
    """Shared incremental-learning surface for the two policies."""

    n_arms = 2

    def _config(self) -> BanditConfig:
        raise NotImplementedError

    def _ensure_arms(self):
        if not hasattr(self, "arms_"):
            self.arms_ = [ArmState.fresh(self.n_features) for _ in range(self.n_arms)]
            self.rng_ = np.random.default_rng(getattr(self, "random_state", None))
            self.n_updates_ = 0

    def _check_context(self, s) -> np.ndarray:
        s = check_array(np.atleast_2d(s), dtype=float)
        if s.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} context features, got {s.shape[1]}")
        return s

    def decision_function(self, X) -> np.ndarray:
        """Per-arm scores, shape ``(n_samples, 2)``."""
        self._ensure_arms()
        X = self._check_context(X)
        cfg = self._config()
        return np.vstack([arm_scores(self.arms_, x, cfg, self.rng_) for x in X])

    def predict(self, X) -> np.ndarray:
        """Chosen arm per context row, without learning."""
        return np.argmax(self.decision_function(X), axis=1)

    def partial_fit(self, X, arms, rewards):
        """Apply rank-one updates for observed ``(context, arm, reward)`` rows."""
        self._ensure_arms()
        X = self._check_context(X)
        arms = np.atleast_1d(arms).astype(int)
        rewards = np.atleast_1d(rewards)
        if not len(X) == len(arms) == len(rewards):
            raise ValueError("X, arms and rewards must have matching lengths")
        for x, k, r in zip(X, arms, rewards):
            if k not in (0, 1):
                raise ValueError(f"arm index must be 0 or 1, got {k}")
            self.arms_[k] = update(self.arms_[k], x, r)
            self.n_updates_ += 1
        return self


class LinUCB(_LinearBandit):
    """Two-arm disjoint LinUCB.

    Parameters
    ----------
    alpha : float, default=1.0
        Width multiplier of the confidence bonus.
    n_features : int, default=4
    """

    def __init__(self, alpha=1.0, n_features=4):
        self.alpha = alpha
        self.n_features = n_features

    def _config(self):
        return BanditConfig(policy="linucb", alpha=self.alpha)


class LinTS(_LinearBandit):
    """Two-arm linear Thompson sampling.

    Parameters
    ----------
    sigma : float, default=1.0
        Scale of the posterior sampling covariance.
    epsilon : float, default=1e-6
        Ridge added to ``A`` before inversion.
    random_state : int, Generator or None
    n_features : int, default=4
    """

    def __init__(self, sigma=1.0, epsilon=1e-6, random_state=None, n_features=4):
        self.sigma = sigma
        self.epsilon = epsilon
        self.random_state = random_state
        self.n_features = n_features

    def _config(self):
        return BanditConfig(policy="lints", sigma=self.sigma, epsilon=self.epsilon)
