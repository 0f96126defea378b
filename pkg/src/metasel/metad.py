"""Windowed meta-d' estimation by maximum likelihood.

Continuous confidences are cut into quantile bins, tallied separately for
correct and incorrect trials, and the resulting type-2 table is fit with
Nelder-Mead over ``(meta_d, log criterion increments)``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, column_or_1d

from .sdt import MAX_ABS_META_D, _conditionals, _loglik, std_normal_quantile

DEFAULT_BINS = 4
MIN_TRIALS = 20
PAD = 0.5


class PerformanceWindow:
    """Bounded FIFO of ``(confidence, reward)`` pairs, oldest first.

    Parameters
    ----------
    capacity : int
        Maximum number of retained entries; older entries are evicted.
    entries : iterable of (float, int), optional
    """

    def __init__(self, capacity: int, entries=()):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._buf: deque = deque(maxlen=self.capacity)
        for conf, reward in entries:
            self.append(conf, reward)

    def append(self, confidence: float, reward: int) -> None:
        confidence = float(confidence)
        if not 0.0 <= confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {confidence}")
        if reward not in (0, 1):
            raise ValueError(f"reward must be 0 or 1, got {reward!r}")
        self._buf.append((confidence, int(reward)))

    def recent(self, n: int) -> "PerformanceWindow":
        """Copy holding the ``n`` newest entries (fewer if not available)."""
        n = min(int(n), len(self._buf))
        items = list(self._buf)[len(self._buf) - n:]
        return PerformanceWindow(max(n, 1), items)

    @property
    def confidences(self) -> np.ndarray:
        return np.fromiter((c for c, _ in self._buf), dtype=float, count=len(self._buf))

    @property
    def rewards(self) -> np.ndarray:
        return np.fromiter((r for _, r in self._buf), dtype=int, count=len(self._buf))

    def __len__(self):
        return len(self._buf)

    def __iter__(self):
        return iter(self._buf)

    def __repr__(self):
        return f"PerformanceWindow(capacity={self.capacity}, len={len(self)})"


@dataclass(frozen=True)
class MetaDFit:
    """Result of a single meta-d' fit."""

    meta_d: float
    type1_dprime: float
    criteria: tuple[float, ...]
    log_likelihood: float
    converged: bool
    n_correct: int
    n_incorrect: int
    degenerate: bool
    n_bins: int = 0
    n_iter: int = 0
    counts_correct: tuple[float, ...] = field(default=(), repr=False)
    counts_incorrect: tuple[float, ...] = field(default=(), repr=False)

    def as_dict(self) -> dict:
        return {
            "meta_d": self.meta_d,
            "type1_dprime": self.type1_dprime,
            "criteria": list(self.criteria),
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "n_correct": self.n_correct,
            "n_incorrect": self.n_incorrect,
            "degenerate": self.degenerate,
            "n_bins": self.n_bins,
            "n_iter": self.n_iter,
        }


def dprime_from_accuracy(n_correct: int, n_incorrect: int) -> float:
    """Type-1 d' implied by accuracy under an unbiased criterion.

    Accuracy is clamped to ``[1/(2n), 1 - 1/(2n)]`` so perfect or null
    windows stay finite.
    """
    n = n_correct + n_incorrect
    if n < 1:
        raise ValueError("cannot compute d' from an empty window")
    lo = 1.0 / (2 * n)
    acc = min(max(n_correct / n, lo), 1.0 - lo)
    return 2.0 * std_normal_quantile(acc)


def _as_arrays(window):
    if isinstance(window, PerformanceWindow):
        return window.confidences, window.rewards
    pairs = list(window)
    if not pairs:
        return np.empty(0), np.empty(0, dtype=int)
    conf, rew = zip(*pairs)
    return np.asarray(conf, dtype=float), np.asarray(rew, dtype=int)


def bin_confidences(window, K: int = DEFAULT_BINS) -> tuple[np.ndarray, int]:
    """Assign each confidence to a quantile bin.

    Edges sit at the ``j/K`` empirical quantiles. A value equal to an edge
    goes to the bin above it, duplicate edges collapse, and unoccupied bins
    are dropped, so the returned labels run over ``1..K_eff``.

    Returns
    -------
    bins : ndarray of int
    K_eff : int
        Number of occupied bins; 1 means the confidences carry no variation.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    conf = window if isinstance(window, np.ndarray) else _as_arrays(window)[0]
    if conf.size == 0:
        raise ValueError("cannot bin an empty window")
    edges = np.unique(np.quantile(conf, np.arange(1, K) / K))
    raw = np.searchsorted(edges, conf, side="right")
    occupied, labels = np.unique(raw, return_inverse=True)
    return labels.astype(int) + 1, int(occupied.size)


def _unpack(x):
    md = x[0]
    crit = np.cumsum(np.exp(x[1:]))
    return md, crit


def _degenerate(dprime, n_c, n_i, k_eff=0):
    return MetaDFit(
        meta_d=0.0,
        type1_dprime=dprime,
        criteria=(),
        log_likelihood=float("nan"),
        converged=False,
        n_correct=n_c,
        n_incorrect=n_i,
        degenerate=True,
        n_bins=k_eff,
    )


def fit_meta_d(
    window,
    K: int = DEFAULT_BINS,
    *,
    min_trials: int = MIN_TRIALS,
    max_iter: int = 2000,
    tol: float = 1e-6,
) -> MetaDFit:
    """Maximum-likelihood meta-d' for a window of ``(confidence, reward)``.

    Never raises on degenerate data: short windows and constant confidence
    yield ``meta_d = 0`` with ``degenerate=True``. Zero cells in the count
    table trigger +0.5 padding of every cell, which is also flagged.
    """
    conf, rew = _as_arrays(window)
    n = conf.size
    n_c = int(rew.sum())
    n_i = int(n - n_c)
    dprime = dprime_from_accuracy(n_c, n_i) if n else 0.0
    if n < min_trials:
        return _degenerate(dprime, n_c, n_i)
    bins, k_eff = bin_confidences(conf, K)
    if k_eff == 1:
        return _degenerate(dprime, n_c, n_i, k_eff)

    counts_c = np.bincount(bins[rew == 1], minlength=k_eff + 1)[1:].astype(float)
    counts_i = np.bincount(bins[rew == 0], minlength=k_eff + 1)[1:].astype(float)
    degenerate = False
    if np.any(counts_c == 0) or np.any(counts_i == 0):
        counts_c += PAD
        counts_i += PAD
        degenerate = True

    def objective(x):
        md, crit = _unpack(x)
        clipped = min(max(md, -MAX_ABS_META_D), MAX_ABS_META_D)
        p_c, p_i = _conditionals(clipped, crit)
        ll = _loglik(p_c, p_i, counts_c, counts_i)
        return -ll + 1e3 * (md - clipped) ** 2

    top = max(dprime, 1.0)
    init_crit = top * np.arange(1, k_eff) / k_eff
    x0 = np.concatenate(([dprime], np.log(np.diff(np.concatenate(([0.0], init_crit))))))
    simplex = np.vstack([x0] + [x0 + 0.5 * np.eye(x0.size)[j] for j in range(x0.size)])
    res = optimize.minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "maxiter": max_iter,
            "xatol": np.inf,
            "fatol": tol,
            "adaptive": False,
        },
    )
    md, crit = _unpack(res.x)
    md = float(np.clip(md, -MAX_ABS_META_D, MAX_ABS_META_D))
    return MetaDFit(
        meta_d=md,
        type1_dprime=dprime,
        criteria=tuple(float(c) for c in crit),
        log_likelihood=float(-res.fun),
        converged=bool(res.status == 0),
        n_correct=n_c,
        n_incorrect=n_i,
        degenerate=degenerate,
        n_bins=k_eff,
        n_iter=int(res.nit),
        counts_correct=tuple(counts_c),
        counts_incorrect=tuple(counts_i),
    )


def initial_scores(burnin_windows, K: int = DEFAULT_BINS) -> list[float]:
    """Meta-d' of each model's burn-in window."""
    return [fit_meta_d(w, K).meta_d for w in burnin_windows]


class MetaDEstimator(BaseEstimator):
    """Meta-d' estimator with the scikit-learn ``fit`` interface.

    ``X`` holds confidences (one column), ``y`` whether each response was
    correct.

    Parameters
    ----------
    n_bins : int, default=4
        Number of quantile confidence bins.
    min_trials : int, default=20
        Windows shorter than this give a degenerate zero score.
    max_iter : int, default=2000
    tol : float, default=1e-6
        Nelder-Mead stops once the objective spread over the simplex drops
        below this.

    Attributes
    ----------
    meta_d_ : float
    dprime_ : float
    criteria_ : tuple of float
    degenerate_ : bool
    fit_ : MetaDFit
    """

    def __init__(self, n_bins=DEFAULT_BINS, min_trials=MIN_TRIALS, max_iter=2000, tol=1e-6):
        self.n_bins = n_bins
        self.min_trials = min_trials
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        conf = column_or_1d(check_array(X, ensure_2d=False, dtype=float))
        correct = column_or_1d(y).astype(int)
        check_consistent_length(conf, correct)
        if np.any((conf < 0) | (conf > 1)):
            raise ValueError("confidences must lie in [0, 1]")
        if np.any((correct != 0) & (correct != 1)):
            raise ValueError("y must be binary correctness indicators")
        fit = fit_meta_d(
            zip(conf, correct),
            self.n_bins,
            min_trials=self.min_trials,
            max_iter=self.max_iter,
            tol=self.tol,
        )
        self.fit_ = fit
        self.meta_d_ = fit.meta_d
        self.dprime_ = fit.type1_dprime
        self.criteria_ = fit.criteria
        self.log_likelihood_ = fit.log_likelihood
        self.converged_ = fit.converged
        self.degenerate_ = fit.degenerate
        self.n_bins_ = fit.n_bins
        return self
