"""Equal-variance Signal Detection Theory primitives.

The type-1 criterion is fixed at zero, so correct and incorrect trials
each see one side of the evidence axis. Type-2 (confidence) ratings carve
that side into ``K`` ordered bins with thresholds ``0 = t_1 < t_2 < ... <
t_K < t_{K+1} = inf``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

MAX_ABS_META_D = 10.0


def std_normal_cdf(x):
    """Standard normal CDF. Accepts scalars or arrays."""
    out = special.ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf`.

    Raises
    ------
    ValueError
        If any ``p`` lies outside the open interval (0, 1).
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError(f"quantile requires 0 < p < 1, got {p!r}")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Type2Model:
    """Meta-level SDT model: sensitivity plus ordered positive criteria.

    Parameters
    ----------
    meta_d : float
        Meta-level sensitivity, in evidence standard deviations.
    criteria : tuple of float
        ``K - 1`` strictly increasing positive thresholds ``t_2 .. t_K``.
    """

    meta_d: float
    criteria: tuple[float, ...]

    def __post_init__(self):
        crit = tuple(float(c) for c in self.criteria)
        object.__setattr__(self, "criteria", crit)
        object.__setattr__(self, "meta_d", float(self.meta_d))
        if not np.isfinite(self.meta_d) or abs(self.meta_d) > MAX_ABS_META_D:
            raise ValueError(
                f"meta_d must be finite and within [-{MAX_ABS_META_D}, "
                f"{MAX_ABS_META_D}], got {self.meta_d}"
            )
        if len(crit) < 1:
            raise ValueError("need at least one criterion (num_bins >= 2)")
        c = np.asarray(crit)
        if not np.all(np.isfinite(c)) or c[0] <= 0 or np.any(np.diff(c) <= 0):
            raise ValueError(f"criteria must be positive and strictly increasing, got {crit}")

    @property
    def num_bins(self) -> int:
        return len(self.criteria) + 1

    @classmethod
    def evenly_spaced(cls, meta_d: float, num_bins: int, spacing: float = 0.5):
        """Criteria at ``spacing, 2*spacing, ...``."""
        return cls(meta_d, tuple(spacing * j for j in range(1, num_bins)))


def _edges(criteria) -> np.ndarray:
    return np.concatenate(([0.0], np.asarray(criteria, dtype=float), [np.inf]))


def _conditionals(meta_d: float, criteria) -> tuple[np.ndarray, np.ndarray]:
    # P(evidence > t) for a unit normal centred at +-md/2 is ndtr(+-md/2 - t).
    edges = _edges(criteria)
    half = 0.5 * meta_d
    upper_c = special.ndtr(half - edges)
    upper_i = special.ndtr(-half - edges)
    p_c = (upper_c[:-1] - upper_c[1:]) / upper_c[0]
    p_i = (upper_i[:-1] - upper_i[1:]) / upper_i[0]
    return p_c, p_i


def type2_conditional_probs(model: Type2Model) -> tuple[np.ndarray, np.ndarray]:
    """Confidence-bin probabilities given a correct and an incorrect response.

    Returns
    -------
    p_correct, p_incorrect : ndarray of shape (K,)
    """
    half = 0.5 * model.meta_d
    if special.ndtr(half) <= 0.0 or special.ndtr(-half) <= 0.0:
        raise FloatingPointError("degenerate denominator in type-2 conditionals")
    return _conditionals(model.meta_d, model.criteria)


def _loglik(p_c, p_i, counts_c, counts_i) -> float:
    total = 0.0
    for p, n in ((p_c, counts_c), (p_i, counts_i)):
        mask = n > 0
        if np.any(p[mask] <= 0.0):
            return -np.inf
        total += float(np.sum(n[mask] * np.log(p[mask])))
    return total


def type2_log_likelihood(model: Type2Model, counts_correct, counts_incorrect) -> float:
    """Multinomial log-likelihood of a type-2 count table under ``model``.

    Empty cells contribute nothing, even where the model assigns them zero
    probability.
    """
    n_c = np.asarray(counts_correct, dtype=float)
    n_i = np.asarray(counts_incorrect, dtype=float)
    k = model.num_bins
    if n_c.shape != (k,) or n_i.shape != (k,):
        raise ValueError(
            f"count vectors must both have length {k}, got {n_c.shape} and {n_i.shape}"
        )
    if n_c.sum() + n_i.sum() <= 0:
        raise ValueError("count table is empty")
    p_c, p_i = type2_conditional_probs(model)
    return _loglik(p_c, p_i, n_c, n_i)


def sample_trials(model: Type2Model, type1_dprime: float, n: int, rng):
    """Draw ``n`` (correct, confidence bin) pairs.

    Correctness is Bernoulli with rate ``Phi(type1_dprime / 2)``; the bin
    (1-based) is drawn from the matching type-2 conditional.

    Returns
    -------
    correct : ndarray of bool, shape (n,)
    conf_bin : ndarray of int, shape (n,)
    """
    if type1_dprime < 0:
        raise ValueError("type1_dprime must be non-negative")
    acc = special.ndtr(0.5 * type1_dprime)
    correct = rng.random(n) < acc
    conf_bin = sample_confidence_bins(model, correct, rng)
    return correct, conf_bin


def sample_confidence_bins(model: Type2Model, correct, rng) -> np.ndarray:
    """Draw a 1-based confidence bin for each entry of ``correct``."""
    correct = np.asarray(correct, dtype=bool)
    return confidence_bins_from_uniform(model, correct, rng.random(correct.shape))


def confidence_bins_from_uniform(model: Type2Model, correct, u) -> np.ndarray:
    """Inverse-CDF bin lookup for pre-drawn uniforms ``u``."""
    p_c, p_i = type2_conditional_probs(model)
    cum_c = np.cumsum(p_c)[:-1]
    cum_i = np.cumsum(p_i)[:-1]
    bins = np.where(
        correct,
        np.searchsorted(cum_c, u, side="right"),
        np.searchsorted(cum_i, u, side="right"),
    )
    return bins.astype(int) + 1


def sample_trial(model: Type2Model, type1_dprime: float, rng) -> tuple[bool, int]:
    """Single-trial form of :func:`sample_trials`."""
    correct, conf_bin = sample_trials(model, type1_dprime, 1, rng)
    return bool(correct[0]), int(conf_bin[0])
