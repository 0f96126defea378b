"""Online selection loop: burn-in, scheduled meta-d' refits, bandit choice, reporting."""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, column_or_1d

from .bandit import ARM_NAMES, ArmState, BanditConfig, ContextVector, select, update
from .metad import DEFAULT_BINS, MetaDFit, PerformanceWindow, fit_meta_d, initial_scores
from .traces import AlignedTrace, TraceError, TrialRecord

DEFAULT_CHECKPOINTS = (300, 700, 1000)


@dataclass(frozen=True)
class EngineConfig:
    burn_in: int = 100
    window: int = 100
    update_freq: int = 50
    bins: int = DEFAULT_BINS
    bandit: BanditConfig = field(default_factory=BanditConfig)
    checkpoints: tuple = DEFAULT_CHECKPOINTS

    def __post_init__(self):
        object.__setattr__(self, "checkpoints", tuple(int(c) for c in self.checkpoints))
        if self.burn_in < 20:
            raise ValueError("burn_in must be at least 20")
        if self.window < 20:
            raise ValueError("window must be at least 20")
        if not 1 <= self.update_freq <= self.window:
            raise ValueError("update_freq must lie in [1, window]")
        if self.bins < 2:
            raise ValueError("bins must be at least 2")
        if any(b <= a for a, b in zip(self.checkpoints, self.checkpoints[1:])):
            raise ValueError("checkpoints must be strictly increasing")

    def is_refit(self, t: int) -> bool:
        # (t - B) mod F == 1, read so that F == 1 refits every trial.
        return (t - self.burn_in - 1) % self.update_freq == 0


@dataclass(frozen=True)
class TrialEvent:
    t: int
    context: ContextVector
    chosen: int
    reward: int
    mu_a: float
    mu_b: float
    refit: bool

    def to_json(self) -> str:
        return json.dumps({
            "t": self.t,
            "ctx": [float(v) for v in self.context],
            "arm": ARM_NAMES[self.chosen],
            "reward": self.reward,
            "mu_a": self.mu_a,
            "mu_b": self.mu_b,
            "refit": self.refit,
        })

    @classmethod
    def from_json(cls, line: str) -> "TrialEvent":
        obj = json.loads(line)
        return cls(
            t=int(obj["t"]),
            context=ContextVector(*obj["ctx"]),
            chosen=ARM_NAMES.index(obj["arm"]),
            reward=int(obj["reward"]),
            mu_a=float(obj["mu_a"]),
            mu_b=float(obj["mu_b"]),
            refit=bool(obj["refit"]),
        )


@dataclass(frozen=True)
class CheckpointRow:
    checkpoint: int
    acc_model_a: float
    acc_model_b: float
    acc_combined: float

    @property
    def best_individual(self) -> float:
        return max(self.acc_model_a, self.acc_model_b)

    @property
    def delta_vs_best(self) -> float:
        return self.acc_combined - self.best_individual


def _pct(x: float) -> str:
    return f"{100 * x:.1f}"


def _signed_pct(x: float) -> str:
    return f"{100 * x:+.1f}%"


@dataclass
class RunReport:
    """Accuracies, checkpoint table, event log and learning-dynamics series of one run."""

    model_names: tuple
    burn_in: int
    accuracy: float
    acc_model_a: float
    acc_model_b: float
    union_oracle: float
    rows: list
    events: list
    initial_mu: tuple = (0.0, 0.0)
    final_arms: list | None = None
    refits: list = field(default_factory=list, repr=False)
    model_correct: np.ndarray | None = field(default=None, repr=False)

    @property
    def pair_name(self) -> str:
        return "-".join(self.model_names)

    def selection_fraction(self, k: int, start: int, stop: int) -> float:
        """Share of trials ``start..stop`` (inclusive) routed to model ``k``."""
        chosen = [e.chosen for e in self.events if start <= e.t <= stop]
        return float(np.mean(np.asarray(chosen) == k)) if chosen else float("nan")

    def dynamics(self) -> list[dict]:
        """Per-trial cumulative accuracies and meta-d' scores."""
        out, hits, n = [], np.zeros(3), 0
        for e, correct in zip(self.events, self.model_correct):
            n += 1
            hits += (e.reward, correct[0], correct[1])
            out.append({
                "t": e.t,
                "cum_acc_combined": float(hits[0] / n),
                "cum_acc_a": float(hits[1] / n),
                "cum_acc_b": float(hits[2] / n),
                "mu_a": e.mu_a,
                "mu_b": e.mu_b,
                "arm": ARM_NAMES[e.chosen],
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["checkpoint", "acc_model_a", "acc_model_b", "acc_combined", "delta_vs_best"])
        for r in self.rows:
            w.writerow([r.checkpoint, f"{r.acc_model_a:.6f}", f"{r.acc_model_b:.6f}",
                        f"{r.acc_combined:.6f}", f"{r.delta_vs_best:+.6f}"])
        return buf.getvalue()

    def to_table(self) -> str:
        """Checkpoint table: best individual model, combined, signed delta."""
        head1 = ["Model Pair"] + [f"{r.checkpoint} trials" for r in self.rows]
        head2 = [""] + ["Model  Comb." for _ in self.rows]
        body = [self.pair_name] + [
            f"{_pct(r.best_individual)}  {_pct(r.acc_combined)} ({_signed_pct(r.delta_vs_best)})"
            for r in self.rows
        ]
        widths = [max(len(c) for c in col) for col in zip(head1, head2, body)]
        fmt = lambda cells: " | ".join(c.ljust(wd) for c, wd in zip(cells, widths)).rstrip()
        lines = [fmt(head1), fmt(head2), "-+-".join("-" * wd for wd in widths), fmt(body), ""]
        na, nb = self.model_names
        for r in self.rows:
            lines.append(
                f"  {r.checkpoint:>6} trials: {na} {_pct(r.acc_model_a)}  "
                f"{nb} {_pct(r.acc_model_b)}  combined {_pct(r.acc_combined)}"
            )
        lines.append(
            f"overall accuracy (trials {self.burn_in + 1}..{self.burn_in + len(self.events)}): "
            f"{_pct(self.accuracy)}  union oracle {_pct(self.union_oracle)}"
        )
        return "\n".join(lines) + "\n"

    def events_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    def dynamics_csv(self) -> str:
        buf = io.StringIO()
        cols = ["t", "cum_acc_combined", "cum_acc_a", "cum_acc_b", "mu_a", "mu_b", "arm"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in self.dynamics():
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()


def _check_trace(trace, cfg):
    if not isinstance(trace, AlignedTrace):
        raise TraceError(f"expected an AlignedTrace, got {type(trace).__name__}")
    if len(trace) < cfg.burn_in + 1:
        raise TraceError(
            f"trace has {len(trace)} rows; need at least burn_in + 1 = {cfg.burn_in + 1}"
        )


def run(trace: AlignedTrace, cfg: EngineConfig | None = None) -> RunReport:
    """Run the burn-in then the contextual-bandit selection loop over ``trace``."""
    cfg = cfg or EngineConfig()
    _check_trace(trace, cfg)
    B = cfg.burn_in
    conf = trace.confidences
    correct = trace.correct.astype(int)

    windows = [PerformanceWindow(cfg.window) for _ in range(2)]
    burn = [PerformanceWindow(B) for _ in range(2)]
    for i in range(B):
        for k in range(2):
            windows[k].append(conf[i, k], correct[i, k])
            burn[k].append(conf[i, k], correct[i, k])
    mu = initial_scores(burn, cfg.bins)
    initial_mu = tuple(mu)

    rng = np.random.default_rng(cfg.bandit.rng_seed)
    arms = [ArmState.fresh(4), ArmState.fresh(4)]
    events, refits = [], []
    for t in range(B + 1, len(trace) + 1):
        i = t - 1
        refit = cfg.is_refit(t)
        if refit:
            fits: list[MetaDFit] = [fit_meta_d(w, cfg.bins) for w in windows]
            mu = [f.meta_d for f in fits]
            refits.append((t, fits))
        s = ContextVector(conf[i, 0], mu[0], conf[i, 1], mu[1])
        a = select(arms, s, cfg.bandit, rng)
        r = int(correct[i, a])
        arms[a] = update(arms[a], s, r)
        for k in range(2):
            windows[k].append(conf[i, k], correct[i, k])
        events.append(TrialEvent(t, s, a, r, float(mu[0]), float(mu[1]), refit))

    rep = report(events, trace, cfg)
    rep.initial_mu = initial_mu
    rep.final_arms = arms
    rep.refits = refits
    return rep


def report(events, trace: AlignedTrace, cfg: EngineConfig | None = None) -> RunReport:
    """Checkpoint accuracies over trials ``B+1..c`` for each checkpoint ``c``.

    Checkpoints beyond the last trial are dropped with a warning.
    """
    cfg = cfg or EngineConfig()
    events = list(events)
    if not events:
        raise ValueError("no events to report on")
    B = cfg.burn_in
    for c in cfg.checkpoints:
        if c <= B:
            raise ValueError(f"checkpoint {c} does not exceed burn_in {B}")
    last = events[-1].t
    if [e.t for e in events] != list(range(B + 1, last + 1)):
        raise ValueError(f"events must cover trials {B + 1}..{last} contiguously")
    if last > len(trace):
        raise ValueError("events extend past the end of the trace")

    correct = trace.correct[B:last].astype(int)
    rewards = np.array([e.reward for e in events])
    kept = [c for c in cfg.checkpoints if c <= last]
    if len(kept) < len(cfg.checkpoints):
        dropped = [c for c in cfg.checkpoints if c > last]
        warnings.warn(f"checkpoints {dropped} exceed the {last} available trials; omitted")
    rows = []
    for c in kept:
        n = c - B
        rows.append(CheckpointRow(
            c,
            float(correct[:n, 0].mean()),
            float(correct[:n, 1].mean()),
            float(rewards[:n].mean()),
        ))
    rep = RunReport(
        model_names=trace.model_names,
        burn_in=B,
        accuracy=float(rewards.mean()),
        acc_model_a=float(correct[:, 0].mean()),
        acc_model_b=float(correct[:, 1].mean()),
        union_oracle=float(correct.max(axis=1).mean()),
        rows=rows,
        events=events,
        model_correct=correct,
    )
    return rep


def read_events(source) -> list[TrialEvent]:
    text = source if isinstance(source, str) else source.read()
    return [TrialEvent.from_json(line) for line in text.splitlines() if line.strip()]


class MetacognitiveSelector(BaseEstimator):
    """Online two-model selector driven by confidence and windowed meta-d'.

    ``fit`` replays a trace through the burn-in and the selection loop.

    Parameters
    ----------
    burn_in, window, update_freq : int
        Trials used to seed the scores, history length per refit, and
        refit period.
    n_bins : int
        Confidence bins for each meta-d' fit.
    policy : {"linucb", "lints"}
    alpha : float
        LinUCB exploration width.
    sigma, epsilon : float
        LinTS sampling scale and inverse regulariser.
    random_state : int
    checkpoints : tuple of int

    Attributes
    ----------
    report_ : RunReport
    accuracy_ : float
        Combined accuracy over the post-burn-in trials.
    selections_ : ndarray of int
        Chosen model (0 or 1) for each post-burn-in trial.
    """

    def __init__(self, burn_in=100, window=100, update_freq=50, n_bins=DEFAULT_BINS,
                 policy="linucb", alpha=1.0, sigma=1.0, epsilon=1e-6, random_state=0,
                 checkpoints=DEFAULT_CHECKPOINTS):
        self.burn_in = burn_in
        self.window = window
        self.update_freq = update_freq
        self.n_bins = n_bins
        self.policy = policy
        self.alpha = alpha
        self.sigma = sigma
        self.epsilon = epsilon
        self.random_state = random_state
        self.checkpoints = checkpoints

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            burn_in=self.burn_in,
            window=self.window,
            update_freq=self.update_freq,
            bins=self.n_bins,
            bandit=BanditConfig(self.policy, self.alpha, self.sigma, self.epsilon,
                                int(self.random_state or 0)),
            checkpoints=self.checkpoints,
        )

    @staticmethod
    def _as_trace(X, y):
        if isinstance(X, AlignedTrace):
            return X
        X = check_array(X, dtype=object)
        if X.shape[1] != 4:
            raise ValueError("X must have columns pred_a, conf_a, pred_b, conf_b")
        if y is None:
            raise ValueError("labels y are required when X is an array")
        y = column_or_1d(y)
        if len(y) != len(X):
            raise ValueError("X and y lengths differ")
        rows = tuple(
            TrialRecord(i, lab, pa, float(ca), pb, float(cb))
            for i, (lab, (pa, ca, pb, cb)) in enumerate(zip(y, X), start=1)
        )
        return AlignedTrace(rows)

    def fit(self, X, y=None):
        """Run selection over ``X`` (an ``AlignedTrace`` or an ``(n, 4)`` array with labels ``y``)."""
        trace = self._as_trace(X, y)
        rep = run(trace, self.engine_config())
        self.trace_ = trace
        self.report_ = rep
        self.accuracy_ = rep.accuracy
        self.selections_ = np.array([e.chosen for e in rep.events], dtype=int)
        self.arms_ = rep.final_arms
        return self

    def fit_predict(self, X, y=None):
        """Predictions of the chosen model for every post-burn-in trial."""
        self.fit(X, y)
        rows = self.trace_.rows[self.burn_in:]
        return np.array([r.pred(k) for r, k in zip(rows, self.selections_)], dtype=object)
