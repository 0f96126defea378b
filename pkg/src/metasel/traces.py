"""Aligned two-model traces: schema, JSONL/CSV interchange, and a seeded generator.

A trace row carries the ground-truth label and each model's prediction and
max-softmax confidence. Correctness is never stored; it is derived as
``prediction == label``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .sdt import Type2Model, confidence_bins_from_uniform, std_normal_cdf

CSV_HEADER = ("t", "y", "pred_a", "conf_a", "pred_b", "conf_b")
FORMATS = ("jsonl", "csv")
CORRELATIONS = ("independent", "complementary", "shared-noise")


class TraceError(ValueError):
    """Malformed or invalid trace input. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class TrialRecord:
    t: int
    y: object
    pred_a: object
    conf_a: float
    pred_b: object
    conf_b: float

    @property
    def correct_a(self) -> bool:
        return self.pred_a == self.y

    @property
    def correct_b(self) -> bool:
        return self.pred_b == self.y

    def pred(self, k: int):
        return self.pred_b if k else self.pred_a

    def conf(self, k: int) -> float:
        return self.conf_b if k else self.conf_a

    def correct(self, k: int) -> bool:
        return self.pred(k) == self.y


@dataclass(frozen=True)
class AlignedTrace:
    """Ordered trial records for a model pair.

    When ``class_count`` is omitted it is inferred as the smallest count
    consistent with the labels seen and the lowest confidence (a max-softmax
    value can never fall below ``1/class_count``).
    """

    rows: tuple
    model_names: tuple = ("A", "B")
    class_count: int | None = None

    def __post_init__(self):
        rows = tuple(self.rows)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "model_names", tuple(str(n) for n in self.model_names))
        if len(self.model_names) != 2 or self.model_names[0] == self.model_names[1]:
            raise TraceError(f"need two distinct model names, got {self.model_names}")
        for i, row in enumerate(rows, start=1):
            if row.t != i:
                raise TraceError(f"non-contiguous index: expected t={i}, got t={row.t}", i)
            for name, c in zip(self.model_names, (row.conf_a, row.conf_b)):
                if not (0.0 < c <= 1.0):
                    raise TraceError(f"confidence {c} of model {name!r} out of range (0, 1]", i)
        if self.class_count is None:
            labels = {r.y for r in rows} | {r.pred_a for r in rows} | {r.pred_b for r in rows}
            min_conf = min((min(r.conf_a, r.conf_b) for r in rows), default=1.0)
            inferred = max(2, len(labels), math.ceil(1.0 / min_conf - 1e-9))
            object.__setattr__(self, "class_count", inferred)
        elif self.class_count < 2:
            raise TraceError("class_count must be at least 2")
        else:
            lo = 1.0 / self.class_count - 1e-12
            for row in rows:
                for name, c in zip(self.model_names, (row.conf_a, row.conf_b)):
                    if c < lo:
                        raise TraceError(
                            f"confidence {c} of model {name!r} below 1/class_count", row.t
                        )

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def confidences(self) -> np.ndarray:
        """Shape ``(N, 2)``."""
        return np.array([(r.conf_a, r.conf_b) for r in self.rows], dtype=float).reshape(-1, 2)

    @property
    def correct(self) -> np.ndarray:
        """Shape ``(N, 2)`` boolean correctness."""
        return np.array([(r.correct_a, r.correct_b) for r in self.rows], dtype=bool).reshape(-1, 2)

    def model_index(self, name: str) -> int:
        try:
            return self.model_names.index(name)
        except ValueError:
            raise KeyError(
                f"unknown model {name!r}; available: {', '.join(self.model_names)}"
            ) from None


# -- parsing ------------------------------------------------------------------


def _read_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _coerce_label(token: str):
    try:
        return int(token)
    except ValueError:
        return token


def _float(value, line, what):
    if isinstance(value, bool):
        raise TraceError(f"{what} must be a number", line)
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise TraceError(f"{what} must be a number, got {value!r}", line) from None
    if not math.isfinite(out):
        raise TraceError(f"{what} must be finite", line)
    return out


def _int(value, line, what="t"):
    if isinstance(value, bool):
        raise TraceError(f"{what} must be an integer", line)
    if isinstance(value, int):
        return value
    try:
        return int(value)
    except (TypeError, ValueError):
        raise TraceError(f"{what} must be an integer, got {value!r}", line) from None


def _parse_jsonl(text):
    rows, names = [], None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(obj, dict):
            raise TraceError("row must be a JSON object", lineno)
        for key in ("t", "y", "m"):
            if key not in obj:
                raise TraceError(f"missing field {key!r}", lineno)
        models = obj["m"]
        if not isinstance(models, dict) or len(models) != 2:
            raise TraceError("field 'm' must map exactly two model names", lineno)
        if names is None:
            names = tuple(models)
        elif set(models) != set(names):
            missing = sorted(set(names) - set(models))
            raise TraceError(f"missing model column(s) {missing}", lineno)
        cells = []
        for name in names:
            cell = models[name]
            if not isinstance(cell, dict) or "pred" not in cell or "conf" not in cell:
                raise TraceError(f"model {name!r} needs 'pred' and 'conf'", lineno)
            conf = _float(cell["conf"], lineno, f"confidence of {name!r}")
            if not 0.0 < conf <= 1.0:
                raise TraceError(f"confidence {conf} of model {name!r} out of range (0, 1]", lineno)
            cells.append((cell["pred"], conf))
        rows.append(
            (lineno, TrialRecord(_int(obj["t"], lineno), obj["y"], *cells[0], *cells[1]))
        )
    return rows, names


def _parse_csv(text):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TraceError("empty CSV document", 1) from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise TraceError(f"CSV header must be {','.join(CSV_HEADER)}", 1)
    rows = []
    for fields in reader:
        lineno = reader.line_num
        if not fields:
            continue
        if len(fields) != len(CSV_HEADER):
            raise TraceError(f"expected {len(CSV_HEADER)} fields, got {len(fields)}", lineno)
        t, y, pa, ca, pb, cb = fields
        conf_a = _float(ca, lineno, "conf_a")
        conf_b = _float(cb, lineno, "conf_b")
        for col, c in (("conf_a", conf_a), ("conf_b", conf_b)):
            if not 0.0 < c <= 1.0:
                raise TraceError(f"{col} = {c} out of range (0, 1]", lineno)
        rec = TrialRecord(
            _int(t, lineno),
            _coerce_label(y),
            _coerce_label(pa),
            conf_a,
            _coerce_label(pb),
            conf_b,
        )
        rows.append((lineno, rec))
    return rows, None


def parse_trace(source, format: str = "jsonl", *, model_names=None, class_count=None) -> AlignedTrace:
    """Parse a JSONL or CSV trace from bytes, text, or a file object.

    Raises
    ------
    TraceError
        On malformed rows, non-contiguous ``t``, out-of-range confidences
        or missing model entries; the message names the offending line.
    """
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {format!r}")
    text = _read_text(source)
    rows, names = (_parse_jsonl if format == "jsonl" else _parse_csv)(text)
    if not rows:
        raise TraceError("trace contains no rows")
    for i, (lineno, rec) in enumerate(rows, start=1):
        if rec.t != i:
            raise TraceError(f"non-contiguous index: expected t={i}, got t={rec.t}", lineno)
    names = tuple(model_names or names or ("A", "B"))
    return AlignedTrace(tuple(r for _, r in rows), names, class_count)


def read_trace(path, format: str | None = None, **kwargs) -> AlignedTrace:
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    return parse_trace(path.read_bytes(), format, **kwargs)


def _plain(value):
    return value.item() if isinstance(value, np.generic) else value


def serialise_trace(trace: AlignedTrace, format: str = "jsonl") -> str:
    """Inverse of :func:`parse_trace`. Floats are written with full ``repr`` precision."""
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {format!r}")
    out = io.StringIO()
    na, nb = trace.model_names
    if format == "jsonl":
        for r in trace.rows:
            obj = {
                "t": r.t,
                "y": _plain(r.y),
                "m": {
                    na: {"pred": _plain(r.pred_a), "conf": float(r.conf_a)},
                    nb: {"pred": _plain(r.pred_b), "conf": float(r.conf_b)},
                },
            }
            out.write(json.dumps(obj, ensure_ascii=False) + "\n")
    else:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in trace.rows:
            writer.writerow(
                [r.t, _plain(r.y), _plain(r.pred_a), repr(float(r.conf_a)),
                 _plain(r.pred_b), repr(float(r.conf_b))]
            )
    return out.getvalue()


def write_trace(trace: AlignedTrace, path, format: str | None = None) -> Path:
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    path.write_text(serialise_trace(trace, format), encoding="utf-8")
    return path


# -- synthetic scenarios ------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """A stationary stretch of one model's behaviour.

    By default correctness has rate ``Phi(dprime / 2)`` and confidence is the
    mapped midpoint of a bin drawn from a type-2 model with
    ``meta_d = metad_ratio * dprime`` and criteria spaced ``spread`` apart.
    ``accuracy`` overrides the correctness rate; ``off_accuracy`` is the rate
    used on off-phases of complementary scenarios (chance if unset);
    ``confidence = (when_correct, when_incorrect)`` replaces the binned draw
    with two fixed values.
    """

    length: int
    dprime: float = 2.0
    metad_ratio: float = 1.0
    bins: int = 4
    spread: float = 0.5
    accuracy: float | None = None
    off_accuracy: float | None = None
    confidence: tuple | None = None

    def __post_init__(self):
        if self.confidence is not None:
            object.__setattr__(self, "confidence", tuple(float(c) for c in self.confidence))

    @property
    def meta_d(self) -> float:
        return self.metad_ratio * self.dprime

    @property
    def on_accuracy(self) -> float:
        return self.accuracy if self.accuracy is not None else std_normal_cdf(self.dprime / 2)

    def type2_model(self) -> Type2Model:
        return Type2Model.evenly_spaced(self.meta_d, self.bins, self.spread)


@dataclass(frozen=True)
class ScenarioSpec:
    """Two models' segment lists plus how their errors are coupled.

    ``correlation`` is ``"independent"``, ``"complementary"`` (model A is on
    while ``(t // period)`` is even, model B otherwise) or ``"shared-noise"``
    (correctness coupled through a Gaussian copula with correlation ``rho``).
    """

    segments: tuple
    correlation: str = "independent"
    period: int = 1
    rho: float = 0.0
    seed: int = 0
    class_count: int = 10
    model_names: tuple = ("A", "B")
    name: str = ""

    def __post_init__(self):
        segs = tuple(
            tuple(s if isinstance(s, Segment) else Segment(**s) for s in model)
            for model in self.segments
        )
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "model_names", tuple(self.model_names))
        self.validate()

    def validate(self):
        if len(self.segments) != 2 or len(self.model_names) != 2:
            raise ValueError("a scenario describes exactly two models")
        if self.correlation not in CORRELATIONS:
            raise ValueError(f"correlation must be one of {CORRELATIONS}")
        if self.period < 1:
            raise ValueError("period must be at least 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.class_count < 2:
            raise ValueError("class_count must be at least 2")
        lo = 1.0 / self.class_count
        for name, model in zip(self.model_names, self.segments):
            if not model:
                raise ValueError(f"model {name!r} has no segments")
            for seg in model:
                if int(seg.length) != seg.length or seg.length < 1:
                    raise ValueError(f"segment length must be a positive integer, got {seg.length}")
                if seg.dprime < 0 or seg.metad_ratio < 0:
                    raise ValueError("dprime and metad_ratio must be non-negative")
                if seg.bins < 2 or seg.spread <= 0:
                    raise ValueError("bins must be >= 2 and spread > 0")
                for p in (seg.accuracy, seg.off_accuracy):
                    if p is not None and not 0.0 <= p <= 1.0:
                        raise ValueError("accuracies must lie in [0, 1]")
                if seg.confidence is not None:
                    if len(seg.confidence) != 2 or not all(lo <= c <= 1 for c in seg.confidence):
                        raise ValueError(f"fixed confidences must be two values in [{lo}, 1]")
                seg.type2_model()
        totals = [sum(s.length for s in model) for model in self.segments]
        if totals[0] != totals[1]:
            raise ValueError(f"models must cover the same number of trials, got {totals}")

    @property
    def n_trials(self) -> int:
        return sum(s.length for s in self.segments[0])

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        doc = dict(doc)
        models = doc.pop("models", None)
        if models is not None:
            doc["model_names"] = tuple(m["name"] for m in models)
            doc["segments"] = tuple(tuple(m["segments"]) for m in models)
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ValueError(f"invalid scenario document: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "class_count": self.class_count,
            "correlation": self.correlation,
            "period": self.period,
            "rho": self.rho,
            "models": [
                {"name": n, "segments": [asdict(s) for s in model]}
                for n, model in zip(self.model_names, self.segments)
            ],
        }


def _segment_index(model_segments, n) -> np.ndarray:
    lengths = [s.length for s in model_segments]
    return np.repeat(np.arange(len(lengths)), lengths)[:n]


def generate(spec: ScenarioSpec, seed: int | None = None) -> AlignedTrace:
    """Draw a synthetic trace. Identical spec and seed give identical traces."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    n, C = spec.n_trials, spec.class_count
    t = np.arange(1, n + 1)
    labels = rng.integers(C, size=n)
    if spec.correlation == "shared-noise":
        common = rng.standard_normal(n)
        own = rng.standard_normal((n, 2))
        u_correct = std_normal_cdf(
            np.sqrt(spec.rho) * common[:, None] + np.sqrt(1 - spec.rho) * own
        )
    else:
        u_correct = rng.random((n, 2))
    u_bin = rng.random((n, 2))
    offsets = rng.integers(1, C, size=(n, 2))

    preds = np.empty((n, 2), dtype=int)
    confs = np.empty((n, 2), dtype=float)
    on_a = (t // spec.period) % 2 == 0
    lo = 1.0 / C
    for k, model in enumerate(spec.segments):
        seg_idx = _segment_index(model, n)
        on = on_a if k == 0 else ~on_a
        for j, seg in enumerate(model):
            rows = seg_idx == j
            acc = np.full(rows.sum(), seg.on_accuracy)
            if spec.correlation == "complementary":
                off = 0.5 if seg.off_accuracy is None else seg.off_accuracy
                acc = np.where(on[rows], acc, off)
            correct = u_correct[rows, k] < acc
            if seg.confidence is not None:
                confs[rows, k] = np.where(correct, *seg.confidence)
            else:
                bins = confidence_bins_from_uniform(seg.type2_model(), correct, u_bin[rows, k])
                confs[rows, k] = lo + (1.0 - lo) * (bins - 0.5) / seg.bins
            preds[rows, k] = np.where(correct, labels[rows], (labels[rows] + offsets[rows, k]) % C)

    records = tuple(
        TrialRecord(int(i), int(y), int(pa), float(ca), int(pb), float(cb))
        for i, y, (pa, pb), (ca, cb) in zip(t, labels, preds, confs)
    )
    return AlignedTrace(records, spec.model_names, C)


def segment_summary(spec: ScenarioSpec, trace: AlignedTrace) -> list[dict]:
    """Empirical accuracy of every segment of every model."""
    correct = trace.correct
    out = []
    for k, (name, model) in enumerate(zip(spec.model_names, spec.segments)):
        start = 0
        for j, seg in enumerate(model):
            stop = start + seg.length
            out.append({
                "model": name,
                "segment": j + 1,
                "trials": f"{start + 1}-{stop}",
                "accuracy": float(correct[start:stop, k].mean()),
            })
            start = stop
    return out


BUNDLED_SCENARIOS = {
    "complementary-1000": {
        "name": "complementary-1000",
        "correlation": "complementary",
        "period": 1,
        "class_count": 10,
        "models": [
            {"name": "A", "segments": [
                {"length": 1000, "accuracy": 0.95, "off_accuracy": 0.30,
                 "confidence": [0.9, 0.55]},
            ]},
            {"name": "B", "segments": [
                {"length": 1000, "accuracy": 0.95, "off_accuracy": 0.30,
                 "confidence": [0.9, 0.55]},
            ]},
        ],
    },
    "drift-at-700": {
        "name": "drift-at-700",
        "correlation": "independent",
        "class_count": 10,
        "models": [
            {"name": "A", "segments": [
                {"length": 700, "dprime": 2.5, "metad_ratio": 1.0},
                {"length": 300, "dprime": 0.8, "metad_ratio": 0.1},
            ]},
            {"name": "B", "segments": [
                {"length": 1000, "dprime": 1.6, "metad_ratio": 1.0},
            ]},
        ],
    },
}


def load_scenario(name_or_path, seed: int | None = None) -> ScenarioSpec:
    """Bundled scenario by name, or a JSON scenario document by path."""
    if isinstance(name_or_path, dict):
        doc = dict(name_or_path)
    elif str(name_or_path) in BUNDLED_SCENARIOS:
        doc = json.loads(json.dumps(BUNDLED_SCENARIOS[str(name_or_path)]))
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise FileNotFoundError(
                f"no scenario file {str(path)!r} and no bundled scenario of that name "
                f"(bundled: {', '.join(BUNDLED_SCENARIOS)})"
            )
        doc = json.loads(path.read_text(encoding="utf-8"))
    if seed is not None:
        doc["seed"] = seed
    return ScenarioSpec.from_dict(doc)
