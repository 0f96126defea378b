import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metasel.engine import EngineConfig, run
from metasel.metad import fit_meta_d
from metasel.traces import (
    BUNDLED_SCENARIOS,
    AlignedTrace,
    ScenarioSpec,
    Segment,
    TraceError,
    TrialRecord,
    generate,
    load_scenario,
    parse_trace,
    read_trace,
    segment_summary,
    serialise_trace,
    write_trace,
)

VALID_JSONL = b"""{"t": 1, "y": 3, "m": {"vit": {"pred": 3, "conf": 0.91}, "alexnet": {"pred": 1, "conf": 0.40}}}
{"t": 2, "y": 0, "m": {"vit": {"pred": 0, "conf": 0.77}, "alexnet": {"pred": 0, "conf": 0.65}}}
{"t": 3, "y": 7, "m": {"vit": {"pred": 2, "conf": 0.52}, "alexnet": {"pred": 7, "conf": 0.88}}}
"""


def stationary(length, dprime=2.0, ratio=1.0, seed=0, **kw):
    seg = [Segment(length, dprime, ratio)]
    return ScenarioSpec((seg, seg), seed=seed, **kw)


class TestParse:
    def test_valid_jsonl(self):
        trace = parse_trace(io.BytesIO(VALID_JSONL), "jsonl")
        assert len(trace) == 3
        assert trace.model_names == ("vit", "alexnet")
        assert trace.rows[0].correct_a and not trace.rows[0].correct_b
        np.testing.assert_array_equal(trace.correct, [[1, 0], [1, 1], [0, 1]])

    def test_confidence_out_of_range_names_row(self):
        bad = VALID_JSONL.replace(b'"conf": 0.77', b'"conf": 1.2')
        with pytest.raises(TraceError, match="line 2") as exc:
            parse_trace(bad, "jsonl")
        assert exc.value.line == 2

    def test_non_contiguous(self):
        bad = VALID_JSONL.replace(b'"t": 3', b'"t": 4')
        with pytest.raises(TraceError, match="non-contiguous"):
            parse_trace(bad, "jsonl")

    def test_missing_model(self):
        lines = VALID_JSONL.decode().splitlines()
        lines[1] = '{"t": 2, "y": 0, "m": {"vit": {"pred": 0, "conf": 0.77}, "resnet": {"pred": 0, "conf": 0.6}}}'
        with pytest.raises(TraceError, match="missing model"):
            parse_trace("\n".join(lines), "jsonl")

    def test_malformed_json(self):
        with pytest.raises(TraceError, match="line 2"):
            parse_trace(VALID_JSONL.replace(b'{"t": 2', b'{"t" 2'), "jsonl")

    def test_missing_field(self):
        with pytest.raises(TraceError, match="'y'"):
            parse_trace(b'{"t": 1, "m": {"a": {"pred": 1, "conf": 0.5}, "b": {"pred": 1, "conf": 0.5}}}')

    def test_csv(self):
        text = "t,y,pred_a,conf_a,pred_b,conf_b\n1,cat,cat,0.9,dog,0.6\n2,dog,dog,0.8,dog,0.7\n"
        trace = parse_trace(text, "csv")
        assert trace.rows[0].y == "cat" and trace.rows[0].correct_a
        assert trace.model_names == ("A", "B")

    def test_csv_header_and_arity(self):
        with pytest.raises(TraceError, match="header"):
            parse_trace("t,y,pa,ca,pb,cb\n1,1,1,0.5,1,0.5\n", "csv")
        with pytest.raises(TraceError, match="line 3"):
            parse_trace("t,y,pred_a,conf_a,pred_b,conf_b\n1,1,1,0.5,1,0.5\n2,1,1,0.5\n", "csv")
        with pytest.raises(TraceError, match="conf_b"):
            parse_trace("t,y,pred_a,conf_a,pred_b,conf_b\n1,1,1,0.5,1,x\n", "csv")

    def test_empty(self):
        with pytest.raises(TraceError):
            parse_trace(b"", "jsonl")

    def test_class_count(self):
        assert parse_trace(VALID_JSONL).class_count >= 3
        with pytest.raises(TraceError, match="below 1/class_count"):
            parse_trace(VALID_JSONL, class_count=2)


@pytest.mark.parametrize("fmt", ["jsonl", "csv"])
def test_round_trip_generated(fmt):
    for seed in range(100):
        trace = generate(stationary(30, dprime=1.0 + seed % 3, seed=seed))
        back = parse_trace(serialise_trace(trace, fmt), fmt)
        assert back.rows == trace.rows
        if fmt == "jsonl":
            assert back.model_names == trace.model_names


def test_round_trip_strings_and_files(tmp_path):
    trace = parse_trace(VALID_JSONL)
    for name in ("t.jsonl", "t.csv"):
        path = write_trace(trace, tmp_path / name)
        back = read_trace(path)
        assert back.rows == trace.rows


def test_csv_floats_are_exact():
    rows = (TrialRecord(1, 1, 1, 0.1 + 0.2, 0, 1 / 3),)
    trace = AlignedTrace(rows, class_count=4)
    back = parse_trace(serialise_trace(trace, "csv"), "csv")
    assert back.rows[0].conf_a == 0.1 + 0.2 and back.rows[0].conf_b == 1 / 3


segment_st = st.builds(
    Segment,
    length=st.integers(1, 40),
    dprime=st.floats(0, 4),
    metad_ratio=st.floats(0, 2),
    bins=st.integers(2, 6),
    spread=st.floats(0.1, 1.5),
)


@st.composite
def scenario_st(draw):
    a = draw(st.lists(segment_st, min_size=1, max_size=3))
    total = sum(s.length for s in a)
    b_len = draw(st.integers(1, total))
    b = [Segment(b_len, draw(st.floats(0, 4)))]
    if total > b_len:
        b.append(Segment(total - b_len, draw(st.floats(0, 4))))
    return ScenarioSpec(
        (a, b),
        correlation=draw(st.sampled_from(["independent", "complementary", "shared-noise"])),
        period=draw(st.integers(1, 5)),
        rho=draw(st.floats(0, 1)),
        seed=draw(st.integers(0, 2**31)),
        class_count=draw(st.integers(2, 100)),
    )


@settings(max_examples=100, deadline=None)
@given(scenario_st())
def test_generated_traces_satisfy_invariants(spec):
    trace = generate(spec)
    assert len(trace) == spec.n_trials
    assert [r.t for r in trace] == list(range(1, spec.n_trials + 1))
    conf = trace.confidences
    assert np.all(conf >= 1 / spec.class_count) and np.all(conf <= 1)
    assert trace.class_count == spec.class_count
    labels = {r.y for r in trace} | {r.pred_a for r in trace} | {r.pred_b for r in trace}
    assert labels <= set(range(spec.class_count))
    for fmt in ("jsonl", "csv"):
        assert parse_trace(serialise_trace(trace, fmt), fmt).rows == trace.rows


class TestGenerate:
    def test_chance_segment(self):
        trace = generate(stationary(10_000, dprime=0.0, seed=1))
        assert np.all(np.abs(trace.correct.mean(axis=0) - 0.5) < 0.01)

    def test_deterministic(self):
        spec = load_scenario("drift-at-700")
        assert generate(spec).rows == generate(spec).rows
        assert generate(spec, seed=1).rows != generate(spec, seed=2).rows

    def test_confidence_is_mapped_bin_midpoint(self):
        trace = generate(stationary(500, seed=2, class_count=10))
        values = np.unique(trace.confidences)
        np.testing.assert_allclose(values, 0.1 + 0.9 * (np.arange(4) + 0.5) / 4)

    def test_stationary_segment_recovery(self):
        trace = generate(stationary(5000, dprime=2.0, ratio=0.75, seed=4))
        for k in range(2):
            fit = fit_meta_d(zip(trace.confidences[:, k], trace.correct[:, k].astype(int)))
            assert abs(fit.meta_d - 1.5) < 0.2

    def test_drop_in_sensitivity_after_700(self):
        a = [Segment(700, 2.0, 1.0), Segment(300, 2.0, 0.1)]
        b = [Segment(1000, 2.0, 1.0)]
        trace = generate(ScenarioSpec((a, b), seed=11))
        rep = run(trace, EngineConfig())
        before = [fits[0].meta_d for t, fits in rep.refits if t <= 701]
        after = [fits[0].meta_d for t, fits in rep.refits if t >= 801]
        assert np.mean(before) - np.mean(after) > 1.0

    def test_complementary_bundle(self):
        trace = generate(load_scenario("complementary-1000", seed=3))
        correct = trace.correct
        t = np.arange(1, 1001)
        even = t % 2 == 0
        assert abs(correct[even, 0].mean() - 0.95) < 0.03
        assert abs(correct[~even, 0].mean() - 0.30) < 0.05
        assert abs(correct[~even, 1].mean() - 0.95) < 0.03
        conf = trace.confidences
        np.testing.assert_array_equal(conf[correct], 0.9)
        np.testing.assert_array_equal(conf[~correct], 0.55)

    def test_shared_noise_couples_errors(self):
        seg = [Segment(20_000, 1.5)]
        corr = {}
        for rho in (0.0, 0.9):
            spec = ScenarioSpec((seg, seg), correlation="shared-noise", rho=rho, seed=5)
            c = generate(spec).correct
            corr[rho] = np.corrcoef(c[:, 0], c[:, 1])[0, 1]
        assert abs(corr[0.0]) < 0.03
        assert corr[0.9] > 0.5

    def test_segment_summary(self):
        spec = load_scenario("drift-at-700", seed=0)
        summary = segment_summary(spec, generate(spec))
        assert [s["trials"] for s in summary] == ["1-700", "701-1000", "1-1000"]


class TestScenarioSpec:
    @pytest.mark.parametrize("segs", [
        ([{"length": -3}], [{"length": 5}]),
        ([{"length": 0}], [{"length": 0}]),
        ([{"length": 5}], [{"length": 6}]),
        ([{"length": 5, "metad_ratio": -1}], [{"length": 5}]),
        ([{"length": 5, "dprime": 8, "metad_ratio": 2}], [{"length": 5}]),
    ])
    def test_invalid(self, segs):
        with pytest.raises(ValueError):
            ScenarioSpec(segs)

    def test_bad_correlation(self):
        with pytest.raises(ValueError):
            ScenarioSpec(([{"length": 5}], [{"length": 5}]), correlation="sometimes")

    def test_dict_round_trip(self, tmp_path):
        spec = load_scenario("complementary-1000", seed=4)
        again = ScenarioSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
        assert again == spec
        path = tmp_path / "s.json"
        path.write_text(json.dumps(spec.to_dict()))
        assert load_scenario(path) == spec

    def test_bundles_load(self):
        for name in BUNDLED_SCENARIOS:
            assert load_scenario(name).n_trials == 1000

    def test_unknown_scenario(self):
        with pytest.raises(FileNotFoundError, match="bundled"):
            load_scenario("no-such-scenario")
