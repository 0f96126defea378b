import json
import subprocess
import sys

from metasel.cli import main
from metasel.metad import fit_meta_d
from metasel.traces import read_trace


def _stationary_spec(path, n=4000, dprime=2.0, ratio=0.75, seed=11):
    doc = {
        "name": "stationary",
        "seed": seed,
        "models": [
            {"name": "A", "segments": [{"length": n, "dprime": dprime, "metad_ratio": ratio}]},
            {"name": "B", "segments": [{"length": n, "dprime": 1.0}]},
        ],
    }
    path.write_text(json.dumps(doc))
    return path


def test_simulate_bundled_length(tmp_path, capsys):
    out = tmp_path / "comp.jsonl"
    assert main(["simulate", "--scenario", "complementary-1000", "--seed", "1", "--out", str(out)]) == 0
    assert len(read_trace(out)) == 1000
    assert len(out.read_text().splitlines()) == 1000
    assert "accuracy" in capsys.readouterr().out


def test_simulate_csv_format(tmp_path):
    out = tmp_path / "comp.csv"
    assert main(["simulate", "--scenario", "complementary-1000", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,y,pred_a,conf_a,pred_b,conf_b" and len(lines) == 1001


def test_simulate_drift_mu_drops(tmp_path):
    out = tmp_path / "drift.jsonl"
    assert main(["simulate", "--scenario", "drift-at-700", "--seed", "2", "--out", str(out)]) == 0
    trace = read_trace(out)
    pairs = [(r.conf_a, int(r.correct_a)) for r in trace]
    before = fit_meta_d(pairs[600:700]).meta_d
    after = fit_meta_d(pairs[900:1000]).meta_d
    assert after < before - 0.5


def test_simulate_invalid_spec(tmp_path, capsys):
    spec = tmp_path / "bad.json"
    spec.write_text(json.dumps({"segments": [{"length": -5}]}))
    assert main(["simulate", "--scenario", str(spec), "--out", str(tmp_path / "x.jsonl")]) != 0
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1 and err.startswith("metasel: error: ValueError:")
    assert not (tmp_path / "x.jsonl").exists()


def test_run_writes_outputs_deterministically(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    main(["simulate", "--scenario", "drift-at-700", "--seed", "4", "--out", str(trace)])
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert main(["run", "--trace", str(trace), "--policy", "lints", "--seed", "9",
                     "--out", str(out)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert set(outs[0]) == {"report.csv", "report.txt", "events.jsonl", "dynamics.csv"}
    assert outs[0] == outs[1]


def test_run_identical_models(tmp_path, capsys):
    src = tmp_path / "t.csv"
    main(["simulate", "--scenario", "drift-at-700", "--out", str(src)])
    lines = src.read_text().splitlines()
    mirrored = [lines[0]] + [",".join(l.split(",")[:4] + l.split(",")[2:4]) for l in lines[1:]]
    same = tmp_path / "same.csv"
    same.write_text("\n".join(mirrored) + "\n")
    capsys.readouterr()
    assert main(["run", "--trace", str(same), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "report.csv").read_text().splitlines()[1:]
    assert len(rows) == 3
    for row in rows:
        _, a, b, comb, delta = row.split(",")
        assert a == b == comb and float(delta) == 0.0


def test_run_complementary_seed_7(tmp_path, capsys):
    assert main(["run", "--scenario", "complementary-1000", "--seed", "7", "--policy", "linucb",
                 "--alpha", "1.0", "--out", str(tmp_path / "o")]) == 0
    last = (tmp_path / "o" / "report.csv").read_text().splitlines()[-1].split(",")
    assert last[0] == "1000"
    a, b, comb = map(float, last[1:4])
    assert comb >= max(a, b)
    table = capsys.readouterr().out.splitlines()
    assert [c.strip() for c in table[0].split("|")][1:] == ["300 trials", "700 trials", "1000 trials"]


def test_run_requires_one_input(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path)]) == 1
    assert main(["run", "--trace", "a.jsonl", "--scenario", "drift-at-700"]) == 1


def test_fit_recovers_stationary_truth(tmp_path, capsys):
    spec = _stationary_spec(tmp_path / "s.json")
    trace = tmp_path / "t.jsonl"
    main(["simulate", "--scenario", str(spec), "--out", str(trace)])
    capsys.readouterr()
    assert main(["fit", "--trace", str(trace), "--model", "A", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert abs(doc["meta_d"] - 1.5) < 0.2
    assert doc["converged"] and not doc["degenerate"]
    assert doc["range"] == [1, 4000]


def test_fit_short_range_is_degenerate(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    main(["simulate", "--scenario", "drift-at-700", "--out", str(trace)])
    capsys.readouterr()
    assert main(["fit", "--trace", str(trace), "--range", "11:20", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["degenerate"] is True and doc["meta_d"] == 0.0
    assert main(["fit", "--trace", str(trace), "--range", "11:20"]) == 0
    assert "degenerate True" in capsys.readouterr().out


def test_fit_unknown_model_and_bad_range(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    main(["simulate", "--scenario", "drift-at-700", "--out", str(trace)])
    capsys.readouterr()
    assert main(["fit", "--trace", str(trace), "--model", "C"]) == 1
    err = capsys.readouterr().err
    assert "unknown model 'C'" in err and "available: A, B" in err
    assert main(["fit", "--trace", str(trace), "--range", "900:1200"]) == 1


def test_report_rebuilds_from_events(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    main(["simulate", "--scenario", "drift-at-700", "--out", str(trace)])
    main(["run", "--trace", str(trace), "--out", str(tmp_path / "o")])
    capsys.readouterr()
    assert main(["report", "--trace", str(trace), "--events", str(tmp_path / "o" / "events.jsonl"),
                 "--out", str(tmp_path / "r")]) == 0
    for name in ("report.csv", "report.txt"):
        assert (tmp_path / "r" / name).read_bytes() == (tmp_path / "o" / name).read_bytes()


def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("METASEL_SEED", "5")
    main(["simulate", "--scenario", "complementary-1000", "--out", str(tmp_path / "env.jsonl")])
    main(["simulate", "--scenario", "complementary-1000", "--seed", "5", "--out", str(tmp_path / "flag.jsonl")])
    main(["simulate", "--scenario", "complementary-1000", "--seed", "6", "--out", str(tmp_path / "other.jsonl")])
    env = (tmp_path / "env.jsonl").read_bytes()
    assert env == (tmp_path / "flag.jsonl").read_bytes()
    assert env != (tmp_path / "other.jsonl").read_bytes()
    monkeypatch.setenv("METASEL_SEED", "abc")
    assert main(["simulate", "--scenario", "complementary-1000", "--out", str(tmp_path / "z.jsonl")]) == 1


def test_config_file_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "metasel.ini"
    cfg.write_text(
        "[engine]\nburn_in = 150\nwindow = 120\nupdate_freq = 25\ncheckpoints = 400,1000\n"
        "[bandit]\npolicy = lints\nsigma = 0.5\nseed = 3\n[estimator]\nbins = 3\n"
    )
    assert main(["run", "--scenario", "drift-at-700", "--config", str(cfg), "--window", "100",
                 "--out", str(tmp_path / "o")]) == 0
    events = (tmp_path / "o" / "events.jsonl").read_text().splitlines()
    assert json.loads(events[0])["t"] == 151 and len(events) == 850
    refits = [json.loads(l)["t"] for l in events if json.loads(l)["refit"]]
    assert refits[:3] == [151, 176, 201]
    rows = (tmp_path / "o" / "report.csv").read_text().splitlines()[1:]
    assert [r.split(",")[0] for r in rows] == ["400", "1000"]


def test_config_errors(tmp_path, capsys):
    assert main(["run", "--scenario", "drift-at-700", "--config", str(tmp_path / "none.ini")]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[engine]\nwindow = lots\n")
    assert main(["run", "--scenario", "drift-at-700", "--config", str(bad)]) == 1
    assert "window" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "metasel", "fit", "--scenario", "drift-at-700", "--json"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["model"] == "A"
