"""Command-line interface: ``metasel {simulate,run,fit,report}``."""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

from .bandit import BanditConfig
from .engine import EngineConfig, read_events, report, run
from .metad import fit_meta_d
from .traces import (
    BUNDLED_SCENARIOS,
    generate,
    load_scenario,
    read_trace,
    segment_summary,
    serialise_trace,
)

SEED_ENV = "METASEL_SEED"


class CLIError(Exception):
    pass


def _checkpoints(text: str) -> tuple:
    try:
        return tuple(int(c) for c in text.replace(" ", "").split(",") if c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid checkpoint list {text!r}") from None


def _resolve_seed(flag, fallback=None):
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CLIError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return fallback


def load_config(path, args) -> EngineConfig:
    """Build an engine config from an INI file, then apply flag overrides."""
    parser = configparser.ConfigParser()
    if path is not None:
        if not Path(path).exists():
            raise CLIError(f"config file not found: {path}")
        parser.read(path, encoding="utf-8")
    eng = parser["engine"] if parser.has_section("engine") else {}
    ban = parser["bandit"] if parser.has_section("bandit") else {}
    est = parser["estimator"] if parser.has_section("estimator") else {}

    def pick(flag, section, key, cast, default):
        if flag is not None:
            return flag
        if key in section:
            try:
                return cast(section[key])
            except (TypeError, ValueError):
                raise CLIError(f"invalid config value {key} = {section[key]!r}") from None
        return default

    seed = _resolve_seed(getattr(args, "seed", None), pick(None, ban, "seed", int, 0))
    bandit = BanditConfig(
        policy=pick(getattr(args, "policy", None), ban, "policy", str, "linucb").lower(),
        alpha=pick(getattr(args, "alpha", None), ban, "alpha", float, 1.0),
        sigma=pick(getattr(args, "sigma", None), ban, "sigma", float, 1.0),
        epsilon=pick(None, ban, "epsilon", float, 1e-6),
        rng_seed=seed,
    )
    return EngineConfig(
        burn_in=pick(getattr(args, "burn_in", None), eng, "burn_in", int, 100),
        window=pick(getattr(args, "window", None), eng, "window", int, 100),
        update_freq=pick(getattr(args, "update_freq", None), eng, "update_freq", int, 50),
        bins=pick(getattr(args, "bins", None), est, "bins", int, 4),
        bandit=bandit,
        checkpoints=pick(getattr(args, "checkpoints", None), eng, "checkpoints",
                         _checkpoints, (300, 700, 1000)),
    )


def _load_trace(args):
    if args.trace and args.scenario:
        raise CLIError("give exactly one of --trace or --scenario")
    if args.trace:
        return read_trace(args.trace, args.format), None
    if args.scenario:
        spec = load_scenario(args.scenario, _resolve_seed(args.seed))
        return generate(spec), spec
    raise CLIError("one of --trace or --scenario is required")


def cmd_simulate(args) -> int:
    spec = load_scenario(args.scenario, _resolve_seed(args.seed))
    trace = generate(spec)
    fmt = args.format or ("csv" if args.out and args.out.endswith(".csv") else "jsonl")
    text = serialise_trace(trace, fmt)
    info = sys.stdout
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        info = sys.stderr
    print(f"scenario {spec.name or args.scenario}: {len(trace)} trials, seed {spec.seed}", file=info)
    for row in segment_summary(spec, trace):
        print(f"  model {row['model']} segment {row['segment']} "
              f"(trials {row['trials']}): accuracy {row['accuracy']:.3f}", file=info)
    return 0


def _write_outputs(rep, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(rep.to_csv(), encoding="utf-8")
    (out / "report.txt").write_text(rep.to_table(), encoding="utf-8")
    (out / "events.jsonl").write_text(rep.events_jsonl(), encoding="utf-8")
    (out / "dynamics.csv").write_text(rep.dynamics_csv(), encoding="utf-8")


def cmd_run(args) -> int:
    cfg = load_config(args.config, args)
    trace, _ = _load_trace(args)
    rep = run(trace, cfg)
    out = Path(args.out or "metasel-out")
    _write_outputs(rep, out)
    sys.stdout.write(rep.to_table())
    print(f"wrote report.csv, report.txt, events.jsonl, dynamics.csv to {out}")
    return 0


def _parse_range(text, n):
    if text is None:
        return 1, n
    try:
        lo, hi = (int(x) for x in text.split(":"))
    except ValueError:
        raise CLIError(f"--range must look like START:STOP, got {text!r}") from None
    if not 1 <= lo <= hi <= n:
        raise CLIError(f"range {lo}:{hi} is outside the trace (1..{n})")
    return lo, hi


def cmd_fit(args) -> int:
    trace, _ = _load_trace(args)
    name = args.model or trace.model_names[0]
    try:
        k = trace.model_index(name)
    except KeyError as exc:
        raise CLIError(exc.args[0]) from None
    lo, hi = _parse_range(args.range, len(trace))
    rows = trace.rows[lo - 1:hi]
    fit = fit_meta_d(((r.conf(k), int(r.correct(k))) for r in rows), args.bins or 4)
    if args.json:
        doc = {"model": name, "range": [lo, hi], **fit.as_dict()}
        print(json.dumps(doc))
    else:
        crit = ", ".join(f"{c:.4f}" for c in fit.criteria) or "-"
        print(f"model {name}, trials {lo}..{hi} (n={hi - lo + 1})")
        print(f"  meta-d'   {fit.meta_d:.4f}")
        print(f"  d'        {fit.type1_dprime:.4f}")
        print(f"  criteria  {crit}")
        print(f"  converged {fit.converged}  degenerate {fit.degenerate}  bins {fit.n_bins}")
    return 0


def cmd_report(args) -> int:
    cfg = load_config(args.config, args)
    if not args.events:
        raise CLIError("--events is required")
    trace, _ = _load_trace(args)
    events = read_events(Path(args.events).read_text(encoding="utf-8"))
    rep = report(events, trace, cfg)
    sys.stdout.write(rep.to_table())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(rep.to_csv(), encoding="utf-8")
        (out / "report.txt").write_text(rep.to_table(), encoding="utf-8")
    else:
        sys.stdout.write("\n" + rep.to_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--trace", help="aligned trace file (.jsonl or .csv)")
    common.add_argument("--scenario",
                        help=f"scenario JSON file or bundled name ({', '.join(BUNDLED_SCENARIOS)})")
    common.add_argument("--config", help="INI file with [engine], [bandit], [estimator] sections")
    common.add_argument("--seed", type=int, help=f"random seed (fallback: ${SEED_ENV})")
    common.add_argument("--format", choices=("jsonl", "csv"), help="trace format")
    common.add_argument("--out", help="output file (simulate) or directory")
    common.add_argument("--policy", choices=("linucb", "lints"))
    common.add_argument("--alpha", type=float, help="LinUCB exploration width")
    common.add_argument("--sigma", type=float, help="LinTS sampling scale")
    common.add_argument("--burn-in", dest="burn_in", type=int)
    common.add_argument("--window", type=int)
    common.add_argument("--update-freq", dest="update_freq", type=int)
    common.add_argument("--bins", type=int)
    common.add_argument("--checkpoints", type=_checkpoints, help="e.g. 300,700,1000")

    parser = argparse.ArgumentParser(
        prog="metasel",
        description="Dynamic selection between two classifiers from confidence and meta-d'.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic trace")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("run", parents=[common], help="run selection over a trace")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("fit", parents=[common], help="fit meta-d' on part of a trace")
    p.add_argument("--model", help="model name (default: first)")
    p.add_argument("--range", help="1-based inclusive trial range START:STOP")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_fit)
    p = sub.add_parser("report", parents=[common], help="rebuild the report from an event log")
    p.add_argument("--events", help="events.jsonl written by 'run'")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and not args.scenario:
        parser.error("simulate requires --scenario")
    try:
        return args.func(args)
    except (CLIError, ValueError, KeyError, OSError, FloatingPointError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"metasel: error: {type(exc).__name__}: {' '.join(str(msg).split())}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
