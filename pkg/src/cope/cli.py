"""``cope`` command line: data collection, instance generation, solving, evaluation, reports.

Every file written embeds the configuration that produced it: JSON outputs
carry a ``config`` key and CSV outputs start with a ``# {json}`` line.
Exit codes: 0 ok, 2 configuration error, 3 runtime or applicability error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import puzzle, worked
from .cope_algs import ALGORITHMS, AlgConfig, check_algorithm, make_decider
from .core import GreedyParams, instance_from_dict, instance_to_dict
from .mdp import Model
from .sae2 import NoLiveProcess, NotApplicable
from .sim import TrialError, evaluate

RESULT_COLUMNS = [
    "instance_id", "n_processes", "dur_b", "algorithm", "trials", "successes",
    "success_rate", "mean_decision_ms", "total_ms", "seed",
]
REPORT_COLUMNS = [
    "algorithm", "dur_b", "instances", "mean_success", "min_success", "max_success", "mean_decision_ms",
]


class ConfigError(ValueError):
    pass


def _default_seed() -> int:
    raw = os.environ.get("COPE_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"COPE_SEED must be an integer, got {raw!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _alg_list(text: str) -> list[str]:
    algs = [a.strip() for a in text.split(",") if a.strip()]
    for a in algs:
        if a not in ALGORITHMS:
            raise argparse.ArgumentTypeError(f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}")
    return algs


def _config_of(args, drop=("func", "jobs")) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in drop:
            continue
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(x) if isinstance(x, Path) else x for x in v]
        out[k] = v
    return out


def _write(path: Path | None, text: str):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from None


def _alg_config(args) -> AlgConfig:
    if args.t_u < 1:
        raise ConfigError("--t-u must be >= 1")
    if args.alpha < 0 or args.gamma < 0:
        raise ConfigError("--alpha and --gamma must be non-negative")
    params = GreedyParams(args.alpha, args.gamma, args.t_u, args.exclude_expired)
    return AlgConfig(params, args.strategy, args.mcts_c, args.seed)


# -- instance files ---------------------------------------------------------------------


def load_instance(path: Path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read instance {path}: {e}") from None
    inst = instance_from_dict(data, name=Path(path).stem)
    dur = int(data.get("config", {}).get("dur_b", 0) or 0)
    return inst, dur


def dump_instance(inst, config: dict) -> str:
    data = instance_to_dict(inst)
    data["config"] = config
    return json.dumps(data, indent=1, sort_keys=True) + "\n"


def _example(which: int, arrival: int):
    if which == 1:
        return worked.example_1()
    if which == 2:
        return worked.example_2(arrival)
    raise ConfigError("--example must be 1 or 2")


# -- commands -----------------------------------------------------------------------------


def cmd_gen_data(args):
    if args.puzzles < 1:
        raise ConfigError("--puzzles must be >= 1")
    if args.size < 2:
        raise ConfigError("--size must be >= 2")
    bank = puzzle.collect_histograms(args.puzzles, args.seed, args.size, args.scramble)
    bank.config = _config_of(args)
    _write(args.out, bank.to_json())
    for h in sorted(bank.samples):
        print(f"h={h} samples={bank.samples[h]}")
    return 0


def cmd_gen_instances(args):
    if args.example is not None:
        inst = _example(args.example, args.arrival)
        cfg = _config_of(args)
        cfg["dur_b"] = 0
        out = args.out or (args.out_dir / f"example-{args.example}.json")
        _write(out, dump_instance(inst, cfg))
        print(out)
        return 0
    if args.bank is None:
        raise ConfigError("--bank is required unless --example is given")
    try:
        bank = puzzle.HistogramBank.from_json(args.bank.read_text())
    except (OSError, ValueError, KeyError) as e:
        raise ConfigError(f"cannot read bank {args.bank}: {e}") from None
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    size = args.size or int(bank.config.get("size", 4))
    scramble = args.scramble if args.scramble is not None else bank.config.get("scramble")
    for n in args.n:
        for dur in args.dur:
            for idx in range(args.count):
                # the board depends on (seed, N, index) only, so dur variants share boards
                seed = int(np.random.SeedSequence([args.seed, n, idx]).generate_state(1)[0])
                inst = puzzle.build_cope_instance(bank, n, dur, args.factor, seed, size, scramble, args.anchor)
                cfg = _config_of(args)
                cfg.update({"N": n, "dur_b": dur, "index": idx, "board_seed": seed})
                path = args.out_dir / f"puzzle-n{n}-d{dur}-{idx:02d}.json"
                _write(path, dump_instance(inst, cfg))
                print(path)
    return 0


def cmd_solve(args):
    if args.example is not None:
        inst = _example(args.example, args.arrival)
    elif args.instance is not None:
        inst, _ = load_instance(args.instance)
    else:
        raise ConfigError("give --instance or --example")
    check_algorithm(args.alg)
    decider = make_decider(args.alg, inst, _alg_config(args), Model(inst))
    print(f"algorithm {args.alg}")
    print(f"instance {inst.name}")
    print(decider.describe())
    if decider.predicted is not None:
        print(f"predicted_success {decider.predicted:.12g}")
    return 0


def _result_csv(report, args, timing: bool) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(_config_of(args), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in report.rows:
        w.writerow([
            r.instance_id, r.n_processes, r.dur_b, r.algorithm, r.trials, r.successes,
            f"{r.success_rate:.6f}",
            f"{r.mean_decision_ms:.3f}" if timing else "0",
            f"{r.total_ms:.3f}" if timing else "0",
            r.seed,
        ])
    return buf.getvalue()


def cmd_evaluate(args):
    paths = list(args.instances)
    if args.instance_dir is not None:
        paths += sorted(args.instance_dir.glob("*.json"))
    items = []
    for p in paths:
        inst, dur = load_instance(p)
        items.append((inst.name, inst, dur))
    if args.example is not None:
        items.append((f"example-{args.example}", _example(args.example, args.arrival), 0))
    if not items:
        raise ConfigError("no instances given")
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    report = evaluate(items, args.algs, args.trials, args.seed, _alg_config(args), args.jobs)
    _write(args.out, _result_csv(report, args, args.timing == "on"))
    return 0


def read_results(path: Path) -> list[dict]:
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    rows = list(csv.DictReader(lines))
    if not rows and not lines:
        raise ConfigError(f"{path} is empty")
    if lines and csv.reader([lines[0]]).__next__() != RESULT_COLUMNS:
        raise ConfigError(f"{path} does not have the results header")
    try:
        for r in rows:
            r["success_rate"] = float(r["success_rate"])
            r["mean_decision_ms"] = float(r["mean_decision_ms"])
            r["dur_b"] = int(r["dur_b"])
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"malformed results row: {e}") from None
    return rows


def aggregate(rows: list[dict]) -> list[list]:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["algorithm"], r["dur_b"]), []).append(r)
    out = []
    for (alg, dur), rs in sorted(groups.items()):
        rates = [r["success_rate"] for r in rs]
        ms = [r["mean_decision_ms"] for r in rs]
        out.append([alg, dur, len(rs), sum(rates) / len(rates), min(rates), max(rates), sum(ms) / len(ms)])
    return out


def cmd_report(args):
    rows = read_results(args.results)
    buf = io.StringIO()
    buf.write("# " + json.dumps(_config_of(args), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for alg, dur, k, mean, lo, hi, ms in aggregate(rows):
        w.writerow([alg, dur, k, f"{mean:.6f}", f"{lo:.6f}", f"{hi:.6f}", f"{ms:.3f}"])
    _write(args.out, buf.getvalue())
    return 0


# -- parser ----------------------------------------------------------------------------------


def _add_alg_params(p):
    p.add_argument("--alpha", type=float, default=1.0, help="BGS urgency weight")
    p.add_argument("--gamma", type=float, default=1.0, help="DDA delay-damage weight")
    p.add_argument("--t-u", type=int, default=1, help="time units committed per greedy choice")
    p.add_argument("--exclude-expired", action="store_true", help="BGS: E[D] over positive deadline values only")
    p.add_argument("--strategy", choices=("min", "mean"), default="min", help="deadline fixing for LET schemes")
    p.add_argument("--mcts-c", type=float, default=2 ** 0.5, help="UCB1 exploration constant")


def build_parser() -> argparse.ArgumentParser:
    seed = _default_seed()
    ap = argparse.ArgumentParser(prog="cope", description="Planning while executing under deadlines.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="solve random boards and write the histogram bank")
    p.add_argument("--puzzles", type=int, default=10000)
    p.add_argument("--size", type=int, default=4)
    p.add_argument("--scramble", type=int, default=None,
                   help="random-walk length from the goal (default: uniform random boards)")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gen-instances", help="build CoPE instances from a bank, or the worked examples")
    p.add_argument("--bank", type=Path, default=None)
    p.add_argument("--n", type=_int_list, default=[20], help="process counts, comma separated")
    p.add_argument("--dur", type=_int_list, default=[1, 2, 3], help="base-action durations, comma separated")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--factor", type=int, default=4, help="goal deadline = factor * h")
    p.add_argument("--anchor", choices=("root", "node"), default="root", help="which h sets the goal deadline")
    p.add_argument("--size", type=int, default=None, help="board size (default: from the bank)")
    p.add_argument("--scramble", type=int, default=None, help="board scramble (default: from the bank)")
    p.add_argument("--example", type=int, default=None, help="write worked example 1 or 2 instead")
    p.add_argument("--arrival", type=int, default=30, help="example 2 arrival deadline")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out-dir", type=Path, default=Path("instances"))
    p.add_argument("--out", type=Path, default=None, help="output file for --example")
    p.set_defaults(func=cmd_gen_instances)

    p = sub.add_parser("solve", help="run one algorithm and print its policy")
    p.add_argument("--instance", type=Path, default=None)
    p.add_argument("--example", type=int, default=None)
    p.add_argument("--arrival", type=int, default=30)
    p.add_argument("--alg", required=True)
    p.add_argument("--seed", type=int, default=seed)
    _add_alg_params(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="Monte-Carlo evaluation to a results CSV")
    p.add_argument("--instances", type=Path, nargs="*", default=[])
    p.add_argument("--instance-dir", type=Path, default=None)
    p.add_argument("--example", type=int, default=None)
    p.add_argument("--arrival", type=int, default=30)
    p.add_argument("--algs", type=_alg_list, default=["bgs"])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--timing", choices=("on", "off"), default="on",
                   help="'off' writes 0 in the timing columns so reruns are byte-identical")
    p.add_argument("--out", type=Path, default=None)
    _add_alg_params(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate a results CSV per algorithm and duration")
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (NotApplicable, NoLiveProcess, TrialError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
