"""Command-line entry points: optimization runs, experiments, and the slice predictor."""

from __future__ import annotations

import argparse
import csv
import sys

from . import experiments as exp
from .channel import build_channels, dump_channels_rows
from .rate_model import Slice, default_assignment, default_slices
from .sca_core import OptimizeOptions, optimize_ee
from .scenario import ScenarioConfig, build_scenario, load_config
from . import slice_predictor as sp


def _load_config(path) -> ScenarioConfig:
    return load_config(path) if path else ScenarioConfig()


def _parse_slices(spec_text, num_users, tx_time_ms):
    tx = tx_time_ms * 1e-3 if tx_time_ms else None
    if not spec_text:
        return default_slices(num_users)
    labels = [Slice.parse(s.strip()) for s in spec_text.split(",")]
    if len(labels) != num_users:
        raise SystemExit(f"--slices lists {len(labels)} labels for "
                         f"{num_users} users")
    return [default_assignment(label, tx_time_s=tx) for label in labels]


def cmd_optimize(args):
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.seed
    scenario = build_scenario(config, seed)
    slices = _parse_slices(args.slices, config.num_users, args.tx_time_ms)
    if args.dump_channels:
        channels = build_channels(scenario, seed)
        exp.emit_csv(dump_channels_rows(channels), args.dump_channels,
                     ["user", "tech", "index", "re", "im"])
    result = optimize_ee(scenario, slices,
                         OptimizeOptions(channel_seed=seed,
                                         wifi_only=args.wifi_only))
    state = result.state
    print(f"stop={result.stop_reason} iterations={state.iteration}")
    print(f"energy efficiency: {state.ee_bound:.6e} nats/joule")
    print(f"total power:       {state.power_bound:.6e} W")
    for row in result.trace:
        print(f"  iter {row.iteration:3d}  ee={row.ee:.6e}  "
              f"P={row.power_bound:.4e} W  [{row.solver_status}]")
    if args.trace_out:
        rows = [[r.iteration, r.ee, r.power_bound, r.sum_rate_nats,
                 r.power_wifi_w, r.power_lifi_w, r.solver_status, r.wall_ms]
                for r in result.trace]
        exp.emit_csv(rows, args.trace_out,
                     ["iter", "phi", "psi", "sum_rate_nats", "p_wifi_w",
                      "p_lifi_w", "solver_status", "wall_ms"])
        print(f"trace written to {args.trace_out}")
    return 0


def cmd_experiment(args):
    runner = exp.EXPERIMENTS.get(args.name)
    if runner is None:
        raise SystemExit(f"unknown experiment '{args.name}'; "
                         f"choose from {sorted(exp.EXPERIMENTS)}")
    kwargs = {}
    if args.name != "latency":
        kwargs["config"] = _load_config(args.config)
        kwargs["workers"] = args.workers
        if args.seeds:
            kwargs["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    out = runner(args.out, **kwargs)
    for key, value in out.items():
        if isinstance(value, str):
            print(f"{key}: {value}")
    return 0


def cmd_generate_kpi(args):
    records = sp.generate_dataset(args.n, args.seed)
    exp.emit_csv(sp.records_to_rows(records), args.out, sp.DATASET_HEADER)
    print(f"wrote {args.n} records to {args.out}")
    return 0


def _read_records(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return [sp.record_from_row(row) for row in csv.DictReader(fh)]


def cmd_train_predictor(args):
    if args.data:
        records = _read_records(args.data)
    else:
        records = sp.generate_dataset(args.generate, args.seed)
    train, test = sp.split(records, 0.8, args.seed)
    features, labels, encoder = sp.one_hot_encode(train)
    hyper = sp.RpropParams(epochs=args.epochs, init_seed=args.seed)
    model, history = sp.train_rprop(features, labels, encoder=encoder,
                                    hyper=hyper)
    accuracy, confusion = sp.evaluate(model, test)
    sp.save_model(model, args.out)
    print(f"trained on {len(train)} records, tested on {len(test)}")
    print(f"final training loss {history['loss'][-1]:.4f}, "
          f"test accuracy {accuracy:.4f}")
    print("confusion (rows=true eMBB/URLLC/mMTC):")
    for row in confusion:
        print("  " + " ".join(f"{v:6d}" for v in row))
    print(f"model written to {args.out}")
    return 0


def cmd_predict(args):
    model = sp.load_model(args.model)
    records = _read_records(args.input)
    rows = []
    for record in records:
        label, probs = sp.predict(model, record)
        rows.append([label.value] + [float(p) for p in probs])
    if args.out:
        exp.emit_csv(rows, args.out,
                     ["predicted", "p_embb", "p_urllc", "p_mmtc"])
        print(f"predictions written to {args.out}")
    else:
        for row in rows:
            print(row[0], " ".join(f"{p:.4f}" for p in row[1:]))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hyfi-ee",
        description="Hybrid WiFi/LiFi energy-efficiency precoding and "
                    "slice prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run the EE precoding optimizer once")
    p.add_argument("--config", help="YAML scenario config")
    p.add_argument("--seed", type=int, help="placement/channel seed")
    p.add_argument("--slices", help="comma list like eMBB,URLLC,mMTC")
    p.add_argument("--tx-time-ms", type=float,
                   help="transmission time for all users (ms)")
    p.add_argument("--wifi-only", action="store_true")
    p.add_argument("--trace-out", help="per-iteration trace CSV (incl. wall_ms)")
    p.add_argument("--dump-channels", help="channel dump CSV path")
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("experiment", help="run a named experiment pipeline")
    p.add_argument("name", help=f"one of {sorted(exp.EXPERIMENTS)}")
    p.add_argument("--config", help="YAML scenario config")
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=exp.DEFAULT_WORKERS)
    p.set_defaults(fn=cmd_experiment)

    p = sub.add_parser("generate-kpi", help="write a synthetic KPI dataset CSV")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate_kpi)

    p = sub.add_parser("train-predictor", help="train the slice classifier")
    p.add_argument("--data", help="KPI dataset CSV (default: generate)")
    p.add_argument("--generate", type=int, default=10000,
                   help="records to generate when --data is absent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(fn=cmd_train_predictor)

    p = sub.add_parser("predict", help="predict slices for KPI rows")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="KPI CSV (label optional)")
    p.add_argument("--out", help="write predictions CSV here")
    p.set_defaults(fn=cmd_predict)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
