"""logicforge command line: cost | train | export | verify | explore.

Exit codes: 0 success, 1 validation/verification failure, 2 IO/config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, ProjectConfig, SpecValidationError, load_config
from .data import DatasetSplits, load_csv, split_dataset, synthetic_blobs
from .netlist import build_netlist, insert_registers, load_netlist, prune_dead, save_netlist
from .simulator import DEFAULT_EXHAUSTIVE_BOUND, check_equivalence, pipeline_report
from .topology import CostOverflowError, NetworkSpec, lut_cost, model_lut_cost, parameter_count, validate_spec
from .trainer import TrainingDivergedError, evaluate, train
from .verilog import TOP, emit_verilog, emit_verilog_files

EXIT_OK, EXIT_FAIL, EXIT_IO = 0, 1, 2

log = logging.getLogger("logicforge")


class UsageError(Exception):
    """IO or configuration problem (exit code 2)."""


def _load(args) -> ProjectConfig:
    if not args.config:
        raise UsageError("--config is required")
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {exc.filename}") from exc
    if getattr(args, "seed", None) is not None:
        cfg.training = replace(cfg.training, seed=args.seed)
    if getattr(args, "epochs", None) is not None:
        cfg.training = replace(cfg.training, epochs=args.epochs)
    return cfg


def load_data(cfg: ProjectConfig, num_features: int | None = None) -> DatasetSplits:
    ds = cfg.dataset
    seed = int(ds.get("split_seed", 0))
    if "synthetic" in ds:
        syn = ds["synthetic"]
        net = cfg.network
        blobs = synthetic_blobs(
            int(syn.get("samples", 10000)),
            num_features or net.input_features,
            net.num_classes,
            seed=int(syn.get("seed", 0)),
            spread=float(syn.get("spread", 1.0)),
        )
        return split_dataset(blobs, seed)
    path = cfg.dataset_path()
    if path is None:
        raise UsageError("config has no dataset (set dataset.path or dataset.synthetic)")
    if not path.exists():
        raise UsageError(f"dataset file not found: {path}")
    try:
        return load_csv(path, seed=seed, num_classes=cfg.network.num_classes)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cost_report(spec: NetworkSpec) -> str:
    lines = ["layer  neurons  X   Y   LUTs/neuron  subtotal"]
    for k, l in enumerate(spec.layers):
        per = lut_cost(l.fanin_bits, l.out_bits)
        lines.append(f"{k:<6} {l.out_width:<8} {l.fanin_bits:<3} {l.out_bits:<3} {per:<12} {per * l.out_width}")
    lines.append(f"total model LUTs: {model_lut_cost(spec)}")
    return "\n".join(lines) + "\n"


def cmd_cost(args) -> int:
    cfg = _load(args)
    spec = cfg.spec
    sys.stdout.write(cost_report(spec))
    total = model_lut_cost(spec)
    if args.budget is not None and total > args.budget:
        print(f"error: model LUT cost {total} exceeds budget {args.budget}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load(args)
    data = load_data(cfg)
    out = Path(args.out) if args.out else cfg.out_path
    out.mkdir(parents=True, exist_ok=True)
    metrics = io.StringIO()
    try:
        model = train(cfg.spec, data, cfg.training, metrics=metrics, fanin_cap=cfg.fanin_cap)
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL
    (out / "metrics.csv").write_text(metrics.getvalue(), newline="\n")
    save_checkpoint(model, out / "model.ckpt")
    val = evaluate(model, data.val) if len(data.val) else float("nan")
    test = evaluate(model, data.test) if len(data.test) else float("nan")
    print(f"checkpoint: {out / 'model.ckpt'}")
    print(f"metrics:    {out / 'metrics.csv'}")
    print(f"val accuracy:  {val:.4f}")
    print(f"test accuracy: {test:.4f}")
    return EXIT_OK


def _registers(value):
    if value in ("default", "none"):
        return value
    return [int(v) for v in value] if isinstance(value, list) else [int(v) for v in value.split(",") if v]


def cmd_export(args) -> int:
    cfg = _load(args) if args.config else None
    out = Path(args.out) if args.out else (cfg.out_path if cfg else Path("."))
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model.ckpt"
    try:
        model = load_checkpoint(ckpt)
    except FileNotFoundError as exc:
        raise UsageError(f"checkpoint not found: {ckpt}") from exc
    except CheckpointError as exc:
        raise UsageError(f"{ckpt}: {exc}") from exc
    if not model.frozen:
        raise UsageError(f"{ckpt}: model is not frozen")
    cap = cfg.fanin_cap if cfg else 15
    problems = validate_spec(model.spec, cap)
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_FAIL
    export = cfg.export if cfg else None
    prune = not args.no_prune and (export.prune if export else True)
    registers = _registers(args.registers or (export.registers if export else "default"))
    split = args.split_files or (export.split_files if export else False)

    full = build_netlist(model, cap)
    net = prune_dead(full) if prune else full
    net = insert_registers(net, registers)
    out.mkdir(parents=True, exist_ok=True)
    if split:
        vdir = out / "verilog"
        vdir.mkdir(exist_ok=True)
        for name, text in emit_verilog_files(net).items():
            (vdir / name).write_text(text, newline="\n")
    else:
        (out / f"{TOP}.v").write_text(emit_verilog(net), newline="\n")
    save_netlist(net, out / "netlist.json")
    print(f"HBBs before prune: {full.hbb_count}  model LUTs: {full.lut_cost()}")
    print(f"HBBs after prune:  {net.hbb_count}  model LUTs: {net.lut_cost()}" + ("" if prune else " (prune disabled)"))
    print(f"register stages: {len(net.register_stages)}")
    period = args.clock_period or (export.clock_period_ns if export else None)
    if period:
        sys.stdout.write(pipeline_report(net, period).to_text())
    print(f"netlist dump: {out / 'netlist.json'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args) if args.config else None
    out = cfg.out_path if cfg else Path(".")
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model.ckpt"
    dump = Path(args.netlist) if args.netlist else out / "netlist.json"
    try:
        model = load_checkpoint(ckpt)
        net = load_netlist(dump)
    except FileNotFoundError as exc:
        raise UsageError(f"file not found: {exc.filename}") from exc
    except (CheckpointError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load artifacts: {exc}") from exc
    mode = "exhaustive" if args.exhaustive else "random"
    try:
        report = check_equivalence(
            model, net, mode, n=args.samples, seed=args.seed or 0, exhaustive_bound=args.exhaustive_bound
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sys.stdout.write(report.to_text())
    print(report.summary_line())
    return EXIT_OK if report.ok else EXIT_FAIL


EXPLORE_FIELDS = ["hidden", "beta", "gamma", "fanin_bits", "model_luts", "params", "accuracy"]


def explore_candidates(cfg: ProjectConfig, budget: int | None = None) -> list[tuple[NetworkSpec, int, int]]:
    """Grid points ``(spec, beta, gamma)`` that pass the fan-in cap and LUT budget."""
    ex = cfg.exploration
    cap = ex.fanin_cap if ex.fanin_cap is not None else cfg.fanin_cap
    budget = budget if budget is not None else ex.lut_budget
    out = []
    for hidden, beta, gamma in itertools.product(ex.hidden, ex.beta, ex.gamma):
        try:
            spec = cfg.network.to_spec(hidden=list(hidden), beta=beta, gamma=gamma)
        except ValueError:
            continue
        if validate_spec(spec, cap):
            continue
        try:
            cost = model_lut_cost(spec)
        except CostOverflowError:
            continue
        if budget is not None and cost > budget:
            continue
        out.append((spec, beta, gamma))
    return out


def _explore_row(job) -> dict:
    spec, beta, gamma, cfg, epochs = job
    row = {
        "hidden": " ".join(str(l.out_width) for l in spec.layers[:-1]),
        "beta": beta,
        "gamma": gamma,
        "fanin_bits": " ".join(str(l.fanin_bits) for l in spec.layers),
        "model_luts": model_lut_cost(spec),
        "params": parameter_count(spec),
        "accuracy": "",
    }
    if epochs:
        data = load_data(cfg)
        model = train(spec, data, replace(cfg.training, epochs=epochs), fanin_cap=10**9)
        split = data.test if len(data.test) else data.train
        row["accuracy"] = f"{evaluate(model, split):.6f}"
    return row


def run_exploration(cfg: ProjectConfig, train_candidates=False, epochs=None, jobs=1, budget=None) -> list[dict]:
    if cfg.exploration is None:
        raise UsageError("config has no exploration block")
    ex = cfg.exploration
    n_epochs = (epochs or ex.epochs) if (train_candidates or ex.train) else 0
    work = [(spec, beta, gamma, cfg, n_epochs) for spec, beta, gamma in explore_candidates(cfg, budget)]
    if jobs > 1 and len(work) > 1:
        # candidates are independent; map() keeps grid order
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_explore_row, work))
    return [_explore_row(j) for j in work]


def exploration_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=EXPLORE_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_explore(args) -> int:
    cfg = _load(args)
    if cfg.exploration is None or not (cfg.exploration.hidden and cfg.exploration.beta and cfg.exploration.gamma):
        raise UsageError("exploration grid is empty")
    rows = run_exploration(cfg, args.train, args.epochs, args.jobs, args.budget)
    if not rows:
        print("warning: no candidate passes the fan-in cap / LUT budget", file=sys.stderr)
    text = exploration_csv(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, newline="\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logicforge", description="Train sparse quantized MLPs and compile them to LUT netlists")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="project config (JSON)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("cost", help="analytical LUT cost of the configured network")
    common(p)
    p.add_argument("--budget", type=int, default=None, help="fail if the model LUT cost exceeds N")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("train", help="train and write checkpoint + metrics")
    common(p)
    p.add_argument("--out", default=None, help="output directory (default: config output_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", help="convert a checkpoint into Verilog and a netlist dump")
    common(p, config_required=False)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--no-prune", action="store_true")
    p.add_argument("--registers", default=None, help="default | none | comma-separated boundary indices")
    p.add_argument("--split-files", action="store_true")
    p.add_argument("--clock-period", type=float, default=None, help="clock period in ns for the pipeline estimate")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("verify", help="check model/netlist equivalence")
    common(p, config_required=False)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--netlist", default=None)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--exhaustive-bound", type=int, default=DEFAULT_EXHAUSTIVE_BOUND)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("explore", help="grid exploration over widths, beta and gamma (CSV)")
    common(p)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--train", action="store_true", help="train every candidate (shortened epochs)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_explore)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SpecValidationError as exc:
        for e in exc.errors:
            print(f"validation error: {e}", file=sys.stderr)
        return EXIT_FAIL
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_IO
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
