"""Command-line front end.

Subcommands:
    run              execute a training config, write trace.csv + summary.txt
    staleness-table  exact averaged level-of-staleness per module
    bounds           convergence-bound calculators
    compare          diff two trace.csv files within a tolerance

Configs are flat ``key = value`` text with one section per concern
([model], [partition], [data], [optimizer], [run]); no nesting.  Every
key is validated before anything runs and unknown keys are rejected.

Exit codes: 0 success, 1 comparison failure, 2 bad config/arguments,
3 run diverged.
"""
from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import data as data_mod
from . import net
from .errors import AdlError, ComparisonError, ConfigError
from .optimizer import (ConstantLr, Harmonic, SgdConfig, StepDecay,
                        lr_at, scaled_base_lr)
from .oracle import delayed_replay, sync_ga_sgd
from .partition import Partition, partition_by_params, partition_even
from .scheduler import TrainConfig, run_clocked, run_parallel
from .staleness import (averaged_los, averaged_los_sum, theorem1_rhs,
                        theorem2_rhs, theorem3_bound, theorem3_lr)
from .trace import (compare_traces, read_csv, summary_text, write_csv,
                    write_events_csv)

MODES = ("adl-clocked", "adl-parallel", "sync-ga", "delayed-replay")

_SCHEMA = {
    "model": {"layers", "loss", "init_scale"},
    "partition": {"k", "strategy", "boundaries"},
    "data": {"dataset", "n", "dim", "noise_std", "seed"},
    "optimizer": {"ga_steps", "updates", "batch_size", "momentum",
                  "weight_decay", "schedule", "lr", "harmonic_c",
                  "warmup_epochs", "milestones", "decay_factor",
                  "epsilon", "gap", "grad_bound", "smoothness"},
    "run": {"mode", "out", "seed", "trace_level"},
}


def _parse_layers(text: str):
    specs = []
    for token in text.replace(",", " ").split():
        parts = token.split(":")
        kind = parts[0]
        try:
            if kind == "affine":
                if len(parts) != 3:
                    raise ConfigError(f"affine needs in:out dims: {token!r}")
                specs.append(net.affine(int(parts[1]), int(parts[2])))
            elif kind in ("tanh", "relu", "identity"):
                if len(parts) != 2:
                    raise ConfigError(f"{kind} needs one dim: {token!r}")
                specs.append(net.LayerSpec(kind, int(parts[1]), int(parts[1])))
            else:
                raise ConfigError(f"unknown layer token {token!r}")
        except ValueError as exc:
            raise ConfigError(f"bad layer token {token!r}: {exc}") from exc
    if not specs:
        raise ConfigError("model.layers is empty")
    return specs


def _load_config(path: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    for required in ("model", "data", "optimizer", "run"):
        if not parser.has_section(required):
            raise ConfigError(f"missing config section [{required}]")
    return parser


def _get(parser, section, key, cast, default=None, required=False):
    if not parser.has_option(section, key):
        if required:
            raise ConfigError(f"missing required key {key!r} in [{section}]")
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc


def _build_dataset(parser) -> data_mod.Dataset:
    dataset_id = _get(parser, "data", "dataset", str, required=True)
    n = _get(parser, "data", "n", int, required=True)
    noise = _get(parser, "data", "noise_std", float, 0.0)
    seed = _get(parser, "data", "seed", int, 0)
    if dataset_id == "linreg":
        dim = _get(parser, "data", "dim", int, required=True)
        return data_mod.gen_linreg(n, dim, noise, seed)
    if dataset_id == "two_spirals":
        if parser.has_option("data", "dim"):
            raise ConfigError("two_spirals has a fixed dim of 2")
        return data_mod.gen_two_spirals(n, noise, seed)
    raise ConfigError(f"unknown dataset {dataset_id!r}")


def _build_partition(parser, num_layers, specs) -> Partition:
    if not parser.has_section("partition"):
        return partition_even(num_layers, 1)
    K = _get(parser, "partition", "k", int, required=True)
    bounds_text = _get(parser, "partition", "boundaries", str)
    strategy = _get(parser, "partition", "strategy", str, "even")
    if bounds_text is not None:
        try:
            interior = [int(tok)
                        for tok in bounds_text.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"bad value for [partition] boundaries: "
                              f"{bounds_text!r}") from exc
        if len(interior) != K - 1:
            raise ConfigError(
                f"explicit boundaries need {K - 1} cut points for k={K}")
        return Partition(num_layers, tuple([0] + interior + [num_layers]))
    if strategy == "even":
        return partition_even(num_layers, K)
    if strategy == "cost":
        return partition_by_params(specs, K)
    raise ConfigError(f"unknown partition strategy {strategy!r}")


def _build_schedule(parser, dataset, M, batch_size, S, K, warn):
    name = _get(parser, "optimizer", "schedule", str, required=True)
    lr_raw = _get(parser, "optimizer", "lr", str)

    def base_lr():
        if lr_raw is None:
            raise ConfigError(f"schedule {name!r} needs an lr value")
        if lr_raw == "auto":
            return scaled_base_lr(batch_size, M)
        try:
            return float(lr_raw)
        except ValueError as exc:
            raise ConfigError(
                f"bad value for [optimizer] lr: {lr_raw!r}") from exc

    if name == "constant":
        return ConstantLr(base_lr())
    if name == "harmonic":
        c = _get(parser, "optimizer", "harmonic_c", float, required=True)
        return Harmonic(c)
    if name == "step":
        warmup_epochs = _get(parser, "optimizer", "warmup_epochs", float, 0.0)
        factor = _get(parser, "optimizer", "decay_factor", float, 0.1)
        mtext = _get(parser, "optimizer", "milestones", str, "")
        try:
            milestones = tuple(float(tok) for tok in
                               mtext.replace(",", " ").split())
        except ValueError as exc:
            raise ConfigError(
                f"bad value for [optimizer] milestones: {mtext!r}") from exc
        bpe = math.ceil(dataset.n / batch_size)
        warmup_updates = round(warmup_epochs * bpe / M)
        return StepDecay(base_lr(), warmup_updates, milestones, factor, M, bpe)
    if name == "theorem3":
        eps = _get(parser, "optimizer", "epsilon", float, 1.0)
        gap = _get(parser, "optimizer", "gap", float, required=True)
        A = _get(parser, "optimizer", "grad_bound", float, required=True)
        L = _get(parser, "optimizer", "smoothness", float, required=True)
        dbar = float(averaged_los_sum(K, M))
        lr = theorem3_lr(eps, gap, S, A, L, M, dbar)
        if L * lr > 1.0:
            warn(f"theorem3 precondition violated: L*lr = {L * lr:.6g} > 1; "
                 f"the matching bound does not apply at this rate")
        return ConstantLr(lr)
    raise ConfigError(f"unknown schedule {name!r}")


def _check_model_vs_data(specs, loss, dataset):
    if specs[0].in_dim != dataset.dim:
        raise ConfigError(f"first layer in_dim {specs[0].in_dim} != "
                          f"dataset dim {dataset.dim}")
    if loss == net.MSE:
        if dataset.kind != data_mod.REGRESSION:
            raise ConfigError("mse loss needs a regression dataset")
        if specs[-1].out_dim != dataset.targets.shape[1]:
            raise ConfigError("final layer out_dim != target dim")
    else:
        if dataset.kind != data_mod.CLASSIFICATION:
            raise ConfigError("softmax_ce loss needs a classification dataset")
        n_classes = int(dataset.targets.max()) + 1
        if specs[-1].out_dim < n_classes:
            raise ConfigError(f"final layer out_dim {specs[-1].out_dim} < "
                              f"{n_classes} classes")


def build_run(parser, warn) -> tuple:
    """(mode, TrainConfig, dataset, out_dir, trace_level) from parsed INI."""
    specs = _parse_layers(_get(parser, "model", "layers", str, required=True))
    loss = _get(parser, "model", "loss", str, required=True)
    if loss not in net.LOSS_KINDS:
        raise ConfigError(f"unknown loss {loss!r}")
    init_scale = _get(parser, "model", "init_scale", float, 1.0)
    dataset = _build_dataset(parser)
    _check_model_vs_data(specs, loss, dataset)
    part = _build_partition(parser, len(specs), specs)
    M = _get(parser, "optimizer", "ga_steps", int, 1)
    S = _get(parser, "optimizer", "updates", int, required=True)
    batch_size = _get(parser, "optimizer", "batch_size", int, required=True)
    momentum = _get(parser, "optimizer", "momentum", float, 0.0)
    decay = _get(parser, "optimizer", "weight_decay", float, 0.0)
    schedule = _build_schedule(parser, dataset, M, batch_size, S, part.K, warn)
    mode = _get(parser, "run", "mode", str, required=True)
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; choose from {MODES}")
    seed = _get(parser, "run", "seed", int, 0)
    trace_level = _get(parser, "run", "trace_level", str, "updates")
    if trace_level not in ("updates", "ticks"):
        raise ConfigError(f"trace_level must be updates|ticks, got {trace_level!r}")
    out = _get(parser, "run", "out", str)
    try:
        cfg = TrainConfig(specs, part, loss, M, batch_size, S, schedule,
                          SgdConfig(momentum, decay), seed=seed,
                          init_scale=init_scale,
                          trace_ticks=(trace_level == "ticks"))
    except AdlError as exc:
        raise ConfigError(str(exc)) from exc
    if momentum != 0.0 or decay != 0.0:
        warn(f"momentum={momentum} weight_decay={decay}: the convergence "
             f"bounds assume plain SGD (momentum 0, weight decay 0)")
    return mode, cfg, dataset, out, trace_level


_RUNNERS = {
    "adl-clocked": run_clocked,
    "adl-parallel": run_parallel,
    "sync-ga": sync_ga_sgd,
    "delayed-replay": delayed_replay,
}


def cmd_run(args, out_stream=None, err_stream=None) -> int:
    out_stream = out_stream or sys.stdout
    err_stream = err_stream or sys.stderr

    def warn(msg):
        print(f"warning: {msg}", file=err_stream)

    parser = _load_config(args.config)
    mode, cfg, dataset, out, trace_level = build_run(parser, warn)
    if out is None:
        base = os.environ.get("ADL_OUT_DIR", "runs")
        out = os.path.join(base, Path(args.config).stem)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace = _RUNNERS[mode](cfg, dataset)
    write_csv(trace, out_dir / "trace.csv")
    predicted = {k: averaged_los(cfg.K, k, cfg.ga_steps)
                 for k in range(1, cfg.K + 1)} if mode != "sync-ga" else {1: Fraction(0)}
    text = summary_text(trace, predicted)
    (out_dir / "summary.txt").write_text(text)
    if trace_level == "ticks" and trace.events is not None:
        write_events_csv(trace, out_dir / "events.csv")
    out_stream.write(text)
    return 3 if trace.diverged else 0


def cmd_staleness_table(args, out_stream=None) -> int:
    out_stream = out_stream or sys.stdout
    K = args.modules
    ms = args.ga_steps
    header = " k   " + "".join(f"M={m:<8}" for m in ms)
    lines = [f"averaged level-of-staleness (exact updates), K={K}", header]
    for k in range(1, K + 1):
        cells = "".join(f"{str(averaged_los(K, k, m)):<10}" for m in ms)
        lines.append(f"{k:2d}   {cells}")
    sums = "".join(f"{str(averaged_los_sum(K, m)):<10}" for m in ms)
    lines.append(f"sum  {sums}")
    lines.append("")
    lines.append(
        "note: the top module (k=K) is never stale; at M=1 the first module\n"
        "averages 2*(K-1) updates of delay.  A commonly quoted figure for the\n"
        "first module is 2*K, which also counts the module's own in-flight\n"
        "forward/backward pair; the group arithmetic used here does not.")
    out_stream.write("\n".join(lines) + "\n")
    return 0


def cmd_bounds(args, out_stream=None) -> int:
    out_stream = out_stream or sys.stdout
    K, M = args.modules, args.ga_steps
    dbar = float(averaged_los_sum(K, M)) if args.dbar_sum is None \
        else args.dbar_sum
    lines = [f"K={K} M={M} dbar_sum={dbar:.6g} "
             f"staleness_factor={(1.0 + dbar / M):.6g}"]
    if args.lr is not None and args.grad_norm_sq is not None:
        r1 = theorem1_rhs(args.lr, args.grad_norm_sq, args.grad_bound,
                          args.smoothness, M, dbar)
        lines.append(f"theorem1_rhs: {r1!r} "
                     f"({'descent' if r1 < 0 else 'no descent certified'})")
    if args.harmonic_c is not None and args.gap is not None:
        lrs = [args.harmonic_c / (s + 1) for s in range(args.updates)]
        r2 = theorem2_rhs(lrs, args.gap, args.grad_bound, args.smoothness,
                          M, dbar)
        lines.append(f"theorem2_rhs (harmonic c={args.harmonic_c}, "
                     f"S={args.updates}): {r2!r}")
    if args.gap is not None:
        lr = theorem3_lr(args.epsilon, args.gap, args.updates,
                         args.grad_bound, args.smoothness, M, dbar)
        bound = theorem3_bound(args.epsilon, args.gap, args.updates,
                               args.grad_bound, args.smoothness, M, dbar)
        ok = args.smoothness * lr <= 1.0
        lines.append(f"theorem3_lr: {lr!r} (L*lr <= 1: {ok})")
        lines.append(f"theorem3_bound: {bound!r}")
    out_stream.write("\n".join(lines) + "\n")
    return 0


def cmd_compare(args, out_stream=None) -> int:
    out_stream = out_stream or sys.stdout
    a = read_csv(args.trace_a)
    b = read_csv(args.trace_b)
    report = compare_traces(a, b, args.tol)
    out_stream.write(report.text())
    return 0 if report.passed else 1


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="adl",
        description="pipeline-parallel training with delayed gradients "
                    "and gradient accumulation")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a training config")
    p_run.add_argument("config", help="path to key=value config file")

    p_tab = sub.add_parser("staleness-table",
                           help="exact averaged staleness per module")
    p_tab.add_argument("--modules", "--K", dest="modules", type=int,
                       required=True, metavar="K")
    p_tab.add_argument("--ga-steps", "--M", dest="ga_steps",
                       type=lambda s: [int(t) for t in s.split(",")],
                       default=[1, 2, 4, 8], metavar="M1,M2,...")

    p_b = sub.add_parser("bounds", help="convergence-bound calculators")
    p_b.add_argument("--modules", type=int, required=True, metavar="K")
    p_b.add_argument("--ga-steps", type=int, required=True, metavar="M")
    p_b.add_argument("--grad-bound", type=float, required=True, metavar="A")
    p_b.add_argument("--smoothness", type=float, required=True, metavar="L")
    p_b.add_argument("--updates", type=int, default=1, metavar="S")
    p_b.add_argument("--dbar-sum", type=float, default=None)
    p_b.add_argument("--lr", type=float, default=None)
    p_b.add_argument("--grad-norm-sq", type=float, default=None)
    p_b.add_argument("--gap", type=float, default=None)
    p_b.add_argument("--epsilon", type=float, default=1.0)
    p_b.add_argument("--harmonic-c", type=float, default=None)

    p_c = sub.add_parser("compare", help="diff two trace.csv files")
    p_c.add_argument("trace_a")
    p_c.add_argument("trace_b")
    p_c.add_argument("--tol", type=float, default=0.0)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "staleness-table":
            return cmd_staleness_table(args)
        if args.command == "bounds":
            return cmd_bounds(args)
        if args.command == "compare":
            return cmd_compare(args)
    except (ConfigError, ComparisonError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AdlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
