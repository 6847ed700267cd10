"""Command-line front end.

Subcommands::

    gen       draw a dataset and write its feature CSVs
    ntk       compute a kernel matrix (analytic, optionally Monte Carlo)
    spectral  eigendecompose a saved kernel (alignment if labels are given)
    train     run one training job from a config file ([train] section)
    exp ID    run an experiment pipeline (fig1 fig2 fig3 ntk-regime thm3
              thm4-thm5)

Exit codes: 0 success, 1 invalid arguments or config, 2 numeric failure
(divergence, non-finite values).  ``--threads`` falls back to the
NTKLAB_THREADS environment variable, then 1.
"""

import argparse
import dataclasses
import os
import sys
import time

import numpy as np

from .config import EXPERIMENT_IDS, ExperimentConfig, load_config
from .errors import DivergenceError, NumericFailureError
from .experiments import run_experiment, write_manifest, _atomic_write, _csv_text
from .kernels import (ArchSpec, analytic_ntk_gnn, analytic_ntk_mlp, mc_ntk,
                      save_kernel_csv, save_kernel_ntk1, load_kernel_csv,
                      load_kernel_ntk1)
from .netsim import gaussian_node_dataset, generate_instances, synthetic_labels
from .nets import init_net
from .spectral import eig_sym
from .training import (TrainConfig, evaluate, save_checkpoint, train,
                       write_trace_csv)

__all__ = ["cli_main", "main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{message}\n{self.format_usage()}")


def _build_parser():
    parser = _Parser(prog="ntklab", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p):
        p.add_argument("--config", help="sectioned key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None)

    g = sub.add_parser("gen", help="draw a dataset, write feature CSVs")
    common(g)
    g.add_argument("--kind", choices=("channel", "gaussian"), default="channel")
    g.add_argument("--k", type=int, default=5, help="users (channel kind)")
    g.add_argument("--n", type=int, default=5, help="nodes (gaussian kind)")
    g.add_argument("--d", type=int, default=4, help="node dim (gaussian kind)")
    g.add_argument("--m", type=int, default=100, help="samples")

    n = sub.add_parser("ntk", help="compute a kernel matrix")
    common(n)
    n.add_argument("--arch", choices=("mlp", "gnn"), default="mlp")
    n.add_argument("--activation", choices=("relu", "quadratic"),
                   default="relu")
    n.add_argument("--kind", choices=("channel", "gaussian"),
                   default="gaussian")
    n.add_argument("--k", type=int, default=5)
    n.add_argument("--n", type=int, default=5)
    n.add_argument("--d", type=int, default=4)
    n.add_argument("--m", type=int, default=50)
    n.add_argument("--mc-units", type=int, default=0,
                   help="total Monte Carlo draw units (draws x width); "
                        "0 disables the Monte Carlo estimate")
    n.add_argument("--mc-width", type=int, default=1000,
                   help="width per Monte Carlo draw")

    s = sub.add_parser("spectral", help="eigendecompose a saved kernel")
    common(s)
    s.add_argument("--kernel", required=True,
                   help="kernel file (.csv or .ntk1)")
    s.add_argument("--labels", default=None,
                   help="optional label file, one value per line")

    t = sub.add_parser("train", help="run one training job from --config")
    common(t)

    e = sub.add_parser("exp", help="run an experiment pipeline")
    common(e)
    e.add_argument("id", choices=EXPERIMENT_IDS, metavar="ID",
                   help="|".join(EXPERIMENT_IDS))
    e.add_argument("--scale", type=float, default=None,
                   help="uniform sample-count shrink factor in (0, 1]")
    return parser


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("NTKLAB_THREADS")
    return int(env) if env else 1


def _cmd_gen(args):
    t0 = time.perf_counter()
    out = args.out or "runs"
    seed = args.seed if args.seed is not None else 0
    if args.kind == "channel":
        ds = generate_instances(args.k, args.m, seed)
        meta = ["kind = channel", f"k = {args.k}"]
    else:
        ds = gaussian_node_dataset(args.n, args.m, args.d, seed)
        meta = ["kind = gaussian", f"n = {args.n}", f"d = {args.d}"]
    meta += [f"m = {args.m}", f"seed = {seed}"]
    dim = ds.flat_features.shape[1]
    _atomic_write(os.path.join(out, "flat_features.csv"),
                  _csv_text(",".join(f"x{i}" for i in range(dim)),
                            [tuple(float(v) for v in row)
                             for row in ds.flat_features]))
    _atomic_write(os.path.join(out, "meta.txt"), "\n".join(meta) + "\n")
    write_manifest(out, ["command = gen"] + meta, t0)
    return 0


def _gen_dataset_for_kernel(args, seed):
    if args.kind == "channel":
        ds = generate_instances(args.k, args.m, seed)
    else:
        ds = gaussian_node_dataset(args.n, args.m, args.d, seed)
    return ds


def _cmd_ntk(args):
    t0 = time.perf_counter()
    out = args.out or "runs"
    seed = args.seed if args.seed is not None else 0
    ds = _gen_dataset_for_kernel(args, seed)
    if args.arch == "mlp":
        kernel = analytic_ntk_mlp(ds.flat_features, args.activation)
    else:
        kernel = analytic_ntk_gnn(ds.node_features, args.activation)
    os.makedirs(out, exist_ok=True)
    save_kernel_csv(kernel, os.path.join(out, "kernel.csv"))
    save_kernel_ntk1(kernel, os.path.join(out, "kernel.ntk1"))
    echo = ["command = ntk", f"arch = {args.arch}",
            f"activation = {args.activation}", f"kind = {args.kind}",
            f"m = {args.m}", f"seed = {seed}"]
    if args.mc_units:
        draws = max(1, args.mc_units // args.mc_width)
        if args.arch == "mlp":
            spec_arch = ArchSpec("flat-mlp", args.activation)
            X = ds.flat_features
        else:
            spec_arch = ArchSpec("perminv-gnn", args.activation)
            X = ds.node_features
        est = mc_ntk(spec_arch, X, draws, args.mc_width, seed)
        save_kernel_csv(est, os.path.join(out, "mc_kernel.csv"))
        err = float(np.linalg.norm(est.entries - kernel.entries)
                    / np.linalg.norm(kernel.entries))
        _atomic_write(os.path.join(out, "mc_error.csv"),
                      _csv_text("draws,width_per_draw,relative_frobenius_error",
                                [(draws, args.mc_width, err)]))
        echo += [f"mc_draws = {draws}", f"mc_width = {args.mc_width}"]
    write_manifest(out, echo, t0)
    return 0


def _cmd_spectral(args):
    t0 = time.perf_counter()
    out = args.out or "runs"
    path = args.kernel
    if path.endswith(".ntk1"):
        kernel = load_kernel_ntk1(path)
    else:
        kernel = load_kernel_csv(path)
    y = None
    if args.labels:
        y = np.loadtxt(args.labels, ndmin=1)
    rep = eig_sym(kernel.entries, y)
    _atomic_write(os.path.join(out, "eigenvalues.csv"),
                  _csv_text("index,eigenvalue",
                            list(enumerate(map(float, rep.eigenvalues)))))
    if y is not None:
        _atomic_write(
            os.path.join(out, "alignment.csv"),
            _csv_text("index,eigenvalue,alignment",
                      [(i, float(l), float(a)) for i, (l, a) in
                       enumerate(zip(rep.eigenvalues, rep.alignment))]))
    _atomic_write(
        os.path.join(out, "spectral_summary.csv"),
        _csv_text("condition_number,trace,lambda_min,lambda_max",
                  [(rep.condition_number, rep.trace,
                    float(rep.eigenvalues[-1]), float(rep.eigenvalues[0]))]))
    write_manifest(out, ["command = spectral", f"kernel = {path}"], t0)
    return 0


def _cmd_train(args):
    if not args.config:
        raise _UsageError("train requires --config\n"
                          "usage: ntklab train --config PATH [--seed N] "
                          "[--out DIR]")
    t0 = time.perf_counter()
    sections = load_config(args.config)
    spec = sections.get("train")
    if spec is None:
        raise ValueError("config file has no [train] section")
    out = args.out or spec.get("out", "runs")
    seed = args.seed if args.seed is not None else int(spec.get("seed", 0))

    arch = spec.get("arch", "wcgcn")
    loss = spec.get("loss", "negative-sum-rate")
    k = int(spec.get("k", 5))
    m_train = int(spec.get("m_train", 1000))
    m_test = int(spec.get("m_test", 200))
    if loss == "negative-sum-rate":
        train_ds = generate_instances(k, m_train, seed)
        test_ds = generate_instances(k, m_test, seed + 1)
    else:
        n = int(spec.get("n", 1))
        d = int(spec.get("d", 8))
        degree = int(spec.get("label_degree", 2))
        beta = np.arange(1, d + 1, dtype=float) / d
        train_ds = gaussian_node_dataset(n, m_train, d, seed)
        train_ds = dataclasses.replace(
            train_ds, labels=synthetic_labels(train_ds, beta, degree))
        test_ds = gaussian_node_dataset(n, m_test, d, seed + 1)
        test_ds = dataclasses.replace(
            test_ds, labels=synthetic_labels(test_ds, beta, degree))

    hidden = int(spec.get("hidden", 32))
    if arch == "wcgcn":
        net = init_net("wcgcn", None, hidden, seed,
                       layers=int(spec.get("layers", 2)))
    elif arch == "power-mlp":
        net = init_net("power-mlp", (k * k + k, k), hidden, seed)
    elif arch == "two-layer":
        net = init_net("two-layer", train_ds.flat_features.shape[1],
                       int(spec.get("width", 1024)), seed)
    else:
        raise ValueError(f"unknown arch {arch!r}")

    cfg = TrainConfig(
        optimizer=spec.get("optimizer", "adam"),
        lr=float(spec.get("lr", 1e-3)),
        epochs=int(spec.get("epochs", 50)),
        loss=loss,
        seed=seed,
        eval_every=int(spec.get("eval_every", 1)),
        batch_size=None if spec.get("batch_size", "full").lower()
        in ("full", "none") else int(spec.get("batch_size")),
    )
    os.makedirs(out, exist_ok=True)
    try:
        trace = train(net, train_ds, test_ds, cfg)
    except DivergenceError as exc:
        if exc.trace is not None and exc.trace.rows:
            write_trace_csv(exc.trace, os.path.join(out, "trace.csv"))
            write_manifest(out, ["command = train (diverged)"], t0)
        raise
    write_trace_csv(trace, os.path.join(out, "trace.csv"))
    save_checkpoint(net, os.path.join(out, "checkpoint.txt"))
    metrics = evaluate(net, test_ds, loss=loss,
                       train_ds=train_ds if loss == "squared" else None)
    rows = [(key, float(v)) for key, v in sorted(metrics.items())
            if v is not None]
    _atomic_write(os.path.join(out, "train_summary.csv"),
                  _csv_text("metric,value", rows))
    write_manifest(out, ["command = train", f"arch = {arch}",
                         f"loss = {loss}", f"seed = {seed}"], t0)
    return 0


def _cmd_exp(args):
    user = load_config(args.config) if args.config else {}
    cfg = ExperimentConfig.build(
        args.id, user, seed=args.seed, out=args.out,
        threads=_threads(args), scale=args.scale)
    run_experiment(cfg)
    return 0


def cli_main(argv=None):
    """Entry point; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError(parser.format_usage())
        handler = {"gen": _cmd_gen, "ntk": _cmd_ntk, "spectral": _cmd_spectral,
                   "train": _cmd_train, "exp": _cmd_exp}[args.command]
        return handler(args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericFailureError, DivergenceError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
