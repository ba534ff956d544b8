"""Command line entry point: ``mvcomplete {run,sweep,make-incomplete,synth}``.

Exit codes: 0 success, 2 configuration error, 3 data error. The
``MVCOMPLETE_OUTPUT_DIR`` environment variable overrides ``--output-dir``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .experiments import (
    OUTPUT_DIR_ENV,
    ConfigError,
    DataError,
    ExperimentConfig,
    load_dataset,
    make_incomplete,
    run_experiment,
    save_dataset,
    sweep_configs,
    synthesize,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _rank(text: str):
    """Integers are absolute column counts; anything with a decimal point is a fraction."""
    try:
        value = float(text) if any(ch in text for ch in ".eE") else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid rank {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("rank must be positive")
    return value


def _int_list(text: str):
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("dataset", help="dataset directory (view<k>.csv, labels.csv, mask.csv)")
    p.add_argument("--missing-rate", type=float, default=0.0,
                   help="percent of samples made incomplete before solving (default 0)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--knn-k", type=int, default=10)
    p.add_argument("--sigma", type=float, default=1.0, help="Gaussian kernel width")
    p.add_argument("--clusters", type=int, default=None, help="default: number of label values")
    p.add_argument("--restarts", type=int, default=10, help="k-means restarts")
    p.add_argument("--output-dir", default="results")
    p.add_argument("--zscore", action="store_true", help="standardize features over present samples")
    s = p.add_argument_group("solver")
    s.add_argument("--lam", type=float)
    s.add_argument("--mu", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--rho0", type=float)
    s.add_argument("--eta", type=float)
    s.add_argument("--p", type=float, dest="p_exp", metavar="P", help="Schatten exponent")
    s.add_argument("--embed-dim", type=int)
    s.add_argument("--transform-rank", type=_rank, help="DCT width: count (75) or fraction (0.5)")
    s.add_argument("--max-iters", type=int, dest="max_outer_iters")
    s.add_argument("--stop-tol", type=float)
    s.add_argument("--eig-order", choices=("smallest", "largest"))


def _experiment_config(args) -> ExperimentConfig:
    solver = {}
    for flag, key in (("lam", "lam"), ("mu", "mu"), ("gamma", "gamma"), ("rho0", "rho0"),
                      ("eta", "eta"), ("p_exp", "p"), ("embed_dim", "embed_dim"),
                      ("transform_rank", "rank"), ("max_outer_iters", "max_outer_iters"),
                      ("stop_tol", "stop_tol"), ("eig_order", "eig_order")):
        value = getattr(args, flag)
        if value is not None:
            solver[key] = value
    return ExperimentConfig(
        dataset=args.dataset,
        missing_rate=args.missing_rate,
        seed=args.seed,
        solver=solver,
        knn_k=args.knn_k,
        sigma=args.sigma,
        clusters=args.clusters,
        restarts=args.restarts,
        output_dir=os.environ.get(OUTPUT_DIR_ENV) or args.output_dir,
        zscore=args.zscore,
    )


def _summary(tag, report) -> dict:
    out = {} if tag is None else {"point": tag}
    out |= {"converged": report.converged, "n_iter": report.n_iter}
    if report.clustering is not None:
        c = report.clustering
        out.update(acc=round(c.acc_mean, 4), nmi=round(c.nmi_mean, 4), purity=round(c.purity_mean, 4))
    return out


def cmd_run(args) -> int:
    cfg = _experiment_config(args)
    report = run_experiment(cfg)
    print(json.dumps(_summary(None, report) | {"output_dir": cfg.output_dir}))
    return EXIT_OK


def _parse_sweep(text: str):
    if "=" not in text:
        return text, None
    name, values = text.split("=", 1)
    try:
        return name, [float(v) for v in values.split(",")]
    except ValueError:
        raise ConfigError(f"bad sweep values {values!r}") from None


def cmd_sweep(args) -> int:
    base = _experiment_config(args)
    param, values = _parse_sweep(args.sweep)
    if param == "rank" and values is not None:
        values = [int(v) if v > 1 else v for v in values]
    dataset = load_dataset(base.dataset)
    for tag, cfg in sweep_configs(base, param, values):
        report = run_experiment(cfg, dataset=dataset)
        print(json.dumps(_summary(tag, report)), flush=True)
    return EXIT_OK


def cmd_make_incomplete(args) -> int:
    ds = load_dataset(args.dataset)
    out = make_incomplete(ds, args.missing_rate, args.seed)
    save_dataset(out, args.out, write_mask=True)
    print(json.dumps({"out": args.out, "n_present": out.n_present.tolist()}))
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = synthesize(n=args.n, dims=args.dims, c=args.clusters, separation=args.separation,
                    cluster_std=args.std, seed=args.seed)
    if args.missing_rate:
        ds = make_incomplete(ds, args.missing_rate, args.seed)
    save_dataset(ds, args.out)
    print(json.dumps({"out": args.out, "n": ds.n, "dims": ds.dims}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvcomplete",
        description="Incomplete multi-view embedding via low-rank graph tensor completion.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="solve one experiment and write report.json / convergence.csv")
    _add_experiment_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="one report per grid point")
    _add_experiment_args(p)
    p.add_argument("--sweep", required=True,
                   help="parameter (missing_rate, lam, mu, gamma, rank, ...) "
                        "optionally with values: gamma=0.01,1,100")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("make-incomplete", help="delete views from a complete dataset")
    p.add_argument("dataset")
    p.add_argument("--missing-rate", type=float, required=True, help="percent of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_incomplete)

    p = sub.add_parser("synth", help="write the synthetic Gaussian-cluster benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=150)
    p.add_argument("--dims", type=_int_list, default=(8, 10, 12))
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--separation", type=float, default=6.0, help="mean separation in cluster stds")
    p.add_argument("--std", type=float, default=0.3, help="cluster standard deviation")
    p.add_argument("--missing-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
