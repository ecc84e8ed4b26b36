"""Command-line interface.

Subcommands: generate-data, impute, train, sample, evaluate,
instability-scan, stability-report and run (the full pipeline). Every
command is driven by a strict TOML config plus a handful of overrides; the
``--deterministic`` flag (or the RISKSDE_THREADS variable) pins the BLAS
thread count so artifacts reproduce bit for bit across machines.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import RiskRegressor
from .config import ExperimentConfig, METHODS
from .datagen import (
    generate_mixture,
    knn_impute_with_risk,
    mask_table,
    read_dataset_csv,
    read_table_csv,
    write_dataset_csv,
    write_table_csv,
)
from .errors import ConfigurationError
from .nn import load_checkpoint, save_checkpoint
from .runner import (
    _stage_seed,
    evaluate_samples,
    run_experiment,
    sample_method,
    stability_report,
    train_method,
)
from .sampling import SamplerConfig
from .svg import scatter_svg


def _limit_threads(args) -> None:
    n = os.environ.get("RISKSDE_THREADS")
    if args.deterministic and n is None:
        n = "1"
    if n is not None:
        try:
            from threadpoolctl import threadpool_limits
            threadpool_limits(int(n))
        except ImportError:
            os.environ.setdefault("OMP_NUM_THREADS", n)


def _load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_path(path)


def cmd_generate_data(args) -> int:
    config = _load_config(args.config)
    rng = _stage_seed(config.seed, "data")
    dataset = generate_mixture(config.mixture_spec(),
                               args.count or config.data["data"]["n_samples"], rng)
    write_dataset_csv(args.out, dataset)
    print(f"wrote {dataset.n} samples ({int((~dataset.clean_mask).sum())} corrupted) "
          f"to {args.out}")
    return 0


def cmd_impute(args) -> int:
    table = read_table_csv(args.input)
    if args.mask_fraction is not None:
        table = mask_table(table, args.mask_fraction,
                           np.random.default_rng(args.seed))
    from .datagen import TabularPipelineSpec
    dataset = knn_impute_with_risk(table, TabularPipelineSpec(n_neighbors=args.neighbors))
    write_dataset_csv(args.output, dataset)
    n_cells = int(np.sum(dataset.R > 0))
    print(f"imputed {n_cells} cells; wrote {args.output}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    if args.data:
        dataset = read_dataset_csv(args.data)
    else:
        dataset = generate_mixture(config.mixture_spec(),
                                   config.data["data"]["n_samples"],
                                   _stage_seed(config.seed, "data"))
    spec = config.sde_spec(dim=dataset.dim)
    method = args.method or config.data["train"]["methods"][0]
    model, trace, aux = train_method(method, dataset, spec, config)
    save_checkpoint(model, args.out, extra={"method": method,
                                            "guidance_scale":
                                            config.data["train"]["guidance_scale"]})
    if "regressor" in aux:
        save_checkpoint(aux["regressor"].net, str(args.out) + ".regressor",
                        extra={"role": "risk-regressor"})
    print(f"trained {method} for {config.data['train']['steps']} steps; "
          f"final loss {trace.losses[-100:].mean():.4f}; wrote {args.out}")
    return 0


def cmd_sample(args) -> int:
    config = _load_config(args.config)
    model, extra = load_checkpoint(args.checkpoint)
    method = extra.get("method", "standard")
    aux = {}
    if method == "risk-regressor":
        reg_path = args.regressor or str(args.checkpoint) + ".regressor"
        reg_net, _ = load_checkpoint(reg_path)
        aux["regressor"] = RiskRegressor(net=reg_net, trained=True)
    if args.steps:
        config.data["sample"]["n_steps"] = args.steps
    spec = model.sde
    if method == "risk-variable":
        # the stored schedule acts on the joint (sample, risk) state
        from dataclasses import replace
        spec = replace(spec, dim=spec.dim // 2)
    rng = np.random.default_rng(args.seed)
    samples = sample_method(method, model, spec, config, rng, args.count, aux)
    from .runner import _write_samples_csv
    _write_samples_csv(args.out, samples)
    print(f"wrote {args.count} samples from {method} checkpoint to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    generated = read_dataset_csv(args.generated).X if _has_risk_cols(args.generated) \
        else _read_plain(args.generated)
    reference = read_dataset_csv(args.reference).X if _has_risk_cols(args.reference) \
        else _read_plain(args.reference)
    mixture = config.mixture_spec() if config.data["data"]["source"] == "mixture" else None
    report = evaluate_samples(generated, reference, mixture, config)
    Path(args.out_json).write_text(json.dumps(report.to_dict(), indent=2),
                                   encoding="utf-8")
    if args.prd_csv:
        import csv as _csv
        with open(args.prd_csv, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["precision", "recall"])
            writer.writerows([[float(p), float(r)] for p, r in report.prd])
    if args.svg and mixture is not None:
        scatter_svg(args.svg, [(generated[:4000], "#2ca02c", 2)],
                    ellipses=list(zip(mixture.means, mixture.covariances)),
                    title="generated samples")
    print(json.dumps({k: v for k, v in report.to_dict().items() if k != "prd"}, indent=2))
    return 0


def _has_risk_cols(path) -> bool:
    with open(path) as fh:
        header = fh.readline()
    return ",r_1" in header or header.startswith("r_1")


def _read_plain(path) -> np.ndarray:
    import csv as _csv
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        next(reader)
        return np.array([[float(v) for v in row] for row in reader if row])


def cmd_instability_scan(args) -> int:
    config = _load_config(args.config)
    out = stability_report(config, output_dir=args.out_dir)
    print(f"wrote instability scan artifacts to {out}")
    return 0


def cmd_run(args) -> int:
    config = _load_config(args.config)
    out = run_experiment(config, output_dir=args.output_dir)
    print(f"run complete; artifacts in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risksde",
                                     description="risk-sensitive diffusion experiments")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--deterministic", action="store_true",
                        help="pin BLAS threads so artifacts reproduce exactly")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="draw a synthetic benchmark dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=None)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("impute", help="KNN-impute a table and derive per-cell risk")
    p.add_argument("--input", required=True, help="CSV with empty cells for missing values")
    p.add_argument("--output", required=True)
    p.add_argument("--neighbors", type=int, default=10)
    p.add_argument("--mask-fraction", type=float, default=None,
                   help="optionally mask this fraction of cells first")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("train", help="train one method")
    p.add_argument("--config", required=True)
    p.add_argument("--method", choices=METHODS, default=None)
    p.add_argument("--data", default=None, help="dataset CSV (default: generate)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate samples from a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", type=int, default=5000)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--regressor", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", help="compute the metric bundle for a sample set")
    p.add_argument("--config", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out-json", required=True)
    p.add_argument("--prd-csv", default=None)
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("instability-scan", help="estimate instability over a time grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_instability_scan)

    p = sub.add_parser("stability-report",
                       help="stability intervals over a risk grid plus instability scan")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_instability_scan)

    p = sub.add_parser("run", help="full generate/train/sample/evaluate pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _limit_threads(args)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
