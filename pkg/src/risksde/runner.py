"""Experiment orchestration: reproducible end-to-end runs from a config.

A run produces a deterministic artifact tree under the output directory:
``data.csv`` and ``reference.csv``, per-method checkpoints, loss traces,
sample CSVs, metric JSONs, PRD CSVs and scatter SVGs, plus ``manifest.json``
recording the config hash and seed. Re-running the same config and seed
reproduces every artifact byte for byte.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (
    ClassifierFreeGuidance,
    RiskRegressorGuidance,
    RiskVariableGuidance,
    joint_spec,
    train_classifier_free,
    train_risk_regressor,
    train_risk_variable,
    train_standard,
)
from .config import ExperimentConfig
from .datagen import (
    RiskDataset,
    generate_mixture,
    read_dataset_csv,
    sample_mixture_clean,
    write_dataset_csv,
)
from .errors import ConfigurationError
from .metrics import EvalReport, component_balance, frechet_distance, prd_curve, three_sigma_coverage
from .nn import ScoreModel, load_checkpoint, save_checkpoint
from .noise import NoiseModel
from .sampling import guided_reverse_sample, reverse_sample
from .stability import instability_scan
from .sde import stability_interval
from .svg import line_svg, scatter_svg
from .training import train


def _stage_seed(base_seed: int, stage: str) -> np.random.Generator:
    # stable per-stage stream derived from the global seed and the stage name
    digest = int.from_bytes(stage.encode("utf-8")[:8].ljust(8, b"\0"), "little")
    return np.random.default_rng(np.random.SeedSequence([base_seed, digest]))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_samples_csv(path, samples):
    header = [f"x_{j + 1}" for j in range(samples.shape[1])]
    _write_rows(path, header, [[repr(float(v)) for v in row] for row in samples])


def train_method(method: str, dataset: RiskDataset, spec, config: ExperimentConfig):
    """Train one method; returns (model, trace, auxiliary dict)."""
    t = config.data["train"]
    hidden = tuple(config.data["model"]["hidden"])
    freqs = config.data["model"]["time_features"]
    tcfg = config.train_config()
    init_seed = config.seed
    aux = {}
    if method == "risk-sensitive":
        model = ScoreModel.create(dataset.dim, hidden=hidden, time_frequencies=freqs,
                                  sde=spec, rng=np.random.default_rng(init_seed))
        model, trace = train(model, dataset, spec, tcfg,
                             noise_kind=config.data["noise"]["kind"])
    elif method == "standard":
        model, trace = train_standard(dataset, spec, tcfg, hidden=hidden,
                                      time_frequencies=freqs, init_seed=init_seed)
    elif method == "risk-variable":
        model, trace = train_risk_variable(dataset, spec, tcfg, hidden=hidden,
                                           time_frequencies=freqs, init_seed=init_seed)
    elif method == "classifier-free":
        model, trace = train_classifier_free(dataset, spec, tcfg,
                                             mask_probability=t["mask_probability"],
                                             hidden=hidden, time_frequencies=freqs,
                                             init_seed=init_seed)
    elif method == "risk-regressor":
        model, trace = train_standard(dataset, spec, tcfg, hidden=hidden,
                                      time_frequencies=freqs, init_seed=init_seed)
        reg_cfg = config.train_config(seed=config.seed + 1)
        reg_cfg.steps = t["regressor_steps"]
        regressor, _ = train_risk_regressor(dataset, spec, reg_cfg, hidden=hidden,
                                            time_frequencies=freqs,
                                            init_seed=init_seed + 1)
        aux["regressor"] = regressor
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    return model, trace, aux


def sample_method(method: str, model, spec, config: ExperimentConfig,
                  rng: np.random.Generator, n: int, aux: dict | None = None):
    """Generate n samples from a trained method (always at zero risk)."""
    scfg = config.sampler_config()
    gamma = config.data["train"]["guidance_scale"]
    if method == "risk-variable":
        rule = RiskVariableGuidance(gamma=gamma, data_dim=spec.dim)
        z = guided_reverse_sample(model, joint_spec(spec), scfg, rule, rng, n=n)
        return z[:, : spec.dim]
    if method == "classifier-free":
        rule = ClassifierFreeGuidance(gamma=gamma)
        return guided_reverse_sample(model, spec, scfg, rule, rng, n=n)
    if method == "risk-regressor":
        rule = RiskRegressorGuidance(gamma=gamma, regressor=(aux or {})["regressor"])
        return guided_reverse_sample(model, spec, scfg, rule, rng, n=n)
    return reverse_sample(model, spec, scfg, rng, n=n)


def evaluate_samples(samples, reference, mixture, config: ExperimentConfig) -> EvalReport:
    e = config.data["eval"]
    curve = prd_curve(samples, reference, n_clusters=e["prd_clusters"],
                      n_angles=e["prd_angles"])
    balance = component_balance(samples, mixture) if mixture is not None else None
    coverage = three_sigma_coverage(samples, mixture) if mixture is not None else float("nan")
    return EvalReport(frechet=frechet_distance(samples, reference), prd=curve,
                      three_sigma_coverage=coverage, component_balance=balance)


def _load_dataset(config: ExperimentConfig, rng):
    if config.data["data"]["source"] == "csv":
        dataset = read_dataset_csv(config.data["data"]["csv_path"])
        return dataset, None, None
    mixture = config.mixture_spec()
    dataset = generate_mixture(mixture, config.data["data"]["n_samples"], rng)
    reference, _ = sample_mixture_clean(mixture, config.data["data"]["n_reference"], rng)
    return dataset, reference, mixture


def run_experiment(config: ExperimentConfig, output_dir=None) -> Path:
    """Execute the full generate/train/sample/evaluate pipeline."""
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    dataset, reference, mixture = _load_dataset(config, _stage_seed(config.seed, "data"))
    write_dataset_csv(out / "data.csv", dataset)
    if reference is None:
        reference = dataset.X[dataset.clean_mask]
        if reference.shape[0] < dataset.dim + 1:
            reference = dataset.X
    else:
        _write_samples_csv(out / "reference.csv", reference)

    spec = config.sde_spec(dim=dataset.dim)
    ellipses = ([] if mixture is None else
                [(m, c) for m, c in zip(mixture.means, mixture.covariances)])
    extent = None
    if mixture is not None:
        lim = float(np.abs(mixture.means).max() + 3.5)
        extent = ((-lim, lim), (-lim, lim))
    clean_pts = dataset.X[dataset.clean_mask][:2000]
    risky_pts = dataset.X[~dataset.clean_mask][:2000]
    scatter_svg(out / "data.svg", [(clean_pts, "#1f77b4", 2), (risky_pts, "#f4a582", 3)],
                ellipses=ellipses, title="training data", extent=extent)

    manifest = {
        "config_sha256": config.digest(),
        "seed": config.seed,
        "version": __version__,
        "methods": {},
    }
    (out / "config.resolved.toml").write_text(config.serialize(), encoding="utf-8")

    for method in config.data["train"]["methods"]:
        model, trace, aux = train_method(method, dataset, spec, config)
        save_checkpoint(model, out / f"ckpt_{method}.rsde",
                        extra={"method": method, "guidance_scale":
                               config.data["train"]["guidance_scale"]})
        if "regressor" in aux:
            save_checkpoint(aux["regressor"].net, out / f"ckpt_{method}_regressor.rsde",
                            extra={"role": "risk-regressor"})
        _write_rows(out / f"loss_{method}.csv", ["step", "loss", "mean_t"],
                    [[i, repr(float(l)), repr(float(t))]
                     for i, (l, t) in enumerate(zip(trace.losses, trace.times))])
        rng = _stage_seed(config.seed, f"sample:{method}")
        samples = sample_method(method, model, spec, config, rng,
                                config.data["sample"]["n_samples"], aux)
        _write_samples_csv(out / f"samples_{method}.csv", samples)
        report = evaluate_samples(samples, reference, mixture, config)
        (out / f"metrics_{method}.json").write_text(
            json.dumps(report.to_dict(), indent=2), encoding="utf-8")
        _write_rows(out / f"prd_{method}.csv", ["precision", "recall"],
                    [[repr(float(p)), repr(float(r))] for p, r in report.prd])
        scatter_svg(out / f"{method}.svg", [(samples[:4000], "#2ca02c", 2)],
                    ellipses=ellipses, title=method, extent=extent)
        manifest["methods"][method] = {
            "frechet": report.frechet,
            "three_sigma_coverage": report.three_sigma_coverage,
            "skipped_fraction": trace.skipped_fraction,
        }

    (out / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return out


def stability_report(config: ExperimentConfig, output_dir=None) -> Path:
    """Compute the stability-interval profile and an instability scan."""
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = config.sde_spec()
    s = config.data["stability"]

    rows = []
    for r in s["risk_grid"]:
        interval = stability_interval(spec, np.full(spec.dim, float(r)))
        rows.append([repr(float(r)), repr(float(interval.t_star)),
                     repr(float(interval.upper)), str(interval.empty).lower()])
    _write_rows(out / "stability_intervals.csv", ["risk", "t_star", "upper", "empty"], rows)

    mixture = config.mixture_spec()
    rng = _stage_seed(config.seed, "stability")
    x0, _ = sample_mixture_clean(mixture, s["n_draws"], rng)
    noise = NoiseModel(kind=config.data["noise"]["kind"],
                       r=np.full(spec.dim, config.data["noise"]["risk_value"]))
    scan = instability_scan(spec, x0, noise, s["t_grid"], rng,
                            n_bootstrap=s["n_bootstrap"])
    _write_rows(out / "instability_scan.csv", ["t", "instability", "threshold"],
                [[repr(float(t)), repr(float(e)), repr(float(thr))]
                 for t, e, thr in scan])
    ts = [row[0] for row in scan]
    line_svg(out / "instability_scan.svg", ts,
             [([row[1] for row in scan], "instability"),
              ([row[2] for row in scan], "null threshold")],
             title="instability scan", log_y=True)
    return out


def load_model_for_sampling(ckpt_path):
    """Reload a checkpoint; returns (model, method, extra)."""
    model, extra = load_checkpoint(ckpt_path)
    return model, extra.get("method", "standard"), extra
