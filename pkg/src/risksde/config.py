"""Strict experiment configuration.

Configs are TOML files with a fixed set of sections and keys; unknown keys
are fatal (with the offending line reported) so experiments cannot silently
drift. Parsing fills every default, which makes parse -> serialize -> parse
the identity on the resolved dictionary.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .datagen import MixtureSpec, TabularPipelineSpec
from .errors import ConfigurationError
from .sde import SDESpec
from .sampling import SamplerConfig
from .training import TrainConfig

METHODS = ("standard", "risk-variable", "classifier-free", "risk-regressor",
           "risk-sensitive")

_BENCH_MEANS = [[4.0, 4.0], [-4.0, 4.0], [-4.0, -4.0], [4.0, -4.0]]

# section -> key -> (expected type, default); floats accept ints
SCHEMA = {
    "": {
        "seed": (int, 0),
        "output_dir": (str, "runs/experiment"),
    },
    "sde": {
        "family": (str, "vp"),
        "horizon": (float, 1.0),
        "beta_min": (float, 0.1),
        "beta_max": (float, 20.0),
        "sigma_min": (float, 0.01),
        "sigma_max": (float, 50.0),
        "dimension": (int, 2),
    },
    "noise": {
        "kind": (str, "gaussian"),
        "risk_value": (float, 1.0),
        "risk_range": (list, []),
    },
    "data": {
        "source": (str, "mixture"),
        "n_samples": (int, 10_000),
        "n_reference": (int, 5_000),
        "means": (list, _BENCH_MEANS),
        "covariance": (float, 0.5),
        "weights": (list, [0.25, 0.25, 0.25, 0.25]),
        "corrupt_fractions": (list, [0.95, 0.1, 0.1, 0.1]),
        "csv_path": (str, ""),
        "mask_fraction": (float, 0.05),
        "n_neighbors": (int, 10),
    },
    "model": {
        "hidden": (list, [64, 64]),
        "time_features": (int, 4),
    },
    "train": {
        "methods": (list, ["risk-sensitive"]),
        "steps": (int, 20_000),
        "batch_size": (int, 256),
        "learning_rate": (float, 1e-3),
        "lambda_schedule": (str, "uniform"),
        "p_force": (float, 0.0),
        "v_floor": (float, 1e-5),
        "guidance_scale": (float, 1.0),
        "mask_probability": (float, 0.1),
        "regressor_steps": (int, 5_000),
    },
    "sample": {
        "n_samples": (int, 5_000),
        "n_steps": (int, 1_000),
    },
    "eval": {
        "prd_clusters": (int, 20),
        "prd_angles": (int, 1001),
        "energy_points": (int, 1000),
    },
    "stability": {
        "risk_grid": (list, [0.0, 0.5, 1.0, 2.0]),
        "t_grid": (list, [0.1, 0.3, 0.5, 0.7, 0.9]),
        "n_draws": (int, 20_000),
        "n_bootstrap": (int, 100),
    },
}


def _line_of(text: str, key: str) -> str:
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if stripped.startswith(key) and "=" in stripped:
            name = stripped.split("=", 1)[0].strip()
            if name == key:
                return f" (line {i})"
    return ""


def _coerce(section: str, key: str, value, expected, text: str):
    where = f"[{section}].{key}" if section else key
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{where} must be a number{_line_of(text, key)}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{where} must be an integer{_line_of(text, key)}")
        return value
    if not isinstance(value, expected):
        raise ConfigurationError(
            f"{where} must be of type {expected.__name__}{_line_of(text, key)}")
    return value


@dataclass
class ExperimentConfig:
    """Resolved configuration: every schema key present with its value."""

    data: dict

    # -- parsing ------------------------------------------------------------

    @classmethod
    def from_string(cls, text: str, source: str = "<string>") -> "ExperimentConfig":
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{source}: {exc}") from exc
        resolved: dict = {}
        top = {k: v for k, v in raw.items() if not isinstance(v, dict)}
        sections = {k: v for k, v in raw.items() if isinstance(v, dict)}
        for key in top:
            if key not in SCHEMA[""]:
                raise ConfigurationError(f"unknown key {key!r}{_line_of(text, key)}")
        for name in sections:
            if name not in SCHEMA or name == "":
                raise ConfigurationError(f"unknown section [{name}]")
            for key in sections[name]:
                if key not in SCHEMA[name]:
                    raise ConfigurationError(
                        f"unknown key {key!r} in [{name}]{_line_of(text, key)}")
        for key, (expected, default) in SCHEMA[""].items():
            value = top.get(key, default)
            resolved[key] = _coerce("", key, value, expected, text)
        for name, keys in SCHEMA.items():
            if name == "":
                continue
            body = sections.get(name, {})
            resolved[name] = {}
            for key, (expected, default) in keys.items():
                value = body.get(key, default)
                resolved[name][key] = _coerce(name, key, value, expected, text)
        config = cls(data=resolved)
        config._validate()
        return config

    @classmethod
    def from_path(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_string(fh.read(), source=str(path))

    def _validate(self) -> None:
        d = self.data
        if d["sde"]["family"] not in ("vp", "ve"):
            raise ConfigurationError("[sde].family must be 'vp' or 've'")
        if d["noise"]["kind"] not in ("gaussian", "cauchy"):
            raise ConfigurationError("[noise].kind must be 'gaussian' or 'cauchy'")
        if d["data"]["source"] not in ("mixture", "csv"):
            raise ConfigurationError("[data].source must be 'mixture' or 'csv'")
        if d["data"]["source"] == "csv" and not d["data"]["csv_path"]:
            raise ConfigurationError("[data].csv_path required when source = 'csv'")
        for method in d["train"]["methods"]:
            if method not in METHODS:
                raise ConfigurationError(
                    f"unknown training method {method!r}; choose from {METHODS}")
        if d["train"]["lambda_schedule"] not in ("uniform", "kernel_variance"):
            raise ConfigurationError(
                "[train].lambda_schedule must be 'uniform' or 'kernel_variance'")

    # -- serialization --------------------------------------------------------

    def serialize(self) -> str:
        def fmt(value):
            if isinstance(value, bool):
                return "true" if value else "false"
            if isinstance(value, float):
                return repr(value)
            if isinstance(value, int):
                return str(value)
            if isinstance(value, str):
                return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
            if isinstance(value, list):
                return "[" + ", ".join(fmt(v) for v in value) + "]"
            raise ConfigurationError(f"cannot serialize value of type {type(value).__name__}")

        lines = []
        for key in SCHEMA[""]:
            lines.append(f"{key} = {fmt(self.data[key])}")
        for name in SCHEMA:
            if name == "":
                continue
            lines.append("")
            lines.append(f"[{name}]")
            for key in SCHEMA[name]:
                lines.append(f"{key} = {fmt(self.data[name][key])}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()

    # -- object builders --------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def output_dir(self) -> str:
        return self.data["output_dir"]

    def sde_spec(self, dim: int | None = None) -> SDESpec:
        s = self.data["sde"]
        return SDESpec(family=s["family"], T=s["horizon"], beta_min=s["beta_min"],
                       beta_max=s["beta_max"], sigma_min=s["sigma_min"],
                       sigma_max=s["sigma_max"], dim=dim or s["dimension"])

    def mixture_spec(self) -> MixtureSpec:
        d, n = self.data["data"], self.data["noise"]
        risk_range = tuple(n["risk_range"]) if n["risk_range"] else None
        return MixtureSpec(means=d["means"], covariances=d["covariance"],
                           weights=d["weights"], corrupt_fractions=d["corrupt_fractions"],
                           noise_kind=n["kind"], risk_value=n["risk_value"],
                           risk_range=risk_range)

    def tabular_spec(self) -> TabularPipelineSpec:
        d = self.data["data"]
        return TabularPipelineSpec(mask_fraction=d["mask_fraction"],
                                   n_neighbors=d["n_neighbors"])

    def train_config(self, seed: int | None = None) -> TrainConfig:
        t = self.data["train"]
        return TrainConfig(steps=t["steps"], batch_size=t["batch_size"],
                           learning_rate=t["learning_rate"],
                           lambda_schedule=t["lambda_schedule"], p_force=t["p_force"],
                           v_floor=t["v_floor"],
                           seed=self.seed if seed is None else seed)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(n_steps=self.data["sample"]["n_steps"])
