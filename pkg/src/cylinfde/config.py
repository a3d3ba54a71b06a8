"""Declarative run configuration: typed INI sections with strict keys.

A run document has sections [problem], [network], [training], [sampler],
[output]; unknown sections or keys are rejected.  The same schema writes the
run manifest (config echo plus a [manifest] section), which re-parses to an
equal RunConfig.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .network import Mlp
from .problems import (
    BheConfig,
    CovarianceKind,
    FteConfig,
    FteVariant,
    PdeProblem,
    bhe_problem,
    fte_problem,
)
from .training import LossKind, SamplerConfig, ScheduleConfig, TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# section -> key -> (parser, default); REQUIRED means no default.
REQUIRED = object()
_SCHEMA: dict[str, dict[str, tuple]] = {
    "problem": {
        "kind": (str, REQUIRED),
        "variant": (str, REQUIRED),
        "degree": (int, REQUIRED),
        "rho0": (float, 1.0),
        "upsilon0": (float, 1.0),
        "mu_bar": (float, 8.0),
        "sigma2": (float, 10.0),
    },
    "network": {
        "width": (int, REQUIRED),
    },
    "training": {
        "iterations": (int, REQUIRED),
        "learning_rate": (float, REQUIRED),
        "batch_size": (int, 1024),
        "weight_decay": (float, 0.0),
        "loss": (str, "smooth_l1"),
        "reweight_temperature": (float, 0.25),
        "regularize_zero_input": (_bool, False),
        "seed": (int, 0),
        "val_interval": (int, 1000),
        "val_points": (int, 4096),
        "milestone": (int, 0),
        "t_0": (int, None),  # defaults to iterations - milestone
        "t_mult": (int, 1),
        "start_factor": (float, 1e-10),
        "eta_min": (float, 0.0),
    },
    "sampler": {
        "n_points": (int, 10_000),
        "quadratic_decay": (_bool, None),  # defaults by problem kind
        "seed": (int, None),  # defaults to training.seed
    },
    "output": {
        "directory": (str, "out"),
        "csv": (_bool, True),
        "figures": (_bool, True),
    },
}
_KINDS = ("fte", "bhe")
_VARIANTS = {"fte": ("linear", "nonlinear"), "bhe": ("delta", "constant", "moderate")}
_LOSSES = {"smooth_l1": LossKind.SMOOTH_L1, "l1_plus_linf": LossKind.L1_PLUS_LINF}


@dataclass
class RunConfig:
    """Validated, fully-defaulted run document."""

    values: dict[str, dict[str, Any]] = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    # -- construction ------------------------------------------------------

    @classmethod
    def from_mapping(cls, flat: dict[str, Any]) -> "RunConfig":
        """Build from {'section.key': value} entries (as presets ship)."""
        nested: dict[str, dict[str, Any]] = {}
        for dotted, value in flat.items():
            try:
                section, key = dotted.split(".", 1)
            except ValueError:
                raise ConfigError(f"expected 'section.key', got {dotted!r}") from None
            nested.setdefault(section, {})[key] = value
        return cls._validate(nested)

    @classmethod
    def from_ini_text(cls, text: str) -> tuple["RunConfig", dict[str, str]]:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        nested: dict[str, dict[str, Any]] = {}
        manifest: dict[str, str] = {}
        for section in parser.sections():
            if section == "manifest":
                manifest = dict(parser.items(section))
                continue
            nested[section] = dict(parser.items(section))
        return cls._validate(nested, raw_strings=True), manifest

    @classmethod
    def from_file(cls, path) -> tuple["RunConfig", dict[str, str]]:
        with open(path) as fh:
            return cls.from_ini_text(fh.read())

    @classmethod
    def _validate(cls, nested: dict[str, dict[str, Any]], raw_strings=False) -> "RunConfig":
        for section in nested:
            if section not in _SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
        values: dict[str, dict[str, Any]] = {}
        for section, schema in _SCHEMA.items():
            given = nested.get(section, {})
            for key in given:
                if key not in schema:
                    raise ConfigError(f"unknown key {section}.{key}")
            out = {}
            for key, (parse, default) in schema.items():
                if key in given:
                    raw = given[key]
                    try:
                        if parse is _bool and isinstance(raw, bool):
                            out[key] = raw
                        else:
                            out[key] = parse(raw)
                    except ConfigError:
                        raise
                    except (TypeError, ValueError) as exc:
                        raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from None
                elif default is REQUIRED:
                    raise ConfigError(f"missing required key {section}.{key}")
                else:
                    out[key] = default
            values[section] = out
        cfg = cls(values)
        cfg._check_semantics()
        cfg._fill_derived_defaults()
        return cfg

    def _check_semantics(self):
        prob = self.values["problem"]
        if prob["kind"] not in _KINDS:
            raise ConfigError(f"problem.kind must be one of {_KINDS}, got {prob['kind']!r}")
        allowed = _VARIANTS[prob["kind"]]
        if prob["variant"] not in allowed:
            raise ConfigError(
                f"problem.variant for {prob['kind']} must be one of {allowed}, got {prob['variant']!r}"
            )
        if self.values["training"]["loss"] not in _LOSSES:
            raise ConfigError(f"training.loss must be one of {sorted(_LOSSES)}")
        if prob["degree"] < 1:
            raise ConfigError("problem.degree must be >= 1")
        if self.values["network"]["width"] < 1:
            raise ConfigError("network.width must be >= 1")

    def _fill_derived_defaults(self):
        tr = self.values["training"]
        if tr["t_0"] is None:
            tr["t_0"] = max(1, tr["iterations"] - tr["milestone"])
        sa = self.values["sampler"]
        if sa["quadratic_decay"] is None:
            sa["quadratic_decay"] = self.values["problem"]["kind"] == "bhe"
        if sa["seed"] is None:
            sa["seed"] = tr["seed"]

    # -- emission ----------------------------------------------------------

    def to_ini_text(self, manifest: dict[str, Any] | None = None) -> str:
        buf = io.StringIO()
        for section, schema in _SCHEMA.items():
            buf.write(f"[{section}]\n")
            for key in schema:
                value = self.values[section][key]
                if isinstance(value, bool):
                    value = "true" if value else "false"
                elif isinstance(value, float):
                    value = repr(value)
                buf.write(f"{key} = {value}\n")
            buf.write("\n")
        if manifest:
            buf.write("[manifest]\n")
            for key, value in manifest.items():
                buf.write(f"{key} = {value}\n")
        return buf.getvalue()

    def write(self, path, manifest: dict[str, Any] | None = None) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_ini_text(manifest))

    # -- builders ----------------------------------------------------------

    def build_problem(self) -> PdeProblem:
        prob = self.values["problem"]
        if prob["kind"] == "fte":
            builder = {
                "linear": FteConfig.linear,
                "nonlinear": FteConfig.nonlinear,
            }[prob["variant"]]
            try:
                return fte_problem(builder(prob["degree"], prob["rho0"], prob["upsilon0"]))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        kind = CovarianceKind(prob["variant"])
        try:
            return bhe_problem(BheConfig.build(prob["degree"], kind, prob["mu_bar"], prob["sigma2"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def build_network(self) -> Mlp:
        prob = self.values["problem"]
        meta = {
            "problem": prob["kind"],
            "variant": prob["variant"],
            "degree": prob["degree"],
            "loss": self.values["training"]["loss"],
        }
        return Mlp.init(
            prob["degree"] + 1,
            self.values["network"]["width"],
            dtype=np.float32,
            seed=self.values["training"]["seed"],
            meta=meta,
        )

    def build_train_config(self) -> TrainConfig:
        tr = self.values["training"]
        return TrainConfig(
            iterations=tr["iterations"],
            learning_rate=tr["learning_rate"],
            weight_decay=tr["weight_decay"],
            batch_size=tr["batch_size"],
            schedule=ScheduleConfig(
                milestone=tr["milestone"],
                t0=tr["t_0"],
                t_mult=tr["t_mult"],
                start_factor=tr["start_factor"],
                eta_min=tr["eta_min"],
            ),
            loss_kind=_LOSSES[tr["loss"]],
            reweight_temperature=tr["reweight_temperature"],
            regularize_zero_input=tr["regularize_zero_input"],
            seed=tr["seed"],
            val_interval=tr["val_interval"],
            val_points=tr["val_points"],
        )

    def build_sampler_config(self, problem: PdeProblem) -> SamplerConfig:
        sa = self.values["sampler"]
        return SamplerConfig(
            n_points=sa["n_points"],
            t_range=problem.t_range,
            a_ranges=tuple(problem.a_ranges),
            quadratic_decay=sa["quadratic_decay"],
            seed=sa["seed"],
        )

    def with_overrides(self, seed: int | None = None, out_dir: str | None = None) -> "RunConfig":
        nested = {s: dict(kv) for s, kv in self.values.items()}
        if seed is not None:
            nested["training"]["seed"] = seed
            nested["sampler"]["seed"] = seed
        if out_dir is not None:
            nested["output"]["directory"] = str(out_dir)
        return RunConfig._validate(nested)


def load_run_config(config_path=None, preset: str | None = None,
                    seed: int | None = None, out_dir=None) -> RunConfig:
    """Resolve a RunConfig from exactly one of a config file or a preset."""
    from .presets import get_preset

    if (config_path is None) == (preset is None):
        raise ConfigError("exactly one of a config file or a preset name is required")
    if preset is not None:
        try:
            cfg = RunConfig.from_mapping(get_preset(preset))
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
    else:
        cfg, _ = RunConfig.from_file(config_path)
    return cfg.with_overrides(seed=seed, out_dir=out_dir)
