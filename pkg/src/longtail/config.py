"""Experiment configuration: INI-style files with strict validation.

One section per concern; unknown sections or keys are hard errors so a
typo can never silently fall back to a default. Every value that shapes a
run participates in the run-id content hash, so equal configs always map
to equal run ids.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass

from .data import (
    Dataset,
    ImbalanceProfile,
    SyntheticSpec,
    load_dataset,
    make_balanced_test,
    make_counts,
    synth_dataset,
)
from .errors import ConfigError
from .nn import OptimizerConfig

# section -> key -> (parser, default)
_SCHEMA = {
    "data": {
        "num_classes": (int, 10),
        "n_max": (int, 500),
        "beta": (float, 50.0),
        "dim": (int, 20),
        "signal_dim": (int, 0),  # 0 means signal spans all dims
        "mean_scale": (float, 1.0),
        "noise_scale": (float, 1.0),
        "data_seed": (int, 7),
        "test_per_class": (int, 100),
        "train_path": (str, ""),
        "test_path": (str, ""),
    },
    "model": {
        "trunk_widths": ("ints", (64, 64)),
        "feature_dim": (int, 32),
    },
    "optimizer": {
        "base_lr": (float, 0.1),
        "momentum": (float, 0.9),
        "weight_decay": (float, 2e-4),
        "warmup_epochs": (int, 5),
        "milestones": ("ints", (36, 48)),
        "decay_factor": (float, 0.01),
    },
    "train": {
        "epochs": (int, 60),
        "batch_size": (int, 64),
        "schedule": (str, "parabolic_decay"),
        "rebalance_sampler": (str, "reversed"),
        "stage2_epochs": (int, 10),
        "stage2_lr_factor": (float, 0.01),
        "retrain_epochs": (int, 30),
    },
    "run": {
        "seed": (int, 0),
        "seeds": (int, 5),
    },
}


def _parse_value(parser, raw: str, where: str):
    try:
        if parser is int:
            return int(raw)
        if parser is float:
            return float(raw)
        if parser == "ints":
            raw = raw.strip()
            return tuple(int(tok) for tok in raw.split(",") if tok.strip()) if raw else ()
        return raw.strip()
    except ValueError:
        raise ConfigError(f"cannot parse {where} = {raw!r}") from None


@dataclass
class ExperimentConfig:
    """Typed view of a config file, with desk-scale defaults."""

    values: dict

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls({s: {k: d for k, (_, d) in keys.items()} for s, keys in _SCHEMA.items()})

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        cfg = cls.defaults()
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(
                    f"unknown config section [{section}] "
                    f"(known: {', '.join(_SCHEMA)})"
                )
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(
                        f"unknown key {key!r} in [{section}] "
                        f"(known: {', '.join(_SCHEMA[section])})"
                    )
                kind, _ = _SCHEMA[section][key]
                cfg.values[section][key] = _parse_value(kind, raw, f"[{section}] {key}")
        cfg.validate()
        return cfg

    def __getitem__(self, section_key):
        section, key = section_key
        return self.values[section][key]

    def set(self, section: str, key: str, value) -> None:
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown config entry [{section}] {key}")
        self.values[section][key] = value

    def validate(self) -> None:
        from .bbn import SCHEDULES
        from .samplers import SAMPLER_KINDS

        if self["data", "num_classes"] < 2:
            raise ConfigError("[data] num_classes must be >= 2")
        if self["data", "beta"] < 1.0:
            raise ConfigError("[data] beta must be >= 1")
        if bool(self["data", "train_path"]) != bool(self["data", "test_path"]):
            raise ConfigError("[data] train_path and test_path must be set together")
        if self["train", "schedule"] not in SCHEDULES:
            raise ConfigError(
                f"[train] schedule must be one of {SCHEDULES}, "
                f"got {self['train', 'schedule']!r}"
            )
        if self["train", "rebalance_sampler"] not in SAMPLER_KINDS:
            raise ConfigError(
                f"[train] rebalance_sampler must be one of {SAMPLER_KINDS}"
            )
        self.optimizer()  # raises ConfigError on bad optimizer values

    def canonical(self) -> str:
        """Deterministic text form: sorted section.key=repr(value) lines."""
        lines = []
        for section in sorted(self.values):
            for key in sorted(self.values[section]):
                lines.append(f"{section}.{key}={self.values[section][key]!r}")
        return "\n".join(lines)

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(
            base_lr=self["optimizer", "base_lr"],
            momentum=self["optimizer", "momentum"],
            weight_decay=self["optimizer", "weight_decay"],
            warmup_epochs=self["optimizer", "warmup_epochs"],
            milestones=self["optimizer", "milestones"],
            decay_factor=self["optimizer", "decay_factor"],
        )

    def net_widths(self) -> tuple:
        """Unilateral network: trunk widths, branch width, classifier."""
        return (
            self["data", "dim"],
            *self["model", "trunk_widths"],
            self["model", "feature_dim"],
            self["data", "num_classes"],
        )

    def datasets(self) -> tuple[Dataset, Dataset]:
        """(train, test) pair: loaded from paths or synthesized."""
        if self["data", "train_path"]:
            return load_dataset(self["data", "train_path"]), load_dataset(
                self["data", "test_path"]
            )
        profile = ImbalanceProfile(
            num_classes=self["data", "num_classes"],
            n_max=self["data", "n_max"],
            beta=self["data", "beta"],
        )
        signal = self["data", "signal_dim"] or None
        spec = SyntheticSpec.random_means(
            num_classes=self["data", "num_classes"],
            dim=self["data", "dim"],
            mean_scale=self["data", "mean_scale"],
            noise_scale=self["data", "noise_scale"],
            seed=self["data", "data_seed"],
            signal_dim=signal,
        )
        train = synth_dataset(spec, make_counts(profile))
        test = make_balanced_test(spec, self["data", "test_per_class"])
        return train, test


def run_id(config: ExperimentConfig, command: str, seeds) -> str:
    """Stable content hash naming the run directory.

    The command participates so different experiments over one config
    never collide; any config or seed change changes the id.
    """
    h = hashlib.sha256()
    h.update(command.encode())
    h.update(b"\x00")
    h.update(config.canonical().encode())
    h.update(b"\x00")
    h.update(repr(list(seeds)).encode())
    return h.hexdigest()[:16]
