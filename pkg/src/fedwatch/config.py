"""Scenario configuration: INI-style parsing and canonical output.

A scenario file uses [section] headers, `key = value` lines and `#`
comments. Unknown sections or keys are errors, not warnings: a typo
must not silently run a different experiment. `serialize_config`
emits the canonical form with every default made explicit, and
parsing that output reproduces the same configuration.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, fields

from fedwatch.attack import MODES, PATTERNS, AttackSpec
from fedwatch.defense import DETECTOR_IDS, DefenseConfig
from fedwatch.engine import FederationConfig
from fedwatch.seeds import child_seed

TASK_KINDS = ("synthetic", "idx")


class ConfigError(ValueError):
    """Unparseable, unknown or out-of-range configuration input."""


@dataclass(frozen=True)
class TaskConfig:
    """What data the scenario trains on."""

    kind: str = "synthetic"
    classes: int = 10
    input_dim: int = 20
    samples_per_class: int = 200
    cluster_spread: float = 0.12
    test_fraction: float = 0.2
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"task kind must be one of {TASK_KINDS}")
        if self.kind == "synthetic":
            if self.classes < 2:
                raise ValueError("classes must be >= 2")
            if self.input_dim < 1 or self.samples_per_class < 1:
                raise ValueError("input_dim and samples_per_class must be >= 1")
            if self.cluster_spread < 0:
                raise ValueError("cluster_spread must be >= 0")
            if not 0.0 < self.test_fraction < 1.0:
                raise ValueError("test_fraction must be in (0, 1)")
        else:
            missing = [k for k in ("train_images", "train_labels",
                                   "test_images", "test_labels")
                       if not getattr(self, k)]
            if missing:
                raise ValueError(f"idx task requires {', '.join(missing)}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one experiment needs, seeds included."""

    task: TaskConfig
    hidden: tuple[int, ...]
    fed: FederationConfig
    concentration: float
    replicate_shards: bool
    attack: AttackSpec | None
    defense: DefenseConfig
    val_size: int
    val_noise: float
    seed: int
    out: str | None

    def __post_init__(self):
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden layer sizes must be >= 1")
        if self.concentration <= 0:
            raise ValueError("concentration must be > 0")
        if self.val_size < 1:
            raise ValueError("validation size must be >= 1")
        if self.val_noise < 0:
            raise ValueError("validation noise_scale must be >= 0")
        if self.attack is not None and self.attack.attacker_ids:
            bad = [i for i in self.attack.attacker_ids
                   if not 0 <= i < self.fed.workers]
            if bad:
                raise ValueError(f"attacker ids {bad} outside worker range")


# section -> key -> (type tag, default as string)
_SCHEMA: dict[str, dict[str, tuple[str, str]]] = {
    "task": {
        "kind": ("str", "synthetic"),
        "classes": ("int", "10"),
        "input_dim": ("int", "20"),
        "samples_per_class": ("int", "200"),
        "cluster_spread": ("float", "0.12"),
        "test_fraction": ("float", "0.2"),
        "train_images": ("str", ""),
        "train_labels": ("str", ""),
        "test_images": ("str", ""),
        "test_labels": ("str", ""),
    },
    "model": {
        "hidden": ("intlist", "16"),
    },
    "federation": {
        "workers": ("int", None),
        "rounds": ("int", None),
        "lr": ("float", "0.05"),
        "local_epochs": ("int", "6"),
        "batch_size": ("int", "32"),
        "divide_by_accepted": ("bool", "false"),
        "participants_per_round": ("int", "0"),
        "concentration": ("float", "100.0"),
        "replicate_shards": ("bool", "false"),
    },
    "attack": {
        "attackers": ("intlist", ""),
        "mode": ("str", "untargeted"),
        "pattern": ("str", "static"),
        "start_round": ("int", "0"),
        "pretence_rounds": ("int", "0"),
        "attack_probability": ("float", "0.5"),
        "collude": ("bool", "false"),
        "mm_scale": ("float", "0.5"),
    },
    "defense": {
        "detectors": ("strlist", "a1,a2,a3"),
        "warmup_rounds": ("int", "10"),
        "window": ("int", "10"),
        "sigma_mult": ("float", "4.0"),
        "rate_side": ("str", "upper"),
        "exclude_rejected": ("bool", "false"),
        "min_evaluable": ("int", "3"),
        "sim_mean_min": ("float", "0.9"),
        "sim_slope_min": ("float", "-0.01"),
        "err_slope_max": ("float", "0.01"),
    },
    "validation": {
        "size": ("int", "50"),
        "noise_scale": ("float", "0.05"),
    },
    "run": {
        "seed": ("int", "0"),
        "out": ("str", ""),
    },
}

_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _convert(section: str, key: str, kind: str, raw: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError(f"not a boolean: {raw!r}")
            return _BOOL_WORDS[raw.lower()]
        if kind == "intlist":
            return tuple(int(v) for v in raw.split(",") if v.strip() != "")
        if kind == "strlist":
            return tuple(v.strip() for v in raw.split(",") if v.strip() != "")
        return raw
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def parse_config(text: str) -> ScenarioConfig:
    """Parse scenario text; every problem raises ConfigError."""
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None

    values: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    for section, keys in _SCHEMA.items():
        values[section] = {}
        for key, (kind, default) in keys.items():
            if parser.has_option(section, key):
                raw = parser.get(section, key)
            elif default is None:
                raise ConfigError(f"missing required key [{section}] {key}")
            else:
                raw = default
            values[section][key] = _convert(section, key, kind, raw)

    try:
        return _build(values)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _build(v: dict[str, dict[str, object]]) -> ScenarioConfig:
    task = TaskConfig(**v["task"])
    fed_keys = {f.name for f in fields(FederationConfig)}
    fed = FederationConfig(**{k: val for k, val in v["federation"].items()
                              if k in fed_keys})
    seed = v["run"]["seed"]
    att = v["attack"]
    attack = None
    if att["attackers"]:
        attack = AttackSpec(
            attacker_ids=att["attackers"],
            mode=att["mode"],
            pattern=att["pattern"],
            start_round=att["start_round"],
            pretence_rounds=att["pretence_rounds"],
            attack_probability=att["attack_probability"],
            collude=att["collude"],
            mm_scale=att["mm_scale"],
            seed=child_seed(seed, "attack"),
        )
    defense = DefenseConfig(
        detectors=v["defense"]["detectors"],
        warmup_rounds=v["defense"]["warmup_rounds"],
        window=v["defense"]["window"],
        sigma_mult=v["defense"]["sigma_mult"],
        rate_side=v["defense"]["rate_side"],
        exclude_rejected=v["defense"]["exclude_rejected"],
        min_evaluable=v["defense"]["min_evaluable"],
        sim_mean_min=v["defense"]["sim_mean_min"],
        sim_slope_min=v["defense"]["sim_slope_min"],
        err_slope_max=v["defense"]["err_slope_max"],
    )
    return ScenarioConfig(
        task=task,
        hidden=v["model"]["hidden"],
        fed=fed,
        concentration=v["federation"]["concentration"],
        replicate_shards=v["federation"]["replicate_shards"],
        attack=attack,
        defense=defense,
        val_size=v["validation"]["size"],
        val_noise=v["validation"]["noise_scale"],
        seed=seed,
        out=(v["run"]["out"] or None),
    )


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical text form with every value explicit.

    parse_config(serialize_config(cfg)) reconstructs cfg, and the
    output is a fixed point of parse-then-serialize.
    """
    att = cfg.attack
    values = {
        "task": {k: getattr(cfg.task, k) for k in _SCHEMA["task"]},
        "model": {"hidden": cfg.hidden},
        "federation": {
            **{k: getattr(cfg.fed, k)
               for k in _SCHEMA["federation"]
               if k not in ("concentration", "replicate_shards")},
            "concentration": cfg.concentration,
            "replicate_shards": cfg.replicate_shards,
        },
        "attack": {
            "attackers": att.attacker_ids if att else (),
            "mode": att.mode if att else "untargeted",
            "pattern": att.pattern if att else "static",
            "start_round": att.start_round if att else 0,
            "pretence_rounds": att.pretence_rounds if att else 0,
            "attack_probability": att.attack_probability if att else 0.5,
            "collude": att.collude if att else False,
            "mm_scale": att.mm_scale if att else 0.5,
        },
        "defense": {k: getattr(cfg.defense, k) for k in _SCHEMA["defense"]},
        "validation": {"size": cfg.val_size, "noise_scale": cfg.val_noise},
        "run": {"seed": cfg.seed, "out": cfg.out or ""},
    }
    buf = io.StringIO()
    for section, keys in _SCHEMA.items():
        buf.write(f"[{section}]\n")
        for key in keys:
            buf.write(f"{key} = {_fmt_value(values[section][key])}\n")
        buf.write("\n")
    return buf.getvalue()


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(float(value))
    return str(value)
