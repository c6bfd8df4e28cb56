"""JSON project configuration (schema version 1).

Example::

    {
      "version": 1,
      "output_dir": "out/jsc-s",
      "fanin_cap": 15,
      "dataset": {"path": "jsc.csv", "split_seed": 0},
      "network": {"input_features": 16, "hidden": [64, 32, 32, 32], "num_classes": 5,
                  "beta": 2, "gamma": 3, "seed": 0},
      "training": {"epochs": 1000, "batch_size": 1024, "lr": 0.1,
                   "lr_decay": 0.1, "lr_step": 300, "seed": 0},
      "export": {"registers": "default", "prune": true, "split_files": false},
      "exploration": {"hidden": [[64, 32, 32, 32]], "beta": [1, 2, 3], "gamma": [2, 3, 4]}
    }

``dataset`` may instead hold ``{"synthetic": {"samples": N, "seed": s, "spread": f}}``.
Optional network keys: beta_i, beta_o, gamma_i, gamma_o, binary_output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .topology import DEFAULT_FANIN_CAP, NetworkSpec, build_spec, validate_spec
from .trainer import TrainConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


class SpecValidationError(ConfigError):
    """Config is well-formed but the network violates topology rules (fan-in cap, adjacency)."""


@dataclass
class NetworkBlock:
    input_features: int
    hidden: list[int]
    num_classes: int
    beta: int
    gamma: int
    beta_i: int | None = None
    beta_o: int | None = None
    gamma_i: int | None = None
    gamma_o: int | None = None
    binary_output: bool = False
    seed: int = 0

    def to_spec(self, **overrides) -> NetworkSpec:
        kw = {k: getattr(self, k) for k in NETWORK_KEYS}
        kw.update(overrides)
        return build_spec(
            kw.pop("input_features"), kw.pop("hidden"), kw.pop("num_classes"), kw.pop("beta"), kw.pop("gamma"), **kw
        )


NETWORK_KEYS = tuple(NetworkBlock.__dataclass_fields__)


@dataclass
class ExplorationBlock:
    hidden: list[list[int]] = field(default_factory=list)
    beta: list[int] = field(default_factory=list)
    gamma: list[int] = field(default_factory=list)
    fanin_cap: int | None = None
    lut_budget: int | None = None
    train: bool = False
    epochs: int = 10


@dataclass
class ExportBlock:
    registers: str | list[int] = "default"
    prune: bool = True
    split_files: bool = False
    clock_period_ns: float | None = None


@dataclass
class ProjectConfig:
    network: NetworkBlock
    training: TrainConfig = field(default_factory=TrainConfig)
    export: ExportBlock = field(default_factory=ExportBlock)
    exploration: ExplorationBlock | None = None
    dataset: dict = field(default_factory=dict)
    output_dir: str = "out"
    fanin_cap: int = DEFAULT_FANIN_CAP
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def spec(self) -> NetworkSpec:
        return self.network.to_spec()

    @property
    def out_path(self) -> Path:
        return self.base_dir / self.output_dir

    def dataset_path(self) -> Path | None:
        p = self.dataset.get("path")
        return None if p is None else self.base_dir / p

    def to_dict(self) -> dict:
        t = self.training
        d = {
            "version": SCHEMA_VERSION,
            "output_dir": self.output_dir,
            "fanin_cap": self.fanin_cap,
            "dataset": self.dataset,
            "network": {k: getattr(self.network, k) for k in NETWORK_KEYS},
            "training": {
                "epochs": t.epochs,
                "batch_size": t.batch_size,
                "lr": t.lr,
                "lr_decay": t.lr_decay,
                "lr_step": t.lr_step,
                "seed": t.seed,
            },
            "export": dict(self.export.__dict__),
        }
        if self.exploration is not None:
            d["exploration"] = dict(self.exploration.__dict__)
        return d


def _take(block: dict, key: str, kind, path: str, errors: list[str], default=None, required=False, optional=False):
    if key not in block or (block[key] is None and optional):
        if required:
            errors.append(f"{path}.{key}: required")
        return default
    v = block[key]
    ok = isinstance(v, kind) and not (kind is int and isinstance(v, bool))
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v, ok = float(v), True
    if not ok:
        errors.append(f"{path}.{key}: expected {getattr(kind, '__name__', kind)}, got {type(v).__name__}")
        return default
    return v


def _int_list(v, path, errors, nested=False):
    if not isinstance(v, list) or not all(
        (isinstance(x, list) and _int_list(x, path, [], False) is not None) if nested else (isinstance(x, int) and not isinstance(x, bool))
        for x in v
    ):
        errors.append(f"{path}: expected a list of {'integer lists' if nested else 'integers'}")
        return None
    return v


def parse_config(doc: dict, base_dir=".") -> ProjectConfig:
    """Validate a config document; raises ConfigError listing every problem with its field path."""
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["config: expected a JSON object"])
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        errors.append(f"version: unsupported schema version {version!r}")

    net = doc.get("network")
    if not isinstance(net, dict):
        raise ConfigError(errors + ["network: required object"])
    unknown = set(net) - set(NETWORK_KEYS)
    if unknown:
        errors.append(f"network: unknown keys {sorted(unknown)}")
    nb = {}
    for key in ("input_features", "num_classes", "beta", "gamma"):
        nb[key] = _take(net, key, int, "network", errors, required=True)
    for key in ("beta_i", "beta_o", "gamma_i", "gamma_o"):
        nb[key] = _take(net, key, int, "network", errors, optional=True)
    nb["seed"] = _take(net, "seed", int, "network", errors, default=0)
    nb["binary_output"] = _take(net, "binary_output", bool, "network", errors, default=False)
    nb["hidden"] = _int_list(net.get("hidden", []), "network.hidden", errors)
    for key in ("input_features", "num_classes", "beta", "gamma", "beta_i", "beta_o", "gamma_i", "gamma_o"):
        if isinstance(nb.get(key), int) and nb[key] < 1:
            errors.append(f"network.{key}: must be >= 1")
    for key in ("beta", "beta_i", "beta_o"):
        if isinstance(nb.get(key), int) and nb[key] > 8:
            errors.append(f"network.{key}: must be <= 8")
    if nb["hidden"] is not None and any(w < 1 for w in nb["hidden"]):
        errors.append("network.hidden: widths must be >= 1")
    if nb["binary_output"] and nb.get("num_classes") not in (None, 2):
        errors.append("network.binary_output: requires num_classes == 2")

    tr = doc.get("training", {}) or {}
    tkw = dict(
        epochs=_take(tr, "epochs", int, "training", errors, default=1000),
        batch_size=_take(tr, "batch_size", int, "training", errors, default=1024),
        lr=_take(tr, "lr", float, "training", errors, default=0.1),
        lr_decay=_take(tr, "lr_decay", float, "training", errors, default=0.1),
        lr_step=_take(tr, "lr_step", int, "training", errors, default=300),
        seed=_take(tr, "seed", int, "training", errors, default=0),
    )
    training = None
    try:
        training = TrainConfig(**tkw)
    except ValueError as exc:
        errors.append(f"training: {exc}")

    ex = doc.get("export", {}) or {}
    registers = ex.get("registers", "default")
    if not (registers in ("default", "none") or _int_list(registers, "export.registers", []) is not None):
        errors.append("export.registers: expected 'default', 'none' or a list of boundary indices")
    export = ExportBlock(
        registers=registers,
        prune=_take(ex, "prune", bool, "export", errors, default=True),
        split_files=_take(ex, "split_files", bool, "export", errors, default=False),
        clock_period_ns=_take(ex, "clock_period_ns", float, "export", errors, optional=True),
    )

    exploration = None
    if doc.get("exploration") is not None:
        eb = doc["exploration"]
        exploration = ExplorationBlock(
            hidden=_int_list(eb.get("hidden", [nb["hidden"] or []]), "exploration.hidden", errors, nested=True) or [],
            beta=_int_list(eb.get("beta", [nb.get("beta")]), "exploration.beta", errors) or [],
            gamma=_int_list(eb.get("gamma", [nb.get("gamma")]), "exploration.gamma", errors) or [],
            fanin_cap=_take(eb, "fanin_cap", int, "exploration", errors, optional=True),
            lut_budget=_take(eb, "lut_budget", int, "exploration", errors, optional=True),
            train=_take(eb, "train", bool, "exploration", errors, default=False),
            epochs=_take(eb, "epochs", int, "exploration", errors, default=10),
        )

    ds = doc.get("dataset", {}) or {}
    if not isinstance(ds, dict):
        errors.append("dataset: expected an object")
        ds = {}
    fanin_cap = _take(doc, "fanin_cap", int, "config", errors, default=DEFAULT_FANIN_CAP)
    output_dir = _take(doc, "output_dir", str, "config", errors, default="out")

    if errors:
        raise ConfigError(errors)
    network = NetworkBlock(**nb)
    try:
        spec = network.to_spec()
    except ValueError as exc:
        raise ConfigError([f"network: {exc}"]) from exc
    problems = validate_spec(spec, fanin_cap)
    if problems:
        raise SpecValidationError([f"network.{p}" for p in problems])
    return ProjectConfig(
        network=network,
        training=training,
        export=export,
        exploration=exploration,
        dataset=ds,
        output_dir=output_dir,
        fanin_cap=fanin_cap,
        base_dir=Path(base_dir),
    )


def load_config(path) -> ProjectConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
    return parse_config(doc, base_dir=path.parent)


def dump_config(cfg: ProjectConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
