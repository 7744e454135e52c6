"""Flat key-value experiment configuration (a TOML subset without tables)."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .data import REGISTRY, PreprocessSpec
from .nn import ConfigError, Hyperparams


@dataclass
class TrainConfig:
    dataset: str
    hidden: tuple[int, ...] = ()
    label_column: str = "class"
    categorical: tuple[str, ...] = ()
    zero_as_missing: tuple[str, ...] = ()
    linear_columns: tuple[str, ...] = ()
    center_columns: tuple[str, ...] = ()
    n_quantiles: int = 0  # 0: min(#train rows, 1000)
    test_fraction: float = 0.2
    split_seed: int = 0
    alpha: int = 8
    beta: int = 4
    Gamma: int = 7
    relu_cap: int = 14
    kappa: int = 4
    width: int = 4
    epochs: int = 1
    batch_size: int = 8
    seed: int = 0
    scaling: str = "approx"
    eval_every: str = "batch"
    float_baseline: bool = False
    out: str = ""
    report: str = ""
    source: str = field(default="", compare=False)

    @property
    def hyperparams(self) -> Hyperparams:
        return Hyperparams(self.alpha, self.beta, self.Gamma, self.relu_cap, self.kappa, self.width)

    @property
    def preprocess_spec(self) -> PreprocessSpec:
        return PreprocessSpec(self.beta, self.zero_as_missing, self.n_quantiles or None,
                              self.linear_columns, self.center_columns,
                              self.test_fraction, self.split_seed)

    def validate(self) -> None:
        try:
            self.hyperparams.validate()
            self.preprocess_spec.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.scaling not in ("approx", "exact"):
            raise ConfigError("scaling must be 'approx' or 'exact'")
        if self.eval_every not in ("batch", "epoch"):
            raise ConfigError("eval_every must be 'batch' or 'epoch'")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden layer sizes must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("source")
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def replace(self, **changes) -> "TrainConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg


_FIELDS = {f.name: f for f in fields(TrainConfig) if f.name != "source"}


def _coerce(key: str, value, kind: str):
    if kind.startswith("tuple"):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list")
        return tuple(int(v) for v in value) if "int" in kind else tuple(str(v) for v in value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true or false")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string")
    return value


def config_from_dict(raw: dict, source: str = "") -> TrainConfig:
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "dataset" not in raw:
        raise ConfigError("missing required key 'dataset'")
    values = {k: _coerce(k, v, str(_FIELDS[k].type)) for k, v in raw.items()}
    info = REGISTRY.get(values["dataset"])
    if info is not None:
        values.setdefault("categorical", info.categorical)
        values.setdefault("zero_as_missing", info.zero_as_missing)
        values.setdefault("test_fraction", info.test_fraction)
        values.setdefault("label_column", info.label_column)
    cfg = TrainConfig(source=source, **values)
    cfg.validate()
    return cfg


def parse_config(text: str, source: str = "") -> TrainConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source or 'config'}: {exc}") from exc
    nested = [k for k, v in raw.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found tables {nested}")
    return config_from_dict(raw, source)


def load_config(path) -> TrainConfig:
    p = Path(path)
    if not p.exists():
        bundled = resources.files("rnsmlp") / "configs" / f"{path}.toml"
        if bundled.is_file():
            return parse_config(bundled.read_text(), str(path))
        raise ConfigError(f"config file {path} not found")
    return parse_config(p.read_text(), str(p))


BUNDLED_CONFIGS = ("bcancer", "tcancer", "diabetes", "wine", "vcolumn",
                   "parkinsons", "hdisease", "hfailure")
