"""Tabular dataset loading and the preprocessing pipeline.

Raw CSV columns become signed ``beta``-bit integer features: zeros in flagged
columns are treated as missing, numeric columns go through a quantile
transform fit on the training rows, and the resulting [0, 1] values are
rounded onto the signed grid.  Categorical columns are one-hot encoded.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.preprocessing import QuantileTransformer

DATA_DIR_ENV = "RNSMLP_DATA_DIR"


class ParseError(ValueError):
    def __init__(self, msg: str, row: int | None = None, column: str | None = None):
        self.row, self.column = row, column
        where = ", ".join(p for p in (row is not None and f"row {row}" or "",
                                      column and f"column {column!r}" or "") if p)
        super().__init__(f"{msg} ({where})" if where else msg)


class DegenerateFeature(UserWarning):
    """A feature is constant on the training rows and carries no information."""


class EmptySplit(ValueError):
    pass


@dataclass
class Dataset:
    features: pd.DataFrame
    labels: np.ndarray
    categorical: tuple[str, ...] = ()
    name: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if len(self.features) != len(self.labels):
            raise ValueError("feature and label row counts differ")
        if len(self.labels) and self.n_classes < 2:
            raise ValueError("a dataset needs at least two classes")

    def __len__(self):
        return len(self.labels)

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def load_csv(path, label_column: str, categorical=(), name: str | None = None) -> Dataset:
    """Read a headed CSV; non-numeric columns are treated as categorical."""
    try:
        df = pd.read_csv(path, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot parse {path}: {exc}") from exc
    if label_column not in df.columns:
        raise ParseError(f"label column {label_column!r} missing", column=label_column)
    labels = df.pop(label_column)
    if labels.isna().any():
        raise ParseError("missing label", row=int(labels.isna().to_numpy().argmax()) + 2,
                         column=label_column)
    cats = set(categorical)
    unknown = cats - set(df.columns)
    if unknown:
        raise ParseError(f"unknown categorical columns {sorted(unknown)}")
    for col in df.columns:
        if col not in cats and df[col].dtype == object:
            numeric = pd.to_numeric(df[col], errors="coerce")
            bad = numeric.isna() & df[col].notna()
            if bad.mean() < 0.5:
                row = int(bad.to_numpy().argmax()) + 2
                raise ParseError(f"non-numeric value {df[col][row - 2]!r}", row=row, column=col)
            cats.add(col)
    categorical = tuple(c for c in df.columns if c in cats)
    return Dataset(df, labels.to_numpy(), categorical, name or Path(path).stem)


@dataclass(frozen=True)
class PreprocessSpec:
    beta: int = 4
    zero_as_missing: tuple[str, ...] = ()
    n_quantiles: int | None = None  # None: min(#train rows, 1000)
    linear_columns: tuple[str, ...] = ()  # min-max scaled instead of quantile transformed
    center_columns: tuple[str, ...] = ()  # mean removed, scaled by max deviation
    test_fraction: float = 0.2
    split_seed: int = 0

    def validate(self) -> None:
        if not 1 <= self.beta <= 8:
            raise ValueError("beta must be in [1, 8]")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test fraction must be in (0, 1)")
        if self.n_quantiles is not None and self.n_quantiles < 2:
            raise ValueError("need at least two quantiles")


@dataclass
class PreparedData:
    X_train: np.ndarray
    Y_train: np.ndarray
    X_test: np.ndarray
    Y_test: np.ndarray
    F_train: np.ndarray  # real-valued features before rounding, centered like the grid
    F_test: np.ndarray
    feature_names: list[str]
    classes: np.ndarray
    dropped: list[str] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.X_train.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def to_csv(self, path) -> None:
        cols = self.feature_names + ["class", "split"]
        rows = [np.column_stack([X, Y.argmax(1), np.full(len(X), s)])
                for X, Y, s in ((self.X_train, self.Y_train, 0), (self.X_test, self.Y_test, 1))]
        pd.DataFrame(np.vstack(rows), columns=cols).to_csv(path, index=False)


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Shuffled train/test indices; the test side gets ``ceil(n * fraction)`` rows."""
    n_test = math.ceil(round(n * fraction, 9))
    if n_test == 0 or n_test == n:
        raise EmptySplit(f"a {fraction:.0%} split of {n} rows leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def to_grid(q, beta: int) -> np.ndarray:
    """[0, 1] values onto the signed ``beta``-bit grid."""
    q = np.clip(np.asarray(q, dtype=np.float64), 0.0, 1.0)
    return np.rint(q * (2 ** beta - 1)).astype(np.int64) - 2 ** (beta - 1)


def one_hot(idx, n: int) -> np.ndarray:
    return np.eye(n, dtype=np.int64)[np.asarray(idx)]


def _fill_missing(col: pd.Series, train: np.ndarray, zero_missing: bool) -> pd.Series:
    col = col.astype(np.float64)
    if zero_missing:
        nonzero = col[train][(col[train] != 0) & col[train].notna()]
        col = col.where(col != 0, nonzero.mean() if len(nonzero) else 0.0)
    return col.fillna(col[train].mean())


def preprocess(ds: Dataset, spec: PreprocessSpec, strict: bool = False) -> PreparedData:
    """Split, fit the transforms on the training rows and emit integer features."""
    spec.validate()
    if len(ds) == 0:
        raise EmptySplit("empty dataset")
    tr_idx, te_idx = split_indices(len(ds), spec.test_fraction, spec.split_seed)
    train = np.zeros(len(ds), dtype=bool)
    train[tr_idx] = True
    if ds.categorical and spec.beta < 2:
        raise ValueError("one-hot features need beta >= 2")

    blocks, names, dropped = [], [], []
    for col in ds.features.columns:
        raw = ds.features[col]
        if col in ds.categorical:
            cats = sorted(raw[train].dropna().astype(str).unique())
            if len(cats) < 2:
                dropped.append(col)
                continue
            vals = raw.astype(str).where(raw.notna(), None)
            block = np.column_stack([(vals == c).to_numpy(dtype=np.float64) for c in cats])
            blocks.append(block)
            names.extend(f"{col}={c}" for c in cats)
            continue
        values = _fill_missing(raw, train, col in spec.zero_as_missing).to_numpy()
        if np.ptp(values[train]) == 0:
            dropped.append(col)
            continue
        if col in spec.center_columns:
            dev = values - values[train].mean()
            q = 0.5 + dev / (2 * np.abs(dev[train]).max())
        elif col in spec.linear_columns:
            lo, hi = values[train].min(), values[train].max()
            q = (values - lo) / (hi - lo)
        else:
            nq = spec.n_quantiles or min(int(train.sum()), 1000)
            qt = QuantileTransformer(n_quantiles=min(nq, int(train.sum())), subsample=None)
            qt.fit(values[train, None])
            q = qt.transform(values[:, None])[:, 0]
        blocks.append(np.clip(q, 0.0, 1.0)[:, None])
        names.append(col)

    for col in dropped:
        msg = f"feature {col!r} is constant on the training rows; dropped"
        if strict:
            raise DegenerateFeature(msg)
        warnings.warn(msg, DegenerateFeature, stacklevel=2)
    if not blocks:
        raise ValueError("no informative features left")

    Q = np.hstack(blocks)
    onehot_cols = np.array([("=" in n and n.split("=", 1)[0] in ds.categorical) for n in names])
    X = np.where(onehot_cols, Q.astype(np.int64), to_grid(Q, spec.beta))
    # bias-free models need centered inputs; the integer grid is centered too
    F = np.where(onehot_cols, Q, Q - 0.5)
    classes = ds.classes
    Y = one_hot(np.searchsorted(classes, ds.labels), len(classes))
    return PreparedData(X[tr_idx], Y[tr_idx], X[te_idx], Y[te_idx], F[tr_idx], F[te_idx],
                        names, classes, dropped)


def split_and_batch(X, Y, fraction: float, seed: int, batch_size: int = 8):
    """First-epoch training batches plus the held-out test set.

    Later epochs reshuffle with the same seeded generator the trainer uses;
    a trailing partial batch is dropped.
    """
    from .nn import epoch_batches

    X, Y = np.asarray(X), np.asarray(Y)
    tr, te = split_indices(len(X), fraction, seed)
    rng = np.random.default_rng([seed, 1])
    batches = [(X[tr][idx], Y[tr][idx]) for idx in epoch_batches(len(tr), batch_size, rng)]
    return batches, (X[te], Y[te])


@dataclass(frozen=True)
class DatasetInfo:
    key: str
    filename: str
    label_column: str = "class"
    categorical: tuple[str, ...] = ()
    zero_as_missing: tuple[str, ...] = ()
    test_fraction: float = 0.2
    shape: tuple[int, int, int] = (0, 0, 0)  # samples, features, classes
    bundled: bool = False


REGISTRY = {d.key: d for d in (
    DatasetInfo("bcancer", "breast_cancer.csv", shape=(569, 30, 2), bundled=True),
    DatasetInfo("tcancer", "thyroid_cancer.csv", test_fraction=0.3, shape=(383, 16, 2)),
    DatasetInfo("diabetes", "diabetes.csv", shape=(768, 8, 2), bundled=True,
                zero_as_missing=("glucose", "blood_pressure", "skin_thickness", "insulin", "bmi")),
    DatasetInfo("wine", "wine.csv", shape=(178, 13, 3), bundled=True),
    DatasetInfo("vcolumn", "vertebral_column.csv", shape=(310, 6, 3)),
    DatasetInfo("parkinsons", "parkinsons.csv", shape=(197, 22, 2)),
    DatasetInfo("hdisease", "heart_disease.csv", shape=(303, 13, 2), bundled=True),
    DatasetInfo("hfailure", "heart_failure.csv", shape=(299, 12, 2)),
)}


def find_dataset(key_or_path, data_dir=None) -> Path:
    """Resolve a registry key or a path to an existing CSV file."""
    p = Path(key_or_path)
    if p.suffix == ".csv" and p.exists():
        return p
    info = REGISTRY.get(str(key_or_path))
    if info is None:
        raise FileNotFoundError(f"no dataset {key_or_path!r}")
    for d in (data_dir, os.environ.get(DATA_DIR_ENV)):
        if d and (Path(d) / info.filename).exists():
            return Path(d) / info.filename
    if info.bundled:
        return Path(str(resources.files("rnsmlp") / "datasets" / info.filename))
    raise FileNotFoundError(
        f"{info.filename} is not bundled; place it in ${DATA_DIR_ENV} or pass --data")


def load_registered(key: str, data_dir=None) -> Dataset:
    info = REGISTRY[key]
    return load_csv(find_dataset(key, data_dir), info.label_column, info.categorical, key)
