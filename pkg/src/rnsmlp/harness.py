"""Experiment pipeline shared by the CLI: data preparation, integer and
float training runs, one-batch op-count benchmarks and their reports."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data import REGISTRY, PreparedData, find_dataset, load_csv, one_hot, preprocess
from .float_ref import float_reference_train
from .gadget_vm import OpStats
from .nn import MlpModel, forward_base, train, train_step

REPORT_VERSION = 1


def prepare_data(cfg: TrainConfig, data_dir=None) -> tuple[PreparedData, str]:
    path = find_dataset(cfg.dataset, data_dir)
    ds = load_csv(path, cfg.label_column, cfg.categorical, cfg.dataset)
    return preprocess(ds, cfg.preprocess_spec), str(path)


def model_dims(cfg: TrainConfig, n_features: int, n_classes: int) -> tuple[int, ...]:
    return (n_features, *cfg.hidden, n_classes)


def build_model(cfg: TrainConfig, n_features: int, n_classes: int) -> MlpModel:
    """Initialize and validate; raises ConfigError before any training work."""
    return MlpModel.initialize(model_dims(cfg, n_features, n_classes), cfg.hyperparams, cfg.seed)


def synthetic_batch(cfg: TrainConfig, seed: int = 0):
    """A random batch shaped like the registered dataset, for shape-only checks."""
    info = REGISTRY[cfg.dataset]
    _, n_features, n_classes = info.shape
    rng = np.random.default_rng(seed)
    lo, hi = cfg.hyperparams.input_range
    X = rng.integers(lo, hi + 1, size=(cfg.batch_size, n_features))
    return X, one_hot(rng.integers(0, n_classes, cfg.batch_size), n_classes)


def first_batch(cfg: TrainConfig, data_dir=None, allow_synthetic: bool = False):
    """The first training batch and where it came from."""
    try:
        data, path = prepare_data(cfg, data_dir)
    except FileNotFoundError:
        if not allow_synthetic or cfg.dataset not in REGISTRY:
            raise
        X, Y = synthetic_batch(cfg, cfg.seed)
        return X, Y, "synthetic"
    if len(data.X_train) < cfg.batch_size:
        raise ValueError("training split smaller than one batch")
    return data.X_train[:cfg.batch_size], data.Y_train[:cfg.batch_size], path


def circuit_order(n_layers: int) -> list[str]:
    names = [f"forward_{l}" for l in range(1, n_layers + 1)] + ["loss"]
    for l in range(n_layers, 0, -1):
        names.append(f"gradient_{l}")
        if l > 1:
            names.append(f"error_{l}")
        names.append(f"update_{l}")
    return names


def circuit_table(stats: dict[str, OpStats], n_layers: int) -> list[dict]:
    names = [n for n in circuit_order(n_layers) if n in stats]
    total_lk = sum(stats[n].lookup_count for n in names) or 1
    total_ln = sum(stats[n].linear_op_count for n in names) or 1
    return [{"circuit": n,
             "lookups": stats[n].lookup_count,
             "linear_ops": stats[n].linear_op_count,
             "lookup_share": 100.0 * stats[n].lookup_count / total_lk,
             "linear_share": 100.0 * stats[n].linear_op_count / total_ln}
            for n in names]


def scale_error_summary(records, Gamma: int) -> dict:
    out, scale = {}, 2 ** (Gamma - 1)
    for tag in sorted({r.tag for r in records}):
        rs = [r for r in records if r.tag == tag]
        n = sum(r.count for r in rs)
        mean = sum(r.mean_abs_error * r.count for r in rs) / n
        mx = max(r.max_abs_error for r in rs)
        out[tag] = {"mean_abs": mean, "max_abs": mx, "mean_rel": mean / scale,
                    "max_rel": mx / scale, "count": n}
    if records:
        n = sum(r.count for r in records)
        out["overall"] = {"mean_abs": sum(r.mean_abs_error * r.count for r in records) / n,
                          "max_abs": max(r.max_abs_error for r in records), "count": n}
    return out


@dataclass
class RunReport:
    config: dict
    seed: int
    dims: list[int]
    data_source: str
    bases: dict[str, str] = field(default_factory=dict)
    dropped_features: list[str] = field(default_factory=list)
    integer_history: list[dict] = field(default_factory=list)
    float_history: list[dict] | None = None
    scale_errors: dict = field(default_factory=dict)
    circuits: list[dict] = field(default_factory=list)
    best: dict = field(default_factory=dict)
    version: int = REPORT_VERSION

    @property
    def best_test_accuracy(self) -> float:
        if self.best:
            return self.best["test_accuracy"]
        return max((h["test_accuracy"] for h in self.integer_history), default=float("nan"))

    @property
    def best_float_test_accuracy(self) -> float | None:
        if self.float_history is None:
            return None
        if "float_test_accuracy" in self.best:
            return self.best["float_test_accuracy"]
        return max((h["test_accuracy"] for h in self.float_history), default=float("nan"))

    def to_dict(self) -> dict:
        return {"version": self.version, "seed": self.seed, "config": self.config,
                "dims": self.dims, "data_source": self.data_source, "bases": self.bases,
                "dropped_features": self.dropped_features,
                "best_test_accuracy": self.best_test_accuracy, "best": self.best,
                "best_float_test_accuracy": self.best_float_test_accuracy,
                "integer_history": self.integer_history, "float_history": self.float_history,
                "scale_errors": self.scale_errors, "circuits": self.circuits}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        keys = ("config", "seed", "dims", "data_source", "bases", "dropped_features",
                "integer_history", "float_history", "scale_errors", "circuits", "best", "version")
        return cls(**{k: d[k] for k in keys})

    def to_text(self) -> str:
        lines = [f"dataset {self.config.get('dataset')}  seed {self.seed}  "
                 f"dims {'-'.join(map(str, self.dims))}  data {self.data_source}"]
        if self.dropped_features:
            lines.append("dropped constant features: " + ", ".join(self.dropped_features))
        lines.append("")
        floats = {h["epoch"]: h for h in self.float_history or []}
        head = f"{'epoch':>5}  {'train':>7}  {'test':>7}"
        if floats:
            head += f"  {'f32 train':>9}  {'f32 test':>8}"
        lines.append(head)
        for h in self.integer_history:
            row = f"{h['epoch']:>5}  {h['train_accuracy']:>7.2%}  {h['test_accuracy']:>7.2%}"
            if h["epoch"] in floats:
                f = floats[h["epoch"]]
                row += f"  {f['train_accuracy']:>9.2%}  {f['test_accuracy']:>8.2%}"
            lines.append(row)
        where = f" (after batch {self.best['step']})" if self.best else ""
        lines.append(f"best integer test accuracy {self.best_test_accuracy:.2%}{where}")
        if self.best_float_test_accuracy is not None:
            lines.append(f"best float32 test accuracy {self.best_float_test_accuracy:.2%}")
        if self.scale_errors:
            lines += ["", f"{'scaling error':<14}  {'mean abs':>8}  {'max abs':>7}"]
            for tag, s in self.scale_errors.items():
                lines.append(f"{tag:<14}  {s['mean_abs']:>8.3f}  {s['max_abs']:>7}")
        if self.circuits:
            lines += ["", format_circuits(self.circuits)]
        return "\n".join(lines) + "\n"


def format_circuits(rows: list[dict]) -> str:
    lines = [f"{'circuit':<12}  {'lookups':>9}  {'share':>7}  {'linear':>9}  {'share':>7}"]
    for r in rows:
        lines.append(f"{r['circuit']:<12}  {r['lookups']:>9}  {r['lookup_share']:>6.2f}%  "
                     f"{r['linear_ops']:>9}  {r['linear_share']:>6.2f}%")
    tl = sum(r["lookups"] for r in rows)
    tn = sum(r["linear_ops"] for r in rows)
    lines.append(f"{'total':<12}  {tl:>9}  {100:>6.2f}%  {tn:>9}  {100:>6.2f}%")
    return "\n".join(lines)


def circuits_csv(rows: list[dict]) -> str:
    out = ["circuit,lookups,lookup_share,linear_ops,linear_share"]
    out += [f"{r['circuit']},{r['lookups']},{r['lookup_share']:.4f},"
            f"{r['linear_ops']},{r['linear_share']:.4f}" for r in rows]
    return "\n".join(out) + "\n"


def run_training(cfg: TrainConfig, data_dir=None, float_baseline: bool | None = None,
                 model: MlpModel | None = None) -> tuple[MlpModel, RunReport]:
    data, path = prepare_data(cfg, data_dir)
    if model is None:
        model = build_model(cfg, data.n_features, data.n_classes)
    result = train(model, data.X_train, data.Y_train, data.X_test, data.Y_test,
                   cfg.epochs, cfg.batch_size, cfg.seed, cfg.scaling, eval_every=cfg.eval_every)
    report = RunReport(cfg.to_dict(), cfg.seed, list(model.dims), path,
                       dropped_features=list(data.dropped))
    report.bases = {f"forward_{l}": str(forward_base(model, l)) for l in range(1, model.n_layers + 1)}
    report.best = {"test_accuracy": result.best_test_accuracy, "step": result.best_step,
                   "batches": result.batches_run}
    report.integer_history = [{"epoch": h.epoch, "train_accuracy": h.train_accuracy,
                               "test_accuracy": h.test_accuracy} for h in result.history]
    report.scale_errors = scale_error_summary(result.scale_errors, cfg.Gamma)
    report.circuits = circuit_table(result.batch_stats, model.n_layers)
    if float_baseline if float_baseline is not None else cfg.float_baseline:
        fr = float_reference_train(data.F_train, data.Y_train, data.F_test, data.Y_test,
                                   cfg.hidden, cfg.epochs, cfg.batch_size, cfg.seed,
                                   eval_every=cfg.eval_every)
        report.best["float_test_accuracy"] = fr.best_test_accuracy
        report.float_history = [{"epoch": e + 1, "train_accuracy": a, "test_accuracy": b}
                                for e, (a, b) in enumerate(zip(fr.train_accuracy, fr.test_accuracy))]
    return result.model, report


def run_bench(cfg: TrainConfig, data_dir=None, allow_synthetic: bool = True):
    """Op counts of one training batch, per circuit."""
    X, Y, source = first_batch(cfg, data_dir, allow_synthetic)
    model = build_model(cfg, X.shape[1], Y.shape[1])
    _, trace = train_step(model, X, Y, cfg.scaling)
    return circuit_table(trace.op_stats, model.n_layers), source


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
