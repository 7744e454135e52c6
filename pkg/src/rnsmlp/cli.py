"""``rnsmlp`` command line: train, eval, verify, bench."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .data import ParseError
from .gadget_vm import GuardViolation
from .harness import atomic_write, circuits_csv, format_circuits, prepare_data, run_bench, run_training
from .nn import ConfigError, MlpModel, evaluate
from .verify import SCOPES, exit_code, run_verify

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("rnsmlp")


def _load(args):
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "float_baseline", None) is not None:
        changes["float_baseline"] = args.float_baseline == "on"
    return cfg.replace(**changes) if changes else cfg


def _write_report(path, report_json: str, text: str) -> None:
    atomic_write(path, report_json)
    atomic_write(Path(path).with_suffix(".txt"), text)


def cmd_train(args) -> int:
    cfg = _load(args)
    model, report = run_training(cfg, args.data)
    out = args.out or cfg.out
    if out:
        atomic_write(out, model.to_text())
    report_path = args.report or cfg.report
    if report_path:
        _write_report(report_path, report.to_json(), report.to_text())
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load(args)
    model = MlpModel.load(args.model)
    data, _ = prepare_data(cfg, args.data)
    if model.dims[0] != data.n_features or model.dims[-1] != data.n_classes:
        raise ConfigError(f"model dims {model.dims} do not fit the dataset")
    result = {"train_accuracy": evaluate(model, data.X_train, data.Y_train, cfg.batch_size),
              "test_accuracy": evaluate(model, data.X_test, data.Y_test, cfg.batch_size)}
    if args.report:
        atomic_write(args.report, json.dumps(result, indent=2) + "\n")
    print(f"train accuracy {result['train_accuracy']:.2%}\ntest accuracy  {result['test_accuracy']:.2%}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_verify(args.scope)
    for r in results:
        print(r.summary())
        for note in r.notes:
            print(f"    {note}")
    code = exit_code(results)
    print("verify: all checks passed" if code == 0 else f"verify: FAILED (exit {code})")
    return code


def cmd_bench(args) -> int:
    cfg = _load(args)
    rows, source = run_bench(cfg, args.data)
    table = format_circuits(rows)
    print(f"one training batch of {cfg.batch_size}, data {source}\n{table}")
    if args.report:
        doc = {"config": cfg.to_dict(), "data_source": source, "circuits": rows}
        _write_report(args.report, json.dumps(doc, indent=2, sort_keys=True) + "\n", table + "\n")
    if args.csv:
        atomic_write(args.csv, circuits_csv(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rnsmlp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", required=True,
                        help="config file, or the name of a bundled config")
        sp.add_argument("--data", help="directory holding the dataset CSV files")
        if seed:
            sp.add_argument("--seed", type=int)

    t = sub.add_parser("train", help="train an integer model")
    common(t)
    t.add_argument("--out", help="model file to write")
    t.add_argument("--report", help="JSON report (a .txt table is written beside it)")
    t.add_argument("--float-baseline", choices=("on", "off"))
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved model on the config's splits")
    common(e, seed=False)
    e.add_argument("--model", required=True)
    e.add_argument("--report")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="run oracle and invariant suites")
    v.add_argument("scope", nargs="?", default="all", choices=("all", *SCOPES))
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="per-circuit op counts of one training batch")
    common(b)
    b.add_argument("--report")
    b.add_argument("--csv")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GuardViolation, ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
