"""Acceptance criteria, one test per criterion.

Each test records a pass/fail line that the conftest hook prints at the end
of the session.  Accuracy targets come from the published results table.
Datasets that are not present on disk (see ``RNSMLP_DATA_DIR``) count as
failures for the criteria that need them.
"""

from functools import lru_cache

import numpy as np

from rnsmlp.cli import main
from rnsmlp.config import BUNDLED_CONFIGS, load_config
from rnsmlp.data import find_dataset
from rnsmlp.finite_ring import BASES_4BIT, EXAMPLE_BASE, to_rns
from rnsmlp.gadget_vm import GuardViolation
from rnsmlp.harness import build_model, first_batch, prepare_data, run_bench, run_training
from rnsmlp.nn import _exp_table, train_step
from rnsmlp.reference import reference_step
from rnsmlp.verify import verify_conversions, verify_loss, verify_matmul, verify_scaling

RESULTS: dict[str, tuple[bool, str]] = {}

PUBLISHED = {"bcancer": 98.3, "tcancer": 100.0, "diabetes": 85.1, "wine": 100.0,
             "vcolumn": 80.7, "parkinsons": 89.7, "hdisease": 86.9, "hfailure": 90.0}
SEEDS = range(5)


def record(key: str, ok: bool, detail: str) -> None:
    RESULTS[key] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")


def available(key: str) -> bool:
    try:
        find_dataset(key)
        return True
    except FileNotFoundError:
        return False


@lru_cache(maxsize=None)
def best_accuracies(key: str, scaling: str = "approx") -> tuple:
    out = []
    for seed in SEEDS:
        cfg = load_config(key).replace(seed=seed, scaling=scaling)
        _, report = run_training(cfg)
        out.append((report.best_test_accuracy, report.scale_errors.get("overall")))
    return tuple(out)


def median_best(key: str, scaling: str = "approx") -> float:
    return 100 * float(np.median([a for a, _ in best_accuracies(key, scaling)]))


def test_01_conversion_oracle():
    res = verify_conversions(round_trips=100_000)
    counts = [n for n in res.notes if n.startswith(("rns2mrns", "round trip"))]
    record("1 conversion oracle", res.ok and res.guard_violations == 0,
           "; ".join(counts[:2]) + f"; {len(counts) - 2} catalog bases x 1e5 round trips")
    assert "rns2mrns {5, 7, 8}: 280/280" in res.notes
    assert "rns2mrns {15, 14}: 210/210" in res.notes
    assert res.ok


def test_02_example_anchor():
    x = to_rns(np.array([99]), EXAMPLE_BASE)
    from rnsmlp.finite_ring import rns2mrns
    rns, mrns = x.digits[:, 0].tolist(), rns2mrns(x).digits[:, 0].tolist()
    ok = rns == [4, 1, 3] and mrns == [4, 5, 2]
    record("2 conversion anchor", ok, f"99 -> RNS {tuple(rns)}, MRNS {tuple(mrns)}")
    assert ok


def test_03_matmul_exactness():
    res = verify_matmul(trials=1000)
    record("3 matmul exactness", res.ok and res.guard_violations == 0,
           f"{res.passed}/{res.checks} instances over 10 bases, {res.guard_violations} guard violations")
    assert res.ok and res.guard_violations == 0


def test_04_shift2msbs_anchor():
    res = verify_scaling(trials=200)
    record("4 Shift2MSBs anchor", res.anchor_mismatches == 0 and res.ok,
           "(611, 353, 19) over {13, 15, 14}, gamma 5 -> (25, 14, 0), shift 5"
           + ("" if res.ok else f"; {res.notes}"))
    assert res.anchor_mismatches == 0 and res.ok


def test_05_sign_gadget():
    res = verify_conversions(round_trips=1)
    signs = [n for n in res.notes if n.startswith("sign")]
    zero = to_rns(np.array([0, 1, -1]), BASES_4BIT[0])
    from rnsmlp.finite_ring import sign_rns
    zero_ok = sign_rns(zero).tolist() == [0, 1, -1]
    ok = len(signs) == 3 and all(n.split(": ")[1].split("/")[0] == n.split("/")[1] for n in signs)
    record("5 sign gadget", ok and zero_ok, "; ".join(signs))
    assert ok and zero_ok


def test_06_guard_cleanliness():
    lines, ok = [], True
    for key in BUNDLED_CONFIGS:
        cfg = load_config(key)
        X, Y, source = first_batch(cfg, allow_synthetic=True)
        model = build_model(cfg, X.shape[1], Y.shape[1])
        try:
            train_step(model, X, Y)
            lines.append(f"{key}:{'synthetic' if source == 'synthetic' else 'data'}")
        except GuardViolation as exc:
            ok = False
            lines.append(f"{key}: {exc}")
    record("6 guard cleanliness", ok, "0 violations; " + ", ".join(lines))
    assert ok


def test_07_accuracy_reproduction():
    within, detail, medians = 0, [], {}
    for key, target in PUBLISHED.items():
        if not available(key):
            detail.append(f"{key} unavailable")
            continue
        med = medians[key] = median_best(key)
        hit = abs(med - target) <= 3
        within += hit
        detail.append(f"{key} {med:.1f} vs {target}{'' if hit else ' (miss)'}")
    specific = (medians.get("wine", 0) >= 97 and medians.get("bcancer", 0) >= 95
                and medians.get("tcancer", 0) == 100)
    ok = within >= 6 and specific
    record("7 accuracy reproduction", ok,
           f"{within}/8 within 3 pp; " + "; ".join(detail))
    assert ok


def test_08_scaling_error_statistic():
    runs = best_accuracies("bcancer")
    stats = [s for _, s in runs]
    n = sum(s["count"] for s in stats)
    mean = sum(s["mean_abs"] * s["count"] for s in stats) / n
    mx = max(s["max_abs"] for s in stats)
    record("8 approximation error", mean <= 10,
           f"breast cancer training, mean |error| {mean:.2f} (<= 10), max {mx} (report only)")
    assert mean <= 10


def test_09_exact_vs_approx_parity():
    detail, ok = [], True
    for key in PUBLISHED:
        if not available(key):
            ok = False
            detail.append(f"{key} unavailable")
            continue
        a, e = median_best(key), median_best(key, "exact")
        hit = abs(a - e) <= 3
        ok &= hit
        detail.append(f"{key} {a:.1f}/{e:.1f}{'' if hit else ' (miss)'}")
    record("9 exact-vs-approx parity", ok, "approx/exact medians: " + "; ".join(detail))
    assert ok


def test_10_loss_properties():
    res = verify_loss(trials=5000)
    ends = {k: (int(_exp_table(6, k)(np.array(0))), int(_exp_table(6, k)(np.array(63))))
            for k in (2, 4, 6)}
    ok = res.ok and all(ends[k] == (0, 2 ** k) for k in ends)
    record("10 loss derivative", ok, f"{res.passed}/{res.checks} checks; exp(0), exp(63) = {ends}")
    assert ok


def test_11_semantics_preservation():
    detail = []
    for key in ("wine", "bcancer"):
        cfg = load_config(key)
        data, _ = prepare_data(cfg)
        vm_model = build_model(cfg, data.n_features, data.n_classes)
        ref_model = vm_model.copy()
        for b in range(5):
            sl = slice(8 * b, 8 * b + 8)
            vm_model, _ = train_step(vm_model, data.X_train[sl], data.Y_train[sl])
            ref_model, _ = reference_step(ref_model, data.X_train[sl], data.Y_train[sl])
        same = vm_model.to_text() == ref_model.to_text()
        detail.append((key, same))
    ok = all(s for _, s in detail)
    record("11 semantics preservation", ok,
           ", ".join(f"{k} {'identical' if s else 'DIFFERENT'}" for k, s in detail) + " after 5 batches")
    assert ok


def test_12_determinism(tmp_path):
    outs = []
    for i in range(2):
        m, r = tmp_path / f"w{i}.model", tmp_path / f"w{i}.json"
        assert main(["train", "--config", "wine", "--seed", "3", "--out", str(m), "--report", str(r)]) == 0
        outs.append((m.read_bytes(), r.read_bytes()))
    rows = [run_bench(load_config("bcancer"))[0] for _ in range(2)]
    ok = outs[0] == outs[1] and rows[0] == rows[1]
    record("12 determinism", ok, "model files, reports and op counts identical across two runs")
    assert ok


def test_13_cost_model_report():
    rows, source = run_bench(load_config("bcancer"))
    total = sum(r["lookup_share"] for r in rows)
    forward = sum(r["lookup_share"] for r in rows if r["circuit"].startswith("forward"))
    shares = ", ".join(f"{r['circuit']} {r['lookup_share']:.1f}%" for r in rows)
    record("13 cost model (report only)", abs(total - 100) <= 0.1,
           f"lookup shares, forward {forward:.1f}% of one batch: {shares}")
    assert abs(total - 100) <= 0.1
