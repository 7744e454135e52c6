"""Oracle and invariant suites behind ``rnsmlp verify``.

Each suite counts checks and sorts failures into guard violations, oracle
mismatches and mismatches against the fixed worked examples, so the CLI can
report them with distinct exit codes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .finite_ring import (BASES_4BIT, BASES_5BIT, CATALOG, EXAMPLE_BASE, RnsBase,
                          RnsTensor, rns2mrns, rns_reconstruct, sign_rns, to_rns)
from .gadget_vm import GadgetVM, GuardViolation
from .linalg_rns import matmul
from .nn import _exp_table, exp_approx, int_ce_loss_deriv
from .reference import approx_block_scale, loss_sign
from .scaling import shift2msbs_pos, shift2msbs_signed

EXIT_ORACLE = 2
EXIT_GUARD = 4
EXIT_ANCHOR = 5

SCOPES = ("conversions", "matmul", "scaling", "loss")


@dataclass
class SuiteResult:
    name: str
    checks: int = 0
    passed: int = 0
    guard_violations: int = 0
    oracle_mismatches: int = 0
    anchor_mismatches: int = 0
    notes: list[str] = field(default_factory=list)

    def check(self, ok: bool, kind: str = "oracle", note: str = "") -> None:
        self.checks += 1
        if ok:
            self.passed += 1
            return
        if kind == "anchor":
            self.anchor_mismatches += 1
        else:
            self.oracle_mismatches += 1
        if note and len(self.notes) < 10:
            self.notes.append(note)

    def guard(self, exc: GuardViolation) -> None:
        self.checks += 1
        self.guard_violations += 1
        if len(self.notes) < 10:
            self.notes.append(str(exc))

    def record(self, name: str, n_ok: int, n_total: int, kind: str = "oracle") -> None:
        self.checks += n_total
        self.passed += n_ok
        if kind == "anchor":
            self.anchor_mismatches += n_total - n_ok
        else:
            self.oracle_mismatches += n_total - n_ok
        self.notes.append(f"{name}: {n_ok}/{n_total}")

    @property
    def ok(self) -> bool:
        return self.passed == self.checks

    @property
    def exit_code(self) -> int:
        if self.guard_violations:
            return EXIT_GUARD
        if self.anchor_mismatches:
            return EXIT_ANCHOR
        return 0 if self.ok else EXIT_ORACLE

    def summary(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return (f"{self.name:<12} {status}  {self.passed}/{self.checks} checks  "
                f"guard={self.guard_violations} oracle={self.oracle_mismatches} "
                f"example={self.anchor_mismatches}")


def ring_elements(base: RnsBase) -> RnsTensor:
    """Every element of the ring, as RNS digits of its unsigned representative."""
    r = np.arange(base.cardinality)
    return RnsTensor(base, np.stack([r % m for m in base.moduli]))


def positional_digits(values: np.ndarray, radices) -> np.ndarray:
    out, weight = [], 1
    for r in radices:
        out.append((values // weight) % r)
        weight *= r
    return np.stack(out)


def verify_conversions(round_trips: int = 100_000, seed: int = 0) -> SuiteResult:
    res = SuiteResult("conversions")
    for base in (EXAMPLE_BASE, BASES_4BIT[0]):
        x = ring_elements(base)
        got = rns2mrns(x).digits
        want = positional_digits(np.arange(base.cardinality), base.moduli)
        res.record(f"rns2mrns {base}", int((got == want).all(axis=0).sum()), base.cardinality)

    anchor = rns2mrns(to_rns(np.array([99]), EXAMPLE_BASE))
    res.check(to_rns(np.array([99]), EXAMPLE_BASE).digits[:, 0].tolist() == [4, 1, 3], "anchor",
              "99 over {5, 7, 8} should be RNS (4, 1, 3)")
    res.check(anchor.digits[:, 0].tolist() == [4, 5, 2], "anchor",
              "99 over {5, 7, 8} should be MRNS (4, 5, 2)")

    rng = np.random.default_rng(seed)
    for base in (*BASES_4BIT, *BASES_5BIT):
        lo, hi = base.signed_range
        x = rng.integers(lo, hi + 1, size=round_trips)
        back = rns_reconstruct(to_rns(x, base))
        res.record(f"round trip {base}", int((back == x).sum()), round_trips)

    for base in BASES_4BIT[:3]:
        x = ring_elements(base)
        vm = GadgetVM()
        try:
            got = sign_rns(x, (-1, 0, 1), vm)
        except GuardViolation as exc:
            res.guard(exc)
            continue
        want = np.sign(rns_reconstruct(x))
        res.record(f"sign {base}", int((got == want).sum()), base.cardinality)
    return res


def random_matmul_case(base: RnsBase, rng: np.random.Generator, max_dim: int = 12):
    """Random signed 8-bit operands whose product fits the base."""
    half = base.cardinality // 2
    a, b, c = (int(v) for v in rng.integers(1, max_dim + 1, size=3))
    limit = max((half - 1) // b, 1)
    mx = int(rng.integers(1, min(128, limit) + 1))
    mw = max(1, min(128, limit // mx))
    X = rng.integers(-mx, min(mx, 127) + 1, size=(a, b))
    W = rng.integers(-mw, min(mw, 127) + 1, size=(b, c))
    return X, W


def verify_matmul(trials: int = 1000, seed: int = 0, max_dim: int = 12) -> SuiteResult:
    res = SuiteResult("matmul")
    rng = np.random.default_rng(seed)
    for width, bases in CATALOG.items():
        for base in bases:
            ok = done = 0
            for _ in range(trials):
                X, W = random_matmul_case(base, rng, max_dim)
                try:
                    got = rns_reconstruct(matmul(X, W, base, GadgetVM()))
                except GuardViolation as exc:
                    res.guard(exc)
                    continue
                done += 1
                want = [[sum(int(p) * int(q) for p, q in zip(row, col)) for col in W.T] for row in X]
                ok += int(np.array_equal(got, np.array(want, dtype=np.int64)))
            res.record(f"matmul {base}", ok, done)
    return res


# worked example over {13, 15, 14}; mixed-radix digits (0, 2, 3), (2, 12, 1), (6, 1, 0)
SHIFT_EXAMPLE = (611, 353, 19)


def verify_scaling(trials: int = 500, seed: int = 0) -> SuiteResult:
    res = SuiteResult("scaling")
    out = shift2msbs_pos(to_rns(np.array(SHIFT_EXAMPLE), BASES_4BIT[1]), 4, 5, GadgetVM())
    res.check(out.values.tolist() == [25, 14, 0] and out.shift == 5, "anchor",
              f"worked example gave {out.values.tolist()} / shift {out.shift}")

    rng = np.random.default_rng(seed)
    for _ in range(trials):
        base = BASES_4BIT[int(rng.integers(0, len(BASES_4BIT)))]
        gamma = int(rng.integers(2, 8))
        bound = int(rng.choice([2 ** int(rng.integers(1, 14)), base.cardinality // 2 - 1]))
        bound = min(bound, base.cardinality // 2 - 1)
        x = rng.integers(-bound, bound + 1, size=(int(rng.integers(1, 6)), int(rng.integers(1, 6))))
        try:
            vm = GadgetVM()
            got = shift2msbs_signed(to_rns(x, base), 4, gamma, vm).values
            pos = shift2msbs_pos(to_rns(np.abs(x), base), 4, gamma - 1, GadgetVM()).values
        except GuardViolation as exc:
            res.guard(exc)
            continue
        want = approx_block_scale(x, base.moduli, 4, gamma - 1)
        res.check(np.array_equal(got, want), note=f"signed scaling mismatch on {base}")
        res.check(np.array_equal(pos, np.abs(want)), note=f"positive scaling mismatch on {base}")
        if gamma - 1 >= 4:  # below that, tensors whose top bit is <= w stay unscaled
            res.check(bool((np.abs(got) < 2 ** (gamma - 1)).all()), note="output exceeds gamma bits")
    return res


def verify_loss(trials: int = 2000, seed: int = 0, Gamma: int = 7) -> SuiteResult:
    res = SuiteResult("loss")
    gamma = Gamma - 1
    for kappa in (2, 4, 6):
        table = _exp_table(gamma, kappa)
        res.check(int(table(np.array(2 ** gamma - 1))) == 2 ** kappa, "anchor",
                  f"exp({2 ** gamma - 1}) for kappa={kappa}")
        res.check(int(table(np.array(0))) == exp_approx(0, gamma, kappa) == 0, "anchor",
                  f"exp(0) for kappa={kappa}")

    # uniform logits: label position never +1, all others never -1
    for o in range(2, 16):
        levels = np.arange(2 ** gamma)
        logits = np.repeat(levels[:, None], o, axis=1)
        labels = np.zeros_like(logits)
        labels[:, 0] = 1
        try:
            out = int_ce_loss_deriv(logits, labels, 4, Gamma, GadgetVM())
        except GuardViolation as exc:
            res.guard(exc)
            continue
        res.check(bool(np.isin(out[:, 0], (-1, 0)).all() and np.isin(out[:, 1:], (0, 1)).all()),
                  note=f"uniform logits, o={o}")

    rng = np.random.default_rng(seed)
    for _ in range(trials // 100):
        kappa = int(rng.integers(0, 5))
        o = int(rng.integers(2, min(16, 255 // 2 ** kappa) + 1))
        logits = rng.integers(-(2 ** gamma), 2 ** gamma, size=(100, o))
        labels = np.eye(o, dtype=np.int64)[rng.integers(0, o, 100)]
        try:
            out = int_ce_loss_deriv(logits, labels, kappa, Gamma, GadgetVM())
        except GuardViolation as exc:
            res.guard(exc)
            continue
        res.check(bool(np.isin(out, (-1, 0, 1)).all()), note="output outside {-1, 0, 1}")
        res.check(not (out[labels == 1] == 1).any(), note="+1 at the label position")
        res.check(np.array_equal(out, loss_sign(logits, labels, kappa, Gamma)),
                  note="mismatch against the plain-integer loss")
    return res


SUITES = {"conversions": verify_conversions, "matmul": verify_matmul,
          "scaling": verify_scaling, "loss": verify_loss}


def run_verify(scope: str = "all", **kwargs) -> list[SuiteResult]:
    names = SCOPES if scope == "all" else (scope,)
    return [SUITES[n]() for n in names]


def exit_code(results: list[SuiteResult]) -> int:
    codes = [r.exit_code for r in results if r.exit_code]
    return min(codes) if codes else 0
