"""Built-in property checks run by ``ghn selftest``."""
from __future__ import annotations

import time
from typing import Callable

import numpy as np

from . import algebra as A
from . import layers as Ly
from . import tensor as T


def _group_axioms(rng, n):
    a, b, c = rng.uniform(-3, 3, (3, n))
    worst_comm = max(abs(A.ghd(x, y) - A.ghd(y, x)) for x, y in zip(a, b))
    worst_assoc = max(abs(A.ghd(A.ghd(x, y), z) - A.ghd(x, A.ghd(y, z))) for x, y, z in zip(a, b, c))
    ident = all(A.ghd(0.0, x) == x for x in a)
    return worst_comm <= 1e-12 and worst_assoc <= 1e-9 and ident


def _inverse(rng, n):
    a = rng.uniform(-3, 3, n)
    a = a[np.abs(2 * a - 1) > 1e-3]
    return max(abs(A.ghd(x, A.ghd_inverse(x))) for x in a) <= 1e-9


def _fixed_point_and_complement(rng, n):
    a = rng.uniform(-3, 3, n)
    return (max(abs(A.ghd(0.5, x) - 0.5) for x in a) <= 1e-12
            and max(abs(A.ghd(1.0, x) - (1 - x)) for x in a) <= 1e-12)


def _closure(rng, n):
    a, b = rng.uniform(0, 1, (2, n))
    return all(0.0 <= A.ghd(x, y) <= 1.0 for x, y in zip(a, b))


def _distributive(rng, n):
    for _ in range(n):
        M, N, L = rng.integers(1, 9), rng.integers(1, 9), rng.integers(1, 17)
        X, Y = rng.uniform(0, 1, (M, L)), rng.uniform(0, 1, (N, L))
        if abs(A.ghd_vec(X.mean(0), Y.mean(0)) - A.mean_pairwise_ghd(X, Y)) > 1e-9:
            return False
    return True


def _dense_oracle(rng, n):
    for _ in range(n):
        b, L, F = rng.integers(1, 5), rng.integers(1, 20), rng.integers(1, 6)
        x, w = rng.uniform(0, 1, (b, L)), rng.normal(0, 1, (L, F))
        h = Ly.ghn_dense_forward(T.Tensor(x), T.Tensor(w)).data
        ref = np.array([[A.ghd_vec(x[i], w[:, f]) for f in range(F)] for i in range(b)])
        if np.max(np.abs(h - ref)) > 1e-5:
            return False
    return True


def _conv_oracle(rng, n):
    for _ in range(n):
        k = int(rng.integers(1, 4))
        cin, cout, size = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(k, 7))
        pad = "same" if rng.random() < 0.5 else "valid"
        x = rng.uniform(0, 1, (1, size, size, cin))
        kern = rng.normal(0, 1, (k, k, cin, cout))
        h = Ly.ghn_conv2d_forward(T.Tensor(x), T.Tensor(kern), 1, pad).data
        oh, ow, (pt, _, pl, _) = T.conv_geometry(size, size, k, k, 1, pad)
        xp = np.pad(x[0], ((pt, k), (pl, k), (0, 0)))
        for i in range(oh):
            for j in range(ow):
                patch = xp[i:i + k, j:j + k].ravel()
                for f in range(cout):
                    if abs(h[0, i, j, f] - A.ghd_vec(patch, kern[..., f].ravel())) > 1e-4:
                        return False
    return True


def _gradients(rng, n):
    with T.precision("r64"):
        x = T.Parameter(rng.uniform(0, 1, (3, 5)), "x")
        w = T.Parameter(rng.normal(0, 1, (5, 4)), "w")
        labels = rng.integers(0, 4, 3)
        err = T.grad_check(lambda: T.softmax_cross_entropy(
            T.negate(Ly.ghn_dense_forward(x, w)), labels), [x, w])
        return err < 1e-6


CHECKS: list[tuple[str, Callable, int, int]] = [
    # name, check, full sample count, quick sample count
    ("abelian group axioms", _group_axioms, 10_000, 1000),
    ("inverse law", _inverse, 10_000, 1000),
    ("fixed point and complement", _fixed_point_and_complement, 10_000, 1000),
    ("restricted closure", _closure, 10_000, 1000),
    ("ensemble-mean distributivity", _distributive, 1000, 100),
    ("ghn dense vs loop oracle", _dense_oracle, 100, 20),
    ("ghn conv vs loop oracle", _conv_oracle, 100, 10),
    ("ghn dense + loss gradient", _gradients, 1, 1),
]


def run_all(quick: bool = False, seed: int = 0) -> bool:
    ok = True
    for name, check, full, small in CHECKS:
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        passed = bool(check(rng, small if quick else full))
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}  ({time.perf_counter() - t0:.2f}s)")
    print("selftest:", "all checks passed" if ok else "FAILURES")
    return ok
