"""Generalized hamming distance algebra.

The binary operation ``a (+) b = a + b - 2ab`` turns the reals into an abelian
group with identity 0, inverse ``a / (2a - 1)`` and an absorbing element 0.5.
Everything here is plain float64 numerics and serves as the ground truth the
network layers are checked against.
"""
from __future__ import annotations

import csv
import enum
import math
from typing import Iterable, Sequence, TextIO

import numpy as np

FIXED_POINT = 0.5
BOUNDARY_TOL = 1e-12
SINGULAR_TOL = 1e-12


class DomainError(ValueError):
    """Argument lies outside the domain of an algebra operation."""


class SingularElementError(DomainError):
    """0.5 has no finite inverse in the hamming group."""


class Region(enum.Enum):
    FUZZY = "fuzzy"
    BOUNDARY = "boundary"
    NEGATIVE_CONFIDENT = "negative_confident"
    POSITIVE_CONFIDENT = "positive_confident"


def _finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise DomainError(f"non-finite argument {v!r}")


def ghd(a: float, b: float) -> float:
    """Generalized hamming distance ``a + b - 2ab``."""
    a, b = float(a), float(b)
    _finite(a, b)
    return a + b - 2.0 * a * b


def ghd_inverse(a: float) -> float:
    """Group inverse ``a / (2a - 1)``, so that ``ghd(a, ghd_inverse(a)) == 0``."""
    a = float(a)
    _finite(a)
    denom = 2.0 * a - 1.0
    if abs(denom) <= SINGULAR_TOL:
        raise SingularElementError("0.5 is the absorbing element and has no finite inverse")
    return a / denom


def fuzziness(a: float) -> float:
    """``a (+) a = 2a(1 - a)``; maximal (0.5) at a = 0.5, zero at 0 and 1."""
    a = float(a)
    _finite(a)
    return 2.0 * a * (1.0 - a)


def classify_region(a: float) -> Region:
    a = float(a)
    _finite(a)
    if abs(a) <= BOUNDARY_TOL or abs(a - 1.0) <= BOUNDARY_TOL:
        return Region.BOUNDARY
    if a < 0.0:
        return Region.NEGATIVE_CONFIDENT
    if a > 1.0:
        return Region.POSITIVE_CONFIDENT
    return Region.FUZZY


def _as_vector(x: Sequence[float] | np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional, got shape {v.shape}")
    if v.size == 0:
        raise DomainError(f"{name} is empty")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} contains non-finite values")
    return v


def ghd_vec(x: Sequence[float] | np.ndarray, y: Sequence[float] | np.ndarray) -> float:
    """Mean element-wise GHD of two equal-length vectors.

    Evaluated through the closed form ``mean(x) + mean(y) - (2/L) x.y``.
    """
    xv = _as_vector(x, "x")
    yv = _as_vector(y, "y")
    if xv.shape != yv.shape:
        raise DomainError(f"length mismatch: {xv.size} vs {yv.size}")
    n = xv.size
    return float(xv.mean() + yv.mean() - 2.0 / n * np.dot(xv, yv))


def _as_ensemble(vectors: Iterable[Sequence[float]], name: str) -> np.ndarray:
    rows = [_as_vector(v, name) for v in vectors]
    if not rows:
        raise DomainError(f"{name} is an empty set")
    length = rows[0].size
    if any(r.size != length for r in rows):
        raise DomainError(f"{name} vectors differ in length")
    return np.stack(rows)


def mean_pairwise_ghd(xs: Iterable[Sequence[float]], ys: Iterable[Sequence[float]]) -> float:
    """Brute-force mean of ``ghd`` over every (x, y) pair and every coordinate.

    Loops over the scalar operation deliberately; this is the reference side
    of the ensemble-mean identity and must not share the closed form.
    """
    X = _as_ensemble(xs, "X")
    Y = _as_ensemble(ys, "Y")
    if X.shape[1] != Y.shape[1]:
        raise DomainError(f"length mismatch: {X.shape[1]} vs {Y.shape[1]}")
    total = math.fsum(
        ghd(xv, yv)
        for xrow in X
        for yrow in Y
        for xv, yv in zip(xrow, yrow)
    )
    return total / (X.shape[0] * Y.shape[0] * X.shape[1])


def membership_mu(a: float) -> float:
    """Logistic membership ``1 / (1 + exp(0.5 - a))`` centred on the fixed point."""
    a = float(a)
    _finite(a)
    z = 0.5 - a
    # stable in both tails
    if z >= 0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


def membership_mu_inv(i: float) -> float:
    """Inverse membership ``0.5 - ln(1/i - 1)`` for ``0 < i < 1``."""
    i = float(i)
    _finite(i)
    if not 0.0 < i < 1.0:
        raise DomainError(f"membership grade must lie strictly in (0, 1), got {i}")
    return 0.5 - math.log(1.0 / i - 1.0)


def fuzzy_xor(i: float, j: float) -> float:
    """XOR connective induced by GHD under the logistic membership."""
    return membership_mu(ghd(membership_mu_inv(i), membership_mu_inv(j)))


SURFACES = ("ghd", "fuzziness", "mu_of_ghd", "dmu_da")


def _surface_value(which: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    h = a + b - 2.0 * a * b
    if which == "ghd":
        return h
    if which == "fuzziness":
        return 2.0 * h * (1.0 - h)
    mu = 1.0 / (1.0 + np.exp(0.5 - h))
    if which == "mu_of_ghd":
        return mu
    # d/da mu(h(a, b)) = mu (1 - mu) (1 - 2b)
    return mu * (1.0 - mu) * (1.0 - 2.0 * b)


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    _finite(lo, hi, step)
    if step <= 0:
        raise DomainError("step must be positive")
    if hi < lo:
        raise DomainError(f"empty range [{lo}, {hi}]")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    # rounding keeps grid points such as 0.5 exact after accumulation
    return np.round(lo + step * np.arange(n, dtype=np.float64), 12)


def surface_sample(
    which: str,
    a_range: tuple[float, float],
    b_range: tuple[float, float],
    step: float,
) -> np.ndarray:
    """Dense grid of ``(a, b, value)`` rows for one of the surfaces in SURFACES.

    Rows are ordered with ``a`` varying slowest.
    """
    if which not in SURFACES:
        raise DomainError(f"unknown surface {which!r}; expected one of {SURFACES}")
    a = _grid(*a_range, step)
    b = _grid(*b_range, step)
    A, B = np.meshgrid(a, b, indexing="ij")
    vals = _surface_value(which, A, B)
    return np.column_stack([A.ravel(), B.ravel(), vals.ravel()])


def write_surface_csv(rows: np.ndarray, out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["a", "b", "value"])
    for a, b, v in rows:
        writer.writerow([f"{a:.12g}", f"{b:.12g}", f"{v:.12g}"])
