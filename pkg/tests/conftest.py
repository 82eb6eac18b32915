"""Shared random generators for property-style tests."""

from __future__ import annotations

import numpy as np

from retrofit_control.lti import PartitionedPlant, TransferMatrix
from retrofit_control.ratpoly import Polynomial, RationalFunction, polynomial_from_roots


def random_stable_matrix(rng: np.random.Generator, n: int, margin: float = 0.5) -> np.ndarray:
    """Random dense matrix with all eigenvalues shifted into Re < -margin."""
    M = rng.standard_normal((n, n))
    shift = max(np.linalg.eigvals(M).real.max(), 0.0) + margin + rng.uniform(0.0, 0.5)
    return M - shift * np.eye(n)


def random_plant(
    rng: np.random.Generator,
    n: int | None = None,
    m: int | None = None,
    p: int | None = None,
    q: int | None = None,
    wdim: int | None = None,
) -> PartitionedPlant:
    """Random stable partitioned plant with 1 <= m < p."""
    n = int(n if n is not None else rng.integers(3, 9))
    p = int(p if p is not None else rng.integers(2, 6))
    m = int(m if m is not None else rng.integers(1, p))
    q = int(q if q is not None else rng.integers(1, 4))
    wdim = int(wdim if wdim is not None else rng.integers(1, 4))
    m = min(m, p - 1, n)
    A = random_stable_matrix(rng, n)
    L = rng.standard_normal((n, m))
    B = rng.standard_normal((n, q))
    Gamma = rng.standard_normal((wdim, n))
    C = rng.standard_normal((p, n))
    return PartitionedPlant(A, L, B, Gamma, C)


def random_stable_poly(rng: np.random.Generator, deg: int) -> Polynomial:
    """Monic polynomial with roots in Re in [-2.5, -0.2]."""
    roots = []
    left = deg
    while left > 0:
        if left >= 2 and rng.random() < 0.4:
            re = -rng.uniform(0.2, 2.5)
            im = rng.uniform(0.2, 2.0)
            roots += [re + 1j * im, re - 1j * im]
            left -= 2
        else:
            roots.append(-rng.uniform(0.2, 2.5))
            left -= 1
    return polynomial_from_roots(roots)


def random_rf(
    rng: np.random.Generator,
    den_deg: int = 3,
    strictly_proper: bool = False,
    stable: bool = True,
) -> RationalFunction:
    den = random_stable_poly(rng, den_deg)
    if not stable:
        flip = polynomial_from_roots([rng.uniform(0.2, 1.5)])
        den = den * flip if den.degree() + 1 <= den_deg else polynomial_from_roots([rng.uniform(0.2, 1.5)])
    num_deg = int(rng.integers(0, den.degree() + (0 if strictly_proper else 1)))
    num = Polynomial(rng.standard_normal(num_deg + 1))
    return RationalFunction(num, den)


def random_stable_tm(
    rng: np.random.Generator, rows: int, cols: int, den_deg: int = 3, strictly_proper: bool = False
) -> TransferMatrix:
    return TransferMatrix(
        [
            [random_rf(rng, int(rng.integers(1, den_deg + 1)), strictly_proper) for _ in range(cols)]
            for _ in range(rows)
        ]
    )


def random_stable_tm_shared_den(
    rng: np.random.Generator, rows: int, cols: int, den_deg: int = 3, strictly_proper: bool = False
) -> TransferMatrix:
    """Stable transfer matrix whose columns share one denominator each.

    Mirrors the pole structure of C (sI - A)^{-1} B and keeps realizations
    small and free of repeated-root cancellations.
    """
    columns = []
    for _ in range(cols):
        den = random_stable_poly(rng, den_deg)
        col = []
        for _ in range(rows):
            num_deg = int(rng.integers(0, den_deg + (0 if strictly_proper else 1)))
            col.append(RationalFunction(Polynomial(rng.standard_normal(num_deg + 1)), den))
        columns.append(col)
    return TransferMatrix([[columns[j][i] for j in range(cols)] for i in range(rows)])


def eval_points_away_from(rng: np.random.Generator, avoid: np.ndarray, count: int = 10) -> np.ndarray:
    """Random complex points at distance > 0.5 from every point in avoid."""
    pts = []
    while len(pts) < count:
        s0 = complex(rng.uniform(-4, 4), rng.uniform(-4, 4))
        if avoid.size == 0 or np.min(np.abs(avoid - s0)) > 0.5:
            pts.append(s0)
    return np.asarray(pts)
