"""LTI system representations and internal-stability machinery.

Two interchangeable views of a linear system live here: entrywise rational
transfer matrices (exact to tolerance, used for all structural identities)
and state-space realizations (used for eigenvalue tests, pointwise frequency
evaluation, and everything too large for coefficient-space polynomials).

The plant of interest is a 2x2 block system mapping (v, u) to (w, y), where
v/w are the inflowing/outflowing interaction signals exchanged with an
unknown environment and u/y are the control input and measurement.
"""

from __future__ import annotations

import numpy as np

from .config import ToleranceConfig, active
from .ratpoly import Polynomial, RationalFunction, polynomial_from_roots

__all__ = [
    "TransferMatrix",
    "StateSpace",
    "PartitionedPlant",
    "Environment",
    "ss_to_tf",
    "tf_to_ss",
    "ss_series",
    "ss_minimal",
    "validated_minimal",
    "ss_inverse",
    "ss_add_identity",
    "normal_rank",
    "youla_parameter",
    "controller_from_youla",
    "internal_stability",
    "closed_loop_wv",
    "preexisting_internally_stable",
    "sample_imaginary_axis",
    "plant_from_json_dict",
    "plant_to_json_dict",
]


def _as_rf(x) -> RationalFunction:
    if isinstance(x, RationalFunction):
        return x
    if isinstance(x, Polynomial):
        return RationalFunction(x)
    return RationalFunction.constant(float(x))


class TransferMatrix:
    """2-D array of rational functions."""

    __slots__ = ("_e",)

    # defer mixed ndarray/TransferMatrix operators to this class
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, entries) -> None:
        if isinstance(entries, np.ndarray) and entries.dtype == object:
            rows = entries.tolist()
        else:
            rows = entries
        e = np.empty((len(rows), len(rows[0])), dtype=object)
        for i, row in enumerate(rows):
            if len(row) != e.shape[1]:
                raise ValueError("ragged transfer-matrix rows")
            for j, x in enumerate(row):
                e[i, j] = _as_rf(x)
        self._e = e

    # --- constructors ---------------------------------------------------

    @staticmethod
    def zeros(rows: int, cols: int) -> "TransferMatrix":
        return TransferMatrix([[0.0] * cols for _ in range(rows)])

    @staticmethod
    def identity(n: int) -> "TransferMatrix":
        return TransferMatrix([[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)])

    @staticmethod
    def constant(M) -> "TransferMatrix":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return TransferMatrix([[M[i, j] for j in range(M.shape[1])] for i in range(M.shape[0])])

    # --- basic views ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return self._e.shape

    def __getitem__(self, ij) -> RationalFunction:
        return self._e[ij]

    def entries(self):
        return self._e

    def row_select(self, indices) -> "TransferMatrix":
        return TransferMatrix(self._e[list(indices), :])

    def transpose(self) -> "TransferMatrix":
        return TransferMatrix(self._e.T)

    def is_zero(self) -> bool:
        return all(rf.is_zero for rf in self._e.flat)

    def is_proper(self) -> bool:
        return all(rf.is_proper() for rf in self._e.flat)

    def is_stable(self, tol: ToleranceConfig | None = None) -> bool:
        return all(rf.is_stable(tol) for rf in self._e.flat)

    def poles(self) -> np.ndarray:
        out = [rf.poles() for rf in self._e.flat if not rf.is_zero]
        return np.concatenate(out) if out else np.zeros(0, dtype=complex)

    # --- arithmetic --------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, TransferMatrix):
            return other
        if isinstance(other, np.ndarray):
            return TransferMatrix.constant(other)
        return None

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return TransferMatrix(self._e + other._e)

    __radd__ = __add__

    def __neg__(self):
        return TransferMatrix(-self._e)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float)):
            return TransferMatrix(self._e * RationalFunction.constant(scalar))
        if isinstance(scalar, RationalFunction):
            return TransferMatrix(self._e * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        p, k = self.shape
        k2, q = other.shape
        if k != k2:
            raise ValueError(f"inner dimension mismatch {self.shape} @ {other.shape}")
        out = np.empty((p, q), dtype=object)
        for i in range(p):
            for j in range(q):
                acc = RationalFunction.zero()
                for t in range(k):
                    a = self._e[i, t]
                    b = other._e[t, j]
                    if a.is_zero or b.is_zero:
                        continue
                    acc = acc + a * b
                out[i, j] = acc
        return TransferMatrix(out)

    def __rmatmul__(self, other):
        if isinstance(other, np.ndarray):
            return TransferMatrix.constant(other) @ self
        return NotImplemented

    @staticmethod
    def vstack(blocks) -> "TransferMatrix":
        rows = []
        for b in blocks:
            rows.extend(b._e.tolist())
        return TransferMatrix(rows)

    @staticmethod
    def hstack(blocks) -> "TransferMatrix":
        rows = []
        for i in range(blocks[0].shape[0]):
            row = []
            for b in blocks:
                row.extend(b._e[i, :].tolist())
            rows.append(row)
        return TransferMatrix(rows)

    # --- evaluation ----------------------------------------------------------

    def evaluate(self, s0: complex) -> np.ndarray:
        """Entrywise evaluation; raises if s0 hits a pole of any entry."""
        p, q = self.shape
        out = np.empty((p, q), dtype=complex)
        for i in range(p):
            for j in range(q):
                out[i, j] = self._e[i, j](s0)
        return out

    def __call__(self, s0: complex) -> np.ndarray:
        return self.evaluate(s0)

    # --- linear algebra over the rational field -------------------------------

    def determinant(self) -> RationalFunction:
        """Determinant: Leibniz up to 3x3, Gaussian elimination beyond."""
        p, q = self.shape
        if p != q:
            raise ValueError("determinant of a non-square transfer matrix")
        e = self._e
        if p == 1:
            return e[0, 0]
        if p == 2:
            return e[0, 0] * e[1, 1] - e[0, 1] * e[1, 0]
        if p == 3:
            return (
                e[0, 0] * (e[1, 1] * e[2, 2] - e[1, 2] * e[2, 1])
                - e[0, 1] * (e[1, 0] * e[2, 2] - e[1, 2] * e[2, 0])
                + e[0, 2] * (e[1, 0] * e[2, 1] - e[1, 1] * e[2, 0])
            )
        M = self._e.copy()
        det = RationalFunction.one()
        probe = 0.797412 + 1.33321j
        for col in range(p):
            piv = _pick_pivot(M, col, probe)
            if piv is None:
                return RationalFunction.zero()
            if piv != col:
                M[[col, piv], :] = M[[piv, col], :]
                det = -det
            det = det * M[col, col]
            inv_piv = RationalFunction.one() / M[col, col]
            for r in range(col + 1, p):
                if M[r, col].is_zero:
                    continue
                f = M[r, col] * inv_piv
                for c in range(col, p):
                    M[r, c] = M[r, c] - f * M[col, c]
        return det

    def inverse(self) -> "TransferMatrix":
        """Inverse over the field of rational functions.

        Adjugate formulas up to 3x3 (fewer chained operations), Gauss-Jordan
        beyond.
        """
        p, q = self.shape
        if p != q:
            raise ValueError("inverse of a non-square transfer matrix")
        if p <= 3:
            det = self.determinant()
            if det.is_zero:
                raise ValueError("transfer matrix is singular over the rational field")
            e = self._e
            if p == 1:
                return TransferMatrix([[RationalFunction.one() / e[0, 0]]])
            if p == 2:
                adj = [[e[1, 1], -e[0, 1]], [-e[1, 0], e[0, 0]]]
            else:
                adj = [
                    [
                        (
                            e[(j + 1) % 3, (i + 1) % 3] * e[(j + 2) % 3, (i + 2) % 3]
                            - e[(j + 1) % 3, (i + 2) % 3] * e[(j + 2) % 3, (i + 1) % 3]
                        )
                        for j in range(3)
                    ]
                    for i in range(3)
                ]
            return TransferMatrix([[a / det for a in row] for row in adj])
        M = self._e.copy()
        I = TransferMatrix.identity(p)._e
        probe = 0.797412 + 1.33321j
        for col in range(p):
            piv = _pick_pivot(M, col, probe)
            if piv is None:
                raise ValueError("transfer matrix is singular over the rational field")
            if piv != col:
                M[[col, piv], :] = M[[piv, col], :]
                I[[col, piv], :] = I[[piv, col], :]
            inv_piv = RationalFunction.one() / M[col, col]
            for c in range(p):
                M[col, c] = M[col, c] * inv_piv
                I[col, c] = I[col, c] * inv_piv
            for r in range(p):
                if r == col or M[r, col].is_zero:
                    continue
                f = M[r, col]
                for c in range(p):
                    M[r, c] = M[r, c] - f * M[col, c]
                    I[r, c] = I[r, c] - f * I[col, c]
        return TransferMatrix(I)

    def approx_equal(self, other: "TransferMatrix", rtol: float = 1e-9) -> bool:
        if self.shape != other.shape:
            return False
        return all(
            a.approx_equal(b, rtol) for a, b in zip(self._e.flat, other._e.flat)
        )

    def __repr__(self) -> str:
        return f"TransferMatrix({self.shape[0]}x{self.shape[1]})"


def _pick_pivot(M: np.ndarray, col: int, probe: complex):
    """Row >= col with the largest-magnitude nonzero entry in this column."""
    best, best_score = None, -1.0
    for r in range(col, M.shape[0]):
        rf = M[r, col]
        if rf.is_zero:
            continue
        num = rf.num(probe)
        den = rf.den(probe)
        score = np.inf if den == 0 else abs(num / den)
        if score > best_score:
            best, best_score = r, score
    return best


class StateSpace:
    """Realization (A, B, C, D); n = 0 encodes a static gain."""

    __slots__ = ("A", "B", "C", "D")

    def __init__(self, A, B, C, D=None) -> None:
        A = np.asarray(A, dtype=float)
        A = A.reshape(0, 0) if A.size == 0 else np.atleast_2d(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        B = np.asarray(B, dtype=float)
        if B.ndim != 2:
            B = B.reshape(n, -1) if B.size else B.reshape(n, 0)
        C = np.asarray(C, dtype=float)
        if C.ndim != 2:
            C = C.reshape(-1, n) if C.size else C.reshape(0, n)
        if D is None:
            D = np.zeros((C.shape[0], B.shape[1]))
        D = np.atleast_2d(np.asarray(D, dtype=float))
        if B.shape[0] != n or C.shape[1] != n:
            raise ValueError("B/C dimensions incompatible with A")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError("D dimensions incompatible with B and C")
        self.A, self.B, self.C, self.D = A, B, C, D

    @staticmethod
    def static_gain(D) -> "StateSpace":
        D = np.atleast_2d(np.asarray(D, dtype=float))
        return StateSpace(np.zeros((0, 0)), np.zeros((0, D.shape[1])), np.zeros((D.shape[0], 0)), D)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def ninputs(self) -> int:
        return self.B.shape[1]

    @property
    def noutputs(self) -> int:
        return self.C.shape[0]

    def eigenvalues(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0, dtype=complex)
        return np.linalg.eigvals(self.A)

    def is_stable(self, tol: ToleranceConfig | None = None) -> bool:
        cfg = tol or active()
        if self.n == 0:
            return True
        return bool(np.all(self.eigenvalues().real < -cfg.eps_stab))

    def evaluate(self, s0: complex) -> np.ndarray:
        if self.n == 0:
            return self.D.astype(complex)
        X = np.linalg.solve(s0 * np.eye(self.n) - self.A, self.B)
        return self.C @ X + self.D

    def __repr__(self) -> str:
        return f"StateSpace(n={self.n}, inputs={self.ninputs}, outputs={self.noutputs})"


def ss_series(first: StateSpace, then: StateSpace) -> StateSpace:
    """Cascade: input -> first -> then -> output."""
    if then.ninputs != first.noutputs:
        raise ValueError("cascade dimension mismatch")
    n1, n2 = first.n, then.n
    A = np.block(
        [
            [first.A, np.zeros((n1, n2))],
            [then.B @ first.C, then.A],
        ]
    ) if n1 + n2 else np.zeros((0, 0))
    B = np.vstack([first.B, then.B @ first.D]) if n1 + n2 else np.zeros((0, first.ninputs))
    C = np.hstack([then.D @ first.C, then.C]) if n1 + n2 else np.zeros((then.noutputs, 0))
    D = then.D @ first.D
    return StateSpace(A, B, C, D)


def _orth_basis(M: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((M.shape[0], 0))
    return U[:, s > rtol * s[0]]


def _controllable_basis(A: np.ndarray, B: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of the controllable subspace (A-invariant)."""
    V = _orth_basis(B, rtol)
    while V.shape[1] < A.shape[0]:
        V2 = _orth_basis(np.hstack([V, A @ V]), rtol)
        if V2.shape[1] == V.shape[1]:
            break
        V = V2
    return V


def ss_minimal(sys: StateSpace, rtol: float = 1e-10) -> StateSpace:
    """Remove numerically uncontrollable and unobservable states.

    The controllable subspace is A-invariant and contains range(B), so the
    orthogonal restriction preserves the transfer matrix exactly; the dual
    reduction handles observability.
    """
    V = _controllable_basis(sys.A, sys.B, rtol)
    A1, B1, C1 = V.T @ sys.A @ V, V.T @ sys.B, sys.C @ V
    W = _controllable_basis(A1.T, C1.T, rtol)
    return StateSpace(W.T @ A1 @ W, W.T @ B1, C1 @ W, sys.D)


def ss_balanced_truncate(sys: StateSpace, rtol: float = 1e-9) -> StateSpace:
    """Balanced truncation of a stable realization (square-root method).

    Drops states whose Hankel singular value falls below rtol times the
    largest; near pole/zero cancellations rank far below genuine dynamics,
    which plain controllability/observability cuts cannot distinguish.
    """
    if sys.n == 0:
        return sys
    import scipy.linalg

    P = scipy.linalg.solve_continuous_lyapunov(sys.A, -sys.B @ sys.B.T)
    Qg = scipy.linalg.solve_continuous_lyapunov(sys.A.T, -sys.C.T @ sys.C)
    Up, sp, _ = np.linalg.svd((P + P.T) / 2.0)
    Uq, sq, _ = np.linalg.svd((Qg + Qg.T) / 2.0)
    Lp = Up @ np.diag(np.sqrt(np.maximum(sp, 0.0)))
    Lq = Uq @ np.diag(np.sqrt(np.maximum(sq, 0.0)))
    U, hsv, Vt = np.linalg.svd(Lq.T @ Lp)
    if hsv.size == 0 or hsv[0] == 0.0:
        return StateSpace.static_gain(sys.D)
    k = int(np.sum(hsv > rtol * hsv[0]))
    if k == 0:
        return StateSpace.static_gain(sys.D)
    shalf = 1.0 / np.sqrt(hsv[:k])
    T1 = Lp @ Vt[:k, :].T @ np.diag(shalf)
    Ti = np.diag(shalf) @ U[:, :k].T @ Lq.T
    return StateSpace(Ti @ sys.A @ T1, Ti @ sys.B, sys.C @ T1, sys.D)


def ss_add_identity(sys: StateSpace, sign: float = 1.0) -> StateSpace:
    """Realization of I + sign * sys (square systems)."""
    if sys.ninputs != sys.noutputs:
        raise ValueError("identity shift needs a square system")
    return StateSpace(sys.A, sys.B, sign * sys.C, np.eye(sys.ninputs) + sign * sys.D)


def ss_inverse(sys: StateSpace) -> StateSpace:
    """Realization of the inverse of a square system with invertible D.

    A singular feedthrough means the inverse is improper (the loop built on
    it is ill posed / not well posed in the proper class).
    """
    D = sys.D
    if D.shape[0] != D.shape[1]:
        raise ValueError("inverse of a non-square system")
    if D.size and (np.linalg.matrix_rank(D, tol=1e-10 * max(1.0, np.abs(D).max())) < D.shape[0]):
        raise ValueError("ill-posed loop: singular feedthrough, inverse is improper")
    Dinv = np.linalg.inv(D) if D.size else D
    if sys.n == 0:
        return StateSpace.static_gain(Dinv)
    return StateSpace(
        sys.A - sys.B @ Dinv @ sys.C,
        sys.B @ Dinv,
        -Dinv @ sys.C,
        Dinv,
    )


# --- conversions -----------------------------------------------------------


def ss_to_tf(sys: StateSpace, tol: ToleranceConfig | None = None) -> TransferMatrix:
    """Exact rational transfer matrix of a realization.

    The resolvent is expanded with the Faddeev-LeVerrier recursion, so each
    entry is C adj(sI - A) B / det(sI - A) + D before canonicalization.
    """
    n = sys.n
    if n == 0:
        return TransferMatrix.constant(sys.D)
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    den = np.zeros(n + 1)
    den[n] = 1.0
    # adj(sI - A) = sum_k M_k s^(n-1-k)
    Ms = [np.eye(n)]
    Mk = np.eye(n)
    for k in range(1, n + 1):
        AM = A @ Mk
        ck = -np.trace(AM) / k
        den[n - k] = ck
        if k < n:
            Mk = AM + ck * np.eye(n)
            Ms.append(Mk)
    den_poly = Polynomial(den)
    p, q = C.shape[0], B.shape[1]
    # numerator coefficient of s^t for all entries at once
    num_coeffs = np.zeros((n, p, q))
    for k, M in enumerate(Ms):
        num_coeffs[n - 1 - k] = C @ M @ B
    entries = []
    for i in range(p):
        row = []
        for j in range(q):
            num = Polynomial(num_coeffs[:, i, j]) + Polynomial(den * D[i, j])
            row.append(RationalFunction(num, den_poly, tol=tol))
        entries.append(row)
    return TransferMatrix(entries)


def _cluster_union(polys, eps: float):
    """Root-multiset LCM of monic-normalized polynomials.

    Returns (lcm_roots, cofactor_roots_per_poly): the union multiset with
    per-cluster maximal multiplicity and, for each input, the complementary
    multiset such that input * cofactor ~ lcm (up to leading scale).
    """
    centers: list[complex] = []
    per_poly: list[dict[int, int]] = []
    for poly in polys:
        counts: dict[int, int] = {}
        roots = poly.roots() if poly.degree() > 0 else np.zeros(0, complex)
        for r in roots:
            hit = None
            for idx, c in enumerate(centers):
                if abs(r - c) <= eps * (1.0 + abs(r)):
                    hit = idx
                    break
            if hit is None:
                centers.append(complex(r))
                hit = len(centers) - 1
            counts[hit] = counts.get(hit, 0) + 1
        per_poly.append(counts)
    mult = [max(c.get(i, 0) for c in per_poly) for i in range(len(centers))]
    lcm_roots = [centers[i] for i in range(len(centers)) for _ in range(mult[i])]
    cofactors = []
    for counts in per_poly:
        cf = [centers[i] for i in range(len(centers)) for _ in range(mult[i] - counts.get(i, 0))]
        cofactors.append(cf)
    return lcm_roots, cofactors


def tf_to_ss(T: TransferMatrix, tol: ToleranceConfig | None = None) -> StateSpace:
    """Realize a proper transfer matrix in state space.

    Each input column is realized in controllable canonical form over the
    column's common denominator; the column realizations are concatenated.
    The result is generally non-minimal.
    """
    cfg = tol or active()
    if not T.is_proper():
        raise ValueError("improper transfer matrix: not realizable in standard state space")
    p, q = T.shape
    A_blocks, B_blocks, C_blocks = [], [], []
    D = np.zeros((p, q))
    for j in range(q):
        dens = [T[i, j].den for i in range(p)]
        lcm_roots, cof_roots = _cluster_union(dens, cfg.eps_cancel * 100)
        k = len(lcm_roots)
        d = polynomial_from_roots(lcm_roots) if k else Polynomial([1.0])
        Cj = np.zeros((p, k))
        for i in range(p):
            rf = T[i, j]
            if rf.is_zero:
                continue
            num = rf.num * polynomial_from_roots(cof_roots[i]) if cof_roots[i] else rf.num
            nc = num.coeffs
            if nc.size == k + 1:
                D[i, j] = nc[k] / d.coeffs[k]
                num = num - Polynomial(d.coeffs * D[i, j])
                nc = num.coeffs
            elif nc.size > k + 1:
                raise ValueError("entry degree exceeds column denominator degree")
            Cj[i, : nc.size] = nc
        if k:
            Aj = np.zeros((k, k))
            Aj[: k - 1, 1:] = np.eye(k - 1)
            Aj[k - 1, :] = -d.coeffs[:k] / d.coeffs[k]
            bj = np.zeros((k, 1))
            bj[k - 1, 0] = 1.0 / d.coeffs[k]
            A_blocks.append(Aj)
            B_blocks.append(bj)
            C_blocks.append(Cj)
        else:
            A_blocks.append(np.zeros((0, 0)))
            B_blocks.append(np.zeros((0, 1)))
            C_blocks.append(np.zeros((p, 0)))
    n = sum(a.shape[0] for a in A_blocks)
    A = np.zeros((n, n))
    B = np.zeros((n, q))
    C = np.zeros((p, n))
    at = 0
    for j in range(q):
        k = A_blocks[j].shape[0]
        A[at : at + k, at : at + k] = A_blocks[j]
        B[at : at + k, j : j + 1] = B_blocks[j]
        C[:, at : at + k] = C_blocks[j]
        at += k
    return StateSpace(A, B, C, D)


# --- sampling ----------------------------------------------------------------


def sample_imaginary_axis(
    count: int = 20,
    seed: int = 0,
    avoid: np.ndarray | None = None,
    wmin: float = 1e-2,
    wmax: float = 1e2,
) -> np.ndarray:
    """Log-uniform random frequencies s = i*w, nudged away from ``avoid``."""
    rng = np.random.default_rng(seed)
    pts = []
    guard = 0
    while len(pts) < count and guard < 50 * count:
        guard += 1
        w = np.exp(rng.uniform(np.log(wmin), np.log(wmax)))
        s0 = 1j * w
        if avoid is not None and avoid.size and np.min(np.abs(avoid - s0)) < 1e-6 * (1 + w):
            continue
        pts.append(s0)
    return np.asarray(pts, dtype=complex)


def normal_rank(T: TransferMatrix, seed: int = 0, points: int = 7, tol: ToleranceConfig | None = None) -> int:
    """Rank over the rational field, via SVD at random sample points.

    Points are drawn on the circle of radius 2 in the open right half plane
    and the rank is the maximum numerical rank over the samples (equal to
    the normal rank with probability one).
    """
    cfg = tol or active()
    if T.is_zero():
        return 0
    rng = np.random.default_rng(seed)
    poles = T.poles()
    best = 0
    got = 0
    guard = 0
    while got < points and guard < 50 * points:
        guard += 1
        theta = rng.uniform(-np.pi / 2, np.pi / 2)
        s0 = 2.0 * np.exp(1j * theta)
        if poles.size and np.min(np.abs(poles - s0)) < 1e-6:
            continue
        got += 1
        sv = np.linalg.svd(T.evaluate(s0), compute_uv=False)
        if sv.size and sv[0] > 0:
            best = max(best, int(np.sum(sv > cfg.eps_rank * sv[0])))
    return best


# --- loop algebra ---------------------------------------------------------------
#
# Rational loop maps are value-exact at every step (cancellation only removes
# factors the coefficients cannot distinguish), so they remain the reference
# implementation.  Realization-level counterparts for large systems live in
# the synthesis layer, which checks eigenvalues of composed realizations.


def as_statespace(X, tol: ToleranceConfig | None = None) -> StateSpace:
    if isinstance(X, StateSpace):
        return X
    if isinstance(X, TransferMatrix):
        return tf_to_ss(X, tol)
    raise TypeError(f"cannot realize {type(X).__name__} in state space")


def _well_posed_inverse(M: TransferMatrix, what: str) -> TransferMatrix:
    det = M.determinant()
    if det.is_zero:
        raise ValueError(f"ill-posed loop: {what} is singular over the rational field")
    return M.inverse()


def youla_parameter(K: TransferMatrix, Gyu: TransferMatrix, tol: ToleranceConfig | None = None) -> TransferMatrix:
    """Q = (I - K Gyu)^{-1} K, the Youla parameter of K for a stable plant."""
    if K.is_zero():
        return TransferMatrix.zeros(*K.shape)
    I = TransferMatrix.identity(K.shape[0])
    return _well_posed_inverse(I - (K @ Gyu), "I - K*Gyu") @ K


def validated_minimal(sys: StateSpace, budget: float = 1e-7) -> StateSpace:
    """Strongest state reduction that preserves the frequency response.

    Near-cancelling modes (from noisy upstream data) sit above any fixed
    rank tolerance, so reductions are tried in stages and accepted only if
    probe responses match within ``budget``.
    """
    probes = [1j * w for w in (0.09, 0.83, 4.7, 29.0)]
    try:
        ref = [sys.evaluate(s0) for s0 in probes]
    except np.linalg.LinAlgError:
        return sys
    best = sys

    def try_accept(red):
        nonlocal best
        if red.n >= best.n:
            return
        try:
            ok = all(
                np.abs(red.evaluate(s0) - r).max() <= budget * max(1.0, np.abs(r).max())
                for s0, r in zip(probes, ref)
            )
        except np.linalg.LinAlgError:
            ok = False
        if ok:
            best = red

    for rtol in (1e-10, 3e-8, 1e-6):
        try_accept(ss_minimal(sys, rtol))
    if sys.is_stable():
        for rtol in (1e-10, 1e-8):
            try:
                try_accept(ss_balanced_truncate(best, rtol))
            except np.linalg.LinAlgError:
                pass
    return best


def controller_from_youla(Q: TransferMatrix, Gyu: TransferMatrix, tol: ToleranceConfig | None = None) -> TransferMatrix:
    """Inverse map K = Q (I + Gyu Q)^{-1}.

    Composed in state space and reduced to a minimal realization first: the
    product carries heavy pole/zero cancellation (it undoes the Youla map),
    which coefficient-space rational arithmetic cannot absorb.
    """
    if Q.is_zero():
        return TransferMatrix.zeros(*Q.shape)
    Qss = validated_minimal(as_statespace(Q, tol))
    Gss = as_statespace(Gyu, tol)
    M = ss_add_identity(ss_series(Qss, Gss), sign=1.0)
    K = validated_minimal(ss_series(ss_inverse(M), Qss))
    return ss_to_tf(K, tol)


def internal_stability(G: TransferMatrix, K: TransferMatrix, tol: ToleranceConfig | None = None) -> bool:
    """Stability of the standard four closed-loop maps of the loop u = K y.

    Checks (I-KG)^{-1}K, (I-KG)^{-1}, G(I-KG)^{-1} and (I-GK)^{-1}; all four
    must be proper with every pole strictly in the open left half plane.
    """
    Iq = TransferMatrix.identity(K.shape[0])
    Ip = TransferMatrix.identity(G.shape[0])
    X = _well_posed_inverse(Iq - (K @ G), "I - K*G")
    maps = [X @ K, X, G @ X, _well_posed_inverse(Ip - (G @ K), "I - G*K")]
    return all(M.is_stable(tol) for M in maps)


def closed_loop_state_matrix(plant: "PartitionedPlant", K: StateSpace) -> np.ndarray:
    """State matrix of the plant with the measurement loop u = K y closed."""
    if K.ninputs != plant.p or K.noutputs != plant.q:
        raise ValueError("controller dimensions do not match the plant")
    top = np.hstack([plant.A + plant.B @ K.D @ plant.C, plant.B @ K.C])
    bottom = np.hstack([K.B @ plant.C, K.A])
    return np.vstack([top, bottom])


def closed_loop_wv(plant: "PartitionedPlant", K: TransferMatrix, tol: ToleranceConfig | None = None) -> TransferMatrix:
    """Closed-loop transfer from the inflowing to the outflowing interaction.

    With the loop u = K y closed this is Gwv + Gwu (I - K Gyu)^{-1} K Gyv;
    a retrofit controller leaves it identical to the open-loop Gwv.
    """
    if K.is_zero():
        return plant.Gwv
    Q = youla_parameter(K, plant.Gyu, tol)
    return plant.Gwv + (plant.Gwu @ Q @ plant.Gyv)


# --- plant and environment -------------------------------------------------------


class PartitionedPlant:
    """Stable subsystem of interest with interaction and control channels.

    State-space data (A, L, B, Gamma, C) realizes

        xdot = A x + L v + B u,   w = Gamma x,   y = C x,

    and the four derived transfer blocks Gwv, Gwu, Gyv, Gyu are materialized
    lazily (coefficient-space polynomials degrade for large n; callers at
    scale should use ``eval_blocks`` and the *_ss realizations instead).
    """

    def __init__(self, A, L, B, Gamma, C, *, tol: ToleranceConfig | None = None) -> None:
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")

        def _input_map(M, name):
            M = np.asarray(M, dtype=float)
            if M.ndim != 2:
                M = M.reshape(n, -1) if M.size else M.reshape(n, 0)
            if M.shape[0] != n:
                raise ValueError(f"{name} must have {n} rows, got {M.shape[0]}")
            return M

        def _output_map(M, name):
            M = np.asarray(M, dtype=float)
            if M.ndim != 2:
                M = M.reshape(-1, n) if M.size else M.reshape(0, n)
            if M.shape[1] != n:
                raise ValueError(f"{name} must have {n} columns, got {M.shape[1]}")
            return M

        self.L = _input_map(L, "L")
        self.B = _input_map(B, "B")
        self.Gamma = _output_map(Gamma, "Gamma")
        self.C = _output_map(C, "C")
        self._tol = tol
        self._blocks: dict[str, TransferMatrix] | None = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        """Dimension of the inflowing interaction signal v."""
        return self.L.shape[1]

    @property
    def q(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def wdim(self) -> int:
        return self.Gamma.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)

    def is_stable(self, tol: ToleranceConfig | None = None) -> bool:
        cfg = tol or self._tol or active()
        return bool(np.all(self.eigenvalues().real < -cfg.eps_stab))

    def require_stable(self) -> None:
        if not self.is_stable():
            worst = max(self.eigenvalues(), key=lambda z: z.real)
            raise ValueError(
                "subsystem of interest is unstable: state matrix has an eigenvalue "
                f"at {worst:.6g}; retrofit synthesis requires a stable subsystem"
            )

    # realizations of the individual blocks
    def yu_ss(self) -> StateSpace:
        return StateSpace(self.A, self.B, self.C)

    def yv_ss(self) -> StateSpace:
        return StateSpace(self.A, self.L, self.C)

    def wu_ss(self) -> StateSpace:
        return StateSpace(self.A, self.B, self.Gamma)

    def wv_ss(self) -> StateSpace:
        return StateSpace(self.A, self.L, self.Gamma)

    def _compute_blocks(self) -> dict[str, TransferMatrix]:
        if self._blocks is None:
            stacked = StateSpace(
                self.A,
                np.hstack([self.L, self.B]),
                np.vstack([self.Gamma, self.C]),
            )
            T = ss_to_tf(stacked, self._tol)
            w, m = self.wdim, self.m
            e = T.entries()
            self._blocks = {
                "wv": TransferMatrix(e[:w, :m]),
                "wu": TransferMatrix(e[:w, m:]),
                "yv": TransferMatrix(e[w:, :m]),
                "yu": TransferMatrix(e[w:, m:]),
            }
        return self._blocks

    @property
    def Gwv(self) -> TransferMatrix:
        return self._compute_blocks()["wv"]

    @property
    def Gwu(self) -> TransferMatrix:
        return self._compute_blocks()["wu"]

    @property
    def Gyv(self) -> TransferMatrix:
        return self._compute_blocks()["yv"]

    @property
    def Gyu(self) -> TransferMatrix:
        return self._compute_blocks()["yu"]

    def eval_blocks(self, s0: complex) -> dict[str, np.ndarray]:
        """Pointwise frequency response of all four blocks via linear solves."""
        X = np.linalg.solve(s0 * np.eye(self.n) - self.A, np.hstack([self.L, self.B]))
        W = self.Gamma @ X
        Y = self.C @ X
        m = self.m
        return {"wv": W[:, :m], "wu": W[:, m:], "yv": Y[:, :m], "yu": Y[:, m:]}


class Environment:
    """Proper LTI map from the outflowing to the inflowing interaction."""

    def __init__(self, realization: StateSpace) -> None:
        self.realization = realization

    @staticmethod
    def static(gain) -> "Environment":
        return Environment(StateSpace.static_gain(gain))

    @staticmethod
    def zero(m: int, wdim: int) -> "Environment":
        return Environment(StateSpace.static_gain(np.zeros((m, wdim))))

    @property
    def n(self) -> int:
        return self.realization.n

    def __repr__(self) -> str:
        r = self.realization
        return f"Environment(n={r.n}, w->{r.noutputs})"


def preexisting_closed_state_matrix(plant: PartitionedPlant, env: Environment) -> np.ndarray:
    """State matrix of the plant interconnected with its environment."""
    r = env.realization
    if r.ninputs != plant.wdim or r.noutputs != plant.m:
        raise ValueError(
            f"environment maps {r.ninputs} -> {r.noutputs}, plant expects "
            f"{plant.wdim} -> {plant.m}"
        )
    # w = Gamma x has no feedthrough from v, so the loop is always well posed.
    top = np.hstack([plant.A + plant.L @ r.D @ plant.Gamma, plant.L @ r.C])
    bottom = np.hstack([r.B @ plant.Gamma, r.A])
    return np.vstack([top, bottom])


def preexisting_internally_stable(
    plant: PartitionedPlant, env: Environment, tol: ToleranceConfig | None = None
) -> bool:
    """Whether the plant/environment interconnection is internally stable.

    This decides admissibility of the environment: the combined state matrix
    must have all eigenvalues strictly in the left half plane.
    """
    cfg = tol or active()
    Acl = preexisting_closed_state_matrix(plant, env)
    if Acl.size == 0:
        return True
    return bool(np.all(np.linalg.eigvals(Acl).real < -cfg.eps_stab))


# --- JSON formats ---------------------------------------------------------------


def plant_to_json_dict(plant: PartitionedPlant) -> dict:
    return {
        "A": plant.A.tolist(),
        "L": plant.L.tolist(),
        "B": plant.B.tolist(),
        "Gamma": plant.Gamma.tolist(),
        "C": plant.C.tolist(),
    }


def plant_from_json_dict(d: dict) -> PartitionedPlant:
    missing = [k for k in ("A", "L", "B", "Gamma", "C") if k not in d]
    if missing:
        raise ValueError(f"plant JSON missing keys: {missing}")
    try:
        return PartitionedPlant(d["A"], d["L"], d["B"], d["Gamma"], d["C"])
    except ValueError as exc:
        raise ValueError(f"inconsistent plant JSON: {exc}") from exc
