"""Rectifier construction by measurement-channel inversion.

A rectifier R filters the measurement so that the environment's influence
disappears from the signal handed to the internal controller: R annihilates
the interaction-to-measurement map (R Gyv = 0).  With the interaction signal
measured this is R = [I, -Gyv].  Without it, m independent measurement rows
are inverted to reconstruct the interaction: given a row partition (Pi keeps
p - m rows, Pibar selects m rows for inversion),

    R = Pi - Gyv_kept Gyv_basis^{-1} Pibar,

which is proper exactly when the partition makes the coupling matrix
H = Gyv_kept Gyv_basis^{-1} proper.  This module selects such partitions,
builds R in rational and state-space form, and derives the normal-form
realizations used for controller design and verification at scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ToleranceConfig, active
from .lti import (
    PartitionedPlant,
    StateSpace,
    TransferMatrix,
    normal_rank,
    sample_imaginary_axis,
    ss_to_tf,
)
from .ratpoly import RationalFunction, _pair_roots

__all__ = [
    "OutputPartition",
    "Rectifier",
    "NormalForm",
    "PolyMatrix",
    "check_assumption_invertibility",
    "select_partition",
    "select_partition_structural",
    "enumerate_valid_partitions",
    "build_rectifier",
    "build_rectifier_measured",
    "rectified_plant",
    "relative_degree",
    "normal_form",
    "realize_rectified_plant_nf",
    "realize_rectified_plant_nf_ss",
    "realize_coupling_nf",
    "realize_coupling_nf_ss",
    "rectifier_ss",
    "is_minimum_phase",
]

# systems at or below this state dimension keep rational forms alongside
# realizations; beyond it coefficient-space polynomials lose meaning
RATIONAL_MAX_STATES = 14


@dataclass(frozen=True)
class OutputPartition:
    """Complementary 0/1 row selectors over the p measurement channels.

    ``index_set`` holds the (0-based) rows inverted to reconstruct the
    interaction signal; the remaining rows are kept as rectified outputs.
    """

    index_set: tuple[int, ...]
    p: int

    def __post_init__(self):
        idx = tuple(sorted(set(self.index_set)))
        if idx != tuple(self.index_set):
            object.__setattr__(self, "index_set", idx)
        if not idx:
            raise ValueError("empty inversion index set")
        if idx[0] < 0 or idx[-1] >= self.p:
            raise ValueError(f"index set {idx} out of range for p={self.p}")

    @property
    def m(self) -> int:
        return len(self.index_set)

    @property
    def kept(self) -> tuple[int, ...]:
        sel = set(self.index_set)
        return tuple(i for i in range(self.p) if i not in sel)

    @property
    def pi(self) -> np.ndarray:
        """(p-m) x p selector of the kept rows."""
        M = np.zeros((self.p - self.m, self.p))
        for r, i in enumerate(self.kept):
            M[r, i] = 1.0
        return M

    @property
    def pibar(self) -> np.ndarray:
        """m x p selector of the inverted rows."""
        M = np.zeros((self.m, self.p))
        for r, i in enumerate(self.index_set):
            M[r, i] = 1.0
        return M

    @property
    def pi_dagger(self) -> np.ndarray:
        return self.pi.T

    @property
    def pibar_dagger(self) -> np.ndarray:
        return self.pibar.T


class PolyMatrix:
    """Matrix polynomial in s, stored as ascending coefficient matrices."""

    def __init__(self, coeffs: list[np.ndarray]):
        if not coeffs:
            raise ValueError("need at least the constant coefficient")
        self.coeffs = [np.atleast_2d(np.asarray(c, dtype=float)) for c in coeffs]
        shape = self.coeffs[0].shape
        if any(c.shape != shape for c in self.coeffs):
            raise ValueError("coefficient shapes differ")

    @staticmethod
    def zero(rows: int, cols: int) -> "PolyMatrix":
        return PolyMatrix([np.zeros((rows, cols))])

    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs[0].shape

    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, s0: complex) -> np.ndarray:
        out = np.zeros(self.shape, dtype=complex)
        for k, c in enumerate(self.coeffs):
            out += c * s0**k
        return out


@dataclass
class NormalForm:
    """Coordinates (xi, z) = (T x, Tbar x) exposing the derivative chains of
    the inverted outputs; z spans the dynamics left after the chains."""

    rel_deg: tuple[int, ...]
    T: np.ndarray
    Tbar: np.ndarray
    T_dagger: np.ndarray
    Tbar_dagger: np.ndarray
    A_xx: np.ndarray          # xi <- xi
    A_xz: np.ndarray          # xi <- z
    A_zx: np.ndarray          # z  <- xi
    A_zz: np.ndarray          # z  <- z
    B_zu: np.ndarray
    C_yx: np.ndarray          # kept outputs <- xi
    C_yz: np.ndarray          # kept outputs <- z
    TL: np.ndarray
    TB: np.ndarray
    Du: PolyMatrix            # u-derivative stack in the chain identity
    Dybar: PolyMatrix         # output-derivative stack
    condition_number: float
    partition: OutputPartition


@dataclass
class Rectifier:
    """Annihilating pre-filter for the internal controller's measurement.

    In general mode R has p inputs (the raw measurement) and p - m outputs;
    in measured mode it has p + m inputs (measurement stacked with the
    interaction signal) and p outputs.
    """

    mode: str                                  # "general" | "measured"
    partition: OutputPartition | None
    R_ss: StateSpace
    R: TransferMatrix | None = None
    Gyv_kept: TransferMatrix | None = None     # Pi Gyv
    Gyv_basis: TransferMatrix | None = None    # Pibar Gyv
    nf: NormalForm | None = None

    @property
    def n_outputs(self) -> int:
        return self.R_ss.noutputs

    def evaluate(self, s0: complex) -> np.ndarray:
        return self.R_ss.evaluate(s0)

    def to_json_dict(self) -> dict:
        d = {"mode": self.mode}
        if self.partition is not None:
            d["index_set"] = list(self.partition.index_set)
        if self.R is not None:
            d["R"] = tm_to_json(self.R)
        return d


def tm_to_json(T: TransferMatrix) -> dict:
    return {
        "rows": T.shape[0],
        "cols": T.shape[1],
        "entries": [
            [
                {"num": T[i, j].num.coeffs.tolist(), "den": T[i, j].den.coeffs.tolist()}
                for j in range(T.shape[1])
            ]
            for i in range(T.shape[0])
        ],
    }


def tm_from_json(d: dict) -> TransferMatrix:
    return TransferMatrix(
        [
            [RationalFunction(e["num"], e["den"]) for e in row]
            for row in d["entries"]
        ]
    )


# --- invertibility precondition ---------------------------------------------------


@dataclass(frozen=True)
class InvertibilityReport:
    ok: bool
    reason: str
    rank: int


def check_assumption_invertibility(
    Gyv: TransferMatrix, seed: int = 0, tol: ToleranceConfig | None = None
) -> InvertibilityReport:
    """Left- but not right-invertibility of the interaction-to-output map.

    Rectification by inversion needs the m interaction channels recoverable
    from the measurement (full column rank over the rationals) while leaving
    output directions free (otherwise only K = 0 annihilates Gyv).
    """
    p, m = Gyv.shape
    r = normal_rank(Gyv, seed=seed, tol=tol)
    if r < m:
        return InvertibilityReport(
            False,
            f"interaction map has rank {r} < {m}: redundant interaction "
            "channels; a factorization into an independent interaction map "
            "is required and is not performed here",
            r,
        )
    if r == p:
        return InvertibilityReport(
            False,
            "measurement-to-interaction map is right-invertible; the "
            "annihilation constraint then forces the trivial controller K = 0",
            r,
        )
    return InvertibilityReport(True, "left-invertible and not right-invertible", r)


# --- partition selection -----------------------------------------------------------


def _sample_values(Gyv: TransferMatrix, seed: int, count: int = 7) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    poles = Gyv.poles()
    vals = []
    guard = 0
    while len(vals) < count and guard < 50 * count:
        guard += 1
        theta = rng.uniform(-np.pi / 2, np.pi / 2)
        s0 = 2.0 * np.exp(1j * theta)
        if poles.size and np.min(np.abs(poles - s0)) < 1e-6:
            continue
        vals.append(Gyv.evaluate(s0))
    return vals


def _rows_independent(vals: list[np.ndarray], rows: list[int], eps_rank: float) -> bool:
    """Majority vote over sample points: selected rows have full row rank."""
    votes = 0
    for V in vals:
        M = V[rows, :]
        sv = np.linalg.svd(M, compute_uv=False)
        rank = int(np.sum(sv > eps_rank * sv[0])) if sv.size and sv[0] > 0 else 0
        votes += rank == len(rows)
    return votes > len(vals) // 2


def _entry_reldeg_matrix(H: TransferMatrix) -> np.ndarray:
    """Relative degrees of the entries; zero entries map to +inf (skipped)."""
    p, q = H.shape
    out = np.full((p, q), np.inf)
    for i in range(p):
        for j in range(q):
            if not H[i, j].is_zero:
                out[i, j] = H[i, j].relative_degree()
    return out


def _coupling(Gyv: TransferMatrix, index_set: tuple[int, ...]) -> TransferMatrix:
    part = OutputPartition(index_set, Gyv.shape[0])
    basis = Gyv.row_select(part.index_set)
    kept = Gyv.row_select(part.kept)
    return kept @ basis.inverse()


def select_partition(
    Gyv: TransferMatrix, seed: int = 0, tol: ToleranceConfig | None = None
) -> OutputPartition:
    """Choose m measurement rows whose inversion yields a proper coupling.

    Starts from the lowest-index independent rows and runs the exchange
    procedure: while some coupling entry is improper, the most improper
    coefficient in the first offending row is divided out, swapping that
    basis row for the dependent row.  Termination is guaranteed for
    left-invertible maps; a guard raises if the bound is exceeded.
    """
    cfg = tol or active()
    p, m = Gyv.shape
    report = check_assumption_invertibility(Gyv, seed=seed, tol=tol)
    if not report.ok:
        raise ValueError(f"partition selection impossible: {report.reason}")

    vals = _sample_values(Gyv, seed)
    zero_rows = {i for i in range(p) if all(Gyv[i, j].is_zero for j in range(m))}
    basis: list[int] = []
    for i in range(p):
        if i in zero_rows:
            continue
        if _rows_independent(vals, basis + [i], cfg.eps_rank):
            basis.append(i)
        if len(basis) == m:
            break
    if len(basis) < m:
        raise ValueError("could not find m independent measurement rows")

    index_set = tuple(sorted(basis))
    H = _coupling(Gyv, index_set)
    rd = _entry_reldeg_matrix(H)
    max_abs_rd = np.max(np.abs(rd[np.isfinite(rd)])) if np.isfinite(rd).any() else 0
    guard = max(10 * p, int(p * (1 + max_abs_rd)))
    for _ in range(guard):
        kept = OutputPartition(index_set, p).kept
        rd = _entry_reldeg_matrix(H)
        offending = None
        for r in range(rd.shape[0]):
            row = rd[r, :]
            finite = np.isfinite(row)
            if finite.any() and np.min(row[finite]) < 0:
                offending = (r, int(np.argmin(np.where(finite, row, np.inf))))
                break
        if offending is None:
            return OutputPartition(index_set, p)
        r, c = offending
        entering = kept[r]
        leaving = index_set[c]
        index_set = tuple(sorted((set(index_set) - {leaving}) | {entering}))
        H = _coupling(Gyv, index_set)
    raise RuntimeError(
        "partition exchange did not terminate within "
        f"{guard} iterations (index set {index_set}); relative degrees:\n{rd}"
    )


def enumerate_valid_partitions(
    Gyv: TransferMatrix, tol: ToleranceConfig | None = None, max_p: int = 8
) -> list[tuple[int, ...]]:
    """All index sets giving an invertible basis with proper coupling.

    Exhaustive over m-subsets; intended for small p (cross-checks, tests).
    No optimality ranking is implied.
    """
    from itertools import combinations

    p, m = Gyv.shape
    if p > max_p:
        raise ValueError(f"exhaustive search limited to p <= {max_p}")
    out = []
    for idx in combinations(range(p), m):
        basis = Gyv.row_select(idx)
        if basis.determinant().is_zero:
            continue
        H = Gyv.row_select(OutputPartition(idx, p).kept) @ basis.inverse()
        rd = _entry_reldeg_matrix(H)
        finite = np.isfinite(rd)
        if not finite.any() or np.min(rd[finite]) >= 0:
            out.append(idx)
    return out


def _row_relative_degrees(A: np.ndarray, L: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Per-row interaction relative degree: first k with c_i A^(k-1) L != 0."""
    n = A.shape[0]
    p = C.shape[0]
    out = np.full(p, np.inf)
    Ak = L.copy()
    norm_A = max(np.linalg.norm(A, 2), 1.0)
    for k in range(1, n + 1):
        scale = np.linalg.norm(L, 2) * norm_A ** (k - 1)
        for i in range(p):
            if np.isinf(out[i]):
                v = C[i, :] @ Ak
                if np.linalg.norm(v) > 1e-9 * max(scale * np.linalg.norm(C[i, :]), 1e-12):
                    out[i] = k
        Ak = A @ Ak
    return out


def select_partition_structural(
    plant: PartitionedPlant, tol: ToleranceConfig | None = None
) -> tuple[OutputPartition, NormalForm]:
    """Partition selection on the realization, for plants too large for the
    rational path.

    Rows with the most direct interaction feedthrough (smallest relative
    degree) are preferred, subject to sampled independence.  The returned
    partition is certified by requiring a well-defined vector relative
    degree and a proper normal-form coupling realization.
    """
    cfg = tol or active()
    p, m = plant.p, plant.m
    rho = _row_relative_degrees(plant.A, plant.L, plant.C)
    order = sorted(range(p), key=lambda i: (rho[i], i))

    rng = np.random.default_rng(0)
    pts = [2.0 * np.exp(1j * rng.uniform(-np.pi / 2, np.pi / 2)) for _ in range(7)]
    vals = [plant.eval_blocks(s0)["yv"] for s0 in pts]

    basis: list[int] = []
    for i in order:
        if np.isinf(rho[i]):
            continue
        if _rows_independent(vals, basis + [i], cfg.eps_rank):
            basis.append(i)
        if len(basis) == m:
            break
    if len(basis) < m:
        raise ValueError("could not find m independent measurement rows")
    part = OutputPartition(tuple(sorted(basis)), p)
    nf = normal_form(plant, part, tol=tol)
    _, _, residual = _coupling_absorption(nf)
    if residual > 1e-6:
        raise ValueError(
            "structural partition yields an improper coupling "
            f"(polynomial residual {residual:.3g}); no rational fallback at "
            f"state dimension {plant.n}"
        )
    return part, nf


# --- rectifier construction ---------------------------------------------------------


def build_rectifier(
    plant: PartitionedPlant,
    part: OutputPartition,
    tol: ToleranceConfig | None = None,
    seed: int = 0,
) -> Rectifier:
    """Rational-path rectifier R = Pi - Gyv_kept Gyv_basis^{-1} Pibar."""
    cfg = tol or active()
    Gyv = plant.Gyv
    p, m = Gyv.shape
    if part.p != p or part.m != m:
        raise ValueError("partition does not match the plant dimensions")
    kept = Gyv.row_select(part.kept)
    basis = Gyv.row_select(part.index_set)

    # prefer the normal-form route for the coupling: its realization lives
    # on the small z-coordinates and is numerically exact, while chained
    # rational elimination degrades on ill-conditioned instances
    nf = None
    H = None
    R_ss = None
    try:
        nf = normal_form(plant, part, tol=tol)
    except ValueError:
        nf = None
    if nf is not None:
        try:
            H = ss_to_tf(realize_coupling_nf_ss(nf), tol)
            R_ss = rectifier_ss(nf)
        except ValueError as exc:
            raise ValueError(
                f"partition invalid for index set {part.index_set}: {exc}"
            ) from exc
    if H is None:
        H = kept @ basis.inverse()
        if not H.is_proper():
            raise ValueError(
                "partition invalid: coupling matrix is improper for index set "
                f"{part.index_set}"
            )
    R = TransferMatrix.constant(part.pi) - (H @ TransferMatrix.constant(part.pibar))
    if R_ss is None:
        from .lti import tf_to_ss

        R_ss = tf_to_ss(R, tol)

    # annihilation identity, sampled
    resid = annihilation_residual(R, Gyv, seed=seed)
    if resid > cfg.residual_tol:
        raise ValueError(f"rectifier failed annihilation check: residual {resid:.3g}")

    return Rectifier(
        mode="general",
        partition=part,
        R_ss=R_ss,
        R=R,
        Gyv_kept=kept,
        Gyv_basis=basis,
        nf=nf,
    )


def build_rectifier_measured(
    plant: PartitionedPlant, tol: ToleranceConfig | None = None, rational: bool | None = None
) -> Rectifier:
    """Rectifier [I, -Gyv] acting on the stacked signal (y, v)."""
    n, p, m = plant.n, plant.p, plant.m
    B = np.hstack([np.zeros((n, p)), plant.L])
    D = np.hstack([np.eye(p), np.zeros((p, m))])
    R_ss = StateSpace(plant.A, B, -plant.C, D)
    if rational is None:
        rational = n <= RATIONAL_MAX_STATES
    R = None
    Gyv = None
    if rational:
        Gyv = plant.Gyv
        R = TransferMatrix.hstack([TransferMatrix.identity(p), -Gyv])
    return Rectifier(mode="measured", partition=None, R_ss=R_ss, R=R, Gyv_kept=None, Gyv_basis=Gyv)


def annihilation_residual(
    R: TransferMatrix | StateSpace,
    Gyv: TransferMatrix | StateSpace,
    seed: int = 0,
    count: int = 20,
    stacked_identity: bool = False,
) -> float:
    """max over samples of ||R(s) X(s)||_F / (1 + ||X(s)||_F).

    X is Gyv itself, or col(Gyv, I) when the rectifier acts on the stacked
    (measurement, interaction) signal.
    """
    avoid = []
    for T in (R, Gyv):
        if isinstance(T, TransferMatrix):
            avoid.append(T.poles())
        else:
            avoid.append(T.eigenvalues())
    pts = sample_imaginary_axis(count, seed=seed, avoid=np.concatenate(avoid))
    worst = 0.0
    for s0 in pts:
        Rv = R.evaluate(s0)
        Gv = Gyv.evaluate(s0)
        if stacked_identity:
            Gv = np.vstack([Gv, np.eye(Gv.shape[1])])
        num = np.linalg.norm(Rv @ Gv, "fro")
        den = 1.0 + np.linalg.norm(Gv, "fro")
        worst = max(worst, num / den)
    return worst


def rectified_plant(
    plant: PartitionedPlant, rect: Rectifier, tol: ToleranceConfig | None = None
) -> TransferMatrix:
    """The plant seen by the internal controller (rational path).

    General mode: R Gyu with p - m outputs.  Measured mode: Gyu itself (the
    rectified signal reproduces the interaction-free measurement).
    """
    if rect.mode == "measured":
        return plant.Gyu
    return rect.R @ plant.Gyu


def rectified_plant_ss(plant: PartitionedPlant, rect: Rectifier) -> StateSpace:
    """Realization of the rectified plant for controller design.

    Reduced to its minimal part: the raw normal-form realization can carry
    exactly non-minimal marginal modes (a frequency-type output puts a
    transmission zero at the origin whose drift mode cancels between the
    chain and the coupling), which would break stabilizability.
    """
    from .lti import ss_minimal, tf_to_ss

    if rect.mode == "measured":
        return plant.yu_ss()
    if rect.nf is not None:
        return ss_minimal(realize_rectified_plant_nf_ss(rect.nf))
    return tf_to_ss(rectified_plant(plant, rect))


# --- vector relative degree and normal form -------------------------------------------


def relative_degree(
    A, L, Cbar, tol: ToleranceConfig | None = None
) -> tuple[int, ...]:
    """Vector relative degree of (A, L, Cbar).

    For each output row the count of differentiations until the interaction
    input appears; requires a finite count for every row and a nonsingular
    decoupling matrix col(c_i A^(r_i - 1) L).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    L = np.asarray(L, dtype=float)
    if L.ndim != 2:
        L = L.reshape(A.shape[0], -1)
    Cbar = np.atleast_2d(np.asarray(Cbar, dtype=float))
    n = A.shape[0]
    m = Cbar.shape[0]
    rho = _row_relative_degrees(A, L, Cbar)
    if np.isinf(rho).any():
        bad = [i for i in range(m) if np.isinf(rho[i])]
        raise ValueError(
            f"vector relative degree undefined: rows {bad} never reach the "
            "interaction input within the state dimension"
        )
    r = tuple(int(x) for x in rho)
    dec = np.vstack([Cbar[i, :] @ np.linalg.matrix_power(A, r[i] - 1) @ L for i in range(m)])
    sv = np.linalg.svd(dec, compute_uv=False)
    if sv.size == 0 or sv[-1] <= 1e-9 * max(sv[0], 1e-12):
        raise ValueError("vector relative degree undefined: singular decoupling matrix")
    return r


def normal_form(
    plant: PartitionedPlant, part: OutputPartition, tol: ToleranceConfig | None = None
) -> NormalForm:
    """Coordinate change exposing the derivative chains of the inverted rows.

    T stacks c_i A^(j-1) for each inverted row i up to its relative degree;
    Tbar completes the coordinates with rows annihilating L, so that the
    remaining dynamics is interaction-free.  The inverted outputs depend on
    xi alone because their rows are rows of T, making the complementary
    output condition exact by construction.
    """
    A, L, B, C = plant.A, plant.L, plant.B, plant.C
    n = plant.n
    Cbar = part.pibar @ C
    r = relative_degree(A, L, Cbar, tol)
    sigma = sum(r)

    T_rows = []
    for i, ri in enumerate(r):
        row = Cbar[i, :].copy()
        for _ in range(ri):
            T_rows.append(row.copy())
            row = row @ A
    T = np.vstack(T_rows)

    if sigma > n:
        raise ValueError("relative degree total exceeds the state dimension")
    nz = n - sigma
    if nz == 0:
        Tbar = np.zeros((0, n))
    else:
        # rows annihilating L, chosen along directions independent of T
        import scipy.linalg

        N = scipy.linalg.null_space(L.T).T
        if N.shape[0] < nz:
            raise ValueError("interaction map leaves too few free directions")
        P = np.eye(n) - T.T @ np.linalg.solve(T @ T.T, T)
        U, sv, _ = np.linalg.svd(N @ P, full_matrices=False)
        if sv.size < nz or sv[nz - 1] <= 1e-12 * sv[0]:
            raise ValueError("coordinate completion failed: T and null(L) overlap")
        Tbar = U[:, :nz].T @ N
    S = np.vstack([T, Tbar])
    cond = float(np.linalg.cond(S))
    Sinv = np.linalg.inv(S)
    T_dag = Sinv[:, :sigma]
    Tbar_dag = Sinv[:, sigma:]

    if nz and np.abs(Tbar @ L).max() > 1e-8 * max(1.0, np.abs(L).max()):
        raise ValueError("coordinate completion failed: Tbar L != 0")
    if nz and np.abs(Cbar @ Tbar_dag).max() > 1e-8 * max(1.0, np.abs(Cbar).max()) * cond:
        raise ValueError("coordinate completion failed: inverted outputs leak into z")

    Pi = part.pi
    Cy = Pi @ C
    nfm = NormalForm(
        rel_deg=r,
        T=T,
        Tbar=Tbar,
        T_dagger=T_dag,
        Tbar_dagger=Tbar_dag,
        A_xx=T @ A @ T_dag,
        A_xz=T @ A @ Tbar_dag,
        A_zx=Tbar @ A @ T_dag,
        A_zz=Tbar @ A @ Tbar_dag,
        B_zu=Tbar @ B,
        C_yx=Cy @ T_dag,
        C_yz=Cy @ Tbar_dag,
        TL=T @ L,
        TB=T @ B,
        Du=_build_Du(A, B, Cbar, r),
        Dybar=_build_Dybar(r),
        condition_number=cond,
        partition=part,
    )
    return nfm


def _build_Dybar(r: tuple[int, ...]) -> PolyMatrix:
    """Derivative stack: block i maps output i to (1, s, ..., s^(r_i - 1))."""
    sigma = sum(r)
    m = len(r)
    deg = max(r) - 1
    coeffs = [np.zeros((sigma, m)) for _ in range(deg + 1)]
    at = 0
    for i, ri in enumerate(r):
        for j in range(ri):
            coeffs[j][at + j, i] = 1.0
        at += ri
    return PolyMatrix(coeffs)


def _build_Du(A, B, Cbar, r: tuple[int, ...]) -> PolyMatrix:
    """Input-derivative stack from the chain identity.

    Row (i, j) of the chain satisfies
    (T x)_{i,j} = ybar_i^{(j-1)} - sum_{k=0}^{j-2} c_i A^{j-2-k} B u^{(k)},
    so coefficient k of the stack holds c_i A^{j-2-k} B for rows with
    j >= k + 2.
    """
    sigma = sum(r)
    q = B.shape[1]
    deg = max(max(r) - 2, 0)
    coeffs = [np.zeros((sigma, q)) for _ in range(deg + 1)]
    at = 0
    for i, ri in enumerate(r):
        for j in range(1, ri + 1):
            for k in range(0, j - 1):
                Mk = Cbar[i, :] @ np.linalg.matrix_power(A, j - 2 - k) @ B
                coeffs[k][at + j - 1, :] = Mk
        at += ri
    return PolyMatrix(coeffs)


def _absorb_polynomial_input(
    A: np.ndarray, B_coeffs: list[np.ndarray], C: np.ndarray, D_coeffs: list[np.ndarray]
):
    """Rewrite C (sI-A)^{-1} B(s) + D(s) as C (sI-A)^{-1} Btilde + Dtilde.

    Uses (sI-A)^{-1} s^k = A^k (sI-A)^{-1} + sum_t A^(k-1-t) s^t.  Returns
    (Btilde, Dtilde, residual) where residual measures the polynomial part
    that would remain (zero exactly when the transfer matrix is proper).
    """
    n = A.shape[0]
    q = B_coeffs[0].shape[1]
    rows = C.shape[0]
    Btilde = np.zeros((n, q))
    for k, Bk in enumerate(B_coeffs):
        Btilde += np.linalg.matrix_power(A, k) @ Bk
    max_t = max(len(B_coeffs) - 1, len(D_coeffs) - 1)
    Dtilde = D_coeffs[0].copy() if D_coeffs else np.zeros((rows, q))
    for k in range(1, len(B_coeffs)):
        Dtilde += C @ np.linalg.matrix_power(A, k - 1) @ B_coeffs[k]
    residual = 0.0
    scale = max(1.0, np.max(np.abs(Btilde), initial=0.0), np.max(np.abs(Dtilde), initial=0.0))
    for t in range(1, max_t + 1):
        Pt = D_coeffs[t].copy() if t < len(D_coeffs) else np.zeros((rows, q))
        for k in range(t + 1, len(B_coeffs)):
            Pt += C @ np.linalg.matrix_power(A, k - 1 - t) @ B_coeffs[k]
        residual = max(residual, np.max(np.abs(Pt), initial=0.0) / scale)
    return Btilde, Dtilde, residual


def realize_rectified_plant_nf_ss(nf: NormalForm) -> StateSpace:
    """State-space form of the rectified plant on the z-coordinates.

    The chain identity substitutes the xi-dynamics, leaving
    phi' = A_zz phi + (B_zu - A_zx Du(s)) u, yhat = C_yz phi - C_yx Du(s) u;
    the polynomial input terms are absorbed into (Btilde, Dtilde).
    """
    B_coeffs = [nf.B_zu - nf.A_zx @ nf.Du.coeffs[0]]
    B_coeffs += [-nf.A_zx @ c for c in nf.Du.coeffs[1:]]
    D_coeffs = [-nf.C_yx @ c for c in nf.Du.coeffs]
    Bt, Dt, residual = _absorb_polynomial_input(nf.A_zz, B_coeffs, nf.C_yz, D_coeffs)
    if residual > 1e-6:
        raise ValueError(
            f"rectified-plant realization is improper (residual {residual:.3g}): "
            "numerical breakdown"
        )
    return StateSpace(nf.A_zz, Bt, nf.C_yz, Dt)


def _coupling_absorption(nf: NormalForm):
    B_coeffs = [nf.A_zx @ c for c in nf.Dybar.coeffs]
    D_coeffs = [nf.C_yx @ c for c in nf.Dybar.coeffs]
    return _absorb_polynomial_input(nf.A_zz, B_coeffs, nf.C_yz, D_coeffs)


def realize_coupling_nf_ss(nf: NormalForm) -> StateSpace:
    """State-space form of the coupling Gyv_kept Gyv_basis^{-1}.

    zeta' = A_zz zeta + A_zx Dybar(s) ybar, out = C_yz zeta + C_yx Dybar(s)
    ybar; proper exactly when the partition satisfies the properness
    condition, in which case the polynomial part vanishes.
    """
    Bt, Dt, residual = _coupling_absorption(nf)
    if residual > 1e-6:
        raise ValueError(
            f"coupling realization is improper (residual {residual:.3g}): "
            "partition violates the properness condition"
        )
    return StateSpace(nf.A_zz, Bt, nf.C_yz, Dt)


def realize_rectified_plant_nf(nf: NormalForm, tol: ToleranceConfig | None = None) -> TransferMatrix:
    return ss_to_tf(realize_rectified_plant_nf_ss(nf), tol)


def realize_coupling_nf(nf: NormalForm, tol: ToleranceConfig | None = None) -> TransferMatrix:
    return ss_to_tf(realize_coupling_nf_ss(nf), tol)


def rectifier_ss(nf: NormalForm) -> StateSpace:
    """Realization of R = Pi - coupling * Pibar on the z-coordinates,
    reduced to its minimal part (see rectified_plant_ss)."""
    from .lti import ss_minimal

    coupling = realize_coupling_nf_ss(nf)
    part = nf.partition
    return ss_minimal(
        StateSpace(
            coupling.A,
            coupling.B @ part.pibar,
            -coupling.C,
            part.pi - coupling.D @ part.pibar,
        )
    )


# --- minimum phase ----------------------------------------------------------------


def is_minimum_phase(Gyv_basis: TransferMatrix, tol: ToleranceConfig | None = None) -> bool:
    """All transmission zeros of the (square) inverted map in Re < 0."""
    cfg = tol or active()
    p, m = Gyv_basis.shape
    if p != m:
        raise ValueError("minimum-phase test needs a square transfer matrix")
    det = Gyv_basis.determinant()
    if det.is_zero:
        raise ValueError("inverted map is identically singular")
    zeros = det.zeros()
    poles = det.poles()
    if zeros.size and poles.size:
        cz, _ = _pair_roots(zeros, poles, 1e-5)
        zeros = zeros[~cz]
    return bool(np.all(zeros.real < -cfg.eps_stab))
