"""Internal-controller design and retrofit-controller assembly.

The synthesis pipeline: pick an output partition, build the rectifier R,
design an internal controller for the rectified plant (LQG: regulator gain
plus observer, both from Riccati solutions), and assemble K = Khat R.  The
verification suite checks the defining properties directly: stability of the
Youla parameter, annihilation of the interaction-to-measurement map, and
invariance of the closed-loop interaction transfer.

Stability checks on synthesized controllers run on composed realizations.
The rectifier state reproduces part of the plant dynamics, and in closed
loop those shared modes cancel structurally (a coordinate change makes the
closed-loop state matrix block triangular), so realization eigenvalues are
exact for this architecture, at any scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .config import ToleranceConfig, active
from .lti import (
    Environment,
    PartitionedPlant,
    StateSpace,
    TransferMatrix,
    preexisting_closed_state_matrix,
    preexisting_internally_stable,
    sample_imaginary_axis,
    ss_series,
    ss_to_tf,
    tf_to_ss,
    youla_parameter,
)
from .rectifier import (
    RATIONAL_MAX_STATES,
    Rectifier,
    build_rectifier,
    build_rectifier_measured,
    check_assumption_invertibility,
    is_minimum_phase,
    realize_coupling_nf_ss,
    rectified_plant_ss,
    select_partition,
    select_partition_structural,
    tm_to_json,
)

__all__ = [
    "SynthesisWeights",
    "VerificationFailed",
    "RetrofitController",
    "RectifyingReport",
    "RetrofitReport",
    "InternalConditionsReport",
    "care_solve",
    "lqg_controller",
    "synthesize_retrofit",
    "verify_output_rectifying",
    "verify_retrofit_general",
    "verify_internal_conditions",
    "random_admissible_environment",
    "invariance_residual",
    "closed_loop_with_environment",
    "retrofit_property_holds",
]


class VerificationFailed(ValueError):
    """A synthesized controller failed its post-verification."""


# --- Riccati and LQG kernels -------------------------------------------------------


def care_solve(A, B, Q, Rw) -> np.ndarray:
    """Stabilizing solution of A'X + XA - X B Rw^{-1} B' X + Q = 0.

    Computed from the stable invariant subspace of the Hamiltonian matrix
    (ordered real Schur form).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Rw = np.atleast_2d(np.asarray(Rw, dtype=float))
    G = B @ np.linalg.solve(Rw, B.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    T, Z, sdim = scipy.linalg.schur(H, sort="lhp")
    if sdim != n:
        raise ValueError(
            "no stabilizing solution: the Hamiltonian matrix has "
            f"{sdim} strictly stable eigenvalues, expected {n} "
            "(eigenvalues on the imaginary axis)"
        )
    U1 = Z[:n, :n]
    U2 = Z[n:, :n]
    X = np.linalg.solve(U1.T, U2.T).T
    X = (X + X.T) / 2.0
    resid = A.T @ X + X @ A - X @ G @ X + Q
    if np.linalg.norm(resid, "fro") > 1e-8 * (1.0 + np.linalg.norm(X, "fro")):
        raise ValueError(
            f"Riccati residual {np.linalg.norm(resid, 'fro'):.3g} exceeds tolerance"
        )
    return X


@dataclass(frozen=True)
class SynthesisWeights:
    """LQG design weights; scalars broadcast to identity matrices."""

    state_weight: float | np.ndarray = 1.0
    input_weight: float | np.ndarray = 1.0
    process_noise: float | np.ndarray = 1.0
    measurement_noise: float | np.ndarray = 1.0

    def _mat(self, w, dim: int, name: str, strict: bool) -> np.ndarray:
        M = np.asarray(w, dtype=float)
        if M.ndim == 0:
            M = float(M) * np.eye(dim)
        if M.shape != (dim, dim):
            raise ValueError(f"{name} must be {dim}x{dim}, got {M.shape}")
        eigs = np.linalg.eigvalsh((M + M.T) / 2.0)
        if strict and eigs.min() <= 0:
            raise ValueError(f"{name} must be positive definite")
        if not strict and eigs.min() < 0:
            raise ValueError(f"{name} must be positive semidefinite")
        return M

    def resolve(self, n: int, q: int, p: int):
        return (
            self._mat(self.state_weight, n, "state_weight", strict=False),
            self._mat(self.input_weight, q, "input_weight", strict=True),
            self._mat(self.process_noise, n, "process_noise", strict=False),
            self._mat(self.measurement_noise, p, "measurement_noise", strict=True),
        )

    @staticmethod
    def from_json_dict(d: dict) -> "SynthesisWeights":
        def pick(key):
            v = d.get(key, 1.0)
            return np.asarray(v, dtype=float) if isinstance(v, list) else float(v)

        return SynthesisWeights(
            state_weight=pick("state_weight"),
            input_weight=pick("input_weight"),
            process_noise=pick("process_noise"),
            measurement_noise=pick("measurement_noise"),
        )


def _pbh_check(A: np.ndarray, M: np.ndarray, kind: str, tol: float = 1e-8) -> None:
    """Rank test [A - lambda I, M] at each unstable eigenvalue."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real < 0:
            continue
        stacked = np.hstack([A - lam * np.eye(n), M])
        sv = np.linalg.svd(stacked, compute_uv=False)
        if sv[-1] <= tol * max(sv[0], 1.0):
            raise ValueError(f"{kind} fails at eigenvalue {lam:.6g}")


def lqg_controller(
    sys: StateSpace, weights: SynthesisWeights | None = None
) -> StateSpace:
    """Observer-based stabilizing controller for the loop u = K y.

    Regulator gain from the control Riccati equation, injection gain from
    its dual; the controller realization is
    xhat' = (A + B F - H C - H D F) xhat + H y,  u = F xhat.
    """
    weights = weights or SynthesisWeights()
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    n, q, p = sys.n, sys.ninputs, sys.noutputs
    if n == 0:
        raise ValueError("static plant needs no dynamic controller")
    Qx, Ru, W, V = weights.resolve(n, q, p)
    _pbh_check(A, B, "stabilizability")
    _pbh_check(A.T, C.T, "detectability")
    X = care_solve(A, B, Qx, Ru)
    F = -np.linalg.solve(Ru, B.T @ X)
    Y = care_solve(A.T, C.T, W, V)
    Hg = np.linalg.solve(V, C @ Y).T
    AK = A + B @ F - Hg @ C - Hg @ D @ F
    return StateSpace(AK, Hg, F, np.zeros((q, p)))


# --- verification reports ------------------------------------------------------------


@dataclass
class RectifyingReport:
    """Outcome of the annihilation check Q Gyv = 0 with stable Q."""

    q_stable: bool
    annihilation_residual: float
    passed: bool
    mode: str

    def to_json_dict(self) -> dict:
        return {
            "q_stable": self.q_stable,
            "annihilation_residual": self.annihilation_residual,
            "output_rectifying": self.passed,
            "mode": self.mode,
        }


@dataclass
class RetrofitReport:
    """Outcome of the weaker interaction-invariance check Gwu Q Gyv = 0."""

    q_stable: bool
    invariance_residual: float
    passed: bool

    def to_json_dict(self) -> dict:
        return {
            "q_stable": self.q_stable,
            "invariance_residual": self.invariance_residual,
            "retrofit": self.passed,
        }


@dataclass
class InternalConditionsReport:
    """Conditions on the internal controller that characterize rectification.

    ``qhat_stable`` and ``coupling_term_stable`` are jointly equivalent to a
    stable Youla parameter of the assembled controller; the minimum-phase
    shortcut makes the second condition automatic, and stability of the
    design-realization loop is the sufficient condition actually used for
    synthesis.
    """

    qhat_stable: bool
    coupling_term_stable: bool
    passed: bool
    basis_minimum_phase: bool | None
    design_loop_stable: bool

    def to_json_dict(self) -> dict:
        return {
            "qhat_stable": self.qhat_stable,
            "coupling_term_stable": self.coupling_term_stable,
            "passed": self.passed,
            "basis_minimum_phase": self.basis_minimum_phase,
            "design_loop_stable": self.design_loop_stable,
        }


# --- controller container -------------------------------------------------------------


@dataclass
class RetrofitController:
    """Assembled retrofit controller K = Khat R with diagnostics.

    ``k_ss`` acts on the raw measurement (general mode, p inputs) or on the
    stacked measurement and interaction signal (measured mode, p + m
    inputs).  Rational forms are materialized lazily and only for moderate
    state dimension.
    """

    mode: str
    rect: Rectifier
    khat_ss: StateSpace
    k_ss: StateSpace
    verification: RectifyingReport | None = None
    internal: InternalConditionsReport | None = None
    _khat_tm: TransferMatrix | None = field(default=None, repr=False)
    _k_tm: TransferMatrix | None = field(default=None, repr=False)

    @property
    def Khat(self) -> TransferMatrix:
        if self._khat_tm is None:
            if self.khat_ss.n > 3 * RATIONAL_MAX_STATES:
                raise ValueError(
                    "internal controller too large for a rational form; "
                    "use the realization khat_ss"
                )
            self._khat_tm = ss_to_tf(self.khat_ss)
        return self._khat_tm

    @property
    def K(self) -> TransferMatrix:
        if self._k_tm is None:
            if self.rect.R is not None:
                self._k_tm = self.Khat @ self.rect.R
            else:
                if self.k_ss.n > 3 * RATIONAL_MAX_STATES:
                    raise ValueError(
                        "controller too large for a rational form; use the "
                        "realization k_ss"
                    )
                self._k_tm = ss_to_tf(self.k_ss)
        return self._k_tm

    def to_json_dict(self, include_rational: bool = True) -> dict:
        d: dict = {"mode": self.mode}
        if self.rect.partition is not None:
            d["index_set"] = list(self.rect.partition.index_set)
        if self.verification is not None:
            d["verification"] = self.verification.to_json_dict()
        if self.internal is not None:
            d["internal_conditions"] = self.internal.to_json_dict()
        if include_rational:
            d["Khat"] = tm_to_json(self.Khat)
            if self.rect.R is not None:
                d["R"] = tm_to_json(self.rect.R)
            d["K"] = tm_to_json(self.K)
        return d


# --- pointwise loop evaluation ----------------------------------------------------------


def _extended_blocks(plant: PartitionedPlant, s0: complex, measured: bool):
    """Pointwise (Gyu~, Gyv~, Gwu, Gwv): extended maps stack the interaction
    identity below the measurement when the controller consumes (y, v)."""
    blocks = plant.eval_blocks(s0)
    Gyu, Gyv = blocks["yu"], blocks["yv"]
    if measured:
        m = plant.m
        Gyu = np.vstack([Gyu, np.zeros((m, plant.q))])
        Gyv = np.vstack([Gyv, np.eye(m)])
    return Gyu, Gyv, blocks["wu"], blocks["wv"]


def _controller_value(K, s0: complex) -> np.ndarray:
    if isinstance(K, RetrofitController):
        return K.k_ss.evaluate(s0)
    return K.evaluate(s0)


def _controller_input_dim(K) -> int:
    if isinstance(K, RetrofitController):
        return K.k_ss.ninputs
    if isinstance(K, StateSpace):
        return K.ninputs
    return K.shape[1]


def _youla_value(K, plant: PartitionedPlant, s0: complex, measured: bool) -> np.ndarray:
    Gyu, _, _, _ = _extended_blocks(plant, s0, measured)
    Kv = _controller_value(K, s0)
    q = Kv.shape[0]
    return np.linalg.solve(np.eye(q) - Kv @ Gyu, Kv)


def _sample_points(plant: PartitionedPlant, K, count: int, seed: int) -> np.ndarray:
    avoid = [np.linalg.eigvals(plant.A)]
    if isinstance(K, RetrofitController):
        avoid.append(K.k_ss.eigenvalues())
    elif isinstance(K, StateSpace):
        avoid.append(K.eigenvalues())
    else:
        avoid.append(K.poles())
    return sample_imaginary_axis(count, seed=seed, avoid=np.concatenate(avoid))


def _q_stability(K, plant: PartitionedPlant, measured: bool, cfg: ToleranceConfig) -> bool:
    """Stability of the Youla parameter of K for the (extended) plant.

    Realizations go through the closed-loop state matrix; rational
    controllers of moderate size use the rational path.
    """
    if isinstance(K, TransferMatrix):
        if K.is_zero():
            return True
        p, m, q = plant.p, plant.m, plant.q
        Gyu = plant.Gyu
        if measured:
            Gyu = TransferMatrix.vstack([Gyu, TransferMatrix.zeros(m, q)])
        return youla_parameter(K, Gyu).is_stable(cfg)
    Kss = K.k_ss if isinstance(K, RetrofitController) else K
    n, nk = plant.n, Kss.n
    Cext = plant.C
    if measured:
        # the interaction input of the controller is driven by v, which is
        # zero in the Youla loop (no environment attached)
        Cext = np.vstack([plant.C, np.zeros((plant.m, n))])
    top = np.hstack([plant.A + plant.B @ Kss.D @ Cext, plant.B @ Kss.C])
    bottom = np.hstack([Kss.B @ Cext, Kss.A])
    Acl = np.vstack([top, bottom])
    if Acl.size == 0:
        return True
    return bool(np.all(np.linalg.eigvals(Acl).real < -cfg.eps_stab))


# --- verification -------------------------------------------------------------------------


def verify_output_rectifying(
    plant: PartitionedPlant,
    K,
    tol: ToleranceConfig | None = None,
    seed: int = 0,
    count: int = 20,
) -> RectifyingReport:
    """Check the defining property: stable Youla parameter annihilating the
    interaction-to-measurement map."""
    cfg = tol or active()
    kin = _controller_input_dim(K)
    if kin == plant.p:
        measured = False
    elif kin == plant.p + plant.m:
        measured = True
    else:
        raise ValueError(f"controller has {kin} inputs; expected p or p+m")
    q_stable = _q_stability(K, plant, measured, cfg)
    worst = 0.0
    for s0 in _sample_points(plant, K, count, seed):
        _, Gyv, _, _ = _extended_blocks(plant, s0, measured)
        Qv = _youla_value(K, plant, s0, measured)
        worst = max(
            worst,
            np.linalg.norm(Qv @ Gyv, "fro") / (1.0 + np.linalg.norm(Gyv, "fro")),
        )
    passed = bool(q_stable and worst <= cfg.residual_tol)
    return RectifyingReport(bool(q_stable), float(worst), passed, "measured" if measured else "general")


def verify_retrofit_general(
    plant: PartitionedPlant,
    K,
    tol: ToleranceConfig | None = None,
    seed: int = 0,
    count: int = 20,
) -> RetrofitReport:
    """Necessary-and-sufficient retrofit check for a stable subsystem: the
    Youla parameter is stable and Gwu Q Gyv vanishes."""
    cfg = tol or active()
    plant.require_stable()
    kin = _controller_input_dim(K)
    measured = kin == plant.p + plant.m
    q_stable = _q_stability(K, plant, measured, cfg)
    worst = 0.0
    for s0 in _sample_points(plant, K, count, seed):
        _, Gyv, Gwu, _ = _extended_blocks(plant, s0, measured)
        Qv = _youla_value(K, plant, s0, measured)
        M = Gwu @ Qv @ Gyv
        scale = 1.0 + np.linalg.norm(Gwu, "fro") * np.linalg.norm(Gyv, "fro")
        worst = max(worst, np.linalg.norm(M, "fro") / scale)
    passed = bool(q_stable and worst <= cfg.residual_tol)
    return RetrofitReport(bool(q_stable), float(worst), passed)


def invariance_residual(
    plant: PartitionedPlant,
    K,
    tol: ToleranceConfig | None = None,
    seed: int = 0,
    count: int = 20,
) -> float:
    """Sampled residual of the closed-loop interaction invariance.

    The closed-loop transfer from inflowing to outflowing interaction must
    equal the open-loop one; the residual is the worst relative deviation.
    """
    kin = _controller_input_dim(K)
    measured = kin == plant.p + plant.m
    worst = 0.0
    for s0 in _sample_points(plant, K, count, seed):
        _, Gyv, Gwu, Gwv = _extended_blocks(plant, s0, measured)
        Qv = _youla_value(K, plant, s0, measured)
        Mwv = Gwv + Gwu @ Qv @ Gyv
        worst = max(
            worst,
            np.linalg.norm(Mwv - Gwv, "fro") / (1.0 + np.linalg.norm(Gwv, "fro")),
        )
    return float(worst)


def _qhat_coupling_realization(nf, khat: StateSpace) -> StateSpace:
    """Realization of Qhat * coupling on shared z-coordinates.

    The rectified plant and the coupling share their state matrix; merging
    the two copies (sigma = zeta + phi) removes the cancelling modes, so the
    realization is stable exactly when the internal loop is.
    """
    from .rectifier import _coupling_absorption, realize_rectified_plant_nf_ss

    plant13 = realize_rectified_plant_nf_ss(nf)
    Bc, Dc, _ = _coupling_absorption(nf)
    Azz, B13, Cyz, D13 = plant13.A, plant13.B, plant13.C, plant13.D
    AK, BK, CK, DK = khat.A, khat.B, khat.C, khat.D
    W = np.linalg.inv(np.eye(DK.shape[0]) - DK @ D13)
    # u = W (CK xK + DK Cyz sigma + DK Dc ybar)
    WCK = W @ CK
    WDKC = W @ DK @ Cyz
    WDKDc = W @ DK @ Dc
    A = np.block(
        [
            [Azz + B13 @ WDKC, B13 @ WCK],
            [BK @ (Cyz + D13 @ WDKC), AK + BK @ D13 @ WCK],
        ]
    )
    B = np.vstack([Bc + B13 @ WDKDc, BK @ (Dc + D13 @ WDKDc)])
    C = np.hstack([WDKC, WCK])
    D = WDKDc
    from .lti import ss_minimal

    return ss_minimal(StateSpace(A, B, C, D))


def verify_internal_conditions(
    plant: PartitionedPlant,
    khat: StateSpace,
    rect: Rectifier,
    tol: ToleranceConfig | None = None,
) -> InternalConditionsReport:
    """Conditions on the internal controller equivalent to rectification.

    Checks stability of the internal Youla parameter and of its product
    with the coupling matrix; reports the minimum-phase shortcut (stable
    inverted basis makes the product condition automatic) and whether the
    internal controller stabilizes the design realization, the sufficient
    condition used by the synthesis.
    """
    cfg = tol or active()
    if rect.mode != "general":
        raise ValueError("internal conditions apply to the general-mode rectifier")
    design = rectified_plant_ss(plant, rect)
    top = np.hstack([design.A + design.B @ khat.D @ design.C, design.B @ khat.C])
    bottom = np.hstack([khat.B @ design.C, khat.A])
    Acl = np.vstack([top, bottom])
    design_loop_stable = bool(np.all(np.linalg.eigvals(Acl).real < -cfg.eps_stab)) if Acl.size else True
    qhat_stable = design_loop_stable

    basis_min_phase = None
    if rect.nf is not None:
        zero_dyn = np.linalg.eigvals(rect.nf.A_zz) if rect.nf.A_zz.size else np.zeros(0)
        basis_min_phase = bool(np.all(zero_dyn.real < -cfg.eps_stab))
    elif rect.Gyv_basis is not None:
        basis_min_phase = is_minimum_phase(rect.Gyv_basis, cfg)

    if rect.nf is not None:
        QH = _qhat_coupling_realization(rect.nf, khat)
        coupling_stable = QH.is_stable(cfg)
    else:
        # rational fallback: moderate sizes only
        Ghat = ss_to_tf(design)
        Khat_tm = ss_to_tf(khat)
        Qhat = youla_parameter(Khat_tm, Ghat)
        qhat_stable = Qhat.is_stable(cfg)
        H = rect.Gyv_kept @ rect.Gyv_basis.inverse()
        coupling_stable = (Qhat @ H).is_stable(cfg)

    return InternalConditionsReport(
        qhat_stable=bool(qhat_stable),
        coupling_term_stable=bool(coupling_stable),
        passed=bool(qhat_stable and coupling_stable),
        basis_minimum_phase=None if basis_min_phase is None else bool(basis_min_phase),
        design_loop_stable=bool(design_loop_stable),
    )


# --- environment sampling and closed loops ------------------------------------------------


def _interconnection_norm(plant: PartitionedPlant) -> float:
    worst = 0.0
    for s0 in (1e-3 + 0j, 0.1j, 0.316j, 1j, 3.16j, 10j, 100j):
        W = plant.eval_blocks(s0)["wv"]
        if W.size:
            worst = max(worst, np.linalg.svd(W, compute_uv=False)[0])
    return worst


def random_admissible_environment(
    plant: PartitionedPlant,
    seed: int = 0,
    max_states: int = 4,
    max_draws: int = 1000,
) -> tuple[Environment, int]:
    """Rejection-sample an environment keeping the interconnection stable.

    Draws random stable realizations with eigenvalues pushed left of -0.1
    and gains scaled against the plant's interaction transfer (small-gain
    bias keeps the acceptance rate high); accepts when the combined state
    matrix is stable.  Returns the sample and the number of draws used.
    """
    rng = np.random.default_rng(seed)
    m, wdim = plant.m, plant.wdim
    norm_wv = _interconnection_norm(plant)
    for draw in range(1, max_draws + 1):
        nbar = int(rng.integers(0, max_states + 1))
        if nbar:
            M = rng.standard_normal((nbar, nbar))
            shift = max(np.linalg.eigvals(M).real.max(), 0.0) + 0.1 + rng.uniform(0.0, 0.5)
            Abar = M - shift * np.eye(nbar)
            Bbar = rng.standard_normal((nbar, wdim))
            Cbar = rng.standard_normal((m, nbar))
        else:
            Abar = np.zeros((0, 0))
            Bbar = np.zeros((0, wdim))
            Cbar = np.zeros((m, 0))
        Dbar = rng.standard_normal((m, wdim))
        env = Environment(StateSpace(Abar, Bbar, Cbar, Dbar))
        # rescale to a gain target below the small-gain bound, with headroom
        # so that some draws are rejected and admissibility does real work
        actual = 0.0
        for s0 in (1e-3 + 0j, 0.1j, 1j, 10j):
            actual = max(actual, np.linalg.svd(env.realization.evaluate(s0), compute_uv=False)[0])
        target = rng.uniform(0.1, 1.4) / (1.0 + norm_wv)
        if actual > 0:
            g = target / actual
            env = Environment(StateSpace(Abar, Bbar, g * Cbar if nbar else Cbar, g * Dbar))
        if preexisting_internally_stable(plant, env):
            return env, draw
    raise RuntimeError(
        f"no admissible environment found in {max_draws} draws; "
        "the plant is pathologically sensitive to interconnection"
    )


def closed_loop_with_environment(
    plant: PartitionedPlant, env: Environment, K
) -> np.ndarray:
    """State matrix of plant + environment + controller.

    The controller input is the raw measurement (general mode) or the
    measurement stacked with the reconstructed interaction signal v
    (measured mode), which in closed loop is the environment output.
    """
    r = env.realization
    Kss = K.k_ss if isinstance(K, RetrofitController) else K
    if isinstance(Kss, TransferMatrix):
        Kss = tf_to_ss(Kss)
    n, nbar, nk = plant.n, r.n, Kss.n
    measured = Kss.ninputs == plant.p + plant.m
    if not measured and Kss.ninputs != plant.p:
        raise ValueError("controller input dimension matches neither mode")

    # controller input map over (x, xbar):  y = C x;  v = Cbar xbar + Dbar Gamma x
    Cy = np.hstack([plant.C, np.zeros((plant.p, nbar))])
    if measured:
        Cv = np.hstack([r.D @ plant.Gamma, r.C])
        Cin = np.vstack([Cy, Cv])
    else:
        Cin = Cy

    # x' = A x + L v + B u,  xbar' = Abar xbar + Bbar Gamma x
    A_pre = preexisting_closed_state_matrix(plant, env)
    Bu = np.vstack([plant.B, np.zeros((nbar, plant.q))])
    u_of_states = Kss.D @ Cin  # over (x, xbar)
    top = A_pre + Bu @ u_of_states
    Acl = np.block(
        [
            [top, Bu @ Kss.C],
            [Kss.B @ Cin, Kss.A],
        ]
    )
    return Acl


def retrofit_property_holds(
    plant: PartitionedPlant,
    K,
    n_envs: int = 50,
    seed: int = 0,
    tol: ToleranceConfig | None = None,
    margin: float = 1e-6,
) -> bool:
    """Monte Carlo check of the retrofit guarantee: the closed loop stays
    internally stable for every sampled admissible environment."""
    for k in range(n_envs):
        env, _ = random_admissible_environment(plant, seed=seed + 1000 * k)
        Acl = closed_loop_with_environment(plant, env, K)
        if not np.all(np.linalg.eigvals(Acl).real < -margin):
            return False
    return True


# --- the synthesis algorithm ------------------------------------------------------------


def _interaction_rank(plant: PartitionedPlant, seed: int, cfg: ToleranceConfig) -> int:
    rng = np.random.default_rng(seed)
    best = 0
    for _ in range(7):
        s0 = 2.0 * np.exp(1j * rng.uniform(-np.pi / 2, np.pi / 2))
        sv = np.linalg.svd(plant.eval_blocks(s0)["yv"], compute_uv=False)
        if sv.size and sv[0] > 0:
            best = max(best, int(np.sum(sv > cfg.eps_rank * sv[0])))
    return best


def synthesize_retrofit(
    plant: PartitionedPlant,
    weights: SynthesisWeights | None = None,
    mode: str = "general",
    seed: int = 0,
    tol: ToleranceConfig | None = None,
    verify_envs: int = 0,
) -> RetrofitController:
    """Assemble a retrofit controller K = Khat R for a stable subsystem.

    Steps: choose the output partition (general mode), build the rectifier,
    design the internal controller on a realization of the rectified plant
    (the normal-form realization when the vector relative degree exists,
    otherwise a realization of the rational product), and post-verify the
    rectifying property.  Fails loudly if any step or the verification does
    not hold.
    """
    cfg = tol or active()
    weights = weights or SynthesisWeights()
    if mode not in ("measured", "general"):
        raise ValueError(f"unknown mode {mode!r}")
    plant.require_stable()

    if mode == "measured":
        rect = build_rectifier_measured(plant, tol)
    else:
        rank = _interaction_rank(plant, seed, cfg)
        if rank == plant.p:
            raise ValueError(
                "measurement-to-interaction map is right-invertible: only the "
                "trivial controller K = 0 rectifies the output"
            )
        if rank < plant.m:
            raise ValueError(
                f"interaction map has rank {rank} < {plant.m}: redundant "
                "interaction channels are not supported"
            )
        if plant.n <= RATIONAL_MAX_STATES:
            part = select_partition(plant.Gyv, seed=seed, tol=tol)
            rect = build_rectifier(plant, part, tol=tol, seed=seed)
        else:
            part, nf = select_partition_structural(plant, tol=tol)
            from .rectifier import rectifier_ss

            rect = Rectifier(
                mode="general", partition=part, R_ss=rectifier_ss(nf), nf=nf
            )

    design = rectified_plant_ss(plant, rect)
    khat = lqg_controller(design, weights)
    k_ss = ss_series(rect.R_ss, khat)
    ctrl = RetrofitController(mode=mode, rect=rect, khat_ss=khat, k_ss=k_ss)

    report = verify_output_rectifying(plant, ctrl, tol=tol, seed=seed)
    ctrl.verification = report
    if not report.passed:
        raise VerificationFailed(
            "synthesis produced a controller that fails the rectifying "
            f"verification: q_stable={report.q_stable}, "
            f"annihilation residual {report.annihilation_residual:.3g}"
        )
    if mode == "general":
        ctrl.internal = verify_internal_conditions(plant, khat, rect, tol=tol)
        if not ctrl.internal.passed:
            raise VerificationFailed(
                "synthesis produced a controller that fails the internal "
                f"conditions: {ctrl.internal.to_json_dict()}"
            )
    if verify_envs:
        if not retrofit_property_holds(plant, ctrl, n_envs=verify_envs, seed=seed):
            raise VerificationFailed("closed loop lost stability for a sampled environment")
    return ctrl
