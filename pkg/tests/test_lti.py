import numpy as np
import numpy.testing as npt
import pytest

from conftest import (
    random_rf,
    random_plant,
    random_stable_matrix,
    random_stable_tm,
    random_stable_tm_shared_den,
)
from retrofit_control.lti import (
    Environment,
    PartitionedPlant,
    StateSpace,
    TransferMatrix,
    closed_loop_wv,
    controller_from_youla,
    internal_stability,
    normal_rank,
    plant_from_json_dict,
    plant_to_json_dict,
    preexisting_internally_stable,
    sample_imaginary_axis,
    ss_to_tf,
    tf_to_ss,
    youla_parameter,
)
from retrofit_control.ratpoly import Polynomial, RationalFunction


def rf(num, den=(1.0,)):
    return RationalFunction(Polynomial(num), Polynomial(den))


class TestSsToTf:
    def test_double_integrator(self):
        sys = StateSpace([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [[1.0, 0.0]])
        T = ss_to_tf(sys)
        npt.assert_allclose(T[0, 0].num.coeffs, [1.0], atol=1e-12)
        npt.assert_allclose(T[0, 0].den.coeffs, [0.0, 0.0, 1.0], atol=1e-12)

    def test_static_gain(self):
        T = ss_to_tf(StateSpace.static_gain([[2.0]]))
        assert T[0, 0].approx_equal(rf([2.0]))

    def test_first_order_lag(self):
        T = ss_to_tf(StateSpace([[-1.0]], [[1.0]], [[1.0]]))
        assert T[0, 0].approx_equal(rf([1.0], [1.0, 1.0]))

    def test_matches_resolvent_solve(self):
        # oracle: direct frequency response via linear solves
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = int(rng.integers(1, 11))
            sys = StateSpace(
                random_stable_matrix(rng, n),
                rng.standard_normal((n, 2)),
                rng.standard_normal((3, n)),
                rng.standard_normal((3, 2)),
            )
            T = ss_to_tf(sys)
            for s0 in sample_imaginary_axis(20, seed=5):
                want = sys.evaluate(s0)
                got = T.evaluate(s0)
                scale = max(1.0, np.abs(want).max())
                assert np.abs(got - want).max() <= 1e-8 * scale


class TestTfToSs:
    def test_first_order(self):
        sys = tf_to_ss(TransferMatrix([[rf([1.0], [1.0, 1.0])]]))
        assert sys.n == 1
        npt.assert_allclose(sys.evaluate(0.0), [[1.0]], atol=1e-12)

    def test_improper_errors(self):
        T = TransferMatrix([[rf([1.0, 2.0, 1.0], [2.0, 1.0])]])
        with pytest.raises(ValueError, match="improper"):
            tf_to_ss(T)

    def test_roundtrip_on_random_stable_3x2(self):
        # frequency-sampling oracle for the roundtrip contract
        rng = np.random.default_rng(23)
        for _ in range(8):
            T = random_stable_tm_shared_den(rng, 3, 2, den_deg=3)
            sys = tf_to_ss(T)
            back = ss_to_tf(sys)
            for s0 in sample_imaginary_axis(20, seed=9, avoid=T.poles()):
                want = T.evaluate(s0)
                got = back.evaluate(s0)
                scale = max(1.0, np.abs(want).max())
                assert np.abs(got - want).max() <= 1e-8 * scale

    def test_static_column(self):
        T = TransferMatrix([[rf([2.0]), rf([1.0], [1.0, 1.0])]])
        sys = tf_to_ss(T)
        npt.assert_allclose(sys.evaluate(1.0), [[2.0, 0.5]], atol=1e-12)


class TestEvaluation:
    def test_scalar(self):
        T = TransferMatrix([[rf([1.0], [1.0, 1.0])]])
        npt.assert_allclose(T.evaluate(0.0), [[1.0]])

    def test_identity(self):
        T = TransferMatrix.identity(2)
        npt.assert_allclose(T.evaluate(1.7 + 0.3j), np.eye(2))

    def test_pole_errors(self):
        T = TransferMatrix([[rf([1.0], [0.0, 1.0])]])
        with pytest.raises(ValueError, match="pole"):
            T.evaluate(0.0)


class TestNormalRank:
    def test_column_of_lags(self):
        T = TransferMatrix([[rf([1.0], [1.0, 1.0])], [rf([1.0], [2.0, 1.0])]])
        assert normal_rank(T) == 1

    def test_zero_matrix(self):
        assert normal_rank(TransferMatrix.zeros(2, 2)) == 0

    def test_identity(self):
        assert normal_rank(TransferMatrix.identity(2)) == 2

    def test_invariant_under_constant_equivalence(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            T = random_stable_tm(rng, 3, 2)
            r = normal_rank(T)
            U = rng.standard_normal((3, 3)) + np.eye(3)
            V = rng.standard_normal((2, 2)) + np.eye(2)
            while abs(np.linalg.det(U)) < 1e-3:
                U = rng.standard_normal((3, 3)) + np.eye(3)
            while abs(np.linalg.det(V)) < 1e-3:
                V = rng.standard_normal((2, 2)) + np.eye(2)
            assert normal_rank(U @ T @ V, seed=1) == r


class TestYoula:
    def test_zero_controller(self):
        K = TransferMatrix.zeros(1, 1)
        G = TransferMatrix([[rf([1.0], [1.0, 1.0])]])
        assert youla_parameter(K, G).is_zero()

    def test_zero_plant_collapses(self):
        K = TransferMatrix([[rf([1.0], [2.0, 1.0])]])
        G = TransferMatrix.zeros(1, 1)
        Q = youla_parameter(K, G)
        assert Q.approx_equal(K)

    def test_roundtrip_scalar(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            K = TransferMatrix([[random_rf(rng, int(rng.integers(1, 4)))]])
            G = TransferMatrix([[random_rf(rng, int(rng.integers(1, 4)), strictly_proper=True)]])
            Q = youla_parameter(K, G)
            K2 = controller_from_youla(Q, G)
            avoid = np.concatenate([K.poles(), G.poles(), K2.poles()])
            for s0 in sample_imaginary_axis(10, seed=2, avoid=avoid):
                want = K.evaluate(s0)
                got = K2.evaluate(s0)
                assert np.abs(got - want).max() <= 1e-6 * max(1.0, np.abs(want).max())

    def test_roundtrip_mimo(self):
        # columns share denominators, the pole structure realizations produce
        rng = np.random.default_rng(9)
        for _ in range(8):
            K = random_stable_tm_shared_den(rng, 2, 2, den_deg=1)
            G = random_stable_tm_shared_den(rng, 2, 2, den_deg=2, strictly_proper=True)
            Q = youla_parameter(K, G)
            K2 = controller_from_youla(Q, G)
            avoid = np.concatenate([K.poles(), G.poles(), K2.poles()])
            for s0 in sample_imaginary_axis(10, seed=2, avoid=avoid):
                want = K.evaluate(s0)
                got = K2.evaluate(s0)
                assert np.abs(got - want).max() <= 1e-6 * max(1.0, np.abs(want).max())


class TestInternalStability:
    def test_stabilized_unstable_plant(self):
        # hand oracle: with G = 1/(s-1), K = -2 all four maps have the pole -1
        G = TransferMatrix([[rf([1.0], [-1.0, 1.0])]])
        K = TransferMatrix([[rf([-2.0])]])
        assert internal_stability(G, K)

    def test_open_loop_unstable(self):
        G = TransferMatrix([[rf([1.0], [-1.0, 1.0])]])
        assert not internal_stability(G, TransferMatrix.zeros(1, 1))

    def test_stable_plant_zero_controller(self):
        G = TransferMatrix([[rf([1.0], [1.0, 1.0])]])
        assert internal_stability(G, TransferMatrix.zeros(1, 1))

    def test_youla_stability_equivalence_for_stable_plants(self):
        # for stable G: internal stability <=> stable Youla parameter
        rng = np.random.default_rng(43)
        checked_true = checked_false = 0
        for _ in range(10):
            G = random_stable_tm(rng, 2, 2, den_deg=2, strictly_proper=True)
            K = random_stable_tm(rng, 2, 2, den_deg=2)
            try:
                stab = internal_stability(G, K)
            except ValueError:
                continue
            Q = youla_parameter(K, G)
            assert stab == Q.is_stable()
            checked_true += stab
            checked_false += not stab
        assert checked_true + checked_false >= 5


class TestClosedLoopWv:
    def test_zero_controller_is_exact(self):
        rng = np.random.default_rng(51)
        plant = random_plant(rng, n=4, m=1, p=2, q=1, wdim=2)
        M = closed_loop_wv(plant, TransferMatrix.zeros(plant.q, plant.p))
        assert M.approx_equal(plant.Gwv)

    def test_no_outflow_coupling(self):
        rng = np.random.default_rng(53)
        A = random_stable_matrix(rng, 3)
        plant = PartitionedPlant(
            A,
            rng.standard_normal((3, 1)),
            rng.standard_normal((3, 1)),
            np.zeros((1, 3)),
            rng.standard_normal((2, 3)),
        )
        K = random_stable_tm(rng, 1, 2, den_deg=2)
        M = closed_loop_wv(plant, K)
        assert M.is_zero() == plant.Gwv.is_zero()


class TestPreexisting:
    def test_zero_environment(self):
        rng = np.random.default_rng(61)
        plant = random_plant(rng, n=4)
        env = Environment.zero(plant.m, plant.wdim)
        assert preexisting_internally_stable(plant, env)

    def test_small_static_gain(self):
        # small-gain oracle: scalar loop with |g| * ||Gwv||_inf < 1 stays stable
        plant = PartitionedPlant([[-1.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]])
        assert preexisting_internally_stable(plant, Environment.static([[0.5]]))

    def test_destabilizing_gain(self):
        # A_pre = -1 + 1.5 = +0.5
        plant = PartitionedPlant([[-1.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]])
        assert not preexisting_internally_stable(plant, Environment.static([[1.5]]))

    def test_dynamic_environment_eigcheck(self):
        rng = np.random.default_rng(67)
        plant = random_plant(rng, n=3, m=1, p=2, q=1, wdim=1)
        Abar = random_stable_matrix(rng, 2)
        env = Environment(
            StateSpace(Abar, 0.05 * rng.standard_normal((2, 1)), 0.05 * rng.standard_normal((1, 2)))
        )
        assert preexisting_internally_stable(plant, env)


class TestPlantJson:
    def test_roundtrip(self):
        rng = np.random.default_rng(71)
        plant = random_plant(rng, n=3, m=1, p=2, q=1, wdim=1)
        d = plant_to_json_dict(plant)
        back = plant_from_json_dict(d)
        npt.assert_allclose(back.A, plant.A)
        npt.assert_allclose(back.L, plant.L)

    def test_inconsistent_rejected(self):
        d = {"A": [[0.0, 1.0], [-1.0, -1.0]], "L": [[1.0]], "B": [[1.0], [0.0]],
             "Gamma": [[1.0, 0.0]], "C": [[1.0, 0.0]]}
        with pytest.raises(ValueError, match="inconsistent|rows"):
            plant_from_json_dict(d)

    def test_missing_key_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            plant_from_json_dict({"A": [[1.0]]})
