import numpy as np
import numpy.testing as npt
import pytest

from conftest import random_stable_matrix
from retrofit_control.lti import (
    PartitionedPlant,
    StateSpace,
    preexisting_closed_state_matrix,
    ss_to_tf,
)
from retrofit_control.network import (
    BenchmarkResult,
    BenchmarkRow,
    NetworkSpec,
    build_partitioned_plant,
    graph_sweep,
    l2_norm_response,
    monolithic_state_matrix,
    paper_default_spec,
    run_benchmark,
)
from retrofit_control.ratpoly import Polynomial, RationalFunction
from retrofit_control.synthesis import synthesize_retrofit


def small_spec(num_cut=1, N=8):
    half = N // 2
    edges = [(i, i + 1, 1.0) for i in range(half - 1)]
    edges += [(half + i, half + i + 1, 1.0) for i in range(half - 1)]
    edges += [(i, half + i, 1.0) for i in range(num_cut)]
    return NetworkSpec(N=N, inertia=1.0, damping=0.5, edges=tuple(edges),
                       interest=tuple(range(half)))


class TestSpecValidation:
    def test_interest_must_be_proper_subset(self):
        with pytest.raises(ValueError, match="proper subset"):
            NetworkSpec(N=4, inertia=1.0, damping=0.5, edges=((0, 1, 1.0),),
                        interest=(0, 1, 2, 3))

    def test_duplicate_edges_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            NetworkSpec(N=4, inertia=1.0, damping=0.5,
                        edges=((0, 1, 1.0), (1, 0, 2.0)), interest=(0, 1))

    def test_positive_parameters(self):
        with pytest.raises(ValueError, match="positive"):
            NetworkSpec(N=4, inertia=-1.0, damping=0.5, edges=((0, 1, 1.0),),
                        interest=(0,))

    def test_json_roundtrip(self):
        spec = small_spec(2)
        back = NetworkSpec.from_json_dict(spec.to_json_dict())
        assert back == spec


class TestBuildPlant:
    def test_single_node_transfer(self):
        # node convention: inertia * omega' = -damping * omega - v - u, so
        # with unit inertia and damping 0.5 the u -> omega map is -1/(s+0.5)
        A = np.array([[0.0, 1.0], [0.0, -0.5]])
        B = np.array([[0.0], [-1.0]])
        C = np.array([[0.0, 1.0]])
        T = ss_to_tf(StateSpace(A, B, C))
        want = RationalFunction(Polynomial([-1.0]), Polynomial([0.5, 1.0]))
        assert T[0, 0].approx_equal(want, rtol=1e-10)

    def test_two_nodes_one_cut(self):
        spec = NetworkSpec(N=2, inertia=1.0, damping=0.5, edges=((0, 1, 1.0),),
                           interest=(0,))
        plant, env = build_partitioned_plant(spec)
        assert plant.m == 1 and plant.wdim == 1
        assert plant.p == 1 and plant.q == 1
        assert env.realization.noutputs == 1

    def test_no_cut_rejected(self):
        spec = NetworkSpec(N=4, inertia=1.0, damping=0.5,
                           edges=((0, 1, 1.0), (2, 3, 1.0)), interest=(0, 1))
        with pytest.raises(ValueError, match="no interaction"):
            build_partitioned_plant(spec)

    def test_reassembly_matches_monolithic(self):
        # oracle: the plant closed with its environment is the full network
        for num_cut in (1, 3):
            spec = small_spec(num_cut)
            plant, env = build_partitioned_plant(spec)
            Apre = preexisting_closed_state_matrix(plant, env)
            Amono = monolithic_state_matrix(spec)
            e1 = np.sort_complex(np.linalg.eigvals(Apre))
            e2 = np.sort_complex(np.linalg.eigvals(Amono))
            npt.assert_allclose(e1, e2, atol=1e-9)

    def test_interest_subsystem_stable(self):
        plant, _ = build_partitioned_plant(paper_default_spec(1))
        assert plant.is_stable()


class TestGraphSweep:
    def test_dimensions_grow_one_per_graph(self):
        specs = graph_sweep(paper_default_spec(1), 15)
        assert len(specs) == 15
        for j, spec in enumerate(specs, start=1):
            assert len(spec.cut_edges) == j
            plant, _ = build_partitioned_plant(spec)
            assert plant.m == j

    def test_too_many_graphs_rejected(self):
        with pytest.raises(ValueError, match="num_graphs"):
            graph_sweep(small_spec(1), 7)


class TestL2Norm:
    def test_scalar_analytic(self):
        # integral of exp(-2t) is 1/2
        assert abs(l2_norm_response([[-1.0]], [[1.0]], [1.0]) - np.sqrt(0.5)) < 1e-12

    def test_zero_initial_state(self):
        assert l2_norm_response([[-1.0]], [[1.0]], [0.0]) == 0.0

    def test_unstable_rejected(self):
        with pytest.raises(ValueError, match="not stable"):
            l2_norm_response([[0.1]], [[1.0]], [1.0])

    def test_unobservable_marginal_mode_tolerated(self):
        # a drift invisible in the output does not contribute to the norm
        A = np.array([[0.0, 0.0], [0.0, -1.0]])
        C = np.array([[0.0, 1.0]])
        x0 = np.array([5.0, 1.0])
        assert abs(l2_norm_response(A, C, x0) - np.sqrt(0.5)) < 1e-12

    def test_matches_time_domain_integration(self):
        # oracle: adaptive integration of the squared output
        from scipy.integrate import solve_ivp

        rng = np.random.default_rng(5)
        for _ in range(6):
            n = int(rng.integers(2, 31))
            A = random_stable_matrix(rng, n)
            C = rng.standard_normal((2, n))
            x0 = rng.standard_normal(n)
            want = l2_norm_response(A, C, x0)

            def rhs(t, z):
                x = z[:n]
                return np.concatenate([A @ x, [np.sum((C @ x) ** 2)]])

            horizon = np.log(1e7) / (-np.linalg.eigvals(A).real.max())
            sol = solve_ivp(rhs, (0.0, horizon), np.concatenate([x0, [0.0]]),
                            rtol=1e-10, atol=1e-12)
            got = np.sqrt(sol.y[n, -1])
            assert abs(got - want) <= 1e-3 * max(want, 1e-12)


class TestBenchmark:
    def test_small_network_rows_complete(self):
        res = run_benchmark(small_spec(1), num_graphs=2, seed=0)
        assert res.complete()
        assert [r.dim_v for r in res.rows] == [1, 2]
        for r in res.rows:
            assert r.l2_retrofit_general <= r.l2_no_control + 1e-9
            assert r.l2_retrofit_measured <= r.l2_retrofit_general * (1 + 1e-6)

    def test_rectified_output_dimension(self):
        for j in (1, 2):
            spec = paper_default_spec(j)
            plant, _ = build_partitioned_plant(spec)
            ctrl = synthesize_retrofit(plant, mode="general")
            assert ctrl.khat_ss.ninputs == plant.p - plant.m

    def test_csv_format(self):
        res = BenchmarkResult([BenchmarkRow(1, 1, 1.0, 0.5, 0.25)])
        csv = res.to_csv()
        lines = csv.strip().split("\n")
        assert lines[0] == "graph,dim_v,l2_nocontrol,l2_retrofit_general,l2_retrofit_measured"
        assert lines[1] == "1,1,1,0.5,0.25"

    def test_orderings_report(self):
        res = BenchmarkResult(
            [BenchmarkRow(1, 1, 1.0, 0.9, 0.89), BenchmarkRow(2, 2, 1.0, 0.9, 0.85)]
        )
        o = res.orderings()
        assert o["general_improves_on_no_control"]
        assert o["measured_at_least_as_good"]
        assert o["measured_advantage_grows"]
