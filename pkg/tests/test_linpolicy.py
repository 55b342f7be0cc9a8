import itertools

import numpy as np
import pytest

from drcap.capacity import opt_benchmark
from drcap.ingest import SynthConfig, estimate_support, synthesize
from drcap.linpolicy import (
    InfeasiblePolicyError,
    PolicyCostModel,
    assemble_lin_qp,
    evaluate_policy,
    solve_lin,
    worst_case_bounds,
)
from drcap.model import CostModel, PolicyParams, ScenarioSet, SupportBox
from drcap.numerics import solve_qp


def degenerate_instance():
    """Two equally likely scenarios with delta == D: only alpha+beta is
    identifiable, the optimum has alpha+beta = 0.5."""
    s = ScenarioSet(D=[-1.0, 1.0], delta=[[-1.0], [1.0]], a=[[1.0], [1.0]],
                    r=[0.0, 0.0])
    box = SupportBox(D_lo=-1.0, D_hi=1.0, d_lo=[-1.0], d_hi=[1.0])
    return s, box


def zero_instance(n=1, T=2):
    s = ScenarioSet(D=np.zeros(T), delta=np.zeros((T, n)), a=np.ones((T, n)),
                    r=np.zeros(T))
    box = SupportBox(D_lo=0.0, D_hi=0.0, d_lo=np.zeros(n), d_hi=np.zeros(n))
    return s, box


def vertex_oracle(p, box):
    """Exhaustive enumeration of all 2^(n+1) box vertices."""
    best_hi, best_lo = -np.inf, np.inf
    for bits in itertools.product((0, 1), repeat=p.n + 1):
        D = (box.D_lo, box.D_hi)[bits[0]]
        delta = np.array([(box.d_lo[i], box.d_hi[i])[bits[1 + i]]
                          for i in range(p.n)])
        y = (1 - p.alpha.sum()) * D - float(p.beta @ delta) - p.gamma.sum()
        best_hi = max(best_hi, y)
        best_lo = min(best_lo, y)
    return best_hi, best_lo


class TestWorstCaseBounds:
    def test_half_share(self):
        p = PolicyParams([0.5], [0.0], [0.0])
        box = SupportBox(-2.0, 2.0, [-1.0], [1.0])
        assert worst_case_bounds(p, box) == pytest.approx((1.0, -1.0))

    def test_zero_policy_passes_D_through(self):
        p = PolicyParams.zeros(2)
        box = SupportBox(-3.0, 5.0, [-1.0, -1.0], [1.0, 2.0])
        assert worst_case_bounds(p, box) == pytest.approx((5.0, -3.0))

    def test_beta_and_gamma(self):
        p = PolicyParams([0.0], [1.0], [0.5])
        box = SupportBox(0.0, 0.0, [-1.0], [1.0])
        assert worst_case_bounds(p, box) == pytest.approx((0.5, -1.5))

    def test_matches_vertex_enumeration(self):
        rng = np.random.default_rng(12)
        for _ in range(40):
            n = int(rng.integers(1, 11))
            p = PolicyParams(rng.normal(size=n), rng.normal(size=n),
                             rng.normal(size=n))
            lo = rng.normal(size=n + 1) - 1.0
            hi = lo + rng.uniform(0.0, 2.0, size=n + 1)
            box = SupportBox(lo[0], hi[0], lo[1:], hi[1:])
            got = worst_case_bounds(p, box)
            want = vertex_oracle(p, box)
            assert got[0] == pytest.approx(want[0], abs=1e-12)
            assert got[1] == pytest.approx(want[1], abs=1e-12)


class TestAssembleLinQp:
    def test_zero_instance_optimum_is_zero(self):
        s, box = zero_instance()
        qp = assemble_lin_qp(s, box, CostModel(c_g=1.0, p_cap=0.0))
        res = solve_qp(qp)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(res.x[:4], 0.0, atol=1e-6)

    def test_dimensions(self):
        for n in (1, 3, 7):
            s = ScenarioSet(D=np.zeros(2), delta=np.zeros((2, n)),
                            a=np.ones((2, n)), r=np.zeros(2))
            box = SupportBox(0.0, 0.0, np.zeros(n), np.zeros(n))
            qp = assemble_lin_qp(s, box, CostModel())
            assert qp.num_vars == 3 * n + 1 + 2 * (n + 1)
            assert qp.A.shape[0] == 4 * (n + 1) + 3

    def test_gradient_at_zero_is_capacity_price(self):
        s, box = zero_instance(n=2)
        cm = CostModel(c_g=1.0, p_cap=0.7)
        qp = assemble_lin_qp(s, box, cm, ridge=0.0)
        grad = qp.q  # gradient of 0.5 x'Px + q'x at x = 0
        expected = np.zeros(qp.num_vars)
        expected[3 * 2] = 0.7
        np.testing.assert_allclose(grad, expected, atol=1e-15)


class TestSolveLin:
    def test_derived_instance_free_capacity(self):
        s, box = degenerate_instance()
        sol = solve_lin(s, box, CostModel(c_g=1.0, p_cap=0.0))
        assert sol.status == "optimal"
        assert float((sol.params.alpha + sol.params.beta)[0]) == pytest.approx(0.5, abs=1e-4)
        assert float(sol.params.gamma[0]) == pytest.approx(0.0, abs=1e-6)
        assert sol.kappa == pytest.approx(0.5, abs=1e-4)
        assert sol.expected_cost == pytest.approx(0.5, abs=1e-6)

    def test_derived_instance_expensive_capacity(self):
        s, box = degenerate_instance()
        sol = solve_lin(s, box, CostModel(c_g=1.0, p_cap=10.0))
        assert float((sol.params.alpha + sol.params.beta)[0]) == pytest.approx(1.0, abs=1e-3)
        assert sol.kappa == pytest.approx(0.0, abs=1e-4)
        assert sol.expected_cost == pytest.approx(1.0, abs=1e-4)

    def test_grid_oracle_on_identifiable_combination(self):
        # cost(g, c) = E[(g D + c)^2 + ((1-g) D - c)^2]; dense grid over (g, c)
        s, box = degenerate_instance()
        gs = np.linspace(-0.5, 1.5, 801)
        cs = np.linspace(-1.0, 1.0, 401)
        Gm, Cm = np.meshgrid(gs, cs, indexing="ij")
        vals = Gm ** 2 + Cm ** 2 + (1 - Gm) ** 2 + Cm ** 2
        sol = solve_lin(s, box, CostModel(c_g=1.0, p_cap=0.0))
        assert sol.expected_cost == pytest.approx(float(vals.min()), abs=1e-6)

    def test_zero_scenarios_all_zero(self):
        s, box = zero_instance()
        sol = solve_lin(s, box, CostModel(c_g=1.0, p_cap=0.3))
        np.testing.assert_allclose(sol.params.alpha, 0.0, atol=1e-6)
        assert sol.kappa == pytest.approx(0.0, abs=1e-8)
        assert sol.expected_cost == pytest.approx(0.0, abs=1e-9)

    def test_objective_dominates_opt_benchmark(self):
        for seed in range(6):
            s = synthesize(SynthConfig(n=3, T=30, a_rsd=0.4, seed=seed))
            box = estimate_support(s, margin=1.1)
            cm = CostModel(c_g=1.0, p_cap=0.2)
            sol = solve_lin(s, box, cm)
            assert sol.status == "optimal"
            opt = opt_benchmark(s, cm)
            assert sol.expected_cost >= opt - 1e-6 * (1 + abs(opt))

    def test_saa_self_consistency(self):
        for seed in range(4):
            s = synthesize(SynthConfig(n=2, T=25, seed=seed))
            box = estimate_support(s, margin=1.1)
            cm = CostModel(c_g=0.7, p_cap=0.4)
            sol = solve_lin(s, box, cm)
            realized = evaluate_policy(sol.params, sol.kappa, s, cm, box=box)
            assert realized == pytest.approx(sol.expected_cost,
                                             rel=1e-6, abs=1e-9)

    def test_ridge_insensitivity(self):
        s = synthesize(SynthConfig(n=2, T=25, seed=1))
        box = estimate_support(s, margin=1.1)
        cm = CostModel(c_g=1.0, p_cap=0.5)
        c1 = solve_lin(s, box, cm, ridge=1e-9).expected_cost
        c2 = solve_lin(s, box, cm, ridge=2e-9).expected_cost
        assert abs(c2 - c1) < 1e-6 * (1 + abs(c1))

    def test_worst_case_feasibility_of_solution(self):
        s = synthesize(SynthConfig(n=3, T=30, seed=3))
        box = estimate_support(s, margin=1.1)
        sol = solve_lin(s, box, CostModel(c_g=1.0, p_cap=0.1))
        y_max, y_min = worst_case_bounds(sol.params, box)
        assert y_max <= sol.kappa + 1e-6
        assert y_min >= -sol.kappa - 1e-6


class TestEvaluatePolicy:
    def test_solved_instance_cost(self):
        s, box = degenerate_instance()
        cm = CostModel(c_g=1.0, p_cap=0.0)
        sol = solve_lin(s, box, cm)
        assert evaluate_policy(sol.params, sol.kappa, s, cm) == pytest.approx(
            0.5, abs=1e-6)

    def test_zero_policy_zero_scenarios(self):
        s, _ = zero_instance()
        assert evaluate_policy(PolicyParams.zeros(1), 0.0, s, CostModel()) == 0.0

    def test_zero_policy_pure_residual(self):
        s = ScenarioSet(D=[1.0], delta=[[1.0]], a=[[1.0]], r=[0.0])
        cm = CostModel(c_g=1.0, p_cap=0.0)
        assert evaluate_policy(PolicyParams.zeros(1), 1.0, s, cm) == pytest.approx(1.0)

    def test_infeasible_policy_rejected(self):
        s = ScenarioSet(D=[2.0], delta=[[2.0]], a=[[1.0]], r=[0.0])
        with pytest.raises(InfeasiblePolicyError):
            evaluate_policy(PolicyParams.zeros(1), 0.5, s, CostModel(c_g=1.0))

    def test_moment_path_matches_scenario_path(self):
        rng = np.random.default_rng(9)
        s = synthesize(SynthConfig(n=3, T=40, seed=5))
        cm = CostModel(c_g=0.9, p_cap=0.2)
        pcm = PolicyCostModel(s, cm)
        for _ in range(10):
            p = PolicyParams(rng.normal(scale=0.3, size=3),
                             rng.normal(scale=0.3, size=3),
                             rng.normal(scale=0.3, size=3))
            kappa = float(np.abs(s.D).max()) * 3 + 10.0
            assert pcm.planning_objective(p, kappa) == pytest.approx(
                evaluate_policy(p, kappa, s, cm), rel=1e-9)
