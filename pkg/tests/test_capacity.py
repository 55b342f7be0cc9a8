import numpy as np
import pytest

from drcap.capacity import expected_dispatch_cost, opt_benchmark, optimize_capacity
from drcap.ingest import SynthConfig, synthesize
from drcap.model import CostModel, ScenarioSet


def single_scenario(D=2.0, a=1.0):
    return ScenarioSet(D=[D], delta=[[D]], a=[[a]], r=[0.0])


def zero_scenarios(n=1, T=3):
    return ScenarioSet(D=np.zeros(T), delta=np.zeros((T, n)),
                       a=np.ones((T, n)), r=np.zeros(T))


class TestExpectedDispatchCost:
    def test_all_zero(self):
        er, et = expected_dispatch_cost(1.0, zero_scenarios(), CostModel(c_g=1.0))
        assert er == 0.0 and et == 0.0

    def test_hand_kkt_evaluation(self):
        er, et = expected_dispatch_cost(0.5, single_scenario(), CostModel(c_g=1.0))
        assert er == pytest.approx(2.5)  # (1.5)^2 + 0.25
        assert et == pytest.approx(2.0)  # 2*1.5 - 2*0.5

    def test_nonbinding_theta_zero(self):
        s = synthesize(SynthConfig(n=2, T=30, seed=5))
        kappa = float(np.abs(s.D).max()) + 1.0
        _, et = expected_dispatch_cost(kappa, s, CostModel(c_g=1.0))
        assert et == 0.0


class TestOptimizeCapacity:
    def test_worked_example(self):
        res = optimize_capacity(single_scenario(), CostModel(c_g=1.0, p_cap=0.5))
        assert res.kappa_star == pytest.approx(0.875, abs=1e-4)
        assert res.total_cost == pytest.approx(2.46875, abs=1e-6)
        # dense-grid oracle
        grid = np.linspace(0.0, 2.0, 20001)
        vals = [0.5 * k + expected_dispatch_cost(k, single_scenario(),
                                                 CostModel(c_g=1.0, p_cap=0.5))[0]
                for k in grid]
        assert res.total_cost == pytest.approx(min(vals), abs=1e-6)

    def test_free_capacity_smallest_minimizer(self):
        res = optimize_capacity(single_scenario(), CostModel(c_g=1.0, p_cap=0.0))
        assert res.kappa_star == pytest.approx(1.0, abs=1e-4)

    def test_zero_scenarios_boundary(self):
        res = optimize_capacity(zero_scenarios(), CostModel(c_g=1.0, p_cap=2.0))
        assert res.kappa_star == 0.0
        assert res.total_cost == 0.0

    def test_total_cost_identity(self):
        s = synthesize(SynthConfig(n=3, T=40, seed=2))
        res = optimize_capacity(s, CostModel(c_g=0.8, p_cap=0.3))
        assert res.total_cost == pytest.approx(
            0.3 * res.kappa_star + res.expected_R, abs=1e-9)

    def test_stationarity_at_interior_optimum(self):
        rng = np.random.default_rng(6)
        for seed in range(8):
            s = synthesize(SynthConfig(n=2, T=25, sigma_delta=1.0, seed=seed))
            p_cap = float(rng.uniform(0.05, 0.5))
            res = optimize_capacity(s, CostModel(c_g=1.0, p_cap=p_cap), tol=1e-8)
            if res.kappa_star <= 1e-6:
                continue
            assert abs(p_cap - res.expected_theta) <= 1e-3 * (1 + p_cap)

    def test_objective_convex_chord(self):
        s = synthesize(SynthConfig(n=2, T=20, seed=7))
        cm = CostModel(c_g=1.0, p_cap=0.4)
        rng = np.random.default_rng(8)
        kmax = float(np.abs(s.D).max())

        def F(k):
            return cm.p_cap * k + expected_dispatch_cost(k, s, cm)[0]

        for _ in range(50):
            k1, k2, k3 = np.sort(rng.uniform(0, kmax, size=3))
            if k3 - k1 < 1e-9:
                continue
            lam = (k3 - k2) / (k3 - k1)
            assert F(k2) <= lam * F(k1) + (1 - lam) * F(k3) + 1e-9 * (1 + F(k2))


class TestOptBenchmark:
    def test_wrapper_matches(self):
        cm = CostModel(c_g=1.0, p_cap=0.5)
        assert opt_benchmark(single_scenario(), cm) == pytest.approx(
            optimize_capacity(single_scenario(), cm).total_cost)

    def test_zero_scenarios(self):
        assert opt_benchmark(zero_scenarios(), CostModel(p_cap=1.0)) == 0.0

    def test_monotone_in_capacity_price(self):
        s = single_scenario()
        assert (opt_benchmark(s, CostModel(c_g=1.0, p_cap=1.0))
                >= opt_benchmark(s, CostModel(c_g=1.0, p_cap=0.5)) - 1e-9)
