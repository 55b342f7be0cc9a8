import numpy as np
import pytest

from drcap.baselines import seq_capacity, seq_price, simulate_seq
from drcap.capacity import opt_benchmark
from drcap.ingest import SynthConfig, synthesize
from drcap.model import CostModel, ScenarioSet, SupportBox


def single(D=2.0, a=1.0):
    return ScenarioSet(D=[D], delta=[[D]], a=[[a]], r=[0.0])


class TestSeqCapacity:
    @pytest.mark.parametrize("lo,hi,want", [(-2.0, 3.0, 3.0), (0.0, 0.0, 0.0),
                                            (-5.0, 1.0, 5.0)])
    def test_max_absolute_endpoint(self, lo, hi, want):
        assert seq_capacity(SupportBox(lo, hi, [0.0], [0.0])) == want


class TestSeqPrice:
    def test_formula_two_customers(self):
        s = ScenarioSet(D=[1.0], delta=[[0.5, 0.5]], a=[[1.0, 1.0]], r=[0.0])
        assert seq_price(s, 1.0) == pytest.approx(1.0)

    def test_zero_target(self):
        assert seq_price(single(), 0.0) == 0.0

    def test_homogeneous_in_cost_scale(self):
        s1 = ScenarioSet(D=[1.0], delta=[[0.5, 0.5]], a=[[1.0, 2.0]], r=[0.0])
        s2 = ScenarioSet(D=[1.0], delta=[[0.5, 0.5]], a=[[2.0, 4.0]], r=[0.0])
        assert seq_price(s2, 0.7) == pytest.approx(2 * seq_price(s1, 0.7))


class TestSimulateSeq:
    def test_zero_scenarios(self):
        s = ScenarioSet(D=[0.0], delta=[[0.0]], a=[[1.0]], r=[0.0])
        res = simulate_seq(s, CostModel(c_g=1.0, p_cap=3.0))
        assert res.cost == 0.0

    def test_full_response_single_scenario(self):
        # E|D| = 2, E[1/(2a)] = 0.5 => price 4, x = 2, residual 0, cost 4
        res = simulate_seq(single(), CostModel(c_g=1.0, p_cap=0.0), 1.0)
        assert res.price == pytest.approx(4.0)
        assert res.cost == pytest.approx(4.0)

    def test_capacity_term_added(self):
        res = simulate_seq(single(), CostModel(c_g=1.0, p_cap=1.0), 1.0)
        assert res.kappa_seq == pytest.approx(2.0)  # margin-free |D|
        assert res.cost == pytest.approx(6.0)

    def test_cost_affine_in_capacity_price_with_slope_kappa(self):
        s = synthesize(SynthConfig(n=3, T=40, seed=4))
        r0 = simulate_seq(s, CostModel(c_g=1.0, p_cap=0.0))
        r1 = simulate_seq(s, CostModel(c_g=1.0, p_cap=1.0))
        r2 = simulate_seq(s, CostModel(c_g=1.0, p_cap=2.0))
        slope1 = r1.cost - r0.cost
        slope2 = r2.cost - r1.cost
        assert slope1 == pytest.approx(r0.kappa_seq, rel=1e-9)
        assert slope2 == pytest.approx(slope1, rel=1e-9)

    def test_dominated_by_opt(self):
        for seed in range(5):
            s = synthesize(SynthConfig(n=3, T=30, a_rsd=0.4, seed=seed))
            cm = CostModel(c_g=1.0, p_cap=0.3)
            res = simulate_seq(s, cm)
            opt = opt_benchmark(s, cm)
            assert res.cost >= opt - 1e-6 * (1 + abs(opt))
