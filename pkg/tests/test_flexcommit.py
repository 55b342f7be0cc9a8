import numpy as np
import pytest

from drcap.flexcommit import (
    default_overflow_price,
    optout_threshold,
    simulate_linplus,
    sweep_rho,
)
from drcap.ingest import SynthConfig, estimate_support, synthesize
from drcap.linpolicy import LinSolution, evaluate_policy, solve_lin
from drcap.model import CostModel, PolicyParams, ScenarioSet


class TestOptoutThreshold:
    def test_quantile_by_hand(self):
        assert optout_threshold([1.0, 2.0, 3.0, 4.0], 0.75) == 3.0

    def test_rho_one_never_opts_out(self):
        assert optout_threshold([1.0, 2.0, 3.0, 4.0], 1.0) == 4.0

    def test_rho_zero_always_opts_out(self):
        assert optout_threshold([1.0, 2.0], 0.0) == -np.inf

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError):
            optout_threshold([], 0.5)

    def test_realized_fraction_bounded(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            T = int(rng.integers(1, 40))
            a = rng.lognormal(0.0, 1.0, size=T)
            rho = float(rng.uniform(0.0, 1.0))
            thr = optout_threshold(a, rho)
            frac = float(np.mean(a > thr))
            assert frac <= 1.0 - rho + 1.0 / T + 1e-12


def solved_instance(a_rsd=1.5, seed=0, n=4, T=160, p_cap=0.1, p_em=None):
    s = synthesize(SynthConfig(n=n, T=T, a_rsd=a_rsd, sigma_delta=1.0,
                               sigma_r=0.5, seed=seed))
    if p_em is None:
        p_em = default_overflow_price(s, CostModel())
    cm = CostModel(c_g=1.0, p_cap=p_cap, p_em=p_em)
    box = estimate_support(s, margin=1.1)
    return s, cm, solve_lin(s, box, cm)


class TestSimulateLinplus:
    def test_full_commitment_equals_policy_evaluation(self):
        s, cm, sol = solved_instance()
        cost, fractions = simulate_linplus(sol.params, sol.kappa, s, cm, 1.0)
        assert cost == pytest.approx(
            evaluate_policy(sol.params, sol.kappa, s, cm), abs=1e-12)
        np.testing.assert_allclose(fractions, 0.0)

    def test_zero_commitment_formula(self):
        s, cm, sol = solved_instance(n=2, T=40)
        cost, fractions = simulate_linplus(sol.params, sol.kappa, s, cm, 0.0)
        overflow = np.maximum(np.abs(s.D) - sol.kappa, 0.0)
        want = cm.p_cap * sol.kappa + float(
            s.weights @ (cm.c_g * s.D ** 2 + cm.p_em * overflow))
        assert cost == pytest.approx(want, rel=1e-12)
        np.testing.assert_allclose(fractions, 1.0)

    def test_two_slot_threshold_behavior(self):
        s = ScenarioSet(D=[1.0, 1.0], delta=[[1.0], [1.0]],
                        a=[[1.0], [100.0]], r=[0.0, 0.0])
        p = PolicyParams([1.0], [0.0], [0.0])
        cm = CostModel(c_g=1.0, p_cap=0.0, p_em=0.0)
        cost, fractions = simulate_linplus(p, 1.0, s, cm, 0.5)
        # threshold 1.0: opts out only of the a=100 slot
        assert fractions[0] == pytest.approx(0.5)
        assert cost == pytest.approx(0.5 * (1.0) + 0.5 * (1.0))

    def test_deterministic_costs_never_gain_from_optout(self):
        s, cm, sol = solved_instance(a_rsd=0.0, seed=2)
        base, _ = simulate_linplus(sol.params, sol.kappa, s, cm, 1.0)
        for rho in np.linspace(0.0, 1.0, 11):
            cost, _ = simulate_linplus(sol.params, sol.kappa, s, cm, float(rho))
            assert cost >= base - 1e-9

    def test_fraction_invariant_under_policy(self):
        s, cm, sol = solved_instance(seed=5)
        for rho in (0.2, 0.5, 0.8):
            _, fractions = simulate_linplus(sol.params, sol.kappa, s, cm, rho)
            assert np.all(fractions <= 1.0 - rho + 1.0 / s.T + 1e-12)


class TestSweepRho:
    def test_single_point_equals_policy_evaluation(self):
        s, cm, sol = solved_instance(n=2, T=40)
        rows = sweep_rho(sol, s, cm, [1.0])
        assert rows[0][0] == 1.0
        assert rows[0][1] == pytest.approx(
            evaluate_policy(sol.params, sol.kappa, s, cm), abs=1e-12)

    def test_rejects_out_of_range(self):
        s, cm, sol = solved_instance(n=2, T=40)
        with pytest.raises(ValueError):
            sweep_rho(sol, s, cm, [0.5, 1.2])

    def test_high_rsd_interior_minimum(self):
        # Commitment sweep without an emergency price: the rise at low rho
        # comes from the quadratic LSE mismatch cost alone.
        s, cm, sol = solved_instance(a_rsd=2.0, seed=0, n=30, T=300, p_em=0.0)
        rows = sweep_rho(sol, s, cm, np.arange(0.0, 1.0001, 0.05))
        costs = [c for _, c, _ in rows]
        full = costs[-1]
        best = min(costs)
        assert best <= 0.97 * full  # opting out of expensive slots helps
        assert costs[0] > best  # and opting out of everything hurts
