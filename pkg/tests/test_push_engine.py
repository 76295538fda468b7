"""Push kernels: one-sided accuracy, conservation, budgets, determinism."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import bipush.push_engine as pe
from bipush import (
    ResidueLedger,
    exact_hpp,
    pi_push,
    power_iteration,
    required_iterations,
    selective_push,
    ss_push,
    synth_bipartite,
)
from conftest import random_bigraph

ALPHA = 0.15


def hub_graph(n: int = 50):
    """One hub adjacent to every V node; each V node pinned to its own leaf.

    Pushing from the hub floods all residues at once, so the selective phase
    makes no progress relative to its cost and the push budget trips.
    """
    from bipush import BipartiteGraph

    u_labels = ["hub"] + [f"leaf{i}" for i in range(n)]
    v_labels = [f"v{j}" for j in range(n)]
    eu = [0] * n + list(range(1, n + 1))
    ev = list(range(n)) + list(range(n))
    return BipartiteGraph(u_labels, v_labels, eu, ev, [1.0] * (2 * n))


class TestRequiredIterations:
    def test_frozen_values(self):
        # pinned against a high-precision recomputation of
        # ceil(log(mass/eps) / log(1/(1-alpha))) - 1
        assert required_iterations(0.15, 0.1, 1.0) == 14
        assert required_iterations(0.15, 1e-4, 0.5) == 52
        assert required_iterations(0.15, 1.0, 1.0) == 0

    def test_zero_mass_needs_no_iterations(self):
        assert required_iterations(0.15, 1e-6, 0.0) == 0
        assert required_iterations(0.15, 1e-6, -1.0) == 0

    def test_depth_suffices(self):
        # after t iterations the dropped tail is (1-alpha)^(t+1) * mass
        for eps in (0.1, 1e-3, 1e-7):
            t = required_iterations(ALPHA, eps, 1.0)
            assert (1 - ALPHA) ** (t + 1) <= eps
            assert t == 0 or (1 - ALPHA) ** t > eps


class TestPowerIteration:
    def test_two_node_closed_form(self, g2):
        # 0.85^151 ~ 2e-11, so depth 150 supports a 1e-9 tolerance
        start = np.array([1.0, 0.0])
        out = power_iteration(g2, start, ALPHA, 150)
        np.testing.assert_allclose(out, [0.575, 0.425], atol=1e-9)

    def test_truncation_is_one_sided(self):
        rng = np.random.default_rng(3)
        g = random_bigraph(rng, 30, 25, 3.0)
        ref = exact_hpp(g, ALPHA)
        start = np.zeros(g.u_count)
        start[4] = 1.0
        for t in (0, 3, 10, 40):
            out = power_iteration(g, start, ALPHA, t)
            diff = ref.pi[4] - out
            assert diff.min() >= -1e-12
            assert diff.max() <= (1 - ALPHA) ** (t + 1) + 1e-12

    def test_linear_in_start_vector(self):
        rng = np.random.default_rng(4)
        g = random_bigraph(rng, 20, 20, 3.0)
        a = rng.random(g.u_count)
        b = rng.random(g.u_count)
        lhs = power_iteration(g, a + 2.0 * b, ALPHA, 15)
        rhs = power_iteration(g, a, ALPHA, 15) + 2.0 * power_iteration(g, b, ALPHA, 15)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestSelectivePush:
    def test_estimates_are_one_sided(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            g = random_bigraph(rng, int(rng.integers(5, 50)), int(rng.integers(5, 50)), 3.0)
            ref = exact_hpp(g, ALPHA, tol=1e-14)
            target = int(rng.integers(0, g.u_count))
            for eps_b in (1e-2, 1e-5):
                out = selective_push(g, target, ALPHA, eps_b)
                diff = ref.pi[:, target] - out.ledger.estimate
                assert diff.min() >= -1e-11
                assert diff.max() <= eps_b + 1e-12
                assert out.terminated_by == "threshold-met"

    def test_loose_threshold_means_no_work(self, g2):
        # initial residue is 1.0 at the target; strictly-greater test at 1.0
        out = selective_push(g2, 0, ALPHA, 1.0)
        assert out.phase_trace["selective_rounds"] == 0
        assert out.ledger.n_p == 0
        assert out.ledger.estimate.sum() == 0.0

    def test_estimates_grow_monotonically(self):
        rng = np.random.default_rng(6)
        g = random_bigraph(rng, 30, 30, 4.0)
        snaps = []
        selective_push(g, 0, ALPHA, 1e-7, round_hook=lambda ph, r, led: snaps.append(led.estimate.copy()))
        for earlier, later in zip(snaps, snaps[1:]):
            assert (later - earlier).min() >= 0.0

    def test_rejects_bad_parameters(self, g2):
        with pytest.raises(ValueError):
            selective_push(g2, 0, ALPHA, 0.0)
        with pytest.raises(ValueError):
            selective_push(g2, 0, 1.0, 1e-3)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([1e-3, 1e-5]))
    def test_conservation_at_round_boundaries(self, seed, eps_b):
        # estimate plus residue-weighted true scores reproduces the truth
        # exactly whenever the V side is flushed
        rng = np.random.default_rng(seed)
        g = random_bigraph(rng, int(rng.integers(3, 25)), int(rng.integers(3, 25)), 2.5)
        ref = exact_hpp(g, ALPHA, tol=1e-14)
        target = int(rng.integers(0, g.u_count))
        col = ref.pi[:, target]

        def check(phase, rounds, led):
            assert np.abs(led.residue_v).max() == 0.0
            recon = led.estimate + ref.pi @ led.residue_u
            assert np.abs(recon - col).max() <= 1e-10

        selective_push(g, target, ALPHA, eps_b, round_hook=check)


class TestSsPush:
    def test_budget_switch_on_hub_graph(self):
        # a near-star forces slow selective progress, tripping the budget
        g = synth_bipartite(60, 60, 400, degree_skew=2.5, seed=2)
        out = ss_push(g, 0, ALPHA, 1e-7)
        assert out.terminated_by == "budget-switch"
        assert out.phase_trace["sequential_rounds"] > 0
        ref = exact_hpp(g, ALPHA, tol=1e-14)
        diff = ref.pi[:, 0] - out.ledger.estimate
        assert diff.min() >= -1e-11
        assert diff.max() <= 1e-7 + 1e-12

    def test_exit_reasons_are_exhaustive(self):
        rng = np.random.default_rng(8)
        seen = set()
        for _ in range(15):
            g = random_bigraph(rng, int(rng.integers(5, 40)), int(rng.integers(5, 40)), 3.0)
            out = ss_push(g, 0, ALPHA, float(rng.choice([1e-2, 1e-5, 1e-8])))
            seen.add(out.terminated_by)
            assert out.terminated_by in {"threshold-met", "budget-switch", "mass-drained"}
        assert "threshold-met" in seen

    def test_matches_selective_push_when_budget_unused(self):
        rng = np.random.default_rng(9)
        g = random_bigraph(rng, 25, 25, 4.0)
        a = selective_push(g, 3, ALPHA, 1e-4)
        b = ss_push(g, 3, ALPHA, 1e-4)
        if b.terminated_by == "threshold-met":
            np.testing.assert_array_equal(a.ledger.estimate, b.ledger.estimate)
            assert a.ledger.n_p == b.ledger.n_p

    def test_final_residues_cleared(self):
        rng = np.random.default_rng(10)
        for _ in range(8):
            g = random_bigraph(rng, int(rng.integers(5, 40)), int(rng.integers(5, 40)), 3.0)
            eps_b = float(rng.choice([1e-3, 1e-6]))
            out = ss_push(g, 0, ALPHA, eps_b)
            led = out.ledger
            assert np.abs(led.residue_v).max() == 0.0
            if out.terminated_by != "budget-switch":
                assert led.residue_u.max() <= eps_b
            else:
                # sequential exit guarantees small max residue or small mass
                assert led.residue_u.max() <= eps_b or led.residue_u.sum() <= eps_b


class TestDualPathEquivalence:
    def test_scatter_and_matrix_paths_agree(self, monkeypatch):
        rng = np.random.default_rng(11)
        g1 = random_bigraph(rng, 40, 35, 4.0)
        target = 7

        monkeypatch.setattr(pe, "_SCATTER_LIMIT", 10.0)  # always scatter
        scatter = ss_push(g1, target, ALPHA, 1e-6)
        monkeypatch.setattr(pe, "_SCATTER_LIMIT", -1.0)  # always matrix
        matrix = ss_push(g1, target, ALPHA, 1e-6)

        # summation order differs between the paths, so agreement is to
        # machine precision; the integer work accounting must match exactly
        np.testing.assert_allclose(scatter.ledger.estimate, matrix.ledger.estimate, atol=1e-13)
        np.testing.assert_allclose(scatter.ledger.residue_u, matrix.ledger.residue_u, atol=1e-13)
        assert scatter.ledger.n_p == matrix.ledger.n_p

    def test_runs_are_deterministic(self):
        g = synth_bipartite(80, 70, 500, seed=12)
        a = ss_push(g, 5, ALPHA, 1e-8)
        b = ss_push(g, 5, ALPHA, 1e-8)
        np.testing.assert_array_equal(a.ledger.estimate, b.ledger.estimate)
        assert a.phase_trace == b.phase_trace


class TestPiPush:
    def _seeded(self, g, source, eps_b):
        out = ss_push(g, source, ALPHA, eps_b)
        return out.ledger

    def test_requires_flushed_ledger(self, g3):
        led = ResidueLedger.initial(g3, 0)
        led.residue_v[0] = 0.5
        with pytest.raises(ValueError, match="unflushed"):
            pi_push(g3, 0, ALPHA, 2.0, 1e-3, led)

    def test_forward_scores_one_sided_from_identity_seed(self):
        rng = np.random.default_rng(13)
        for _ in range(8):
            g = random_bigraph(rng, int(rng.integers(5, 50)), int(rng.integers(5, 50)), 3.0)
            ref = exact_hpp(g, ALPHA, tol=1e-14)
            src = int(rng.integers(0, g.u_count))
            lam = float(g.ws_u.max() / g.ws_u.min())
            for eps_f in (1e-3, 1e-5):
                led = ResidueLedger.initial(g, src)
                out = pi_push(g, src, ALPHA, lam, eps_f, led)
                diff = ref.pi[src, :] - out.scores
                assert diff.min() >= -1e-11
                assert diff.max() <= eps_f + 1e-12

    def test_forward_scores_after_backward_phase(self):
        rng = np.random.default_rng(14)
        g = random_bigraph(rng, 30, 30, 4.0)
        ref = exact_hpp(g, ALPHA, tol=1e-14)
        src = 2
        led = self._seeded(g, src, 1e-3)
        out = pi_push(g, src, ALPHA, float(g.ws_u.max() / g.ws_u.min()), 1e-4, led)
        diff = ref.pi[src, :] - out.scores
        assert diff.min() >= -1e-11
        assert diff.max() <= 1e-4 + 1e-12

    def test_gamma_recorded_at_entry(self):
        rng = np.random.default_rng(15)
        g = random_bigraph(rng, 20, 20, 3.0)
        led = self._seeded(g, 1, 1e-2)
        expect = float((g.ws_u / g.ws_u[1] * led.residue_u).sum())
        out = pi_push(g, 1, ALPHA, 3.0, 1e-3, led)
        assert out.phase_trace["gamma"] == pytest.approx(expect, rel=1e-12)

    def test_budget_exit_finishes_with_power_iterations(self):
        # pushing from the hub exhausts the budget; the residue tail is then
        # folded in with truncated power iterations
        g = hub_graph(50)
        ref = exact_hpp(g, ALPHA, tol=1e-14)
        src = 0
        led = ResidueLedger.initial(g, src)
        lam = float(g.ws_u.max() / g.ws_u.min())
        eps_f = 1e-7
        out = pi_push(g, src, ALPHA, lam, eps_f, led)
        assert out.terminated_by == "budget-switch"
        assert out.phase_trace["power_iterations"] > 0
        diff = ref.pi[src, :] - out.scores
        assert diff.min() >= -1e-11
        assert diff.max() <= eps_f + 1e-12

    def test_backward_estimates_keep_growing(self):
        # forward pushes still credit alpha-fractions to the same ledger
        rng = np.random.default_rng(17)
        g = random_bigraph(rng, 25, 25, 3.0)
        led = self._seeded(g, 4, 1e-2)
        before = led.estimate.copy()
        pi_push(g, 4, ALPHA, 5.0, 1e-4, led)
        assert (led.estimate - before).min() >= 0.0
        assert led.estimate.sum() > before.sum()
