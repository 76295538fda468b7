"""Two-direction query assembly, index metadata, and parameter pickers."""

import numpy as np
import pytest

from bipush import (
    DataError,
    IndexMeta,
    bhpp_query,
    build_index_meta,
    choose_eps_b,
    default_tau,
    estimate_lambda,
    estimate_mu,
    exact_bhpp,
    exact_hpp,
    load_meta,
    pi_push,
    required_iterations,
    save_meta,
    ss_push,
    synth_bipartite,
    topk,
)
from conftest import random_bigraph

ALPHA = 0.15


class TestParameterPickers:
    def test_default_tau_controls_probe_tail(self):
        rng = np.random.default_rng(1)
        g = random_bigraph(rng, 120, 80, 4.0)
        tau = default_tau(g, ALPHA)
        assert tau == required_iterations(ALPHA, 0.05, float(g.u_count))
        assert g.u_count * (1 - ALPHA) ** (tau + 1) <= 0.05

    def test_lambda_bounds_oracle_column_sums(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            g = random_bigraph(rng, int(rng.integers(10, 80)), int(rng.integers(10, 80)), 3.0)
            lam = estimate_lambda(g, ALPHA, default_tau(g, ALPHA))
            ref = exact_hpp(g, ALPHA, tol=1e-14)
            assert lam >= ref.pi.sum(axis=0).max() - 1e-10
            assert lam <= g.ws_u.max() / g.ws_u.min() + 1e-12

    def test_lambda_rejects_negative_tau(self, g2):
        with pytest.raises(ValueError):
            estimate_lambda(g2, ALPHA, -1)

    def test_mu_is_clamped_density_proxy(self):
        g = synth_bipartite(100, 100, 1000, seed=3)
        assert estimate_mu(g) == pytest.approx(100.0 / 1000.0)
        dense = synth_bipartite(10, 10, 100, seed=4)
        assert estimate_mu(dense) == pytest.approx(0.1)
        tiny = synth_bipartite(4, 4, 16, seed=5)
        assert estimate_mu(tiny) == 0.25

    def test_eps_split_is_clamped_two_sided(self):
        # backward share stays within [eps/10, eps/2] for any density
        for eps in (1e-2, 1e-6):
            for mu in (0.0, 0.5, 0.999, 1.0):
                eb = choose_eps_b(eps, mu)
                assert eps / 10.0 <= eb <= eps / 2.0
        with pytest.raises(ValueError):
            choose_eps_b(0.0, 0.5)

    def test_eps_split_accepts_graph(self):
        g = synth_bipartite(20, 20, 100, seed=6)
        assert choose_eps_b(1e-3, g) == choose_eps_b(1e-3, estimate_mu(g))


class TestIndexMeta:
    def test_save_load_round_trip(self, tmp_path):
        g = synth_bipartite(30, 25, 150, seed=7)
        meta = build_index_meta(g)
        path = tmp_path / "meta.json"
        save_meta(meta, path)
        loaded = load_meta(path)
        assert loaded.alpha == meta.alpha
        assert loaded.lam == meta.lam
        assert loaded.tau == meta.tau
        assert loaded.mu == meta.mu
        assert loaded.graph_fingerprint == meta.graph_fingerprint
        for eps in (1e-2, 1e-5):
            assert loaded.eps_split_policy(eps) == meta.eps_split_policy(eps)

    def test_load_rejects_malformed(self, tmp_path):
        path = tmp_path / "meta.json"
        path.write_text("{\"format_version\": 99}")
        with pytest.raises(DataError):
            load_meta(path)
        path.write_text("not json")
        with pytest.raises(DataError):
            load_meta(path)

    def test_fingerprint_mismatch_rejected(self):
        g = synth_bipartite(20, 20, 100, seed=8)
        other = synth_bipartite(20, 20, 100, seed=9)
        meta = build_index_meta(other)
        with pytest.raises(DataError, match="rebuild"):
            bhpp_query(g, meta, 0, 1e-3)


class TestBhppQuery:
    def test_scores_within_one_sided_epsilon(self):
        rng = np.random.default_rng(10)
        for _ in range(6):
            g = random_bigraph(rng, int(rng.integers(10, 60)), int(rng.integers(10, 60)), 3.5)
            meta = build_index_meta(g)
            ref = exact_hpp(g, ALPHA, tol=1e-14)
            q = int(rng.integers(0, g.u_count))
            truth = exact_bhpp(ref, q)
            for eps in (1e-2, 1e-4):
                res = bhpp_query(g, meta, q, eps)
                diff = truth - res.scores
                assert diff.min() >= -1e-10
                assert diff.max() <= eps + 1e-12

    def test_label_and_index_queries_agree(self):
        g = synth_bipartite(25, 20, 120, seed=11)
        meta = build_index_meta(g)
        by_idx = bhpp_query(g, meta, 3, 1e-4)
        by_label = bhpp_query(g, meta, g.u_labels[3], 1e-4)
        np.testing.assert_array_equal(by_idx.scores, by_label.scores)
        assert by_idx.query_index == by_label.query_index == 3

    def test_scores_decompose_into_directions(self):
        # the reported vector is exactly forward scores plus backward
        # estimates left in the shared ledger
        g = synth_bipartite(40, 30, 250, seed=12)
        meta = build_index_meta(g)
        eps = 1e-4
        res = bhpp_query(g, meta, 5, eps)
        eps_b = meta.eps_split_policy(eps)
        back = ss_push(g, 5, meta.alpha, eps_b)
        fwd = pi_push(g, 5, meta.alpha, meta.lam, eps - eps_b, back.ledger)
        np.testing.assert_array_equal(res.scores, fwd.scores + back.ledger.estimate)

    def test_trace_and_timing_shape(self):
        g = synth_bipartite(20, 20, 100, seed=13)
        meta = build_index_meta(g)
        res = bhpp_query(g, meta, 0, 1e-3)
        assert res.method == "ssbipush"
        assert set(res.timing) == {"backward", "forward", "total"}
        assert res.timing["total"] >= 0.0
        for side in ("backward", "forward"):
            tr = res.phase_trace[side]
            assert "terminated_by" in tr and "n_p" in tr
        assert res.epsilon_b + res.epsilon_f == pytest.approx(res.epsilon)

    def test_bad_split_policy_rejected(self):
        g = synth_bipartite(15, 15, 60, seed=14)
        base = build_index_meta(g)
        broken = IndexMeta(
            alpha=base.alpha,
            lam=base.lam,
            tau=base.tau,
            mu=base.mu,
            eps_split_policy=lambda eps: eps,  # leaves nothing forward
            graph_fingerprint=base.graph_fingerprint,
        )
        with pytest.raises(ValueError):
            bhpp_query(g, broken, 0, 1e-3)

    def test_round_hook_sees_both_phases(self):
        g = synth_bipartite(30, 30, 200, seed=15)
        meta = build_index_meta(g)
        phases = set()
        bhpp_query(g, meta, 0, 1e-5, round_hook=lambda ph, r, led: phases.add(ph))
        assert "selective" in phases or "sequential" in phases
        assert any(ph.startswith("forward") for ph in phases)


class TestTopk:
    def test_orders_by_score_descending(self):
        g = synth_bipartite(30, 25, 150, seed=16)
        meta = build_index_meta(g)
        res = bhpp_query(g, meta, 2, 1e-5)
        pairs = topk(res, 5)
        scores = [s for _, s in pairs]
        assert scores == sorted(scores, reverse=True)
        assert pairs[0][0] == g.u_labels[2]  # self similarity dominates

    def test_exclude_query_drops_self(self):
        g = synth_bipartite(30, 25, 150, seed=16)
        meta = build_index_meta(g)
        res = bhpp_query(g, meta, 2, 1e-5)
        labels = [lab for lab, _ in topk(res, 5, exclude_query=True)]
        assert g.u_labels[2] not in labels
        assert len(labels) == 5

    def test_ties_break_by_index_stably(self):
        from bipush import QueryResult

        res = QueryResult(
            method="x",
            query_index=0,
            scores=np.array([0.5, 0.25, 0.25, 0.25]),
            epsilon=1e-3,
            epsilon_b=5e-4,
            epsilon_f=5e-4,
            timing={},
            phase_trace={},
            u_labels=["a", "b", "c", "d"],
        )
        assert [lab for lab, _ in topk(res, 4)] == ["a", "b", "c", "d"]

    def test_k_larger_than_graph_is_clipped(self):
        g = synth_bipartite(5, 5, 25, seed=17)
        meta = build_index_meta(g)
        res = bhpp_query(g, meta, 0, 1e-3)
        assert len(topk(res, 50)) == 5
