"""Offline evaluation: edge holdouts, ranking metrics, and the two study
pipelines (query rewriting ranked by co-click desirability, item
recommendation scored from neighbor similarities).

Ground truth for query rewriting is computed on the full graph; predicted
rankings only ever see the training split. Recommendation uses per-user
candidate lists of held-out positives plus sampled non-edges.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .baselines import build_alias, mcsp_query
from .bhpp_query import IndexMeta, bhpp_query, build_index_meta
from .bigraph import BipartiteGraph, DataError
from .push_engine import power_iteration
from .rng import substream


@dataclass
class EvalSplit:
    """Train graph plus held-out edges.

    train keeps every node of the original graph (same labels, same indices).
    test holds (u_index, v_index, weight) triples. candidates maps each
    stratified-side node with held-out edges to its ranking pool on the other
    side: held-out positives first, then sampled non-edges.
    """

    train: BipartiteGraph
    test: list[tuple[int, int, float]]
    candidates: dict[int, list[int]]
    side: str
    holdout_ratio: float
    seed: int


@dataclass
class RankedJudgment:
    """A predicted ranking over a judged candidate set.

    ranking: candidate ids, best first; must be a permutation of the
    relevance keys. relevance: nonnegative graded ground truth per candidate.
    """

    ranking: list
    relevance: dict


def split_edges(
    g: BipartiteGraph,
    holdout_ratio: float,
    seed: int,
    side: str = "u",
    negatives: int = 100,
) -> EvalSplit:
    """Per-node stratified holdout: floor(ratio * degree) edges per node.

    Every node on the stratified side must have degree >= 2 so the training
    graph keeps it connected; an edge is skipped (quota allowing) when its
    other endpoint would drop to zero training degree. Deterministic in
    (seed, side).
    """
    if not 0.0 < holdout_ratio < 1.0:
        raise DataError("holdout_ratio must lie strictly between 0 and 1")
    if side not in ("u", "v"):
        raise DataError("side must be 'u' or 'v'")
    if negatives < 0:
        raise DataError("negatives must be nonnegative")

    eu = np.repeat(np.arange(g.u_count, dtype=np.int64), g.deg_u)
    ev = g.u_indices.astype(np.int64)
    ew = g.u_weights

    if side == "u":
        strat_deg, strat_of = g.deg_u, eu
        other_deg, other_of = g.deg_v, ev
        n_strat, n_other = g.u_count, g.v_count
    else:
        strat_deg, strat_of = g.deg_v, ev
        other_deg, other_of = g.deg_u, eu
        n_strat, n_other = g.v_count, g.u_count
    if (strat_deg < 2).any():
        i = int(np.flatnonzero(strat_deg < 2)[0])
        lab = (g.u_labels if side == "u" else g.v_labels)[i]
        raise DataError(
            f"degree-1 node on the {side} side ({lab!r}); "
            "apply k_core_filter(g, 2) before splitting"
        )

    order = np.argsort(strat_of, kind="stable")
    bounds = np.concatenate(([0], np.cumsum(np.bincount(strat_of, minlength=n_strat))))
    rng = substream(seed, "split", side)
    train_left = other_deg.astype(np.int64).copy()
    held = np.zeros(g.edge_count, dtype=bool)
    for node in range(n_strat):
        row = order[bounds[node] : bounds[node + 1]]
        quota = int(holdout_ratio * row.size)
        if quota == 0:
            continue
        for edge in row[rng.permutation(row.size)]:
            o = other_of[edge]
            if train_left[o] <= 1:
                continue  # protected: keep the other endpoint attached
            held[edge] = True
            train_left[o] -= 1
            quota -= 1
            if quota == 0:
                break

    test = [(int(eu[i]), int(ev[i]), float(ew[i])) for i in np.flatnonzero(held)]
    keep = ~held
    train = BipartiteGraph(g.u_labels, g.v_labels, eu[keep], ev[keep], ew[keep])

    # Ranking pools: per stratified node, held-out positives plus sampled
    # other-side nodes that occur in the test set but are not neighbors in
    # the ORIGINAL graph.
    test_strat = strat_of[held]
    test_other = other_of[held]
    pool = np.unique(test_other)
    neigh = [set() for _ in range(n_strat)]
    for s, o in zip(strat_of.tolist(), other_of.tolist()):
        neigh[s].add(o)
    candidates: dict[int, list[int]] = {}
    neg_rng = substream(seed, "negatives", side)
    for node in np.unique(test_strat).tolist():
        positives = sorted(int(x) for x in test_other[test_strat == node])
        eligible = np.array([o for o in pool.tolist() if o not in neigh[node]], dtype=np.int64)
        if negatives and eligible.size:
            take = min(negatives, eligible.size)
            sampled = eligible[neg_rng.choice(eligible.size, size=take, replace=False)]
            sampled = [int(x) for x in sampled]
        else:
            sampled = []
        candidates[node] = positives + sampled
    return EvalSplit(train, test, candidates, side, holdout_ratio, seed)


def desirability(g: BipartiteGraph, qi: int, qj: int, weighted_degree: bool = False) -> float:
    """Co-neighbor affinity of candidate qj for query qi.

    Sums qj's edge weights to neighbors shared with qi, divided by qj's
    neighbor count (or weight sum with weighted_degree=True).
    """
    a0, a1 = g.u_indptr[qi], g.u_indptr[qi + 1]
    b0, b1 = g.u_indptr[qj], g.u_indptr[qj + 1]
    total = 0.0
    i, j = a0, b0
    while i < a1 and j < b1:
        vi, vj = g.u_indices[i], g.u_indices[j]
        if vi < vj:
            i += 1
        elif vi > vj:
            j += 1
        else:
            total += g.u_weights[j]
            i += 1
            j += 1
    denom = g.ws_u[qj] if weighted_degree else g.deg_u[qj]
    return float(total / denom)


def ndcg_at_k(judgment: RankedJudgment, k: int) -> float:
    """Discounted cumulative gain at k over the ideal ordering; 0 when every
    candidate has zero relevance."""
    if k <= 0:
        raise ValueError("k must be positive")
    rel = judgment.relevance
    if set(judgment.ranking) != set(rel):
        raise DataError("ranking must be a permutation of the judged candidates")
    for grade in rel.values():
        if grade < 0:
            raise DataError("relevance grades must be nonnegative")
    dcg = sum(
        rel[c] / math.log2(pos + 2) for pos, c in enumerate(judgment.ranking[:k])
    )
    ideal = sorted(rel.values(), reverse=True)[:k]
    idcg = sum(grade / math.log2(pos + 2) for pos, grade in enumerate(ideal))
    return dcg / idcg if idcg > 0 else 0.0


def precision_recall_at_k(recommended, ground_truth, k: int) -> tuple[float, float]:
    """Hit fractions of the top-k list; empty ground truth gives recall 0
    (flagged with a warning)."""
    if k <= 0:
        raise ValueError("k must be positive")
    gt = set(ground_truth)
    hits = sum(1 for item in list(recommended)[:k] if item in gt)
    precision = hits / k
    if not gt:
        warnings.warn("empty ground truth: recall defined as 0", stacklevel=2)
        return precision, 0.0
    return precision, hits / len(gt)


def predict_score(v: int, ui: int, sim, s_size: int, split: EvalSplit) -> float:
    """Predicted affinity of other-side node v for item ui.

    sim(ui) must return ui's similarity row over all U nodes, computed on the
    training graph. The prediction averages v's training edge weights over
    the union of ui's s_size most similar peers (self excluded, ties by
    ascending index) and v's training neighbors, weighted by similarity;
    missing edges weigh zero, a zero denominator gives zero.
    """
    if s_size < 0:
        raise ValueError("s_size must be nonnegative")
    g = split.train
    row = np.asarray(sim(ui), dtype=np.float64)
    if row.shape != (g.u_count,):
        raise ValueError("similarity row length must match the U side")
    order = np.argsort(-row, kind="stable")
    peers = order[order != ui][:s_size]
    s, e = g.v_indptr[v], g.v_indptr[v + 1]
    rated = g.v_indices[s:e].astype(np.int64)
    weight_of = dict(zip(rated.tolist(), g.v_weights[s:e].tolist()))
    pool = set(peers.tolist()) | set(rated.tolist())
    num = 0.0
    den = 0.0
    for uj in pool:
        s_ij = float(row[uj])
        num += s_ij * weight_of.get(uj, 0.0)
        den += s_ij
    return num / den if den != 0.0 else 0.0


# -- similarity plugs ----------------------------------------------------------


def jaccard_rows(g: BipartiteGraph):
    """Row callable: neighbor-set Jaccard coefficients against every U node."""
    binary = sp.csr_matrix(
        (np.ones(g.edge_count), g.u_indices.astype(np.int64), g.u_indptr),
        shape=(g.u_count, g.v_count),
    )
    binary_t = binary.T.tocsr()

    def row(ui: int) -> np.ndarray:
        inter = np.asarray((binary[ui] @ binary_t).todense()).ravel()
        union = g.deg_u[ui] + g.deg_u - inter
        return inter / union

    return row


def naive_ppr_rows(g: BipartiteGraph, alpha: float = 0.15, depth: int = 20):
    """Row callable: truncated restart-walk scores on the raw bipartite
    graph (single hops, both sides), restricted to the U side."""

    def row(ui: int) -> np.ndarray:
        base = np.zeros(g.u_count)
        base[ui] = 1.0
        on_u = base.copy()
        on_v = np.zeros(g.v_count)
        for _ in range(depth):
            new_v = (1.0 - alpha) * (g.u_step_t @ on_u)
            on_u = base + (1.0 - alpha) * (g.v_step_t @ on_v)
            on_v = new_v
        return alpha * on_u

    return row


def similarity_rows(
    method: str,
    g: BipartiteGraph,
    meta: IndexMeta | None = None,
    epsilon: float = 1e-5,
    alpha: float = 0.15,
    p_f: float = 1e-6,
    seed: int = 0,
):
    """Similarity row factory for the pipelines; rows are memoized."""
    if method == "ssbipush":
        if meta is None:
            meta = build_index_meta(g, alpha)

        def fresh(ui: int) -> np.ndarray:
            return bhpp_query(g, meta, ui, epsilon).scores

    elif method == "mcsp":
        alias = build_alias(g)

        def fresh(ui: int) -> np.ndarray:
            return mcsp_query(g, alias, ui, alpha, epsilon, p_f, seed).scores

    elif method == "jaccard":
        fresh = jaccard_rows(g)
    elif method == "naive-ppr":
        fresh = naive_ppr_rows(g, alpha)
    else:
        raise DataError(f"unknown similarity method: {method!r}")

    cache: dict[int, np.ndarray] = {}

    def row(ui: int) -> np.ndarray:
        got = cache.get(ui)
        if got is None:
            got = cache[ui] = fresh(ui)
        return got

    return row


# -- pipelines -------------------------------------------------------------------


def _summarize(values) -> tuple[float, float, int]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return float("nan"), float("nan"), 0
    return float(arr.mean()), float(arr.std(ddof=0)), int(arr.size)


def _map_ordered(fn, items, threads: int):
    """Apply fn over items, optionally with a thread pool, preserving order."""
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _prewarm(g: BipartiteGraph) -> None:
    # Materialize cached derived matrices before fanning out to threads.
    g.u_step, g.v_step, g.u_step_t, g.v_step_t, g.recv_uv, g.recv_vu


def qr_ndcg_eval(
    g: BipartiteGraph,
    holdout_ratio: float = 0.2,
    ks: tuple[int, ...] = (5, 10),
    n_queries: int = 100,
    methods: tuple[str, ...] = ("ssbipush", "jaccard", "naive-ppr"),
    epsilon: float = 1e-5,
    alpha: float = 0.15,
    seed: int = 0,
    weighted_degree: bool = False,
    threads: int = 1,
) -> list[dict]:
    """Query-rewriting study: rank other queries by train-graph similarity,
    judge against full-graph desirability, report NDCG@k per method."""
    split = split_edges(g, holdout_ratio, seed, side="u", negatives=0)
    _prewarm(split.train)
    rng = substream(seed, "qr-queries")
    n = min(n_queries, g.u_count)
    queries = rng.choice(g.u_count, size=n, replace=False)

    relevance_of = {}
    for qi in queries.tolist():
        relevance_of[qi] = {
            qj: desirability(g, qi, qj, weighted_degree)
            for qj in range(g.u_count)
            if qj != qi
        }

    rows = []
    for method in methods:
        sim = similarity_rows(method, split.train, epsilon=epsilon, alpha=alpha, seed=seed)

        def one_query(qi: int) -> list[float]:
            score_row = sim(qi)
            order = np.argsort(-score_row, kind="stable")
            ranking = [int(x) for x in order if x != qi]
            judgment = RankedJudgment(ranking, relevance_of[qi])
            return [ndcg_at_k(judgment, k) for k in ks]

        per_query = _map_ordered(one_query, queries.tolist(), threads)
        per_k = {k: [row[i] for row in per_query] for i, k in enumerate(ks)}
        for k in ks:
            mean, std, count = _summarize(per_k[k])
            rows.append(
                {
                    "method": method,
                    "k": k,
                    "metric": "ndcg",
                    "mean": mean,
                    "stddev": std,
                    "n": count,
                }
            )
    return rows


def rec_eval(
    g: BipartiteGraph,
    holdout_ratio: float = 0.2,
    ks: tuple[int, ...] = (5, 10),
    negatives: int = 100,
    s_size: int = 50,
    n_users: int = 100,
    methods: tuple[str, ...] = ("ssbipush", "jaccard", "naive-ppr"),
    epsilon: float = 1e-5,
    alpha: float = 0.15,
    seed: int = 0,
    threads: int = 1,
) -> list[dict]:
    """Item-recommendation study: per user, rank held-out positives among
    sampled non-edges by predicted score; report precision/recall@k."""
    split = split_edges(g, holdout_ratio, seed, side="v", negatives=negatives)
    _prewarm(split.train)
    users = sorted(split.candidates)
    rng = substream(seed, "rec-users")
    if len(users) > n_users:
        chosen = rng.choice(len(users), size=n_users, replace=False)
        users = [users[i] for i in sorted(chosen.tolist())]

    positives_of = {}
    for u_node, v_node, _w in split.test:
        node, item = (v_node, u_node) if split.side == "v" else (u_node, v_node)
        positives_of.setdefault(node, set()).add(item)

    rows = []
    for method in methods:
        sim = similarity_rows(method, split.train, epsilon=epsilon, alpha=alpha, seed=seed)

        def one_user(user: int) -> list[tuple[float, float]]:
            pool = split.candidates[user]
            scored = [(predict_score(user, item, sim, s_size, split), item) for item in pool]
            scored.sort(key=lambda t: (-t[0], t[1]))
            ranked = [item for _s, item in scored]
            gt = positives_of.get(user, set())
            return [precision_recall_at_k(ranked, gt, k) for k in ks]

        per_user = _map_ordered(one_user, users, threads)
        per_metric = {
            (k, "precision"): [row[i][0] for row in per_user] for i, k in enumerate(ks)
        }
        per_metric.update(
            {(k, "recall"): [row[i][1] for row in per_user] for i, k in enumerate(ks)}
        )
        for k in ks:
            for metric in ("precision", "recall"):
                mean, std, count = _summarize(per_metric[(k, metric)])
                rows.append(
                    {
                        "method": method,
                        "k": k,
                        "metric": metric,
                        "mean": mean,
                        "stddev": std,
                        "n": count,
                    }
                )
    return rows
