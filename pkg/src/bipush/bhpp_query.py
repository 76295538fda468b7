"""Two-way similarity queries: forward plus backward walk scores.

The score of node u_i for query u is the sum of the forward walk score
(walks from u landing on u_i) and the backward one (walks from u_i landing
on u). A query runs the budgeted backward kernel, hands its ledger to the
forward kernel, and adds the two estimate vectors; with the epsilon split
eps = eps_b + eps_f the result underestimates the true score by at most eps
entrywise and never overestimates.

Query-independent quantities (the column-sum bound lam, the density proxy mu
used to split eps, the graph fingerprint) live in IndexMeta, computed once
per graph by build_index_meta and persisted as JSON next to the graph cache.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .bigraph import BipartiteGraph, DataError
from .push_engine import pi_push, power_iteration, required_iterations, ss_push

META_VERSION = 1


@dataclass
class IndexMeta:
    """Query-independent per-graph parameters.

    lam upper-bounds every column sum of the hidden walk-score matrix; tau is
    the probe depth used to compute it; mu is the density proxy feeding the
    epsilon split; eps_split_policy maps a query epsilon to its backward
    share.
    """

    alpha: float
    lam: float
    tau: int
    mu: float
    eps_split_policy: Callable[[float], float]
    graph_fingerprint: str


@dataclass
class QueryResult:
    """Scores plus the accounting needed to audit a query."""

    method: str
    query_index: int
    scores: np.ndarray
    epsilon: float
    epsilon_b: float
    epsilon_f: float
    timing: dict
    phase_trace: dict
    u_labels: list[str] | None = None


def default_tau(g: BipartiteGraph, alpha: float, slack: float = 0.05) -> int:
    """Probe depth keeping the additive tail |U| (1-alpha)^(tau+1) <= slack."""
    return required_iterations(alpha, slack, float(g.u_count))


def estimate_lambda(g: BipartiteGraph, alpha: float, tau: int) -> float:
    """Upper bound on the column sums of the hidden walk-score matrix.

    Probes tau rounds of the walk series from the all-ones vector, whose
    entries are exactly the truncated column sums, then adds the worst-case
    tail |U| (1-alpha)^(tau+1); capped by the weight-sum ratio bound
    max ws / min ws, which holds at any depth.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    probe = power_iteration(g, np.ones(g.u_count), alpha, tau)
    from_probe = float(probe.max()) + g.u_count * (1.0 - alpha) ** (tau + 1)
    from_ratio = float(g.ws_u.max() / g.ws_u.min())
    return min(from_probe, from_ratio)


def estimate_mu(g: BipartiteGraph) -> float:
    """Density proxy sqrt(|U||V|)/|E| clamped into [1e-3, 1]."""
    raw = math.sqrt(g.u_count * g.v_count) / g.edge_count
    return float(min(1.0, max(1e-3, raw)))


def choose_eps_b(epsilon: float, mu) -> float:
    """Backward share of the error budget.

    Uses eps (1-mu)/(2-mu), clamped into [eps/10, eps/2] so neither direction
    starves. `mu` may be a density value or a graph (then estimate_mu runs).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if isinstance(mu, BipartiteGraph):
        mu = estimate_mu(mu)
    mu = float(mu)
    raw = epsilon * (1.0 - mu) / (2.0 - mu)
    return min(max(raw, epsilon / 10.0), epsilon / 2.0)


def build_index_meta(g: BipartiteGraph, alpha: float = 0.15, tau: int | None = None) -> IndexMeta:
    if tau is None:
        tau = default_tau(g, alpha)
    lam = estimate_lambda(g, alpha, tau)
    mu = estimate_mu(g)

    def policy(epsilon: float, _mu=mu) -> float:
        return choose_eps_b(epsilon, _mu)

    return IndexMeta(
        alpha=alpha,
        lam=lam,
        tau=int(tau),
        mu=mu,
        eps_split_policy=policy,
        graph_fingerprint=g.fingerprint,
    )


def save_meta(meta: IndexMeta, path) -> None:
    payload = {
        "format_version": META_VERSION,
        "alpha": meta.alpha,
        "lambda": meta.lam,
        "tau": meta.tau,
        "mu": meta.mu,
        "graph_fingerprint": meta.graph_fingerprint,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_meta(path) -> IndexMeta:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read index metadata: {exc}") from None
    if payload.get("format_version") != META_VERSION:
        raise DataError("unsupported index metadata version")
    mu = float(payload["mu"])

    def policy(epsilon: float, _mu=mu) -> float:
        return choose_eps_b(epsilon, _mu)

    return IndexMeta(
        alpha=float(payload["alpha"]),
        lam=float(payload["lambda"]),
        tau=int(payload["tau"]),
        mu=mu,
        eps_split_policy=policy,
        graph_fingerprint=str(payload["graph_fingerprint"]),
    )


def bhpp_query(g: BipartiteGraph, meta: IndexMeta, query_u, epsilon: float, round_hook=None) -> QueryResult:
    """Two-way scores for every U node, accurate to epsilon entrywise.

    query_u may be a label or a U index. Raises DataError when the metadata
    was built for a different graph, ValueError when the epsilon split leaves
    no forward budget.
    """
    if meta.graph_fingerprint != g.fingerprint:
        raise DataError(
            "index metadata does not match this graph (fingerprint mismatch); "
            "rebuild the index"
        )
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    q = g.u_id(query_u) if isinstance(query_u, str) else int(query_u)
    eps_b = float(meta.eps_split_policy(epsilon))
    eps_f = epsilon - eps_b
    if eps_b <= 0 or eps_f <= 0:
        raise ValueError(
            f"epsilon split ({eps_b}, {eps_f}) must leave both directions positive"
        )

    t0 = time.perf_counter()
    back = ss_push(g, q, meta.alpha, eps_b, round_hook)
    t1 = time.perf_counter()
    fwd = pi_push(g, q, meta.alpha, meta.lam, eps_f, back.ledger, round_hook)
    t2 = time.perf_counter()
    # pi_push kept settling the shared ledger, so back.ledger.estimate holds
    # the final backward scores.
    scores = fwd.scores + back.ledger.estimate
    return QueryResult(
        method="ssbipush",
        query_index=q,
        scores=scores,
        epsilon=epsilon,
        epsilon_b=eps_b,
        epsilon_f=eps_f,
        timing={"backward": t1 - t0, "forward": t2 - t1, "total": t2 - t0},
        phase_trace={
            "backward": {**back.phase_trace, "terminated_by": back.terminated_by},
            "forward": {**fwd.phase_trace, "terminated_by": fwd.terminated_by},
        },
        u_labels=g.u_labels,
    )


def topk(result: QueryResult, k: int, exclude_query: bool = False) -> list[tuple[str, float]]:
    """Top-k (label, score) pairs, scores descending, ties by ascending index."""
    if k <= 0:
        raise ValueError("k must be positive")
    order = np.argsort(-result.scores, kind="stable")
    if exclude_query:
        order = order[order != result.query_index]
    order = order[:k]
    labels = result.u_labels
    return [
        (labels[i] if labels is not None else str(i), float(result.scores[i]))
        for i in order.tolist()
    ]
