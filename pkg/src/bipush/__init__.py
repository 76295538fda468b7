"""Approximate two-way walk-similarity queries over weighted bipartite graphs."""

from .baselines import (
    AliasTables,
    DeadlineExceeded,
    build_alias,
    mc_walk_count,
    mcsp_query,
    monte_carlo,
    pisp_query,
)
from .bhpp_query import (
    IndexMeta,
    QueryResult,
    bhpp_query,
    build_index_meta,
    choose_eps_b,
    default_tau,
    estimate_lambda,
    estimate_mu,
    load_meta,
    save_meta,
    topk,
)
from .bigraph import (
    BipartiteGraph,
    DataError,
    hidden_transition_entry,
    k_core_filter,
    load_edge_list,
    synth_bipartite,
)
from .evalkit import (
    EvalSplit,
    RankedJudgment,
    desirability,
    jaccard_rows,
    naive_ppr_rows,
    ndcg_at_k,
    precision_recall_at_k,
    predict_score,
    qr_ndcg_eval,
    rec_eval,
    similarity_rows,
    split_edges,
)
from .oracle import DenseHpp, exact_bhpp, exact_hpp, exact_hpp_solve
from .push_engine import (
    PushOutcome,
    ResidueLedger,
    pi_push,
    power_iteration,
    required_iterations,
    selective_push,
    ss_push,
)
from .rng import substream

__version__ = "0.1.0"

__all__ = [
    "AliasTables",
    "BipartiteGraph",
    "DataError",
    "DeadlineExceeded",
    "DenseHpp",
    "EvalSplit",
    "IndexMeta",
    "PushOutcome",
    "QueryResult",
    "RankedJudgment",
    "ResidueLedger",
    "bhpp_query",
    "build_alias",
    "build_index_meta",
    "choose_eps_b",
    "default_tau",
    "desirability",
    "estimate_lambda",
    "estimate_mu",
    "exact_bhpp",
    "exact_hpp",
    "exact_hpp_solve",
    "hidden_transition_entry",
    "jaccard_rows",
    "k_core_filter",
    "load_edge_list",
    "load_meta",
    "naive_ppr_rows",
    "mc_walk_count",
    "mcsp_query",
    "monte_carlo",
    "ndcg_at_k",
    "pi_push",
    "pisp_query",
    "power_iteration",
    "precision_recall_at_k",
    "predict_score",
    "qr_ndcg_eval",
    "rec_eval",
    "required_iterations",
    "save_meta",
    "selective_push",
    "similarity_rows",
    "split_edges",
    "ss_push",
    "substream",
    "synth_bipartite",
    "topk",
]
