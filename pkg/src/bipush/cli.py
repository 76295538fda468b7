"""Command-line front end.

Subcommands: synth (generate a graph), preprocess (parse + index a graph),
query / topk (score a single query node), bench (timing and agreement across
methods), eval-qr / eval-rec (the two offline studies).

Every command is deterministic given its configuration and seed. Options can
also come from a key=value config file (--config); explicit flags win over
the file, the file wins over built-in defaults. Exit codes: 0 success,
1 usage error, 2 data error, 3 a bench method was excluded by timeout.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .baselines import DeadlineExceeded, build_alias, mcsp_query, pisp_query
from .bhpp_query import (
    bhpp_query,
    build_index_meta,
    load_meta,
    save_meta,
    topk as topk_of,
)
from .bigraph import BipartiteGraph, DataError, k_core_filter, load_edge_list, synth_bipartite
from .evalkit import qr_ndcg_eval, rec_eval
from .rng import substream

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TIMEOUT = 3

METHODS = ("ssbipush", "mcsp", "pisp")
EVAL_METHODS = ("ssbipush", "mcsp", "jaccard", "naive-ppr")
FORMATS = ("tsv", "json-lines")


class UsageError(Exception):
    """Bad flags or config; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); route to our code
        raise UsageError(message)


@dataclass
class RunConfig:
    """Merged options for one invocation."""

    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _strs(text: str) -> list[str]:
    return [tok.strip() for tok in text.split(",") if tok.strip()]


_REQUIRED = object()

# Option schema per command: dest -> (converter, default, help). Flags are
# registered from the same table, so config files and the parser agree.
_COMMON = {
    "config": (str, None, "key=value config file; explicit flags win"),
    "format": (str, "tsv", "output encoding: tsv or json-lines"),
    "seed": (int, 0, "root seed; all randomness derives from it"),
    "threads": (int, 1, "worker threads for batch commands (1 = serial)"),
}

_SCHEMAS: dict[str, dict] = {
    "synth": {
        **_COMMON,
        "u_count": (int, _REQUIRED, "number of U-side nodes"),
        "v_count": (int, _REQUIRED, "number of V-side nodes"),
        "edge_count": (int, _REQUIRED, "number of distinct edges"),
        "weight_min": (float, 0.0, "weights drawn from (weight-min, weight-max]"),
        "weight_max": (float, 1.0, "upper weight bound"),
        "skew": (float, None, "power-law endpoint skew exponent"),
        "out": (str, _REQUIRED, "edge-list path to write"),
    },
    "preprocess": {
        **_COMMON,
        "graph": (str, _REQUIRED, "edge-list path to parse"),
        "delimiter": (str, None, "column delimiter (default: any whitespace)"),
        "default_weight": (float, None, "weight for two-column lines"),
        "kcore": (int, None, "apply k-core filtering before indexing"),
        "alpha": (float, 0.15, "restart probability"),
        "tau": (int, None, "probe depth for the column-sum bound"),
        "out_dir": (str, _REQUIRED, "directory for graph.bin and meta.json"),
    },
    "query": {
        **_COMMON,
        "index": (str, _REQUIRED, "directory written by preprocess"),
        "query": (str, _REQUIRED, "U-side query label"),
        "epsilon": (float, 1e-5, "entrywise score accuracy"),
        "method": (str, "ssbipush", "ssbipush, mcsp, or pisp"),
        "p_f": (float, 1e-6, "walk failure probability (mcsp)"),
        "verbose": (_bool, False, "emit a trace record to stderr"),
    },
    "topk": {
        **_COMMON,
        "index": (str, _REQUIRED, "directory written by preprocess"),
        "query": (str, _REQUIRED, "U-side query label"),
        "epsilon": (float, 1e-5, "entrywise score accuracy"),
        "method": (str, "ssbipush", "ssbipush, mcsp, or pisp"),
        "p_f": (float, 1e-6, "walk failure probability (mcsp)"),
        "k": (int, 10, "number of results"),
        "exclude_query": (_bool, False, "drop the query node from results"),
        "verbose": (_bool, False, "emit a trace record to stderr"),
    },
    "bench": {
        **_COMMON,
        "index": (str, _REQUIRED, "directory written by preprocess"),
        "methods": (_strs, list(METHODS), "comma-separated methods"),
        "epsilons": (_floats, [1e-2, 1e-3, 1e-4], "comma-separated accuracies"),
        "queries": (int, 50, "number of sampled query nodes"),
        "p_f": (float, 1e-6, "walk failure probability (mcsp)"),
        "timeout": (float, 3600.0, "mean seconds per query before exclusion"),
    },
    "eval-qr": {
        **_COMMON,
        "graph": (str, _REQUIRED, "edge-list path"),
        "delimiter": (str, None, "column delimiter"),
        "default_weight": (float, None, "weight for two-column lines"),
        "kcore": (int, None, "apply k-core filtering first"),
        "holdout": (float, 0.2, "held-out edge fraction"),
        "ks": (_ints, [5, 10], "comma-separated cutoffs"),
        "queries": (int, 100, "number of sampled queries"),
        "methods": (_strs, ["ssbipush", "jaccard", "naive-ppr"], "similarities"),
        "epsilon": (float, 1e-5, "accuracy for push-based similarities"),
        "alpha": (float, 0.15, "restart probability"),
        "weighted_degree": (_bool, False, "weight-sum desirability denominator"),
    },
    "eval-rec": {
        **_COMMON,
        "graph": (str, _REQUIRED, "edge-list path"),
        "delimiter": (str, None, "column delimiter"),
        "default_weight": (float, None, "weight for two-column lines"),
        "kcore": (int, None, "apply k-core filtering first"),
        "holdout": (float, 0.2, "held-out edge fraction (per user)"),
        "ks": (_ints, [5, 10], "comma-separated cutoffs"),
        "negatives": (int, 100, "sampled non-edges per user"),
        "s_size": (int, 50, "similar-item neighborhood size"),
        "users": (int, 100, "number of evaluated users"),
        "methods": (_strs, ["ssbipush", "jaccard", "naive-ppr"], "similarities"),
        "epsilon": (float, 1e-5, "accuracy for push-based similarities"),
        "alpha": (float, 0.15, "restart probability"),
    },
}


def build_parser() -> _Parser:
    parser = _Parser(prog="bipush", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    for command, schema in _SCHEMAS.items():
        p = sub.add_parser(command, add_help=True)
        for dest, (conv, _default, help_text) in schema.items():
            flag = "--" + dest.replace("_", "-")
            if conv is _bool:
                p.add_argument(flag, dest=dest, action="store_const", const=True,
                               default=None, help=help_text)
            else:
                p.add_argument(flag, dest=dest, type=str, default=None,
                               metavar="X", help=help_text)
    return parser


def _parse_config_file(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def make_config(command: str, namespace: argparse.Namespace) -> RunConfig:
    schema = _SCHEMAS[command]
    file_values = {}
    if getattr(namespace, "config", None):
        file_values = _parse_config_file(namespace.config)
        unknown = set(file_values) - set(schema)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = {}
    for dest, (conv, default, _help) in schema.items():
        raw = getattr(namespace, dest, None)
        if raw is None and dest in file_values:
            raw = file_values[dest]
        if raw is None:
            if default is _REQUIRED:
                raise UsageError(f"missing required option --{dest.replace('_', '-')}")
            merged[dest] = default
            continue
        if isinstance(raw, str):
            try:
                merged[dest] = conv(raw)
            except ValueError as exc:
                raise UsageError(f"bad value for --{dest.replace('_', '-')}: {exc}") from None
        else:
            merged[dest] = raw
    if merged.get("format") not in FORMATS:
        raise UsageError(f"format must be one of {', '.join(FORMATS)}")
    return RunConfig(command=command, values=merged)


# -- output ---------------------------------------------------------------------


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_rows(rows: list[dict], columns: list[str], fmt: str, out, header: bool = True) -> None:
    """Write rows in tsv or json-lines; both encodings carry every column so
    they parse back to the same values."""
    if fmt == "json-lines":
        for row in rows:
            out.write(json.dumps({c: row.get(c) for c in columns}) + "\n")
    else:
        if header:
            out.write("#" + "\t".join(columns) + "\n")
        for row in rows:
            out.write("\t".join(_cell(row.get(c)) for c in columns) + "\n")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


# -- commands ---------------------------------------------------------------------


def _load_index(index_dir: str) -> tuple[BipartiteGraph, "IndexMeta"]:
    d = Path(index_dir)
    graph_path = d / "graph.bin"
    meta_path = d / "meta.json"
    if not graph_path.exists() or not meta_path.exists():
        raise DataError(f"index directory {index_dir!r} needs graph.bin and meta.json")
    g = BipartiteGraph.load(graph_path)
    meta = load_meta(meta_path)
    if meta.graph_fingerprint != g.fingerprint:
        raise DataError("index metadata does not match graph.bin; rerun preprocess")
    return g, meta


def _load_graph(cfg: RunConfig) -> BipartiteGraph:
    g = load_edge_list(cfg.graph, delimiter=cfg.delimiter, default_weight=cfg.default_weight)
    if cfg.kcore is not None:
        g = k_core_filter(g, cfg.kcore)
    return g


def cmd_synth(cfg: RunConfig, out) -> int:
    g = synth_bipartite(
        cfg.u_count,
        cfg.v_count,
        cfg.edge_count,
        (cfg.weight_min, cfg.weight_max),
        degree_skew=cfg.skew,
        seed=cfg.seed,
    )
    with open(cfg.out, "w", encoding="utf-8") as fh:
        fh.write("# synthetic bipartite graph\n")
        for ui in range(g.u_count):
            for slot in range(g.u_indptr[ui], g.u_indptr[ui + 1]):
                fh.write(
                    f"{g.u_labels[ui]}\t{g.v_labels[g.u_indices[slot]]}\t"
                    f"{float(g.u_weights[slot])!r}\n"
                )
    for key, value in (
        ("path", cfg.out),
        ("u_count", g.u_count),
        ("v_count", g.v_count),
        ("edge_count", g.edge_count),
        ("seed", cfg.seed),
    ):
        out.write(f"{key}={value}\n")
    return EXIT_OK


def cmd_preprocess(cfg: RunConfig, out) -> int:
    t0 = time.perf_counter()
    g = _load_graph(cfg)
    meta = build_index_meta(g, alpha=cfg.alpha, tau=cfg.tau)
    build_seconds = time.perf_counter() - t0
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    g.save(out_dir / "graph.bin")
    save_meta(meta, out_dir / "meta.json")
    for key, value in (
        ("u_count", g.u_count),
        ("v_count", g.v_count),
        ("edge_count", g.edge_count),
        ("alpha", meta.alpha),
        ("lambda", meta.lam),
        ("mu", meta.mu),
        ("tau", meta.tau),
        ("build_seconds", round(build_seconds, 6)),
        ("fingerprint", meta.graph_fingerprint),
    ):
        out.write(f"{key}={value}\n")
    return EXIT_OK


def _run_query(cfg: RunConfig, g: BipartiteGraph, meta) -> "QueryResult":
    method = cfg.method
    if method == "ssbipush":
        return bhpp_query(g, meta, cfg.query, cfg.epsilon)
    if method == "mcsp":
        alias = build_alias(g)
        return mcsp_query(g, alias, cfg.query, meta.alpha, cfg.epsilon, cfg.p_f, cfg.seed)
    if method == "pisp":
        return pisp_query(g, cfg.query, meta.alpha, cfg.epsilon)
    raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def _emit_trace(result, err) -> None:
    record = {
        "method": result.method,
        "query_index": result.query_index,
        "epsilon": result.epsilon,
        "epsilon_b": result.epsilon_b,
        "epsilon_f": result.epsilon_f,
        "timing": result.timing,
        "phase_trace": result.phase_trace,
    }
    err.write(json.dumps(_json_safe(record)) + "\n")


def cmd_query(cfg: RunConfig, out, err) -> int:
    g, meta = _load_index(cfg.index)
    result = _run_query(cfg, g, meta)
    order = np.argsort(-result.scores, kind="stable")
    rows = [
        {"label": g.u_labels[i], "score": float(result.scores[i])}
        for i in order.tolist()
    ]
    emit_rows(rows, ["label", "score"], cfg.format, out, header=False)
    if cfg.verbose:
        _emit_trace(result, err)
    return EXIT_OK


def cmd_topk(cfg: RunConfig, out, err) -> int:
    g, meta = _load_index(cfg.index)
    result = _run_query(cfg, g, meta)
    pairs = topk_of(result, cfg.k, exclude_query=cfg.exclude_query)
    rows = [{"label": lab, "score": score} for lab, score in pairs]
    emit_rows(rows, ["label", "score"], cfg.format, out, header=False)
    if cfg.verbose:
        _emit_trace(result, err)
    return EXIT_OK


def cmd_bench(cfg: RunConfig, out) -> int:
    g, meta = _load_index(cfg.index)
    for m in cfg.methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    rng = substream(cfg.seed, "bench-queries")
    n = min(cfg.queries, g.u_count)
    queries = rng.choice(g.u_count, size=n, replace=False).tolist()
    alias = build_alias(g) if "mcsp" in cfg.methods else None

    rows: list[dict] = []
    kept_scores: dict[tuple[str, float], list[np.ndarray]] = {}
    excluded_any = False
    for eps in cfg.epsilons:
        for method in cfg.methods:
            budget = cfg.timeout * n
            start = time.perf_counter()
            deadline = start + budget
            times: list[float] = []
            scores: list[np.ndarray] = []
            excluded = False

            def run_one(item):
                qi, q = item
                if method == "ssbipush":
                    return bhpp_query(g, meta, q, eps)
                if method == "pisp":
                    return pisp_query(g, q, meta.alpha, eps)
                walk_seed = int(substream(cfg.seed, "bench-mc", qi).integers(0, 2**63))
                return mcsp_query(
                    g, alias, q, meta.alpha, eps, cfg.p_f, walk_seed, deadline=deadline
                )

            try:
                if cfg.threads > 1:
                    from concurrent.futures import ThreadPoolExecutor

                    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                        results = list(pool.map(run_one, enumerate(queries)))
                    times = [r.timing["total"] for r in results]
                    scores = [r.scores for r in results]
                    if sum(times) > budget:
                        excluded = True
                else:
                    for item in enumerate(queries):
                        if time.perf_counter() > deadline:
                            excluded = True
                            break
                        r = run_one(item)
                        times.append(r.timing["total"])
                        scores.append(r.scores)
            except DeadlineExceeded:
                excluded = True

            if excluded:
                excluded_any = True
                rows.append(
                    {
                        "kind": "timing",
                        "method": method,
                        "epsilon": eps,
                        "mean_s": None,
                        "stddev_s": None,
                        "n": len(times),
                        "excluded": True,
                    }
                )
            else:
                arr = np.asarray(times)
                rows.append(
                    {
                        "kind": "timing",
                        "method": method,
                        "epsilon": eps,
                        "mean_s": float(arr.mean()),
                        "stddev_s": float(arr.std(ddof=0)),
                        "n": n,
                        "excluded": False,
                    }
                )
                kept_scores[(method, eps)] = scores
        for a, b in combinations([m for m in cfg.methods if (m, eps) in kept_scores], 2):
            diffs = [
                float(np.abs(sa - sb).max())
                for sa, sb in zip(kept_scores[(a, eps)], kept_scores[(b, eps)])
            ]
            bound = 2.0 * eps
            worst = max(diffs)
            rows.append(
                {
                    "kind": "agreement",
                    "method": f"{a}|{b}",
                    "epsilon": eps,
                    "max_abs_diff": worst,
                    "bound": bound,
                    "within": worst <= bound,
                }
            )
    columns = [
        "kind",
        "method",
        "epsilon",
        "mean_s",
        "stddev_s",
        "n",
        "excluded",
        "max_abs_diff",
        "bound",
        "within",
    ]
    emit_rows(rows, columns, cfg.format, out)
    return EXIT_TIMEOUT if excluded_any else EXIT_OK


_EVAL_COLUMNS = ["method", "k", "metric", "mean", "stddev", "n"]


def cmd_eval_qr(cfg: RunConfig, out) -> int:
    for m in cfg.methods:
        if m not in EVAL_METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(EVAL_METHODS)}")
    g = _load_graph(cfg)
    rows = qr_ndcg_eval(
        g,
        holdout_ratio=cfg.holdout,
        ks=tuple(cfg.ks),
        n_queries=cfg.queries,
        methods=tuple(cfg.methods),
        epsilon=cfg.epsilon,
        alpha=cfg.alpha,
        seed=cfg.seed,
        weighted_degree=cfg.weighted_degree,
        threads=cfg.threads,
    )
    emit_rows(rows, _EVAL_COLUMNS, cfg.format, out)
    return EXIT_OK


def cmd_eval_rec(cfg: RunConfig, out) -> int:
    for m in cfg.methods:
        if m not in EVAL_METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(EVAL_METHODS)}")
    g = _load_graph(cfg)
    rows = rec_eval(
        g,
        holdout_ratio=cfg.holdout,
        ks=tuple(cfg.ks),
        negatives=cfg.negatives,
        s_size=cfg.s_size,
        n_users=cfg.users,
        methods=tuple(cfg.methods),
        epsilon=cfg.epsilon,
        alpha=cfg.alpha,
        seed=cfg.seed,
        threads=cfg.threads,
    )
    emit_rows(rows, _EVAL_COLUMNS, cfg.format, out)
    return EXIT_OK


def main(argv=None, out=None, err=None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    parser = build_parser()
    try:
        try:
            namespace = parser.parse_args(argv)
        except SystemExit as exc:  # --help prints and exits
            return int(exc.code or 0)
        if not namespace.command:
            raise UsageError("a subcommand is required (see --help)")
        cfg = make_config(namespace.command, namespace)
        if cfg.command == "synth":
            return cmd_synth(cfg, out)
        if cfg.command == "preprocess":
            return cmd_preprocess(cfg, out)
        if cfg.command == "query":
            return cmd_query(cfg, out, err)
        if cfg.command == "topk":
            return cmd_topk(cfg, out, err)
        if cfg.command == "bench":
            return cmd_bench(cfg, out)
        if cfg.command == "eval-qr":
            return cmd_eval_qr(cfg, out)
        if cfg.command == "eval-rec":
            return cmd_eval_rec(cfg, out)
        raise UsageError(f"unknown command {cfg.command!r}")
    except UsageError as exc:
        err.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except DataError as exc:
        err.write(f"data error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
