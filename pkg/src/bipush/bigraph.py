"""Weighted bipartite graph with an implicit co-neighbor transition structure.

A graph holds two disjoint node sets U and V joined by positively weighted
edges. Random walks used elsewhere in this package alternate sides: a step
from a U-node picks an incident edge with probability proportional to its
weight, lands on a V-node, and immediately hops back to U the same way. The
resulting one-side transition matrix over U (each entry a sum over shared
neighbors) is never materialized; this module exposes the two row-stochastic
factor matrices and per-entry access instead.

Graphs are immutable after construction: the backing arrays are marked
read-only and derived views are cached.
"""

from __future__ import annotations

import hashlib
import io
import struct
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

CACHE_MAGIC = b"BPGR"
CACHE_VERSION = 1


class DataError(ValueError):
    """Malformed input data: bad edge lists, bad cache files, bad labels."""


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class BipartiteGraph:
    """Immutable weighted bipartite graph in CSR form for both sides.

    Attributes:
        u_count, v_count, edge_count: basic sizes.
        u_labels, v_labels: node labels in index order.
        u_indptr, u_indices, u_weights: U-side CSR (neighbors are V indices,
            each row sorted by neighbor index).
        v_indptr, v_indices, v_weights: V-side CSR (neighbors are U indices).
        ws_u, ws_v: per-node incident weight sums (always positive).
        deg_u, deg_v: per-node neighbor counts (always at least 1).
    """

    def __init__(self, u_labels, v_labels, edge_u, edge_v, edge_w):
        u_labels = list(u_labels)
        v_labels = list(v_labels)
        eu = np.asarray(edge_u, dtype=np.int64)
        ev = np.asarray(edge_v, dtype=np.int64)
        ew = np.asarray(edge_w, dtype=np.float64)
        if eu.size == 0:
            raise DataError("empty graph: at least one edge is required")
        if not (eu.size == ev.size == ew.size):
            raise DataError("edge arrays have mismatched lengths")
        if len(set(u_labels)) != len(u_labels) or len(set(v_labels)) != len(v_labels):
            raise DataError("duplicate node label within one side")
        both = set(u_labels) & set(v_labels)
        if both:
            raise DataError(f"label appears on both sides: {sorted(both)[0]!r}")
        if eu.min() < 0 or eu.max() >= len(u_labels):
            raise DataError("edge endpoint out of range on the U side")
        if ev.min() < 0 or ev.max() >= len(v_labels):
            raise DataError("edge endpoint out of range on the V side")
        if not np.isfinite(ew).all() or (ew <= 0).any():
            raise DataError("edge weights must be positive and finite")

        self.u_count = len(u_labels)
        self.v_count = len(v_labels)
        self.u_labels = u_labels
        self.v_labels = v_labels

        # Canonical order: U-side rows sorted by (u, v). Duplicate pairs are a
        # constructor error; merging belongs to from_edges / load_edge_list.
        order = np.lexsort((ev, eu))
        eu, ev, ew = eu[order], ev[order], ew[order]
        pair_key = eu * self.v_count + ev
        if np.unique(pair_key).size != pair_key.size:
            raise DataError("duplicate edge passed to constructor")
        self.edge_count = int(eu.size)

        self.deg_u = _frozen(np.bincount(eu, minlength=self.u_count))
        self.deg_v = _frozen(np.bincount(ev, minlength=self.v_count))
        if (self.deg_u == 0).any():
            i = int(np.flatnonzero(self.deg_u == 0)[0])
            raise DataError(f"isolated node on U side: {u_labels[i]!r}")
        if (self.deg_v == 0).any():
            i = int(np.flatnonzero(self.deg_v == 0)[0])
            raise DataError(f"isolated node on V side: {v_labels[i]!r}")

        self.u_indptr = _frozen(np.concatenate(([0], np.cumsum(self.deg_u))))
        self.u_indices = _frozen(ev.astype(np.int32))
        self.u_weights = _frozen(ew)

        vorder = np.lexsort((eu, ev))
        self.v_indptr = _frozen(np.concatenate(([0], np.cumsum(self.deg_v))))
        self.v_indices = _frozen(eu[vorder].astype(np.int32))
        self.v_weights = _frozen(ew[vorder])

        self.ws_u = _frozen(np.bincount(eu, weights=ew, minlength=self.u_count))
        self.ws_v = _frozen(np.bincount(ev, weights=ew, minlength=self.v_count))

        self.u_index = {lab: i for i, lab in enumerate(u_labels)}
        self.v_index = {lab: i for i, lab in enumerate(v_labels)}

    # -- construction helpers ------------------------------------------------

    @classmethod
    def from_edges(cls, u_labels, v_labels, triples):
        """Build a graph from (u_index, v_index, weight) triples.

        Triples repeating the same (u, v) pair are merged by summing weights.
        """
        merged: dict[tuple[int, int], float] = {}
        for ui, vi, w in triples:
            key = (int(ui), int(vi))
            merged[key] = merged.get(key, 0.0) + float(w)
        if not merged:
            raise DataError("empty graph: at least one edge is required")
        eu = np.fromiter((k[0] for k in merged), dtype=np.int64, count=len(merged))
        ev = np.fromiter((k[1] for k in merged), dtype=np.int64, count=len(merged))
        ew = np.fromiter(merged.values(), dtype=np.float64, count=len(merged))
        return cls(u_labels, v_labels, eu, ev, ew)

    # -- label lookup --------------------------------------------------------

    def u_id(self, label) -> int:
        try:
            return self.u_index[label]
        except KeyError:
            raise DataError(f"unknown U-side label: {label!r}") from None

    def v_id(self, label) -> int:
        try:
            return self.v_index[label]
        except KeyError:
            raise DataError(f"unknown V-side label: {label!r}") from None

    # -- derived transition structure -----------------------------------------

    @cached_property
    def u_step(self) -> sp.csr_matrix:
        """Row-stochastic |U|x|V| matrix: step from a U-node to a neighbor."""
        data = self.u_weights / np.repeat(self.ws_u, self.deg_u)
        return sp.csr_matrix(
            (data, self.u_indices.astype(np.int64), self.u_indptr),
            shape=(self.u_count, self.v_count),
        )

    @cached_property
    def v_step(self) -> sp.csr_matrix:
        """Row-stochastic |V|x|U| matrix: step from a V-node to a neighbor."""
        data = self.v_weights / np.repeat(self.ws_v, self.deg_v)
        return sp.csr_matrix(
            (data, self.v_indices.astype(np.int64), self.v_indptr),
            shape=(self.v_count, self.u_count),
        )

    @cached_property
    def u_step_t(self) -> sp.csr_matrix:
        """Transpose of u_step as CSR, for fast right-multiplication."""
        return self.u_step.T.tocsr()

    @cached_property
    def v_step_t(self) -> sp.csr_matrix:
        """Transpose of v_step as CSR."""
        return self.v_step.T.tocsr()

    @cached_property
    def recv_uv(self) -> np.ndarray:
        """Per U-side edge slot: weight normalized by the receiving V-node.

        Aligned with u_indices; entry for slot (u_i -> v_j) is
        w(u_i, v_j) / ws(v_j). Used by scatter-style residue pushes.
        """
        return _frozen(self.u_weights / self.ws_v[self.u_indices])

    @cached_property
    def recv_vu(self) -> np.ndarray:
        """Per V-side edge slot: weight normalized by the receiving U-node."""
        return _frozen(self.v_weights / self.ws_u[self.v_indices])

    # -- serialization ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        """Serialize into the stable binary cache format.

        Layout (little endian): magic "BPGR", u32 version, u64 u_count,
        u64 v_count, u64 edge_count, i64 u_indptr[u_count+1],
        i32 u_indices[edge_count], f64 u_weights[edge_count], then one
        length-prefixed (u32) UTF-8 label per U node followed by V nodes.
        The V-side adjacency is rebuilt on load.
        """
        out = io.BytesIO()
        out.write(CACHE_MAGIC)
        out.write(struct.pack("<I", CACHE_VERSION))
        out.write(struct.pack("<QQQ", self.u_count, self.v_count, self.edge_count))
        out.write(self.u_indptr.astype("<i8").tobytes())
        out.write(self.u_indices.astype("<i4").tobytes())
        out.write(self.u_weights.astype("<f8").tobytes())
        for lab in self.u_labels:
            b = lab.encode("utf-8")
            out.write(struct.pack("<I", len(b)))
            out.write(b)
        for lab in self.v_labels:
            b = lab.encode("utf-8")
            out.write(struct.pack("<I", len(b)))
            out.write(b)
        return out.getvalue()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "BipartiteGraph":
        if len(buf) < 4 + 4 + 24 or buf[:4] != CACHE_MAGIC:
            raise DataError("not a graph cache file (bad magic)")
        (version,) = struct.unpack_from("<I", buf, 4)
        if version != CACHE_VERSION:
            raise DataError(f"unsupported graph cache version: {version}")
        u_count, v_count, edge_count = struct.unpack_from("<QQQ", buf, 8)
        off = 32
        try:
            indptr = np.frombuffer(buf, dtype="<i8", count=u_count + 1, offset=off).copy()
            off += 8 * (u_count + 1)
            indices = np.frombuffer(buf, dtype="<i4", count=edge_count, offset=off).copy()
            off += 4 * edge_count
            weights = np.frombuffer(buf, dtype="<f8", count=edge_count, offset=off).copy()
            off += 8 * edge_count
        except ValueError:
            raise DataError("truncated graph cache file") from None
        labels = []
        for _ in range(u_count + v_count):
            if off + 4 > len(buf):
                raise DataError("truncated graph cache label table")
            (n,) = struct.unpack_from("<I", buf, off)
            off += 4
            if off + n > len(buf):
                raise DataError("truncated graph cache label table")
            labels.append(buf[off : off + n].decode("utf-8"))
            off += n
        if off != len(buf):
            raise DataError("trailing bytes after graph cache payload")
        if indptr[0] != 0 or indptr[-1] != edge_count or (np.diff(indptr) < 0).any():
            raise DataError("corrupt adjacency offsets in graph cache")
        eu = np.repeat(np.arange(u_count, dtype=np.int64), np.diff(indptr))
        return cls(labels[:u_count], labels[u_count:], eu, indices.astype(np.int64), weights)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "BipartiteGraph":
        return cls.from_bytes(Path(path).read_bytes())

    @cached_property
    def fingerprint(self) -> str:
        """Hex sha256 of the canonical serialization."""
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def __repr__(self):
        return (
            f"BipartiteGraph(u={self.u_count}, v={self.v_count}, "
            f"edges={self.edge_count})"
        )


def load_edge_list(source, delimiter=None, default_weight=None) -> BipartiteGraph:
    """Parse a text edge list into a graph.

    Each data line is "u_label v_label weight" (or "u_label v_label" when
    default_weight is given). Columns split on `delimiter`, or on any
    whitespace when it is None. Lines that are blank or start with '#' are
    skipped. Duplicate (u, v) pairs merge by summing weights.

    Args:
        source: path, text file object, or binary file object.
        delimiter: column separator; None means arbitrary whitespace.
        default_weight: weight for two-column lines; must be positive.

    Raises:
        DataError: on malformed lines, non-positive weights, labels used on
            both sides, or an empty graph.
    """
    if default_weight is not None and not (
        np.isfinite(default_weight) and default_weight > 0
    ):
        raise DataError("default_weight must be positive and finite")

    if isinstance(source, (str, Path)):
        fh = open(source, "r", encoding="utf-8")
        close = True
    elif isinstance(source, (io.RawIOBase, io.BufferedIOBase)) or (
        hasattr(source, "read") and isinstance(source.read(0), bytes)
    ):
        fh = io.TextIOWrapper(source, encoding="utf-8")
        close = False
    else:
        fh = source
        close = False

    u_index: dict[str, int] = {}
    v_index: dict[str, int] = {}
    u_labels: list[str] = []
    v_labels: list[str] = []
    triples: list[tuple[int, int, float]] = []
    try:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cols = line.split(delimiter)
            if len(cols) == 2:
                if default_weight is None:
                    raise DataError(
                        f"line {lineno}: two columns but no default weight configured"
                    )
                w = float(default_weight)
            elif len(cols) == 3:
                try:
                    w = float(cols[2])
                except ValueError:
                    raise DataError(f"line {lineno}: bad weight {cols[2]!r}") from None
            else:
                raise DataError(f"line {lineno}: expected 2 or 3 columns, got {len(cols)}")
            if not np.isfinite(w) or w <= 0:
                raise DataError(f"line {lineno}: weight must be positive, got {w}")
            ul, vl = cols[0], cols[1]
            if ul in v_index:
                raise DataError(f"line {lineno}: label appears on both sides: {ul!r}")
            if vl in u_index:
                raise DataError(f"line {lineno}: label appears on both sides: {vl!r}")
            ui = u_index.setdefault(ul, len(u_labels))
            if ui == len(u_labels):
                u_labels.append(ul)
            vi = v_index.setdefault(vl, len(v_labels))
            if vi == len(v_labels):
                v_labels.append(vl)
            triples.append((ui, vi, w))
    finally:
        if close:
            fh.close()

    if not triples:
        raise DataError("empty graph: no data lines found")
    return BipartiteGraph.from_edges(u_labels, v_labels, triples)


def hidden_transition_entry(g: BipartiteGraph, ui: int, uj: int) -> float:
    """One entry of the implicit U-to-U two-hop transition matrix.

    Sums, over V-nodes adjacent to both ui and uj, the probability of
    stepping ui -> v -> uj with both hops weight-proportional.
    """
    a0, a1 = g.u_indptr[ui], g.u_indptr[ui + 1]
    b0, b1 = g.u_indptr[uj], g.u_indptr[uj + 1]
    total = 0.0
    i, j = a0, b0
    ws_ui = g.ws_u[ui]
    while i < a1 and j < b1:
        vi, vj = g.u_indices[i], g.u_indices[j]
        if vi < vj:
            i += 1
        elif vi > vj:
            j += 1
        else:
            total += (g.u_weights[i] / ws_ui) * (g.u_weights[j] / g.ws_v[vi])
            i += 1
            j += 1
    return float(total)


def k_core_filter(g: BipartiteGraph, k: int) -> BipartiteGraph:
    """Iteratively drop nodes with fewer than k neighbors; rebuild the rest.

    Returns g unchanged for k <= 1 (no node is isolated by construction).
    Raises DataError when nothing survives.
    """
    if k <= 1:
        return g
    from collections import deque

    deg = [g.deg_u.astype(np.int64).copy(), g.deg_v.astype(np.int64).copy()]
    dead = [np.zeros(g.u_count, dtype=bool), np.zeros(g.v_count, dtype=bool)]
    indptr = [g.u_indptr, g.v_indptr]
    indices = [g.u_indices, g.v_indices]

    queue = deque()
    for side in (0, 1):
        for i in np.flatnonzero(deg[side] < k):
            dead[side][i] = True
            queue.append((side, int(i)))
    while queue:
        side, i = queue.popleft()
        other = 1 - side
        for j in indices[side][indptr[side][i] : indptr[side][i + 1]]:
            if not dead[other][j]:
                deg[other][j] -= 1
                if deg[other][j] < k:
                    dead[other][j] = True
                    queue.append((other, int(j)))

    keep_u = ~dead[0]
    keep_v = ~dead[1]
    if not keep_u.any() or not keep_v.any():
        raise DataError(f"k-core is empty for k={k}")

    new_u = np.cumsum(keep_u) - 1
    new_v = np.cumsum(keep_v) - 1
    eu = np.repeat(np.arange(g.u_count), g.deg_u)
    ev = g.u_indices.astype(np.int64)
    ok = keep_u[eu] & keep_v[ev]
    if not ok.any():
        raise DataError(f"k-core is empty for k={k}")
    u_labels = [lab for lab, kp in zip(g.u_labels, keep_u) if kp]
    v_labels = [lab for lab, kp in zip(g.v_labels, keep_v) if kp]
    return BipartiteGraph(u_labels, v_labels, new_u[eu[ok]], new_v[ev[ok]], g.u_weights[ok])


def synth_bipartite(
    u_count: int,
    v_count: int,
    edge_count: int,
    weight_range: tuple[float, float] = (0.0, 1.0),
    degree_skew: float | None = None,
    seed: int = 0,
) -> BipartiteGraph:
    """Deterministic random bipartite graph with every node covered.

    One permutation edge per node on each side guarantees degree >= 1; the
    remaining edges are distinct random pairs. Weights are drawn uniformly
    from (lo, hi]. With degree_skew=s > 0, random endpoints are drawn with
    probability proportional to (index+1)**(-s), giving low-index hubs.

    Requires max(u_count, v_count) <= edge_count <= u_count * v_count.
    """
    if u_count < 1 or v_count < 1:
        raise DataError("node counts must be positive")
    if edge_count < max(u_count, v_count) or edge_count > u_count * v_count:
        raise DataError(
            "edge_count must lie in [max(u_count, v_count), u_count * v_count]"
        )
    lo, hi = weight_range
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo < 0 or hi <= 0 or lo > hi:
        raise DataError("weight_range must satisfy 0 <= lo <= hi, hi > 0")

    rng = np.random.default_rng(seed)

    if degree_skew is not None:
        if degree_skew <= 0:
            raise DataError("degree_skew must be positive when given")
        pu = (np.arange(u_count) + 1.0) ** (-degree_skew)
        pu /= pu.sum()
        pv = (np.arange(v_count) + 1.0) ** (-degree_skew)
        pv /= pv.sum()
    else:
        pu = pv = None

    def draw(count, n, p):
        if p is None:
            return rng.integers(0, count, size=n)
        return rng.choice(count, size=n, p=p)

    m = max(u_count, v_count)
    us = np.concatenate([rng.permutation(u_count), draw(u_count, m - u_count, pu)])
    vs = np.concatenate([rng.permutation(v_count), draw(v_count, m - v_count, pv)])
    rng.shuffle(vs)

    seen: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int]] = []
    for a, b in zip(us.tolist(), vs.tolist()):
        key = (a, b)
        if key not in seen:
            seen.add(key)
            pairs.append(key)

    need = edge_count - len(pairs)
    if need > 0 and edge_count > (u_count * v_count) // 4:
        # Dense request: rejection sampling would crawl, enumerate cells instead.
        for cell in rng.permutation(u_count * v_count).tolist():
            key = (cell // v_count, cell % v_count)
            if key not in seen:
                seen.add(key)
                pairs.append(key)
                need -= 1
                if need == 0:
                    break
    while need > 0:
        n = max(2 * need, 256)
        uu = draw(u_count, n, pu)
        vv = draw(v_count, n, pv)
        for a, b in zip(uu.tolist(), vv.tolist()):
            key = (a, b)
            if key not in seen:
                seen.add(key)
                pairs.append(key)
                need -= 1
                if need == 0:
                    break

    ew = hi - rng.random(edge_count) * (hi - lo)
    eu = np.fromiter((p[0] for p in pairs), dtype=np.int64, count=edge_count)
    ev = np.fromiter((p[1] for p in pairs), dtype=np.int64, count=edge_count)
    u_labels = [f"u{i}" for i in range(u_count)]
    v_labels = [f"v{i}" for i in range(v_count)]
    return BipartiteGraph(u_labels, v_labels, eu, ev, ew)
