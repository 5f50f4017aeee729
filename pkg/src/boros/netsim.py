"""Path-length experiments on synthetic payment networks.

Three arms share one base topology and one budget of ``m = ceil(n * alpha)``:

* PN adds ``m`` random extra channels;
* PH puts ``m`` nodes into payment hubs, making them mutually one hop apart;
* CH puts ``m`` existing channels into channel hubs, making every endpoint of
  a member channel one hop from every other such endpoint.

A hub is modelled as a virtual vertex joined to its members by half-weight
spokes, so a traversal through it costs exactly one hop and never needs the
member clique to be materialised.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

KINDS = ("pn", "ph", "ch")
ROUTERS = ("sp", "em")
CHUNK = 512  # sources per shortest-path batch


class NetsimError(Exception):
    pass


class InfeasibleRatio(NetsimError):
    pass


class RoutingStuck(NetsimError):
    pass


@dataclass(frozen=True)
class Topology:
    n: int
    edges: tuple[tuple[int, int], ...]  # (u, v) with u < v, sorted
    seed: int

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for row in adj:
            row.sort()
        return adj

    def connected(self) -> bool:
        return _components(self.n, self.edges) == 1


@dataclass(frozen=True)
class HubOverlay:
    kind: str  # pn | ph | ch
    alpha: float
    k: int
    members: tuple[tuple, ...] = ()  # per hub: nodes (ph) or edges (ch)
    extra_edges: tuple[tuple[int, int], ...] = ()  # pn only

    @property
    def hub_count(self) -> int:
        return len(self.members)

    def groups(self) -> list[list[int]]:
        """Nodes made mutually adjacent by each hub."""
        if self.kind == "ph":
            return [sorted(h) for h in self.members]
        if self.kind == "ch":
            return [sorted({x for e in h for x in e}) for h in self.members]
        return []


@dataclass
class EvalResult:
    n: int
    ratio: float
    alpha: float
    k: int
    hubs: int
    seeds: list[int]
    pairs: int
    mean: dict[tuple[str, str], float] = field(default_factory=dict)  # (kind, router) -> hops
    stderr: dict[tuple[str, str], float] = field(default_factory=dict)  # across seeds
    per_seed: dict[tuple[str, str], list[float]] = field(default_factory=dict)
    stuck_rate: dict[str, float] = field(default_factory=dict)

    def delta1(self, router: str = "sp") -> float:
        ph, ch = self.mean[("ph", router)], self.mean[("ch", router)]
        return 100.0 * (ph - ch) / ph

    def delta2(self, router: str = "sp") -> float:
        pn, ch = self.mean[("pn", router)], self.mean[("ch", router)]
        return 100.0 * (pn - ch) / pn

    def rows(self) -> list[dict]:
        row = {"nodes": self.n, "ratio": self.ratio, "alpha": self.alpha, "hub_size": self.k,
               "hubs": self.hubs, "seeds": len(self.seeds), "pairs": self.pairs}
        for router, tag in (("sp", "FW"), ("em", "SM")):
            kinds = [kind for kind in KINDS if (kind, router) in self.mean]
            for kind in kinds:
                row[f"{kind.upper()}-{tag}"] = round(self.mean[(kind, router)], 4)
            if len(kinds) == len(KINDS):
                row[f"Δ1-{tag}"] = round(self.delta1(router), 2)
                row[f"Δ2-{tag}"] = round(self.delta2(router), 2)
            for kind in kinds:
                row[f"{kind.upper()}-{tag}-se"] = round(self.stderr[(kind, router)], 4)
        for kind, rate in self.stuck_rate.items():
            row[f"{kind.upper()}-SM-stuck"] = round(rate, 4)
        return [row]

    def to_csv(self) -> str:
        return results_csv([self])


def results_csv(results: Iterable[EvalResult]) -> str:
    rows = [r for res in results for r in res.rows()]
    if not rows:
        return ""
    header: list[str] = []
    for r in rows:
        header += [k for k in r if k not in header]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


# -- topology ----------------------------------------------------------------


def _components(n: int, edges: Sequence[tuple[int, int]]) -> int:
    if n == 0:
        return 0
    if not edges:
        return n
    a = np.asarray(edges)
    g = coo_matrix((np.ones(len(a)), (a[:, 0], a[:, 1])), shape=(n, n))
    return connected_components(g, directed=False)[0]


def _prufer_tree(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Uniformly random labelled spanning tree via a random Prufer sequence."""
    if n == 2:
        return [(0, 1)]
    seq = rng.integers(0, n, size=n - 2).tolist()
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((min(leaf, x), max(leaf, x)))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    u, v = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((min(u, v), max(u, v)))
    return edges


def _random_non_edges(n: int, have: set[tuple[int, int]], count: int,
                      rng: np.random.Generator) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    while len(out) < count:
        u, v = (int(x) for x in rng.integers(0, n, size=2))
        if u == v:
            continue
        e = (min(u, v), max(u, v))
        if e not in have:
            have.add(e)
            out.append(e)
    return out


def gen_topology(n: int, ratio: float, seed: int) -> Topology:
    """Connected random graph with ``ratio * n`` channels."""
    if n < 2:
        raise InfeasibleRatio("need at least two nodes")
    m = int(round(ratio * n))
    if m < n - 1 or m > n * (n - 1) // 2:
        raise InfeasibleRatio(f"{m} channels cannot connect {n} nodes simply")
    rng = np.random.default_rng([seed, 0])
    tree = _prufer_tree(n, rng)
    have = set(tree)
    extra = _random_non_edges(n, have, m - len(tree), rng)
    return Topology(n, tuple(sorted(tree + extra)), seed)


# -- overlays ----------------------------------------------------------------


def budget(n: int, alpha: float) -> int:
    """Members (or extra channels) an arm may add: ceil(n * alpha), at least one if alpha > 0."""
    if alpha <= 0:
        return 0
    return max(1, math.ceil(n * alpha - 1e-9))


def hub_count(n: int, alpha: float, k: int) -> int:
    return math.ceil(budget(n, alpha) / k) if alpha > 0 else 0


def _split(items: list, parts: int) -> tuple[tuple, ...]:
    """Even split: sizes differ by at most one, larger groups first."""
    if parts == 0:
        return ()
    q, r = divmod(len(items), parts)
    out, i = [], 0
    for p in range(parts):
        size = q + (1 if p < r else 0)
        out.append(tuple(items[i:i + size]))
        i += size
    return tuple(out)


def overlay_hubs(t: Topology, kind: str, alpha: float, k: int, seed: int) -> HubOverlay:
    if kind not in KINDS:
        raise NetsimError(f"unknown overlay kind {kind!r}")
    if not 0 <= alpha <= 1:
        raise NetsimError("alpha must lie in [0, 1]")
    m = budget(t.n, alpha)
    rng = np.random.default_rng([seed, 1 + KINDS.index(kind)])
    if kind == "pn":
        room = t.n * (t.n - 1) // 2 - len(t.edges)
        extra = _random_non_edges(t.n, set(t.edges), min(m, room), rng)
        return HubOverlay(kind, alpha, k, extra_edges=tuple(sorted(extra)))
    hubs = hub_count(t.n, alpha, k)
    if kind == "ph":
        chosen = sorted(rng.choice(t.n, size=min(m, t.n), replace=False).tolist())
        picked = [chosen[i] for i in rng.permutation(len(chosen))]
        return HubOverlay(kind, alpha, k, _split([int(x) for x in picked], hubs))
    idx = rng.choice(len(t.edges), size=min(m, len(t.edges)), replace=False)
    return HubOverlay(kind, alpha, k, _split([t.edges[i] for i in idx], hubs))


# -- shortest paths ----------------------------------------------------------


def _graph(t: Topology, overlay: HubOverlay | None):
    """Sparse weighted graph: channels weigh 1, hub spokes 1/2."""
    rows, cols, w = [], [], []
    edges = list(t.edges) + (list(overlay.extra_edges) if overlay else [])
    for u, v in edges:
        rows.append(u)
        cols.append(v)
        w.append(1.0)
    groups = overlay.groups() if overlay else []
    for h, members in enumerate(groups):
        hub = t.n + h
        for x in members:
            rows.append(x)
            cols.append(hub)
            w.append(0.5)
    size = t.n + len(groups)
    g = coo_matrix((w, (rows, cols)), shape=(size, size)).tocsr()
    return g


def pair_distances(t: Topology, overlay: HubOverlay | None, pairs: np.ndarray) -> np.ndarray:
    """Hop counts for every (src, dst) row of ``pairs``."""
    g = _graph(t, overlay)
    out = np.empty(len(pairs), dtype=float)
    order = np.argsort(pairs[:, 0], kind="stable")
    srcs = pairs[order, 0]
    uniq = np.unique(srcs)
    for lo in range(0, len(uniq), CHUNK):
        chunk = uniq[lo:lo + CHUNK]
        dist = dijkstra(g, directed=False, indices=chunk)
        row_of = {int(s): i for i, s in enumerate(chunk)}
        sel = np.nonzero((srcs >= chunk[0]) & (srcs <= chunk[-1]))[0]
        idx = order[sel]
        rows = np.fromiter((row_of[int(s)] for s in pairs[idx, 0]), dtype=int, count=len(idx))
        out[idx] = dist[rows, pairs[idx, 1]]
    if np.isinf(out).any():
        raise NetsimError("unreachable pair on a disconnected graph")
    return np.rint(out)


def route_shortest(t: Topology, overlay: HubOverlay | None, src: int, dst: int) -> int:
    if src == dst:
        raise NetsimError("source and destination coincide")
    return int(pair_distances(t, overlay, np.array([[src, dst]]))[0])


# -- embedding-based greedy routing ------------------------------------------


class Embedding:
    """Prefix coordinates on a BFS spanning tree, greedy forwarding on the overlay graph."""

    def __init__(self, t: Topology, overlay: HubOverlay | None = None):
        self.n = t.n
        adj = [set(row) for row in t.adjacency()]
        if overlay is not None:
            for u, v in overlay.extra_edges:
                adj[u].add(v)
                adj[v].add(u)
            for members in overlay.groups():
                for x in members:
                    adj[x].update(y for y in members if y != x)
        self.adj = [sorted(a) for a in adj]
        degrees = [len(a) for a in self.adj]
        self.root = min(range(self.n), key=lambda v: (-degrees[v], v))
        self.coord: list[tuple[int, ...]] = [()] * self.n
        seen = [False] * self.n
        seen[self.root] = True
        frontier = [self.root]
        while frontier:
            nxt = []
            for u in frontier:
                child = 0
                for v in self.adj[u]:
                    if not seen[v]:
                        seen[v] = True
                        self.coord[v] = self.coord[u] + (child,)
                        child += 1
                        nxt.append(v)
            frontier = nxt
        if not all(seen):
            raise NetsimError("embedding needs a connected graph")

    def tree_distance(self, u: int, v: int) -> int:
        a, b = self.coord[u], self.coord[v]
        common = 0
        for x, y in zip(a, b):
            if x != y:
                break
            common += 1
        return len(a) + len(b) - 2 * common

    def route(self, src: int, dst: int) -> int:
        if src == dst:
            raise NetsimError("source and destination coincide")
        hops, here = 0, src
        while here != dst:
            d_here = self.tree_distance(here, dst)
            best, best_d = None, d_here
            for v in self.adj[here]:  # ascending ids: ties go to the lowest
                d = self.tree_distance(v, dst)
                if d < best_d:
                    best, best_d = v, d
            if best is None:
                raise RoutingStuck(f"stuck at {here} routing {src}->{dst}")
            here = best
            hops += 1
        return hops


def route_embedding(t: Topology, overlay: HubOverlay | None, src: int, dst: int,
                    seed: int = 0) -> int:
    """Greedy hop count; the embedding itself is deterministic, ``seed`` is kept for symmetry."""
    return Embedding(t, overlay).route(src, dst)


# -- evaluation --------------------------------------------------------------


def sample_pairs(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    src = rng.integers(0, n, size=count)
    dst = (src + rng.integers(1, n, size=count)) % n
    return np.stack([src, dst], axis=1)


def load_workload(path: str, n: int) -> np.ndarray:
    pairs = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip().lstrip("-").isdigit():
                continue  # header or blank
            s, d = int(row[0]), int(row[1])
            if s != d and 0 <= s < n and 0 <= d < n:
                pairs.append((s, d))
    if not pairs:
        raise NetsimError(f"{path} holds no usable (src, dst) rows")
    return np.array(pairs, dtype=int)


def evaluate(n: int, ratio: float, alpha: float, k: int, seeds: Sequence[int],
             pairs: int = 100_000, kinds: Sequence[str] = KINDS,
             routers: Sequence[str] = ("sp",), workload: np.ndarray | None = None) -> EvalResult:
    """Average hop counts per arm and router, averaged over seeds."""
    res = EvalResult(n, ratio, alpha, k, hub_count(n, alpha, k), list(seeds),
                     pairs if workload is None else len(workload))
    stuck: dict[str, list[int]] = {kind: [0, 0] for kind in kinds}
    for seed in seeds:
        t = gen_topology(n, ratio, seed)
        rng = np.random.default_rng([seed, 99])
        q = workload if workload is not None else sample_pairs(n, pairs, rng)
        for kind in kinds:
            ov = overlay_hubs(t, kind, alpha, k, seed)
            if "sp" in routers:
                res.per_seed.setdefault((kind, "sp"), []).append(
                    float(pair_distances(t, ov, q).mean()))
            if "em" in routers:
                emb = Embedding(t, ov)
                hops = []
                for s, d in q:
                    try:
                        hops.append(emb.route(int(s), int(d)))
                    except RoutingStuck:
                        stuck[kind][0] += 1
                    stuck[kind][1] += 1
                res.per_seed.setdefault((kind, "em"), []).append(
                    float(np.mean(hops)) if hops else float("nan"))
    for key, vals in res.per_seed.items():
        arr = np.asarray(vals)
        res.mean[key] = float(arr.mean())
        res.stderr[key] = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    if "em" in routers:
        res.stuck_rate = {kind: s / max(total, 1) for kind, (s, total) in stuck.items()}
    return res
