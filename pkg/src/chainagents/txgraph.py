"""Address transaction graph and hop distances to a labeled address set.

Edges point from every input address of a transaction to every output
address (self-payments dropped, duplicates merged). Adjacency is stored in
compressed sparse rows with 64-bit offsets. Edges are unweighted, so the
shortest-distance search is a level-synchronous multi-source BFS.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import Address, Chain

UNREACHABLE = -1
DIRECTIONS = ("undirected", "forward", "backward")


def _csr(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, dst[order].astype(np.int64)


@dataclass(frozen=True, eq=False)
class AddressGraph:
    addresses: tuple[Address, ...]
    indptr: np.ndarray
    indices: np.ndarray

    @classmethod
    def from_edges(cls, addresses, src, dst) -> "AddressGraph":
        """Build from parallel id arrays; self-loops and duplicates are dropped."""
        addresses = tuple(addresses)
        n = len(addresses)
        if len(set(addresses)) != n:
            raise ValueError("address table must not repeat entries")
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        keep = src != dst
        keys = np.unique(src[keep] * n + dst[keep])
        indptr, indices = _csr(n, keys // n, keys % n)
        return cls(addresses, indptr, indices)

    @property
    def n_nodes(self) -> int:
        return len(self.addresses)

    @property
    def n_edges(self) -> int:
        return int(self.indices.size)

    @cached_property
    def index(self) -> dict[Address, int]:
        return {a: i for i, a in enumerate(self.addresses)}

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        src = np.repeat(np.arange(self.n_nodes, dtype=np.int64), np.diff(self.indptr))
        return src, self.indices

    @cached_property
    def reverse(self) -> tuple[np.ndarray, np.ndarray]:
        src, dst = self.edges
        return _csr(self.n_nodes, dst, src)

    @cached_property
    def undirected(self) -> tuple[np.ndarray, np.ndarray]:
        src, dst = self.edges
        keys = np.unique(np.concatenate([src * self.n_nodes + dst, dst * self.n_nodes + src]))
        return _csr(self.n_nodes, keys // self.n_nodes, keys % self.n_nodes)

    def adjacency(self, direction: str = "undirected") -> tuple[np.ndarray, np.ndarray]:
        """CSR used to expand a frontier in ``direction``."""
        if direction == "forward":
            return self.indptr, self.indices
        if direction == "backward":
            return self.reverse
        if direction == "undirected":
            return self.undirected
        raise ValueError(f"unknown direction {direction!r}")

    def neighbors(self, i: int, direction: str = "forward") -> np.ndarray:
        indptr, indices = self.adjacency(direction)
        return indices[indptr[i]:indptr[i + 1]]


def build_graph(chain: Chain) -> AddressGraph:
    """Directed sender -> receiver graph over every address of the chain."""
    addrs = chain.addresses
    index = {a: i for i, a in enumerate(addrs)}
    src: list[int] = []
    dst: list[int] = []
    for _, tx in chain.transactions():
        if tx.is_coinbase:
            continue
        outs = [index[a] for a in tx.output_addresses]
        for a in tx.input_addresses:
            i = index[a]
            src.extend([i] * len(outs))
            dst.extend(outs)
    return AddressGraph.from_edges(addrs, src, dst)


@dataclass(frozen=True, eq=False)
class DistanceResult:
    distances: np.ndarray  # UNREACHABLE where no path exists
    direction: str

    @property
    def histogram(self) -> dict[int, int]:
        d = self.distances[self.distances != UNREACHABLE]
        counts = np.bincount(d) if d.size else np.zeros(0, dtype=np.int64)
        return {h: int(c) for h, c in enumerate(counts)}

    @property
    def n_unreachable(self) -> int:
        return int(np.sum(self.distances == UNREACHABLE))

    def cumulative(self) -> dict[int, float]:
        """Fraction of all addresses within each hop count."""
        n = self.distances.size
        out, run = {}, 0
        for h, c in self.histogram.items():
            run += c
            out[h] = run / n
        return out


def _expand(frontier, indptr, indices):
    starts = indptr[frontier]
    lens = indptr[frontier + 1] - starts
    total = int(lens.sum())
    if not total:
        return np.zeros(0, dtype=np.int64)
    offs = np.repeat(starts - np.cumsum(lens) + lens, lens) + np.arange(total)
    return indices[offs]


def _label_ids(graph: AddressGraph, labeled) -> np.ndarray:
    ids = []
    for a in labeled:
        i = graph.index.get(a)
        if i is None:
            raise KeyError(f"labeled address {a!r} is not in the graph")
        ids.append(i)
    if not ids:
        raise ValueError("labeled set is empty")
    return np.unique(np.asarray(ids, dtype=np.int64))


def distances_from(graph: AddressGraph, labeled, direction: str = "undirected") -> DistanceResult:
    """Hop distance from the nearest labeled address to every address.

    ``forward`` follows money out of the labeled set, ``backward`` traces it
    in, ``undirected`` ignores edge orientation.
    """
    indptr, indices = graph.adjacency(direction)
    dist = np.full(graph.n_nodes, UNREACHABLE, dtype=np.int64)
    frontier = _label_ids(graph, labeled)
    dist[frontier] = 0
    level = 0
    while frontier.size:
        level += 1
        nb = _expand(frontier, indptr, indices)
        nb = np.unique(nb[dist[nb] == UNREACHABLE])
        dist[nb] = level
        frontier = nb
    return DistanceResult(dist, direction)


def shortest_path(graph: AddressGraph, source: Address, labeled, direction: str = "undirected",
                  result: DistanceResult | None = None) -> list[Address]:
    """One hop-minimal path from ``source`` to the labeled set.

    Each step moves to the lowest-id predecessor one level closer, so the
    path is deterministic. Pass a precomputed ``result`` to reuse a search.
    """
    if result is None or result.direction != direction:
        result = distances_from(graph, labeled, direction)
    dist = result.distances
    v = graph.index[source]
    if dist[v] == UNREACHABLE:
        raise ValueError(f"{source!r} cannot reach the labeled set")
    # predecessors of v in the search are its neighbours along the reverse direction
    back = {"forward": "backward", "backward": "forward", "undirected": "undirected"}[direction]
    path = [v]
    while dist[v] > 0:
        nb = graph.neighbors(v, back)
        v = int(np.min(nb[dist[nb] == dist[v] - 1]))
        path.append(v)
    return [graph.addresses[i] for i in path]


def labeled_from_catalog(catalog, top_n: int) -> set[Address]:
    """Addresses of the agents ranked ``1..top_n``."""
    rank = {s.agent_id: s.rank for s in catalog.summaries}
    return {a for a, ag in catalog.labels.items() if rank.get(ag, top_n + 1) <= top_n}


def agents_for_share(catalog, share: float = 0.5) -> int:
    """Fewest top-ranked agents whose combined mined coin exceeds ``share``."""
    total = sum(s.satoshi for s in catalog.summaries)
    run = 0
    for i, s in enumerate(sorted(catalog.summaries, key=lambda s: s.rank), start=1):
        run += s.satoshi
        if run > share * total:
            return i
    return len(catalog.summaries)


def write_histogram_csv(result: DistanceResult, path) -> None:
    cum = result.cumulative()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hops", "count", "cumulative_fraction"])
        for h, c in result.histogram.items():
            w.writerow([h, c, repr(cum[h])])
        w.writerow(["unreachable", result.n_unreachable, repr(1.0)])


def write_path(path_addrs, path) -> None:
    with open(path, "w") as fh:
        fh.writelines(a + "\n" for a in path_addrs)
