"""Self-similar networks with explicit port labels.

Every node owns ``degree[u]`` ports numbered ``0 .. degree[u]-1``. An edge is a
pairing ``(u, pu) <-> (v, pv)`` of two ports; a self-loop pairs a port with
itself. Global port indices are ``offset[u] + p``.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

KINDS = ("ring", "dsg", "hn3", "mk3", "mk4")

# Bond-replacement motifs. Nodes 0 and 1 are the anchors (the ends of the bond
# being replaced), every other node is created by the replacement.
MOTIFS: dict[str, list[tuple[int, int]]] = {
    "mk3": [(0, 2), (1, 3), (2, 4), (2, 5), (3, 4), (3, 5), (4, 5)],
    "mk4": [(0, 2), (1, 3), (2, 4), (2, 5), (2, 6), (3, 4), (3, 5), (3, 7),
            (4, 6), (4, 7), (5, 6), (5, 7), (6, 7)],
    "diamond": [(0, 2), (2, 1), (0, 3), (3, 1)],
}
DEFAULT_MOTIF = {"mk3": "mk3", "mk4": "mk4"}


class NetworkError(ValueError):
    """Invalid constructor arguments or malformed network data."""


@dataclass(frozen=True)
class Network:
    """Port-labelled graph.

    Attributes
    ----------
    kind : str
        One of ``KINDS``.
    generation : int
        Construction level (k for ring/HN3, g for DSG/MK).
    degree : tuple of int
        Number of ports per node.
    edges : tuple of (u, pu, v, pv)
        Port pairings in construction order. Self-loops have ``u == v`` and
        ``pu == pv``.
    boundary : tuple of int
        Decimation anchors (outermost retained sites).
    origin : int
        Designated start node for walks.
    """

    kind: str
    generation: int
    degree: tuple[int, ...]
    edges: tuple[tuple[int, int, int, int], ...]
    boundary: tuple[int, ...] = ()
    origin: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.degree)

    @cached_property
    def offset(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.degree)]).astype(np.int64)

    @property
    def n_ports(self) -> int:
        return int(self.offset[-1])

    @cached_property
    def partner(self) -> np.ndarray:
        """Global port index reached by following the edge at each port."""
        out = np.full(self.n_ports, -1, dtype=np.int64)
        off = self.offset
        for u, pu, v, pv in self.edges:
            a, b = off[u] + pu, off[v] + pv
            if out[a] != -1 or out[b] != -1:
                raise NetworkError(f"port used twice in edge {(u, pu, v, pv)}")
            out[a] = b
            out[b] = a
        if np.any(out < 0):
            raise NetworkError("unmatched port")
        return out

    @cached_property
    def port_node(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_nodes), self.degree)

    @cached_property
    def self_loops(self) -> tuple[tuple[int, int], ...]:
        return tuple((u, pu) for u, pu, v, pv in self.edges if u == v and pu == pv)

    def neighbors(self, u: int) -> list[int]:
        """Neighbour of each port of ``u`` in port order (self-loops give ``u``)."""
        off = self.offset
        return [int(self.port_node[self.partner[off[u] + p]]) for p in range(self.degree[u])]

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency between distinct nodes."""
        rows, cols = [], []
        for u, _, v, _ in self.edges:
            if u != v:
                rows += [u, v]
                cols += [v, u]
        a = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n_nodes,) * 2)
        a = a.tocsr()
        a.data[:] = 1.0
        return a

    def distances_from(self, u: int) -> np.ndarray:
        """Hop distances from ``u`` to every node (BFS)."""
        return shortest_path(self.adjacency(), unweighted=True, indices=u).astype(np.int64)

    def check(self) -> None:
        """Raise NetworkError if the port matching is not an involution."""
        p = self.partner
        if not np.array_equal(p[p], np.arange(self.n_ports)):
            raise NetworkError("port matching is not an involution")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "generation": self.generation,
            "n_nodes": self.n_nodes,
            "degree": list(self.degree),
            "edges": [list(e) for e in self.edges],
            "boundary": list(self.boundary),
            "origin": self.origin,
            "meta": dict(self.meta),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        edges = tuple(tuple(int(x) for x in e) for e in d["edges"])
        if "degree" in d:
            degree = tuple(int(x) for x in d["degree"])
        else:
            degree = _degrees_from_edges(int(d["n_nodes"]), edges)
        if len(degree) != int(d["n_nodes"]):
            raise NetworkError("n_nodes does not match degree list")
        net = cls(d["kind"], int(d["generation"]), degree, edges,
                  tuple(d.get("boundary", ())), int(d.get("origin", 0)), dict(d.get("meta", {})))
        net.check()
        return net


def _degrees_from_edges(n: int, edges) -> tuple[int, ...]:
    deg = [0] * n
    for u, pu, v, pv in edges:
        deg[u] = max(deg[u], pu + 1)
        deg[v] = max(deg[v], pv + 1)
    return tuple(deg)


class _Builder:
    """Assigns ports in the order edges are added."""

    def __init__(self, n: int = 0):
        self.deg: list[int] = [0] * n
        self.edges: list[tuple[int, int, int, int]] = []

    def add_node(self) -> int:
        self.deg.append(0)
        return len(self.deg) - 1

    def bond(self, u: int, v: int) -> None:
        pu = self.deg[u]
        self.deg[u] += 1
        pv = self.deg[v]
        self.deg[v] += 1
        self.edges.append((u, pu, v, pv))

    def loop(self, u: int) -> None:
        p = self.deg[u]
        self.deg[u] += 1
        self.edges.append((u, p, u, p))

    def pad(self, u: int, d: int) -> None:
        while self.deg[u] < d:
            self.loop(u)


def build_ring(k: int) -> Network:
    """Cycle of ``2**k`` nodes. Port 0 points left, port 1 points right."""
    if k < 1:
        raise NetworkError("ring needs k >= 1")
    n = 2 ** k
    edges = tuple((i, 1, (i + 1) % n, 0) for i in range(n))
    return Network("ring", k, (2,) * n, edges, boundary=tuple(range(0, n, 2)), origin=0)


def _dsg_edges(g: int) -> tuple[int, list[tuple[int, int]], tuple[int, int, int]]:
    if g == 0:
        return 3, [(0, 1), (1, 2), (2, 0)], (0, 1, 2)
    n, bonds, corners = _dsg_edges(g - 1)
    out = []
    for c in range(3):
        out += [(u + c * n, v + c * n) for u, v in bonds]
    for i, j in ((0, 1), (0, 2), (1, 2)):
        out.append((corners[j] + i * n, corners[i] + j * n))
    return 3 * n, out, tuple(corners[i] + i * n for i in range(3))


def build_dsg(g: int, corner_closure: str = "self-loop") -> Network:
    """Dual Sierpinski gasket with ``3**(g+1)`` nodes.

    Generation ``g`` joins three copies of generation ``g-1`` through the
    corner pairs (copy i, corner j) -- (copy j, corner i). With
    ``corner_closure="self-loop"`` the three outer corners get a looped third
    port; ``"none"`` leaves them with degree 2.
    """
    if g < 0:
        raise NetworkError("dsg needs g >= 0")
    if corner_closure not in ("self-loop", "none"):
        raise NetworkError(f"unknown corner closure {corner_closure!r}")
    n, bonds, corners = _dsg_edges(g)
    b = _Builder(n)
    for u, v in bonds:
        b.bond(u, v)
    if corner_closure == "self-loop":
        for c in corners:
            b.pad(c, 3)
    return Network("dsg", g, tuple(b.deg), tuple(b.edges), boundary=corners, origin=corners[0],
                   meta={"corner_closure": corner_closure})


def hn3_partner(n: int, N: int) -> int:
    """Long-range partner of site ``n`` on an HN3 ring of ``N`` sites (n itself if none)."""
    if n % N == 0:
        return n
    i = (n & -n).bit_length() - 1
    j = n >> i
    if j % 4 == 1:
        return (n + 2 ** (i + 1)) % N
    return (n - 2 ** (i + 1)) % N


def build_hn3(k: int) -> Network:
    """Hanoi network HN3 on a ring of ``2**k`` sites.

    Ports 0 and 1 are the ring bonds, port 2 the long-range bond. Sites 0 and
    ``N/2`` have no partner and get a self-loop instead.
    """
    if k < 2:
        raise NetworkError("hn3 needs k >= 2")
    N = 2 ** k
    b = _Builder(N)
    for i in range(N):
        b.bond(i, (i + 1) % N)
    for n in range(N):
        m = hn3_partner(n, N)
        if m == n:
            b.loop(n)
        elif n < m:
            b.bond(n, m)
    # reorder ports so 0 = left, 1 = right, 2 = long
    edges = []
    for u, pu, v, pv in b.edges:
        edges.append((u, _ring_port(u, pu, N), v, _ring_port(v, pv, N)))
    return Network("hn3", k, (3,) * N, tuple(edges), boundary=(0, N // 2), origin=0)


def _ring_port(u: int, p: int, N: int) -> int:
    # node 0 meets its right bond before its left one during construction
    if p == 2 or u != 0:
        return p
    return 1 - p


def build_mk(variant: str, g: int, motif: str | Sequence[tuple[int, int]] | None = None,
             close_anchors: bool = True) -> Network:
    """Hierarchical bond-replacement network.

    Parameters
    ----------
    variant : {"mk3", "mk4"}
    g : int
        Number of replacement rounds; ``g=0`` is a single bond.
    motif : str or edge list, optional
        Motif name from ``MOTIFS`` or an explicit edge list with anchors 0, 1.
    close_anchors : bool
        Pad the two anchors with self-loops up to the bulk degree.
    """
    variant = variant.lower()
    if variant not in ("mk3", "mk4"):
        raise NetworkError(f"unknown MK variant {variant!r}")
    if g < 0:
        raise NetworkError("mk needs g >= 0")
    if motif is None:
        motif = DEFAULT_MOTIF[variant]
    edges_m = MOTIFS[motif] if isinstance(motif, str) else [tuple(e) for e in motif]
    n_motif = 1 + max(max(e) for e in edges_m)

    bonds = [(0, 1)]
    n = 2
    for _ in range(g):
        new = []
        for u, v in bonds:
            label = {0: u, 1: v}
            for x in range(2, n_motif):
                label[x] = n
                n += 1
            new += [(label[a], label[b]) for a, b in edges_m]
        bonds = new
    b = _Builder(n)
    for u, v in bonds:
        b.bond(u, v)
    bulk = {"mk3": 3, "mk4": 4}[variant]
    interior_deg = {sum(x in e for e in edges_m) for x in range(2, n_motif)}
    if close_anchors and interior_deg == {bulk}:
        b.pad(0, bulk)
        b.pad(1, bulk)
    name = motif if isinstance(motif, str) else "custom"
    return Network(variant, g, tuple(b.deg), tuple(b.edges), boundary=(0, 1), origin=0,
                   meta={"motif": name, "n_bonds": len(bonds)})


def build(kind: str, generation: int, **kw) -> Network:
    """Dispatch on ``kind``."""
    kind = kind.lower()
    if kind == "ring":
        return build_ring(generation)
    if kind == "dsg":
        return build_dsg(generation, **kw)
    if kind == "hn3":
        return build_hn3(generation)
    if kind in ("mk3", "mk4"):
        return build_mk(kind, generation, **kw)
    raise NetworkError(f"unknown network kind {kind!r}")


def graph_distance(net: Network, u: int, v: int) -> int:
    """Shortest-path hop count between ``u`` and ``v``."""
    for x in (u, v):
        if not 0 <= x < net.n_nodes:
            raise NetworkError(f"node {x} out of range")
    if u == v:
        return 0
    seen = {u}
    q = deque([(u, 0)])
    while q:
        x, d = q.popleft()
        for y in net.neighbors(x):
            if y == v:
                return d + 1
            if y not in seen:
                seen.add(y)
                q.append((y, d + 1))
    raise NetworkError("nodes are disconnected")


def retained_sites(net: Network) -> np.ndarray:
    """Sites kept by one decimation step (the generation below as a skeleton)."""
    if net.kind in ("ring", "hn3"):
        return np.arange(0, net.n_nodes, 2)
    if net.kind == "dsg":
        if net.generation == 0:
            return np.array(net.boundary)
        _, _, corners = _dsg_edges(1)
        return np.array(sorted(c + 9 * b for b in range(net.n_nodes // 9) for c in corners))
    if net.kind in ("mk3", "mk4"):
        if net.generation == 0:
            return np.array([0, 1])
        prev = build_mk(net.kind, net.generation - 1, motif=net.meta.get("motif"))
        return np.arange(prev.n_nodes)
    raise NetworkError(f"unknown network kind {net.kind!r}")


def save_network(net: Network, path) -> None:
    with open(path, "w") as fh:
        fh.write(net.to_json())


def load_network(path) -> Network:
    with open(path) as fh:
        return Network.from_dict(json.load(fh))
