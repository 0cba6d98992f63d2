"""Random depth search: pick a centre-line path through a mask.

Pipeline: Zhang-Suen thinning -> degree-based graph extraction -> Kruskal
spanning forest -> all leaf-to-leaf paths -> length-proportional sampling.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import EmptyMaskError, NoPathsError
from .mask import as_mask

SQRT2 = math.sqrt(2.0)
SINGLE_POINT_LENGTH = 1.0

# Zhang-Suen neighbour order P2..P9: N, NE, E, SE, S, SW, W, NW as (dy, dx).
_ZS_OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _zs_tables():
    first = np.zeros(256, dtype=bool)
    second = np.zeros(256, dtype=bool)
    for code in range(256):
        p = [(code >> i) & 1 for i in range(8)]  # p[0] = P2 ... p[7] = P9
        b = sum(p)
        a = sum(1 for i in range(8) if p[i] == 0 and p[(i + 1) % 8] == 1)
        if not (2 <= b <= 6 and a == 1):
            continue
        p2, p4, p6, p8 = p[0], p[2], p[4], p[6]
        first[code] = p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
        second[code] = p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0
    return first, second


_ZS_FIRST, _ZS_SECOND = _zs_tables()


def zhang_suen(mask) -> np.ndarray:
    """Plain two-subiteration Zhang-Suen thinning (no component repair)."""
    m = as_mask(mask)
    h, w = m.shape
    pad = np.pad(m, 1).astype(np.uint8)
    flat = pad.ravel()
    stride = w + 2
    offsets = np.array([dy * stride + dx for dy, dx in _ZS_OFFSETS])
    weights = (1 << np.arange(8)).astype(np.int32)

    active = np.flatnonzero(flat)
    changed = True
    while changed:
        changed = False
        for table in (_ZS_FIRST, _ZS_SECOND):
            if active.size == 0:
                break
            codes = (flat[active[:, None] + offsets[None, :]].astype(np.int32) * weights).sum(axis=1)
            kill = table[codes]
            if kill.any():
                flat[active[kill]] = 0
                active = active[~kill]
                changed = True
    return pad[1:-1, 1:-1].astype(bool)


def medial_axis(mask) -> np.ndarray:
    """One-pixel-wide 8-connected skeleton by Zhang-Suen thinning.

    Thinning erases 2x2 blocks completely; any component left without a
    skeleton pixel gets back the pixel nearest its centroid so the component
    count is preserved.
    """
    m = as_mask(mask)
    if not m.any():
        raise EmptyMaskError("cannot skeletonize an empty mask")
    skel = zhang_suen(m)
    labels, n = ndimage.label(m, structure=np.ones((3, 3), dtype=bool))
    hit = np.zeros(n + 1, dtype=bool)
    hit[labels[skel]] = True
    for lab in np.flatnonzero(~hit[1:]) + 1:
        ys, xs = np.nonzero(labels == lab)
        d2 = (xs - xs.mean()) ** 2 + (ys - ys.mean()) ** 2
        i = int(np.argmin(d2))  # first minimum in raster order
        skel[ys[i], xs[i]] = True
    return skel


def chain_length(chain) -> float:
    """Euclidean length of an 8-connected pixel chain.

    Computed as axial + sqrt(2) * diagonal so that equal chains give equal
    floats regardless of step order.
    """
    axial = diag = 0
    for (x0, y0), (x1, y1) in zip(chain, chain[1:]):
        if x0 != x1 and y0 != y1:
            diag += 1
        else:
            axial += 1
    return axial + SQRT2 * diag


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    weight: float
    chain: tuple  # pixels (x, y) from node u to node v inclusive


@dataclass
class SkeletonGraph:
    """Nodes are skeleton pixels of degree != 2; edges are the chains between them.

    A :class:`PathTree` has the same shape with the acyclic constraint.
    """

    nodes: dict[int, tuple[int, int]]
    edges: list[Edge] = field(default_factory=list)

    def adjacency(self):
        adj = defaultdict(list)
        for i, e in enumerate(self.edges):
            adj[e.u].append((e.v, i))
            if e.v != e.u:
                adj[e.v].append((e.u, i))
        return adj

    def degree(self, node: int) -> int:
        return sum(1 for e in self.edges for end in (e.u, e.v) if end == node)

    def total_weight(self) -> float:
        return math.fsum(e.weight for e in self.edges)


PathTree = SkeletonGraph


@dataclass(frozen=True)
class SkeletonPath:
    points: tuple  # (x, y) pixels, consecutive ones are 8-neighbours
    length: float

    @property
    def weight(self) -> float:
        """Sampling weight; single-point paths get a floor so they stay samplable."""
        return self.length if len(self.points) > 1 else SINGLE_POINT_LENGTH


def _neighbours(pixels: set, p):
    """Mixed (m-)adjacency: a diagonal link only counts when no shared
    4-neighbour already joins the two pixels. Same components as
    8-adjacency, without the triangles around corners and crossings.
    """
    x, y = p
    out = []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if not (dx or dy) or (x + dx, y + dy) not in pixels:
                continue
            if dx and dy and ((x + dx, y) in pixels or (x, y + dy) in pixels):
                continue
            out.append((x + dx, y + dy))
    return out


def build_graph(skeleton) -> SkeletonGraph:
    sk = as_mask(skeleton)
    ys, xs = np.nonzero(sk)  # raster order
    pixels = set(zip(xs.tolist(), ys.tolist()))
    order = list(zip(xs.tolist(), ys.tolist()))
    nbrs = {p: _neighbours(pixels, p) for p in order}

    node_of = {}
    for p in order:
        if len(nbrs[p]) != 2:
            node_of[p] = len(node_of)
    graph = SkeletonGraph(nodes={i: p for p, i in node_of.items()})

    used_steps = set()  # directed (from, to) first steps already consumed
    visited = set(node_of)
    for p in order:
        if p not in node_of:
            continue
        for q in nbrs[p]:
            if (p, q) in used_steps:
                continue
            chain = [p, q]
            prev, cur = p, q
            while cur not in node_of:
                visited.add(cur)
                a, b = nbrs[cur]
                prev, cur = cur, (b if a == prev else a)
                chain.append(cur)
            used_steps.add((p, q))
            used_steps.add((chain[-1], chain[-2]))
            graph.edges.append(Edge(node_of[p], node_of[cur], chain_length(chain), tuple(chain)))

    # Pure cycles have no node; seed one at their first raster pixel.
    for p in order:
        if p in visited:
            continue
        nid = len(graph.nodes)
        graph.nodes[nid] = p
        visited.add(p)
        chain = [p]
        prev, cur = p, nbrs[p][0]
        while cur != p:
            visited.add(cur)
            chain.append(cur)
            a, b = nbrs[cur]
            prev, cur = cur, (b if a == prev else a)
        chain.append(p)
        graph.edges.append(Edge(nid, nid, chain_length(chain), tuple(chain)))
    return graph


class UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}
        self.rank = dict.fromkeys(items, 0)

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def kruskal_mst(graph: SkeletonGraph) -> PathTree:
    """Minimum spanning forest; ties go to the smaller ``(min(u,v), max(u,v))`` pair."""
    uf = UnionFind(graph.nodes)
    ranked = sorted(
        (i for i, e in enumerate(graph.edges) if e.u != e.v),
        key=lambda i: (graph.edges[i].weight, min(graph.edges[i].u, graph.edges[i].v),
                       max(graph.edges[i].u, graph.edges[i].v), i),
    )
    tree = PathTree(nodes=dict(graph.nodes))
    for i in ranked:
        e = graph.edges[i]
        if uf.union(e.u, e.v):
            tree.edges.append(e)
    return tree


def _leaf_pairs(tree: PathTree):
    """Yield ``(leaf_i, leaf_j, length, parents)`` for every leaf pair, i <= j.

    ``parents`` maps each node reached from leaf_i to ``(parent, edge_index)``
    and is used to expand the pixel chain lazily.
    """
    adj = tree.adjacency()
    leaves = sorted(n for n in tree.nodes if len(adj[n]) <= 1)
    leaf_set = set(leaves)
    for i in leaves:
        if not adj[i]:
            yield i, i, 0.0, {i: None}
            continue
        dist = {i: 0.0}
        parents = {i: None}
        stack = [i]
        while stack:
            n = stack.pop()
            for m, ei in adj[n]:
                if m not in parents:
                    parents[m] = (n, ei)
                    dist[m] = dist[n] + tree.edges[ei].weight
                    stack.append(m)
        for j in sorted(x for x in parents if x in leaf_set and x > i):
            yield i, j, dist[j], parents


def _expand(tree: PathTree, i: int, j: int, parents) -> tuple:
    if i == j:
        return (tree.nodes[i],)
    hops = []
    n = j
    while parents[n] is not None:
        p, ei = parents[n]
        hops.append((p, ei))
        n = p
    hops.reverse()  # now from i towards j
    points = [tree.nodes[i]]
    for p, ei in hops:
        e = tree.edges[ei]
        chain = e.chain if e.u == p else e.chain[::-1]
        points.extend(chain[1:])
    return tuple(points)


def enumerate_paths(tree: PathTree) -> list[SkeletonPath]:
    """Every leaf-to-leaf simple path, ordered by (smaller leaf id, larger leaf id)."""
    return [SkeletonPath(_expand(tree, i, j, par), length)
            for i, j, length, par in _leaf_pairs(tree)]


def select_index(weights, rng) -> int:
    """Inverse-CDF draw proportional to ``weights``; consumes one uniform."""
    if len(weights) == 0:
        raise NoPathsError("no paths to choose from")
    total = math.fsum(weights)
    u = rng.uniform() * total
    acc = 0.0
    for idx, wgt in enumerate(weights):
        acc += wgt
        if u < acc:
            return idx
    return len(weights) - 1


def path_probabilities(paths) -> list[float]:
    weights = [p.weight for p in paths]
    total = math.fsum(weights)
    return [w / total for w in weights]


def select_path(paths: list[SkeletonPath], rng) -> SkeletonPath:
    return paths[select_index([p.weight for p in paths], rng)]


def _largest_component(tree: PathTree) -> PathTree:
    uf = UnionFind(tree.nodes)
    for e in tree.edges:
        uf.union(e.u, e.v)
    pixels = defaultdict(set)
    for n, p in tree.nodes.items():
        pixels[uf.find(n)].add(p)
    for e in tree.edges:
        pixels[uf.find(e.u)].update(e.chain)
    if len(pixels) == 1:
        return tree
    best = min(pixels, key=lambda r: (-len(pixels[r]), min(n for n in tree.nodes if uf.find(n) == r)))
    keep = {n: p for n, p in tree.nodes.items() if uf.find(n) == best}
    return PathTree(nodes=keep, edges=[e for e in tree.edges if e.u in keep])


def random_depth_search(mask, rng) -> SkeletonPath:
    """Sample one leaf-to-leaf skeleton path with probability proportional to length."""
    tree = _largest_component(kruskal_mst(build_graph(medial_axis(mask))))
    pairs = list(_leaf_pairs(tree))
    weights = [length if i != j else SINGLE_POINT_LENGTH for i, j, length, _ in pairs]
    i, j, length, parents = pairs[select_index(weights, rng)]
    return SkeletonPath(_expand(tree, i, j, parents), length)
