"""Semantically colored planning graphs and Class-Ordered A*.

Vertices carry the dominant class of the map region they sit in; edges carry
the most-undesired class met while sampling the straight segment between
their endpoints. Unobserved space maps to the UNKNOWN_CLASS sentinel and is
always treated as undesired. The search minimizes the lexicographic pair
(number of undesired-class edges, total length); no scalarized weighting is
ever used.

Graph construction and search are read-only over their inputs; multiple
queries may run concurrently on one graph.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .compression import CompressedTree
from .errors import ConfigError, GraphError, TreeError
from .octree import (
    INTERIOR,
    ROOT_KEY,
    NodeKey,
    SemanticOctree,
    WorldConfig,
    child_key,
)

UNKNOWN_CLASS = -1


@dataclass(frozen=True)
class PlanQuery:
    """Start/goal vertex indices plus the task's class sets.

    ``undesired`` classes are minimized lexicographically before length;
    ``relevant`` classes additionally qualify map regions as traversable
    when building graphs. The two sets must be disjoint.
    """

    start: int
    goal: int
    undesired: frozenset[int] = frozenset()
    relevant: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "undesired", frozenset(self.undesired))
        object.__setattr__(self, "relevant", frozenset(self.relevant))
        overlap = self.undesired & self.relevant
        if overlap:
            raise ConfigError(f"classes {sorted(overlap)} both undesired and relevant")


class Edge(NamedTuple):
    u: int
    v: int
    length: float
    color: int


@dataclass
class ColoredGraph:
    """Undirected graph with per-vertex positions/colors and colored edges."""

    positions: np.ndarray
    colors: np.ndarray
    edges: list[Edge]
    _adjacency: dict[int, list[tuple[int, float, int]]] = field(
        default_factory=dict, repr=False)

    def __post_init__(self):
        n = len(self.positions)
        for e in self.edges:
            if not (0 <= e.u < n and 0 <= e.v < n):
                raise GraphError(f"edge {e} references a missing vertex")
            if e.length <= 0:
                raise GraphError(f"edge {e} has non-positive length")

    @property
    def num_vertices(self) -> int:
        return len(self.positions)

    def neighbors(self, u: int) -> list[tuple[int, float, int]]:
        if not self._adjacency:
            adj: dict[int, list] = {i: [] for i in range(self.num_vertices)}
            for e in self.edges:
                adj[e.u].append((e.v, e.length, e.color))
                adj[e.v].append((e.u, e.length, e.color))
            self._adjacency.update(adj)
        return self._adjacency[u]


class PlanResult(NamedTuple):
    vertices: list[int]
    undesired_edges: int
    length: float


# -- class lookups ------------------------------------------------------------


def dominant_class(marginals: np.ndarray) -> int:
    """Most likely class id of a distribution (ties to the lower id)."""
    return int(np.argmax(marginals))


def class_at(ctree: CompressedTree, point) -> int:
    """Class of the compressed-tree block containing a 3-d point.

    Returns UNKNOWN_CLASS for virtual (unobserved) blocks and for points
    outside the world volume.
    """
    world: WorldConfig = ctree.world
    if not world.contains(point):
        return UNKNOWN_CLASS
    key = ROOT_KEY
    while key in ctree.expanded:
        key = _child_containing(world, key, point)
    leaf = ctree.leaves.get(key)
    if leaf is None:
        raise TreeError(f"point descends to {key}, absent from the compressed tree")
    if leaf.virtual:
        return UNKNOWN_CLASS
    return dominant_class(leaf.marginals)


def octree_class_at(tree: SemanticOctree, point) -> int:
    """Class of the finest stored node containing a 3-d point.

    Descends while interior records continue; a stored leaf or summary gives
    its dominant class, and a missing child means unobserved space.
    """
    if not tree.world.contains(point):
        return UNKNOWN_CLASS
    key = ROOT_KEY
    while True:
        node = tree.nodes.get(key)
        if node is None:
            return UNKNOWN_CLASS
        if node.kind != INTERIOR:
            return dominant_class(tree.conditional(key))
        if not tree.stored_children(key):
            return UNKNOWN_CLASS
        key = _child_containing(tree.world, key, point)


def _child_containing(world: WorldConfig, key: NodeKey, point) -> NodeKey:
    coords = world.leaf_coords(point)
    shift = world.max_depth - key.depth - 1
    octant = 0
    for axis in range(world.dims):
        octant |= ((coords[axis] >> shift) & 1) << axis
    return child_key(key, octant, world.dims)


# -- edge coloring ---------------------------------------------------------------


def _severity(cid: int, query: PlanQuery):
    if cid in query.undesired:
        tier = 4
    elif cid == UNKNOWN_CLASS:
        tier = 3
    elif cid in query.relevant:
        tier = 1
    elif cid == 0:
        tier = 0
    else:
        tier = 2
    return (tier, -cid)


def _segment_color(lookup, p0: np.ndarray, p1: np.ndarray, step: float,
                   query: PlanQuery) -> int:
    """Most-undesired class sampled along the segment, endpoints included."""
    dist = float(np.linalg.norm(p1 - p0))
    samples = max(int(np.ceil(dist / step)), 1) + 1
    worst = None
    for t in np.linspace(0.0, 1.0, samples):
        cid = lookup(p0 + t * (p1 - p0))
        if worst is None or _severity(cid, query) > _severity(worst, query):
            worst = cid
    return worst


def _knn_edges(positions: np.ndarray, centers3d: np.ndarray, k: int,
               lookup, step: float, query: PlanQuery) -> list[Edge]:
    n = len(positions)
    k = min(k, n - 1)
    if k <= 0:
        return []
    kdt = cKDTree(positions)
    _, idx = kdt.query(positions, k=k + 1)
    idx = np.atleast_2d(idx)
    pairs = set()
    for u in range(n):
        for v in idx[u]:
            v = int(v)
            if v == u or v >= n:
                continue
            pairs.add((min(u, v), max(u, v)))
    edges = []
    for u, v in sorted(pairs):
        length = float(np.linalg.norm(positions[u] - positions[v]))
        if length <= 0.0:
            continue
        color = _segment_color(lookup, centers3d[u], centers3d[v], step, query)
        edges.append(Edge(u, v, length, color))
    return edges


# -- graph construction ------------------------------------------------------------


def graph_from_tree(ctree: CompressedTree, query: PlanQuery,
                    k_neighbors: int) -> ColoredGraph:
    """Colored graph over the traversable blocks of a compressed tree.

    One vertex sits at the horizontal center of every observed block whose
    dominant class is free space or a relevant class. Each vertex connects
    to its k nearest neighbors; edge colors come from sampling the 3-d
    segment between block centers at half a finest-cell step.
    """
    world: WorldConfig = ctree.world
    positions, centers, colors = [], [], []
    for key, leaf in ctree.leaf_items():
        if leaf.virtual:
            continue
        cid = dominant_class(leaf.marginals)
        if cid != 0 and cid not in query.relevant:
            continue
        center = world.center_of(key)
        positions.append(center[:2])
        centers.append(center)
        colors.append(cid)
    if not positions:
        raise GraphError("no traversable blocks: compressed tree has no "
                         "free-space or relevant-class leaves")
    positions = np.array(positions)
    centers = np.array(centers)
    step = world.edge_length / (1 << (world.max_depth + 1))
    edges = _knn_edges(positions, centers, k_neighbors,
                       lambda p: class_at(ctree, p), step, query)
    return ColoredGraph(positions, np.array(colors, dtype=int), edges)


def halton(index: int, base: int) -> float:
    """Radical-inverse sequence value for a 1-based index."""
    f, r = 1.0, 0.0
    while index > 0:
        f /= base
        r += f * (index % base)
        index //= base
    return r


def halton_points(n: int, bases: tuple[int, int] = (2, 3)) -> np.ndarray:
    """First n points of the 2-d Halton sequence in the unit square."""
    return np.array([[halton(i, bases[0]), halton(i, bases[1])]
                     for i in range(1, n + 1)])


def halton_graph(world: WorldConfig, tree: SemanticOctree, n_vertices: int,
                 k_neighbors: int, query: PlanQuery,
                 z: float | None = None) -> ColoredGraph:
    """Semantics-agnostic baseline graph from low-discrepancy samples.

    Vertices sit at the first ``n_vertices`` Halton points (bases 2 and 3)
    scaled to the world footprint, at ground height unless ``z`` is given.
    Vertex and edge colors are read from the finest stored octree node at
    each location; unobserved locations color as UNKNOWN_CLASS.
    """
    if n_vertices < 2:
        raise ConfigError("need at least 2 vertices")
    if z is None:
        z = world.origin[2] + world.leaf_size / 2.0
    pts = halton_points(n_vertices)
    positions = np.array(world.origin[:2]) + pts * world.edge_length
    centers = np.column_stack([positions, np.full(n_vertices, z)])
    colors = np.array([octree_class_at(tree, c) for c in centers], dtype=int)
    step = world.edge_length / (1 << (world.max_depth + 1))
    edges = _knn_edges(positions, centers, k_neighbors,
                       lambda p: octree_class_at(tree, p), step, query)
    return ColoredGraph(positions, colors, edges)


# -- search -------------------------------------------------------------------------


def class_ordered_astar(graph: ColoredGraph,
                        query: PlanQuery) -> PlanResult | None:
    """Lexicographic shortest path: fewest undesired edges, then length.

    Edges colored with an undesired class or UNKNOWN_CLASS count against the
    first component. The heuristic is (0, straight-line distance to goal),
    admissible whenever edge lengths dominate vertex distances; nodes are
    re-expanded on improvement so admissibility alone suffices. Returns None
    when the goal is unreachable; a trivial start == goal query yields a
    single-vertex path with zero cost.
    """
    n = graph.num_vertices
    if not (0 <= query.start < n and 0 <= query.goal < n):
        raise GraphError("start/goal outside the vertex range")
    if query.start == query.goal:
        return PlanResult([query.start], 0, 0.0)
    bad = set(query.undesired) | {UNKNOWN_CLASS}
    goal_pos = graph.positions[query.goal]

    def h(u: int) -> float:
        return float(np.linalg.norm(graph.positions[u] - goal_pos))

    best: dict[int, tuple[int, float]] = {query.start: (0, 0.0)}
    parent: dict[int, int] = {}
    counter = 0
    heap = [((0, h(query.start)), counter, query.start)]
    while heap:
        (f_bad, f_len), _, u = heapq.heappop(heap)
        g_bad, g_len = best[u]
        if (f_bad, f_len) != (g_bad, g_len + h(u)):
            continue
        if u == query.goal:
            path = [u]
            while path[-1] != query.start:
                path.append(parent[path[-1]])
            path.reverse()
            return PlanResult(path, g_bad, g_len)
        for v, length, color in graph.neighbors(u):
            cand = (g_bad + (1 if color in bad else 0), g_len + length)
            if v not in best or cand < best[v]:
                best[v] = cand
                parent[v] = u
                counter += 1
                heapq.heappush(heap, ((cand[0], cand[1] + h(v)), counter, v))
    return None
