"""Shared fixtures and independent reference implementations for the tests.

The reference code here deliberately re-derives quantities from first
principles (plain math.log2 loops, explicit joint tables, exhaustive path
enumeration) so that library results are checked against an independent
route, not against themselves.
"""

import math

import numpy as np

from soct.compression import CompressionWeights
from soct.octree import INTERIOR, SemanticOctree, WorldConfig, child_keys
from soct.semantics import (
    FullSemanticDistribution,
    expand_truncated,
    truncate_full,
)


def random_full(rng, num_classes, concentration=0.5):
    return FullSemanticDistribution(
        rng.dirichlet(np.full(num_classes + 1, concentration)))


def random_truncated(rng, num_classes, concentration=0.5):
    return truncate_full(random_full(rng, num_classes, concentration))


def make_random_tree(rng, branching=4, depth=2, num_classes=4, fill=0.85,
                     weight_range=(0.2, 3.0), concentration=0.5):
    """Random partially observed tree with random leaf weights and records."""
    world = WorldConfig((0.0, 0.0, 0.0), 16.0, depth, branching)
    tree = SemanticOctree(world, num_classes)
    dims = world.dims
    n = 1 << depth
    cells = [tuple((i >> (d * depth)) & (n - 1) for d in range(dims))
             for i in range(n ** dims)]
    placed = 0
    for cell in cells:
        if rng.random() < fill:
            tree.set_leaf(cell, random_truncated(rng, num_classes, concentration),
                          float(rng.uniform(*weight_range)))
            placed += 1
    if placed == 0:
        tree.set_leaf(cells[0], random_truncated(rng, num_classes, concentration),
                      float(rng.uniform(*weight_range)))
    return tree


def random_weights(rng, num_classes=4, alpha_range=(0.0, 0.2),
                   retain_range=(0.5, 3.0), remove_range=(0.0, 0.8)):
    ids = list(range(1, num_classes + 1))
    rng.shuffle(ids)
    retain = {ids[0]: float(rng.uniform(*retain_range))}
    remove = {ids[1]: float(rng.uniform(*remove_range))}
    return CompressionWeights(retain, remove, float(rng.uniform(*alpha_range)))


# -- independent information-theory references ---------------------------------


def ref_entropy(probs):
    return sum(-p * math.log2(p) for p in probs if p > 0)


def ref_bernoulli_kl(a, b):
    total = 0.0
    if a > 0:
        total += a * math.log2(a / b)
    if a < 1:
        total += (1 - a) * math.log2((1 - a) / (1 - b))
    return total


def ref_bernoulli_js(marginals, weights):
    total = sum(weights)
    pi = [w / total for w in weights]
    pbar = sum(p * m for p, m in zip(pi, marginals))
    if pbar <= 0 or pbar >= 1:
        return 0.0
    return sum(p * ref_bernoulli_kl(m, pbar)
               for p, m in zip(pi, marginals) if p > 0)


def ref_mutual_information(leaf_weights, leaf_marginals):
    """I(class; leaf) from the explicit joint table p(leaf, class)."""
    total = sum(leaf_weights)
    q = [w / total for w in leaf_weights]
    mbar = sum(qi * mi for qi, mi in zip(q, leaf_marginals))
    value = 0.0
    for qi, mi in zip(q, leaf_marginals):
        if qi == 0:
            continue
        if mi > 0 and mbar > 0:
            value += qi * mi * math.log2(mi / mbar)
        if mi < 1 and mbar < 1:
            value += qi * (1 - mi) * math.log2((1 - mi) / (1 - mbar))
    return value


# -- independent gain reference ---------------------------------------------------


def _ref_children(tree, key):
    """(weight, dense marginal vector, child key) for the completed child set."""
    dims = tree.world.dims
    stored = [(k, tree.nodes[k]) for k in child_keys(key, dims)
              if k in tree.nodes]
    mean_w = sum(n.weight for _, n in stored) / len(stored)
    uniform = [1.0 / (tree.num_classes + 1)] * (tree.num_classes + 1)
    entries = []
    for k in child_keys(key, dims):
        node = tree.nodes.get(k)
        if node is None:
            entries.append((mean_w, uniform, None))
        else:
            entries.append((node.weight, ref_conditional(tree, k), k))
    return entries


def ref_conditional(tree, key):
    node = tree.nodes[key]
    if node.kind != INTERIOR:
        return list(expand_truncated(node.dist, tree.registry).probs)
    entries = _ref_children(tree, key)
    total = sum(w for w, _, _ in entries)
    out = [0.0] * (tree.num_classes + 1)
    for w, dist, _ in entries:
        for i, v in enumerate(dist):
            out[i] += (w / total) * v
    return out


def ref_relative_gain(tree, key, cw):
    """Recursive relative gain computed with plain-python loops."""
    node = tree.nodes[key]
    if node.kind != INTERIOR or node.weight <= 0:
        return 0.0
    entries = _ref_children(tree, key)
    total = sum(w for w, _, _ in entries)
    if total <= 0:
        return 0.0
    pi = [w / total for w, _, _ in entries]
    value = -cw.compress * ref_entropy(pi)
    for cid, w in cw.retain.items():
        value += w * ref_bernoulli_js([d[cid] for _, d, _ in entries], pi)
    for cid, w in cw.remove.items():
        value -= w * ref_bernoulli_js([d[cid] for _, d, _ in entries], pi)
    for p, (_, _, k) in zip(pi, entries):
        if k is not None and tree.nodes[k].kind == INTERIOR:
            value += p * ref_relative_gain(tree, k, cw)
    return max(value, 0.0)


# -- independent planning references ------------------------------------------------


def ref_all_paths_best(graph, query):
    """Lexicographic optimum over all simple paths, by exhaustive DFS."""
    bad = set(query.undesired) | {-1}
    best = [None]

    def dfs(u, visited, n_bad, length):
        if u == query.goal:
            cost = (n_bad, length)
            if best[0] is None or cost < best[0]:
                best[0] = cost
            return
        for v, elen, color in graph.neighbors(u):
            if v in visited:
                continue
            visited.add(v)
            dfs(v, visited, n_bad + (1 if color in bad else 0), length + elen)
            visited.remove(v)

    dfs(query.start, {query.start}, 0, 0.0)
    return best[0]


def ref_dijkstra_length(graph, start, goal):
    """Plain shortest-path length ignoring colors; None if unreachable."""
    import heapq

    dist = {start: 0.0}
    heap = [(0.0, start)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, math.inf):
            continue
        if u == goal:
            return d
        for v, length, _ in graph.neighbors(u):
            nd = d + length
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return None


def zero_bad_path_exists(graph, query):
    """Reachability through edges free of undesired/unknown colors."""
    bad = set(query.undesired) | {-1}
    seen = {query.start}
    stack = [query.start]
    while stack:
        u = stack.pop()
        if u == query.goal:
            return True
        for v, _, color in graph.neighbors(u):
            if color not in bad and v not in seen:
                seen.add(v)
                stack.append(v)
    return False


# -- synthetic demo world --------------------------------------------------------


FREE, ROAD, GRASS, TREES, BUILDING = 0, 1, 2, 3, 4
DEMO_CLASSES = 4


def demo_true_class(ix, iy):
    """Ground-truth terrain class of a 64x64 demo map column."""
    if 30 <= ix < 34 or 30 <= iy < 34:
        return ROAD
    if 4 <= ix < 14 and 4 <= iy < 14:
        return BUILDING
    if 48 <= ix < 60 and 44 <= iy < 58:
        return TREES
    if 8 <= ix < 20 and 44 <= iy < 56:
        return FREE
    return GRASS


def demo_building_height(ix, iy):
    return 6 if demo_true_class(ix, iy) == BUILDING else 0


def make_demo_cloud(rng, noise=0.12):
    """Labeled point records for the 64x64x8-cell synthetic world.

    Every cell of the content volume is observed: terrain classes on the
    ground layer, solid building cells above building footprints, and
    observed free space elsewhere up to z = 8. Labels are corrupted with
    classifier noise. Returns (x, y, z, class_id, confidence) tuples,
    roughly 50k of them.
    """
    records = []
    for ix in range(64):
        for iy in range(64):
            true = demo_true_class(ix, iy)
            height = demo_building_height(ix, iy)
            for iz in range(8):
                if iz == 0:
                    cls, nobs, p_noise = true, 5, noise
                elif iz < height:
                    cls, nobs, p_noise = BUILDING, 3, noise
                else:
                    cls, nobs, p_noise = FREE, 1, noise / 2
                for _ in range(nobs):
                    label = cls
                    if rng.random() < p_noise:
                        label = int(rng.integers(0, DEMO_CLASSES + 1))
                    records.append((
                        ix + float(rng.uniform(0.05, 0.95)),
                        iy + float(rng.uniform(0.05, 0.95)),
                        iz + float(rng.uniform(0.05, 0.95)),
                        label,
                        float(rng.uniform(0.6, 0.95))))
    return records


def write_cloud(path, records):
    lines = ["x,y,z,class_id,confidence"]
    for x, y, z, cid, conf in records:
        lines.append(f"{x:.9g},{y:.9g},{z:.9g},{cid},{conf:.9g}")
    path.write_text("\n".join(lines) + "\n")


DEMO_WORLD = "origin 0 0 0\nedge_length 64\nmax_depth 6\nbranching 8\nnum_classes 4\n"

DEMO_WEIGHTS = (
    "num_classes 4\n"
    "alpha 0.01\n"
    "class 1 relevant 4 road\n"
    "class 2 irrelevant 0.5 grass\n"
    "class 3 irrelevant 0.5 trees\n"
    "class 4 neutral building\n"
)
