"""Barnes-Hut quadtree for fast Biot-Savart summation over point vortices.

A node far from the target (node_size / distance < theta_open) contributes
through a short Laurent expansion of the complex velocity about the node's
|Gamma|-weighted centroid:

    u - i v = -i/(2 pi) * (a0/Z + a1/Z^2 + a2/Z^3 + a3/Z^4),  Z = z - centroid

where a0 is the node's total circulation and a1..a3 are its higher
circulation moments. Wake circulation sums to nearly zero, which makes plain
Gamma-weighted centroids ill conditioned, so centroids use |Gamma| weights
and nodes whose net circulation is negligible relative to the ensemble are
always opened. theta_open = 0 reproduces the direct sum.

The same Lamb-Oseen core factor as the direct kernel regularizes both leaf
sums and expansion terms; a source evaluated at zero distance contributes
nothing.
"""

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi
MAX_DEPTH = 32
# nodes with |sum Gamma| below this fraction of the ensemble's sum |Gamma|
# are always opened instead of approximated
ZERO_GAMMA_FRACTION = 1e-12
# beyond this many squared core radii the core factor is 1 to double precision
_FAR_CORE = 42.0


def kernel_velocity(src_pos, src_gamma, src_core, targets):
    """Direct regularized Biot-Savart sum: (M, 2) velocities at ``targets``.

    u(x) = sum_i Gamma_i/(2 pi) * (-r_y, r_x)/|r|^2 * (1 - exp(-|r|^2/core_i^2)),
    r = x - x_i. A source at zero distance contributes zero. Targets are
    processed in chunks to bound memory.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.zeros((targets.shape[0], 2))
    n = len(src_gamma)
    if n == 0:
        return out
    chunk = max(1, int(4_000_000 // max(n, 1)))
    scale = np.asarray(src_gamma, dtype=float) / TWO_PI
    inv_core2 = 1.0 / np.square(np.asarray(src_core, dtype=float))
    for start in range(0, targets.shape[0], chunk):
        pts = targets[start:start + chunk]
        rx = pts[:, 0, None] - src_pos[None, :, 0]
        ry = pts[:, 1, None] - src_pos[None, :, 1]
        r2 = rx * rx + ry * ry
        with np.errstate(divide="ignore"):
            factor = np.where(r2 > 0.0, 1.0 / r2, 0.0)
        r2s = r2 * inv_core2
        near = r2s < _FAR_CORE
        if near.any():
            factor[near] *= -np.expm1(-r2s[near])
        factor *= scale
        out[start:start + chunk, 0] = np.einsum("mn,mn->m", factor, -ry)
        out[start:start + chunk, 1] = np.einsum("mn,mn->m", factor, rx)
    return out


@dataclass
class TreeNode:
    """One quadtree node: square bounds plus aggregate circulation data."""

    center: np.ndarray
    half_size: float
    total_gamma: float
    abs_gamma: float
    centroid: np.ndarray
    core_radius: float
    moments: np.ndarray = None  # complex (a1, a2, a3) about the centroid
    indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))
    children: list = None  # 4 entries (TreeNode or None), or None for a leaf

    @property
    def is_leaf(self):
        return self.children is None

    @property
    def size(self):
        return 2.0 * self.half_size


@dataclass
class VortexTree:
    """Immutable quadtree over a snapshot of vortex positions and strengths."""

    root: TreeNode
    positions: np.ndarray
    gammas: np.ndarray
    cores: np.ndarray
    free_stream: np.ndarray
    leaf_capacity: int
    sum_abs_gamma: float
    # flattened arrays for vectorized evaluation (parallel to node ids)
    node_centroid: np.ndarray = None
    node_gamma: np.ndarray = None
    node_moments: np.ndarray = None
    node_size: np.ndarray = None
    node_core: np.ndarray = None
    node_forced_open: np.ndarray = None
    node_is_leaf: np.ndarray = None
    node_children: np.ndarray = None
    node_leaf_start: np.ndarray = None
    node_leaf_count: np.ndarray = None
    perm: np.ndarray = None

    def __len__(self):
        return len(self.gammas)

    def nodes(self):
        """All nodes in depth-first preorder."""
        out = []
        stack = [self.root] if self.root is not None else []
        while stack:
            node = stack.pop()
            out.append(node)
            if not node.is_leaf:
                stack.extend(c for c in reversed(node.children) if c is not None)
        return out


def _make_node(positions, gammas, cores, idx, center, half_size, depth, leaf_capacity):
    g = gammas[idx]
    absg = np.abs(g)
    total_abs = float(np.sum(absg))
    if total_abs > 0.0:
        centroid = (absg @ positions[idx]) / total_abs
        core = float(absg @ cores[idx]) / total_abs
    else:
        centroid = positions[idx].mean(axis=0)
        core = float(cores[idx].mean())
    dz = (positions[idx, 0] - centroid[0]) + 1j * (positions[idx, 1] - centroid[1])
    gdz = g * dz
    moments = np.array([np.sum(gdz), np.sum(gdz * dz), np.sum(gdz * dz * dz)])
    node = TreeNode(center=np.asarray(center, dtype=float), half_size=half_size,
                    total_gamma=float(np.sum(g)), abs_gamma=total_abs,
                    centroid=centroid, core_radius=core, moments=moments)
    if len(idx) <= leaf_capacity or depth >= MAX_DEPTH:
        node.indices = idx
        return node
    node.children = [None, None, None, None]
    east = positions[idx, 0] >= center[0]
    north = positions[idx, 1] >= center[1]
    quad = east.astype(np.intp) + 2 * north.astype(np.intp)
    h = 0.5 * half_size
    offsets = ((-h, -h), (h, -h), (-h, h), (h, h))
    for q in range(4):
        sub = idx[quad == q]
        if sub.size:
            child_center = (center[0] + offsets[q][0], center[1] + offsets[q][1])
            node.children[q] = _make_node(positions, gammas, cores, sub,
                                          child_center, h, depth + 1, leaf_capacity)
    return node


def _flatten(tree):
    nodes = tree.nodes()
    k = len(nodes)
    ids = {id(n): i for i, n in enumerate(nodes)}
    tree.node_centroid = np.array([n.centroid for n in nodes]).reshape(k, 2)
    tree.node_gamma = np.array([n.total_gamma for n in nodes])
    tree.node_moments = np.array([n.moments for n in nodes]).reshape(k, 3)
    tree.node_size = np.array([n.size for n in nodes])
    tree.node_core = np.array([n.core_radius for n in nodes])
    tree.node_forced_open = (np.abs(tree.node_gamma)
                             < ZERO_GAMMA_FRACTION * tree.sum_abs_gamma)
    tree.node_is_leaf = np.array([n.is_leaf for n in nodes])
    children = np.full((k, 4), -1, dtype=np.intp)
    starts = np.zeros(k, dtype=np.intp)
    counts = np.zeros(k, dtype=np.intp)
    perm = []
    for i, n in enumerate(nodes):
        if n.is_leaf:
            starts[i] = len(perm)
            counts[i] = n.indices.size
            perm.extend(n.indices.tolist())
        else:
            for q, c in enumerate(n.children):
                if c is not None:
                    children[i, q] = ids[id(c)]
    tree.node_children = children
    tree.node_leaf_start = starts
    tree.node_leaf_count = counts
    tree.perm = np.array(perm, dtype=np.intp)


def build_arrays(positions, gammas, cores, free_stream=(0.0, 0.0), leaf_capacity=16):
    """Build a quadtree from raw source arrays."""
    if leaf_capacity < 1:
        raise ValueError("leaf_capacity must be >= 1")
    positions = np.ascontiguousarray(positions, dtype=float).reshape(-1, 2)
    gammas = np.ascontiguousarray(gammas, dtype=float)
    cores = np.ascontiguousarray(cores, dtype=float)
    free_stream = np.asarray(free_stream, dtype=float)
    n = len(gammas)
    if n == 0:
        tree = VortexTree(root=None, positions=positions, gammas=gammas,
                          cores=cores, free_stream=free_stream,
                          leaf_capacity=leaf_capacity, sum_abs_gamma=0.0)
        tree.perm = np.empty(0, dtype=np.intp)
        return tree
    lo = positions.min(axis=0)
    hi = positions.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * float(max(hi[0] - lo[0], hi[1] - lo[1]))
    root = _make_node(positions, gammas, cores, np.arange(n, dtype=np.intp),
                      center, half, 0, leaf_capacity)
    tree = VortexTree(root=root, positions=positions, gammas=gammas, cores=cores,
                      free_stream=free_stream, leaf_capacity=leaf_capacity,
                      sum_abs_gamma=float(np.sum(np.abs(gammas))))
    _flatten(tree)
    return tree


def build(ensemble, leaf_capacity=16):
    """Build a quadtree from a vortex ensemble snapshot."""
    return build_arrays(ensemble.positions.copy(), ensemble.gammas.copy(),
                        ensemble.core_radii.copy(), ensemble.free_stream,
                        leaf_capacity)


def _expansion(tree, nid, tidx, dx, dy, d2, out):
    a1, a2, a3 = tree.node_moments[nid]
    inv_z = np.conj(dx + 1j * dy) / d2
    w = (((a3 * inv_z + a2) * inv_z + a1) * inv_z + tree.node_gamma[nid]) * inv_z
    factor = np.ones(tidx.size)
    r2s = d2 / tree.node_core[nid] ** 2
    near = r2s < _FAR_CORE
    if near.any():
        factor[near] = -np.expm1(-r2s[near])
    factor /= TWO_PI
    out[tidx, 0] += factor * w.imag
    out[tidx, 1] += factor * w.real


def _leaf_direct(tree, nid, tidx, targets, out):
    start = tree.node_leaf_start[nid]
    members = tree.perm[start:start + tree.node_leaf_count[nid]]
    out[tidx] += kernel_velocity(tree.positions[members], tree.gammas[members],
                                 tree.cores[members], targets[tidx])


def eval_traversal(tree, targets, theta_open):
    """Tree traversal evaluation (no exact-mode shortcut); excludes free stream."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.zeros((targets.shape[0], 2))
    if tree.root is None:
        return out
    theta2 = theta_open * theta_open
    stack = [(0, np.arange(targets.shape[0], dtype=np.intp))]
    while stack:
        nid, tidx = stack.pop()
        dx = targets[tidx, 0] - tree.node_centroid[nid, 0]
        dy = targets[tidx, 1] - tree.node_centroid[nid, 1]
        d2 = dx * dx + dy * dy
        if tree.node_forced_open[nid]:
            accept = np.zeros(tidx.size, dtype=bool)
        else:
            accept = tree.node_size[nid] ** 2 < theta2 * d2
        if accept.any():
            sel = accept.nonzero()[0]
            _expansion(tree, nid, tidx[sel], dx[sel], dy[sel], d2[sel], out)
        rest = tidx[~accept]
        if rest.size == 0:
            continue
        if tree.node_is_leaf[nid]:
            _leaf_direct(tree, nid, rest, targets, out)
        else:
            for c in tree.node_children[nid]:
                if c != -1:
                    stack.append((c, rest))
    return out


def eval_many(tree, targets, theta_open):
    """Induced velocity at many targets, free stream included.

    theta_open = 0 is exact mode: it routes to the direct sum so the result
    matches ``kernel_velocity`` bit for bit.
    """
    if theta_open < 0.0:
        raise ValueError("theta_open must be >= 0")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if theta_open == 0.0:
        induced = kernel_velocity(tree.positions, tree.gammas, tree.cores, targets)
    else:
        induced = eval_traversal(tree, targets, theta_open)
    return induced + tree.free_stream


def eval(tree, point, theta_open):
    """Induced velocity at a single point, free stream included."""
    return eval_many(tree, np.asarray(point, dtype=float).reshape(1, 2),
                     theta_open)[0]
