import math

import numpy as np
import pytest

from vawtsim import fastsum
from vawtsim.fastsum import (
    MAX_DEPTH,
    VortexTree,
    build,
    build_arrays,
    eval_many,
    eval_traversal,
    kernel_velocity,
)
from vawtsim.vortex2d import VortexEnsemble


def oracle_velocity(positions, gammas, cores, point):
    """Scalar-loop direct sum, written independently of the production kernel."""
    ux = uy = 0.0
    for (x, y), g, c in zip(positions, gammas, cores):
        rx = point[0] - x
        ry = point[1] - y
        r2 = rx * rx + ry * ry
        if r2 == 0.0:
            continue
        f = g / (2.0 * math.pi) * (1.0 - math.exp(-r2 / (c * c))) / r2
        ux += f * -ry
        uy += f * rx
    return np.array([ux, uy])


def random_cloud(n, seed, core=1e-3, spread=10.0, signed=True):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-spread, spread, size=(n, 2))
    if signed:
        gam = rng.uniform(-1.0, 1.0, size=n)
    else:
        gam = rng.uniform(0.2, 1.0, size=n)
    cores = np.full(n, core)
    return pos, gam, cores


def test_kernel_matches_loop_oracle():
    pos, gam, cores = random_cloud(50, seed=1)
    rng = np.random.default_rng(2)
    points = rng.uniform(-12.0, 12.0, size=(20, 2))
    got = kernel_velocity(pos, gam, cores, points)
    for k, p in enumerate(points):
        want = oracle_velocity(pos, gam, cores, p)
        assert np.linalg.norm(got[k] - want) <= 1e-12 * max(np.linalg.norm(want), 1e-30)


def test_kernel_zero_distance_contributes_nothing():
    pos = np.array([[0.0, 0.0], [1.0, 0.0]])
    gam = np.array([2.0 * np.pi, 2.0 * np.pi])
    cores = np.array([1e-6, 1e-6])
    u = kernel_velocity(pos, gam, cores, np.array([[0.0, 0.0]]))[0]
    # only the vortex at (1, 0) contributes
    assert u == pytest.approx([0.0, -1.0], abs=1e-9)


def test_build_single_vortex():
    tree = build_arrays(np.array([[1.0, 2.0]]), np.array([3.5]), np.array([0.1]))
    assert tree.root.is_leaf
    assert tree.root.total_gamma == 3.5
    assert len(tree) == 1
    assert np.allclose(tree.root.centroid, [1.0, 2.0])


def test_build_empty():
    tree = build_arrays(np.empty((0, 2)), np.empty(0), np.empty(0),
                        free_stream=(2.0, 1.0))
    assert tree.root is None
    assert np.allclose(eval_many(tree, np.array([[0.0, 0.0]]), 0.5),
                       [[2.0, 1.0]])


def test_build_rejects_bad_leaf_capacity():
    with pytest.raises(ValueError):
        build_arrays(np.zeros((1, 2)), np.ones(1), np.ones(1), leaf_capacity=0)


def test_identical_positions_hit_depth_cap():
    n = 40
    pos = np.tile([[0.3, -0.7]], (n, 1))
    gam = np.linspace(-1.0, 1.0, n)
    tree = build_arrays(pos, gam, np.full(n, 0.01), leaf_capacity=4)
    depth = 0
    node = tree.root
    while not node.is_leaf:
        node = next(c for c in node.children if c is not None)
        depth += 1
    assert depth == MAX_DEPTH
    assert node.indices.size == n


def test_build_from_ensemble():
    ens = VortexEnsemble(free_stream=(1.0, 0.0))
    ens.append((0.0, 0.0), 1.0, 0.05)
    ens.append((2.0, 1.0), -0.5, 0.05)
    tree = build(ens, leaf_capacity=8)
    assert len(tree) == 2
    assert tree.root.total_gamma == pytest.approx(0.5)
    assert np.allclose(tree.free_stream, [1.0, 0.0])


def node_members(tree, node):
    """All vortex indices under a node, ascending."""
    if node.is_leaf:
        return np.sort(node.indices)
    out = []
    for c in node.children:
        if c is not None:
            out.append(node_members(tree, c))
    return np.sort(np.concatenate(out))


def test_structure_random_1000():
    pos, gam, cores = random_cloud(1000, seed=3)
    tree = build_arrays(pos, gam, cores, leaf_capacity=12)
    # every vortex in exactly one leaf
    assert np.array_equal(np.sort(tree.perm), np.arange(1000))
    for node in tree.nodes():
        members = node_members(tree, node)
        # per-node circulation matches direct recomputation over its members
        assert node.total_gamma == np.sum(gam[members])
        # bounds contain all members (half-open split boundaries included)
        assert np.all(np.abs(pos[members] - node.center) <= node.half_size + 1e-12)
        if not node.is_leaf:
            child_sum = math.fsum(c.total_gamma for c in node.children
                                  if c is not None)
            assert node.total_gamma == pytest.approx(child_sum, abs=1e-12)


def test_build_deterministic():
    pos, gam, cores = random_cloud(500, seed=4)
    t1 = build_arrays(pos, gam, cores)
    t2 = build_arrays(pos, gam, cores)
    assert np.array_equal(t1.node_gamma, t2.node_gamma)
    assert np.array_equal(t1.node_centroid, t2.node_centroid)
    assert np.array_equal(t1.perm, t2.perm)


def test_theta_zero_is_exact_mode():
    pos, gam, cores = random_cloud(300, seed=5)
    tree = build_arrays(pos, gam, cores, free_stream=(3.0, -1.0))
    rng = np.random.default_rng(6)
    targets = rng.uniform(-11.0, 11.0, size=(40, 2))
    direct = kernel_velocity(pos, gam, cores, targets) + np.array([3.0, -1.0])
    assert np.array_equal(eval_many(tree, targets, 0.0), direct)


def test_traversal_theta_zero_matches_direct():
    # theta = 0 never accepts a node, so the traversal reduces to leaf sums;
    # only the accumulation order differs from the flat direct sum
    pos, gam, cores = random_cloud(800, seed=7)
    tree = build_arrays(pos, gam, cores)
    rng = np.random.default_rng(8)
    targets = rng.uniform(-11.0, 11.0, size=(50, 2))
    direct = kernel_velocity(pos, gam, cores, targets)
    got = eval_traversal(tree, targets, 0.0)
    scale = np.linalg.norm(direct, axis=1).max()
    assert np.abs(got - direct).max() <= 5e-13 * scale


def relative_errors(pos, gam, cores, theta, targets):
    tree = build_arrays(pos, gam, cores)
    direct = kernel_velocity(pos, gam, cores, targets)
    approx = eval_traversal(tree, targets, theta)
    err = np.linalg.norm(approx - direct, axis=1)
    mag = np.linalg.norm(direct, axis=1)
    return err / np.maximum(mag, 1e-300)


def test_error_statistics_theta_half():
    pos, gam, cores = random_cloud(2000, seed=9, signed=False)
    rel = relative_errors(pos, gam, cores, 0.5, pos)
    assert np.sqrt(np.mean(rel ** 2)) <= 1e-3
    assert rel.max() <= 1e-2


def test_error_monotone_in_theta():
    pos, gam, cores = random_cloud(1500, seed=10, signed=False)
    rng = np.random.default_rng(11)
    targets = rng.uniform(-10.0, 10.0, size=(300, 2))
    rms = {}
    for theta in (0.3, 0.7):
        rel = relative_errors(pos, gam, cores, theta, targets)
        rms[theta] = np.sqrt(np.mean(rel ** 2))
    assert rms[0.3] <= rms[0.7]


def test_permutation_insensitive():
    pos, gam, cores = random_cloud(600, seed=12)
    rng = np.random.default_rng(13)
    perm = rng.permutation(600)
    targets = rng.uniform(-10.0, 10.0, size=(60, 2))
    a = eval_many(build_arrays(pos, gam, cores), targets, 0.5)
    b = eval_many(build_arrays(pos[perm], gam[perm], cores[perm]), targets, 0.5)
    scale = np.linalg.norm(a, axis=1).max()
    assert np.abs(a - b).max() <= 1e-12 * scale


def test_far_field_monopole_consistency():
    # a target 100 node sizes away sees the node as a single vortex
    pos, gam, cores = random_cloud(64, seed=14, spread=0.5)
    gam = np.abs(gam) + 0.1  # same-signed so the node is not force-opened
    tree = build_arrays(pos, gam, cores)
    node = tree.root
    target = node.centroid + np.array([100.0 * node.size, 0.0])
    exact = kernel_velocity(pos, gam, cores, target.reshape(1, 2))[0]
    mono = kernel_velocity(node.centroid.reshape(1, 2),
                           np.array([node.total_gamma]),
                           np.array([node.core_radius]),
                           target.reshape(1, 2))[0]
    assert np.linalg.norm(mono - exact) <= 1e-4 * np.linalg.norm(exact)


def test_forced_open_on_exact_cancellation():
    # co-located +G/-G pairs: every node's net circulation is exactly zero,
    # so the whole tree is forced open and evaluation reduces to leaf sums
    rng = np.random.default_rng(15)
    half = rng.uniform(-5.0, 5.0, size=(500, 2))
    pos = np.vstack([half, half])
    gam = np.concatenate([np.ones(500), -np.ones(500)])
    cores = np.full(1000, 1e-3)
    tree = build_arrays(pos, gam, cores)
    assert tree.node_forced_open.all()
    targets = rng.uniform(-6.0, 6.0, size=(100, 2))
    direct = kernel_velocity(pos, gam, cores, targets)
    got = eval_traversal(tree, targets, 0.5)
    assert np.abs(direct).max() <= 1e-12   # the true field cancels
    assert np.abs(got - direct).max() <= 1e-12


def test_eval_single_point():
    pos, gam, cores = random_cloud(100, seed=16)
    tree = build_arrays(pos, gam, cores, free_stream=(1.0, 2.0))
    p = np.array([0.5, 0.5])
    assert np.allclose(fastsum.eval(tree, p, 0.5),
                       eval_many(tree, p.reshape(1, 2), 0.5)[0])
    with pytest.raises(ValueError):
        fastsum.eval(tree, p, -0.1)
