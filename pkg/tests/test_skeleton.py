import numpy as np
import pytest

from beastforge import fixtures
from beastforge.errors import DegenerateGeometry, EmptySkeleton
from beastforge.skeleton import (CleanSkeleton, OrientationFrame, Skeleton,
                                 classify_regions, clean_skeleton,
                                 estimate_orientation, find_trunk_junction,
                                 select_begin_node)


def skeleton_of(joints, bones, root=0):
    return Skeleton(joints=np.asarray(joints, dtype=np.float64),
                    bones=np.asarray(bones, dtype=np.int64), root=root)


def random_tree(rng, n):
    """Random tree over n joints: each joint attaches to a random earlier one."""
    joints = rng.uniform(-0.5, 0.5, size=(n, 3))
    bones = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    return skeleton_of(joints, bones, root=int(rng.integers(0, n)))


# -----------------------------------------------------------------------------
# Skeleton invariants
# -----------------------------------------------------------------------------

def test_skeleton_rejects_self_loop():
    with pytest.raises(ValueError):
        skeleton_of([[0, 0, 0], [1, 0, 0]], [[0, 0]])


def test_skeleton_rejects_duplicate_bone():
    with pytest.raises(ValueError):
        skeleton_of([[0, 0, 0], [1, 0, 0]], [[0, 1], [1, 0]])


def test_skeleton_rejects_bad_root():
    with pytest.raises(ValueError):
        skeleton_of([[0, 0, 0], [1, 0, 0]], [[0, 1]], root=5)


def test_skeleton_rejects_nonfinite():
    with pytest.raises(ValueError):
        skeleton_of([[0, 0, 0], [np.inf, 0, 0]], [[0, 1]])


# -----------------------------------------------------------------------------
# cleaning
# -----------------------------------------------------------------------------

def test_clean_already_clean_is_identity():
    # Y-shaped tree, no collinear joints, no short branches
    s = skeleton_of([[0, 0, 0], [0.3, 0.2, 0], [0.3, -0.2, 0], [-0.3, 0.05, 0]],
                    [[0, 1], [0, 2], [0, 3]])
    clean = clean_skeleton(s)
    assert clean.skeleton.num_joints == 4
    assert clean.original_joint_map == tuple(frozenset({i}) for i in range(4))
    assert clean.pruned_branches == ()
    assert all(len(p) == 2 for p in clean.bone_paths)


def test_clean_keeps_largest_component():
    joints = [[i * 0.05, (i % 2) * 0.05, 0] for i in range(10)] \
        + [[0.8, 0.8 + 0.1 * i, 0.2 * ((i + 1) % 2)] for i in range(3)]
    bones = [[i, i + 1] for i in range(9)] + [[10, 11], [11, 12]]
    clean = clean_skeleton(skeleton_of(joints, bones, root=0), prune_fraction=0.0)
    retained = frozenset().union(*clean.original_joint_map)
    assert retained <= set(range(10))
    assert frozenset(range(10, 13)) in clean.pruned_branches


def test_clean_collapses_collinear_joint():
    s = skeleton_of([[0, 0, 0], [0.1, 0, 0], [0.2, 0, 0], [0.3, 0.2, 0]],
                    [[0, 1], [1, 2], [2, 3]])
    clean = clean_skeleton(s, prune_fraction=0.0)
    assert clean.skeleton.num_joints == 3
    # joint 1 collapsed; its lineage lives on the merged bone's path
    assert any(len(p) > 2 for p in clean.bone_paths)
    covered = frozenset().union(*clean.original_joint_map)
    assert covered == frozenset(range(4))


def test_clean_prunes_short_stubs():
    quad = fixtures.make_skeleton("quadruped")
    joints = quad.joints.tolist()
    bones = quad.bones.tolist()
    first = len(joints)
    # a pair of 0.02-long antler stubs on the head of a ~1.06-diagonal skeleton
    joints.append((np.asarray(joints[5]) + [0.0, 0.02, 0.008]).tolist())
    joints.append((np.asarray(joints[5]) + [0.0, 0.02, -0.008]).tolist())
    bones.extend([[5, first], [5, first + 1]])
    s = skeleton_of(joints, bones, root=0)
    clean = clean_skeleton(s, prune_fraction=0.05)
    assert frozenset({first}) in clean.pruned_branches
    assert frozenset({first + 1}) in clean.pruned_branches
    assert clean.skeleton.num_joints == quad.num_joints


def test_clean_empty_and_degenerate():
    with pytest.raises(EmptySkeleton):
        clean_skeleton(Skeleton(joints=np.zeros((2, 3)),
                                bones=np.zeros((0, 2), dtype=np.int64), root=0))
    with pytest.raises(DegenerateGeometry):
        clean_skeleton(skeleton_of([[0.1, 0.1, 0.1], [0.1, 0.1, 0.1]], [[0, 1]]))


def test_clean_idempotent_on_random_trees():
    rng = np.random.default_rng(11)
    for _ in range(50):
        s = random_tree(rng, int(rng.integers(4, 25)))
        try:
            first = clean_skeleton(s)
        except (EmptySkeleton, DegenerateGeometry):
            continue
        second = clean_skeleton(first.skeleton)
        assert np.array_equal(first.skeleton.joints, second.skeleton.joints)
        assert np.array_equal(first.skeleton.bones, second.skeleton.bones)
        assert second.original_joint_map == tuple(
            frozenset({i}) for i in range(second.skeleton.num_joints))
        assert second.pruned_branches == ()


def test_clean_covers_original_joints_exactly():
    rng = np.random.default_rng(23)
    for _ in range(50):
        n = int(rng.integers(4, 28))
        s = random_tree(rng, n)
        try:
            clean = clean_skeleton(s)
        except (EmptySkeleton, DegenerateGeometry):
            continue
        covered = set()
        for group in list(clean.original_joint_map) + list(clean.pruned_branches):
            assert not (covered & group)
            covered |= group
        assert covered == set(range(n))


# -----------------------------------------------------------------------------
# orientation
# -----------------------------------------------------------------------------

def test_orientation_axis_aligned_chain():
    s = skeleton_of([[0, 0, 0], [0.2, 0.1, 0], [0.4, 0, 0]], [[0, 1], [1, 2]])
    frame = estimate_orientation(clean_skeleton(s, prune_fraction=0.0))
    assert abs(abs(frame.forward[0]) - 1.0) < 1e-6
    assert frame.up.tolist() == [0.0, 1.0, 0.0]


def test_orientation_quadruped_near_x():
    clean = clean_skeleton(fixtures.make_skeleton("quadruped"))
    frame = estimate_orientation(clean)
    angle = np.degrees(np.arccos(abs(float(frame.forward @ np.array([1.0, 0, 0])))))
    assert angle < 10.0


def test_orientation_degenerate_raises():
    s = skeleton_of([[0, 0, 0], [0, 0.5, 0]], [[0, 1]])
    with pytest.raises(DegenerateGeometry):
        estimate_orientation(clean_skeleton(s, prune_fraction=0.0))


# -----------------------------------------------------------------------------
# begin node / trunk junction vs brute force
# -----------------------------------------------------------------------------

def brute_begin(sk: Skeleton) -> int:
    deg = sk.degrees()
    if deg[sk.root] >= 3:
        return sk.root
    nbrs = sk.adjacency()[sk.root]
    best = max(deg[u] for u in nbrs)
    return min(u for u in nbrs if deg[u] == best)


def brute_trunk(sk: Skeleton, forward, b):
    deg = sk.degrees()
    proj = sk.joints @ forward
    cands = [v for v in range(sk.num_joints) if deg[v] >= 4]
    if not cands:
        cands = [v for v in range(sk.num_joints) if deg[v] >= 3 and v != b]
    if not cands:
        return None
    best = min(proj[v] for v in cands)
    return min(v for v in cands if proj[v] == best)


def test_begin_node_rules():
    # root with degree 3 -> root itself
    s = skeleton_of([[0, 0, 0], [0.2, 0.1, 0], [-0.1, 0.2, 0], [0, -0.2, 0.1]],
                    [[0, 1], [0, 2], [0, 3]])
    assert select_begin_node(clean_skeleton(s, prune_fraction=0.0)) == 0
    # root at a chain end -> its single neighbor
    s = skeleton_of([[0, 0, 0], [0.2, 0.1, 0], [0.4, 0, 0.1]], [[0, 1], [1, 2]])
    assert select_begin_node(clean_skeleton(s, prune_fraction=0.0)) == 1


def test_begin_and_trunk_match_brute_force_1000_trees():
    rng = np.random.default_rng(101)
    checked = 0
    while checked < 1000:
        s = random_tree(rng, int(rng.integers(2, 31)))
        clean = CleanSkeleton(
            skeleton=s,
            original_joint_map=tuple(frozenset({i}) for i in range(s.num_joints)),
            pruned_branches=(),
            bone_paths=tuple((min(int(i), int(j)), max(int(i), int(j)))
                             for i, j in s.bones),
        )
        fwd = rng.normal(size=3)
        fwd[1] = 0.0
        if np.linalg.norm(fwd) < 1e-9:
            continue
        fwd /= np.linalg.norm(fwd)
        frame = OrientationFrame(forward=fwd, up=np.array([0.0, 1.0, 0.0]),
                                 lateral=np.cross([0.0, 1.0, 0.0], fwd))
        b = select_begin_node(clean)
        assert b == brute_begin(s)
        assert find_trunk_junction(clean, frame, b) == brute_trunk(s, fwd, b)
        checked += 1


def test_begin_node_degree_property_trees_ge_4():
    rng = np.random.default_rng(55)
    for _ in range(300):
        s = random_tree(rng, int(rng.integers(4, 31)))
        deg = s.degrees()
        if deg[s.root] >= 3:
            continue
        clean = CleanSkeleton(
            skeleton=s,
            original_joint_map=tuple(frozenset({i}) for i in range(s.num_joints)),
            pruned_branches=(),
            bone_paths=tuple((min(int(i), int(j)), max(int(i), int(j)))
                             for i, j in s.bones),
        )
        assert deg[select_begin_node(clean)] >= deg[s.root]


# -----------------------------------------------------------------------------
# classification
# -----------------------------------------------------------------------------

def truth_bone_sets(name):
    sk = fixtures.make_skeleton(name)
    bones = [(min(int(i), int(j)), max(int(i), int(j))) for i, j in sk.bones]
    out = set()
    for label, joints in fixtures.template_truth(name):
        out.add((label, frozenset(b for b in bones
                                  if b[0] in joints and b[1] in joints)))
    return out


def classify_to_truth(name, seed=0, jitter=0.0):
    sk = fixtures.make_skeleton(name, seed=seed, jitter=jitter)
    clean = clean_skeleton(sk)
    frame = estimate_orientation(clean)
    part, _ = classify_regions(clean, frame)
    return {(r.label, clean.original_bones_of(r.bones)) for r in part.regions}, part


@pytest.mark.parametrize("name,labels", [
    ("quadruped", {"Body": 1, "Leg": 4, "Tail": 1, "Head": 1}),
    ("winged", {"Body": 1, "Leg": 2, "Wing": 2, "Head": 1}),
    ("biped", {"Body": 1, "Leg": 2, "Wing": 2, "Head": 1}),
    ("fish", {"Body": 1}),
])
def test_classify_templates(name, labels):
    got, part = classify_to_truth(name)
    assert got == truth_bone_sets(name)
    counts = {}
    for r in part.regions:
        counts[r.label] = counts.get(r.label, 0) + 1
    assert counts == labels


def test_classify_fish_degenerate_covers_all_bones():
    sk = fixtures.make_skeleton("fish")
    clean = clean_skeleton(sk)
    part, _ = classify_regions(clean, estimate_orientation(clean))
    assert len(part.regions) == 1
    assert part.regions[0].label == "Body"
    assert part.regions[0].bones == frozenset(range(clean.skeleton.bones.shape[0]))
    assert part.trunk_junction is None


def test_classify_rotation_invariance():
    for name in fixtures.TEMPLATE_NAMES:
        base_sets, _ = classify_to_truth(name)
        sk = fixtures.make_skeleton(name)
        for angle in (30.0, 90.0, 147.0, 260.0):
            t = np.radians(angle)
            rot = np.array([[np.cos(t), 0, np.sin(t)],
                            [0, 1, 0],
                            [-np.sin(t), 0, np.cos(t)]])
            turned = Skeleton(joints=sk.joints @ rot.T, bones=sk.bones,
                              root=sk.root, joint_names=sk.joint_names)
            clean = clean_skeleton(turned)
            part, _ = classify_regions(clean, estimate_orientation(clean))
            got = {(r.label, clean.original_bones_of(r.bones)) for r in part.regions}
            assert got == base_sets, f"{name} rotated {angle}"


def test_classify_regions_disjoint_and_connected():
    for name in fixtures.TEMPLATE_NAMES:
        sk = fixtures.make_skeleton(name)
        clean = clean_skeleton(sk)
        part, _ = classify_regions(clean, estimate_orientation(clean))
        seen = set()
        for r in part.regions:
            assert not (seen & r.bones)
            seen |= r.bones
            # connectivity of the bone-induced subgraph
            bones = [tuple(map(int, clean.skeleton.bones[k])) for k in r.bones]
            nodes = {v for b in bones for v in b}
            adj = {v: set() for v in nodes}
            for a, b in bones:
                adj[a].add(b)
                adj[b].add(a)
            stack = [next(iter(nodes))]
            reach = set(stack)
            while stack:
                for u in adj[stack.pop()]:
                    if u not in reach:
                        reach.add(u)
                        stack.append(u)
            assert reach == nodes
