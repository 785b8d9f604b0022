"""The acceptance suite: one test per criterion, each at its stated
tolerance. Pass/fail lines print in the terminal summary."""

import time

import numpy as np
import pytest

from beastforge import fixtures, formats, pipeline
from beastforge.errors import AllZeroWeights, OutOfBounds
from beastforge.planner import (AffineTransform, PartRef, Rotate, Scale,
                                Translate, apply_op, op_to_affine)
from beastforge.regions import (RegionWeightMatrix, SkinningMatrix,
                                aggregate_region_weights, knn_transfer)
from beastforge.skeleton import (CleanSkeleton, OrientationFrame, Region,
                                 SemanticPartition, Skeleton, classify_regions,
                                 clean_skeleton, estimate_orientation,
                                 find_trunk_junction, select_begin_node)
from beastforge.voxels import (CompositionConfig, RegionLatent, compose,
                               merge_overlaps)

from oracle_dense import compose_dense
from test_skeleton import brute_begin, brute_trunk, random_tree
from test_voxels import _compose_case, bits


REF = PartRef("a0", "body", 1)


def _warm_kernels():
    """Burn in JIT compilation so timing measures steady-state runtime."""
    r = RegionLatent(ref="w", resolution=8, positions=[[1, 1, 1], [2, 2, 2]],
                     features=[[1.0], [2.0]], weights=[1.0, 1.0])
    compose([(r, AffineTransform.identity())],
            CompositionConfig(coarse_factor=4, fill_passes=1))
    rng = np.random.default_rng(0)
    knn_transfer(
        RegionWeightMatrix(weights=rng.dirichlet([1, 1], 16),
                           region_order=("a/a/1", "a/b/1")),
        rng.uniform(-0.5, 0.5, (16, 3)), rng.uniform(-0.5, 0.5, (4, 3)), k=4)


# -----------------------------------------------------------------------------
# 1. skeleton classification on jittered templates
# -----------------------------------------------------------------------------

@pytest.mark.criterion(
    "classification: 20 jittered quadrupeds + 20 winged, 100% regions, "
    "fish degenerate, < 1 s")
def test_classification_jittered_templates():
    def truth_bone_sets(name):
        sk = fixtures.make_skeleton(name)
        bones = [(min(int(i), int(j)), max(int(i), int(j))) for i, j in sk.bones]
        return {
            (label, frozenset(b for b in bones if b[0] in joints and b[1] in joints))
            for label, joints in fixtures.template_truth(name)
        }

    cases = [("quadruped", seed) for seed in range(20)] \
        + [("winged", seed) for seed in range(20)]
    skeletons = {(n, s): fixtures.make_skeleton(n, seed=s, jitter=0.05)
                 for n, s in cases}
    fish = [fixtures.make_skeleton("fish", seed=s, jitter=0.05) for s in range(5)]

    start = time.perf_counter()
    results = {}
    for key, sk in skeletons.items():
        clean = clean_skeleton(sk)
        part, _ = classify_regions(clean, estimate_orientation(clean))
        results[key] = {(r.label, clean.original_bones_of(r.bones))
                        for r in part.regions}
    fish_parts = []
    for sk in fish:
        clean = clean_skeleton(sk)
        part, _ = classify_regions(clean, estimate_orientation(clean))
        fish_parts.append((clean, part))
    elapsed = time.perf_counter() - start

    for (name, seed), got in results.items():
        assert got == truth_bone_sets(name), f"{name} seed {seed}"
    fish_bones = frozenset((i, i + 1) for i in range(6))
    for clean, part in fish_parts:
        assert [r.label for r in part.regions] == ["Body"]
        assert clean.original_bones_of(part.regions[0].bones) == fish_bones
    assert elapsed < 1.0, f"classification took {elapsed:.2f} s"


# -----------------------------------------------------------------------------
# 2. Eq. 1 / Eq. 2 brute-force equivalence
# -----------------------------------------------------------------------------

@pytest.mark.criterion(
    "begin node + trunk junction match brute-force equations on 1000 trees")
def test_equation_oracle_equivalence():
    rng = np.random.default_rng(424242)
    checked = 0
    while checked < 1000:
        s = random_tree(rng, int(rng.integers(2, 31)))
        clean = CleanSkeleton(
            skeleton=s,
            original_joint_map=tuple(frozenset({i}) for i in range(s.num_joints)),
            pruned_branches=(),
            bone_paths=tuple((min(int(i), int(j)), max(int(i), int(j)))
                             for i, j in s.bones))
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


# -----------------------------------------------------------------------------
# 3. weight chain invariants
# -----------------------------------------------------------------------------

@pytest.mark.criterion(
    "weight chain: 1000 random (W, partition) row sums / convex hull; "
    "beta = (0.75, 0.25) exact")
def test_weight_chain_invariants():
    rng = np.random.default_rng(31337)
    for _ in range(1000):
        q = int(rng.integers(1, 10))
        j = int(rng.integers(2, 7))
        w = rng.uniform(0, 1, (q, j)) * (rng.random((q, j)) > 0.35)
        w[rng.random(q) < 0.25] = 0.0
        bones = [[i, i + 1] for i in range(j - 1)]
        sk = Skeleton(joints=rng.uniform(-0.5, 0.5, (j, 3)),
                      bones=np.asarray(bones, dtype=np.int64), root=0)
        clean = CleanSkeleton(
            skeleton=sk,
            original_joint_map=tuple(frozenset({i}) for i in range(j)),
            pruned_branches=(),
            bone_paths=tuple((min(a, b), max(a, b)) for a, b in bones))
        split = int(rng.integers(1, j))
        regions = [Region("Body", 1, frozenset(range(split + 1)),
                          frozenset(range(split)))]
        if split < j - 1:
            regions.append(Region("Tail", 1, frozenset(range(split, j)),
                                  frozenset(range(split, j - 1))))
        part = SemanticPartition(regions=tuple(regions), begin_node=0)
        rw = aggregate_region_weights(SkinningMatrix(w, tuple(range(j))), part, clean)
        sums = rw.weights.sum(axis=1)
        covered = sorted({jj for r in regions for jj in r.joints})
        mass = w[:, covered].sum(axis=1)
        for row in range(q):
            # Eq. 4 epsilon guard: the row is normalized or exactly zero
            if mass[row] > 1e-12:
                assert abs(sums[row] - 1.0) < 1e-9
            else:
                assert sums[row] == 0.0

        if q >= 2:
            verts = rng.uniform(-0.5, 0.5, (q, 3))
            targets = rng.uniform(-0.5, 0.5, (3, 3))
            k = int(rng.integers(1, q + 1))
            sw = knn_transfer(rw, verts, targets, k=k)
            lo = rw.weights.min(axis=0) - 1e-12
            hi = rw.weights.max(axis=0) + 1e-12
            assert np.all(sw.weights >= lo) and np.all(sw.weights <= hi)

    # the hand-evaluated inverse-distance case, exact
    verts = np.array([[1.0, 0, 0], [3.0, 0, 0]])
    rw = RegionWeightMatrix(weights=np.eye(2), region_order=("a/a/1", "a/b/1"))
    out = knn_transfer(rw, verts, np.array([[0.0, 0, 0]]), k=2)
    assert out.weights[0, 0] == 0.75 and out.weights[0, 1] == 0.25


# -----------------------------------------------------------------------------
# 4. overlap merge properties
# -----------------------------------------------------------------------------

@pytest.mark.criterion(
    "overlap merge: convexity, identity, 1e-12 scale invariance, hand case, "
    "10^4 instances")
def test_merge_properties():
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        n = int(rng.integers(1, 7))
        z = rng.normal(size=(n, 2))
        if n == 1:
            out = merge_overlaps(np.array([float(rng.uniform(0, 2))]), z)
            assert np.array_equal(bits(out), bits(z[0]))
            continue
        w = rng.uniform(0, 2, n)
        if w.sum() == 0:
            w[0] = 1.0
        out = merge_overlaps(w, z)
        assert np.all(out <= z.max(axis=0) + 1e-12)
        assert np.all(out >= z.min(axis=0) - 1e-12)
        c = float(rng.uniform(0.25, 8.0))
        out2 = merge_overlaps(c * w, z)
        assert np.all(np.abs(out2 - out) <= 1e-12 * np.maximum(1.0, np.abs(out)))
    out = merge_overlaps(np.array([2.0, 1.0, 1.0]), np.array([[4.0], [0.0], [0.0]]))
    assert out[0] == 2.0


# -----------------------------------------------------------------------------
# 5. operator algebra
# -----------------------------------------------------------------------------

@pytest.mark.criterion(
    "operator algebra: rigid 1e-6 / scale 1e-6 over 1000 ops, rotate round "
    "trip 1e-9, provenance 1e-9")
def test_operator_algebra():
    rng = np.random.default_rng(777)
    for _ in range(1000):
        pts = rng.uniform(-0.4, 0.4, size=(int(rng.integers(2, 10)), 3))
        d0 = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
        kind = rng.integers(0, 3)
        if kind == 0:
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            op = Rotate(REF, axis, rng.uniform(-0.3, 0.3, 3),
                        float(rng.uniform(-360, 360)))
            expect = d0
        elif kind == 1:
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            op = Translate(REF, d, float(rng.uniform(-0.5, 0.5)))
            expect = d0
        else:
            alpha = float(rng.uniform(0.2, 3.0))
            op = Scale(REF, alpha, rng.uniform(-0.3, 0.3, 3))
            expect = d0 * alpha
        out = apply_op(pts, op)
        d1 = np.linalg.norm(out[:, None] - out[None, :], axis=-1)
        assert np.max(np.abs(d1 - expect)) < 1e-6
        if kind == 0:
            back = apply_op(out, op.inverse())
            assert np.max(np.abs(back - pts)) < 1e-9

    # provenance: executed plans reproduce merged joints from per-part affines
    from beastforge.planner import execute_plan, plan_assembly

    quad = pipeline.prepare_asset("a0", fixtures.make_bundle("quadruped"))
    donor = pipeline.prepare_asset("a1", fixtures.make_bundle("winged"))
    parts = pipeline.select_parts([quad, donor], "wings and two heads on it")
    plan = plan_assembly(parts, "wings and two heads on it")
    assembled = execute_plan(parts, plan)
    supplied = {p.ref: p for p in parts}
    offset = 0
    for pidx, decl in enumerate(assembled.parts):
        part = supplied[decl.ref]
        m = part.joints.shape[0]
        for cidx in sorted(c for (pi, c) in assembled.per_part_transform if pi == pidx):
            affine = assembled.per_part_transform[(pidx, cidx)]
            merged = assembled.skeleton.joints[offset:offset + m]
            assert np.max(np.abs(affine.apply(part.joints) - merged)) < 1e-9
            offset += m


# -----------------------------------------------------------------------------
# 6. composition equals the dense brute-force oracle
# -----------------------------------------------------------------------------

@pytest.mark.criterion(
    "composition equals the dense oracle bit-for-bit on 50+ cases at N <= 16")
def test_composition_dense_oracle():
    rng = np.random.default_rng(90210)
    cases = 0
    attempts = 0
    while cases < 50 and attempts < 250:
        attempts += 1
        n = int(rng.choice([8, 12, 16]))
        c = int(rng.integers(1, 4))
        regions, transforms = _compose_case(rng, n, c, int(rng.integers(1, 5)))
        if all(r.is_empty for r in regions):
            continue
        try:
            got = compose(list(zip(regions, transforms)),
                          CompositionConfig(coarse_factor=4, fill_passes=2))
        except (OutOfBounds, AllZeroWeights):
            continue
        live_idx = [i for i, r in enumerate(regions) if not r.is_empty]
        oracle_regions = [
            ([tuple(int(v) for v in p) for p in regions[i].positions.tolist()],
             [list(map(float, row)) for row in regions[i].features.tolist()],
             [float(v) for v in regions[i].weights.tolist()])
            for i in live_idx
        ]
        oracle_transforms = [
            ([[float(v) for v in row] for row in transforms[i].lin.tolist()],
             [float(v) for v in transforms[i].trans.tolist()],
             not transforms[i].is_axis_aligned)
            for i in live_idx
        ]
        positions, features, seams, provenance, _ = compose_dense(
            oracle_regions, oracle_transforms, n, c, factor=4, passes=2)
        assert [tuple(p) for p in got.latent.positions.tolist()] == positions
        assert np.array_equal(bits(got.latent.features), bits(features))
        assert got.seam_set == seams
        assert [int(v) for v in got.provenance.tolist()] == \
            [live_idx[v] for v in provenance]
        cases += 1
    assert cases >= 50


# -----------------------------------------------------------------------------
# 7. formats round-trip + pipeline determinism
# -----------------------------------------------------------------------------

@pytest.mark.criterion(
    "formats round-trip bit-exactly; fixture pipeline byte-deterministic")
def test_formats_and_determinism(tmp_path):
    bundle = fixtures.make_bundle("quadruped")
    slat_blob = formats.write_slat(bundle.slat)
    assert formats.write_slat(formats.read_slat(slat_blob)) == slat_blob
    musw_blob = formats.write_musw(bundle.skinning)
    assert formats.write_musw(formats.read_musw(musw_blob)) == musw_blob
    skel_blob = formats.skeleton_to_json(bundle.skeleton)
    assert formats.skeleton_to_json(formats.skeleton_from_json(skel_blob)) == skel_blob

    quad = pipeline.prepare_asset("a0", bundle)
    donor = pipeline.prepare_asset("a1", fixtures.make_bundle("winged"))
    from beastforge.planner import plan_assembly

    parts = pipeline.select_parts([quad, donor], "wings on the quadruped")
    plan_blob = formats.plan_to_json(plan_assembly(parts, "wings on the quadruped"))
    assert formats.plan_to_json(formats.plan_from_json(plan_blob)) == plan_blob

    outputs = []
    for sub in ("one", "two"):
        cfg = pipeline.PipelineConfig(
            sources=("fixture:quadruped", "fixture:winged"),
            request="wings on the quadruped", out_dir=str(tmp_path / sub))
        pipeline.run_pipeline(cfg)
        root = tmp_path / sub
        files = {p.relative_to(root): p.read_bytes()
                 for p in sorted(root.rglob("*")) if p.is_file()}
        outputs.append(files)
    assert list(outputs[0]) == list(outputs[1])
    for rel in outputs[0]:
        assert outputs[0][rel] == outputs[1][rel], rel


# -----------------------------------------------------------------------------
# 8. performance budget
# -----------------------------------------------------------------------------

@pytest.mark.criterion(
    "performance: fixture pipeline (stages I-II) < 5 s; compose of 1e5 "
    "voxels < 1 s")
def test_performance_budget(tmp_path):
    _warm_kernels()
    fixtures.make_bundle("quadruped")
    fixtures.make_bundle("winged")

    start = time.perf_counter()
    cfg = pipeline.PipelineConfig(
        sources=("fixture:quadruped", "fixture:winged"),
        request="wings on the quadruped", out_dir=str(tmp_path / "perf"))
    res = pipeline.run_pipeline(cfg)
    pipeline_elapsed = time.perf_counter() - start
    total_active = sum(s.bundle.slat.num_voxels for s in res.assets)
    assert total_active <= 100_000

    rng = np.random.default_rng(8)
    n = 64
    half = 50_000
    lin = rng.choice(n ** 3, size=2 * half, replace=False)
    regions = []
    for i in range(2):
        ids = np.sort(lin[i * half:(i + 1) * half])
        pos = np.stack([ids // (n * n), (ids // n) % n, ids % n], axis=1)
        regions.append(RegionLatent(
            ref=f"r{i}", resolution=n, positions=pos,
            features=rng.normal(size=(half, 8)),
            weights=rng.uniform(0.1, 1.0, half)))
    rot = op_to_affine(Rotate(REF, np.array([0.0, 1.0, 0.0]), np.zeros(3), 30.0))
    start = time.perf_counter()
    compose([(regions[0], AffineTransform.identity()), (regions[1], rot)],
            CompositionConfig(coarse_factor=4, fill_passes=2))
    compose_elapsed = time.perf_counter() - start

    assert pipeline_elapsed < 5.0, f"pipeline took {pipeline_elapsed:.2f} s"
    assert compose_elapsed < 1.0, f"compose took {compose_elapsed:.2f} s"
