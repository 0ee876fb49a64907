import json
import math

import numpy as np
import pytest

from astroswarm.geometry import (
    DEFAULT_ARM,
    DEFAULT_PITCH,
    FOLDED_POSE,
    ArmPose,
    AstrobotSpec,
    SwarmLayout,
    WorkspaceError,
    arm_chain,
    build_hex_swarm,
    hex_capacity,
    inverse_kinematics,
    layout_fingerprint,
    load_layout,
    min_chain_distance,
    neighborhood_of,
    sample_target,
    save_layout,
)


def _sampled_min_distance(a: np.ndarray, b: np.ndarray, samples: int = 10_000) -> float:
    """Dense point-sampling oracle: sample points along each segment of one
    polyline and take exact point-to-segment distances to the other, both ways.
    Independent of the production segment-segment routine."""

    def point_to_seg(points, p0, p1):
        u = p1 - p0
        uu = float(u @ u)
        if uu == 0.0:
            return np.linalg.norm(points - p0, axis=1)
        t = np.clip((points - p0) @ u / uu, 0.0, 1.0)
        proj = p0 + t[:, None] * u
        return np.linalg.norm(points - proj, axis=1)

    def segments(poly):
        poly = np.asarray(poly, dtype=float).reshape(-1, 2)
        if poly.shape[0] == 1:
            return [(poly[0], poly[0])]
        return [(poly[i], poly[i + 1]) for i in range(poly.shape[0] - 1)]

    t = np.linspace(0.0, 1.0, samples)[:, None]
    best = math.inf
    for p0, p1 in segments(a):
        pts = p0 + t * (p1 - p0)
        for q0, q1 in segments(b):
            best = min(best, float(point_to_seg(pts, q0, q1).min()))
    for q0, q1 in segments(b):
        pts = q0 + t * (q1 - q0)
        for p0, p1 in segments(a):
            best = min(best, float(point_to_seg(pts, p0, p1).min()))
    return best


def _spec(l1=1.0, l2=1.0, center=(0.0, 0.0), id=0):
    return AstrobotSpec(id=id, center=center, l1=l1, l2=l2)


class TestBuildHexSwarm:
    def test_one_ring_counts_and_degrees(self):
        layout = build_hex_swarm(rings=1, pitch=22.4)
        assert layout.n == 7
        assert layout.degree(0) == 6
        for i in range(1, 7):
            assert layout.degree(i) == 3

    def test_five_rings_full_size(self):
        assert build_hex_swarm(rings=5).n == 91
        assert hex_capacity(5) == 91

    @staticmethod
    def _hex_ring(pos: np.ndarray, pitch: float) -> np.ndarray:
        r = pos[:, 1] / (pitch * math.sqrt(3.0) / 2.0)
        q = pos[:, 0] / pitch - r / 2.0
        q, r = np.rint(q), np.rint(r)
        return ((np.abs(q) + np.abs(r) + np.abs(q + r)) / 2).astype(int)

    def test_116_trimmed_from_six_rings(self):
        layout = build_hex_swarm(rings=6, count=116)
        assert layout.n == 116
        # 127 - 116 = 11 removed, all from the outermost ring
        rings = self._hex_ring(layout.positions(), layout.pitch)
        assert int((rings == 6).sum()) == 36 - 11
        assert int((rings < 6).sum()) == hex_capacity(5)

    def test_insufficient_rings(self):
        with pytest.raises(ValueError, match="insufficient rings"):
            build_hex_swarm(rings=12, count=487)
        build_hex_swarm(rings=13, count=487)  # 547 cells, enough

    def test_ids_contiguous_and_sorted_by_ring(self):
        layout = build_hex_swarm(rings=3)
        radii = np.linalg.norm(layout.positions(), axis=1)
        assert [s.id for s in layout.astrobots] == list(range(layout.n))
        # generation order is by ring, so radii are non-decreasing across rings
        ring_of = np.rint(radii / layout.pitch).astype(int)  # crude but monotone here
        assert all(ring_of[i] <= ring_of[i + 1] for i in range(layout.n - 1))

    def test_trim_is_deterministic_and_clockwise(self):
        a = build_hex_swarm(rings=6, count=116)
        b = build_hex_swarm(rings=6, count=116)
        assert a == b
        # first trimmed cell is the outer-ring astrobot at angle 0: no kept
        # ring-6 astrobot sits on the positive x axis
        rings = self._hex_ring(a.positions(), a.pitch)
        for i in np.flatnonzero(rings == 6):
            x, y = a.positions()[i]
            assert not (abs(y) < 1e-9 and x > 0)

    def test_pitch_must_be_reachable(self):
        with pytest.raises(ValueError, match="arms too short"):
            build_hex_swarm(rings=1, pitch=22.4, l1=5.0, l2=5.0)

    def test_neighbor_symmetry_and_degree_bound(self):
        layout = build_hex_swarm(rings=4, count=50)
        for i in range(layout.n):
            assert layout.degree(i) <= 6
            for j in layout.neighbors(i):
                assert i in layout.neighbors(j)

    def test_interior_astrobot_has_six_neighbors(self):
        layout = build_hex_swarm(rings=2)
        for i in range(7):  # center and first ring are interior in a 2-ring hex
            assert layout.degree(i) == 6 if i == 0 else layout.degree(i) == 6


class TestNeighborhood:
    def test_center_of_one_ring(self):
        layout = build_hex_swarm(rings=1)
        hood = neighborhood_of(layout, 0)
        assert hood.center_id == 0
        assert hood.member_ids == (0, 1, 2, 3, 4, 5, 6)

    def test_member_order_center_first_then_ascending(self):
        layout = build_hex_swarm(rings=1)
        hood = neighborhood_of(layout, 3)
        assert hood.member_ids[0] == 3
        assert list(hood.member_ids[1:]) == sorted(hood.member_ids[1:])
        assert len(hood.member_ids) == 4

    def test_two_neighbor_corner(self):
        layout = build_hex_swarm(rings=1, count=3)
        degrees = layout.degrees()
        assert degrees.max() == 2
        hood = neighborhood_of(layout, int(np.argmax(degrees)))
        assert len(hood.member_ids) == 3

    def test_single_astrobot(self):
        layout = build_hex_swarm(rings=0)
        assert neighborhood_of(layout, 0).member_ids == (0,)

    def test_unknown_id(self):
        layout = build_hex_swarm(rings=0)
        with pytest.raises(KeyError):
            neighborhood_of(layout, 5)


class TestSampleTarget:
    def test_annulus_containment(self):
        spec = _spec(l1=2.0, l2=1.0, center=(3.0, -4.0))
        rng = np.random.default_rng(0)
        for _ in range(500):
            s = sample_target(spec, rng)
            d = math.hypot(s[0] - 3.0, s[1] + 4.0)
            assert spec.reach_min <= d <= spec.reach_max

    def test_equal_arms_cover_full_disc(self):
        spec = _spec(l1=1.0, l2=1.0)
        rng = np.random.default_rng(1)
        d = np.array([np.linalg.norm(sample_target(spec, rng)) for _ in range(2000)])
        assert d.min() < 0.1  # inner radius 0 is actually visited
        assert d.max() > 1.95

    def test_area_uniform(self):
        # area-uniform in an annulus means d^2 is uniform on [rmin^2, rmax^2]
        spec = _spec(l1=2.0, l2=1.0)
        rng = np.random.default_rng(2)
        d2 = np.array([np.linalg.norm(sample_target(spec, rng)) ** 2 for _ in range(4000)])
        u = (d2 - 1.0) / (9.0 - 1.0)
        hist, _ = np.histogram(u, bins=10, range=(0.0, 1.0))
        assert hist.min() > 300  # roughly flat; 400 expected per bin

    def test_seeded_determinism(self):
        spec = _spec()
        a = [tuple(sample_target(spec, np.random.default_rng(42)).tolist()) for _ in range(1)]
        b = [tuple(sample_target(spec, np.random.default_rng(42)).tolist()) for _ in range(1)]
        assert a == b
        rng1, rng2 = np.random.default_rng(42), np.random.default_rng(42)
        seq1 = [sample_target(spec, rng1) for _ in range(20)]
        seq2 = [sample_target(spec, rng2) for _ in range(20)]
        assert np.array_equal(np.array(seq1), np.array(seq2))


class TestInverseKinematics:
    def test_fully_extended(self):
        pose = inverse_kinematics(_spec(), (2.0, 0.0))
        assert pose.phi == pytest.approx(0.0, abs=1e-9)
        assert pose.theta == pytest.approx(0.0, abs=1e-9)

    def test_folded_at_center(self):
        pose = inverse_kinematics(_spec(), (0.0, 0.0))
        assert pose.phi == pytest.approx(math.pi, abs=1e-9)
        assert pose.theta == 0.0

    def test_right_angle_elbow(self):
        pose = inverse_kinematics(_spec(), (1.0, 1.0))  # distance sqrt(2)
        assert pose.phi == pytest.approx(math.pi / 2, abs=1e-9)

    def test_elbow_sign_fixed_positive(self):
        rng = np.random.default_rng(3)
        spec = _spec(l1=1.3, l2=0.9, center=(0.5, 0.5))
        for _ in range(100):
            pose = inverse_kinematics(spec, sample_target(spec, rng))
            assert 0.0 <= pose.phi <= math.pi

    def test_out_of_workspace(self):
        with pytest.raises(WorkspaceError, match="out of workspace"):
            inverse_kinematics(_spec(), (2.1, 0.0))
        with pytest.raises(WorkspaceError, match="out of workspace"):
            inverse_kinematics(_spec(l1=2.0, l2=1.0), (0.5, 0.0))

    def test_boundary_tolerance(self):
        # 1e-9 slack on the annulus boundary must not raise
        inverse_kinematics(_spec(), (2.0 + 5e-10, 0.0))
        inverse_kinematics(_spec(l1=2.0, l2=1.0), (1.0 - 5e-10, 0.0))

    def test_fk_ik_round_trip(self):
        rng = np.random.default_rng(4)
        spec = _spec(l1=11.2, l2=11.2, center=(-7.0, 2.0), id=1)
        for _ in range(300):
            target = sample_target(spec, rng)
            chain = arm_chain(spec, inverse_kinematics(spec, target))
            assert np.linalg.norm(chain[2] - target) < 1e-9


class TestArmChain:
    def test_folded_pose(self):
        chain = arm_chain(_spec(center=(2.0, 3.0)), FOLDED_POSE)
        np.testing.assert_allclose(chain[0], [2.0, 3.0])
        np.testing.assert_allclose(chain[1], [3.0, 3.0])
        np.testing.assert_allclose(chain[2], [2.0, 3.0], atol=1e-12)

    def test_straight_pose_spans_total_length(self):
        chain = arm_chain(_spec(l1=1.5, l2=0.5), ArmPose(theta=math.pi / 3, phi=0.0))
        assert np.linalg.norm(chain[2] - chain[0]) == pytest.approx(2.0, abs=1e-12)
        # collinear
        v1, v2 = chain[1] - chain[0], chain[2] - chain[1]
        assert abs(v1[0] * v2[1] - v1[1] * v2[0]) < 1e-12

    def test_ferrule_radius_formula(self):
        spec = _spec(l1=1.1, l2=0.6)
        for phi in np.linspace(0.0, math.pi, 17):
            chain = arm_chain(spec, ArmPose(theta=0.7, phi=float(phi)))
            expected = math.sqrt(1.1**2 + 0.6**2 + 2 * 1.1 * 0.6 * math.cos(phi))
            assert np.linalg.norm(chain[2]) == pytest.approx(expected, abs=1e-12)


class TestMinChainDistance:
    def test_parallel_offset_segments(self):
        a = np.array([[0.0, 0.0], [1.0, 0.0]])
        b = np.array([[0.0, 3.0], [1.0, 3.0]])
        assert min_chain_distance(a, b) == pytest.approx(3.0, abs=1e-12)

    def test_crossing_segments(self):
        a = np.array([[-1.0, -1.0], [1.0, 1.0]])
        b = np.array([[-1.0, 1.0], [1.0, -1.0]])
        assert min_chain_distance(a, b) == 0.0

    def test_touching_endpoint(self):
        a = np.array([[0.0, 0.0], [1.0, 0.0]])
        b = np.array([[1.0, 0.0], [2.0, 5.0]])
        assert min_chain_distance(a, b) == 0.0

    def test_degenerate_point_polyline(self):
        a = np.array([[0.0, 0.0]])
        b = np.array([[1.0, 1.0], [1.0, -1.0]])
        assert min_chain_distance(a, b) == pytest.approx(1.0, abs=1e-12)

    def test_symmetry_and_nonnegativity(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a = rng.uniform(-2, 2, size=(3, 2))
            b = rng.uniform(-2, 2, size=(3, 2))
            d_ab = min_chain_distance(a, b)
            assert d_ab >= 0.0
            assert d_ab == min_chain_distance(b, a)

    def test_against_sampling_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            a = rng.uniform(-2, 2, size=(3, 2))
            b = rng.uniform(-2, 2, size=(3, 2))
            exact = min_chain_distance(a, b)
            approx = _sampled_min_distance(a, b)
            assert exact <= approx + 1e-12
            assert approx - exact < 1e-3

    def test_arm_chains_against_oracle(self):
        layout = build_hex_swarm(rings=1)
        rng = np.random.default_rng(7)
        for _ in range(10):
            chains = []
            for spec in layout.astrobots[:3]:
                pose = inverse_kinematics(spec, sample_target(spec, rng))
                chains.append(arm_chain(spec, pose))
            for i in range(3):
                for j in range(i + 1, 3):
                    exact = min_chain_distance(chains[i], chains[j])
                    approx = _sampled_min_distance(chains[i], chains[j])
                    assert abs(exact - approx) < 1e-3 * DEFAULT_PITCH


class TestLayoutPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        layout = build_hex_swarm(rings=2, count=16)
        path = tmp_path / "layout.json"
        save_layout(layout, path)
        loaded = load_layout(path)
        assert loaded == layout
        assert layout_fingerprint(loaded) == layout_fingerprint(layout)
        # positions identical down to the last bit
        assert np.array_equal(loaded.positions(), layout.positions())

    def test_fingerprint_distinguishes_layouts(self):
        a = build_hex_swarm(rings=2)
        b = build_hex_swarm(rings=2, count=18)
        c = build_hex_swarm(rings=2, pitch=22.0)
        assert len({layout_fingerprint(a), layout_fingerprint(b), layout_fingerprint(c)}) == 3

    def test_tampered_graph_rejected(self, tmp_path):
        layout = build_hex_swarm(rings=1)
        path = tmp_path / "layout.json"
        save_layout(layout, path)
        record = json.loads(path.read_text())
        record["neighbors"]["0"] = []
        path.write_text(json.dumps(record))
        with pytest.raises(ValueError, match="neighbor graph"):
            load_layout(path)

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "layout.json"
        path.write_text(json.dumps({"pitch": 22.4}))
        with pytest.raises(ValueError, match="malformed"):
            load_layout(path)


class TestValidation:
    def test_bad_arm_lengths(self):
        with pytest.raises(ValueError):
            AstrobotSpec(id=0, center=(0, 0), l1=0.0, l2=1.0)

    def test_ids_must_be_contiguous(self):
        specs = [AstrobotSpec(id=1, center=(0.0, 0.0), l1=1.0, l2=1.0)]
        with pytest.raises(ValueError, match="contiguous"):
            SwarmLayout(pitch=1.0, astrobots=specs)

    def test_default_geometry(self):
        layout = build_hex_swarm(rings=1)
        assert layout.pitch == DEFAULT_PITCH == 22.4
        spec = layout.astrobots[0]
        assert spec.l1 == spec.l2 == DEFAULT_ARM == 11.2
        # equal arms at half pitch: workspace is a full disc of radius = pitch
        assert spec.reach_min == 0.0
        assert spec.reach_max == pytest.approx(22.4)
