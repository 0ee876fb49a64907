import math

import numpy as np
import pytest

from astroswarm.geometry import arm_chain, build_hex_swarm, inverse_kinematics, min_chain_distance
from astroswarm.oracle import (
    Configuration,
    SimParams,
    _tick_loop,
    _tick_loop_py,
    assign_targets,
    generate_dataset,
    simulate,
)


@pytest.fixture(scope="module")
def hex7():
    return build_hex_swarm(rings=1)


class TestSimParams:
    def test_defaults_valid(self):
        SimParams()

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SimParams(omega_max=0.0)
        with pytest.raises(ValueError):
            SimParams(deadlock_window=500, max_ticks=500)
        with pytest.raises(ValueError):
            SimParams(priority_rule="fifo")

    def test_dict_round_trip(self):
        p = SimParams(omega_max=0.07, priority_rule="farthest_first")
        assert SimParams.from_dict(p.to_dict()) == p


class TestConfiguration:
    def test_validates_population(self, hex7):
        config = Configuration(targets=np.zeros((3, 2)))
        with pytest.raises(ValueError, match="3 targets"):
            config.validate_for(hex7)

    def test_validates_reachability(self, hex7):
        targets = np.array([s.center for s in hex7.astrobots], dtype=float)
        targets[2] += (50.0, 0.0)  # far outside any annulus
        with pytest.raises(ValueError, match="outside its reachable annulus"):
            Configuration(targets=targets).validate_for(hex7)

    def test_ground_truth_shape_checked(self):
        with pytest.raises(ValueError, match="length"):
            Configuration(targets=np.zeros((3, 2)), ground_truth=np.zeros(2, dtype=np.uint8))
        with pytest.raises(ValueError, match="bits"):
            Configuration(targets=np.zeros((3, 2)), ground_truth=np.array([0, 1, 7]))


class TestAssignTargets:
    def test_single_astrobot(self):
        layout = build_hex_swarm(rings=0)
        config = assign_targets(layout, np.random.default_rng(0), 2.0)
        config.validate_for(layout)
        assert config.n == 1

    def test_zero_separation_never_resamples(self, hex7):
        # with min_target_sep=0 the first draw per astrobot is always kept, so
        # the stream matches plain sequential sampling
        from astroswarm.geometry import sample_target

        config = assign_targets(hex7, np.random.default_rng(3), 0.0)
        rng = np.random.default_rng(3)
        expected = np.array([sample_target(s, rng) for s in hex7.astrobots])
        assert np.array_equal(config.targets, expected)

    def test_neighbor_separation_honored(self, hex7):
        config = assign_targets(hex7, np.random.default_rng(7), 4.0)
        for i in range(hex7.n):
            for j in hex7.neighbors(i):
                assert np.linalg.norm(config.targets[i] - config.targets[j]) >= 4.0

    def test_deterministic(self, hex7):
        a = assign_targets(hex7, np.random.default_rng(11), 2.0)
        b = assign_targets(hex7, np.random.default_rng(11), 2.0)
        assert np.array_equal(a.targets, b.targets)

    def test_unassignable_raises(self):
        # separation larger than any annulus diameter cannot be satisfied
        layout = build_hex_swarm(rings=1)
        with pytest.raises(ValueError, match="unassignable configuration"):
            assign_targets(layout, np.random.default_rng(0), 200.0)

    def test_negative_separation_rejected(self, hex7):
        with pytest.raises(ValueError, match=">= 0"):
            assign_targets(hex7, np.random.default_rng(0), -1.0)


class TestSimulate:
    def test_single_astrobot_always_converges(self):
        layout = build_hex_swarm(rings=0)
        params = SimParams()
        for seed in range(5):
            rng = np.random.default_rng(seed)
            config = assign_targets(layout, rng, 0.0)
            g = simulate(layout, config, params, rng, audit=True)
            assert g.tolist() == [1]

    def test_contested_midpoint_allows_at_most_one(self):
        # two neighbors racing for the same spot: the loser is vetoed forever
        layout = build_hex_swarm(rings=1, count=2)
        midpoint = layout.positions().mean(axis=0)
        targets = np.tile(midpoint, (2, 1))
        params = SimParams()
        winners = set()
        for seed in range(6):
            rng = np.random.default_rng(seed)
            g = simulate(layout, Configuration(targets=targets.copy()), params, rng, audit=True)
            assert g.sum() <= 1
            winners.add(tuple(g.tolist()))
        assert len(winners) >= 1

    def test_labels_match_final_ferrule_distance(self, hex7):
        # converged astrobots are exactly those whose goal chain is reached;
        # spot-check label consistency through an audited replay
        params = SimParams()
        rng = np.random.default_rng(21)
        config = assign_targets(hex7, rng, params.eps_safety)
        g = simulate(hex7, config, params, rng, audit=True)
        assert set(np.unique(g)).issubset({0, 1})

    def test_target_within_tolerance_of_folded_start(self):
        # a target sitting on the folded ferrule position converges at tick 0
        layout = build_hex_swarm(rings=0)
        spec = layout.astrobots[0]
        folded_ferrule = arm_chain(spec, inverse_kinematics(spec, spec.center)).copy()
        config = Configuration(targets=np.array([spec.center]))
        g = simulate(layout, config, SimParams(), np.random.default_rng(0))
        assert g.tolist() == [1]

    def test_priority_rules_both_run(self, hex7):
        rng = np.random.default_rng(5)
        config = assign_targets(hex7, rng, 0.5)
        for rule in ("random_fixed", "farthest_first"):
            params = SimParams(priority_rule=rule)
            g = simulate(hex7, config, params, np.random.default_rng(5), audit=True)
            assert g.shape == (7,)

    def test_python_fallback_bit_identical(self, hex7):
        # the numba build and the pure-Python source must agree exactly
        from astroswarm import oracle as om

        params = SimParams()
        rng = np.random.default_rng(33)
        config = assign_targets(hex7, rng, params.eps_safety)
        chains, steps_total, steps_conv = om._chain_tables(hex7, config, params)
        indptr, indices = om._neighbor_csr(hex7)
        priority = om._priority_order(hex7, config, params, rng)
        args = (chains, steps_total, steps_conv, indptr, indices, priority,
                params.eps_safety**2, params.max_ticks, params.deadlock_window)
        conv_fast, commits_fast, ticks_fast = _tick_loop(*args)
        conv_py, commits_py, ticks_py = _tick_loop_py(*args)
        assert np.array_equal(conv_fast, conv_py)
        assert np.array_equal(commits_fast, commits_py)
        assert ticks_fast == ticks_py


class TestGenerateDataset:
    def test_count_one(self, hex7):
        ds = generate_dataset(hex7, count=1, seed=5)
        assert ds.count == 1
        assert ds.configurations[0].ground_truth is not None
        assert ds.n == 7

    def test_same_seed_bit_identical(self, hex7):
        a = generate_dataset(hex7, count=8, seed=42)
        b = generate_dataset(hex7, count=8, seed=42)
        assert a.layout_fingerprint == b.layout_fingerprint
        for ca, cb in zip(a.configurations, b.configurations):
            assert np.array_equal(ca.targets, cb.targets)
            assert np.array_equal(ca.ground_truth, cb.ground_truth)

    def test_different_seeds_differ(self, hex7):
        a = generate_dataset(hex7, count=4, seed=1)
        b = generate_dataset(hex7, count=4, seed=2)
        assert not all(
            np.array_equal(ca.targets, cb.targets)
            for ca, cb in zip(a.configurations, b.configurations)
        )

    def test_count_validation(self, hex7):
        with pytest.raises(ValueError, match="count"):
            generate_dataset(hex7, count=0)

    def test_default_separation_is_eps_safety(self, hex7):
        params = SimParams()
        ds = generate_dataset(hex7, count=1, params=params, seed=9)
        assert ds.min_target_sep == params.eps_safety

    def test_retry_on_unassignable_configurations(self):
        # a separation that frequently (but not always) fails forces retries;
        # generation must still succeed deterministically
        layout = build_hex_swarm(rings=1)
        diameter = 2 * (layout.astrobots[0].l1 + layout.astrobots[0].l2)
        # at 0.55 diameters roughly a third of draws are unassignable, and
        # seed 13 is known to hit one retry on the first configuration
        ds1 = generate_dataset(layout, count=3, seed=13, min_target_sep=diameter * 0.55)
        ds2 = generate_dataset(layout, count=3, seed=13, min_target_sep=diameter * 0.55)
        for ca, cb in zip(ds1.configurations, ds2.configurations):
            assert np.array_equal(ca.targets, cb.targets)


class TestSafetyInvariant:
    def test_audited_runs_on_dense_swarm(self):
        # 19 astrobots, tight margins: every tick of every run is asserted
        # pairwise-safe by the audit replay
        layout = build_hex_swarm(rings=2)
        params = SimParams()
        for seed in range(3):
            rng = np.random.default_rng(seed)
            config = assign_targets(layout, rng, params.eps_safety)
            simulate(layout, config, params, rng, audit=True)

    def test_final_chains_respect_margin(self):
        layout = build_hex_swarm(rings=2)
        params = SimParams()
        rng = np.random.default_rng(17)
        config = assign_targets(layout, rng, params.eps_safety)
        from astroswarm import oracle as om

        chains, steps_total, steps_conv = om._chain_tables(layout, config, params)
        indptr, indices = om._neighbor_csr(layout)
        priority = om._priority_order(layout, config, params, rng)
        conv, commits, _ = _tick_loop(chains, steps_total, steps_conv, indptr, indices, priority,
                                      params.eps_safety**2, params.max_ticks, params.deadlock_window)
        for i in range(layout.n):
            for j in layout.neighbors(i):
                if i < j:
                    d = min_chain_distance(
                        chains[i, commits[i]].reshape(3, 2), chains[j, commits[j]].reshape(3, 2)
                    )
                    assert d >= params.eps_safety - 1e-9
