"""Regional mobility simulator: grid construction, stepping, experiments."""

import struct

import numpy as np
import pytest

from megw.sim import (ConfigError, Policy, SimConfig, apply_moves,
                      build_grid, build_world, derive_seed, draw_moves,
                      run_experiment, step)
from megw.steering import rendezvous_select


def small_cfg(**kw):
    base = dict(regions_count=1, mecs_per_region=2, capacities=(1, 1),
                users_per_capacity=50, steps=5, migration_rate=10, seed=1)
    base.update(kw)
    return SimConfig(**base)


class TestConfig:
    def test_bad_capacity_length(self):
        with pytest.raises(ConfigError):
            SimConfig(mecs_per_region=4, capacities=(1, 1))

    def test_nonpositive_capacity(self):
        with pytest.raises(ConfigError):
            SimConfig(capacities=(1, 1, 0, 2))

    def test_rate_exceeds_population(self):
        with pytest.raises(ConfigError):
            small_cfg(migration_rate=10_000)

    def test_population(self):
        assert SimConfig().population == 500 * 6 * 3


class TestGrid:
    def test_flower_tiling_partitions(self):
        grid = build_grid(SimConfig())
        assert len(grid.cells) == 7 * 12
        sizes = [len(c) for c in grid.mec_cells]
        assert sizes == [7] * 12
        # each cell belongs to exactly one MEC by construction
        assert sorted(np.concatenate(grid.mec_cells).tolist()) \
            == list(range(len(grid.cells)))

    def test_regions_partition_mecs(self):
        grid = build_grid(SimConfig())
        counts = np.bincount(grid.region_of_mec)
        assert counts.tolist() == [4, 4, 4]

    def test_regions_contiguous(self):
        # every region's cell set is connected under hex adjacency
        grid = build_grid(SimConfig())
        for region in range(3):
            cells = set(np.flatnonzero(grid.region_of_cell == region))
            seen = {next(iter(cells))}
            frontier = list(seen)
            while frontier:
                c = frontier.pop()
                for n in grid.neighbor_table[c]:
                    if n >= 0 and n in cells and n not in seen:
                        seen.add(int(n))
                        frontier.append(int(n))
            assert seen == cells

    def test_neighbors_symmetric(self):
        grid = build_grid(small_cfg())
        for i in range(len(grid.cells)):
            for j in grid.neighbor_table[i]:
                if j >= 0:
                    assert i in grid.neighbor_table[j]

    def test_degenerate_single_mec(self):
        grid = build_grid(SimConfig(regions_count=1, mecs_per_region=1,
                                    capacities=(1,)))
        assert len(grid.cells) == 7


class TestBuildWorld:
    def test_users_per_neighborhood(self):
        cfg = SimConfig()
        world = build_world(cfg)
        # capacity-2 neighborhoods start with exactly 1000 users
        for m in range(world.grid.n_mecs):
            in_hood = np.isin(world.user_cell, world.grid.mec_cells[m]).sum()
            expected = 500 * int(world.grid.capacities[m])
            assert in_hood == expected

    def test_initial_ratio_exactly_one(self):
        for cfg in (SimConfig(), small_cfg(),
                    SimConfig(policy=Policy.WITHOUT_REGIONS)):
            assert build_world(cfg).min_max_ratio() == 1.0

    def test_single_mec_world(self):
        cfg = SimConfig(regions_count=1, mecs_per_region=1, capacities=(1,),
                        migration_rate=0)
        world = build_world(cfg)
        assert world.population == 500
        assert (world.serving == 0).all()

    def test_initial_serving_geographic(self):
        world = build_world(SimConfig())
        assert (world.serving == world.grid.mec_of_cell[world.user_cell]).all()


class TestStep:
    def test_zero_rate_no_change(self):
        cfg = small_cfg(migration_rate=0)
        world = build_world(cfg)
        before = world.min_max_ratio()
        m = step(world, np.random.default_rng(0))
        assert m.migrations == 0
        assert m.min_max_ratio == before

    def test_conservation(self):
        cfg = SimConfig(migration_rate=500)
        world = build_world(cfg)
        rng = np.random.default_rng(5)
        for _ in range(10):
            step(world, rng)
        assert world.population == cfg.population
        assert world.mec_load().sum() == pytest.approx(cfg.population)

    def test_movers_go_to_neighbor_cells(self):
        world = build_world(small_cfg())
        rng = np.random.default_rng(2)
        before = world.user_cell.copy()
        movers, new_cells = draw_moves(world, rng)
        for u, c in zip(movers, new_cells):
            assert c in world.grid.neighbor_table[before[u]]

    def test_scripted_intra_region_move(self):
        # one user crosses between two neighborhoods of the same region:
        # geographic serving changes, region serving does not
        for policy, expected in ((Policy.WITHOUT_REGIONS, 1),
                                 (Policy.WITH_REGIONS, 0)):
            world = build_world(small_cfg(policy=policy))
            grid = world.grid
            pair = None
            for i, c in enumerate(grid.cells):
                for j in grid.neighbor_table[i]:
                    if j >= 0 and grid.mec_of_cell[i] != grid.mec_of_cell[j]:
                        pair = (i, int(j))
                        break
                if pair:
                    break
            user = int(np.flatnonzero(world.user_cell == pair[0])[0])
            m = apply_moves(world, np.array([user]), np.array([pair[1]]))
            assert m.migrations == expected

    def test_scripted_cross_region_move(self):
        # two single-MEC regions: a border crossing migrates either way
        for policy in (Policy.WITHOUT_REGIONS, Policy.WITH_REGIONS):
            cfg = SimConfig(regions_count=2, mecs_per_region=1,
                            capacities=(1,), users_per_capacity=50,
                            migration_rate=1, seed=3, policy=policy)
            world = build_world(cfg)
            grid = world.grid
            pair = None
            for i, c in enumerate(grid.cells):
                for j in grid.neighbor_table[i]:
                    if j >= 0 and grid.region_of_cell[i] != grid.region_of_cell[j]:
                        pair = (i, int(j))
                        break
                if pair:
                    break
            assert pair, "regions must touch"
            user = int(np.flatnonzero(world.user_cell == pair[0])[0])
            m = apply_moves(world, np.array([user]), np.array([pair[1]]))
            assert m.migrations == 1

    def test_hash_stability_within_region(self):
        # serving changes only alongside a region change
        cfg = SimConfig(migration_rate=900, seed=11)
        world = build_world(cfg)
        rng = np.random.default_rng(11)
        for _ in range(20):
            serving_before = world.serving.copy()
            region_before = world.grid.region_of_mec[serving_before]
            step(world, rng)
            changed = world.serving != serving_before
            new_region = world.grid.region_of_cell[world.user_cell]
            assert (new_region[changed] != region_before[changed]).all()

    def test_with_regions_uses_rendezvous_assignment(self):
        cfg = SimConfig(migration_rate=2000, seed=13)
        world = build_world(cfg)
        rng = np.random.default_rng(13)
        serving_before = world.serving.copy()
        step(world, rng)
        changed = np.flatnonzero(world.serving != serving_before)
        assert changed.size > 0
        grid = world.grid
        for u in changed[:20]:
            region = grid.region_of_cell[world.user_cell[u]]
            members = np.flatnonzero(grid.region_of_mec == region)
            cands = [(grid.mec_names[m], float(grid.capacities[m]))
                     for m in members]
            pick = rendezvous_select(struct.pack("!Q", int(u)), cands)
            assert grid.mec_names[world.serving[u]] == pick

    def test_ratio_zero_when_mec_empty(self):
        world = build_world(small_cfg(policy=Policy.WITHOUT_REGIONS))
        world.serving[:] = 0  # everyone piles onto MEC 0
        assert world.min_max_ratio() == 0.0


class TestDominance:
    def test_replayed_trace_orders_policies(self):
        cfg_base = SimConfig(migration_rate=900)
        for seed in range(5):
            rep_seed = derive_seed(42, seed)
            worlds = {p: build_world(SimConfig(migration_rate=900, seed=rep_seed,
                                               policy=p))
                      for p in Policy}
            rng = np.random.default_rng([rep_seed, 1])
            for _ in range(15):
                movers, cells = draw_moves(worlds[Policy.WITH_REGIONS], rng)
                with_m = apply_moves(worlds[Policy.WITH_REGIONS], movers, cells)
                without_m = apply_moves(worlds[Policy.WITHOUT_REGIONS],
                                        movers, cells)
                assert with_m.migrations <= without_m.migrations


class TestExperiment:
    def test_determinism(self):
        cfg = small_cfg()
        r1 = run_experiment(cfg, [0.05], replications=3, steps=5)
        r2 = run_experiment(cfg, [0.05], replications=3, steps=5)
        assert r1.rows == r2.rows

    def test_row_schema_and_counts(self):
        res = run_experiment(small_cfg(), [0.05, 0.1], replications=2, steps=4)
        assert len(res.rows) == 2 * 2 * 2 * 5  # rates x policies x reps x (steps+1)
        row = res.rows[0]
        assert set(row) == {"policy", "rate", "replication", "step",
                            "migrations", "cumulative_migrations",
                            "min_max_ratio"}

    def test_summary_shapes(self):
        res = run_experiment(small_cfg(), [0.1], replications=2, steps=4)
        s = res.summary[(Policy.WITH_REGIONS.value, 0.1)]
        assert s["mean_cumulative"].shape == (5,)
        assert res.metadata["replications"] == 2

    def test_metadata_records_shape(self):
        res = run_experiment(SimConfig(), [0.01], replications=1, steps=1)
        assert res.metadata["grid_cells"] == 84
        assert res.metadata["capacities"] == [1, 1, 2, 2]
        assert res.metadata["population"] == 9000
