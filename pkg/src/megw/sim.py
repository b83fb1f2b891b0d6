"""Flow-level regional mobility simulator.

A hexagonal cell map is tiled by 7-cell neighborhoods (a center cell plus
its six surrounding cells), one edge cluster per neighborhood, each with a
relative capacity. Neighborhoods group into contiguous regions. Users are
placed proportionally to capacity and wander to random neighbor cells each
simulated minute.

Two serving policies are compared:

- without regions: a user is always served by the cluster covering its
  cell, so every neighborhood boundary crossing migrates application state;
- with regions: the serving cluster is fixed while the user stays inside
  the region, and a capacity-weighted rendezvous hash (the same scheme the
  gateway data plane uses for stage I) picks the new serving cluster only
  when the user enters a different region.

Metrics per step: application-state migrations and the min-max fairness
ratio of cluster utilizations (least loaded over most loaded).
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .steering import rendezvous_select

# axial hexagonal geometry: six unit direction vectors and the basis of the
# neighborhood-center sublattice (index 7: centers plus six offsets tile
# the plane exactly)
HEX_DIRS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))
_BASIS_A = (2, 1)
_BASIS_B = (-1, 3)


class ConfigError(ValueError):
    pass


class Policy(enum.Enum):
    WITH_REGIONS = "with_regions"
    WITHOUT_REGIONS = "without_regions"


@dataclass(frozen=True)
class SimConfig:
    regions_count: int = 3
    mecs_per_region: int = 4
    capacities: tuple = (1, 1, 2, 2)      # per MEC within each region
    users_per_capacity: int = 500
    steps: int = 60
    migration_rate: int = 60              # users moved per simulated minute
    policy: Policy = Policy.WITH_REGIONS
    seed: int = 0

    def __post_init__(self):
        if self.regions_count < 1 or self.mecs_per_region < 1:
            raise ConfigError("region and MEC counts must be positive")
        if len(self.capacities) != self.mecs_per_region:
            raise ConfigError(
                f"need {self.mecs_per_region} capacities, "
                f"got {len(self.capacities)}")
        if any(int(c) <= 0 for c in self.capacities):
            raise ConfigError("capacities must be positive")
        if self.users_per_capacity < 1 or self.steps < 0:
            raise ConfigError("users_per_capacity and steps must be positive")
        if self.migration_rate < 0:
            raise ConfigError("migration_rate must be non-negative")
        if self.migration_rate > self.population:
            raise ConfigError(
                f"cannot move {self.migration_rate} of {self.population} users")

    @property
    def population(self) -> int:
        return (self.users_per_capacity * int(sum(self.capacities))
                * self.regions_count)

    @staticmethod
    def from_dict(doc: dict) -> "SimConfig":
        kwargs = dict(doc)
        if "policy" in kwargs:
            kwargs["policy"] = Policy(kwargs["policy"])
        if "capacities" in kwargs:
            kwargs["capacities"] = tuple(kwargs["capacities"])
        return SimConfig(**kwargs)


def _vec(p, k):
    return (p[0] * k, p[1] * k)


def _add(*points):
    q = sum(p[0] for p in points)
    r = sum(p[1] for p in points)
    return (q, r)


def _mec_centers(regions_count: int, mecs_per_region: int) -> tuple[list, list]:
    """Neighborhood centers and their region ids.

    Each region is a compact block of neighborhoods (two per row on the
    sublattice); consecutive regions step diagonally so that adjacent
    regions touch at a single neighborhood pair, keeping the inter-region
    boundary small relative to the neighborhood boundaries inside.
    """
    rows = math.ceil(mecs_per_region / 2)
    if mecs_per_region == 1:
        step = _BASIS_A
    elif mecs_per_region % 2:
        step = _vec(_BASIS_A, 2)
    else:
        step = _add(_vec(_BASIS_A, 2), _vec(_BASIS_B, rows - 1))
    centers, regions = [], []
    for r in range(regions_count):
        origin = _vec(step, r)
        for m in range(mecs_per_region):
            dk, dl = m % 2, m // 2
            centers.append(_add(origin, _vec(_BASIS_A, dk), _vec(_BASIS_B, dl)))
            regions.append(r)
    return centers, regions


@dataclass
class HexGrid:
    cells: list                  # axial coords, index order is canonical
    cell_index: dict             # axial -> index
    mec_of_cell: np.ndarray      # (n_cells,) MEC index
    region_of_cell: np.ndarray   # (n_cells,)
    region_of_mec: np.ndarray    # (n_mecs,)
    capacities: np.ndarray       # (n_mecs,) float
    mec_cells: list              # per MEC: array of its 7 cell indices
    neighbor_table: np.ndarray   # (n_cells, 6) neighbor index or -1
    neighbor_count: np.ndarray   # (n_cells,)
    mec_names: list

    @property
    def n_mecs(self) -> int:
        return len(self.capacities)


def build_grid(cfg: SimConfig) -> HexGrid:
    centers, center_regions = _mec_centers(cfg.regions_count,
                                           cfg.mecs_per_region)
    cell_owner: dict = {}
    for mec, center in enumerate(centers):
        for cell in [center] + [_add(center, d) for d in HEX_DIRS]:
            if cell in cell_owner:
                raise ConfigError(f"tiling overlap at {cell}")
            cell_owner[cell] = mec
    cells = sorted(cell_owner)
    cell_index = {c: i for i, c in enumerate(cells)}
    n = len(cells)
    mec_of_cell = np.array([cell_owner[c] for c in cells], dtype=np.int64)
    region_of_mec = np.array(center_regions, dtype=np.int64)
    region_of_cell = region_of_mec[mec_of_cell]
    capacities = np.array([float(cfg.capacities[m % cfg.mecs_per_region])
                           for m in range(len(centers))])
    mec_cells = [np.flatnonzero(mec_of_cell == m) for m in range(len(centers))]

    neighbor_table = np.full((n, 6), -1, dtype=np.int64)
    neighbor_count = np.zeros(n, dtype=np.int64)
    for i, c in enumerate(cells):
        k = 0
        for d in HEX_DIRS:
            j = cell_index.get(_add(c, d))
            if j is not None:
                neighbor_table[i, k] = j
                k += 1
        neighbor_count[i] = k
    if (neighbor_count == 0).any():
        raise ConfigError("isolated cell in tiling")

    names = [f"mec-{r}-{m}" for r, m in zip(
        center_regions, list(range(cfg.mecs_per_region)) * cfg.regions_count)]
    return HexGrid(cells=cells, cell_index=cell_index, mec_of_cell=mec_of_cell,
                   region_of_cell=region_of_cell, region_of_mec=region_of_mec,
                   capacities=capacities, mec_cells=mec_cells,
                   neighbor_table=neighbor_table,
                   neighbor_count=neighbor_count, mec_names=names)


_HASH_CACHE: dict = {}


def _region_hash_table(grid: HexGrid, n_users: int) -> np.ndarray:
    """(n_users, n_regions) serving MEC per user per region, using the same
    weighted rendezvous selection as the gateway's stage I."""
    key = (n_users, tuple(grid.mec_names), tuple(grid.capacities),
           tuple(grid.region_of_mec))
    cached = _HASH_CACHE.get(key)
    if cached is not None:
        return cached
    n_regions = int(grid.region_of_mec.max()) + 1
    table = np.empty((n_users, n_regions), dtype=np.int64)
    by_name = {name: m for m, name in enumerate(grid.mec_names)}
    for region in range(n_regions):
        members = np.flatnonzero(grid.region_of_mec == region)
        candidates = [(grid.mec_names[m], float(grid.capacities[m]))
                      for m in members]
        for user in range(n_users):
            pick = rendezvous_select(struct.pack("!Q", user), candidates)
            table[user, region] = by_name[pick]
    _HASH_CACHE[key] = table
    return table


@dataclass
class StepMetrics:
    t: int
    migrations: int
    cumulative_migrations: int
    min_max_ratio: float


@dataclass
class SimWorld:
    cfg: SimConfig
    grid: HexGrid
    user_cell: np.ndarray
    serving: np.ndarray
    hash_table: np.ndarray | None
    t: int = 0
    cumulative_migrations: int = 0

    @property
    def population(self) -> int:
        return len(self.user_cell)

    def mec_load(self) -> np.ndarray:
        """Users per MEC.

        Without regions a MEC carries exactly the users assigned to it.
        With regions each region acts as one pooled cluster whose load the
        two-stage steering spreads over its MECs in proportion to capacity,
        so a MEC carries its capacity share of the region's users; the
        pooling is what absorbs per-user randomness.
        """
        if self.cfg.policy is Policy.WITHOUT_REGIONS:
            return np.bincount(self.serving, minlength=self.grid.n_mecs
                               ).astype(float)
        grid = self.grid
        n_regions = int(grid.region_of_mec.max()) + 1
        region_users = np.bincount(grid.region_of_mec[self.serving],
                                   minlength=n_regions).astype(float)
        region_caps = np.zeros(n_regions)
        np.add.at(region_caps, grid.region_of_mec, grid.capacities)
        share = region_users[grid.region_of_mec] / region_caps[
            grid.region_of_mec]
        return share * grid.capacities

    def min_max_ratio(self) -> float:
        load = self.mec_load()
        if (load == 0).any():
            return 0.0
        util = load / self.grid.capacities
        return float(util.min() / util.max())

    def metrics(self, migrations: int = 0) -> StepMetrics:
        return StepMetrics(t=self.t, migrations=migrations,
                           cumulative_migrations=self.cumulative_migrations,
                           min_max_ratio=self.min_max_ratio())


def build_world(cfg: SimConfig) -> SimWorld:
    """Deterministic initial world: users_per_capacity x capacity users in
    each neighborhood, spread uniformly over its 7 cells, each served by
    the geographically covering MEC, so utilizations start exactly equal."""
    grid = build_grid(cfg)
    rng = np.random.default_rng([cfg.seed, 0x9E37])
    chunks = []
    for m in range(grid.n_mecs):
        count = cfg.users_per_capacity * int(grid.capacities[m])
        chunks.append(rng.choice(grid.mec_cells[m], size=count, replace=True))
    user_cell = np.concatenate(chunks)
    serving = grid.mec_of_cell[user_cell].copy()
    table = (_region_hash_table(grid, len(user_cell))
             if cfg.policy is Policy.WITH_REGIONS else None)
    return SimWorld(cfg=cfg, grid=grid, user_cell=user_cell, serving=serving,
                    hash_table=table)


def draw_moves(world: SimWorld, rng: np.random.Generator,
               count: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Pick distinct movers and a uniform valid neighbor cell for each.

    The movement trace is policy-independent, so one drawn batch can be
    replayed under both serving policies.
    """
    if count is None:
        count = world.cfg.migration_rate
    if count > world.population:
        raise ConfigError(f"cannot move {count} of {world.population} users")
    movers = rng.choice(world.population, size=count, replace=False)
    cells = world.user_cell[movers]
    pick = rng.integers(0, world.grid.neighbor_count[cells])
    new_cells = world.grid.neighbor_table[cells, pick]
    return movers, new_cells


def apply_moves(world: SimWorld, movers: np.ndarray,
                new_cells: np.ndarray) -> StepMetrics:
    """Move the users, reassign serving MECs per policy, count migrations."""
    grid = world.grid
    old_serving = world.serving[movers]
    world.user_cell[movers] = new_cells
    if world.cfg.policy is Policy.WITHOUT_REGIONS:
        new_serving = grid.mec_of_cell[new_cells]
    else:
        # serving MEC sticks within the region; crossing into another
        # region rehashes over that region's MECs, weighted by capacity
        new_region = grid.region_of_cell[new_cells]
        crossed = new_region != grid.region_of_mec[old_serving]
        new_serving = old_serving.copy()
        if crossed.any():
            new_serving[crossed] = world.hash_table[movers[crossed],
                                                    new_region[crossed]]
    world.serving[movers] = new_serving
    migrations = int((new_serving != old_serving).sum())
    world.t += 1
    world.cumulative_migrations += migrations
    return world.metrics(migrations)


def step(world: SimWorld, rng: np.random.Generator) -> StepMetrics:
    movers, new_cells = draw_moves(world, rng)
    return apply_moves(world, movers, new_cells)


@dataclass
class ExperimentResult:
    rows: list          # per (policy, rate, replication, step)
    summary: dict       # (policy, rate) -> per-step aggregate arrays
    metadata: dict

    def mean_cumulative(self, policy: Policy, rate: float) -> float:
        return float(self.summary[(policy.value, rate)]["mean_cumulative"][-1])

    def mean_ratio_series(self, policy: Policy, rate: float) -> np.ndarray:
        return self.summary[(policy.value, rate)]["mean_ratio"]


def derive_seed(*parts: int) -> int:
    """Collision-resistant child seed from integer coordinates."""
    raw = struct.pack(f"!{len(parts)}q", *parts)
    return int.from_bytes(hashlib.blake2b(raw, digest_size=8).digest(),
                          "big") >> 1


def run_experiment(base: SimConfig, rates: list, replications: int = 20,
                   steps: int | None = None) -> ExperimentResult:
    """Sweep migration rates under both policies.

    rates are fractions of the population moved per minute. Each
    replication gets an independent seed derived from the base seed; the
    two policies share a replication's initial placement and movement
    trace, so their metrics differ only by the serving policy.
    """
    steps = steps if steps is not None else base.steps
    rows = []
    summary = {}
    population = (base.users_per_capacity * int(sum(base.capacities))
                  * base.regions_count)
    for rate_idx, rate in enumerate(rates):
        moved = int(round(rate * population))
        for policy in (Policy.WITH_REGIONS, Policy.WITHOUT_REGIONS):
            cumulative = np.zeros((replications, steps + 1))
            ratios = np.zeros((replications, steps + 1))
            for rep in range(replications):
                rep_seed = derive_seed(base.seed, rate_idx, rep)
                cfg = SimConfig(regions_count=base.regions_count,
                                mecs_per_region=base.mecs_per_region,
                                capacities=base.capacities,
                                users_per_capacity=base.users_per_capacity,
                                steps=steps, migration_rate=moved,
                                policy=policy, seed=rep_seed)
                world = build_world(cfg)
                rng = np.random.default_rng([rep_seed, 0x30B5])
                metrics = [world.metrics()]
                for _ in range(steps):
                    metrics.append(step(world, rng))
                for m in metrics:
                    rows.append({"policy": policy.value, "rate": rate,
                                 "replication": rep, "step": m.t,
                                 "migrations": m.migrations,
                                 "cumulative_migrations":
                                     m.cumulative_migrations,
                                 "min_max_ratio": m.min_max_ratio})
                    cumulative[rep, m.t] = m.cumulative_migrations
                    ratios[rep, m.t] = m.min_max_ratio
            summary[(policy.value, rate)] = {
                "mean_cumulative": cumulative.mean(axis=0),
                "std_cumulative": cumulative.std(axis=0),
                "mean_ratio": ratios.mean(axis=0),
                "std_ratio": ratios.std(axis=0),
            }
    grid = build_grid(base)
    metadata = {
        "seed": base.seed,
        "regions_count": base.regions_count,
        "mecs_per_region": base.mecs_per_region,
        "capacities": list(base.capacities),
        "users_per_capacity": base.users_per_capacity,
        "population": population,
        "steps": steps,
        "replications": replications,
        "rates": list(rates),
        "grid_cells": len(grid.cells),
        "mecs": grid.mec_names,
    }
    return ExperimentResult(rows=rows, summary=summary, metadata=metadata)


CSV_HEADER = ["policy", "rate", "replication", "step", "migrations",
              "cumulative_migrations", "min_max_ratio"]


def write_rows_csv(path: str, rows: list) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_metadata(path: str, metadata: dict) -> None:
    with open(path, "w") as f:
        json.dump(metadata, f, indent=2, sort_keys=True)
        f.write("\n")
