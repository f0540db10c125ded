import numpy as np
import pytest

from gflow.errors import ConfigError
from gflow.voxelgrid import project_to_central, snap_origin, voxelize


def test_two_close_points_share_a_cell():
    pts = np.array([[0.1, 0.1, 0.1], [0.2, 0.1, 0.1]])
    grid = voxelize(pts, 0.5)
    assert grid.n_cells == 1
    assert grid.cell_count[0] == 2


def test_two_far_points_get_own_cells():
    pts = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
    grid = voxelize(pts, 0.5)
    assert grid.n_cells == 2
    assert grid.cell_count.tolist() == [1, 1]


def test_conservation_against_brute_force():
    rng = np.random.default_rng(31)
    pts = rng.uniform(-20, 20, size=(1000, 3))
    grid = voxelize(pts, 0.5)
    assert int(grid.cell_count.sum()) == 1000
    # Brute-force recount per key with a dict.
    origin = grid.origin
    tally = {}
    for p in pts:
        key = tuple(int(np.floor((c - o) / 0.5)) for c, o in zip(p, origin))
        tally[key] = tally.get(key, 0) + 1
    assert len(tally) == grid.n_cells
    for key, feats in grid.cells.items():
        assert tally[key] == feats.count


def test_cell_statistics_exact():
    # Cells are cubes: keep z within one 1 m slab to share a cell.
    pts = np.array([
        [0.1, 0.1, 0.25],
        [0.2, 0.2, 0.75],
        [0.3, 0.1, 0.50],
    ])
    grid = voxelize(pts, 1.0)
    assert grid.n_cells == 1
    feats = next(iter(grid.cells.values()))
    assert feats.count == 3
    assert feats.min_z == 0.25
    assert feats.max_z == 0.75
    assert feats.mean_z == 0.5


def test_idempotent_keys():
    rng = np.random.default_rng(37)
    pts = rng.uniform(0, 30, size=(500, 3))
    grid = voxelize(pts, 0.5)
    reps = grid.origin + (grid.cell_keys + 0.5) * 0.5
    again = voxelize(reps, 0.5, origin=grid.origin)
    assert np.array_equal(np.unique(grid.cell_keys, axis=0),
                          np.unique(again.cell_keys, axis=0))


def test_every_point_maps_to_occupied_cell():
    rng = np.random.default_rng(41)
    pts = rng.uniform(-5, 5, size=(200, 3))
    grid = voxelize(pts, 0.5)
    assert grid.point_cell.min() >= 0
    assert grid.point_cell.max() < grid.n_cells
    assert grid.point_to_voxel.shape == (200, 3)


def test_invalid_voxel_size():
    with pytest.raises(ConfigError):
        voxelize(np.zeros((1, 3)), 0.0)


def test_projection_empty_mask():
    pts = np.random.default_rng(1).uniform(0, 1, size=(10, 3))
    grid = voxelize(pts, 0.5)
    out = project_to_central(grid, np.zeros(10, dtype=bool))
    assert out.shape == (0, 4)


def test_projection_lone_central_point():
    pts = np.array([[0.1, 0.1, 7.5]])
    grid = voxelize(pts, 0.5)
    out = project_to_central(grid, np.array([True]))
    assert out.shape == (1, 4)
    assert out[0, 0] == 1.0
    assert out[0, 1] == 7.5


def test_projection_shared_voxel_aggregates_periphery():
    # One central point in a voxel with three peripheral points: the voxel
    # statistics cover all four, but only the central row comes back.
    pts = np.array([
        [0.10, 0.10, 1.0],   # central
        [0.20, 0.12, 2.0],
        [0.12, 0.20, 3.0],
        [0.21, 0.21, 6.0],
    ])
    mask = np.array([True, False, False, False])
    grid = voxelize(pts, 10.0)
    assert grid.n_cells == 1
    out = project_to_central(grid, mask)
    assert out.shape == (1, 4)
    assert out[0, 0] == 4.0
    assert out[0, 1] == 3.0     # mean over all four
    assert out[0, 2] == 1.0
    assert out[0, 3] == 6.0


def test_projection_restriction_index_set():
    rng = np.random.default_rng(43)
    pts = rng.uniform(0, 10, size=(300, 3))
    mask = rng.uniform(size=300) < 0.3
    grid = voxelize(pts, 2.0)
    out = project_to_central(grid, mask)
    assert out.shape == (int(mask.sum()), 4)
    expected_counts = grid.cell_count[grid.point_cell[mask]]
    assert np.array_equal(out[:, 0], expected_counts.astype(float))


def test_mask_length_mismatch():
    grid = voxelize(np.zeros((3, 3)), 0.5)
    with pytest.raises(ConfigError):
        project_to_central(grid, np.array([True]))


def test_snap_origin_lattice_aligned():
    pts = np.array([[1.3, -0.7, 2.9]])
    origin = snap_origin(pts, 0.5)
    assert origin.tolist() == [1.0, -1.0, 2.5]
