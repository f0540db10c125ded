import numpy as np
import pytest

from gflow.core import ClassLabel
from gflow.errors import ConfigError
from gflow.synth import (
    BoxObject,
    CanopyObject,
    FlatTerrain,
    InclinedTerrain,
    SceneSpec,
    UndulatingTerrain,
    generate,
    mixed_preset,
    steep_forest_preset,
    urban_preset,
)


def test_flat_scene_no_objects():
    spec = SceneSpec(seed=1, extent=(20.0, 20.0), terrain=FlatTerrain(0.0),
                     ground_density=1.0, noise_sigma_z=0.0)
    cloud, terrain = generate(spec)
    assert np.all(cloud.labels == ClassLabel.GROUND)
    assert np.all(cloud.xyz[:, 2] == 0.0)
    assert float(terrain.elevation(3.0, 4.0)) == 0.0


def test_box_top_height():
    box = BoxObject(cx=10.0, cy=10.0, width=10.0, length=10.0, height=8.0)
    spec = SceneSpec(seed=2, extent=(20.0, 20.0), terrain=FlatTerrain(0.0),
                     objects=(box,), ground_density=1.0, noise_sigma_z=0.0)
    cloud, terrain = generate(spec)
    ng = cloud.labels == ClassLabel.NON_GROUND
    hag = cloud.xyz[ng, 2] - terrain.elevation(cloud.xyz[ng, 0], cloud.xyz[ng, 1])
    assert hag.max() == 8.0          # roof points sit exactly at the box height
    assert np.count_nonzero(hag == 8.0) > 10
    assert hag.min() > 0.0


def test_ground_occluded_under_box():
    box = BoxObject(cx=10.0, cy=10.0, width=10.0, length=10.0, height=5.0)
    spec = SceneSpec(seed=3, extent=(20.0, 20.0), terrain=FlatTerrain(0.0),
                     objects=(box,), ground_density=2.0, noise_sigma_z=0.0)
    cloud, _ = generate(spec)
    ground = cloud.labels == ClassLabel.GROUND
    inside = box.contains_xy(cloud.xyz[ground, 0], cloud.xyz[ground, 1])
    assert not inside.any()


def test_determinism_byte_identical():
    spec = mixed_preset(3)
    a, _ = generate(spec)
    b, _ = generate(mixed_preset(3))
    assert np.array_equal(a.xyz, b.xyz)
    assert np.array_equal(a.labels, b.labels)


def test_different_seeds_differ():
    a, _ = generate(mixed_preset(1))
    b, _ = generate(mixed_preset(2))
    assert a.xyz.shape != b.xyz.shape or not np.array_equal(a.xyz, b.xyz)


def test_label_soundness_nonground_above_terrain():
    for spec in (urban_preset(4), mixed_preset(4), steep_forest_preset(4)):
        cloud, terrain = generate(spec)
        ng = cloud.labels == ClassLabel.NON_GROUND
        tz = terrain.elevation(cloud.xyz[ng, 0], cloud.xyz[ng, 1])
        assert np.all(cloud.xyz[ng, 2] > tz)


def test_urban_preset_has_large_building():
    spec = urban_preset(7)
    big = [o for o in spec.objects if isinstance(o, BoxObject)
           and max(o.width, o.length) > 50.0]
    assert big
    assert isinstance(spec.terrain, FlatTerrain)


def test_mixed_preset_has_buildings_and_vegetation():
    spec = mixed_preset(5)
    assert any(isinstance(o, BoxObject) for o in spec.objects)
    assert any(isinstance(o, CanopyObject) for o in spec.objects)


def test_steep_forest_preset_thin_ground_under_canopy():
    spec = steep_forest_preset(5)
    assert spec.canopy_ground_density == 0.5
    assert spec.canopy_ground_density < 1.0
    assert isinstance(spec.terrain, InclinedTerrain)
    assert spec.terrain.slope_deg == 35.0
    cloud, _ = generate(spec)
    # Under-canopy ground density comes out below 1 pt/m^2.
    ground = cloud.labels == ClassLabel.GROUND
    gx, gy = cloud.xyz[ground, 0], cloud.xyz[ground, 1]
    area = 0.0
    count = 0
    for obj in spec.objects:
        inside = obj.contains_xy(gx, gy)
        count += int(inside.sum())
        area += np.pi * obj.radius ** 2
    assert count / area < 1.0


def test_understory_points_in_expected_band():
    canopy = CanopyObject(cx=10.0, cy=10.0, radius=5.0, height=12.0,
                          understory_density=2.0)
    spec = SceneSpec(seed=6, extent=(20.0, 20.0), terrain=FlatTerrain(0.0),
                     objects=(canopy,), ground_density=1.0, noise_sigma_z=0.0)
    cloud, terrain = generate(spec)
    ng = cloud.labels == ClassLabel.NON_GROUND
    hag = cloud.xyz[ng, 2] - terrain.elevation(cloud.xyz[ng, 0], cloud.xyz[ng, 1])
    low = hag[hag <= 3.0]
    assert low.size > 0
    assert low.min() >= 0.2 - 1e-9


def test_terrain_families():
    incline = InclinedTerrain(slope_deg=45.0, azimuth_deg=0.0)
    assert float(incline.elevation(1.0, 0.0)) == pytest.approx(1.0, abs=1e-12)
    undul = UndulatingTerrain(amplitude=2.0, wavelength=40.0)
    z = undul.elevation(np.array([10.0]), np.array([10.0]))
    assert abs(z[0]) <= 2.0
    with pytest.raises(ConfigError):
        InclinedTerrain(slope_deg=75.0)
    with pytest.raises(ConfigError):
        UndulatingTerrain(amplitude=1.0, wavelength=0.0)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SceneSpec(seed=1, extent=(0.0, 10.0), terrain=FlatTerrain())
    with pytest.raises(ConfigError):
        SceneSpec(seed=1, extent=(10.0, 10.0), terrain=FlatTerrain(),
                  ground_density=0.0)
    with pytest.raises(ConfigError):
        BoxObject(cx=0, cy=0, width=-1.0, length=1.0, height=1.0)
