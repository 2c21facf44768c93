import json
import math

import numpy as np
import pytest

from corridor_opt.objectives import ObjectiveKind, ObjectiveSpec, eval_objective
from corridor_opt.partition import assign_best_rss
from corridor_opt.scenario import (
    Corridor,
    Rect,
    RegionSpec,
    ScenarioError,
    build_hex_deployment,
    build_sample_grid,
    build_samples,
    case_study_regions,
    hex_sites,
    load_scenario,
    parse_scenario,
)


def test_case_study_layout():
    dep = build_hex_deployment(rings=2, isd=500.0)
    assert len(dep) == 57
    sites = hex_sites(2, 500.0)
    assert len(sites) == 19
    np.testing.assert_array_equal(sites[0], [0.0, 0.0])
    assert {bs.azimuth for bs in dep.base_stations} == {0.0, 120.0, -120.0}
    # BS n = 3(k-1)+s: sectors of a site are consecutive, azimuths in order
    for k in range(19):
        trio = dep.base_stations[3 * k : 3 * k + 3]
        assert [b.azimuth for b in trio] == [0.0, 120.0, -120.0]
        assert len({b.position for b in trio}) == 1
        assert [b.id for b in trio] == [3 * k + 1, 3 * k + 2, 3 * k + 3]
    assert np.all(dep.heights == 25.0) and np.all(dep.powers == 43.0)


def test_center_only_layout():
    dep = build_hex_deployment(rings=0)
    assert len(dep) == 3
    np.testing.assert_array_equal(dep.positions, np.zeros((3, 2)))


def test_first_ring_distance():
    sites = hex_sites(1, 500.0)
    assert len(sites) == 7
    np.testing.assert_allclose(np.hypot(*sites[1:].T), 500.0, rtol=0, atol=1e-9)


def test_layout_has_sixfold_symmetry():
    sites = hex_sites(2, 500.0)
    c, s = math.cos(math.pi / 3), math.sin(math.pi / 3)
    rotated = sites @ np.array([[c, s], [-s, c]])
    # every rotated site coincides with some original site
    d = np.linalg.norm(rotated[:, None, :] - sites[None, :, :], axis=2)
    assert np.all(d.min(axis=1) < 1e-9)


@pytest.mark.parametrize("r", [0.0, 0.3, 0.5, 1.0])
def test_weights_normalized(r):
    s = build_sample_grid(case_study_regions(r))
    assert abs(math.fsum(s.weight) - 1.0) < 1e-12
    assert np.all(s.weight > 0)


def test_degenerate_mixtures():
    ground_only = build_sample_grid(case_study_regions(1.0))
    assert ground_only.is_ground.all()
    uav_only = build_sample_grid(case_study_regions(0.0))
    assert not uav_only.is_ground.any()


def test_case_study_mass_split():
    regions = case_study_regions(0.5)
    s = build_sample_grid(regions)
    assert math.fsum(s.weight[s.is_ground]) == pytest.approx(0.5, abs=1e-12)
    total_area = sum(c.rect.area for c in regions.corridors)
    for u, c in enumerate(regions.corridors):
        assert math.fsum(s.weight[s.region == u]) == pytest.approx(0.5 * c.rect.area / total_area, abs=1e-12)
    # 25 m ground cells, 10 m corridor cells
    assert s.is_ground.sum() == 60 * 60
    assert (~s.is_ground).sum() == 4 * 4 * 200


def test_points_inside_their_regions():
    regions = case_study_regions(0.5)
    s = build_sample_grid(regions, ground_step=33.0, corridor_step=7.0)
    assert regions.ground.contains(s.xy[s.is_ground]).all()
    for u, c in enumerate(regions.corridors):
        sel = s.region == u
        assert c.rect.contains(s.xy[sel]).all()
        assert np.all(s.height[sel] == c.height)


def test_grid_refinement_is_cauchy():
    dep = build_hex_deployment(rings=1)
    dep = dep.configured(tilts=np.linspace(-15, 10, len(dep)), powers=np.linspace(20, 43, len(dep)))
    spec = ObjectiveSpec(ObjectiveKind.SINR)
    values = []
    for k in range(4):
        s = build_sample_grid(case_study_regions(0.5), ground_step=100.0 / 2**k, corridor_step=40.0 / 2**k)
        values.append(eval_objective(spec, assign_best_rss(s, dep), s, dep))
    diffs = np.abs(np.diff(values))
    assert np.all(np.diff(diffs) < 0), values


def test_samples_with_probabilistic_los():
    dep = build_hex_deployment(rings=1)
    regions = case_study_regions(0.5, los_model="probabilistic", ground_step=100.0, corridor_step=40.0)
    s = build_samples(regions, dep, seed=5)
    assert s.los.shape == (len(s), len(dep))
    assert s.los[~s.is_ground].all()
    assert 0 < s.los[s.is_ground].mean() < 1
    np.testing.assert_array_equal(s.los, build_samples(regions, dep, seed=5).los)


def test_region_validation():
    ground = Rect(-10, 10, -10, 10)
    with pytest.raises(ValueError):
        RegionSpec(ground, mixing_ratio=1.5)
    with pytest.raises(ValueError):
        RegionSpec(ground, corridors=(Corridor("a", ground, 100), Corridor("a", ground, 120)))
    with pytest.raises(ValueError):
        Rect(0, 0, 0, 1)


# -- scenario files ---------------------------------------------------------


def test_minimal_file_takes_case_study_defaults(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"algorithm": "max-rss-vat"}))
    sc = load_scenario(path)
    assert len(sc.deployment) == 57
    assert sc.deployment.pattern.theta_3db == 10.0
    assert sc.deployment.pattern.phi_3db == 65.0
    assert sc.deployment.pattern.a_max == 14.0
    assert sc.deployment.rho_max == 43.0
    assert np.linalg.norm(hex_sites(1, 500.0)[1]) == pytest.approx(500.0)
    assert sc.objective.kind is ObjectiveKind.RSS
    assert sc.optimizer.eta0_theta == 0.01 and sc.optimizer.kappa == 0.999 and sc.optimizer.eps1 == 1e-8
    assert sc.regions.mixing_ratio == 0.5 and len(sc.regions.corridors) == 4


@pytest.mark.parametrize(
    "data, field",
    [
        ({"regions": {"mixing_ratio": 1.5}}, "regions.mixing_ratio"),
        ({"regions": {"corridors": [{"name": "a", "x": [0, 10], "y": [0, 10]}, {"name": "a", "x": [0, 10], "y": [0, 10]}]}}, "regions.corridors[1].name"),
        ({"deployment": {"isd": "far"}}, "deployment.isd"),
        ({"deployment": {"colour": 1}}, "deployment.colour"),
        ({"bogus": 1}, "bogus"),
        ({"algorithm": "gradient-descent"}, "algorithm"),
        ({"optimizer": {"kappa": 2}}, "optimizer"),
        ({"objective": {"xi": 1.5}}, "objective"),
        ({"regions": {"ground_step": 0}}, "regions.ground_step"),
    ],
)
def test_invalid_scenarios_name_the_field(data, field):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(data)
    assert info.value.field == field


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(bad)
