import csv

import numpy as np
import pytest

from corridor_opt.channel import BaseStation
from corridor_opt.gradcheck import random_state
from corridor_opt.objectives import LinkBudget, ObjectiveKind, ObjectiveSpec, dbm_to_mw
from corridor_opt.partition import (
    Partition,
    assign_best_rss,
    candidate_metrics,
    export_partition_csv,
    random_partition,
    rss_table,
    verify_partition_optimality,
)
from corridor_opt.scenario import GROUND, Deployment, SampleSet

NOISE = dbm_to_mw(-104.0)


def specs(sigma2=NOISE):
    return [
        ObjectiveSpec(ObjectiveKind.RSS, sigma2),
        ObjectiveSpec(ObjectiveKind.SINR, sigma2),
        ObjectiveSpec(ObjectiveKind.MP, sigma2, mu=0.1, nu=0.1),
        ObjectiveSpec(ObjectiveKind.SM, sigma2, alpha=1.0, nu=0.5, xi=0.5),
    ]


def brute_force_rss(samples, dep):
    """RSS table through the scalar channel API, one pair at a time."""
    from corridor_opt.channel import GUE_LOS, GUE_NLOS, UAV_LOS, Point3D, rss_dbm

    out = np.empty((len(samples), len(dep)))
    for q in range(len(samples)):
        pt = Point3D(tuple(samples.xy[q]), samples.height[q])
        for n, bs in enumerate(dep.base_stations):
            if not samples.is_ground[q]:
                link = UAV_LOS
            else:
                link = GUE_LOS if samples.los is not None and samples.los[q, n] else GUE_NLOS
            out[q, n] = rss_dbm(bs, dep.pattern, pt, link)
    return out


def test_mirror_pair_splits_by_tie_break():
    a = BaseStation(1, (-100.0, 0.0), 25.0, 0.0)
    b = BaseStation(2, (100.0, 0.0), 25.0, 180.0)
    dep = Deployment((a, b))
    rng = np.random.default_rng(0)
    half = rng.uniform([-400, -300], [-1, 300], (20, 2))
    mirrored = half * [-1.0, 1.0]
    bisector = np.column_stack([np.zeros(5), np.linspace(-200, 200, 5)])
    xy = np.vstack([half, mirrored, bisector])
    n = len(xy)
    s = SampleSet(xy, np.full(n, 1.5), np.full(n, 1.0 / n), np.full(n, GROUND))
    got = assign_best_rss(s, dep).assignment
    # mirror images swap servers; exact ties on the bisector go to index 0
    np.testing.assert_array_equal(got[:20], 1 - got[20:40])
    assert np.all(got[40:] == 0)
    table = rss_table(s, dep)
    strict = table[:, 0] != table[:, 1]
    np.testing.assert_array_equal(got[strict], table[strict].argmax(axis=1))


def test_dominant_power_takes_every_point():
    # co-sited sectors share pathloss and elevation; only the horizontal
    # pattern (at most 92 dB apart) separates them
    from corridor_opt.scenario import build_hex_deployment

    dep = build_hex_deployment(rings=0, rho_max=200.0)
    rng = np.random.default_rng(2)
    xy = rng.uniform(-500, 500, (200, 2))
    s = SampleSet(xy, np.full(200, 1.5), np.full(200, 1 / 200), np.full(200, GROUND))
    for m in range(3):
        powers = np.full(3, 43.0)
        powers[m] += 100.0
        assert np.all(assign_best_rss(s, dep.configured(powers=powers)).assignment == m)


@pytest.mark.parametrize("seed", range(5))
def test_assignment_matches_brute_force_argmax(seed):
    state = random_state(np.random.default_rng(seed))
    table = brute_force_rss(state.samples, state.deployment)
    np.testing.assert_allclose(rss_table(state.samples, state.deployment), table, rtol=0, atol=1e-9)
    np.testing.assert_array_equal(assign_best_rss(state.samples, state.deployment).assignment, table.argmax(axis=1))


@pytest.mark.parametrize("seed", range(20))
def test_best_rss_partition_is_optimal_for_every_objective(seed):
    rng = np.random.default_rng(50 + seed)
    state = random_state(rng, sigma2=NOISE)
    p = assign_best_rss(state.samples, state.deployment)
    for spec in specs():
        assert verify_partition_optimality(p, state.samples, state.deployment, spec)


def test_misassigned_point_is_detected():
    state = random_state(np.random.default_rng(7), sigma2=NOISE)
    table = rss_table(state.samples, state.deployment)
    a = table.argmax(axis=1).copy()
    a[0] = int(np.argmin(table[0]))  # strictly weaker server
    for spec in specs():
        assert not verify_partition_optimality(Partition(a), state.samples, state.deployment, spec)


def test_single_bs_any_partition_is_optimal():
    dep = Deployment((BaseStation(1, (0.0, 0.0), 25.0, 0.0),))
    s = SampleSet(np.array([[10.0, 5.0], [300.0, -20.0]]), np.full(2, 1.5), np.full(2, 0.5), np.full(2, GROUND))
    for spec in specs():
        assert verify_partition_optimality(Partition([0, 0]), s, dep, spec)


@pytest.mark.parametrize("seed", range(10))
def test_sinr_argmax_equals_rss_argmax(seed):
    state = random_state(np.random.default_rng(300 + seed), sigma2=NOISE)
    table = rss_table(state.samples, state.deployment)
    sinr = candidate_metrics(ObjectiveSpec(ObjectiveKind.SINR, NOISE), table)
    np.testing.assert_array_equal(sinr.argmax(axis=1), table.argmax(axis=1))


def test_candidate_sinr_matches_direct_formula():
    state = random_state(np.random.default_rng(11), sigma2=NOISE)
    table = rss_table(state.samples, state.deployment)
    lin = 10 ** (table / 10)
    direct = table - 10 * np.log10(lin.sum(axis=1, keepdims=True) - lin + NOISE)
    np.testing.assert_allclose(candidate_metrics(ObjectiveSpec(ObjectiveKind.SINR, NOISE), table), direct, atol=1e-9)


def test_common_power_shift_keeps_assignment():
    state = random_state(np.random.default_rng(12))
    dep = state.deployment
    shifted = Deployment(dep.base_stations, dep.pattern, rho_max=100.0).configured(powers=dep.powers + 17.5)
    np.testing.assert_array_equal(assign_best_rss(state.samples, dep).assignment, assign_best_rss(state.samples, shifted).assignment)


def test_idempotent_and_generations_increase():
    state = random_state(np.random.default_rng(13))
    p1 = assign_best_rss(state.samples, state.deployment)
    p2 = assign_best_rss(state.samples, state.deployment, LinkBudget(state.samples, state.deployment))
    np.testing.assert_array_equal(p1.assignment, p2.assignment)
    assert p2.generation > p1.generation
    with pytest.raises(ValueError):
        p1.assignment[0] = 1


def test_random_partition_is_seeded():
    np.testing.assert_array_equal(random_partition(100, 7, 3).assignment, random_partition(100, 7, 3).assignment)
    a = random_partition(10_000, 7, 4).assignment
    assert a.min() == 0 and a.max() == 6


def test_cell_mass():
    p = Partition([0, 2, 2, 0])
    np.testing.assert_allclose(p.cell_mass(np.array([0.1, 0.2, 0.3, 0.4]), 4), [0.5, 0.0, 0.5, 0.0])


def test_export_round_trip(tmp_path):
    state = random_state(np.random.default_rng(14))
    p = assign_best_rss(state.samples, state.deployment)
    path = tmp_path / "partition.csv"
    export_partition_csv(path, p, state.samples, state.deployment)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["x", "y", "z", "region_tag", "weight", "bs_index"]
    assert [int(r["bs_index"]) - 1 for r in rows] == list(p.assignment)
    np.testing.assert_allclose([float(r["x"]) for r in rows], state.samples.xy[:, 0], rtol=1e-8)
    assert {r["region_tag"] for r in rows} <= {"ground", "corridor"}
