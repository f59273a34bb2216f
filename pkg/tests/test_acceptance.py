"""Desk-scale runs at the full sizes. Deselect with ``-m "not slow"``."""
import math

import numpy as np
import pytest
from scipy.stats import ortho_group

from affdim.attractor import ProjectionConfig, cylinder_diameter_bound, falconer_weights, generate_cloud
from affdim.dimension import affinity_dimension, sk_sequence
from affdim.estimators import (
    box_count,
    covering_sequence,
    energy_constant_factor,
    energy_estimate,
    occupancy,
    transversality_check,
)
from affdim.linalg import singular_values, svf
from affdim.randomness import PerturbationField, borel_cantelli_check, make_distribution
from tests.conftest import LOG3_LOG2, build, random_contraction

pytestmark = pytest.mark.slow


def gaussian_field(seed, sigma=0.05):
    return PerturbationField(seed, make_distribution("gaussian", 2, sigma=sigma))


@pytest.fixture
def five_halves():
    half = np.diag([0.5, 0.5])
    corners = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5), (0.25, 0.25)]
    return build([(half, c) for c in corners])


def test_random_similarities(rng):
    checked = 0
    while checked < 20:
        d = int(rng.integers(2, 4))
        m = int(rng.integers(2, 6))
        r = float(rng.uniform(0.2, 0.6))
        expected = math.log(m) / math.log(1 / r)
        if expected > d:
            continue
        maps = [(r * ortho_group.rvs(d, random_state=rng), rng.normal(size=d)) for _ in range(m)]
        result = affinity_dimension(build(maps), tol=1e-6, n_max=6)
        assert abs(result.value - expected) <= 2e-3
        checked += 1


def test_equal_diagonals(rng):
    checked = 0
    while checked < 10:
        m = int(rng.integers(2, 7))
        a, b = sorted(rng.uniform(0.1, 0.6, size=2), reverse=True)
        if m * a <= 1:
            expected = math.log(m) / math.log(1 / a)
        else:
            expected = 1 + math.log(m * a) / math.log(1 / b)
        if expected > 2:
            continue
        maps = [(np.diag([a, b]), [float(i), 0.0]) for i in range(m)]
        assert abs(affinity_dimension(build(maps), tol=1e-6, n_max=6).value - expected) <= 2e-3
        checked += 1


def test_svf_inequalities_at_scale(rng):
    for _ in range(10000):
        d = int(rng.integers(2, 4))
        a, b = random_contraction(rng, d), random_contraction(rng, d)
        sa, sb, sab = singular_values(a), singular_values(b), singular_values(a @ b)
        for s in np.linspace(2 * d / 9, 2 * d, 9):
            assert svf(sab, s) <= svf(sa, s) * svf(sb, s) * (1 + 1e-9) + 1e-12
        for s in np.linspace(0.0, d - 1, 5):
            assert svf(sa, s + 1) <= sa.top * svf(sa, s) * (1 + 1e-9)
        for h in rng.uniform(0.01, 2.0, size=3):
            s = float(rng.uniform(0, d))
            assert svf(sa, s + h) <= svf(sa, s) * sa.top ** h * (1 + 1e-9)


def test_unperturbed_box_dimension(sierpinski):
    still = PerturbationField(0, make_distribution("uniform-ball", 2, radius=0.0))
    cloud = generate_cloud(sierpinski, still, ProjectionConfig(truncation_tol=1e-9), 1000000, seed=1)
    assert box_count(cloud).estimate == pytest.approx(LOG3_LOG2, abs=0.05)


@pytest.mark.parametrize("sigma", [0.01, 0.1])
def test_perturbed_box_dimension(sierpinski, sigma):
    close = 0
    for seed in range(5):
        cloud = generate_cloud(sierpinski, gaussian_field(seed, sigma=sigma), ProjectionConfig(truncation_tol=1e-9),
                               200000, seed=seed)
        close += abs(box_count(cloud).estimate - LOG3_LOG2) <= 0.15
    assert close >= 4


def test_random_cylinder_diameters(sierpinski, rng):
    theta = 0.9
    field = gaussian_field(31)
    for k in range(50):
        n = int(rng.integers(4, 9))
        word = tuple(int(i) for i in rng.integers(0, sierpinski.m, size=n))
        cloud = generate_cloud(sierpinski, field, None, 1000, seed=k, prefix=word)
        pts = cloud.points
        spread = np.max(np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2))
        assert spread <= cylinder_diameter_bound(sierpinski, theta, n, word)


def test_positive_area_above_dimension_two(five_halves):
    assert affinity_dimension(five_halves, tol=1e-4).value > 2
    plateaus = 0
    for seed in range(5):
        cloud = generate_cloud(five_halves, gaussian_field(seed), ProjectionConfig(truncation_tol=1e-6),
                               500000, seed=seed)
        plateaus += occupancy(cloud).plateau
    assert plateaus >= 4


def test_borel_cantelli_full_levels(sierpinski):
    report = borel_cantelli_check(gaussian_field(5, sigma=0.5), sierpinski, 0.8, range(1, 41),
                                  samples_per_level=10000)
    assert report.series_converges
    assert report.cauchy_gap <= 1e-12
    levels = {lv.n: lv for lv in report.levels}
    assert [levels[n].exceedances for n in (5, 10, 15)] == [0, 0, 0]
    student = PerturbationField(5, make_distribution("student-t", 2, nu=3.0))
    assert not borel_cantelli_check(student, sierpinski, 0.8, range(1, 21), 1000).admissible


def test_transversality_random_pairs(rng):
    spec = build([(random_contraction(rng, 2, 0.2, 0.45), rng.normal(size=2)) for _ in range(3)])
    field = gaussian_field(17)
    grid = np.geomspace(1e-3, 1.0, 8)
    for k in range(20):
        i = tuple(int(v) for v in rng.integers(0, 3, size=int(rng.integers(1, 4))))
        j = tuple(int(v) for v in rng.integers(0, 3, size=int(rng.integers(1, 4))))
        if i == j:
            continue
        report = transversality_check(spec, field, i, j, grid, 10000, base_seed=k)
        assert report.passed


def test_energy_bound(sierpinski):
    assert energy_constant_factor(1.5) == 4.0
    measure = falconer_weights(sierpinski, 1.45, 4)
    est = energy_estimate(sierpinski, gaussian_field(23), measure, 1.3, pairs=100000, seed=23)
    assert est.bound_converged
    assert est.within_bound


def test_covering_and_sk_sequence(sierpinski):
    thetas = [0.9, 0.99, 0.999]
    s_list = sk_sequence(sierpinski, thetas, tol=1e-9)
    assert s_list == pytest.approx([math.log(3 / th ** 2) / math.log(2) for th in thetas], abs=1e-8)
    s = math.log(3 / 0.81) / math.log(2)
    values = [c.value for c in covering_sequence(sierpinski, 0.9, s, range(1, 11))]
    assert max(values) == pytest.approx(min(values), rel=1e-9)
