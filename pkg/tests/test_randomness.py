import math

import numpy as np
import pytest

from affdim.errors import DomainError, InvalidWordError
from affdim.ifs import index_to_words
from affdim.randomness import (
    PerturbationField,
    TailCertificate,
    borel_cantelli_check,
    make_distribution,
    perturbation,
    perturbations_along,
    perturbations_at,
    perturbations_batch,
    tail_probability_bound,
)


def gaussian(sigma=1.0, dim=2):
    return make_distribution("gaussian", dim, sigma=sigma)


def test_distribution_validation():
    with pytest.raises(DomainError):
        make_distribution("cauchy", 2)
    with pytest.raises(DomainError):
        make_distribution("gaussian", 2, sigma=0.0)
    with pytest.raises(DomainError):
        make_distribution("uniform-ball", 2, radius=-1.0)


def test_ball_tail_bound():
    ball = make_distribution("uniform-ball", 2, radius=1.0)
    assert tail_probability_bound(ball, 2.0) == 0.0
    assert tail_probability_bound(ball, 0.5) == 1.0


def test_gaussian_tail_bound():
    dist = gaussian(1.0)
    assert tail_probability_bound(dist, 1.0) == 1.0
    assert tail_probability_bound(dist, 3.0) == pytest.approx(math.exp(-((3 - math.sqrt(2)) ** 2) / 2))
    with pytest.raises(DomainError):
        tail_probability_bound(dist, 0.0)


def test_tail_bound_dominates_samples():
    field = PerturbationField(3, gaussian(0.05))
    words = index_to_words(np.arange(20000), 10, 3)
    norms = np.linalg.norm(perturbations_at(field, words), axis=1)
    for t in (0.1, 0.15, 0.2):
        assert np.mean(norms > t) <= tail_probability_bound(field.dist, t) + 0.01


def test_moment_profiles():
    assert all(TailCertificate(gaussian()).polynomial_decay_holds(k) for k in range(1, 11))
    assert all(TailCertificate(make_distribution("laplace", 2, b=0.5)).polynomial_decay_holds(k)
               for k in range(1, 11))
    student = TailCertificate(make_distribution("student-t", 2, nu=3.0))
    assert not student.polynomial_decay_holds(5)
    ts, profile = student.moment_profile(5)
    assert profile[-1] > profile[len(profile) // 2]
    assert student.polynomial_decay_holds(2)


def test_projection_bounds():
    assert gaussian(1.0).projection_bound == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert make_distribution("uniform-ball", 2, radius=1.0).projection_bound == pytest.approx(2 / math.pi)
    assert make_distribution("laplace", 2, b=1.0).projection_bound == pytest.approx(0.5 * math.sqrt(2))
    assert make_distribution("gaussian", 2, sigma=1.0, projection_override=3.0).projection_bound == 3.0


def test_unperturbed_field_is_zero():
    field = PerturbationField(5, make_distribution("uniform-ball", 2, radius=0.0))
    assert np.all(perturbation(field, (0, 1, 2)) == 0.0)
    assert np.all(perturbations_batch(field, np.zeros((4, 6), dtype=int)) == 0.0)


def test_last_symbol_model_ties_words():
    field = PerturbationField(9, gaussian(), model="last-symbol")
    np.testing.assert_array_equal(perturbation(field, (0, 1, 2)), perturbation(field, (2, 0, 2)))
    full = PerturbationField(9, gaussian())
    assert not np.array_equal(perturbation(full, (0, 1, 2)), perturbation(full, (2, 0, 2)))


def test_field_is_reproducible():
    field = PerturbationField(123, gaussian())
    word = (1, 0, 2, 2, 1)
    first = perturbation(field, word)
    np.testing.assert_array_equal(first, perturbation(field, word))
    np.testing.assert_array_equal(first, perturbations_along(field, word)[-1])
    np.testing.assert_array_equal(first, perturbations_at(field, np.array([word]))[0])
    np.testing.assert_array_equal(first, perturbations_batch(field, np.array([word]))[0, -1])
    other = field.with_seed(124)
    assert not np.array_equal(first, perturbation(other, word))


def test_batch_rows_follow_their_seeds():
    field = PerturbationField(1, gaussian())
    words = np.array([[0, 1, 2], [0, 1, 2]])
    out = perturbations_batch(field, words, seeds=[5, 6])
    np.testing.assert_array_equal(out[0], perturbations_along(field.with_seed(5), (0, 1, 2)))
    np.testing.assert_array_equal(out[1], perturbations_along(field.with_seed(6), (0, 1, 2)))


def test_last_symbol_batch_matches_single():
    field = PerturbationField(4, gaussian(), model="last-symbol")
    words = np.array([[0, 2, 1, 1], [1, 1, 0, 2]])
    out = perturbations_batch(field, words)
    for b, row in enumerate(words):
        for r in range(words.shape[1]):
            np.testing.assert_array_equal(out[b, r], perturbation(field, tuple(row[:r + 1])))


def test_shifted_field():
    field = PerturbationField(77, gaussian())
    np.testing.assert_array_equal(perturbation(field.shifted((2,)), (0, 1)),
                                  perturbation(field, (2, 0, 1)))


def test_empty_word_rejected():
    with pytest.raises(InvalidWordError):
        perturbation(PerturbationField(0, gaussian()), ())


def test_gaussian_moments():
    field = PerturbationField(2024, gaussian(1.0))
    words = index_to_words(np.arange(100000), 11, 3)
    x = perturbations_at(field, words)
    assert np.all(np.abs(x.mean(axis=0)) <= 4 / math.sqrt(len(x)))
    np.testing.assert_allclose(np.cov(x.T), np.eye(2), atol=0.05)
    siblings = words.copy()
    siblings[:, -1] = (siblings[:, -1] + 1) % 3
    y = perturbations_at(field, siblings)
    assert abs(np.corrcoef(x[:, 0], y[:, 0])[0, 1]) < 5 / math.sqrt(len(x))


def test_laplace_variance():
    field = PerturbationField(8, make_distribution("laplace", 2, b=0.5))
    x = perturbations_at(field, index_to_words(np.arange(50000), 10, 3))
    np.testing.assert_allclose(x.var(axis=0), 2 * 0.25, rtol=0.05)


def test_ball_samples_stay_inside():
    field = PerturbationField(8, make_distribution("uniform-ball", 3, radius=0.2))
    x = perturbations_at(field, index_to_words(np.arange(5000), 8, 3))
    assert np.all(np.linalg.norm(x, axis=1) <= 0.2)
    assert np.all(np.abs(x.mean(axis=0)) < 0.01)


def test_borel_cantelli_theta_range(sierpinski):
    with pytest.raises(DomainError):
        borel_cantelli_check(PerturbationField(0, gaussian()), sierpinski, 0.4)


def test_borel_cantelli_bounded_support(sierpinski):
    field = PerturbationField(0, make_distribution("uniform-ball", 2, radius=1.0))
    report = borel_cantelli_check(field, sierpinski, 0.8, range(1, 11), samples_per_level=500)
    assert all(lv.union_bound == 0.0 and lv.exceedances == 0 for lv in report.levels)
    assert report.series_converges


def test_borel_cantelli_gaussian(sierpinski):
    field = PerturbationField(31, gaussian(1.0))
    report = borel_cantelli_check(field, sierpinski, 0.8, range(1, 41), samples_per_level=2000)
    assert report.admissible
    assert report.series_converges
    assert report.k == 5
    assert report.ratio == pytest.approx(3 * 0.8 ** 5)
    assert report.cauchy_gap <= 1e-12
    by_level = {lv.n: lv for lv in report.levels}
    assert by_level[10].exceedances == 0
    assert by_level[15].exceedances == 0
    assert by_level[5].empirical_frequency < 0.05
    assert by_level[5].enumerated


def test_borel_cantelli_student_t(sierpinski):
    field = PerturbationField(31, make_distribution("student-t", 2, nu=3.0))
    report = borel_cantelli_check(field, sierpinski, 0.8, range(1, 21), samples_per_level=500)
    assert not report.admissible
    assert not report.series_converges
    assert report.warnings
    relaxed = borel_cantelli_check(PerturbationField(31, field.dist, model="last-symbol"),
                                   sierpinski, 0.8, range(1, 21), samples_per_level=500)
    assert relaxed.series_converges
    assert relaxed.relaxed_admissible
    assert relaxed.ratio == pytest.approx(0.8 ** 3)
