import math

import numpy as np
import pytest
from scipy.stats import ortho_group

from affdim.errors import DomainError, InvalidMatrixError, InvalidWordError
from affdim.linalg import singular_values, spectra, svf, word_product
from tests.conftest import random_contraction


def test_singular_values_closed_form():
    sv = singular_values([[0.5, 0.3], [0.0, 0.4]])
    assert sv.values[0] == pytest.approx(math.sqrt(0.4), rel=1e-12)
    assert sv.values[1] == pytest.approx(math.sqrt(0.1), rel=1e-12)


def test_singular_values_identity_and_diagonal():
    assert singular_values(np.eye(3)).values == pytest.approx((1.0, 1.0, 1.0), rel=1e-12)
    assert singular_values([[0.2, 0.0], [0.0, 0.5]]).values == pytest.approx((0.5, 0.2), rel=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_spectra_match_eigenvalues_of_gram_matrix(rng, d):
    mats = np.stack([random_contraction(rng, d) for _ in range(50)])
    got = spectra(mats)
    for mat, vals in zip(mats, got):
        expected = np.sqrt(np.sort(np.linalg.eigvalsh(mat.T @ mat))[::-1].clip(min=0))
        np.testing.assert_allclose(vals, expected, rtol=1e-9, atol=1e-14)
        assert np.all(np.diff(vals) <= 0)


def test_rejects_bad_matrices():
    with pytest.raises(InvalidMatrixError):
        singular_values([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    with pytest.raises(InvalidMatrixError):
        singular_values([[float("nan"), 0.0], [0.0, 1.0]])


@pytest.mark.parametrize("s,expected", [
    (0.0, 1.0),
    (1.0, 0.5),
    (1.5, 0.5 * math.sqrt(0.2)),
    (2.0, 0.1),
    (3.0, 0.1 ** 1.5),
])
def test_svf_examples(s, expected):
    assert svf((0.5, 0.2), s) == pytest.approx(expected, rel=1e-12)


def test_svf_zero_singular_value():
    assert svf((0.5, 0.0), 1.0) == pytest.approx(0.5)
    assert svf((0.5, 0.0), 1.5) == 0.0


def test_svf_negative_exponent():
    with pytest.raises(DomainError):
        svf((0.5, 0.2), -0.1)


def test_word_product_order():
    a = np.array([[0.5, 0.1], [0.0, 0.4]])
    b = np.array([[0.3, 0.0], [0.2, 0.6]])
    np.testing.assert_allclose(word_product([a, b], ()), np.eye(2))
    np.testing.assert_allclose(word_product([a, b], (0, 1)), a @ b)
    np.testing.assert_allclose(word_product([a, b], (1, 0, 0)), b @ a @ a)
    with pytest.raises(InvalidWordError):
        word_product([a, b], (0, 2))


def test_svf_submultiplicative(rng):
    for _ in range(500):
        d = int(rng.integers(2, 4))
        a, b = random_contraction(rng, d), random_contraction(rng, d)
        s = float(rng.uniform(0, 2 * d))
        lhs = svf(singular_values(a @ b), s)
        rhs = svf(singular_values(a), s) * svf(singular_values(b), s)
        assert lhs <= rhs * (1 + 1e-9) + 1e-12


def test_svf_exponent_shift(rng):
    for _ in range(200):
        mat = random_contraction(rng, 3)
        sv = singular_values(mat)
        s = float(rng.uniform(0, 2))
        lhs = svf(sv, s + 1)
        assert lhs == pytest.approx(sv.top * svf(sv.values[1:], s), rel=1e-9)


def test_svf_fractional_exponent_shift(rng):
    for _ in range(500):
        d = int(rng.integers(2, 5))
        sv = singular_values(random_contraction(rng, d))
        s = float(rng.uniform(0, d))
        h = float(rng.uniform(0.01, 2.5))
        assert svf(sv, s + h) <= svf(sv, s) * sv.top ** h * (1 + 1e-9)


def test_svf_decreasing_for_contractions(rng):
    for _ in range(200):
        sv = singular_values(random_contraction(rng, 2))
        grid = np.linspace(0, 4, 41)
        values = [svf(sv, s) for s in grid]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(values, values[1:]))


def test_svf_orthogonal_invariance(rng):
    for _ in range(50):
        mat = random_contraction(rng, 3)
        q1 = ortho_group.rvs(3, random_state=rng)
        q2 = ortho_group.rvs(3, random_state=rng)
        for s in (0.4, 1.7, 2.9, 3.5):
            assert svf(singular_values(q1 @ mat @ q2), s) == pytest.approx(
                svf(singular_values(mat), s), rel=1e-9)


@pytest.mark.parametrize("r", [1.0, 2.0])
def test_svf_continuous_at_integers(r):
    sv = (0.7, 0.4, 0.1)
    left, mid, right = svf(sv, r - 1e-9), svf(sv, r), svf(sv, r + 1e-9)
    assert left == pytest.approx(mid, rel=1e-6)
    assert right == pytest.approx(mid, rel=1e-6)
