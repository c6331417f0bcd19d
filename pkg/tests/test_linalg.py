import math

import numpy as np
import pytest

from app.core.exceptions import LinearAlgebraError
from app.utils.linalg import cond2, det_tolerance, inv_sqrt_spd, is_spd, sym_eig


def test_sym_eig_reconstructs_random_spd(rng):
    b = rng.standard_normal((5, 5))
    a = b @ b.T + 0.1 * np.eye(5)
    w, v = sym_eig(a)
    assert np.all(np.diff(w) >= 0.0)
    assert np.allclose(v.T @ v, np.eye(5), atol=1e-12)
    assert np.allclose((v * w) @ v.T, a, atol=1e-10)
    assert np.allclose(w, np.linalg.eigvalsh(a), rtol=1e-10)


def test_sym_eig_two_by_two_closed_form():
    w, _ = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(w, [1.0, 3.0])


def test_sym_eig_rejects_non_symmetric_input():
    with pytest.raises(LinearAlgebraError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(LinearAlgebraError):
        sym_eig(np.ones((2, 3)))


def test_inverse_square_root():
    g = np.diag([4.0, 9.0])
    assert np.allclose(inv_sqrt_spd(g), np.diag([0.5, 1.0 / 3.0]))
    with pytest.raises(LinearAlgebraError):
        inv_sqrt_spd(np.ones((2, 2)))


def test_is_spd():
    assert is_spd(np.eye(3))
    assert not is_spd(np.ones((2, 2)))
    assert not is_spd(np.diag([1.0, -1.0]))
    assert is_spd(np.zeros((0, 0)))


def test_det_tolerance_and_condition_number():
    assert det_tolerance(np.eye(3), 1e-10) == pytest.approx(1e-10)
    assert det_tolerance(np.diag([2.0, 0.0]), 1e-10) == np.inf
    assert cond2(np.diag([1.0, 10.0])) == pytest.approx(10.0)
    assert cond2(np.array([[1.0, 1.0], [1.0, 1.0]])) > 1e12


def test_cond2_matches_normal_equations_spectrum(rng):
    m = rng.standard_normal((6, 6)) + 3.0 * np.eye(6)
    w, _ = sym_eig(m.T @ m)
    assert cond2(m) == pytest.approx(math.sqrt(w[-1] / w[0]), rel=1e-8)
    assert cond2(np.zeros((0, 0))) == 1.0
