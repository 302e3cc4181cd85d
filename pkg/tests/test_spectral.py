import numpy as np
import pytest

from minorforge.errors import DegreeError, MinorforgeError
from minorforge.spectral import (
    almost_orthonormal_basis,
    distance_to_subspace,
    image_of,
    invariant_subspace_scalar_check,
    is_invariant,
    kernel_of,
    kernel_stability,
    max_principal_angle,
    modulus,
    numerical_rank,
    rank_one_connected,
)


def test_kernel_of_diagonal():
    K = kernel_of(np.diag([1.0, 1.0, 0.0]))
    assert K.dim == 1
    assert abs(abs(K.vectors[2, 0]) - 1) < 1e-15
    assert kernel_of(np.diag([3.0, 2.0, 0.0])).dim == 1


def test_kernel_of_constructed_rank_two(rng):
    U, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    V, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    A = U @ np.diag([3.0, 1.5, 0, 0]) @ V.T
    K = kernel_of(A)
    assert K.dim == 2
    assert max_principal_angle(K.vectors, V[:, 2:]) < 1e-10
    np.testing.assert_allclose(K.vectors.T @ K.vectors, np.eye(2), atol=1e-12)


def test_image_of(rng):
    A = np.outer(rng.standard_normal(5), rng.standard_normal(3))
    I = image_of(A)
    assert I.dim == 1 and I.ambient == 5
    np.testing.assert_allclose(I.projector() @ A, A, atol=1e-12)


def test_modulus_examples():
    assert modulus(np.diag([3.0, 2.0, 0.0])) == pytest.approx(2.0)
    assert modulus(np.eye(4)) == pytest.approx(1.0)
    assert modulus(np.array([[5.0]])) == pytest.approx(5.0)
    with pytest.raises(MinorforgeError):
        modulus(np.zeros((2, 2)))


def test_modulus_is_infimum_off_kernel(rng):
    A = np.diag([3.0, 2.0, 0.0])
    K = kernel_of(A)
    for _ in range(200):
        x = rng.standard_normal(3)
        dist = distance_to_subspace(x, K)
        assert np.linalg.norm(A @ x) >= 2.0 * dist - 1e-12


def test_numerical_rank_threshold():
    assert numerical_rank(np.diag([1.0, 1e-9])) == 2
    assert numerical_rank(np.diag([1.0, 1e-11])) == 1
    assert numerical_rank(np.diag([1.0, 1e-9]), tau=1e-8) == 1
    assert numerical_rank(np.zeros((3, 3))) == 0


def test_almost_orthonormal_basis_distances(rng):
    K = kernel_of(np.hstack([rng.standard_normal((2, 3)), np.zeros((2, 3))]))
    B = almost_orthonormal_basis(K)
    for j in range(1, B.shape[1]):
        prev, _ = np.linalg.qr(B[:, :j])
        y = B[:, j]
        assert np.linalg.norm(y - prev @ (prev.T @ y)) >= 1 - 1e-12


def test_kernel_stability_closed_form():
    Tn = [np.array([[1.0, 1.0 / n], [0.0, 0.0]]) for n in (1, 2, 4, 8, 16, 32)]
    rep = kernel_stability(Tn, np.array([[1.0, 0.0], [0.0, 0.0]]))
    # kernel of T_n is spanned by (1, -n): angle to e2 is atan(1/n)
    np.testing.assert_allclose(rep.angles, [np.arctan(1 / n) for n in (1, 2, 4, 8, 16, 32)], atol=1e-12)
    assert rep.converging


def test_kernel_stability_constant_sequences():
    T = np.diag([2.0, 0.0])
    assert np.all(kernel_stability([T] * 3, T).angles == 0)
    rep = kernel_stability([np.diag([1 + 1 / n, 0.0]) for n in range(1, 5)], T)
    assert np.allclose(rep.angles, 0) and np.allclose(rep.distances, 0)


def test_kernel_stability_dimension_mismatch():
    with pytest.raises(DegreeError):
        kernel_stability([np.eye(2)], np.diag([1.0, 0.0]))


def test_rank_one_connected(rng):
    assert rank_one_connected(np.eye(2), np.diag([2.0, 1.0]))
    assert not rank_one_connected(np.eye(2), -np.eye(2))
    A = rng.standard_normal((4, 4))
    assert rank_one_connected(A, A + np.outer(rng.standard_normal(4), rng.standard_normal(4)))
    with pytest.raises(DegreeError):
        rank_one_connected(np.eye(2), np.eye(3))


def test_invariant_subspace_scalar_check(rng):
    assert invariant_subspace_scalar_check(3.0 * np.eye(4), 2, rng=rng).scale == pytest.approx(3.0)
    res = invariant_subspace_scalar_check(np.diag([1.0, 2.0, 3.0, 4.0]), 2, rng=rng)
    assert not res and res.witness is not None
    assert not is_invariant(np.diag([1.0, 2.0, 3.0, 4.0]), res.witness)
    # coordinate planes of a diagonal map are invariant even though the map is not scalar
    assert is_invariant(np.diag([1.0, 2.0, 3.0, 4.0]), np.eye(4)[:, :2])
