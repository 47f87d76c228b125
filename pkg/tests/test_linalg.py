import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from incrank.linalg import ShapeError, derive_rng, make_rng, matmul, orthogonal_init


def triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def test_matmul_identity():
    b = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), b), b)


def test_matmul_annihilation():
    np.testing.assert_array_equal(matmul([[1.0, 0.0], [0.0, 0.0]], [[0.0], [5.0]]), [[0.0], [0.0]])


def test_matmul_matches_triple_loop():
    # integer-valued entries make every product and partial sum exact,
    # so BLAS (which may fuse multiply-adds) must agree bit for bit
    rng = make_rng(3)
    a = rng.integers(-9, 10, size=(4, 3)).astype(float)
    b = rng.integers(-9, 10, size=(3, 5)).astype(float)
    np.testing.assert_array_equal(matmul(a, b), triple_loop(a, b))


def test_matmul_close_to_triple_loop_on_gaussians():
    rng = make_rng(4)
    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((3, 5))
    np.testing.assert_allclose(matmul(a, b), triple_loop(a, b), rtol=0, atol=4 * np.finfo(float).eps * 10)


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6),
       st.integers(0, 2**32 - 1))
def test_matmul_associative(m, n, p, q, seed):
    rng = make_rng(seed)
    a, b, c = rng.standard_normal((m, n)), rng.standard_normal((n, p)), rng.standard_normal((p, q))
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    big = np.abs(left) >= 1e-6
    np.testing.assert_allclose(left[big], right[big], rtol=1e-9)


def test_orthogonal_1x1():
    q = orthogonal_init(1, 1, make_rng(0))
    assert q.shape == (1, 1) and abs(q[0, 0]) == 1.0


def test_orthogonal_3x2():
    q = orthogonal_init(3, 2, make_rng(1))
    np.testing.assert_allclose(q.T @ q, np.eye(2), atol=1e-10, rtol=0)


def test_orthogonal_deterministic():
    a = orthogonal_init(256, 11, make_rng(42))
    b = orthogonal_init(256, 11, make_rng(42))
    assert a.tobytes() == b.tobytes()


def test_orthogonal_rejects_wide():
    with pytest.raises(ShapeError):
        orthogonal_init(2, 3, make_rng(0))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**63 - 1))
def test_orthogonal_property(rows, cols, seed):
    rows, cols = max(rows, cols), min(rows, cols)
    q = orthogonal_init(rows, cols, make_rng(seed))
    assert np.max(np.abs(q.T @ q - np.eye(cols))) <= 1e-10


def test_derived_streams_independent_and_reproducible():
    a = derive_rng(5, "task", 2).standard_normal(4)
    b = derive_rng(5, "task", 2).standard_normal(4)
    c = derive_rng(5, "task", 3).standard_normal(4)
    d = derive_rng(5, "batches", 2).standard_normal(4)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
