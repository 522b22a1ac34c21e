import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from licsi.errors import ConfigError, IllConditionedError, RankError, SingularityError
from licsi.mor import ReducedRealization
from licsi.transform import (build_gram, dft_matrix, forward_transform, gram_from_poles,
                             inverse_transform, normalized_svd)

import oracles


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _random_case(seed, n_tx=6, r=4, n=10, stride=4):
    rng = np.random.default_rng(seed)
    poles = rng.uniform(1, n * stride, r) + 1j * rng.uniform(2, 20, r) * rng.choice([-1, 1], r)
    b = _crandn(rng, r, 2)
    c3 = _crandn(rng, n_tx, r)
    freqs = 1.0 + stride * np.arange(n)
    return ReducedRealization(poles, b, c3), freqs, rng


def test_dft_matches_fft():
    for n in (1, 2, 5, 32):
        assert np.allclose(dft_matrix(n), oracles.dft(n), atol=1e-14)
        assert np.allclose(dft_matrix(n).conj().T @ dft_matrix(n), np.eye(n), atol=1e-13)


def test_scalar_gram():
    g = gram_from_poles(np.array([0j]), np.array([[1.0, 1.0]]), np.array([1.0, 2.0]))
    assert np.allclose(g.y, [[1, 1, 0.5, 0.5]])


def test_gram_order_limit():
    with pytest.raises(ConfigError):
        gram_from_poles(np.arange(4) + 1j, np.ones((4, 2)), np.array([1.0, 2.0]))


def test_gram_matches_dense_solve():
    r, freqs, _ = _random_case(0)
    y = build_gram(r, freqs).y
    want = oracles.gram(r.a_diag, r.b, freqs)
    assert np.max(np.abs(y - want)) <= 1e-14 * np.max(np.abs(want))


def test_gram_collision():
    with pytest.raises(SingularityError):
        gram_from_poles(np.array([5.0 + 0j]), np.ones((1, 2)), np.array([1.0, 5.0]))


def test_zero_c3():
    r, freqs, _ = _random_case(1)
    t = forward_transform(np.zeros((6, 4)), build_gram(r, freqs))
    assert not t.c4.any() and not t.c5.any()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5), st.integers(2, 8))
def test_forward_invariants(seed, r_f, n_tx):
    r, freqs, _ = _random_case(seed, n_tx=n_tx, r=r_f)
    g = build_gram(r, freqs)
    t = forward_transform(r.c, g)
    v = t.v_y_h.conj().T
    assert np.linalg.norm(v.conj().T @ v - np.eye(r_f)) < 1e-10
    assert np.allclose(t.c4, r.c @ t.u_y @ np.diag(t.sigma_y), rtol=1e-12, atol=1e-12 * np.abs(t.c4).max())
    assert np.allclose(t.c5, dft_matrix(n_tx) @ t.c4)
    hs = r.c @ g.y
    assert np.linalg.norm(hs - t.c4 @ t.v_y_h) < 1e-10 * np.linalg.norm(hs)
    assert abs(np.linalg.norm(t.c5) - np.linalg.norm(t.c4)) < 1e-12 * np.linalg.norm(t.c4)


def test_phase_normalization():
    r, freqs, _ = _random_case(2)
    y = build_gram(r, freqs).y
    u, s, vh = normalized_svd(y)
    for k in range(u.shape[1]):
        i = np.argmax(np.abs(u[:, k]))
        assert u[i, k].imag == 0 and u[i, k].real > 0
    assert np.allclose(u * s @ vh, y)
    # a global phase on Y moves into V^H only
    u2, s2, vh2 = normalized_svd(y * np.exp(0.7j))
    assert np.allclose(u2, u, atol=1e-12) and np.allclose(s2, s)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_error_identities(seed):
    r, freqs, rng = _random_case(seed)
    g = build_gram(r, freqs)
    t = forward_transform(r.c, g)
    hs = t.c4 @ t.v_y_h
    # an error in C4 passes to H_s without amplification
    d4 = 1e-3 * _crandn(rng, *t.c4.shape)
    lhs = np.linalg.norm(hs - (t.c4 + d4) @ t.v_y_h) ** 2
    assert abs(lhs - np.linalg.norm(d4) ** 2) < 1e-10 * np.linalg.norm(d4) ** 2
    # trace identity for an error in C3
    d3 = _crandn(rng, *r.c.shape)
    a = np.linalg.norm(d3 @ g.y) ** 2
    b = np.trace(d3.conj().T @ d3 @ g.y @ g.y.conj().T).real
    assert abs(a - b) < 1e-10 * a
    # unitary DFT isometry
    d5 = _crandn(rng, *t.c5.shape)
    assert abs(np.linalg.norm(dft_matrix(6).conj().T @ d5) - np.linalg.norm(d5)) < 1e-12 * np.linalg.norm(d5)


def test_inverse_exact():
    r, freqs, _ = _random_case(3)
    t = forward_transform(r.c, build_gram(r, freqs))
    c3 = inverse_transform(t.c5, r, freqs)
    assert np.linalg.norm(c3 - r.c) < 1e-10 * np.linalg.norm(r.c)


def test_inverse_perturbed_c5():
    r, freqs, rng = _random_case(4)
    g = build_gram(r, freqs)
    t = forward_transform(r.c, g)
    d5 = 1e-2 * _crandn(rng, *t.c5.shape)
    c3_hat = inverse_transform(t.c5 + d5, r, freqs)
    err = np.linalg.norm(c3_hat @ g.y - r.c @ g.y)
    assert abs(err - np.linalg.norm(d5)) < 1e-10 * np.linalg.norm(d5)


def test_rank_deficient_gram():
    freqs = 1.0 + 4 * np.arange(10)
    poles = np.array([3 + 5j, 3 + 5j])
    b = np.array([[1, 2], [2, 4]], dtype=complex)
    r = ReducedRealization(poles, b, np.ones((4, 2)))
    with pytest.raises(RankError, match="sigma_min"):
        forward_transform(r.c, build_gram(r, freqs))
    with pytest.raises(IllConditionedError):
        inverse_transform(np.ones((4, 2)), r, freqs)
    with pytest.raises(ConfigError):
        forward_transform(np.ones((4, 3)), build_gram(r, freqs))
