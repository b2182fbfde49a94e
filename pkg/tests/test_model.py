import numpy as np
import pytest
from hypothesis import given, strategies as st

from l1sysid.model import (
    ConfigurationError,
    MarkovMatrix,
    SystemRealization,
    gen_general_system,
    gen_nilpotent_system,
    hankel_from_markov,
    hankel_of_system,
    markov_parameters,
    nilpotent_shift,
    spectral_norm,
    zero_pad_truncate,
)

seeds = st.integers(0, 2**32 - 1)


@pytest.mark.parametrize("M, expected", [
    (np.eye(3), 1.0),
    (np.array([[3.0, 4.0], [0.0, 0.0]]), 5.0),
    (np.diag([1.0, 2.0]), 2.0),
])
def test_spectral_norm_examples(M, expected):
    assert spectral_norm(M) == pytest.approx(expected, rel=1e-12)


@given(seeds, st.integers(1, 7), st.integers(1, 7))
def test_spectral_norm_matches_svd(seed, a, b):
    M = np.random.default_rng(seed).standard_normal((a, b))
    assert spectral_norm(M) == pytest.approx(np.linalg.svd(M, compute_uv=False)[0], rel=1e-10)


def test_spectral_norm_repeated_singular_values():
    Q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((6, 6)))
    assert spectral_norm(Q @ np.diag([2, 2, 2, 1, 1, 0.5])) == pytest.approx(2.0, rel=1e-10)


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_spectral_norm_rejects_nonfinite(bad):
    with pytest.raises(ValueError):
        spectral_norm(np.array([[1.0, bad]]))


def test_nilpotent_k1_is_zero(rng):
    sys = gen_nilpotent_system(4, 1, 1, 1, 0.6, rng)
    assert np.all(sys.A == 0)


def test_nilpotent_n5_k2_hand_case(rng):
    # superdiagonal (1, 2, 0, 4); blocks [[0,1,2],[0,0,0]...] have norm 4 -> factor 0.15
    S = nilpotent_shift(5, 2)
    assert np.array_equal(np.diag(S, 1), [1.0, 2.0, 0.0, 4.0])
    assert spectral_norm(S) == pytest.approx(4.0, rel=1e-12)
    sys = gen_nilpotent_system(5, 1, 1, 2, 0.6, rng)
    assert np.allclose(np.diag(sys.A, 1), 0.15 * np.array([1, 2, 0, 4]), rtol=1e-12)
    assert np.all(np.linalg.matrix_power(sys.A, 3) == 0)


@given(seeds, st.integers(1, 5), st.integers(1, 12))
def test_nilpotent_properties(seed, k, extra):
    n = 2 * k - 1 + extra
    sys = gen_nilpotent_system(n, 2, 2, k, 0.6, np.random.default_rng(seed))
    assert np.all(np.linalg.matrix_power(sys.A, 2 * k - 1) == 0)
    if k > 1:
        assert spectral_norm(sys.A) == pytest.approx(0.6, abs=1e-10)


def test_nilpotent_rejects_short_state(rng):
    with pytest.raises(ConfigurationError):
        gen_nilpotent_system(3, 1, 1, 2, 0.6, rng)


@pytest.mark.parametrize("target", [0.0, 1.0, -0.2])
def test_generators_reject_bad_target(rng, target):
    with pytest.raises(ConfigurationError):
        gen_general_system(3, 1, 1, target, rng)


def test_general_scalar_and_boundary(rng):
    a = np.random.default_rng(5).uniform(-1, 1)
    sys = gen_general_system(1, 1, 1, 0.6, np.random.default_rng(5))
    assert sys.A[0, 0] == pytest.approx(np.sign(a) * 0.6, abs=1e-15)
    sys = gen_general_system(6, 2, 2, 0.99, rng)
    assert spectral_norm(sys.A) == pytest.approx(0.99, abs=1e-10)


@given(seeds, st.sampled_from(["uniform", "gaussian"]))
def test_general_scaling(seed, dist):
    sys = gen_general_system(8, 2, 3, 0.6, np.random.default_rng(seed), dist)
    assert spectral_norm(sys.A) == pytest.approx(0.6, abs=1e-10)
    assert (sys.n, sys.m, sys.r) == (8, 2, 3)


def test_system_rejects_bad_shapes():
    with pytest.raises(ValueError):
        SystemRealization(np.zeros((2, 2)), np.zeros((3, 1)), np.zeros((1, 2)), np.zeros((1, 1)))


def test_markov_parameters_scalar(scalar_half):
    assert np.allclose(markov_parameters(scalar_half, 2).G, [[3, 2, 1, 0.5]], atol=0)
    assert np.allclose(markov_parameters(scalar_half, 1).G, [[3, 2]], atol=0)
    zero_c = SystemRealization([[0.5]], [[1.0]], [[0.0]], [[3.0]])
    assert np.array_equal(markov_parameters(zero_c, 3).G, [[3, 0, 0, 0, 0, 0]])


def test_markov_matrix_width_and_blocks(rng):
    sys = gen_general_system(5, 2, 3, 0.6, rng)
    G = markov_parameters(sys, 3)
    assert G.G.shape == (3, 12)
    assert np.array_equal(G.D, sys.D)
    assert np.allclose(G.block(3), sys.C @ sys.A @ sys.A @ sys.B)
    with pytest.raises(ValueError):
        MarkovMatrix(np.zeros((3, 11)), 3, 2, 3)


@given(seeds)
def test_similarity_invariance(seed):
    r = np.random.default_rng(seed)
    sys = gen_general_system(4, 2, 2, 0.6, r)
    S = r.standard_normal((4, 4)) + 3 * np.eye(4)
    Si = np.linalg.inv(S)
    other = SystemRealization(S @ sys.A @ Si, S @ sys.B, sys.C @ Si, sys.D)
    assert np.allclose(markov_parameters(sys, 3).G, markov_parameters(other, 3).G, atol=1e-8)


def test_hankel_of_system_scalar(scalar_half):
    assert np.array_equal(hankel_of_system(scalar_half, 0, 2).matrix, [[2, 1], [1, 0.5]])
    assert np.array_equal(hankel_of_system(scalar_half, 1, 2).matrix, [[1, 0.5], [0.5, 0.25]])
    zero = SystemRealization([[0.0]], [[1.0]], [[2.0]], [[0.0]])
    assert not hankel_of_system(zero, 1, 4).matrix.any()


def test_hankel_from_markov_scalar():
    G = MarkovMatrix.from_array([[3, 2, 1, 0.5]], 2)
    assert np.array_equal(hankel_from_markov(G, 2).matrix, [[2, 1], [1, 0.5]])
    assert np.array_equal(hankel_from_markov(G, 1).matrix, [[2]])
    with pytest.raises(ValueError):
        hankel_from_markov(G, 3)


@given(seeds, st.integers(1, 4))
def test_hankel_consistency_and_structure(seed, k):
    sys = gen_general_system(5, 2, 3, 0.7, np.random.default_rng(seed))
    G = markov_parameters(sys, k)
    for d in range(1, k + 1):
        H = hankel_from_markov(G, d)
        assert np.array_equal(H.matrix, hankel_of_system(sys, 0, d).matrix)
        r, m = 3, 2
        for i in range(d):
            for j in range(d):
                if i + 1 < d and j > 0:
                    blk = H.matrix[i * r:(i + 1) * r, j * m:(j + 1) * m]
                    nxt = H.matrix[(i + 1) * r:(i + 2) * r, (j - 1) * m:j * m]
                    assert np.array_equal(blk, nxt)


def test_zero_pad_truncate():
    H = hankel_from_markov(MarkovMatrix.from_array([[3, 2, 1, 0.5]], 2), 2)
    assert np.array_equal(zero_pad_truncate(H, 3, 2).matrix, [[2, 1], [1, 0.5], [0, 0]])
    assert np.array_equal(zero_pad_truncate(H, 1, 1).matrix, [[2]])
    with pytest.raises(ValueError):
        zero_pad_truncate(H, 0, 1)


@given(seeds, st.integers(1, 8), st.integers(1, 8))
def test_padded_region_is_zero(seed, rows, cols):
    sys = gen_general_system(3, 1, 2, 0.5, np.random.default_rng(seed))
    H = hankel_of_system(sys, 0, 2)
    P = zero_pad_truncate(H, rows, cols).matrix
    rr, cc = min(rows, 4), min(cols, 2)
    assert np.array_equal(P[:rr, :cc], H.matrix[:rr, :cc])
    assert not P[rr:, :].any() and not P[:, cc:].any()


def test_realization_dict_roundtrip(rng):
    sys = gen_general_system(3, 2, 2, 0.5, rng)
    back = SystemRealization.from_dict(sys.to_dict())
    for name in "ABCD":
        assert np.array_equal(getattr(back, name), getattr(sys, name))
