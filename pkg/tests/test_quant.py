import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_encode, concat_decode, naive_lloyd, sqdist
from pqrerank.quant import (ProductQuantizer, TrainParams, adc_distance, adc_distances, kmeans_train,
                            nearest_centroid, pq_train, subspace_seed)

# frozen from oracles.naive_lloyd on the mixture below (k=16, 25 iterations, seed=42)
NAIVE_LLOYD_MSE = 2.2100371831787244


@pytest.fixture(scope="module")
def mixture():
    rng = np.random.default_rng(2024)
    centers = rng.normal(0, 5, (8, 3))
    return centers[rng.integers(0, 8, 1000)] + rng.standard_normal((1000, 3))


@pytest.fixture
def toy_pq():
    return ProductQuantizer(np.array([[[0, 0], [1, 1]], [[0, 0], [2, 2]]], dtype=np.float32))


@pytest.fixture(scope="module")
def trained_pq():
    rng = np.random.default_rng(5)
    return pq_train(rng.standard_normal((3000, 16)), m=4, ks=32, params=TrainParams(seed=1))


# -- k-means -----------------------------------------------------------------

def test_kmeans_single_centroid_is_mean():
    cb = kmeans_train(np.array([[0.0, 0.0], [2.0, 2.0]]), 1)
    np.testing.assert_array_equal(cb.centroids, [[1.0, 1.0]])
    assert cb.mse == pytest.approx(2.0)


def test_kmeans_k_equals_n_is_exact():
    pts = np.array([[0, 1], [3, 4], [-2, 7], [5, 5], [9, -1]], dtype=np.float64)
    cb = kmeans_train(pts, 5, TrainParams(seed=3))
    assert sorted(map(tuple, cb.centroids.tolist())) == sorted(map(tuple, pts.tolist()))
    assert cb.mse == 0.0


def test_kmeans_matches_naive_lloyd(mixture):
    cb = kmeans_train(mixture, 16, TrainParams(iterations=25, seed=42))
    cents, mse, history = naive_lloyd(mixture, 16, 25, 42)
    np.testing.assert_array_equal(cb.centroids, cents)
    assert cb.mse == pytest.approx(mse, rel=1e-12)
    assert cb.mse == pytest.approx(NAIVE_LLOYD_MSE, rel=1e-12)
    np.testing.assert_allclose(cb.history, history, rtol=1e-12)


def test_kmeans_empty_cluster_split_matches_oracle():
    # duplicated points force empty clusters at every iteration
    pts = np.repeat(np.array([[0.0, 0.0], [10.0, 10.0], [10.0, 0.0]]), [50, 3, 1], axis=0)
    pts = np.vstack([pts, [[0.0, 0.0]] * 3])
    cb = kmeans_train(pts, 6, TrainParams(iterations=5, seed=11))
    cents, mse, _ = naive_lloyd(pts, 6, 5, 11)
    np.testing.assert_array_equal(cb.centroids, cents)
    assert cb.mse == pytest.approx(mse, abs=1e-12)
    assert cb.k == 6


@pytest.mark.parametrize("seed", range(6))
def test_kmeans_objective_non_increasing(mixture, seed):
    cb = kmeans_train(mixture, 32, TrainParams(iterations=15, seed=seed))
    h = np.array(cb.history)
    assert np.all(np.diff(h) <= 0), h


def test_kmeans_deterministic(mixture):
    a = kmeans_train(mixture, 8, TrainParams(seed=9, redo=2))
    b = kmeans_train(mixture, 8, TrainParams(seed=9, redo=2))
    assert a.centroids.tobytes() == b.centroids.tobytes()


def test_kmeans_redo_never_worse(mixture):
    one = kmeans_train(mixture, 16, TrainParams(seed=4, iterations=3))
    three = kmeans_train(mixture, 16, TrainParams(seed=4, iterations=3, redo=3))
    # the first restart is identical, so the best of three cannot lose
    assert three.history[-1] <= one.history[-1]


def test_kmeans_default_policy_sensitivity():
    # init seed, iteration count and restarts should move the pq MSE only a little
    x = np.random.default_rng(6).standard_normal((4000, 16)).astype(np.float32)
    by_seed = [pq_train(x, 4, 64, TrainParams(seed=s)).mse for s in range(4)]
    assert (max(by_seed) - min(by_seed)) / min(by_seed) < 0.02
    short = pq_train(x, 4, 64, TrainParams(seed=0, iterations=5)).mse
    long = pq_train(x, 4, 64, TrainParams(seed=0, iterations=50)).mse
    assert long <= short and (short - long) / long < 0.1
    restarts = pq_train(x, 4, 64, TrainParams(seed=0, redo=3)).mse
    assert restarts <= by_seed[0] + 1e-12 and (by_seed[0] - restarts) / restarts < 0.02


def test_kmeans_errors():
    with pytest.raises(ValueError, match="insufficient training data"):
        kmeans_train(np.zeros((3, 2)), 4)
    with pytest.raises(ValueError, match="non-finite"):
        kmeans_train(np.array([[0.0, np.nan], [1.0, 1.0]]), 1)
    with pytest.raises(ValueError):
        TrainParams(iterations=0)


# -- product quantizer ---------------------------------------------------------

def test_pq_scalar_subquantizers():
    x = np.random.default_rng(0).standard_normal((300, 8))
    pq = pq_train(x, m=8, ks=16)
    assert pq.centroids.shape == (8, 16, 1)
    assert all(b.dim == 1 for b in pq.books)


def test_pq_default_configuration_shape():
    x = np.random.default_rng(1).standard_normal((512, 128)).astype(np.float32)
    pq = pq_train(x, m=8, ks=256, params=TrainParams(iterations=2))
    assert (pq.d, pq.m, pq.ks, pq.dsub, pq.bits_per_sub) == (128, 8, 256, 16, 8)
    assert len(pq.books) == 8 and all(b.k == 256 and b.dim == 16 for b in pq.books)


def test_pq_subspaces_match_per_subspace_oracle():
    x = np.random.default_rng(7).standard_normal((400, 6))
    params = TrainParams(iterations=6, seed=13)
    pq = pq_train(x, m=3, ks=8, params=params)
    for j in range(3):
        cents, mse, _ = naive_lloyd(x.astype(np.float32)[:, 2 * j:2 * j + 2], 8, 6, subspace_seed(13, j))
        np.testing.assert_array_equal(pq.centroids[j], cents)
        assert pq.sub_mse[j] == pytest.approx(mse, rel=1e-12)


def test_pq_train_errors():
    x = np.zeros((300, 10))
    with pytest.raises(ValueError, match="dimension not divisible"):
        pq_train(x, m=3, ks=4)
    with pytest.raises(ValueError, match="insufficient training data"):
        pq_train(x[:10], m=2, ks=16)
    with pytest.raises(ValueError):
        ProductQuantizer(np.zeros((2, 257, 1)))


def test_encode_nearest_by_inspection(toy_pq):
    np.testing.assert_array_equal(toy_pq.encode([0.9, 1.1, 0.1, -0.1]), [1, 0])


def test_encode_fixed_point(toy_pq):
    y = np.array([1, 1, 2, 2], dtype=np.float32)
    code = toy_pq.encode(y)
    np.testing.assert_array_equal(code, [1, 1])
    assert sqdist(y, toy_pq.decode(code)) == 0.0


def test_encode_ties_go_to_lowest_index():
    pq = ProductQuantizer(np.array([[[0.0], [2.0], [2.0]]], dtype=np.float32))
    assert pq.encode([1.0])[0] == 0
    assert pq.encode([2.0])[0] == 1


def test_encode_matches_exhaustive(trained_pq):
    rng = np.random.default_rng(21)
    books = [trained_pq.centroids[j] for j in range(trained_pq.m)]
    for y in rng.standard_normal((40, 16)).astype(np.float32):
        assert trained_pq.encode(y).tolist() == brute_encode(books, y)


def test_encode_length_mismatch(toy_pq):
    with pytest.raises(ValueError, match="dimension mismatch"):
        toy_pq.encode([1.0, 2.0])


def test_decode_concatenates(toy_pq):
    np.testing.assert_array_equal(toy_pq.decode([1, 0]), [1, 1, 0, 0])
    with pytest.raises(ValueError, match="out of range"):
        toy_pq.decode([2, 0])


def test_decode_round_trip_on_codebook_points(trained_pq):
    for code in [(0, 1, 2, 3), (31, 0, 7, 7)]:
        y = trained_pq.decode(code)
        assert tuple(trained_pq.encode(y)) == code


def test_decode_is_best_reproduction_value_exhaustively():
    rng = np.random.default_rng(3)
    pq = pq_train(rng.standard_normal((200, 4)), m=2, ks=4)
    books = [pq.centroids[j] for j in range(2)]
    # all (ks)^m = 16 reproduction values
    repro = [concat_decode(books, (a, b)) for a in range(4) for b in range(4)]
    for y in rng.standard_normal((50, 4)).astype(np.float32):
        chosen = sqdist(y, pq.decode(pq.encode(y)))
        assert all(chosen <= sqdist(y, r) + 1e-12 for r in repro)


def test_batch_and_single_agree(trained_pq):
    y = np.random.default_rng(4).standard_normal((25, 16)).astype(np.float32)
    codes = trained_pq.encode_batch(y)
    assert codes.dtype == np.uint8
    for row, code in zip(y, codes):
        np.testing.assert_array_equal(trained_pq.encode(row), code)
    np.testing.assert_array_equal(trained_pq.decode_batch(codes)[3], trained_pq.decode(codes[3]))


# -- lookup tables and ADC distance --------------------------------------------

def test_lut_zero_at_own_centroids(trained_pq):
    code = np.array([5, 9, 0, 31])
    lut = trained_pq.build_lut(trained_pq.decode(code))
    assert lut.shape == (4, 32)
    np.testing.assert_array_equal(lut[np.arange(4), code], 0.0)


def test_lut_matches_direct_subspace_distances(trained_pq):
    x = np.random.default_rng(8).standard_normal(16).astype(np.float32)
    lut = trained_pq.build_lut(x)
    for j in range(trained_pq.m):
        for i in range(trained_pq.ks):
            direct = sqdist(x[4 * j:4 * j + 4], trained_pq.centroids[j, i])
            assert lut[j, i] == pytest.approx(direct, rel=1e-5, abs=1e-12)


def test_lut_default_shape():
    pq = ProductQuantizer(np.zeros((8, 256, 16), dtype=np.float32))
    lut = pq.build_lut(np.ones(128))
    assert lut.size == 2048 and lut.dtype == np.float32


def test_adc_distance_self_is_zero(trained_pq):
    code = np.array([1, 2, 3, 4])
    lut = trained_pq.build_lut(trained_pq.decode(code))
    assert adc_distance(lut, code) == pytest.approx(0.0, abs=1e-6)


def test_adc_distance_matches_direct(trained_pq):
    rng = np.random.default_rng(10)
    for _ in range(200):
        x = rng.standard_normal(16).astype(np.float32)
        code = rng.integers(0, 32, 4)
        direct = sqdist(x, trained_pq.decode(code))
        assert abs(adc_distance(trained_pq.build_lut(x), code) - direct) <= 1e-4 * max(1.0, direct)


def test_adc_distance_row_additivity(trained_pq):
    x = np.random.default_rng(12).standard_normal(16).astype(np.float32)
    shifted = x.copy()
    shifted[4:8] += 3.0
    a, b = trained_pq.build_lut(x), trained_pq.build_lut(shifted)
    np.testing.assert_array_equal(np.delete(a, 1, axis=0), np.delete(b, 1, axis=0))
    assert not np.array_equal(a[1], b[1])


def test_adc_distances_bit_identical_to_scalar(trained_pq):
    rng = np.random.default_rng(13)
    lut = trained_pq.build_lut(rng.standard_normal(16))
    codes = rng.integers(0, 32, (100, 4)).astype(np.uint8)
    vec = adc_distances(lut, np.asfortranarray(codes))
    assert vec.dtype == np.float32
    assert [float(v) for v in vec] == [adc_distance(lut, c) for c in codes]


def test_adc_distance_shape_mismatch(trained_pq):
    lut = trained_pq.build_lut(np.zeros(16))
    with pytest.raises(ValueError):
        adc_distance(lut, [1, 2, 3])


def test_nearest_centroid_ties_lowest():
    labels, _ = nearest_centroid(np.array([[1.0]]), np.array([[0.0], [2.0]]))
    assert labels[0] == 0


# -- properties ----------------------------------------------------------------

vectors16 = st.lists(st.floats(-100, 100, allow_nan=False, width=32), min_size=16, max_size=16)


@settings(max_examples=60, deadline=None)
@given(vectors16)
def test_property_encode_optimal_per_subspace(trained_pq, y):
    y = np.array(y, dtype=np.float32)
    code = trained_pq.encode(y)
    for j in range(trained_pq.m):
        sub = y[4 * j:4 * j + 4].astype(np.float64)
        d = ((trained_pq.centroids[j].astype(np.float64) - sub) ** 2).sum(axis=1)
        assert d[code[j]] <= d.min() * (1 + 1e-9) + 1e-9


@settings(max_examples=60, deadline=None)
@given(vectors16, st.lists(st.integers(0, 31), min_size=4, max_size=4))
def test_property_lut_equivalence(trained_pq, x, code):
    x = np.array(x, dtype=np.float32)
    direct = sqdist(x, trained_pq.decode(code))
    est = adc_distance(trained_pq.build_lut(x), code)
    assert est >= 0
    assert abs(est - direct) <= 1e-4 * max(1.0, direct)
