import numpy as np
import pytest

from oracles import sqdist
from pqrerank.adc import SearchResult, adc_build, adc_search
from pqrerank.quant import ProductQuantizer, TrainParams, pq_train
from pqrerank.refine import (reconstruct, refine_encode, refine_train, rerank, residual, residuals,
                             search_refined)

PARAMS = TrainParams(iterations=10, seed=3)


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    return rng.standard_normal((6000, 16)).astype(np.float32)


@pytest.fixture(scope="module")
def pq_c(data):
    return pq_train(data[:2000], m=4, ks=32, params=PARAMS)


@pytest.fixture(scope="module")
def rq(pq_c, data):
    return refine_train(pq_c, data[2000:4000], 4, PARAMS, ks=32)


@pytest.fixture
def index(pq_c, rq, data):
    idx = adc_build(pq_c, data[4000:])
    refine_encode(idx, rq, data[4000:])
    return idx


def test_residual_of_reproduction_value_is_zero(pq_c):
    y = pq_c.decode([1, 2, 3, 4])
    np.testing.assert_array_equal(residual(y, pq_c), 0.0)


def test_residual_identity(pq_c, data):
    for y in data[:50]:
        r = residual(y, pq_c)
        np.testing.assert_allclose(pq_c.decode(pq_c.encode(y)) + r, y, atol=1e-6, rtol=0)


def test_residual_matches_direct_subtraction(pq_c, data):
    y = data[7]
    direct = np.array([a - b for a, b in zip(y.tolist(), pq_c.decode(pq_c.encode(y)).tolist())])
    np.testing.assert_allclose(residual(y, pq_c), direct, atol=1e-6)
    with pytest.raises(ValueError, match="dimension mismatch"):
        residual(y[:3], pq_c)


def test_refine_train_zero_residuals(pq_c):
    codes = np.random.default_rng(1).integers(0, 32, (300, 4))
    train = pq_c.decode_batch(codes)
    rq = refine_train(pq_c, train, 2, PARAMS, ks=8)
    np.testing.assert_array_equal(rq.centroids, 0.0)
    y = train[5]
    np.testing.assert_array_equal(reconstruct(pq_c, rq, pq_c.encode(y), rq.encode(residual(y, pq_c))), y)


def test_refine_train_uses_final_first_stage(pq_c, rq, data):
    again = pq_train(residuals(data[2000:4000], pq_c), 4, 32, PARAMS)
    np.testing.assert_array_equal(again.centroids, rq.centroids)


def test_refine_mse_not_worse_than_first_stage(pq_c, rq):
    # same number of sub-quantizers, trained on residuals: its MSE is below
    # the first-stage MSE that produced those residuals
    assert rq.m == pq_c.m
    assert rq.mse <= pq_c.mse


@pytest.mark.parametrize("mprime", [8, 16, 32])
def test_refine_standard_widths(mprime):
    x = np.random.default_rng(2).standard_normal((300, 32)).astype(np.float32)
    pq = pq_train(x, 8, 16, TrainParams(iterations=2))
    rq = refine_train(pq, x, mprime, TrainParams(iterations=2), ks=16)
    assert rq.m == mprime and rq.d == 32


def test_refine_train_errors(pq_c, data):
    with pytest.raises(ValueError, match="dimension not divisible"):
        refine_train(pq_c, data[:500], 3)
    with pytest.raises(ValueError, match="dimension mismatch"):
        refine_train(pq_c, data[:500, :8], 4)


def test_refine_encode_elementwise(index, pq_c, rq, data):
    base = data[4000:]
    assert index.refine_codes.shape == (2000, 4)
    assert index.bytes_per_vector == 8
    for i in range(0, 2000, 97):
        np.testing.assert_array_equal(index.refine_codes[i], rq.encode(residual(base[i], pq_c)))


def test_refine_encode_zero_books_give_zero_residual(pq_c):
    zero = ProductQuantizer(np.zeros((4, 8, 4), dtype=np.float32))
    base = pq_c.decode_batch(np.random.default_rng(3).integers(0, 32, (20, 4)))
    idx = adc_build(pq_c, base)
    codes = refine_encode(idx, zero, base)
    np.testing.assert_array_equal(codes, 0)
    np.testing.assert_array_equal(zero.decode_batch(codes), 0.0)


def test_refine_encode_empty_and_mismatch(pq_c, rq, data):
    idx = adc_build(pq_c, np.empty((0, 16), np.float32))
    assert refine_encode(idx, rq, np.empty((0, 16), np.float32)).shape == (0, 4)
    idx = adc_build(pq_c, data[:10])
    with pytest.raises(ValueError, match="count mismatch"):
        refine_encode(idx, rq, data[:11])


def test_reconstruct_is_sum_of_decodes(pq_c, rq):
    cc, cr = [1, 2, 3, 4], [0, 5, 6, 7]
    np.testing.assert_array_equal(reconstruct(pq_c, rq, cc, cr), pq_c.decode(cc) + rq.decode(cr))
    zero = ProductQuantizer(np.zeros((2, 4, 8), dtype=np.float32))
    np.testing.assert_array_equal(reconstruct(pq_c, zero, cc, [0, 3]), pq_c.decode(cc))


def test_reconstruct_reduces_error_on_average(pq_c, rq):
    y = np.random.default_rng(4).standard_normal((10_000, 16)).astype(np.float32)
    codes = pq_c.encode_batch(y)
    first = pq_c.decode_batch(codes)
    refined = first + rq.decode_batch(rq.encode_batch(y - first))
    e_first = ((y - first) ** 2).sum(1).mean()
    e_refined = ((y - refined) ** 2).sum(1).mean()
    assert e_refined <= e_first


def test_rerank_single(index):
    x = np.zeros(16)
    out = rerank(index, x, SearchResult(np.array([42]), np.array([9.0])), 1)
    yhat = reconstruct(index.pq, index.refine, index.codes[42], index.refine_codes[42])
    assert out.ids.tolist() == [42]
    assert out.dists[0] == pytest.approx(sqdist(x, yhat), rel=1e-9)


def test_rerank_containment_and_exactness(index):
    rng = np.random.default_rng(5)
    for x in rng.standard_normal((10, 16)):
        short = adc_search(index, x, 40)
        out = rerank(index, x, short, 20)
        assert len(out) == 20 and set(out.ids) <= set(short.ids)
        for i, d in out:
            yhat = reconstruct(index.pq, index.refine, index.codes[i], index.refine_codes[i])
            direct = sqdist(x, yhat)
            assert abs(d - direct) <= 1e-4 * max(1.0, direct)
        assert np.all(np.diff(out.dists) >= 0)


def test_rerank_zero_residual_codes_brute_force(pq_c, data):
    zero = ProductQuantizer(np.zeros((4, 4, 4), dtype=np.float32))
    base = data[:500]
    idx = adc_build(pq_c, base)
    refine_encode(idx, zero, base)
    x = data[600]
    short = adc_search(idx, x, 50)
    out = rerank(idx, x, short, 10)
    exact = sorted((sqdist(x, pq_c.decode(idx.codes[i])), i) for i in short.ids.tolist())
    assert out.ids.tolist() == [i for _, i in exact[:10]]


def test_rerank_errors(index, pq_c, data):
    short = adc_search(index, np.zeros(16), 5)
    with pytest.raises(ValueError, match="shortlist too small"):
        rerank(index, np.zeros(16), short, 6)
    plain = adc_build(pq_c, data[:5])
    with pytest.raises(ValueError, match="no refinement codes"):
        rerank(plain, np.zeros(16), short, 2)


def test_search_refined_default_shortlist(index, monkeypatch):
    import pqrerank.refine as refine

    seen = {}
    real = refine.adc_search

    def spy(idx, x, kprime):
        seen["kprime"] = kprime
        return real(idx, x, kprime)

    monkeypatch.setattr(refine, "adc_search", spy)
    out = search_refined(index, np.zeros(16), 10)
    assert seen["kprime"] == 20 and len(out) == 10
