import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraudseq.attention import (
    AttentionParams,
    TimeEmbeddingTable,
    attention_pool_backward,
    bucketize,
    bucketize_array,
    deltas,
    self_attention_pool,
    time_attention_pool,
    time_embed,
)
from fraudseq.errors import DataError, DimensionError
from fraudseq.numeric import ParamStore, finite_diff_check


class TestBucketize:
    def test_zero(self):
        assert bucketize(0.0) == 0

    def test_floor_boundary(self):
        assert bucketize(59.0) == 0
        assert bucketize(60.0) == 1

    def test_hour(self):
        assert bucketize(3600.0, num_buckets=100) == 60

    def test_clamp(self):
        assert bucketize(1e9, num_buckets=100) == 99

    def test_negative(self):
        with pytest.raises(ValueError):
            bucketize(-1.0)
        with pytest.raises(ValueError):
            bucketize_array(np.array([3.0, -2.0]))

    def test_array_matches_scalar(self):
        vals = np.array([0.0, 59.0, 60.0, 61.0, 3600.0, 1e7])
        got = bucketize_array(vals, num_buckets=200)
        want = [bucketize(v, num_buckets=200) for v in vals]
        np.testing.assert_array_equal(got, want)


class TestDeltas:
    def test_singleton(self):
        np.testing.assert_array_equal(deltas([5]), [0.0])

    def test_simultaneous(self):
        np.testing.assert_array_equal(deltas([10, 10, 10]), [0.0, 0.0, 0.0])

    def test_direct_differences(self):
        np.testing.assert_array_equal(deltas([0, 60, 180]), [0.0, 60.0, 120.0])

    def test_decreasing_rejected(self):
        with pytest.raises(DataError, match="position 2"):
            deltas([0, 60, 30])

    def test_empty(self):
        with pytest.raises(ValueError):
            deltas([])


class TestTimeEmbed:
    def test_all_zero_buckets(self):
        rng = np.random.default_rng(0)
        table = TimeEmbeddingTable.create(5, 3, rng)
        P = time_embed([0, 0, 0], table)
        for row in P:
            np.testing.assert_array_equal(row, table.table[0])

    def test_identity_table(self):
        table = TimeEmbeddingTable(table=np.eye(4))
        P = time_embed([2, 0, 3], table)
        np.testing.assert_array_equal(P, np.eye(4)[[2, 0, 3]])

    def test_out_of_range_clamps_to_last(self):
        table = TimeEmbeddingTable(table=np.arange(8.0).reshape(4, 2))
        np.testing.assert_array_equal(time_embed([99], table)[0], table.table[3])


def rand_attention(rng, kp, g, m):
    return AttentionParams.create(kp, g, m, rng)


class TestPools:
    def test_singleton_is_exact_row(self):
        rng = np.random.default_rng(1)
        a = rand_attention(rng, 3, 2, 4)
        H = rng.normal(size=(1, 3))
        P = rng.normal(size=(1, 2))
        hhat, alpha = time_attention_pool(H, P, a)
        np.testing.assert_array_equal(alpha, [1.0])
        np.testing.assert_array_equal(hhat, H[0])

    def test_identical_rows_uniform(self):
        rng = np.random.default_rng(2)
        a = rand_attention(rng, 3, 2, 4)
        H = np.tile(rng.normal(size=3), (5, 1))
        P = np.tile(rng.normal(size=2), (5, 1))
        hhat, alpha = time_attention_pool(H, P, a)
        np.testing.assert_allclose(alpha, np.full(5, 0.2), atol=1e-15)
        np.testing.assert_allclose(hhat, H[0], atol=1e-15)

    def test_scalar_case_vs_straight_line(self):
        # k' = g = m = 1: write the three equations out longhand
        rng = np.random.default_rng(3)
        for _ in range(10):
            a = rand_attention(rng, 1, 1, 1)
            H = rng.normal(size=(3, 1))
            P = rng.normal(size=(3, 1))
            eps = np.array([a.w_s[0] * np.tanh(a.W_e[0, 0] * H[i, 0] + a.W_t[0, 0] * P[i, 0])
                            for i in range(3)])
            e = np.exp(eps - eps.max())
            alpha_o = e / e.sum()
            hhat_o = float((alpha_o * H[:, 0]).sum())
            hhat, alpha = time_attention_pool(H, P, a)
            np.testing.assert_allclose(alpha, alpha_o, atol=1e-12)
            assert abs(hhat[0] - hhat_o) < 1e-12

    def test_wt_zero_reduces_to_self_attention(self):
        rng = np.random.default_rng(4)
        a = rand_attention(rng, 3, 2, 4)
        a.W_t[...] = 0.0
        H = rng.normal(size=(6, 3))
        P = rng.normal(size=(6, 2))
        h1, al1 = time_attention_pool(H, P, a)
        h2, al2 = self_attention_pool(H, a)
        np.testing.assert_allclose(h1, h2, atol=1e-15)
        np.testing.assert_allclose(al1, al2, atol=1e-15)

    def test_self_attention_scalar_oracle(self):
        rng = np.random.default_rng(5)
        a = rand_attention(rng, 1, None, 1)
        H = rng.normal(size=(4, 1))
        eps = np.array([a.w_s[0] * np.tanh(a.W_e[0, 0] * H[i, 0]) for i in range(4)])
        e = np.exp(eps - eps.max())
        alpha_o = e / e.sum()
        hhat, alpha = self_attention_pool(H, a)
        np.testing.assert_allclose(alpha, alpha_o, atol=1e-12)
        assert abs(hhat[0] - float((alpha_o * H[:, 0]).sum())) < 1e-12

    def test_row_count_mismatch(self):
        rng = np.random.default_rng(6)
        a = rand_attention(rng, 3, 2, 4)
        with pytest.raises(DimensionError):
            time_attention_pool(rng.normal(size=(3, 3)), rng.normal(size=(2, 2)), a)

    def test_empty(self):
        rng = np.random.default_rng(7)
        a = rand_attention(rng, 3, 2, 4)
        with pytest.raises(ValueError):
            time_attention_pool(np.zeros((0, 3)), np.zeros((0, 2)), a)


class TestPoolInvariants:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 10_000))
    def test_simplex_and_hull(self, n, seed):
        rng = np.random.default_rng(seed)
        a = rand_attention(rng, 3, 2, 4)
        H = rng.normal(size=(n, 3)) * 2
        P = rng.normal(size=(n, 2))
        hhat, alpha = time_attention_pool(H, P, a)
        assert np.all(alpha >= 0)
        assert abs(alpha.sum() - 1.0) <= 1e-9
        # convex hull containment, columnwise
        assert np.all(hhat >= H.min(axis=0) - 1e-12)
        assert np.all(hhat <= H.max(axis=0) + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 10_000))
    def test_joint_permutation_equivariance(self, n, seed):
        rng = np.random.default_rng(seed)
        a = rand_attention(rng, 3, 2, 4)
        H = rng.normal(size=(n, 3))
        P = rng.normal(size=(n, 2))
        perm = rng.permutation(n)
        h1, al1 = time_attention_pool(H, P, a)
        h2, al2 = time_attention_pool(H[perm], P[perm], a)
        np.testing.assert_allclose(al2, al1[perm], atol=1e-12)
        np.testing.assert_allclose(h2, h1, atol=1e-12)


class TestPoolGradients:
    def test_time_attention_gradients(self):
        rng = np.random.default_rng(8)
        n, kp, g, m = 5, 3, 2, 4
        store = ParamStore()
        Hv, Hg = store.register("H", rng.normal(size=(n, kp)))
        Pv, Pg = store.register("P", rng.normal(size=(n, g)))
        a = rand_attention(rng, kp, g, m)
        grads = AttentionParams(W_e=store.register("W_e", a.W_e)[1],
                                W_t=store.register("W_t", a.W_t)[1],
                                w_s=store.register("w_s", a.w_s)[1])
        a = AttentionParams(W_e=store.value("W_e"), W_t=store.value("W_t"),
                            w_s=store.value("w_s"))
        C = rng.normal(size=kp)

        def loss():
            hhat, _, cache = time_attention_pool(Hv, Pv, a, return_cache=True)
            dH, dP = attention_pool_backward(C, cache, a, grads)
            Hg[...] += dH
            Pg[...] += dP
            return float(hhat @ C)

        report = finite_diff_check(loss, store, eps=1e-4, tol=1e-4)
        assert report.passed, (report.worst_param, report.worst_err)

    def test_self_attention_gradients(self):
        rng = np.random.default_rng(9)
        n, kp, m = 4, 3, 4
        store = ParamStore()
        Hv, Hg = store.register("H", rng.normal(size=(n, kp)))
        a0 = rand_attention(rng, kp, None, m)
        grads = AttentionParams(W_e=store.register("W_e", a0.W_e)[1], W_t=None,
                                w_s=store.register("w_s", a0.w_s)[1])
        a = AttentionParams(W_e=store.value("W_e"), W_t=None, w_s=store.value("w_s"))
        C = rng.normal(size=kp)

        def loss():
            hhat, _, cache = self_attention_pool(Hv, a, return_cache=True)
            dH, _ = attention_pool_backward(C, cache, a, grads)
            Hg[...] += dH
            return float(hhat @ C)

        report = finite_diff_check(loss, store, eps=1e-4, tol=1e-4)
        assert report.passed, (report.worst_param, report.worst_err)
