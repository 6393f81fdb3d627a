"""Projection context: hat-matrix entries, Q and B kernels, fast paths."""

import numpy as np
import pytest

from mwiv import (
    DataError,
    Dataset,
    build_projection,
    cross_moment_B,
    quadratic_form_Q,
)

from conftest import dense_hat_matrix, judge_indicator_matrix, oracle_b, oracle_q


def judge_dataset(labels, rng=None, y=None, x=None):
    labels = np.asarray(labels, dtype=int)
    n = labels.size
    if rng is not None:
        y = rng.standard_normal(n)
        x = rng.standard_normal(n)
    return Dataset(y=np.asarray(y, float), x=np.asarray(x, float), instruments=labels)


def dense_dataset(z, rng):
    n = z.shape[0]
    return Dataset(y=rng.standard_normal(n), x=rng.standard_normal(n), instruments=z)


def random_judge_labels(rng, n_judges, lo=2, hi=12):
    sizes = rng.integers(lo, hi + 1, size=n_judges)
    return np.repeat(np.arange(n_judges), sizes)


class TestEntries:
    def test_balanced_judge_entries(self):
        # three judges, four cases each: P_ii = 1/4, M_ii = 3/4
        labels = np.repeat([0, 1, 2], 4)
        rng = np.random.default_rng(0)
        ctx = build_projection(judge_dataset(labels, rng))
        for i in (0, 5, 11):
            assert ctx.p_entry(i, i) == pytest.approx(0.25, abs=1e-14)
            assert ctx.m_diag(i) == pytest.approx(0.75, abs=1e-14)
        assert ctx.p_entry(0, 1) == pytest.approx(0.25, abs=1e-14)
        assert ctx.p_entry(0, 4) == 0.0

    def test_dense_trace_and_idempotence(self):
        rng = np.random.default_rng(1)
        z = rng.standard_normal((60, 6))
        ctx = build_projection(dense_dataset(z, rng))
        p = np.array([[ctx.p_entry(i, j) for j in range(60)] for i in range(60)])
        assert abs(np.trace(p) - 6.0) <= 1e-10
        assert np.max(np.abs(p @ p - p)) <= 1e-10

    def test_judge_matches_dense_indicators(self):
        rng = np.random.default_rng(2)
        labels = random_judge_labels(rng, 5)
        data_j = judge_dataset(labels, rng)
        ctx_j = build_projection(data_j)
        z = judge_indicator_matrix(labels)
        ctx_d = build_projection(
            Dataset(y=data_j.y, x=data_j.x, instruments=z)
        )
        n = labels.size
        for i in range(0, n, 3):
            for j in range(0, n, 4):
                assert ctx_j.p_entry(i, j) == pytest.approx(
                    ctx_d.p_entry(i, j), abs=1e-12
                )
                assert ctx_j.p_tilde_sq(i, j) == pytest.approx(
                    ctx_d.p_tilde_sq(i, j), abs=1e-12
                )

    def test_judge_ptilde_constant_within_judge(self):
        labels = np.repeat([0, 1], [4, 7])
        rng = np.random.default_rng(3)
        ctx = build_projection(judge_dataset(labels, rng))
        for k, nk in ((0, 4), (1, 7)):
            p = 1.0 / nk
            want = p**2 / ((1.0 - p) ** 2 + p**2)
            i = 0 if k == 0 else 4
            assert ctx.p_tilde_sq(i, i + 1) == pytest.approx(want, rel=1e-13)


class TestQuadraticForm:
    def test_single_judge_pair(self):
        # one judge, two cases: P_12 = 1/2, Q_xx = (x1 x2 + x2 x1)/2 / 1
        data = judge_dataset([0, 0], x=[1.0, 2.0], y=[0.0, 0.0])
        ctx = build_projection(data)
        assert quadratic_form_Q(ctx, data.x, data.x) == pytest.approx(2.0, abs=1e-14)

    def test_zero_vector(self):
        rng = np.random.default_rng(4)
        data = judge_dataset(random_judge_labels(rng, 4), rng)
        ctx = build_projection(data)
        assert quadratic_form_Q(ctx, np.zeros(data.n), data.x) == 0.0

    def test_against_loop_oracle_dense(self):
        rng = np.random.default_rng(5)
        z = rng.standard_normal((50, 5))
        data = dense_dataset(z, rng)
        ctx = build_projection(data)
        p = dense_hat_matrix(z)
        got = quadratic_form_Q(ctx, data.y, data.x)
        want = oracle_q(p, 5, data.y, data.x)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-12)

    def test_against_loop_oracle_judge(self):
        rng = np.random.default_rng(6)
        labels = random_judge_labels(rng, 5)
        data = judge_dataset(labels, rng)
        ctx = build_projection(data)
        p = dense_hat_matrix(judge_indicator_matrix(labels))
        got = quadratic_form_Q(ctx, data.y, data.x)
        want = oracle_q(p, 5, data.y, data.x)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-12)

    def test_argument_symmetry_exact(self):
        rng = np.random.default_rng(7)
        data = judge_dataset(random_judge_labels(rng, 6), rng)
        ctx = build_projection(data)
        assert quadratic_form_Q(ctx, data.y, data.x) == quadratic_form_Q(
            ctx, data.x, data.y
        )

    def test_noiseless_judge_value(self):
        # x equal to the judge mean: Q_xx = sum pi_k^2 (N_k - 1) / sqrt(K)
        labels = np.repeat([0, 1, 2], [3, 5, 4])
        pi = np.array([0.5, -1.0, 2.0])
        x = pi[labels]
        data = judge_dataset(labels, y=np.zeros(12), x=x)
        ctx = build_projection(data)
        want = (0.25 * 2 + 1.0 * 4 + 4.0 * 3) / np.sqrt(3.0)
        assert quadratic_form_Q(ctx, x, x) == pytest.approx(want, rel=1e-13)

    def test_length_mismatch(self):
        rng = np.random.default_rng(8)
        data = judge_dataset(random_judge_labels(rng, 4), rng)
        ctx = build_projection(data)
        with pytest.raises(DataError, match="dimension error"):
            quadratic_form_Q(ctx, data.x[:-1], data.x[:-1])


class TestCrossMoment:
    def test_zero_vector(self):
        rng = np.random.default_rng(9)
        data = judge_dataset(random_judge_labels(rng, 4), rng)
        ctx = build_projection(data)
        z = np.zeros(data.n)
        assert cross_moment_B(ctx, z, data.x, data.y, data.x) == 0.0

    def test_against_loop_oracle(self):
        rng = np.random.default_rng(10)
        labels = random_judge_labels(rng, 4, lo=3, hi=14)
        data = judge_dataset(labels, rng)
        ctx = build_projection(data)
        p = dense_hat_matrix(judge_indicator_matrix(labels))
        got = cross_moment_B(ctx, data.x, data.y, data.x, data.y)
        want = oracle_b(p, 4, data.x, data.y, data.x, data.y)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-12)

    def test_pair_swap_symmetry_exact(self):
        rng = np.random.default_rng(11)
        data = judge_dataset(random_judge_labels(rng, 5), rng)
        ctx = build_projection(data)
        a, b = data.x, data.y
        c = np.sin(np.arange(data.n, dtype=float))
        d = np.cos(np.arange(data.n, dtype=float))
        assert cross_moment_B(ctx, a, b, c, d) == cross_moment_B(ctx, c, d, a, b)

    def test_multilinear_expansion_in_beta0(self):
        # B(e0,e0,e0,e0) with e0 = y - b x expands into 16 base moments
        rng = np.random.default_rng(12)
        labels = random_judge_labels(rng, 5)
        data = judge_dataset(labels, rng)
        ctx = build_projection(data)
        vecs = {"y": data.y, "x": data.x}
        for beta0 in (-1.0, 0.5, 2.0):
            e0 = data.y - beta0 * data.x
            direct = cross_moment_B(ctx, e0, e0, e0, e0)
            expanded = 0.0
            for s1 in "yx":
                for s2 in "yx":
                    for s3 in "yx":
                        for s4 in "yx":
                            sign = (-beta0) ** sum(s == "x" for s in (s1, s2, s3, s4))
                            expanded += sign * cross_moment_B(
                                ctx, vecs[s1], vecs[s2], vecs[s3], vecs[s4]
                            )
            assert direct == pytest.approx(expanded, rel=1e-8, abs=1e-12)


class TestFastPathStructure:
    def test_no_dense_storage_for_judges(self):
        labels = np.repeat(np.arange(5000), 4)
        rng = np.random.default_rng(13)
        data = judge_dataset(labels, rng)
        ctx = build_projection(data)
        assert ctx.p is None
        assert ctx.labels is not None and ctx.labels.size == data.n
        assert np.isfinite(quadratic_form_Q(ctx, data.x, data.x))

    def test_judge_equals_dense_on_moments(self):
        rng = np.random.default_rng(14)
        for trial in range(5):
            labels = random_judge_labels(rng, int(rng.integers(3, 9)))
            data = judge_dataset(labels, rng)
            ctx_j = build_projection(data)
            ctx_d = build_projection(
                Dataset(y=data.y, x=data.x, instruments=judge_indicator_matrix(labels))
            )
            for a, b in ((data.x, data.x), (data.y, data.x), (data.y, data.y)):
                qj = quadratic_form_Q(ctx_j, a, b)
                qd = quadratic_form_Q(ctx_d, a, b)
                assert qj == pytest.approx(qd, rel=1e-10, abs=1e-12)
            bj = cross_moment_B(ctx_j, data.x, data.y, data.x, data.y)
            bd = cross_moment_B(ctx_d, data.x, data.y, data.x, data.y)
            assert bj == pytest.approx(bd, rel=1e-10, abs=1e-12)


class TestBuildErrors:
    def test_singleton_judge(self):
        with pytest.raises(DataError, match="insufficient cluster size"):
            build_projection(
                judge_dataset([0, 0, 1], y=[0.0, 1.0, 2.0], x=[1.0, 2.0, 3.0])
            )

    def test_rank_deficient_instruments(self):
        rng = np.random.default_rng(15)
        z = rng.standard_normal((30, 3))
        z = np.column_stack([z, z[:, 0] + z[:, 1]])
        with pytest.raises(DataError, match="rank-deficient instruments"):
            build_projection(dense_dataset(z, rng))

    def test_leverage_one_observation(self):
        # an instrument column that isolates one observation has M_ii = 0
        z = np.zeros((6, 2))
        z[:5, 0] = 1.0
        z[5, 1] = 1.0
        rng = np.random.default_rng(16)
        with pytest.raises(DataError, match="insufficient cluster size"):
            build_projection(dense_dataset(z, rng))
