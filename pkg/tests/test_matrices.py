import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import aimdalloc.matrices as mx
from aimdalloc.matrices import (
    aimd_matrix,
    all_patterns,
    block_max_l1,
    chain_product,
    event_block_matrix,
    full_backoff_matrix,
    l1_norm,
    lift_window,
    max_norm_ratio,
    pattern_probability,
    pattern_vector,
    project_block_zero_sum,
    property_suite,
    random_block_zero_sum,
    sample_pattern,
)


class TestEventMatrix:
    def test_all_keep_is_identity(self):
        np.testing.assert_array_equal(aimd_matrix([1.0, 1.0]), np.eye(2))

    def test_hand_full_backoff(self):
        np.testing.assert_allclose(
            aimd_matrix([0.5, 0.5]), [[0.75, 0.25], [0.25, 0.75]], atol=1e-15
        )

    def test_columns_sum_to_one_mixed_pattern(self):
        A = aimd_matrix([0.5, 1.0])
        np.testing.assert_allclose(A.sum(axis=0), [1.0, 1.0], atol=1e-15)

    def test_rejects_bad_entries(self):
        with pytest.raises(ValueError):
            aimd_matrix([0.5, 1.5])
        with pytest.raises(ValueError):
            aimd_matrix([0.0, 1.0])

    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_random_patterns_column_stochastic(self, n):
        rng = np.random.default_rng(n)
        for _ in range(100):
            p = pattern_vector(rng.random(n) < 0.5, 0.3 + 0.5 * rng.random())
            A = aimd_matrix(p)
            assert np.abs(A.sum(axis=0) - 1.0).max() <= 1e-12
            assert A.min() >= 0.0


class TestFullBackoffMatrix:
    def test_hand_n2(self):
        B = full_backoff_matrix(0.5, 2)
        np.testing.assert_allclose(B, [[0.75, 0.25], [0.25, 0.75]], atol=1e-15)
        assert B.min() == pytest.approx(0.25)

    def test_single_agent_is_identity(self):
        np.testing.assert_allclose(full_backoff_matrix(0.7, 1), [[1.0]], atol=1e-15)

    def test_min_entry_n3(self):
        assert full_backoff_matrix(0.4, 3).min() == pytest.approx(0.2)

    def test_rejects_beta_out_of_range(self):
        with pytest.raises(ValueError):
            full_backoff_matrix(1.0, 2)


class TestPatternProbability:
    def test_hand_value(self):
        # P(agent 0 backs off) * P(agent 1 keeps) = 0.3 * 0.5
        assert pattern_probability([True, False], [0.3, 0.5]) == pytest.approx(0.15)

    def test_certain_event(self):
        assert pattern_probability([True, True], [1.0, 1.0]) == 1.0

    def test_total_probability(self):
        lam = [0.3, 0.5]
        total = sum(pattern_probability(mask, lam) for mask in all_patterns(2))
        assert total == pytest.approx(1.0, abs=1e-15)

    def test_sample_extremes(self):
        rng = np.random.default_rng(0)
        assert sample_pattern([1.0, 1.0], rng).all()
        assert not sample_pattern([0.0, 0.0], rng).any()

    def test_sample_monte_carlo_matches_product(self):
        # binomial oracle: freq of (backoff, keep) within 3 sigma of 0.15
        rng = np.random.default_rng(7)
        lam = np.array([0.3, 0.5])
        draws = 100_000
        hits = 0
        for _ in range(draws):
            mask = sample_pattern(lam, rng)
            if mask[0] and not mask[1]:
                hits += 1
        p = 0.15
        sigma = np.sqrt(p * (1 - p) / draws)
        assert abs(hits / draws - p) <= 3 * sigma


class TestNorms:
    def test_window_norm_hand(self):
        z = np.array([1.0, -1.0, 0.5, -0.5])
        assert block_max_l1(z, 2) == pytest.approx(2.0)

    def test_zero_vector(self):
        assert block_max_l1(np.zeros(6), 2) == 0.0

    def test_stacked_norm_is_max_over_blocks(self):
        y = np.array([1.0, -1.0, 1.5, -1.5])  # block norms 2 and 3
        assert block_max_l1(y, 2) == pytest.approx(3.0)

    def test_bad_length(self):
        with pytest.raises(ValueError):
            block_max_l1(np.ones(5), 2)

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), scale=st.floats(-10, 10))
    def test_norm_axioms(self, seed, scale):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 4))
        blocks = int(rng.integers(1, 5))
        u = rng.standard_normal(n * blocks)
        v = rng.standard_normal(n * blocks)
        assert block_max_l1(scale * u, n) == pytest.approx(abs(scale) * block_max_l1(u, n), abs=1e-12)
        assert block_max_l1(u + v, n) <= block_max_l1(u, n) + block_max_l1(v, n) + 1e-12
        if block_max_l1(u, n) == 0.0:
            assert np.all(u == 0)


class TestProjection:
    def test_constant_block_vanishes(self):
        np.testing.assert_allclose(project_block_zero_sum([1.0, 1.0], 2), [0.0, 0.0], atol=1e-15)

    def test_zero_sum_unchanged(self):
        np.testing.assert_allclose(project_block_zero_sum([1.0, -1.0], 2), [1.0, -1.0], atol=1e-15)

    def test_hand_value(self):
        np.testing.assert_allclose(project_block_zero_sum([2.0, 0.0], 2), [1.0, -1.0], atol=1e-15)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        v = rng.standard_normal(12)
        once = project_block_zero_sum(v, 3)
        np.testing.assert_allclose(project_block_zero_sum(once, 3), once, atol=1e-15)


class TestLiftWindow:
    def test_window_of_one_is_the_matrix(self):
        A = aimd_matrix([0.5, 1.0])
        np.testing.assert_array_equal(lift_window(A, 1), A)

    def test_identity_lift_T2(self):
        D = lift_window(np.eye(2), 2)
        expected = np.block([[np.eye(2), np.zeros((2, 2))], [np.eye(2), np.zeros((2, 2))]])
        np.testing.assert_allclose(D, expected, atol=1e-15)

    def test_scalar_T3_structure(self):
        D = lift_window(np.array([[1.0]]), 3)
        expected = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1 / 3, 2 / 3, 0.0]])
        np.testing.assert_allclose(D, expected, atol=1e-15)

    def test_square_of_scalar_lift(self):
        D = lift_window(np.array([[1.0]]), 2)
        np.testing.assert_allclose(D @ D, [[1.0, 0.0], [1.0, 0.0]], atol=1e-15)

    def test_rows_are_running_means(self):
        # applying the lift must put the mean of the newest r samples in row r
        rng = np.random.default_rng(5)
        n, T = 3, 4
        samples = [rng.random(n)]
        xi = np.tile(samples[0], T)
        beta = 0.6
        for _ in range(6):
            p = pattern_vector(rng.random(n) < 0.5, beta)
            A = aimd_matrix(p)
            xi = lift_window(A, T) @ xi
            samples.append(A @ samples[-1])
            for r in range(1, T + 1):
                take = samples[-r:] if len(samples) >= r else samples
                pad = r - len(take)
                expected = (np.sum(take, axis=0) + pad * samples[0]) / r
                np.testing.assert_allclose(xi[(r - 1) * n : r * n], expected, atol=1e-12)


def lifted_power_closed_form(A: np.ndarray, T: int, p: int) -> np.ndarray:
    """Independent oracle for p-fold products of one lift: geometric-sum rows.

    Block row r collects (A^p + ... + A^{max(1, p-r+1)})/r in the first block
    column, an extra I/r when r > p lands on the start-of-window column, and
    the shift term ((r-p)/r) I in block column r-p.
    """
    n = A.shape[0]
    out = np.zeros((T * n, T * n))
    powers = [np.linalg.matrix_power(A, k) for k in range(p + 1)]
    for r in range(1, T + 1):
        rows = slice((r - 1) * n, r * n)
        lo = max(1, p - r + 1)
        acc = np.zeros((n, n))
        for k in range(lo, p + 1):
            acc += powers[k]
        out[rows, 0:n] += acc / r
        if r > p:
            cols = slice((r - p - 1) * n, (r - p) * n)
            out[rows, cols] += (r - p) / r * np.eye(n)
    return out


@pytest.mark.parametrize("T", [1, 2, 3])
@pytest.mark.parametrize("p", [1, 2, 3, 5])
def test_lifted_power_matches_closed_form(T, p):
    rng = np.random.default_rng(T * 10 + p)
    A = aimd_matrix(pattern_vector(rng.random(3) < 0.5, 0.4))
    D = lift_window(A, T)
    direct = np.linalg.matrix_power(D, p)
    np.testing.assert_allclose(direct, lifted_power_closed_form(A, T, p), atol=1e-13)


class TestEventBlockMatrix:
    def test_single_resource_is_the_lift(self):
        D = lift_window(aimd_matrix([0.5, 0.5]), 2)
        np.testing.assert_array_equal(event_block_matrix(D, 0, 1), D)

    def test_second_resource_active(self):
        D = lift_window(aimd_matrix([0.5, 0.5]), 2)
        U = event_block_matrix(D, 1, 2)
        np.testing.assert_array_equal(U[:4, :4], np.eye(4))
        np.testing.assert_array_equal(U[4:, 4:], D)

    def test_three_blocks(self):
        D = lift_window(aimd_matrix([0.5]), 3)
        U = event_block_matrix(D, 1, 3)
        np.testing.assert_array_equal(U[:3, :3], np.eye(3))
        np.testing.assert_array_equal(U[3:6, 3:6], D)
        np.testing.assert_array_equal(U[6:, 6:], np.eye(3))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            event_block_matrix(np.eye(2), 2, 2)


class TestChainProduct:
    def test_single_factor(self):
        A = aimd_matrix([0.5, 1.0])
        np.testing.assert_array_equal(chain_product([A]), A)

    def test_application_order(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        B = np.array([[1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_array_equal(chain_product([A, B]), B @ A)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            chain_product([np.eye(2), np.eye(3)])

    def test_products_of_stochastic_factors_stay_stochastic(self):
        rng = np.random.default_rng(11)
        for n in (1, 2, 3, 5):
            for _ in range(50):
                k = int(rng.integers(1, 7))
                P = chain_product(
                    [aimd_matrix(pattern_vector(rng.random(n) < 0.5, 0.5)) for _ in range(k)]
                )
                assert np.abs(P.sum(axis=0) - 1.0).max() <= 1e-12
                assert P.min() >= 0.0


class TestNormRatio:
    def test_identity_ratio_is_one(self):
        check = max_norm_ratio(np.eye(6), 2, trials=64, rng=0)
        assert check.max_ratio == pytest.approx(1.0, abs=1e-12)

    def test_lift_nonexpansive_anywhere(self):
        rng = np.random.default_rng(0)
        for T in (1, 2, 4):
            A = aimd_matrix(pattern_vector(rng.random(3) < 0.5, 0.5))
            check = max_norm_ratio(lift_window(A, T), 3, trials=500, rng=rng)
            assert check.nonexpansive()

    def test_full_backoff_lift_contracts_on_zero_sum(self):
        for n in (2, 3):
            E = lift_window(full_backoff_matrix(0.5, n), 3)
            check = max_norm_ratio(E, n, zero_sum=True, trials=500, rng=1)
            assert check.strictly_contracting()
            assert check.witness.shape == (3 * n,)

    def test_degenerate_zero_sum_space(self):
        # single agent: zero-sum blocks are trivial, probe reports no expansion
        check = max_norm_ratio(np.eye(3), 1, zero_sum=True, trials=16, rng=2)
        assert check.max_ratio == 0.0


class TestPropertySuite:
    def test_reference_system_passes(self):
        results = property_suite(2, 4, 2, [0.8, 0.85], trials=150, seed=0)
        assert all(r.passed for r in results)
        names = {r.name for r in results}
        assert "full_backoff_block_product_contracts" in names

    def test_single_agent_degenerate_passes(self):
        results = property_suite(1, 2, 1, 0.5, trials=60, seed=1)
        assert all(r.passed for r in results)

    def test_corrupted_builder_is_caught(self, monkeypatch):
        # identity instead of the all-back-off matrix: strict contraction must fail
        monkeypatch.setattr(mx, "full_backoff_matrix", lambda beta, n: np.eye(n))
        results = {r.name: r for r in property_suite(2, 2, 1, 0.5, trials=60, seed=2)}
        failed = results["full_backoff_lift_contracts"]
        assert not failed.passed
        assert failed.worst >= 1.0 - 1e-10
        # the report carries the witness realizing the offending ratio
        assert failed.witness is not None and len(failed.witness) == 2 * 2


def test_random_block_zero_sum_property():
    Z = random_block_zero_sum(12, 3, np.random.default_rng(0), trials=8)
    sums = Z.reshape(4, 3, 8).sum(axis=1)
    assert np.abs(sums).max() <= 1e-12
