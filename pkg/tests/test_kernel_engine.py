"""
Tests for the pooled-anchor kernel and the per-coordinate split statistics.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dakscan.errors import ConfigurationError, DomainError, InputError
from dakscan.modules.kernel_module.dak_kernel import (
    CoordinateSlice, DakKernelEngine, PairKernelMatrix, SampleMatrix, angular_indicator,
    build_pair_kernel, coordinate_chunks, pooled_pair_kernel, rank_shortcut, split_set,
    xi_matrix, xi_profile,
)

from oracles import naive_counts, naive_xi_exact

distinct_columns = st.lists(st.integers(min_value=-1000, max_value=1000),
                            min_size=4, max_size=12, unique=True)
tied_columns = st.lists(st.integers(min_value=-3, max_value=3), min_size=4, max_size=12)


def test_angular_indicator_examples():
    assert angular_indicator(1, 3, 2) == 1
    assert angular_indicator(1, 3, 1) == 0
    assert angular_indicator(1, 3, 3) == 0
    assert angular_indicator(1, 3, 0) == 0
    assert angular_indicator(3, 1, 2) == 1
    assert angular_indicator(2, 2, 2) == 0


class TestPooledPairKernel:

    def setup_method(self):
        self.ladder = CoordinateSlice.from_values([10.0, 20.0, 30.0, 40.0])

    def test_outer_pair_counts_interior_anchors(self):
        assert pooled_pair_kernel(self.ladder, 0, 3) == 0.5

    def test_adjacent_pair_is_zero(self):
        assert pooled_pair_kernel(self.ladder, 0, 1) == 0.0

    def test_ties_are_not_strictly_between(self):
        tied = CoordinateSlice.from_values([5.0, 5.0, 5.0, 9.0])
        assert pooled_pair_kernel(tied, 0, 3) == 0.0

    def test_symmetric_in_arguments(self):
        assert pooled_pair_kernel(self.ladder, 3, 0) == pooled_pair_kernel(self.ladder, 0, 3)

    def test_diagonal_is_rejected(self):
        with pytest.raises(DomainError):
            pooled_pair_kernel(self.ladder, 2, 2)

    def test_out_of_range_rows_rejected(self):
        with pytest.raises(DomainError):
            pooled_pair_kernel(self.ladder, 0, 4)

    def test_non_finite_coordinate_rejected(self):
        with pytest.raises(InputError):
            CoordinateSlice.from_values([1.0, np.nan, 2.0, 3.0])


class TestBuildPairKernel:

    def test_two_rows_give_zero_matrix(self):
        kernel = build_pair_kernel(CoordinateSlice.from_values([1.5, -2.0]))
        assert np.array_equal(kernel.entries, np.zeros((2, 2)))

    def test_ladder_entries(self):
        kernel = build_pair_kernel(CoordinateSlice.from_values([10.0, 20.0, 30.0, 40.0])).entries
        assert kernel[0, 3] == 0.5
        assert kernel[0, 2] == 0.25
        assert kernel[1, 2] == 0.0
        assert np.array_equal(kernel, kernel.T)
        assert np.all(np.diag(kernel) == 0)

    def test_constant_column_gives_zero_matrix(self):
        kernel = build_pair_kernel(CoordinateSlice.from_values(np.full(7, 2.5)))
        assert not np.any(kernel.counts)

    @given(tied_columns)
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force_counts(self, column):
        kernel = build_pair_kernel(CoordinateSlice.from_values(column))
        assert np.array_equal(kernel.counts, naive_counts(column))
        assert kernel.n_anchors == len(column)

    @given(distinct_columns)
    @settings(max_examples=60, deadline=None)
    def test_rank_shortcut_on_distinct_values(self, column):
        coordinate = CoordinateSlice.from_values(column)
        assert np.array_equal(rank_shortcut(coordinate), build_pair_kernel(coordinate).entries)

    def test_rank_shortcut_needs_distinct_values(self):
        with pytest.raises(DomainError):
            rank_shortcut(CoordinateSlice.from_values([1.0, 1.0, 2.0, 3.0]))

    @given(distinct_columns)
    @settings(max_examples=40, deadline=None)
    def test_strictly_increasing_map_leaves_kernel_unchanged(self, column):
        values = np.array(column, dtype=np.float64)
        original = build_pair_kernel(CoordinateSlice.from_values(values))
        mapped = build_pair_kernel(CoordinateSlice.from_values(values ** 3 + 7.0))
        assert np.array_equal(original.counts, mapped.counts)


class TestPairKernelMatrix:

    def test_from_entries_validates_shape(self):
        with pytest.raises(InputError):
            PairKernelMatrix.from_entries(np.zeros((3, 4)))

    def test_from_entries_validates_symmetry(self):
        entries = np.zeros((4, 4))
        entries[0, 1] = 0.5
        with pytest.raises(InputError):
            PairKernelMatrix.from_entries(entries)

    def test_from_entries_validates_diagonal(self):
        with pytest.raises(InputError):
            PairKernelMatrix.from_entries(np.eye(4))


class TestXiProfile:

    def test_zero_kernel_gives_zero_profile(self):
        profile = xi_profile(PairKernelMatrix.from_entries(np.zeros((6, 6))))
        assert np.array_equal(profile, np.zeros(3))

    def test_pure_cross_block(self):
        c = 0.25
        entries = np.zeros((4, 4))
        for i, j in [(0, 2), (0, 3), (1, 2), (1, 3)]:
            entries[i, j] = entries[j, i] = c
        profile = xi_profile(PairKernelMatrix.from_entries(entries))
        assert profile.shape == (1,)
        assert profile[0] == 2 * c

    def test_random_real_matrix_matches_naive(self, rng):
        upper = np.triu(rng.random((6, 6)), k=1)
        entries = upper + upper.T
        expected = naive_xi_exact(entries, 1)
        assert np.array_equal(xi_profile(PairKernelMatrix.from_entries(entries)), expected)

    def test_real_matrices_are_bit_identical_to_naive(self):
        generator = np.random.default_rng(77)
        for _ in range(200):
            upper = np.triu(generator.standard_normal((6, 6)) * 10.0 ** generator.integers(-3, 4), k=1)
            entries = upper + upper.T
            profile = xi_profile(PairKernelMatrix.from_entries(entries))
            assert np.array_equal(profile, naive_xi_exact(entries, 1))

    def test_real_matrix_result_ignores_row_order_within_blocks(self, rng):
        upper = np.triu(rng.random((7, 7)), k=1)
        entries = upper + upper.T
        order = np.array([1, 0, 2, 3, 4, 6, 5])
        swapped = entries[np.ix_(order, order)]
        first = xi_profile(PairKernelMatrix.from_entries(entries))
        second = xi_profile(PairKernelMatrix.from_entries(swapped))
        # Swapping rows 0,1 and 5,6 keeps every block intact for t = 2 and t = 5.
        assert first[0] == second[0]
        assert first[3] == second[3]

    @given(tied_columns)
    @settings(max_examples=60, deadline=None)
    def test_incremental_sweep_is_bit_identical_to_naive(self, column):
        kernel = build_pair_kernel(CoordinateSlice.from_values(column))
        expected = naive_xi_exact(naive_counts(column), len(column))
        assert np.array_equal(xi_profile(kernel), expected)

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=4, max_size=15))
    @settings(max_examples=60, deadline=None)
    def test_profile_is_bounded_by_two(self, column):
        profile = xi_profile(build_pair_kernel(CoordinateSlice.from_values(column)))
        assert np.all(np.abs(profile) < 2.0)

    def test_needs_four_rows(self):
        with pytest.raises(ConfigurationError):
            xi_profile(PairKernelMatrix.from_entries(np.zeros((3, 3))))


class TestXiMatrix:

    def setup_method(self):
        generator = np.random.default_rng(7)
        self.values = generator.standard_cauchy((9, 13))
        self.sample = SampleMatrix(self.values)

    def test_split_set_is_two_to_n_minus_two(self):
        assert split_set(9).tolist() == [2, 3, 4, 5, 6, 7]
        assert xi_matrix(self.sample).split_set.tolist() == [2, 3, 4, 5, 6, 7]

    def test_single_column_reduces_to_xi_profile(self):
        single = SampleMatrix(self.values[:, :1])
        expected = xi_profile(build_pair_kernel(single.column(0)))
        assert np.array_equal(xi_matrix(single).entries[0], expected)

    def test_rows_equal_per_column_profiles(self):
        xi = xi_matrix(self.sample)
        for k in range(self.sample.n_dims):
            assert np.array_equal(xi.entries[k], xi_profile(build_pair_kernel(self.sample.column(k))))

    def test_duplicated_column_gives_identical_rows(self):
        doubled = SampleMatrix(np.hstack([self.values[:, :1], self.values[:, :1]]))
        xi = xi_matrix(doubled)
        assert np.array_equal(xi.entries[0], xi.entries[1])

    def test_monotone_rescaling_of_one_coordinate(self):
        rescaled = self.values.copy()
        rescaled[:, 4] = np.cbrt(rescaled[:, 4]) * 5.0 - 1.0
        assert np.array_equal(xi_matrix(SampleMatrix(rescaled)).entries, xi_matrix(self.sample).entries)

    def test_identical_output_for_any_thread_count(self):
        serial = xi_matrix(self.sample, cpus=1, chunk_size=2)
        threaded = xi_matrix(self.sample, cpus=4, chunk_size=2)
        assert np.array_equal(serial.entries, threaded.entries)

    def test_chunks_cover_every_coordinate(self):
        chunks = coordinate_chunks(9, 13, chunk_size=5)
        assert chunks == [(0, 5), (5, 10), (10, 13)]
        assert coordinate_chunks(9, 13)[-1][1] == 13

    def test_non_finite_input_rejected(self):
        values = self.values.copy()
        values[3, 2] = np.inf
        with pytest.raises(InputError):
            SampleMatrix(values)

    def test_too_few_rows_rejected(self):
        with pytest.raises(ConfigurationError):
            SampleMatrix(np.zeros((3, 5)))

    def test_engine_matches_function(self):
        engine = DakKernelEngine(cpus=2, chunk_size=3)
        assert np.array_equal(engine.xi_matrix(self.sample).entries, xi_matrix(self.sample).entries)
        assert np.array_equal(engine.column_profile(self.sample, 2), xi_matrix(self.sample).entries[2])
        with pytest.raises(DomainError):
            engine.column_profile(self.sample, 13)
