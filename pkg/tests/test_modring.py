import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cipherobs.modring import (
    DimensionMismatch,
    ModMatrix,
    Modulus,
    ModulusMismatch,
    NotFullRowRank,
    PrimalityError,
    SingularMatrix,
    ZeroRow,
    centered_difference_check,
    cmod,
    complete_basis,
    inverse_mod,
    mat_mul_mod,
    rank_mod,
    right_inverse_row,
)
from .helpers import egcd_inverse, random_mod_matrix

Q5 = Modulus(5)
Q7 = Modulus(7)
Q101 = Modulus(101)


class TestModulus:
    def test_rejects_composite(self):
        for bad in (1, 4, 9, 15, 2 ** 16):
            with pytest.raises(PrimalityError):
                Modulus(bad)

    def test_rejects_two(self):
        with pytest.raises(PrimalityError):
            Modulus(2)

    def test_accepts_large_prime(self):
        q = Modulus(2 ** 109 - 31)
        assert q.half == Fraction(2 ** 109 - 31, 2)

    def test_immutable(self):
        with pytest.raises(AttributeError):
            Q5.q = 7


class TestCmod:
    def test_examples(self):
        assert cmod(7, Q5) == 2
        assert cmod(3, Q5) == -2

    def test_fixed_points_of_centered_range(self):
        # the whole centered range maps to itself, including its lower edge
        lo = -(Q5.q - 1) // 2
        for v in range(lo, -lo + 1):
            assert cmod(v, Q5) == v

    def test_matrix_input(self):
        M = cmod([[7, 3], [-8, 12]], Q5)
        assert M.rows == ((2, -2), (2, 2))

    @given(st.integers(-10 ** 12, 10 ** 12), st.integers(-10 ** 12, 10 ** 12))
    def test_ring_homomorphism(self, a, b):
        assert Q101.cmod(a + b) == Q101.cmod(Q101.cmod(a) + Q101.cmod(b))
        assert Q101.cmod(a * b) == Q101.cmod(Q101.cmod(a) * Q101.cmod(b))

    @given(st.integers(-10 ** 9, 10 ** 9))
    def test_range(self, a):
        v = Q101.cmod(a)
        assert -50 <= v <= 50
        assert (v - a) % 101 == 0


class TestCenteredDifference:
    @given(st.integers(-50, 50), st.integers(-50, 50))
    def test_property_on_random_pairs(self, a, b):
        # returns False when the hypothesis fails, raises if the
        # conclusion is ever violated under the hypothesis
        held = centered_difference_check(a, b, Q101)
        if abs(a) + abs(Q101.cmod(a - b)) < 50.5:
            assert held

    def test_hypothesis_filter(self):
        assert centered_difference_check(1, 3, Q101) is True
        # |a| + |cmod(a-b)| = 50 + 3 >= 101/2
        assert centered_difference_check(50, 47, Q101) in (True, False)


class TestMatMul:
    def test_identity(self, q101):
        rng = random.Random(1)
        B = random_mod_matrix(rng, 3, 4, q101)
        assert ModMatrix.identity(3, q101) @ B == B

    def test_zero(self, q101):
        rng = random.Random(2)
        A = random_mod_matrix(rng, 3, 3, q101)
        Z = ModMatrix.zeros(3, 2, q101)
        assert (A @ Z).is_zero()

    def test_hand_example(self):
        A = ModMatrix([[2, 3]], Q7)
        B = ModMatrix([[4], [5]], Q7)
        assert (A @ B).rows == ((2,),)  # 23 mod 7

    def test_dimension_mismatch(self, q101):
        with pytest.raises(DimensionMismatch):
            ModMatrix.zeros(2, 3, q101) @ ModMatrix.zeros(2, 3, q101)

    def test_modulus_mismatch(self):
        with pytest.raises(ModulusMismatch):
            ModMatrix.zeros(2, 2, Q5) @ ModMatrix.zeros(2, 2, Q7)

    def test_empty_inner_dimension(self, q101):
        A = ModMatrix.zeros(3, 0, q101)
        B = ModMatrix.zeros(0, 2, q101)
        assert (A @ B) == ModMatrix.zeros(3, 2, q101)

    def test_against_dense_oracle(self, q101):
        from .helpers import dense_int_matmul
        rng = random.Random(3)
        A = random_mod_matrix(rng, 4, 5, q101)
        B = random_mod_matrix(rng, 5, 3, q101)
        assert (A @ B).rows == dense_int_matmul(A.rows, B.rows, 101)


class TestInverse:
    def test_identity(self, q101):
        eye = ModMatrix.identity(4, q101)
        assert inverse_mod(eye) == eye

    def test_unipotent(self):
        A = ModMatrix([[1, 1], [0, 1]], Q5)
        assert inverse_mod(A).rows == ((1, -1), (0, 1))

    def test_scalar_extended_euclid_oracle(self):
        A = ModMatrix([[2]], Q7)
        inv = inverse_mod(A).rows[0][0]
        assert inv == -3
        assert inv % 7 == egcd_inverse(2, 7)

    def test_singular(self, q101):
        A = ModMatrix([[1, 2], [2, 4]], q101)
        with pytest.raises(SingularMatrix):
            inverse_mod(A)

    def test_random_roundtrip(self, q101):
        rng = random.Random(4)
        eye = ModMatrix.identity(5, q101)
        found = 0
        while found < 20:
            A = random_mod_matrix(rng, 5, 5, q101)
            if rank_mod(A) < 5:
                continue
            found += 1
            assert A @ inverse_mod(A) == eye
            assert inverse_mod(A) @ A == eye


class TestRank:
    def test_zero(self, q101):
        assert rank_mod(ModMatrix.zeros(3, 4, q101)) == 0

    def test_identity(self, q101):
        assert rank_mod(ModMatrix.identity(6, q101)) == 6

    def test_dependent_rows(self):
        assert rank_mod(ModMatrix([[1, 2], [2, 4]], Q5)) == 1

    def test_rank_only_counts_field_independence(self):
        # rows dependent over Z_5 but not over the rationals
        assert rank_mod(ModMatrix([[1, 2], [6, 12]], Q5)) == 1


class TestCompleteBasis:
    def test_single_unit_row(self):
        T2 = ModMatrix([[0, 0, 1]], Q7)
        T1 = complete_basis(T2)
        assert T1.rows == ((1, 0, 0), (0, 1, 0))

    def test_identity_needs_nothing(self, q101):
        T2 = ModMatrix.identity(4, q101)
        T1 = complete_basis(T2)
        assert T1.nrows == 0 and T1.ncols == 4

    def test_pivot_in_first_column(self):
        T2 = ModMatrix([[1, 1, 0]], Q5)
        T1 = complete_basis(T2)
        assert T1.rows == ((0, 1, 0), (0, 0, 1))
        assert rank_mod(T1.vstack(T2)) == 3

    def test_rank_deficient_rejected(self, q101):
        with pytest.raises(NotFullRowRank):
            complete_basis(ModMatrix([[1, 2], [2, 4]], q101))

    def test_random_completions_stack_invertible(self, q101):
        rng = random.Random(5)
        for _ in range(25):
            rows = rng.randrange(1, 4)
            T2 = random_mod_matrix(rng, rows, 5, q101)
            if rank_mod(T2) < rows:
                continue
            T1 = complete_basis(T2)
            assert rank_mod(T1.vstack(T2)) == 5


class TestRightInverse:
    def test_unit_vector(self, q101):
        sigma = ModMatrix([[1, 0, 0]], q101)
        assert right_inverse_row(sigma).column_entries() == (1, 0, 0)

    def test_two_entry_oracle(self):
        sigma = ModMatrix([[2, 0]], Q5)
        dag = right_inverse_row(sigma)
        assert dag.column_entries()[0] % 5 == egcd_inverse(2, 5)
        assert (sigma @ dag).rows == ((1,),)

    def test_interior_entry_oracle(self):
        sigma = ModMatrix([[0, 3, 0]], Q7)
        dag = right_inverse_row(sigma)
        assert dag.column_entries()[1] % 7 == egcd_inverse(3, 7)  # 5 mod 7
        assert (sigma @ dag).rows == ((1,),)

    def test_zero_row_rejected(self, q101):
        with pytest.raises(ZeroRow):
            right_inverse_row(ModMatrix.zeros(1, 4, q101))

    def test_projector_idempotent(self, q101):
        rng = random.Random(6)
        eye = ModMatrix.identity(4, q101)
        for _ in range(20):
            sigma = random_mod_matrix(rng, 1, 4, q101)
            if sigma.is_zero():
                continue
            dag = right_inverse_row(sigma)
            assert (sigma @ dag).rows == ((1,),)
            proj = eye - dag @ sigma
            assert proj @ proj == proj


class TestMatrixBasics:
    def test_entries_always_centered(self, q101):
        M = ModMatrix([[1000, -1000], [51, -51]], q101)
        assert all(-50 <= v <= 50 for v in M.flat())

    def test_immutability(self, q101):
        M = ModMatrix.identity(2, q101)
        with pytest.raises(AttributeError):
            M.rows = ()

    def test_norms(self, q101):
        M = ModMatrix([[3, -4], [1, 0]], q101)
        assert M.max_abs() == 4
        assert M.inf_norm() == 7

    def test_scale_and_neg(self, q101):
        M = ModMatrix([[3, -4]], q101)
        assert M.scale(-1) == -M
        assert (M.scale(2)).rows == ((6, -8),)
