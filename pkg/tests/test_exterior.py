from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import generator_coeffs, hodge_oracle, wedge_oracle
from orientflow import exterior as ex
from orientflow.exterior import GradeError, KIndex, MultiVector, hodge, inner_k, norm_k, wedge

finite = st.floats(-10, 10, allow_nan=False)


@st.composite
def grades(draw, m_max=6):
    m = draw(st.integers(2, m_max))
    k = draw(st.integers(0, m))
    l = draw(st.integers(0, m - k))
    a = draw(arrays(float, comb(m, k), elements=finite))
    b = draw(arrays(float, comb(m, l), elements=finite))
    return m, k, l, a, b


def e(*idx, m):
    return MultiVector.basis_element(idx, m)


class TestTypes:
    def test_kindex_validation(self):
        assert KIndex((1, 3), 4).position() == 1
        for bad in [(2, 1), (1, 1), (0, 2), (1, 5)]:
            with pytest.raises(GradeError):
                KIndex(bad, 4)

    def test_coefficient_length_checked(self):
        with pytest.raises(GradeError):
            MultiVector(3, 1, np.zeros(2))

    def test_dimension_cap(self):
        with pytest.raises(GradeError):
            ex.basis(9, 1)

    def test_immutable(self):
        v = MultiVector.vector([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            v.coeffs[0] = 5.0


class TestWedge:
    def test_generator_case(self):
        assert wedge(e(1, m=3), e(2, m=3)) == e(1, 2, m=3)

    def test_transposition_changes_sign(self):
        assert wedge(e(2, m=3), e(1, m=3)) == -e(1, 2, m=3)

    def test_vector_with_itself_vanishes(self, rng):
        a = MultiVector.vector(rng.standard_normal(5))
        assert np.allclose(wedge(a, a).coeffs, 0.0, atol=1e-15)

    def test_grade_overflow_rejected(self):
        with pytest.raises(GradeError):
            wedge(e(1, 2, m=3), e(2, 3, m=3))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(GradeError):
            wedge(e(1, m=3), e(1, m=4))

    @given(grades())
    def test_matches_determinant_oracle(self, case):
        m, k, l, a, b = case
        got = ex.wedge_coeffs(a, b, m, k, l)
        ref = wedge_oracle(a, b, m, k, l)
        assert np.allclose(got, ref, rtol=0, atol=1e-12 * (1 + np.abs(a).sum() * np.abs(b).sum()))

    @given(grades())
    def test_graded_commutativity(self, case):
        m, k, l, a, b = case
        lhs = ex.wedge_coeffs(a, b, m, k, l)
        rhs = (-1) ** (k * l) * ex.wedge_coeffs(b, a, m, l, k)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * (1 + np.linalg.norm(a) * np.linalg.norm(b))

    def test_generators_are_minors(self, rng):
        for m in range(2, 7):
            for k in range(1, m + 1):
                V = rng.standard_normal((k, m))
                g = MultiVector.generator(*V)
                assert np.allclose(g.coeffs, generator_coeffs(V, m), atol=1e-12)

    def test_associativity_on_generators(self, rng):
        u1, u2, u3 = (MultiVector.vector(rng.standard_normal(5)) for _ in range(3))
        assert wedge(wedge(u1, u2), u3).allclose(wedge(u1, wedge(u2, u3)))

    def test_vector_wedge_matches_general_wedge(self, rng):
        a, b = rng.standard_normal((7, 4)), rng.standard_normal((7, 4))
        assert np.allclose(ex.vector_wedge(a, b), ex.wedge_coeffs(a, b, 4, 1, 1), atol=1e-15)


class TestHodge:
    def test_e12_in_r3(self):
        assert hodge(e(1, 2, m=3)) == e(3, m=3)

    def test_scalar_unit_gives_volume(self):
        for m in range(2, 7):
            assert hodge(MultiVector.scalar(1.0, m)) == e(*range(1, m + 1), m=m)

    @given(grades())
    def test_matches_permutation_oracle(self, case):
        m, k, _, a, _ = case
        assert np.allclose(ex.hodge_coeffs(a, m, k), hodge_oracle(a, m, k), atol=0)

    @given(grades())
    def test_double_star(self, case):
        m, k, _, a, _ = case
        twice = ex.hodge_coeffs(ex.hodge_coeffs(a, m, k), m, m - k)
        assert np.array_equal(twice, (-1) ** (k * (m - k)) * a)

    @given(grades())
    def test_norm_preserved(self, case):
        m, k, _, a, _ = case
        lam = MultiVector(m, k, a)
        assert abs(norm_k(hodge(lam)) - norm_k(lam)) <= 1e-12 * (1 + norm_k(lam))

    def test_commutes_with_differences(self, rng):
        # the Hodge star is a fixed signed permutation, so it commutes with any
        # linear difference operator acting on coefficient fields
        m, k = 4, 2
        field = rng.standard_normal((10, comb(m, k)))
        diff = np.diff(field, axis=0)
        star = ex.hodge_coeffs(field, m, k)
        assert np.array_equal(ex.hodge_coeffs(diff, m, k), np.diff(star, axis=0))


class TestInnerAndNorm:
    def test_basis_values(self):
        assert inner_k(e(1, 2, m=3), e(1, 2, m=3)) == 1.0
        assert inner_k(e(1, 2, m=3), e(1, 3, m=3)) == 0.0
        assert norm_k(e(1, 2, m=3)) == 1.0
        assert norm_k(MultiVector.vector([3.0, 4.0])) == 5.0

    def test_grade_mismatch_rejected(self):
        with pytest.raises(GradeError):
            inner_k(e(1, m=3), e(1, 2, m=3))

    @given(grades())
    def test_inner_via_hodge(self, case):
        m, k, _, a, _ = case
        b = a[::-1].copy()
        top = ex.wedge_coeffs(a, ex.hodge_coeffs(b, m, k), m, k, m - k)[0]
        assert abs(a @ b - top) <= 1e-12 * (1 + np.linalg.norm(a) * np.linalg.norm(b))


class TestIdentities:
    def test_triple_basis_case(self):
        e1, e2, e3 = np.eye(4)[:3]
        assert ex.triple_identity_residual(e1, e2, e3) == 0.0

    def test_triple_equal_arguments(self, rng):
        a, b = rng.standard_normal(4), rng.standard_normal(4)
        assert ex.triple_identity_residual(a, b, b) <= 1e-14

    @given(arrays(float, (3, 4), elements=finite))
    def test_triple_random(self, abc):
        a, b, c = abc
        scale = 1 + np.prod(np.linalg.norm(abc, axis=1))
        assert ex.triple_identity_residual(a, b, c) <= 1e-12 * scale

    def test_star_projection_orthogonal_units(self):
        a, b = np.eye(4)[0], np.eye(4)[2]
        assert ex.muuibn_residual(a, b) == 0.0

    def test_star_projection_equal(self, rng):
        a = rng.standard_normal(4)
        assert ex.muuibn_residual(a, a) <= 1e-13

    @given(arrays(float, (2, 4), elements=finite))
    def test_star_projection_random(self, ab):
        a, b = ab
        scale = 1 + np.linalg.norm(a) * np.linalg.norm(b) ** 2
        assert ex.muuibn_residual(a, b) <= 1e-12 * scale

    @given(st.integers(2, 6), st.data())
    def test_generator_cauchy_schwarz(self, m, data):
        j = data.draw(st.integers(1, m))
        l = data.draw(st.integers(0, m - j))
        V = data.draw(arrays(float, (j, m), elements=finite))
        eta = MultiVector(m, l, data.draw(arrays(float, comb(m, l), elements=finite)))
        g = MultiVector.generator(*V)
        assert norm_k(wedge(g, eta)) <= norm_k(g) * norm_k(eta) * (1 + 1e-12) + 1e-12

    def test_discrete_leibniz_is_first_order(self):
        # forward differences of a wedge of smooth fields miss the product rule by O(h)
        errs = []
        for n in (32, 64, 128):
            x = np.linspace(0, 1, n + 1)
            h = x[1] - x[0]
            lam = np.stack([np.sin(x), np.cos(2 * x), x ** 2, np.exp(-x)], axis=-1)
            eta = np.stack([np.cos(x), x, np.sin(3 * x), 1 + x ** 3], axis=-1)
            w = ex.vector_wedge(lam, eta)
            d = lambda f: np.diff(f, axis=0) / h
            err = d(w) - (ex.vector_wedge(d(lam), eta[:-1]) + ex.vector_wedge(lam[:-1], d(eta)))
            errs.append(np.sqrt(np.mean(np.sum(err ** 2, axis=-1))))
        assert errs[0] / errs[1] > 1.8 and errs[1] / errs[2] > 1.8
