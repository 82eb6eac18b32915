import numpy as np
import numpy.testing as npt
import pytest

from conftest import eval_points_away_from, random_rf, random_stable_poly
from retrofit_control.ratpoly import (
    Polynomial,
    RationalFunction,
    polynomial_from_roots,
)


def rf(num, den=(1.0,)):
    return RationalFunction(Polynomial(num), Polynomial(den))


class TestPolynomial:
    def test_trim_and_degree(self):
        p = Polynomial([1.0, 2.0, 0.0, 0.0])
        assert p.degree() == 1
        assert Polynomial([0.0]).is_zero
        assert Polynomial([0.0]).degree() == -1
        # construction keeps genuinely small leading coefficients (they fix
        # the degree); only the roundoff floor of the array is trimmed
        assert Polynomial([1.0, 1e-15]).degree() == 1
        assert Polynomial([1.0, 1e-16]).degree() == 0

    def test_addition_floors_cancellation_noise(self):
        # the residue of a cancelled leading term is dropped at the
        # operands' eps_trim scale
        a = Polynomial([1.0, 1.0])
        b = Polynomial([0.0, 1.0 - 1e-13])
        assert (a - b).degree() == 0

    def test_roots_factored_quadratic(self):
        # s^2 + 3 s + 2 = (s + 1)(s + 2)
        r = np.sort_complex(Polynomial([2.0, 3.0, 1.0]).roots())
        npt.assert_allclose(r, [-2.0, -1.0], atol=1e-12)

    def test_roots_monomial(self):
        npt.assert_allclose(Polynomial([0.0, 1.0]).roots(), [0.0], atol=1e-15)

    def test_roots_complex_pair(self):
        r = np.sort_complex(Polynomial([1.0, 0.0, 1.0]).roots())
        npt.assert_allclose(r, [-1j, 1j], atol=1e-12)

    def test_roots_zero_poly_errors(self):
        with pytest.raises(ValueError):
            Polynomial([0.0]).roots()

    def test_roots_reconstruction_up_to_degree_20(self):
        # independent oracle: build the polynomial from known separated roots,
        # recover them, rebuild, and compare coefficients
        rng = np.random.default_rng(7)
        for deg in range(2, 21):
            roots = []
            while len(roots) < deg:
                cand = complex(rng.uniform(-2, 2), rng.uniform(0, 2))
                if rng.random() < 0.5:
                    cand = complex(cand.real, 0.0)
                group = [cand] if cand.imag == 0 else [cand, cand.conjugate()]
                if len(roots) + len(group) > deg:
                    continue
                if all(abs(r - g) > 0.15 for r in roots for g in group):
                    roots.extend(group)
            p = polynomial_from_roots(roots)
            rebuilt = polynomial_from_roots(p.roots())
            scale = np.max(np.abs(p.coeffs))
            npt.assert_allclose(rebuilt.coeffs, p.coeffs, rtol=1e-6, atol=1e-6 * scale)


class TestRationalFunction:
    def test_exact_cancellation(self):
        a = rf([1.0], [1.0, 1.0])            # 1/(s+1)
        b = rf([1.0, 1.0], [2.0, 1.0])       # (s+1)/(s+2)
        c = a * b
        npt.assert_allclose(c.num.coeffs, [1.0], atol=1e-12)
        npt.assert_allclose(c.den.coeffs, [2.0, 1.0], atol=1e-10)

    def test_additive_inverse(self):
        a = rf([1.0], [1.0, 1.0])
        assert (a + (-a)).is_zero

    def test_division(self):
        a = rf([1.0], [1.0, 1.0])
        b = rf([1.0], [2.0, 1.0])
        c = a / b
        npt.assert_allclose(c.num.coeffs, [2.0, 1.0], atol=1e-10)
        npt.assert_allclose(c.den.coeffs, [1.0, 1.0], atol=1e-10)

    def test_division_by_zero(self):
        with pytest.raises(ZeroDivisionError):
            rf([1.0], [1.0, 1.0]) / RationalFunction.zero()

    def test_monic_denominator(self):
        c = rf([2.0], [4.0, 2.0])
        assert c.den.coeffs[-1] == 1.0
        npt.assert_allclose(c(0.0), 0.5)

    def test_relative_degree(self):
        assert rf([2.0, 1.0], [1.0, 2.0, 1.0]).relative_degree() == 1
        assert rf([1.0, 2.0, 1.0], [2.0, 1.0]).relative_degree() == -1
        assert rf([5.0]).relative_degree() == 0
        with pytest.raises(ValueError):
            RationalFunction.zero().relative_degree()

    def test_classify(self):
        assert rf([1.0], [1.0, 1.0]).classify() == {"proper": True, "stable": True}
        assert rf([1.0], [-1.0, 1.0]).classify() == {"proper": True, "stable": False}
        assert rf([1.0, 2.0, 1.0], [2.0, 1.0]).classify() == {"proper": False, "stable": False}

    def test_marginal_pole_is_unstable(self):
        assert not rf([1.0], [0.0, 1.0]).is_stable()

    def test_evaluation_at_pole_errors(self):
        with pytest.raises(ValueError):
            rf([1.0], [0.0, 1.0])(0.0)


class TestArithmeticProperties:
    def test_multiply_divide_roundtrip(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            a = random_rf(rng, int(rng.integers(1, 5)))
            b = random_rf(rng, int(rng.integers(1, 5)))
            if b.is_zero:
                continue
            c = (a * b) / b
            avoid = np.concatenate([a.poles(), b.poles(), b.zeros(), c.poles()])
            for s0 in eval_points_away_from(rng, avoid, 10):
                va, vc = a(s0), c(s0)
                assert abs(vc - va) <= 1e-9 * max(1.0, abs(va))

    def test_cancellation_soundness(self):
        # result(s0) must equal op(a(s0), b(s0)) regardless of cancellation
        rng = np.random.default_rng(13)
        ops = [
            (lambda x, y: x + y, lambda x, y: x + y),
            (lambda x, y: x - y, lambda x, y: x - y),
            (lambda x, y: x * y, lambda x, y: x * y),
        ]
        for _ in range(30):
            a = random_rf(rng, int(rng.integers(1, 5)))
            b = random_rf(rng, int(rng.integers(1, 5)))
            for frf, fval in ops:
                c = frf(a, b)
                avoid = np.concatenate([a.poles(), b.poles(), c.poles()])
                for s0 in eval_points_away_from(rng, avoid, 5):
                    want = fval(a(s0), b(s0))
                    scale = max(1.0, abs(a(s0)), abs(b(s0)))
                    assert abs(c(s0) - want) <= 1e-9 * scale

    def test_shared_factor_chain(self):
        # repeated products with a shared denominator keep values consistent
        rng = np.random.default_rng(17)
        d = random_stable_poly(rng, 3)
        a = RationalFunction(Polynomial(rng.standard_normal(3)), d)
        b = RationalFunction(Polynomial(rng.standard_normal(3)), d)
        c = a * b / a
        avoid = np.concatenate([d.roots(), a.zeros(), c.poles()])
        for s0 in eval_points_away_from(rng, avoid, 8):
            assert abs(c(s0) - b(s0)) <= 1e-8 * max(1.0, abs(b(s0)))
