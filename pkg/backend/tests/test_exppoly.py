import unittest
from fractions import Fraction

import sympy

from core.exppoly import (
    ENTRY,
    ExpPoly,
    TransientExpr,
    certified_sign,
    format_enclosure,
    integrate_definite,
    integrate_exponential,
    tight_enclosure,
    y_enclosure,
)

Y = ExpPoly({1: 1})


def rational(value) -> sympy.Rational:
    value = Fraction(value)
    return sympy.Rational(value.numerator, value.denominator)


def reference(value: ExpPoly) -> sympy.Float:
    total = sum(rational(c) * sympy.exp(sympy.Rational(-k, value.q)) for k, c in value.terms.items())
    return sympy.N(total, 50)


class ExpPolyArithmeticTests(unittest.TestCase):
    def test_equality_across_denominators(self):
        self.assertEqual(ExpPoly({1: 1}, 1), ExpPoly({2: 1}, 2))
        self.assertEqual(hash(ExpPoly({1: 1}, 1)), hash(ExpPoly({2: 1}, 2)))
        self.assertNotEqual(ExpPoly({1: 1}, 1), ExpPoly({1: 1}, 2))

    def test_product_and_difference(self):
        self.assertEqual((1 - Y) * (1 + Y), 1 - Y**2)
        self.assertTrue((Y - Y).is_zero)

    def test_exp_neg_of_rational(self):
        half = ExpPoly.exp_neg(Fraction(1, 2))

        self.assertEqual(half.q, 2)
        self.assertEqual(half * half, Y)

    def test_printing(self):
        self.assertEqual(str(1 - 2 * Y), "1 - 2*y")
        self.assertEqual(str(Y / 2), "1/2*y")
        self.assertEqual((1 - Y).describe(), "1 - y; y=exp(-1/1)")
        self.assertEqual(str(ExpPoly()), "0")

    def test_json_document(self):
        value = 1 - Fraction(5, 2) * Y

        self.assertEqual(value.to_json(), {"q": 1, "terms": {"0": "1", "1": "-5/2"}})
        self.assertEqual(ExpPoly.from_json(value.to_json()), value)

    def test_malformed_json_document(self):
        with self.assertRaises(ValueError):
            ExpPoly.from_json({"q": 1, "terms": {"one": "2"}})

    def test_constant_value(self):
        self.assertEqual(ExpPoly.constant(Fraction(1, 8)).constant_value(), Fraction(1, 8))
        with self.assertRaises(ValueError):
            Y.constant_value()


class EnclosureTests(unittest.TestCase):
    def test_y_enclosure_brackets_exp(self):
        lo, hi = y_enclosure(1, 32)

        self.assertLess(lo, hi)
        self.assertLessEqual(rational(lo), sympy.exp(-1))
        self.assertGreaterEqual(rational(hi), sympy.exp(-1))

    def test_enclosure_contains_reference_value(self):
        value = 2 - 5 * Y + Y**2
        lo, hi = value.enclosure()
        exact = reference(value)

        self.assertLessEqual(rational(lo), exact)
        self.assertGreaterEqual(rational(hi), exact)

    def test_tight_enclosure_prints_to_precision(self):
        value = 1 - 2 * Y
        lo, hi = tight_enclosure(value, 12)
        low_text, high_text = format_enclosure(lo, hi, 12)

        self.assertLess(hi - lo, Fraction(1, 10**14))
        self.assertTrue(low_text.startswith("0.26424111765"))
        self.assertLessEqual(sympy.Rational(low_text), reference(value))
        self.assertGreaterEqual(sympy.Rational(high_text), reference(value))

    def test_float_preview(self):
        self.assertAlmostEqual(float(1 - 2 * Y), float(reference(1 - 2 * Y)), places=15)


class CertifiedSignTests(unittest.TestCase):
    def test_signs(self):
        self.assertEqual(certified_sign(1 - 3 * Y).sign, -1)
        self.assertEqual(certified_sign(3 * Y - 1).sign, 1)
        self.assertEqual(certified_sign(ExpPoly()).sign, 0)
        self.assertEqual(certified_sign(ExpPoly.constant(Fraction(-1, 3))).sign, -1)

    def test_close_call_needs_more_terms_but_separates(self):
        value = Y - Fraction(3678794411714423, 10**16)
        certificate = certified_sign(value)

        self.assertEqual(certificate.sign, 1 if reference(value) > 0 else -1)
        self.assertLess(certificate.lo, certificate.hi)


class IntegrationTests(unittest.TestCase):
    def test_definite_integral_of_decay(self):
        expr = TransientExpr({(0, Fraction(1)): 1})

        self.assertEqual(integrate_definite(expr, Fraction(0), Fraction(1)), 1 - Y)

    def test_integral_from_symbolic_entry(self):
        result = integrate_exponential(TransientExpr.constant(1), Fraction(1), ENTRY, Fraction(1))

        self.assertEqual(result.evaluate(Fraction(0)), 1 - Y)
        self.assertEqual(result.evaluate(Fraction(1, 2)), 1 - ExpPoly({1: 1}, 2))

    def test_unbounded_integral(self):
        result = integrate_exponential(TransientExpr.constant(1), Fraction(1), Fraction(1), float("inf"))

        self.assertEqual(result.evaluate(Fraction(0)), Y)


if __name__ == "__main__":
    unittest.main()
