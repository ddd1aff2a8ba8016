"""Exact arithmetic over Q[y, 1/y] with y = exp(-1/q).

`ExpPoly` is the number type of abstraction probabilities. `TransientExpr`
is a function of an entry clock value v of the form sum c * v^k * exp(-beta*v)
and is closed under the integrations performed along a path of edges.
"""

import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Union

import numpy as np

from core.errors import SemanticsError, SeparationError

logger = logging.getLogger(__name__)

Scalar = Union[int, Fraction]

INITIAL_TERMS = 32
MAX_TERMS = 4096


def _as_fraction(value: Scalar) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(value)


class ExpPoly:
    """Laurent polynomial sum c_k * y^k in y = exp(-1/q), rational coefficients.

    Operands with different q are lifted to their lcm; equality and hashing
    compare canonical forms, so `y` with q=1 equals `y^2` with q=2.
    """

    __slots__ = ("q", "terms")

    def __init__(self, terms: Mapping[int, Scalar] | None = None, q: int = 1):
        if q < 1:
            raise ValueError(f"q must be a positive integer, got {q}")
        self.q = int(q)
        self.terms: dict[int, Fraction] = {}
        for exponent, coefficient in (terms or {}).items():
            coefficient = _as_fraction(coefficient)
            if coefficient:
                self.terms[int(exponent)] = self.terms.get(int(exponent), Fraction(0)) + coefficient
        self.terms = {k: c for k, c in self.terms.items() if c}

    @classmethod
    def constant(cls, value: Scalar, q: int = 1) -> "ExpPoly":
        return cls({0: value}, q)

    @classmethod
    def exp_neg(cls, a: Scalar) -> "ExpPoly":
        """exp(-a) for rational a, as y^(a*q) with q the denominator of a."""
        a = _as_fraction(a)
        return cls({a.numerator: 1}, a.denominator)

    @classmethod
    def coerce(cls, value: "ExpPoly | Scalar") -> "ExpPoly":
        if isinstance(value, ExpPoly):
            return value
        if isinstance(value, (int, Fraction)) and not isinstance(value, bool):
            return cls.constant(value)
        raise TypeError(f"cannot use {type(value).__name__} as an ExpPoly")

    def lift(self, q: int) -> "ExpPoly":
        if q % self.q:
            raise ValueError(f"cannot lift q={self.q} to q={q}")
        factor = q // self.q
        return ExpPoly({k * factor: c for k, c in self.terms.items()}, q)

    def canonical(self) -> "ExpPoly":
        g = self.q
        for exponent in self.terms:
            g = math.gcd(g, exponent)
        if g <= 1:
            return self
        return ExpPoly({k // g: c for k, c in self.terms.items()}, self.q // g)

    def _aligned(self, other: "ExpPoly") -> tuple["ExpPoly", "ExpPoly"]:
        if self.q == other.q:
            return self, other
        q = math.lcm(self.q, other.q)
        return self.lift(q), other.lift(q)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_constant(self) -> bool:
        return all(k == 0 for k in self.terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant:
            raise ValueError(f"{self} is not a constant")
        return self.terms.get(0, Fraction(0))

    @property
    def min_exponent(self) -> int:
        return min(self.terms, default=0)

    @property
    def max_exponent(self) -> int:
        return max(self.terms, default=0)

    def __add__(self, other):
        try:
            other = ExpPoly.coerce(other)
        except TypeError:
            return NotImplemented
        left, right = self._aligned(other)
        terms = dict(left.terms)
        for k, c in right.terms.items():
            terms[k] = terms.get(k, Fraction(0)) + c
        return ExpPoly(terms, left.q)

    __radd__ = __add__

    def __neg__(self) -> "ExpPoly":
        return ExpPoly({k: -c for k, c in self.terms.items()}, self.q)

    def __sub__(self, other):
        try:
            other = ExpPoly.coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        try:
            other = ExpPoly.coerce(other)
        except TypeError:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return ExpPoly({k: c * other for k, c in self.terms.items()}, self.q)
        if not isinstance(other, ExpPoly):
            return NotImplemented
        left, right = self._aligned(other)
        terms: dict[int, Fraction] = {}
        for k1, c1 in left.terms.items():
            for k2, c2 in right.terms.items():
                terms[k1 + k2] = terms.get(k1 + k2, Fraction(0)) + c1 * c2
        return ExpPoly(terms, left.q)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            if other == 0:
                raise ZeroDivisionError("division of an ExpPoly by zero")
            return self * (1 / _as_fraction(other))
        return NotImplemented

    def __pow__(self, exponent: int) -> "ExpPoly":
        if exponent < 0:
            raise ValueError("negative powers are not supported")
        result = ExpPoly.constant(1, self.q)
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            base = base * base
            exponent >>= 1
        return result

    def shift(self, exponent: int) -> "ExpPoly":
        """Multiply by y^exponent."""
        return ExpPoly({k + exponent: c for k, c in self.terms.items()}, self.q)

    def __eq__(self, other) -> bool:
        try:
            other = ExpPoly.coerce(other)
        except TypeError:
            return NotImplemented
        left, right = self._aligned(other)
        return left.terms == right.terms

    def __hash__(self) -> int:
        canonical = self.canonical()
        return hash((canonical.q, frozenset(canonical.terms.items())))

    def __repr__(self) -> str:
        return f"ExpPoly({self.terms!r}, q={self.q})"

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for index, k in enumerate(sorted(self.terms)):
            c = self.terms[k]
            magnitude = abs(c)
            if k == 0:
                body = str(magnitude)
            else:
                monomial = "y" if k == 1 else f"y^{k}"
                body = monomial if magnitude == 1 else f"{magnitude}*{monomial}"
            if index == 0:
                parts.append(f"-{body}" if c < 0 else body)
            else:
                parts.append(f" - {body}" if c < 0 else f" + {body}")
        return "".join(parts)

    def describe(self, q: int | None = None) -> str:
        value = self.lift(q) if q is not None else self
        return f"{value}; y=exp(-1/{value.q})"

    def to_json(self) -> dict:
        return {"q": self.q, "terms": {str(k): str(c) for k, c in sorted(self.terms.items())}}

    @classmethod
    def from_json(cls, document: Mapping) -> "ExpPoly":
        try:
            terms = {int(k): Fraction(str(c)) for k, c in document.get("terms", {}).items()}
            return cls(terms, int(document.get("q", 1)))
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"malformed ExpPoly document {document!r}") from exc

    def evaluate_float(self) -> np.longdouble:
        y = np.exp(-np.longdouble(1) / np.longdouble(self.q))
        total = np.longdouble(0)
        for k, c in self.terms.items():
            total += (np.longdouble(c.numerator) / np.longdouble(c.denominator)) * y ** np.longdouble(k)
        return total

    def __float__(self) -> float:
        return float(self.evaluate_float())

    def enclosure(self, terms: int = INITIAL_TERMS) -> tuple[Fraction, Fraction]:
        """Rational bounds on the value, from a Taylor enclosure of y."""
        y_lo, y_hi = y_enclosure(self.q, terms)
        lo = hi = Fraction(0)
        for k, c in self.terms.items():
            if k >= 0:
                p_lo, p_hi = y_lo**k, y_hi**k
            else:
                p_lo, p_hi = y_hi**k, y_lo**k
            if c >= 0:
                lo += c * p_lo
                hi += c * p_hi
            else:
                lo += c * p_hi
                hi += c * p_lo
        return lo, hi

    def certified_sign(self) -> "SignCertificate":
        return certified_sign(self)


@dataclass(frozen=True)
class SignCertificate:
    sign: int
    terms: int
    lo: Fraction
    hi: Fraction

    def to_json(self, digits: int = 12) -> dict:
        lo, hi = format_enclosure(self.lo, self.hi, digits)
        return {"sign": self.sign, "taylor_terms": self.terms, "enclosure": [lo, hi]}


def _round_down(value: Fraction, bits: int) -> Fraction:
    scale = 1 << bits
    return Fraction(math.floor(value * scale), scale)


def _round_up(value: Fraction, bits: int) -> Fraction:
    scale = 1 << bits
    return Fraction(math.ceil(value * scale), scale)


@lru_cache(maxsize=256)
def y_enclosure(q: int, terms: int) -> tuple[Fraction, Fraction]:
    """Bounds on exp(-1/q) from consecutive Taylor partial sums.

    For 0 < x <= 1 the terms x^n/n! decrease, so the alternating partial sums
    S_N and S_{N+1} bracket exp(-x). Endpoints are rounded outward to dyadics.
    """
    x = Fraction(1, q)
    term = Fraction(1)
    partial = Fraction(1)
    for n in range(1, terms + 1):
        term = -term * x / n
        partial += term
    following = partial - term * x / (terms + 1)
    lo, hi = min(partial, following), max(partial, following)
    bits = 4 * terms + 64
    return _round_down(lo, bits), _round_up(hi, bits)


def certified_sign(value: ExpPoly) -> SignCertificate:
    """Sign of a non-identically-zero value, refining until the enclosure excludes 0.

    exp(-1/q) is transcendental, so a nonzero rational polynomial cannot vanish
    there; the term cap only guards against malformed input.
    """
    if value.is_zero:
        return SignCertificate(0, 0, Fraction(0), Fraction(0))
    if value.is_constant:
        c = value.constant_value()
        return SignCertificate(1 if c > 0 else -1, 0, c, c)
    terms = INITIAL_TERMS
    while terms <= MAX_TERMS:
        lo, hi = value.enclosure(terms)
        logger.debug("Enclosure of %s with %d Taylor terms: [%s, %s]", value, terms, float(lo), float(hi))
        if lo > 0:
            return SignCertificate(1, terms, lo, hi)
        if hi < 0:
            return SignCertificate(-1, terms, lo, hi)
        terms *= 2
    raise SeparationError(
        f"cannot separate {value.describe()} from 0 with {MAX_TERMS} Taylor terms; "
        "the value may equal the threshold non-identically"
    )


def _decimal(value: Fraction, digits: int, upward: bool) -> str:
    scaled = value * 10**digits
    units = math.ceil(scaled) if upward else math.floor(scaled)
    sign = "-" if units < 0 else ""
    units = abs(units)
    whole, frac = divmod(units, 10**digits)
    return f"{sign}{whole}.{frac:0{digits}d}"


def format_enclosure(lo: Fraction, hi: Fraction, digits: int) -> tuple[str, str]:
    """Decimal strings rounded outward so that [lo, hi] stays enclosed."""
    return _decimal(lo, digits, upward=False), _decimal(hi, digits, upward=True)


def tight_enclosure(value: ExpPoly, digits: int) -> tuple[Fraction, Fraction]:
    """Enclosure narrow enough to be printed with `digits` decimals."""
    target = Fraction(1, 10 ** (digits + 2))
    terms = INITIAL_TERMS
    lo, hi = value.enclosure(terms)
    while hi - lo > target and terms < MAX_TERMS:
        terms *= 2
        lo, hi = value.enclosure(terms)
    return lo, hi


# Marks the symbolic entry value as an integration bound.
ENTRY = "entry"


class TransientExpr:
    """sum coeff * v^k * exp(-beta*v) over (k, beta), coefficients ExpPoly.

    Decays beta may be negative: the factor exp(rate*v) of an integration
    step is folded into the exponent.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple[int, Fraction], ExpPoly | Scalar] | None = None):
        self.terms: dict[tuple[int, Fraction], ExpPoly] = {}
        for (power, decay), coefficient in (terms or {}).items():
            key = (int(power), _as_fraction(decay))
            current = self.terms.get(key)
            coefficient = ExpPoly.coerce(coefficient)
            self.terms[key] = coefficient if current is None else current + coefficient
        self.terms = {key: c for key, c in self.terms.items() if not c.is_zero}

    @classmethod
    def constant(cls, value: ExpPoly | Scalar) -> "TransientExpr":
        return cls({(0, Fraction(0)): value})

    @property
    def is_constant(self) -> bool:
        return all(key == (0, 0) for key in self.terms)

    def constant_value(self) -> ExpPoly:
        if not self.is_constant:
            raise ValueError("expression depends on the entry value")
        return self.terms.get((0, Fraction(0)), ExpPoly())

    def __add__(self, other: "TransientExpr") -> "TransientExpr":
        merged: dict[tuple[int, Fraction], ExpPoly] = dict(self.terms)
        for key, c in other.terms.items():
            merged[key] = merged[key] + c if key in merged else c
        return TransientExpr(merged)

    def scale(self, factor: ExpPoly | Scalar) -> "TransientExpr":
        return TransientExpr({key: c * factor for key, c in self.terms.items()})

    def shift_decay(self, delta: Fraction) -> "TransientExpr":
        """Multiply by exp(-delta*v)."""
        return TransientExpr({(k, beta + delta): c for (k, beta), c in self.terms.items()})

    def evaluate(self, v: Scalar) -> ExpPoly:
        v = _as_fraction(v)
        total = ExpPoly()
        for (k, beta), c in self.terms.items():
            total = total + c * (v**k) * ExpPoly.exp_neg(beta * v)
        return total

    def __repr__(self) -> str:
        inner = ", ".join(f"v^{k}*exp(-{beta}v)*({c})" for (k, beta), c in sorted(self.terms.items()))
        return f"TransientExpr({inner})"


def _falling(k: int, j: int) -> int:
    return math.perm(k, j)


def _antiderivative_at(power: int, gamma: Fraction, point: Fraction) -> ExpPoly:
    """F(point) for F' = w^power * exp(-gamma*w)."""
    if gamma == 0:
        return ExpPoly.constant(point ** (power + 1) / (power + 1))
    total = Fraction(0)
    for j in range(power + 1):
        total += Fraction(_falling(power, j)) * point ** (power - j) / gamma ** (j + 1)
    return ExpPoly.exp_neg(gamma * point) * (-total)


def _antiderivative_symbolic(power: int, gamma: Fraction) -> TransientExpr:
    if gamma == 0:
        return TransientExpr({(power + 1, Fraction(0)): Fraction(1, power + 1)})
    return TransientExpr(
        {(power - j, gamma): -Fraction(_falling(power, j)) / gamma ** (j + 1) for j in range(power + 1)}
    )


Bound = Union[Fraction, str, float]


def _definite(power: int, gamma: Fraction, lower: Bound, upper: Bound) -> TransientExpr:
    if upper == math.inf:
        if gamma <= 0:
            raise SemanticsError("integral of a non-decaying term over an unbounded interval")
        upper_value = TransientExpr()
    else:
        upper_value = TransientExpr.constant(_antiderivative_at(power, gamma, _as_fraction(upper)))
    if lower == ENTRY:
        lower_value = _antiderivative_symbolic(power, gamma)
    else:
        lower_value = TransientExpr.constant(_antiderivative_at(power, gamma, _as_fraction(lower)))
    return upper_value + lower_value.scale(-1)


def integrate_exponential(expr: TransientExpr, rate: Fraction, lower: Bound, upper: Bound) -> TransientExpr:
    """v -> integral over w in [lower, upper] of rate * exp(-rate*(w - v)) * expr(w).

    `lower` is ENTRY (w starts at v) or a rational, `upper` a rational or inf.
    """
    result = TransientExpr()
    for (power, beta), coefficient in expr.terms.items():
        gamma = beta + rate
        result = result + _definite(power, gamma, lower, upper).scale(coefficient)
    return result.scale(rate).shift_decay(-rate)


def integrate_definite(expr: TransientExpr, lower: Fraction, upper: Fraction) -> ExpPoly:
    """Integral of expr(w) over [lower, upper], both rational."""
    total = ExpPoly()
    for (power, beta), coefficient in expr.terms.items():
        total = total + coefficient * _definite(power, beta, lower, upper).constant_value()
    return total


def sum_values(values: Iterable[ExpPoly]) -> ExpPoly:
    total = ExpPoly()
    for value in values:
        total = total + value
    return total
