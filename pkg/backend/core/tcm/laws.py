"""Closed-form target probabilities of the reduction gadgets.

Every law is evaluated exactly over Fractions. Parameters outside a law's
domain raise DomainError instead of returning a number.
"""

from collections.abc import Callable
from dataclasses import dataclass, field
from fractions import Fraction

from core.errors import DomainError
from core.model import parse_rational

HALF = Fraction(1, 2)
QUARTER = Fraction(1, 4)


def _unit(name: str, value: Fraction, open_low: bool = False) -> str | None:
    low_ok = value > 0 if open_low else value >= 0
    if not low_ok or value > 1:
        bracket = "(" if open_low else "["
        return f"{name}={value} outside {bracket}0,1]"
    return None


def _counter(name: str, value: Fraction, minimum: int = 0) -> str | None:
    if value.denominator != 1 or value < minimum:
        return f"{name}={value} is not an integer >= {minimum}"
    return None


def _epsilon(bound: Fraction) -> Callable[[dict[str, Fraction]], str | None]:
    def check(values: dict[str, Fraction]) -> str | None:
        if abs(values["eps"]) >= bound / 2 ** int(values["c"]):
            return f"eps={values['eps']} outside (-{bound}/2^c, {bound}/2^c)"
        return None

    return check


def _first(*checks: str | None) -> str | None:
    return next((message for message in checks if message), None)


@dataclass(frozen=True)
class GadgetLaw:
    name: str
    formula: str
    parameters: tuple[str, ...]
    evaluate_fn: Callable[..., Fraction]
    domain: Callable[[dict[str, Fraction]], str | None] = lambda values: None
    defaults: dict[str, Fraction] = field(default_factory=dict)

    def evaluate(self, **values) -> Fraction:
        unknown = set(values) - set(self.parameters)
        if unknown:
            raise DomainError(f"{self.name} takes {list(self.parameters)}, got {sorted(unknown)}")
        merged = dict(self.defaults)
        try:
            merged.update({name: parse_rational(value) for name, value in values.items()})
        except ValueError as exc:
            raise DomainError(f"{self.name}: {exc}") from exc
        missing = [name for name in self.parameters if name not in merged]
        if missing:
            raise DomainError(f"{self.name} needs {missing}")
        problem = self.domain(merged)
        if problem:
            raise DomainError(f"{self.name}: {problem}")
        result = self.evaluate_fn(**merged)
        if not 0 <= result <= 1:
            raise DomainError(f"{self.name} evaluates to {result}, outside [0,1]")
        return result

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "formula": self.formula,
            "parameters": list(self.parameters),
            "defaults": {name: str(value) for name, value in self.defaults.items()},
        }


_LAWS = (
    GadgetLaw(
        "getprob-inc",
        "1/2 (1 - 4 eps^2)",
        ("eps", "c"),
        lambda eps, c: HALF * (1 - 4 * eps * eps),
        lambda v: _first(_counter("c", v["c"]), _epsilon(HALF)(v)),
        {"c": Fraction(0)},
    ),
    GadgetLaw(
        "getprob-dec",
        "1/2 (1 - 2 eps^2)",
        ("eps", "c"),
        lambda eps, c: HALF * (1 - 2 * eps * eps),
        lambda v: _first(_counter("c", v["c"], 1), _epsilon(Fraction(1))(v)),
        {"c": Fraction(1)},
    ),
    GadgetLaw(
        "getprob-dec-compiled",
        "1/2 (1 - eps^2)",
        ("eps", "c"),
        lambda eps, c: HALF * (1 - eps * eps),
        lambda v: _first(_counter("c", v["c"], 1), _epsilon(Fraction(1))(v)),
        {"c": Fraction(1)},
    ),
    GadgetLaw("zero-test", "1/2", (), lambda: HALF),
    GadgetLaw(
        "check-z",
        "1/2 (1 - t) + 1/4 * 1/2^k",
        ("t", "k"),
        lambda t, k: HALF * (1 - t) + QUARTER / 2 ** int(k),
        lambda v: _first(_unit("t", v["t"]), _counter("k", v["k"])),
    ),
    GadgetLaw(
        "check-x",
        "1/2 (1 - t2) + n / (2 (1 + w))",
        ("t2", "n", "w"),
        lambda t2, n, w: HALF * (1 - t2) + n / (2 * (1 + w)),
        lambda v: _first(_unit("t2", v["t2"]), _unit("n", v["n"], True), _counter("w", v["w"], 1)),
        {"w": Fraction(11)},
    ),
    GadgetLaw(
        "mul-a",
        "1/2 t + 1/2 (1 - 1/2^(k+1))",
        ("t", "k"),
        lambda t, k: HALF * t + HALF * (1 - Fraction(1, 2 ** (int(k) + 1))),
        lambda v: _first(_unit("t", v["t"]), _counter("k", v["k"])),
    ),
    GadgetLaw(
        "mul-x",
        "1/2 (1 - n) + t2 / 12",
        ("t2", "n"),
        lambda t2, n: HALF * (1 - n) + t2 / 12,
        lambda v: _first(_unit("t2", v["t2"]), _unit("n", v["n"], True)),
    ),
    GadgetLaw(
        "wid-zero",
        "1/4 (1 - t) + 1/2 m",
        ("t", "m"),
        lambda t, m: QUARTER * (1 - t) + HALF * m,
        lambda v: _first(_unit("t", v["t"]), _unit("m", v["m"], True)),
    ),
    GadgetLaw(
        "wid-double",
        "1/2 (1 - t) + 1/2 m",
        ("t", "m"),
        lambda t, m: HALF * (1 - t) + HALF * m,
        lambda v: _first(_unit("t", v["t"]), _unit("m", v["m"], True)),
    ),
    GadgetLaw("halt", "1/2", (), lambda: HALF),
)


def gadget_laws() -> list[GadgetLaw]:
    return list(_LAWS)


def gadget_law(name: str) -> GadgetLaw:
    for law in _LAWS:
        if law.name == name:
            return law
    raise DomainError(f"unknown gadget law {name!r}; known: {', '.join(law.name for law in _LAWS)}")
