import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freqkam.errors import (
    DomainError, ExprSyntaxError, ExprError, NonDifferentiable,
)
from freqkam.expr import (
    parse, evaluate, differentiate, to_source, variables, substitute,
    constant_value,
)


def fd_derivative(e, var, env, h=1e-6):
    """Central finite difference, the independent oracle for diff()."""
    hi = dict(env)
    lo = dict(env)
    hi[var] = env[var] + h
    lo[var] = env[var] - h
    return (float(evaluate(e, hi)) - float(evaluate(e, lo))) / (2 * h)


SMOOTH_CASES = [
    ("sin(x1)*cos(x1)", {"x1": 0.7}),
    ("exp(-y1^2) + ln(y1 + 2)", {"y1": 0.4}),
    ("sqrt(xi1 + 3)/(xi1 - 5)", {"xi1": 1.2}),
    ("arcsin(xi1/2)", {"xi1": 0.9}),
    ("(y1 + y2)^3 - y1*y2", {"y1": 0.3, "y2": -0.8}),
    ("xi1^2.5 + xi1^-1", {"xi1": 1.7}),
    ("sign(xi1)*exp(-1/abs(xi1))", {"xi1": 0.31}),
    ("ln(-ln(abs(xi1)))^-1", {"xi1": 0.2}),
    ("y1*cos(x1) + cos(x1)", {"y1": 0.1, "x1": 2.2}),
]


@pytest.mark.parametrize("src,env", SMOOTH_CASES)
def test_derivative_matches_finite_differences(src, env):
    e = parse(src)
    for var in env:
        exact = float(evaluate(differentiate(e, var), env))
        approx = fd_derivative(e, var, env)
        scale = max(1.0, abs(exact))
        assert abs(exact - approx) <= 1e-6 * scale, (src, var, exact, approx)


@pytest.mark.parametrize("src,env", SMOOTH_CASES)
def test_round_trip_evaluates_identically(src, env):
    e = parse(src)
    again = parse(to_source(e))
    a = float(evaluate(e, env))
    b = float(evaluate(again, env))
    assert a == pytest.approx(b, rel=1e-14, abs=1e-300)


def test_parse_numbers_and_pi():
    assert float(evaluate(parse("1e-3"), {})) == 1e-3
    assert float(evaluate(parse(".5 + 2."), {})) == 2.5
    assert float(evaluate(parse("pi/2"), {})) == math.pi / 2
    assert constant_value(parse("2*pi")) == pytest.approx(2 * math.pi)
    assert constant_value(parse("xi1")) is None


def test_precedence_and_unary_minus():
    assert float(evaluate(parse("-x1^2"), {"x1": 3.0})) == -9.0
    assert float(evaluate(parse("(-x1)^2"), {"x1": 3.0})) == 9.0
    assert float(evaluate(parse("2^3^2"), {})) == 512.0  # right associative
    assert float(evaluate(parse("2 - 3 - 4"), {})) == -5.0
    assert float(evaluate(parse("12/3/2"), {})) == 2.0


def test_vectorized_broadcast():
    e = parse("xi1*y1 + sin(x1)")
    xi = np.linspace(-1, 1, 5).reshape(5, 1)
    x = np.linspace(0, 2 * np.pi, 7).reshape(1, 7)
    out = evaluate(e, {"xi1": xi, "y1": 0.25, "x1": x})
    assert out.shape == (5, 7)
    assert np.allclose(out, xi * 0.25 + np.sin(x))


def test_guard_masks_singularity_and_pins_derivative():
    e = parse("guard(xi1 = 0; 0; exp(-1/abs(xi1)))")
    vals = evaluate(e, {"xi1": np.array([-0.2, 0.0, 0.2])})
    assert vals[1] == 0.0
    assert vals[0] == pytest.approx(math.exp(-5))
    d = differentiate(e, "xi1")
    dvals = evaluate(d, {"xi1": np.array([0.0, 0.5])})
    assert dvals[0] == 0.0
    assert dvals[1] == pytest.approx(4 * math.exp(-2))


def test_guard_survives_nested_singular_fallback():
    # body singular both at the guard point and at the first fallback probe
    e = parse("guard(xi1 = 0; 0; ln(-ln(abs(xi1)))^-1)")
    vals = evaluate(e, {"xi1": np.array([0.0, 0.1])})
    assert vals[0] == 0.0
    assert vals[1] == pytest.approx(1.0 / math.log(-math.log(0.1)))


@pytest.mark.parametrize("src", [
    "1 +",
    "sin()",
    "sin",
    "guard(1 = 0; 0; xi1)",
    "guard(xi1 = y1; 0; xi1)",
    "x1^y1",
    "2 *** 3",
    "(1 + 2",
    "",
    "foo(3)",  # 'foo' is not a function; 'foo(3)' means nothing
])
def test_syntax_errors(src):
    with pytest.raises(ExprSyntaxError):
        if src == "foo(3)":
            # adjacent atom without operator is trailing-input garbage
            parse(src)
        else:
            parse(src)


@pytest.mark.parametrize("src,env", [
    ("ln(xi1)", {"xi1": -1.0}),
    ("ln(xi1)", {"xi1": 0.0}),
    ("sqrt(xi1)", {"xi1": -4.0}),
    ("arcsin(xi1)", {"xi1": 1.5}),
    ("1/xi1", {"xi1": 0.0}),
    ("xi1^0.5", {"xi1": -2.0}),
    ("xi1^-2", {"xi1": 0.0}),
])
def test_domain_errors(src, env):
    with pytest.raises(DomainError):
        evaluate(parse(src), env)


def test_domain_error_raised_for_any_array_element():
    with pytest.raises(DomainError):
        evaluate(parse("ln(xi1)"), {"xi1": np.array([1.0, 2.0, -3.0])})


def test_kink_derivatives_raise():
    d = differentiate(parse("abs(xi1)"), "xi1")
    assert float(evaluate(d, {"xi1": -2.0})) == -1.0
    with pytest.raises(NonDifferentiable):
        evaluate(d, {"xi1": 0.0})
    d2 = differentiate(parse("sign(xi1)"), "xi1")
    assert float(evaluate(d2, {"xi1": 3.0})) == 0.0
    with pytest.raises(NonDifferentiable):
        evaluate(d2, {"xi1": np.array([1.0, 0.0])})


def test_unbound_variable():
    with pytest.raises(ExprError):
        evaluate(parse("y1 + y2"), {"y1": 1.0})


def test_substitute_composes():
    e = parse("xi3 + xi3^2")
    s = substitute(e, {"xi3": parse("-xi2^2 + xi2")})
    got = float(evaluate(s, {"xi2": 0.3}))
    inner = -0.3 ** 2 + 0.3
    assert got == pytest.approx(inner + inner ** 2, rel=1e-15)
    assert "xi3" not in variables(s)


def test_substitute_guard_rename_only():
    g = parse("guard(xi1 = 0; 0; 1/xi1)")
    renamed = substitute(g, {"xi1": parse("u")})
    assert variables(renamed) == ["u"]
    with pytest.raises(ExprError):
        substitute(g, {"xi1": parse("u + 1")})


# --- property tests: random trees round-trip and differentiate cleanly ---

_names = st.sampled_from(["y1", "y2", "x1", "xi1"])


def _leaf():
    return st.one_of(
        st.floats(min_value=-4, max_value=4, allow_nan=False).map(
            lambda v: f"{v!r}"),
        _names,
    )


def _combine(children):
    binop = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(
        lambda t: f"({t[0]} {t[1]} {t[2]})")
    call = st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(
        lambda t: f"{t[0]}({t[1]})")
    return st.one_of(binop, call)


_tree = st.recursive(_leaf(), _combine, max_leaves=12)
_point = st.floats(min_value=-3, max_value=3, allow_nan=False)


@given(src=_tree, y1=_point, y2=_point, x1=_point, xi1=_point)
@settings(max_examples=150, deadline=None)
def test_property_round_trip(src, y1, y2, x1, xi1):
    env = {"y1": y1, "y2": y2, "x1": x1, "xi1": xi1}
    e = parse(src)
    v1 = float(evaluate(e, env))
    v2 = float(evaluate(parse(to_source(e)), env))
    assert v2 == pytest.approx(v1, rel=1e-14, abs=1e-250)


@given(src=_tree, x=st.floats(min_value=-2, max_value=2, allow_nan=False))
@settings(max_examples=100, deadline=None)
def test_property_derivative_fd(src, x):
    e = parse(src)
    env = {"y1": x, "y2": 0.3, "x1": -0.7, "xi1": 1.1}
    d = float(evaluate(differentiate(e, "y1"), env))
    approx = fd_derivative(e, "y1", env, h=1e-5)
    # tolerance loose: random trees can have large second derivatives
    assert abs(d - approx) <= 1e-4 * max(10.0, abs(d))
