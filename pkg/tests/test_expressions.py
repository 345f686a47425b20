"""Expression language: parsing, precedence, compilation, differentiation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathtransport import parse_expression
from pathtransport.errors import (
    ExpressionEvaluationError,
    ExpressionSyntaxError,
    ShapeError,
)
from pathtransport.expressions import (
    ProgramTable,
    compile_node,
    compile_table,
    differentiate,
    free_variables,
    parse_expression as parse,
    shift_variable,
    substitute,
)

EVAL_CASES = [
    ("1+2*3", (), 7.0),
    ("(1+2)*3", (), 9.0),
    ("1-2-3", (), -4.0),
    ("6/3/2", (), 1.0),
    ("2^3^2", (), 512.0),       # right-associative power
    ("-2^2", (), -4.0),         # power binds tighter than unary minus
    ("2^-3", (), 0.125),        # signed exponent
    ("--2", (), 2.0),
    ("0.5+.25", (), 0.75),
    ("1e-3*2E2", (), 0.2),
    ("sin(0)", (), 0.0),
    ("cos(0)", (), 1.0),
    ("abs(-3.5)", (), 3.5),
    ("sqrt(16)", (), 4.0),
    ("log(exp(2))", (), 2.0),
    ("atan2(1, 0)", (), math.pi / 2.0),
    ("x1*x2 - x3/x1", (2.0, 3.0, 8.0), 2.0),
    ("tan(x1)", (0.3,), math.tan(0.3)),
]


@pytest.mark.parametrize("src,args,expected", EVAL_CASES)
def test_eval_matches_reference(src, args, expected):
    expr = parse_expression(src)
    got = expr(np.asarray(args, dtype=float)) if args else expr(np.zeros(0))
    assert got == pytest.approx(expected, rel=1e-15, abs=1e-15)


def test_named_variables():
    expr = parse_expression("s*t + sin(s)", variables=("s", "t"))
    assert expr(np.array([0.5, 2.0])) == pytest.approx(0.5 * 2.0 + math.sin(0.5))


def test_default_variable_indexing():
    expr = parse_expression("x3")
    assert expr.nvars == 3
    assert expr(np.array([1.0, 2.0, 7.0])) == 7.0


@pytest.mark.parametrize(
    "src",
    ["", "1+", "(1+2", "sin", "sin()", "1 2", "@", ")", "x0", "foo(1)", "1+*2",
     "atan2(1)", "sin(1,2)", "x1 x2", "^2", "1,2"],
)
def test_syntax_errors_are_positioned(src):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression(src)
    err = info.value
    assert isinstance(err.position, int) and err.position >= 1
    assert f"(at position {err.position})" in str(err)


def test_unknown_named_variable_position():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression("s + q", variables=("s", "t"))
    assert info.value.position == 5


def test_free_variables():
    assert free_variables(parse("sin(x1) + x3").ast) == {0, 2}
    assert free_variables(parse("2.5").ast) == set()


def test_substitute_fixes_one_variable():
    expr = parse_expression("x1 + 2*x2").substituted(1, 3.0)
    assert expr(np.array([4.0])) == 10.0


def test_shift_variable_renumbers():
    node = parse("x1 - x2").ast
    swapped = shift_variable(node, {0: 1, 1: 0})
    table = ProgramTable([compile_node(swapped)])
    assert table.evaluate(np.array([1.0, 5.0]))[0] == 4.0


DIFF_CASES = [
    "sin(x1)*cos(x2)",
    "x1^3 - 2*x1*x2",
    "exp(-x1^2)",
    "log(x1 + 2)",
    "sqrt(x1^2 + x2^2)",
    "atan2(x2, x1)",
    "x1^x2",
    "tan(x1/4)",
    "abs(x1)",
    "1/(x1 + x2^2)",
]


@pytest.mark.parametrize("src", DIFF_CASES)
@pytest.mark.parametrize("var", [0, 1])
def test_derivative_matches_sympy(src, var):
    import sympy

    x1, x2 = sympy.symbols("x1 x2", real=True)
    # sympy's Abs derivative uses sign(); samples stay at x1 > 0
    reference = sympy.lambdify(
        (x1, x2),
        sympy.diff(sympy.sympify(src.replace("^", "**"), locals={"x1": x1, "x2": x2}), (x1, x2)[var]),
        "numpy",
    )
    expr = parse_expression(src)
    deriv = expr.derivative(var)
    rng = np.random.default_rng(7 + var)
    for _ in range(8):
        point = np.array([0.4 + rng.random(), 0.2 + rng.random()])
        assert deriv(point) == pytest.approx(reference(*point), rel=1e-9, abs=1e-9)


def test_derivative_of_variable_exponent_power():
    expr = parse_expression("x1^x2").derivative(1)
    point = np.array([2.0, 1.5])
    expected = 2.0 ** 1.5 * math.log(2.0)
    assert expr(point) == pytest.approx(expected, rel=1e-12)


def test_differentiate_constant_is_zero():
    node = differentiate(parse("3.5").ast, 0)
    table = ProgramTable([compile_node(node)])
    assert table.evaluate(np.zeros(1))[0] == 0.0


def test_program_table_batches_programs():
    table = compile_table(["x1+x2", "x1*x2", "-1.5"], None)
    out = table.evaluate(np.array([2.0, 3.0]))
    assert out.tolist() == [5.0, 6.0, -1.5]
    reuse = np.empty(3)
    table.evaluate(np.array([2.0, 3.0]), out=reuse)
    assert reuse.tolist() == [5.0, 6.0, -1.5]


def test_program_table_rejects_short_args():
    table = compile_table(["x1+x2"], None)
    with pytest.raises(ShapeError):
        table.evaluate(np.array([1.0]))


ERROR_CASES = [
    ("1/x1", (0.0,), "division-by-zero"),
    ("log(x1)", (-1.0,), "log-domain"),
    ("log(x1)", (0.0,), "log-domain"),
    ("sqrt(x1)", (-2.0,), "sqrt-domain"),
    ("x1^x2", (-2.0, 0.5), "pow-domain"),
    ("x1^x2", (0.0, -1.0), "pow-domain"),
    ("x1^x2", (1e200, 3.0), "overflow"),
    ("exp(x1)", (1000.0,), "overflow"),
    ("x1*x2", (1e300, 1e300), "overflow"),
    ("x1+x2", (1.7e308, 1.7e308), "overflow"),
]


@pytest.mark.parametrize("src,args,kind", ERROR_CASES)
def test_evaluation_errors_are_typed(backend, src, args, kind):
    program = parse_expression(src).program
    with pytest.raises(ExpressionEvaluationError) as info:
        backend.eval_program(
            program.codes, program.consts, program.stack_need, np.asarray(args)
        )
    assert info.value.kind == kind


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="0123456789.+-*/^()xse inlogqrtab,_", max_size=40))
def test_parser_total_on_arbitrary_text(src):
    try:
        parse_expression(src)
    except ExpressionSyntaxError as err:
        assert err.position >= 1
