import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mflab import _kernels as K
from mflab.expr import ExpressionSyntaxError, compile_program, eval_expression, parse_rate_expression


@pytest.mark.parametrize(
    "text, dim, y, expected",
    [
        ("2*x0*(1 - x0)", 1, [0.5], 0.5),
        ("max0(0.25*x0 - x1)", 2, [1.0, 0.5], 0.0),
        ("x0^2", 1, [3.0], 9.0),
        ("max0(0 - x0)", 1, [2.0], 0.0),
        ("1 - x0 - x1", 2, [0.2, 0.3], 0.5),
        ("x0^0", 1, [7.0], 1.0),
        ("2 - 3 - 4", 1, [0.0], -5.0),
        ("1.5e1 * .5", 1, [0.0], 7.5),
        ("(x0 + x1)^3", 2, [1.0, 1.0], 8.0),
    ],
)
def test_evaluate(text, dim, y, expected):
    assert eval_expression(parse_rate_expression(text, dim), y) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "text, offset",
    [("x0 +", 4), ("(x0", 3), ("x3", 0), ("x0 ^ -1", 5), ("-x0", 0), ("x0 ) ", 3), ("max0(x0", 7)],
)
def test_syntax_errors_carry_offset(text, offset):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_rate_expression(text, 2 if text != "x3" else 3 - 1)
    assert info.value.position == offset


def test_empty_expression_rejected():
    with pytest.raises(ExpressionSyntaxError):
        parse_rate_expression("   ", 1)


def test_evaluate_many_matches_pointwise(rng):
    e = parse_rate_expression("max0(0.25*x0 - x1*x0^2) + 0.05", 2)
    Y = rng.uniform(-2, 2, size=(50, 2))
    np.testing.assert_array_equal(e.evaluate_many(Y), [e(y) for y in Y])


# random expression trees over two variables
_leaf = st.one_of(
    st.sampled_from(["x0", "x1"]),
    st.floats(0, 10, allow_nan=False).map(repr),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
        children.map(lambda c: f"max0({c})"),
    )


expressions = st.recursive(_leaf, _combine, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(expressions, st.tuples(st.floats(-2, 2), st.floats(-2, 2)))
def test_pretty_roundtrip_and_compiled_agree(text, y):
    e = parse_rate_expression(text, 2)
    again = parse_rate_expression(e.pretty(), 2)
    assert again == e
    prog = compile_program([e])
    out = np.empty(1)
    K.eval_all(prog.ops, prog.args, prog.starts, np.array(y), np.empty(prog.depth + 1), out)
    want = e(y)
    assert out[0] == want or (np.isnan(want) and np.isnan(out[0]))


def test_program_layout():
    prog = compile_program([parse_rate_expression("x0", 1), parse_rate_expression("1 + x0*x0", 1)])
    assert prog.starts.tolist() == [0, 1, 6]
    assert prog.depth >= 2
