import numpy as np
import pytest
from hypothesis import given, strategies as st

from consol.errors import DomainError
from consol.symbols import (LOG_DOMAIN_EPS, SymbolOp, eval_grads, eval_second,
                            make_library, op_d1, op_d2, op_value)
from consol import symbols


def test_make_library_order_and_flags():
    lib = make_library(["id", "square", "cos"])
    assert lib.names == ["id", "square", "cos"]
    assert [op.id for op in lib.ops] == [0, 1, 2]
    assert [op.has_inner_weight for op in lib.ops] == [False, False, True]
    assert lib.ops[2].domain_lower is None


def test_make_library_rejects_unknown():
    with pytest.raises(ValueError, match="unknown symbol"):
        make_library(["id", "tanh"])


def test_weighted_ops_have_domain_guards():
    lib = make_library(["sqrt", "log"])
    assert lib.ops[0].domain_lower == 0.0
    assert lib.ops[1].domain_lower == LOG_DOMAIN_EPS


def test_op_values_match_closed_forms():
    z = np.array([0.5, 1.0, 2.0])
    assert np.allclose(op_value("id", z), z)
    assert np.allclose(op_value("square", z), z ** 2)
    assert np.allclose(op_value("sqrt", z), np.sqrt(z))
    assert np.allclose(op_value("log", z), np.log(z))
    assert np.allclose(op_value("cos", z), np.cos(z))
    assert np.allclose(op_value("sin", z), np.sin(z))


@pytest.mark.parametrize("name", ["id", "square", "sqrt", "log", "cos", "sin"])
def test_first_derivative_matches_finite_difference(name):
    z = np.linspace(0.3, 2.7, 9)
    h = 1e-6
    fd = (op_value(name, z + h) - op_value(name, z - h)) / (2 * h)
    assert np.allclose(op_d1(name, z), fd, rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("name", ["id", "square", "sqrt", "log", "cos", "sin"])
def test_second_derivative_matches_finite_difference(name):
    z = np.linspace(0.3, 2.7, 9)
    h = 1e-4
    fd = (op_value(name, z + h) - 2 * op_value(name, z) + op_value(name, z - h)) / h ** 2
    assert np.allclose(op_d2(name, z), fd, rtol=1e-5, atol=1e-5)


def test_eval_applies_inner_weight():
    op = make_library(["cos"]).ops[0]
    assert symbols.eval(op, 2.5, 1.2) == pytest.approx(np.cos(2.5 * 1.2))


def test_eval_rejects_missing_or_extra_weight():
    cos_op = make_library(["cos"]).ops[0]
    id_op = make_library(["id"]).ops[0]
    with pytest.raises(ValueError):
        symbols.eval(cos_op, None, 1.0)
    with pytest.raises(ValueError):
        symbols.eval(id_op, 2.0, 1.0)


def test_eval_domain_errors():
    sqrt_op = make_library(["sqrt"]).ops[0]
    log_op = make_library(["log"]).ops[0]
    with pytest.raises(DomainError):
        symbols.eval(sqrt_op, 1.0, -0.5)
    with pytest.raises(DomainError):
        symbols.eval(log_op, 1.0, 0.0)
    # boundary itself is fine for sqrt
    assert symbols.eval(sqrt_op, 1.0, 0.0) == 0.0


@given(st.floats(0.2, 3.0), st.floats(-3.0, 3.0))
def test_eval_grads_match_finite_difference(v, w):
    op = SymbolOp(id=0, name="sin", has_inner_weight=True, domain_lower=None)
    dv, dw = eval_grads(op, w, v)
    h = 1e-6
    fd_v = (symbols.eval(op, w, v + h) - symbols.eval(op, w, v - h)) / (2 * h)
    fd_w = (symbols.eval(op, w + h, v) - symbols.eval(op, w - h, v)) / (2 * h)
    assert dv == pytest.approx(fd_v, rel=1e-5, abs=1e-6)
    assert dw == pytest.approx(fd_w, rel=1e-5, abs=1e-6)


def test_eval_second_is_plain_second_derivative():
    op = make_library(["cos"]).ops[0]
    assert eval_second(op, 2.0, 1.5) == pytest.approx(-np.cos(3.0))
