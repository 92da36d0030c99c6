"""Symbolic activation pool: the unary functions available to the first
network layer, with values, first/second derivatives and domain guards.

Ops whose usual written form carries a scalar inside the function
(cos(w*x), sin(w*x), log(w*x), sqrt(w*x)) expose a learnable inner weight;
x and x^2 do not, their scale lives in the downstream summation weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

LOG_DOMAIN_EPS = 1e-12

# name -> (has_inner_weight, domain_lower)
_OP_TABLE = {
    "id": (False, None),
    "square": (False, None),
    "sqrt": (True, 0.0),
    "log": (True, LOG_DOMAIN_EPS),
    "cos": (True, None),
    "sin": (True, None),
}


@dataclass(frozen=True)
class SymbolOp:
    id: int
    name: str
    has_inner_weight: bool
    domain_lower: float | None


@dataclass(frozen=True)
class SymbolLibrary:
    ops: tuple[SymbolOp, ...]

    def __post_init__(self):
        ids = [op.id for op in self.ops]
        if ids != list(range(len(self.ops))):
            raise ValueError("op ids must be 0..len-1 in order")

    def __len__(self):
        return len(self.ops)

    @property
    def names(self) -> list[str]:
        return [op.name for op in self.ops]


def make_library(names: list[str]) -> SymbolLibrary:
    """Build a library from op names; the order fixes activation-layer
    neuron indexing for the whole run."""
    ops = []
    for i, name in enumerate(names):
        if name not in _OP_TABLE:
            raise ValueError(f"unknown symbol {name!r}; known: {sorted(_OP_TABLE)}")
        has_w, lower = _OP_TABLE[name]
        ops.append(SymbolOp(id=i, name=name, has_inner_weight=has_w, domain_lower=lower))
    return SymbolLibrary(ops=tuple(ops))


def _check_domain(op: SymbolOp, z) -> None:
    if op.domain_lower is not None and np.min(z) < op.domain_lower:
        raise DomainError(
            f"{op.name} argument {np.min(z)} below domain lower bound {op.domain_lower}"
        )


def op_value(name: str, z):
    """phi(z) for scalar or ndarray z; no domain check."""
    if name == "id":
        return z
    if name == "square":
        return z * z
    if name == "sqrt":
        return np.sqrt(z)
    if name == "log":
        return np.log(z)
    if name == "cos":
        return np.cos(z)
    if name == "sin":
        return np.sin(z)
    raise ValueError(name)


def op_d1(name: str, z):
    """phi'(z)."""
    if name == "id":
        return np.ones_like(np.asarray(z, dtype=float))
    if name == "square":
        return 2.0 * z
    if name == "sqrt":
        return 0.5 / np.sqrt(z)
    if name == "log":
        return 1.0 / z
    if name == "cos":
        return -np.sin(z)
    if name == "sin":
        return np.cos(z)
    raise ValueError(name)


def op_d2(name: str, z):
    """phi''(z)."""
    z = np.asarray(z, dtype=float)
    if name in ("id",):
        return np.zeros_like(z)
    if name == "square":
        return 2.0 * np.ones_like(z)
    if name == "sqrt":
        return -0.25 * z ** (-1.5)
    if name == "log":
        return -1.0 / (z * z)
    if name == "cos":
        return -np.cos(z)
    if name == "sin":
        return -np.sin(z)
    raise ValueError(name)


def _pre_activation(op: SymbolOp, inner_weight: float | None, v):
    if op.has_inner_weight:
        if inner_weight is None:
            raise ValueError(f"{op.name} requires an inner weight")
        return inner_weight * np.asarray(v, dtype=float)
    if inner_weight is not None:
        raise ValueError(f"{op.name} takes no inner weight")
    return np.asarray(v, dtype=float)


def eval(op: SymbolOp, inner_weight: float | None, v: float) -> float:
    """phi(w*v) for weighted ops, phi(v) otherwise."""
    z = _pre_activation(op, inner_weight, v)
    _check_domain(op, z)
    return float(op_value(op.name, z))


def eval_grads(op: SymbolOp, inner_weight: float | None, v: float):
    """(d/dv, d/dw) of phi(w*v); d/dw is None for unweighted ops."""
    z = _pre_activation(op, inner_weight, v)
    _check_domain(op, z)
    d1 = op_d1(op.name, z)
    if op.has_inner_weight:
        return float(inner_weight * d1), float(v * d1)
    return float(d1), None


def eval_second(op: SymbolOp, inner_weight: float | None, v: float) -> float:
    """phi''(w*v), the second derivative in the pre-activation argument."""
    z = _pre_activation(op, inner_weight, v)
    _check_domain(op, z)
    return float(op_d2(op.name, z))
