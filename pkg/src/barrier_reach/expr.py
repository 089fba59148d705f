"""Tiny expression trees for vector fields and Lie derivatives.

A tree is evaluated against a backend that supplies the arithmetic: plain
floats/numpy arrays, outward-rounded intervals, exact rationals, or
mpmath high-precision numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import mpmath
import numpy as np

from . import interval as iv


class Expr:
    def __add__(self, other):
        return Add((self, lift(other)))

    __radd__ = __add__

    def __mul__(self, other):
        return Mul(self, lift(other))

    def __rmul__(self, other):
        return Mul(lift(other), self)

    def __neg__(self):
        return Neg(self)

    def __sub__(self, other):
        return Add((self, Neg(lift(other))))


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int


@dataclass(frozen=True)
class Param(Expr):
    name: str


@dataclass(frozen=True)
class Add(Expr):
    terms: tuple


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Sqr(Expr):
    arg: Expr


@dataclass(frozen=True)
class Sin(Expr):
    arg: Expr


@dataclass(frozen=True)
class Cos(Expr):
    arg: Expr


@dataclass(frozen=True)
class Exp(Expr):
    arg: Expr


def lift(x) -> Expr:
    return x if isinstance(x, Expr) else Const(float(x))


def is_polynomial(e: Expr) -> bool:
    if isinstance(e, (Sin, Cos, Exp)):
        return False
    if isinstance(e, Add):
        return all(is_polynomial(t) for t in e.terms)
    if isinstance(e, Mul):
        return is_polynomial(e.left) and is_polynomial(e.right)
    if isinstance(e, (Neg, Sqr)):
        return is_polynomial(e.arg)
    return True


class Backend:
    def const(self, c):
        return c

    def add(self, a, b):
        return a + b

    def mul(self, a, b):
        return a * b

    def neg(self, a):
        return -a

    def sqr(self, a):
        return a * a

    def sin(self, a):
        raise NotImplementedError

    cos = exp = sin


class FloatBackend(Backend):
    def sin(self, a):
        return np.sin(a)

    def cos(self, a):
        return np.cos(a)

    def exp(self, a):
        return np.exp(a)


class IntervalBackend(Backend):
    def const(self, c):
        return iv.Interval.point(c)

    def add(self, a, b):
        return iv.iv_add(a, b)

    def mul(self, a, b):
        return iv.iv_mul(a, b)

    def neg(self, a):
        return iv.iv_neg(a)

    def sqr(self, a):
        return iv.iv_sqr(a)

    def sin(self, a):
        return iv.iv_sin(a)

    def cos(self, a):
        return iv.iv_cos(a)

    def exp(self, a):
        return iv.iv_exp(a)


class FractionBackend(Backend):
    """Exact rational arithmetic; only polynomial trees are supported."""

    def const(self, c):
        return Fraction(c)


class MpmathBackend(Backend):
    def const(self, c):
        return mpmath.mpf(c)

    def sin(self, a):
        return mpmath.sin(a)

    def cos(self, a):
        return mpmath.cos(a)

    def exp(self, a):
        return mpmath.exp(a)


FLOAT = FloatBackend()
INTERVAL = IntervalBackend()
FRACTION = FractionBackend()
MPMATH = MpmathBackend()


def evaluate(e: Expr, x: Sequence, params: Mapping | None = None, backend: Backend = FLOAT):
    """Evaluate ``e`` with variables ``x`` (already in the backend's number type)."""
    params = params or {}

    def ev(node):
        if isinstance(node, Const):
            return backend.const(node.value)
        if isinstance(node, Var):
            return x[node.index]
        if isinstance(node, Param):
            return backend.const(params[node.name])
        if isinstance(node, Add):
            acc = ev(node.terms[0])
            for t in node.terms[1:]:
                acc = backend.add(acc, ev(t))
            return acc
        if isinstance(node, Mul):
            return backend.mul(ev(node.left), ev(node.right))
        if isinstance(node, Neg):
            return backend.neg(ev(node.arg))
        if isinstance(node, Sqr):
            return backend.sqr(ev(node.arg))
        if isinstance(node, Sin):
            return backend.sin(ev(node.arg))
        if isinstance(node, Cos):
            return backend.cos(ev(node.arg))
        if isinstance(node, Exp):
            return backend.exp(ev(node.arg))
        raise TypeError(f"unknown node {node!r}")

    return ev(e)


def linear_form(coeffs: Sequence[float], const: float = 0.0) -> Expr:
    """``const + sum(c_i * x_i)`` skipping zero coefficients."""
    terms: list[Expr] = []
    if const != 0.0:
        terms.append(Const(const))
    for i, c in enumerate(coeffs):
        if c == 0.0:
            continue
        terms.append(Var(i) if c == 1.0 else Mul(Const(c), Var(i)))
    if not terms:
        return Const(0.0)
    return terms[0] if len(terms) == 1 else Add(tuple(terms))
