"""Quadratic barrier certificates.

Coefficient order (the wire contract): constant, then x_1..x_n, then the
graded-lex quadratic monomials x_1^2, x_1 x_2, ..., x_1 x_n, x_2^2, ..., x_n^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from . import expr as ex
from .dynamics import ControlInput, SystemModel
from .interval import Interval, IntervalVector


def coeff_count(n: int) -> int:
    return 1 + n + n * (n + 1) // 2


@lru_cache(maxsize=None)
def quadratic_pairs(n: int) -> tuple[tuple[int, int], ...]:
    return tuple((i, j) for i in range(n) for j in range(i, n))


def dim_for_count(d: int) -> int:
    n = 1
    while coeff_count(n) < d:
        n += 1
    if coeff_count(n) != d:
        raise ValueError(f"{d} is not a quadratic coefficient count")
    return n


@dataclass(frozen=True, eq=False)
class QuadraticCertificate:
    dim: int
    coeffs: np.ndarray

    def __post_init__(self):
        a = np.array(self.coeffs, dtype=float)
        if a.shape != (coeff_count(self.dim),):
            raise ValueError(
                f"expected {coeff_count(self.dim)} coefficients for dim {self.dim}, got {a.shape}"
            )
        if not np.all(np.isfinite(a)):
            raise ValueError("certificate coefficients must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "coeffs", a)

    @classmethod
    def from_parts(cls, const: float, linear, quad: dict) -> "QuadraticCertificate":
        """Build from a constant, a linear vector and ``{(i, j): c}`` with i <= j."""
        linear = np.asarray(linear, dtype=float)
        n = linear.size
        pairs = quadratic_pairs(n)
        q = np.zeros(len(pairs))
        for (i, j), c in quad.items():
            q[pairs.index((min(i, j), max(i, j)))] += c
        return cls(n, np.concatenate([[const], linear, q]))

    @classmethod
    def zero(cls, dim: int) -> "QuadraticCertificate":
        return cls(dim, np.zeros(coeff_count(dim)))

    @property
    def constant(self) -> float:
        return float(self.coeffs[0])

    @property
    def linear(self) -> np.ndarray:
        return self.coeffs[1 : 1 + self.dim]

    @property
    def quadratic(self) -> np.ndarray:
        return self.coeffs[1 + self.dim :]

    def hessian_form(self) -> np.ndarray:
        """Symmetric ``Q`` with ``B(x) = c + l·x + x^T Q x``."""
        n = self.dim
        Q = np.zeros((n, n))
        for (i, j), c in zip(quadratic_pairs(n), self.quadratic):
            if i == j:
                Q[i, i] = c
            else:
                Q[i, j] = Q[j, i] = 0.5 * c
        return Q

    @classmethod
    def from_forms(cls, const: float, linear, Q) -> "QuadraticCertificate":
        Q = np.asarray(Q, dtype=float)
        n = Q.shape[0]
        q = [Q[i, i] if i == j else Q[i, j] + Q[j, i] for i, j in quadratic_pairs(n)]
        return cls(n, np.concatenate([[const], np.asarray(linear, dtype=float), q]))

    def __add__(self, other: "QuadraticCertificate") -> "QuadraticCertificate":
        return QuadraticCertificate(self.dim, self.coeffs + other.coeffs)

    def scaled(self, c: float) -> "QuadraticCertificate":
        return QuadraticCertificate(self.dim, c * self.coeffs)

    def normalized(self) -> "QuadraticCertificate":
        norm = float(np.linalg.norm(self.coeffs))
        return self if norm == 0.0 else self.scaled(1.0 / norm)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, QuadraticCertificate)
            and self.dim == other.dim
            and np.array_equal(self.coeffs, other.coeffs)
        )

    def __repr__(self) -> str:
        return f"QuadraticCertificate(dim={self.dim}, coeffs={self.coeffs.tolist()})"

    def to_json(self) -> dict:
        return {"dim": self.dim, "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "QuadraticCertificate":
        return cls(int(d["dim"]), d["coeffs"])

    # symbolic views ------------------------------------------------------

    def expression(self) -> ex.Expr:
        terms: list[ex.Expr] = [ex.Const(self.constant)]
        for i, c in enumerate(self.linear):
            if c != 0.0:
                terms.append(ex.Mul(ex.Const(float(c)), ex.Var(i)))
        for (i, j), c in zip(quadratic_pairs(self.dim), self.quadratic):
            if c == 0.0:
                continue
            mono = ex.Sqr(ex.Var(i)) if i == j else ex.Mul(ex.Var(i), ex.Var(j))
            terms.append(ex.Mul(ex.Const(float(c)), mono))
        return terms[0] if len(terms) == 1 else ex.Add(tuple(terms))

    def gradient_expressions(self) -> list[ex.Expr]:
        n = self.dim
        G = np.zeros((n, n))  # dB/dx_i = l_i + sum_j G[i, j] x_j
        for (i, j), c in zip(quadratic_pairs(n), self.quadratic):
            if i == j:
                G[i, i] += 2.0 * c
            else:
                G[i, j] += c
                G[j, i] += c
        return [ex.linear_form(G[i], float(self.linear[i])) for i in range(n)]

    def lie_expression(self, model: SystemModel) -> ex.Expr:
        if model.n != self.dim:
            raise ValueError("certificate and model dimensions differ")
        terms = []
        for g, f in zip(self.gradient_expressions(), model.symbolic_form):
            if isinstance(g, ex.Const) and g.value == 0.0:
                continue
            terms.append(ex.Mul(g, f))
        if not terms:
            return ex.Const(0.0)
        return terms[0] if len(terms) == 1 else ex.Add(tuple(terms))


def _points(cert: QuadraticCertificate, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != cert.dim:
        raise ValueError(f"dimension mismatch: certificate {cert.dim}, state {x.shape[-1]}")
    return x


def monomials(x: np.ndarray) -> np.ndarray:
    """Feature map ``phi(x)`` so that ``B(x) = phi(x) · a``; works on ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    pairs = quadratic_pairs(n)
    ii = np.array([p[0] for p in pairs])
    jj = np.array([p[1] for p in pairs])
    ones = np.ones(x.shape[:-1] + (1,))
    return np.concatenate([ones, x, x[..., ii] * x[..., jj]], axis=-1)


def monomial_jacobian(x: np.ndarray) -> np.ndarray:
    """``d phi / d x`` with shape ``(..., d, n)``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    pairs = quadratic_pairs(n)
    d = coeff_count(n)
    J = np.zeros(x.shape[:-1] + (d, n))
    for i in range(n):
        J[..., 1 + i, i] = 1.0
    for k, (i, j) in enumerate(pairs):
        row = 1 + n + k
        if i == j:
            J[..., row, i] = 2.0 * x[..., i]
        else:
            J[..., row, i] = x[..., j]
            J[..., row, j] = x[..., i]
    return J


def lie_features(model: SystemModel, x: np.ndarray, u: Optional[ControlInput]) -> np.ndarray:
    """``psi(x)`` with ``Bdot(x) = psi(x) · a`` for any coefficient vector ``a``."""
    f = model(np.atleast_2d(x), u)
    J = monomial_jacobian(np.atleast_2d(x))
    psi = np.einsum("mdn,mn->md", J, f)
    return psi if np.ndim(x) > 1 else psi[0]


def evaluate(cert: QuadraticCertificate, x) -> float | np.ndarray:
    x = _points(cert, x)
    val = monomials(x) @ cert.coeffs
    return float(val) if np.ndim(val) == 0 else val


def gradient(cert: QuadraticCertificate, x) -> np.ndarray:
    x = _points(cert, x)
    Q = cert.hessian_form()
    return cert.linear + 2.0 * x @ Q


def lie_derivative(
    cert: QuadraticCertificate, model: SystemModel, x, u: Optional[ControlInput] = None
) -> float | np.ndarray:
    x = _points(cert, x)
    if model.n != cert.dim:
        raise ValueError("certificate and model dimensions differ")
    g = gradient(cert, x)
    f = model(np.atleast_2d(x), u)
    val = np.sum(np.atleast_2d(g) * f, axis=-1)
    return float(val[0]) if np.ndim(x) == 1 else val


def interval_evaluate(cert: QuadraticCertificate, box: IntervalVector) -> Interval:
    if len(box) != cert.dim:
        raise ValueError("box dimension does not match certificate")
    return ex.evaluate(cert.expression(), box, backend=ex.INTERVAL)


def interval_lie(
    cert: QuadraticCertificate,
    model: SystemModel,
    box: IntervalVector,
    u: Optional[ControlInput] = None,
) -> Interval:
    if len(box) != cert.dim:
        raise ValueError("box dimension does not match certificate")
    return ex.evaluate(cert.lie_expression(model), box, model.params(u), ex.INTERVAL)


def affine_substitute(cert: QuadraticCertificate, A, b) -> QuadraticCertificate:
    """Certificate of ``x -> B(A x + b)``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    Q = cert.hessian_form()
    l = cert.linear
    const = cert.constant + float(l @ b) + float(b @ Q @ b)
    lin = A.T @ l + 2.0 * A.T @ (Q @ b)
    return QuadraticCertificate.from_forms(const, lin, A.T @ Q @ A)


def translate(cert: QuadraticCertificate, offset) -> QuadraticCertificate:
    """Certificate of ``x -> B(x - offset)``: moves the level sets by ``offset``."""
    offset = np.asarray(offset, dtype=float)
    return affine_substitute(cert, np.eye(cert.dim), -offset)


def flip_signs(cert: QuadraticCertificate, signs) -> QuadraticCertificate:
    """Certificate of ``x -> B(s ∘ x)`` for a ±1 vector ``s``; exact sign flips."""
    s = np.asarray(signs, dtype=float)
    n = cert.dim
    factors = [1.0] + list(s) + [s[i] * s[j] for i, j in quadratic_pairs(n)]
    return QuadraticCertificate(n, cert.coeffs * np.array(factors))
