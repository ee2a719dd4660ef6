"""Forward-mode automatic differentiation and numerical differentiation.

Two scalar types implement forward mode: ``Dual`` carries a value plus a
vector of first-order partials, ``Dual2`` additionally carries the full
(symmetric) Hessian of the value with respect to the seeded inputs.  One
evaluation of a function on ``Dual2`` seeds therefore yields value,
gradient, and Hessian simultaneously.

Functions differentiated in dual mode must be written against the
dispatching helpers at the bottom of this module (``sin``, ``cos``,
``sqrt``, ``atan2``, ``value``, ...) or the arithmetic operators, so the
same code runs on plain floats and on dual scalars.  Central finite
differences are provided as an independent cross-check and work with any
float-valued function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationFailure


class Dual:
    """Scalar with a vector of first-order partial derivatives."""

    __slots__ = ("val", "grad")

    def __init__(self, val, grad):
        self.val = val
        self.grad = grad

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.grad + other.grad)
        return Dual(self.val + other, self.grad)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.grad - other.grad)
        return Dual(self.val - other, self.grad)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.grad)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        self.val * other.grad + other.val * self.grad)
        return Dual(self.val * other, other * self.grad)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            return Dual(self.val * inv,
                        (self.grad - (self.val * inv) * other.grad) * inv)
        inv = 1.0 / other
        return Dual(self.val * inv, self.grad * inv)

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        v = other * inv
        return Dual(v, (-v * inv) * self.grad)

    def __neg__(self):
        return Dual(-self.val, -self.grad)

    def __pow__(self, p):
        v = self.val ** p
        return Dual(v, (p * self.val ** (p - 1)) * self.grad)

    def __abs__(self):
        return self if self.val >= 0.0 else -self

    # ordering compares primal values only (branch selection)

    def __lt__(self, other):
        return self.val < _value(other)

    def __le__(self, other):
        return self.val <= _value(other)

    def __gt__(self, other):
        return self.val > _value(other)

    def __ge__(self, other):
        return self.val >= _value(other)

    # elementary functions -------------------------------------------------

    def sin(self):
        return Dual(math.sin(self.val), math.cos(self.val) * self.grad)

    def cos(self):
        return Dual(math.cos(self.val), -math.sin(self.val) * self.grad)

    def sqrt(self):
        r = math.sqrt(self.val)
        return Dual(r, (0.5 / r) * self.grad)

    def arccos(self):
        d = -1.0 / math.sqrt(1.0 - self.val * self.val)
        return Dual(math.acos(self.val), d * self.grad)

    @staticmethod
    def atan2(y, x):
        yv, xv = _value(y), _value(x)
        r2 = xv * xv + yv * yv
        gy = y.grad if isinstance(y, Dual) else 0.0
        gx = x.grad if isinstance(x, Dual) else 0.0
        return Dual(math.atan2(yv, xv), (xv * gy - yv * gx) / r2)

    def __repr__(self):
        return f"Dual({self.val!r}, grad={self.grad!r})"


class Dual2:
    """Scalar with gradient and full Hessian payloads."""

    __slots__ = ("val", "grad", "hess")

    def __init__(self, val, grad, hess):
        self.val = val
        self.grad = grad
        self.hess = hess

    def __add__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.val + other.val, self.grad + other.grad,
                         self.hess + other.hess)
        return Dual2(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.val - other.val, self.grad - other.grad,
                         self.hess - other.hess)
        return Dual2(self.val - other, self.grad, self.hess)

    def __rsub__(self, other):
        return Dual2(other - self.val, -self.grad, -self.hess)

    def __mul__(self, other):
        if isinstance(other, Dual2):
            cross = np.outer(self.grad, other.grad)
            return Dual2(self.val * other.val,
                         self.val * other.grad + other.val * self.grad,
                         self.val * other.hess + other.val * self.hess
                         + cross + cross.T)
        return Dual2(self.val * other, other * self.grad, other * self.hess)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual2):
            return self * other._reciprocal()
        inv = 1.0 / other
        return Dual2(self.val * inv, self.grad * inv, self.hess * inv)

    def __rtruediv__(self, other):
        return other * self._reciprocal()

    def _reciprocal(self):
        inv = 1.0 / self.val
        g = (-inv * inv) * self.grad
        outer = np.outer(self.grad, self.grad)
        h = (2.0 * inv ** 3) * outer - (inv * inv) * self.hess
        return Dual2(inv, g, h)

    def __neg__(self):
        return Dual2(-self.val, -self.grad, -self.hess)

    def __pow__(self, p):
        return self._chain(self.val ** p,
                           p * self.val ** (p - 1),
                           p * (p - 1) * self.val ** (p - 2))

    def __abs__(self):
        return self if self.val >= 0.0 else -self

    def __lt__(self, other):
        return self.val < _value(other)

    def __le__(self, other):
        return self.val <= _value(other)

    def __gt__(self, other):
        return self.val > _value(other)

    def __ge__(self, other):
        return self.val >= _value(other)

    def _chain(self, f, df, d2f):
        """Unary chain rule: f(self) given f, f', f'' at the primal."""
        return Dual2(f, df * self.grad,
                     df * self.hess + d2f * np.outer(self.grad, self.grad))

    def sin(self):
        s, c = math.sin(self.val), math.cos(self.val)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = math.sin(self.val), math.cos(self.val)
        return self._chain(c, -s, -c)

    def sqrt(self):
        r = math.sqrt(self.val)
        return self._chain(r, 0.5 / r, -0.25 / (r * self.val))

    def arccos(self):
        u = 1.0 - self.val * self.val
        s = math.sqrt(u)
        return self._chain(math.acos(self.val), -1.0 / s,
                           -self.val / (u * s))

    @staticmethod
    def atan2(y, x):
        yv, xv = _value(y), _value(x)
        r2 = xv * xv + yv * yv
        fy, fx = xv / r2, -yv / r2
        fyy = -2.0 * xv * yv / r2 ** 2
        fxx = 2.0 * xv * yv / r2 ** 2
        fxy = (yv * yv - xv * xv) / r2 ** 2
        n = (y.grad if isinstance(y, Dual2) else x.grad).shape[0]
        gy = y.grad if isinstance(y, Dual2) else np.zeros(n)
        gx = x.grad if isinstance(x, Dual2) else np.zeros(n)
        hy = y.hess if isinstance(y, Dual2) else np.zeros((n, n))
        hx = x.hess if isinstance(x, Dual2) else np.zeros((n, n))
        cross = np.outer(gy, gx)
        hess = (fy * hy + fx * hx + fyy * np.outer(gy, gy)
                + fxx * np.outer(gx, gx) + fxy * (cross + cross.T))
        return Dual2(math.atan2(yv, xv), fy * gy + fx * gx, hess)

    def __repr__(self):
        return f"Dual2({self.val!r})"


def _value(x):
    if isinstance(x, (Dual, Dual2)):
        return x.val
    return x


# --- dispatching scalar math (float / Dual / Dual2) ---

def value(x):
    """Primal value of a float or dual scalar."""
    return _value(x)


def sin(x):
    return x.sin() if isinstance(x, (Dual, Dual2)) else math.sin(x)


def cos(x):
    return x.cos() if isinstance(x, (Dual, Dual2)) else math.cos(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, (Dual, Dual2)) else math.sqrt(x)


def arccos(x):
    return x.arccos() if isinstance(x, (Dual, Dual2)) else math.acos(x)


def atan2(y, x):
    if isinstance(y, Dual2) or isinstance(x, Dual2):
        return Dual2.atan2(y, x)
    if isinstance(y, Dual) or isinstance(x, Dual):
        return Dual.atan2(y, x)
    return math.atan2(y, x)


def seed_duals(x):
    """First-order seeds for the entries of a point x in R^n."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    eye = np.eye(n)
    return np.array([Dual(x[i], eye[i]) for i in range(n)], dtype=object)


def seed_duals2(x):
    """Second-order seeds for the entries of a point x in R^n."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.array([Dual2(x[i], eye[i], zero) for i in range(n)],
                    dtype=object)


# --- numerical differentiation front end ---

@dataclass(frozen=True)
class DiffConfig:
    """Derivative engine selection.

    mode: "dual" for forward-mode dual numbers (exact for polynomials),
          "fd" for central finite differences (independent oracle).
    fd_step: finite-difference step in the input units (radians for
             joint-space maps).
    """

    mode: str = "dual"
    fd_step: float = 1e-5

    def __post_init__(self):
        if self.mode not in ("dual", "fd"):
            raise ValueError(f"unknown differentiation mode {self.mode!r}")
        if self.fd_step <= 0.0:
            raise ValueError("fd_step must be positive")


def _call(f, x):
    try:
        return np.asarray(f(x), dtype=object if x.dtype == object else float)
    except (EvaluationFailure, KeyboardInterrupt):
        raise
    except Exception as exc:
        raise EvaluationFailure(f"function raised at probe point: {exc}") from exc


def jacobian_numeric(f, x, cfg=DiffConfig()):
    """m x n Jacobian of f: R^n -> R^m at x.

    In dual mode, f is evaluated once on seeded ``Dual`` scalars and must be
    written against the dispatching math helpers of this module.  In fd
    mode, f is probed with plain float vectors.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if cfg.mode == "dual":
        y = _call(f, seed_duals(x))
        rows = []
        for yi in y:
            rows.append(yi.grad if isinstance(yi, Dual) else np.zeros(n))
        return np.array(rows, dtype=float)
    h = cfg.fd_step
    cols = []
    for i in range(n):
        dx = np.zeros(n)
        dx[i] = h
        cols.append((_call(f, x + dx) - _call(f, x - dx)) / (2.0 * h))
    return np.array(cols, dtype=float).T


def hessian_numeric(f, x, cfg=DiffConfig()):
    """m x n x n Hessian tensor of f: R^n -> R^m at x.

    Each output slice is symmetrized; dual mode produces it in a single
    forward pass, fd mode uses the 4-point central second difference.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if cfg.mode == "dual":
        y = _call(f, seed_duals2(x))
        slices = []
        for yi in y:
            if isinstance(yi, Dual2):
                slices.append(0.5 * (yi.hess + yi.hess.T))
            else:
                slices.append(np.zeros((n, n)))
        return np.array(slices, dtype=float)
    h = cfg.fd_step
    f0 = _call(f, x)
    m = f0.shape[0]
    hess = np.zeros((m, n, n))
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            d = (_call(f, x + ei + ej) - _call(f, x + ei - ej)
                 - _call(f, x - ei + ej) + _call(f, x - ei - ej))
            d /= 4.0 * h * h
            hess[:, i, j] = d
            hess[:, j, i] = d
    return hess
