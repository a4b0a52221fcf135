"""Dual numbers for first-order forward-mode differentiation."""

import math

import numpy as np


class Dual:
    """Dual number ``re + du*e`` with ``e**2 = 0``."""

    __slots__ = ("re", "du")

    def __init__(self, re, du=0.0):
        self.re = re
        self.du = du

    def __repr__(self):
        return f"Dual({self.re!r}, {self.du!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re + other.re, self.du + other.du)
        return Dual(self.re + other, self.du)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re - other.re, self.du - other.du)
        return Dual(self.re - other, self.du)

    def __rsub__(self, other):
        return Dual(other - self.re, -self.du)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re * other.re, self.re * other.du + self.du * other.re)
        return Dual(self.re * other, self.du * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            if other.re == 0.0:
                raise ZeroDivisionError("dual division by zero")
            q = self.re / other.re
            return Dual(q, (self.du - q * other.du) / other.re)
        if other == 0.0:
            raise ZeroDivisionError("dual division by zero")
        return Dual(self.re / other, self.du / other)

    def __rtruediv__(self, other):
        if self.re == 0.0:
            raise ZeroDivisionError("dual division by zero")
        q = other / self.re
        return Dual(q, -q * self.du / self.re)

    def __neg__(self):
        return Dual(-self.re, -self.du)

    def __pos__(self):
        return self

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("dual powers are restricted to integer exponents")
        if n == 0:
            return Dual(1.0, 0.0)
        if self.re == 0.0 and n < 0:
            raise ZeroDivisionError("dual division by zero")
        return Dual(self.re**n, n * self.re ** (n - 1) * self.du)

    def sin(self):
        return Dual(math.sin(self.re), math.cos(self.re) * self.du)

    def cos(self):
        return Dual(math.cos(self.re), -math.sin(self.re) * self.du)

    def exp(self):
        e = math.exp(self.re)
        return Dual(e, e * self.du)

    def log(self):
        return Dual(math.log(self.re), self.du / self.re)

    def sqrt(self):
        s = math.sqrt(self.re)
        if s == 0.0:
            raise ZeroDivisionError("derivative of sqrt at 0")
        return Dual(s, self.du / (2.0 * s))

    def tanh(self):
        t = math.tanh(self.re)
        return Dual(t, (1.0 - t * t) * self.du)


def _unary(name, scalar, vector):
    def f(a):
        if isinstance(a, Dual):
            return getattr(a, name)()
        if isinstance(a, np.ndarray):
            return vector(a)
        return scalar(a)

    f.__name__ = name
    return f


# Generic elementary functions dispatching on float / ndarray / Dual.
FUNCTIONS = {
    "sin": _unary("sin", math.sin, np.sin),
    "cos": _unary("cos", math.cos, np.cos),
    "exp": _unary("exp", math.exp, np.exp),
    "log": _unary("log", math.log, np.log),
    "sqrt": _unary("sqrt", math.sqrt, np.sqrt),
    "tanh": _unary("tanh", math.tanh, np.tanh),
}


def ipow(a, n):
    if isinstance(a, np.ndarray):
        return np.power(a, float(n)) if n < 0 else a**n
    return a**n
