"""Forward-mode automatic differentiation on scalars.

A :class:`DualVector` carries one value and the vector of its partial
derivatives with respect to every model parameter, so a single evaluation
pass through the log-density produces the full gradient.
"""

from __future__ import annotations

import math

import numpy as np


class DualVector:
    """Scalar value plus its partial derivatives w.r.t. all parameters."""

    __slots__ = ("value", "partials")

    def __init__(self, value: float, partials: np.ndarray):
        self.value = float(value)
        self.partials = partials

    @staticmethod
    def seed(values) -> list["DualVector"]:
        """One dual per coordinate, with identity derivative seeding."""
        values = [float(v) for v in values]
        n = len(values)
        out = []
        for i, v in enumerate(values):
            p = np.zeros(n)
            p[i] = 1.0
            out.append(DualVector(v, p))
        return out

    # arithmetic ------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, DualVector):
            return DualVector(self.value + other.value, self.partials + other.partials)
        return DualVector(self.value + other, self.partials)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, DualVector):
            return DualVector(self.value - other.value, self.partials - other.partials)
        return DualVector(self.value - other, self.partials)

    def __rsub__(self, other):
        return DualVector(other - self.value, -self.partials)

    def __mul__(self, other):
        if isinstance(other, DualVector):
            return DualVector(
                self.value * other.value,
                self.value * other.partials + other.value * self.partials,
            )
        return DualVector(self.value * other, other * self.partials)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DualVector):
            inv = 1.0 / other.value
            return DualVector(
                self.value * inv,
                (self.partials - self.value * inv * other.partials) * inv,
            )
        inv = 1.0 / other
        return DualVector(self.value * inv, self.partials * inv)

    def __rtruediv__(self, other):
        inv = 1.0 / self.value
        return DualVector(other * inv, -other * inv * inv * self.partials)

    def __neg__(self):
        return DualVector(-self.value, -self.partials)

    def __repr__(self):
        return f"DualVector({self.value!r}, {self.partials!r})"


def log(x):
    """Natural log of a float or DualVector."""
    if isinstance(x, DualVector):
        return DualVector(math.log(x.value), x.partials / x.value)
    return math.log(x)


def exp(x):
    """Exponential of a float or DualVector."""
    if isinstance(x, DualVector):
        e = math.exp(x.value)
        return DualVector(e, e * x.partials)
    return math.exp(x)


def value_of(x) -> float:
    return x.value if isinstance(x, DualVector) else float(x)
