"""
Second-Order Forward-Mode Differentiation

A Jet carries, for a batch of N points, the value of a scalar field together
with its gradient and Hessian with respect to three independent variables.
Arithmetic on Jets applies the chain rule, so closed-form expressions written
with +, -, *, /, ** and sqrt yield exact first and second derivatives.

Values may be complex; this is what allows complex-step differentiation on
top of the second-order jets.
"""

import numpy as np


class Jet:
    """
    Batched scalar jet (value, gradient, Hessian).

    Attributes:
        value (np.ndarray): (N,)
        grad (np.ndarray): (N, 3)
        hess (np.ndarray): (N, 3, 3)
    """

    __slots__ = ("value", "grad", "hess")
    __array_priority__ = 100

    def __init__(self, value, grad, hess):
        self.value = value
        self.grad = grad
        self.hess = hess

    @classmethod
    def variables(cls, x):
        """
        Seed the three coordinate jets of a batch of points.

        Args:
            x (np.ndarray): (N, 3) points, real or complex

        Returns:
            list: Jets for x_1, x_2, x_3
        """
        x = np.atleast_2d(x)
        n = len(x)
        jets = []
        for axis in range(3):
            grad = np.zeros((n, 3), dtype=x.dtype)
            grad[:, axis] = 1.0
            jets.append(cls(x[:, axis].copy(), grad,
                            np.zeros((n, 3, 3), dtype=x.dtype)))
        return jets

    @classmethod
    def constant(cls, value, like):
        value = np.broadcast_to(value, like.value.shape).astype(
            np.result_type(value, like.value)
        )
        return cls(value, np.zeros_like(like.grad, dtype=value.dtype),
                   np.zeros_like(like.hess, dtype=value.dtype))

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(np.asarray(other), self)

    def __add__(self, other):
        other = self._lift(other)
        return Jet(self.value + other.value, self.grad + other.grad,
                   self.hess + other.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.value, -self.grad, -self.hess)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other)
            return Jet(self.value * c, self.grad * c[..., None],
                       self.hess * c[..., None, None])
        u, v = self, other
        cross = (u.grad[:, :, None] * v.grad[:, None, :]
                 + v.grad[:, :, None] * u.grad[:, None, :])
        return Jet(
            u.value * v.value,
            u.grad * v.value[:, None] + v.grad * u.value[:, None],
            u.hess * v.value[:, None, None] + v.hess * u.value[:, None, None]
            + cross,
        )

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.value
        outer = self.grad[:, :, None] * self.grad[:, None, :]
        return Jet(
            1.0 / v,
            -self.grad / (v ** 2)[:, None],
            -self.hess / (v ** 2)[:, None, None]
            + 2.0 * outer / (v ** 3)[:, None, None],
        )

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        v = self.value
        outer = self.grad[:, :, None] * self.grad[:, None, :]
        d1 = p * v ** (p - 1)
        d2 = p * (p - 1) * v ** (p - 2)
        return Jet(
            v ** p,
            self.grad * d1[:, None],
            self.hess * d1[:, None, None] + outer * d2[:, None, None],
        )

    def sqrt(self):
        return self ** 0.5


def sqrt(jet):
    """Square root of a Jet."""
    return jet.sqrt()


def dot(a, b):
    """Inner product of two 3-lists of Jets."""
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def values(jets):
    """(N, 3) values of a 3-list of Jets."""
    return np.stack([j.value for j in jets], axis=-1)


def gradients(jets):
    """(N, 3, 3) Jacobian, row i = gradient of component i."""
    return np.stack([j.grad for j in jets], axis=1)


def hessians(jets):
    """(N, 3, 3, 3) second derivatives, [n, i, j, m] = d_j d_m of comp. i."""
    return np.stack([j.hess for j in jets], axis=1)
