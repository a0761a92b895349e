"""Forward-mode truncated-Taylor jet arithmetic.

A :class:`Jet` stores the Taylor coefficients (derivative / alpha!) of a
smooth function of ``nvars`` variables through total degree ``order``, keyed
by multi-index. All arithmetic and the analytic functions below propagate
jets exactly (to roundoff), so derivatives extracted from jets are exact for
the expression trees of the field DSL -- no finite differences anywhere in
the production path.

:class:`Dual1` is the specialized order-1 jet (value + gradient) used on hot
paths such as variational right-hand sides; it carries the gradient as one
numpy vector instead of a coefficient table.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import DomainError


@lru_cache(maxsize=None)
def multi_indices(nvars: int, order: int) -> tuple:
    """All multi-indices with ``nvars`` slots and total degree <= order,
    sorted by total degree then lexicographically."""
    out = []

    def rec(prefix, remaining_slots, budget):
        if remaining_slots == 0:
            out.append(tuple(prefix))
            return
        for k in range(budget + 1):
            rec(prefix + [k], remaining_slots - 1, budget - k)

    rec([], nvars, order)
    out.sort(key=lambda a: (sum(a), a))
    return tuple(out)


@lru_cache(maxsize=None)
def _factorial_of(alpha: tuple) -> float:
    p = 1
    for a in alpha:
        p *= math.factorial(a)
    return float(p)


class Jet:
    """Truncated multivariate Taylor expansion around an (implicit) point."""

    __slots__ = ("nvars", "order", "c")

    def __init__(self, nvars, order, c=None):
        self.nvars = nvars
        self.order = order
        self.c = c if c is not None else {}

    # -- constructors ---------------------------------------------------

    @classmethod
    def constant(cls, value, nvars, order):
        return cls(nvars, order, {(0,) * nvars: float(value)})

    @classmethod
    def variable(cls, value, index, nvars, order):
        c = {(0,) * nvars: float(value)}
        if order >= 1:
            e = [0] * nvars
            e[index] = 1
            c[tuple(e)] = 1.0
        return cls(nvars, order, c)

    # -- access ----------------------------------------------------------

    @property
    def value(self):
        return self.c.get((0,) * self.nvars, 0.0)

    def coeff(self, alpha):
        return self.c.get(tuple(alpha), 0.0)

    def partial(self, alpha):
        """Derivative d^alpha f (coefficient times alpha!)."""
        a = tuple(alpha)
        return self.c.get(a, 0.0) * _factorial_of(a)

    def gradient(self):
        g = np.zeros(self.nvars)
        for i in range(self.nvars):
            e = [0] * self.nvars
            e[i] = 1
            g[i] = self.c.get(tuple(e), 0.0)
        return g

    def diff(self, i):
        """Jet of df/dx_i, one order lower."""
        out = {}
        for alpha, v in self.c.items():
            if alpha[i] >= 1:
                beta = list(alpha)
                beta[i] -= 1
                out[tuple(beta)] = v * alpha[i]
        return Jet(self.nvars, self.order - 1, out)

    def truncate(self, order):
        if order >= self.order:
            return Jet(self.nvars, order, dict(self.c))
        out = {a: v for a, v in self.c.items() if sum(a) <= order}
        return Jet(self.nvars, order, out)

    # -- arithmetic -------------------------------------------------------

    def _like(self, other):
        if isinstance(other, Jet):
            if other.nvars != self.nvars or other.order != self.order:
                raise ValueError("jet shape mismatch")
            return other
        return Jet.constant(float(other), self.nvars, self.order)

    def __add__(self, other):
        o = self._like(other)
        out = dict(self.c)
        for a, v in o.c.items():
            out[a] = out.get(a, 0.0) + v
        return Jet(self.nvars, self.order, out)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.nvars, self.order, {a: -v for a, v in self.c.items()})

    def __sub__(self, other):
        return self + (-self._like(other))

    def __rsub__(self, other):
        return self._like(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            f = float(other)
            return Jet(self.nvars, self.order, {a: v * f for a, v in self.c.items()})
        o = self._like(other)
        order = self.order
        out = {}
        for a, va in self.c.items():
            if va == 0.0:
                continue
            da = sum(a)
            for b, vb in o.c.items():
                if da + sum(b) > order or vb == 0.0:
                    continue
                g = tuple(x + y for x, y in zip(a, b))
                out[g] = out.get(g, 0.0) + va * vb
        return Jet(self.nvars, order, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            f = float(other)
            if f == 0.0:
                raise DomainError("division by zero")
            return self * (1.0 / f)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self._like(other) * self.reciprocal()

    def reciprocal(self):
        u0 = self.value
        if u0 == 0.0:
            raise DomainError("division by zero")
        derivs = [1.0 / u0]
        for k in range(1, self.order + 1):
            derivs.append(-derivs[-1] * k / u0)
        return self.compose(derivs)

    def __pow__(self, p):
        if isinstance(p, Jet):
            if not p.c or list(p.c) == [(0,) * p.nvars]:
                p = p.value
            else:
                return jexp(jlog(self) * p)
        if isinstance(p, float) and p.is_integer():
            p = int(p)
        if isinstance(p, int):
            if p < 0:
                return self.reciprocal() ** (-p)
            result = Jet.constant(1.0, self.nvars, self.order)
            base = self
            k = p
            while k:
                if k & 1:
                    result = result * base
                base = base * base
                k >>= 1
            return result
        u0 = self.value
        if u0 <= 0.0:
            raise DomainError(f"non-integer power of non-positive base {u0}")
        derivs, coeff = [], 1.0
        for k in range(self.order + 1):
            derivs.append(coeff * u0 ** (p - k))
            coeff *= (p - k)
        return self.compose(derivs)

    # -- composition -------------------------------------------------------

    def compose(self, derivs):
        """g(self) for scalar g with derivatives g^(k)(self.value) = derivs[k]."""
        w = Jet(self.nvars, self.order, dict(self.c))
        z = (0,) * self.nvars
        w.c.pop(z, None)  # (u - u0): nilpotent to order+1
        result = Jet.constant(derivs[self.order] / math.factorial(self.order),
                              self.nvars, self.order)
        for k in range(self.order - 1, -1, -1):
            result = result * w + (derivs[k] / math.factorial(k))
        return result

    def __repr__(self):
        return f"Jet(nvars={self.nvars}, order={self.order}, value={self.value!r})"


class Dual1:
    """Order-1 jet with the gradient kept as one vector (hot-path variant)."""

    __slots__ = ("v", "g")

    def __init__(self, v, g):
        self.v = float(v)
        self.g = g

    @classmethod
    def variable(cls, value, index, nvars):
        g = np.zeros(nvars)
        g[index] = 1.0
        return cls(value, g)

    @classmethod
    def constant(cls, value, nvars):
        return cls(value, np.zeros(nvars))

    def __add__(self, o):
        if isinstance(o, Dual1):
            return Dual1(self.v + o.v, self.g + o.g)
        return Dual1(self.v + float(o), self.g)

    __radd__ = __add__

    def __neg__(self):
        return Dual1(-self.v, -self.g)

    def __sub__(self, o):
        if isinstance(o, Dual1):
            return Dual1(self.v - o.v, self.g - o.g)
        return Dual1(self.v - float(o), self.g)

    def __rsub__(self, o):
        return Dual1(float(o) - self.v, -self.g)

    def __mul__(self, o):
        if isinstance(o, Dual1):
            return Dual1(self.v * o.v, self.v * o.g + o.v * self.g)
        f = float(o)
        return Dual1(self.v * f, self.g * f)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual1):
            if o.v == 0.0:
                raise DomainError("division by zero")
            inv = 1.0 / o.v
            return Dual1(self.v * inv, (self.g - (self.v * inv) * o.g) * inv)
        f = float(o)
        if f == 0.0:
            raise DomainError("division by zero")
        return self * (1.0 / f)

    def __rtruediv__(self, o):
        if self.v == 0.0:
            raise DomainError("division by zero")
        f = float(o)
        inv = 1.0 / self.v
        return Dual1(f * inv, -f * inv * inv * self.g)

    def __pow__(self, p):
        if isinstance(p, Dual1):
            if np.any(p.g):
                return jexp(jlog(self) * p)
            p = p.v
        if isinstance(p, float) and p.is_integer():
            p = int(p)
        if isinstance(p, int):
            if p == 0:
                return Dual1(1.0, np.zeros_like(self.g))
            v = self.v ** p
            return Dual1(v, p * self.v ** (p - 1) * self.g)
        if self.v <= 0.0:
            raise DomainError(f"non-integer power of non-positive base {self.v}")
        v = self.v ** p
        return Dual1(v, p * self.v ** (p - 1.0) * self.g)

    def __repr__(self):
        return f"Dual1({self.v!r}, {self.g!r})"


# -- analytic functions on float | Dual1 | Jet -----------------------------

def _sin_derivs(u0, order):
    s, c = math.sin(u0), math.cos(u0)
    cycle = [s, c, -s, -c]
    return [cycle[k % 4] for k in range(order + 1)]


def jsin(u):
    if isinstance(u, Jet):
        return u.compose(_sin_derivs(u.value, u.order))
    if isinstance(u, Dual1):
        return Dual1(math.sin(u.v), math.cos(u.v) * u.g)
    return math.sin(u)


def jcos(u):
    if isinstance(u, Jet):
        s, c = math.sin(u.value), math.cos(u.value)
        cycle = [c, -s, -c, s]
        return u.compose([cycle[k % 4] for k in range(u.order + 1)])
    if isinstance(u, Dual1):
        return Dual1(math.cos(u.v), -math.sin(u.v) * u.g)
    return math.cos(u)


def jexp(u):
    if isinstance(u, Jet):
        e = math.exp(u.value)
        return u.compose([e] * (u.order + 1))
    if isinstance(u, Dual1):
        e = math.exp(u.v)
        return Dual1(e, e * u.g)
    return math.exp(u)


def jlog(u):
    if isinstance(u, Jet):
        u0 = u.value
        if u0 <= 0.0:
            raise DomainError(f"log of non-positive value {u0}")
        derivs = [math.log(u0)]
        for k in range(1, u.order + 1):
            derivs.append((-1.0) ** (k - 1) * math.factorial(k - 1) / u0 ** k)
        return u.compose(derivs)
    if isinstance(u, Dual1):
        if u.v <= 0.0:
            raise DomainError(f"log of non-positive value {u.v}")
        return Dual1(math.log(u.v), u.g / u.v)
    if u <= 0.0:
        raise DomainError(f"log of non-positive value {u}")
    return math.log(u)


def jsqrt(u):
    if isinstance(u, Jet):
        u0 = u.value
        if u0 < 0.0 or (u0 == 0.0 and u.order >= 1):
            raise DomainError(f"sqrt of non-positive value {u0} in a jet")
        return u ** 0.5 if u0 > 0.0 else Jet.constant(0.0, u.nvars, u.order)
    if isinstance(u, Dual1):
        if u.v <= 0.0:
            raise DomainError(f"sqrt at non-positive value {u.v} in a jet")
        r = math.sqrt(u.v)
        return Dual1(r, u.g / (2.0 * r))
    if u < 0.0:
        raise DomainError(f"sqrt of negative value {u}")
    return math.sqrt(u)


def jabs(u):
    """|u|, with sign(u) frozen at the expansion point (kink set is measure zero)."""
    if isinstance(u, Jet):
        s = 1.0 if u.value > 0.0 else (-1.0 if u.value < 0.0 else 0.0)
        return u * s
    if isinstance(u, Dual1):
        s = 1.0 if u.v > 0.0 else (-1.0 if u.v < 0.0 else 0.0)
        return u * s
    return abs(u)


def polyval(coeffs_low_first, x):
    """Horner evaluation; works on float, Dual1, and Jet arguments."""
    acc = coeffs_low_first[-1]
    if isinstance(x, (Jet, Dual1)):
        acc = x * 0.0 + acc
    for c in reversed(coeffs_low_first[:-1]):
        acc = acc * x + c
    return acc


def poly_eval_shifted(coeffs_low_first, u, center):
    """Evaluate sum_k c_k (u - center)^k for a jet/dual/float u."""
    return polyval(coeffs_low_first, u - center)
