"""Exact arithmetic in Q(sqrt(d1), sqrt(d2), ...).

A :class:`Surd` is a finite sum ``sum_s q_s * sqrt(s)`` with rational ``q_s`` and
distinct squarefree ``s >= 1``.  Square roots of distinct squarefree integers are
linearly independent over Q, so a surd is zero iff all coefficients vanish; any
nonzero value has its sign resolved by interval refinement with integer square
roots.  :class:`SurdRoot` adds one extra term ``sqrt(q)`` with ``q`` a nonnegative
surd, which is enough for droplet scales such as ``4*L*M + 1`` where ``M`` is a
vertex norm.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import Union

Rational = Union[int, Fraction]


@lru_cache(maxsize=4096)
def squarefree_split(n: int) -> tuple[int, int]:
    """Return ``(k, s)`` with ``n == k*k*s`` and ``s`` squarefree."""
    if n < 0:
        raise ValueError("negative radicand")
    if n == 0:
        return 0, 1
    k, s = 1, 1
    p = 2
    while p * p <= n:
        e = 0
        while n % p == 0:
            n //= p
            e += 1
        k *= p ** (e // 2)
        if e % 2:
            s *= p
        p += 1 if p == 2 else 2
    return k, s * n


class Surd:
    __slots__ = ("terms", "_sign")

    def __init__(self, value: Rational | dict = 0):
        if isinstance(value, dict):
            self.terms = {s: Fraction(c) for s, c in value.items() if c != 0}
        else:
            v = Fraction(value)
            self.terms = {1: v} if v != 0 else {}
        self._sign = None

    @classmethod
    def sqrt(cls, n: Rational) -> "Surd":
        n = Fraction(n)
        if n < 0:
            raise ValueError("sqrt of a negative number")
        # sqrt(p/q) = sqrt(p*q)/q
        k, s = squarefree_split(n.numerator * n.denominator)
        return cls({s: Fraction(k, n.denominator)})

    @staticmethod
    def coerce(x) -> "Surd":
        if isinstance(x, Surd):
            return x
        if isinstance(x, (int, Fraction)):
            return Surd(x)
        raise TypeError(f"cannot use {type(x).__name__} as an exact number")

    # arithmetic

    def __add__(self, other):
        other = Surd.coerce(other)
        out = dict(self.terms)
        for s, c in other.terms.items():
            out[s] = out.get(s, 0) + c
        return Surd(out)

    __radd__ = __add__

    def __neg__(self):
        return Surd({s: -c for s, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-Surd.coerce(other))

    def __rsub__(self, other):
        return Surd.coerce(other) - self

    def __mul__(self, other):
        other = Surd.coerce(other)
        out: dict[int, Fraction] = {}
        for s1, c1 in self.terms.items():
            for s2, c2 in other.terms.items():
                g = math.gcd(s1, s2)
                # sqrt(s1)*sqrt(s2) = g*sqrt(s1*s2/g^2), and s1*s2/g^2 is squarefree
                s = (s1 // g) * (s2 // g)
                out[s] = out.get(s, 0) + c1 * c2 * g
        return Surd(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Surd):
            if set(other.terms) - {1}:
                raise TypeError("division by an irrational surd is not supported")
            other = other.terms.get(1, Fraction(0))
        other = Fraction(other)
        return Surd({s: c / other for s, c in self.terms.items()})

    # inspection

    def is_rational(self) -> bool:
        return set(self.terms) <= {1}

    def rational(self) -> Fraction:
        if not self.is_rational():
            raise ValueError(f"{self} is irrational")
        return self.terms.get(1, Fraction(0))

    def bounds(self, bits: int) -> tuple[Fraction, Fraction]:
        lo = hi = Fraction(0)
        scale = 1 << bits
        for s, c in self.terms.items():
            r = math.isqrt(s * scale * scale)
            if r * r == s * scale * scale:
                l = h = Fraction(r, scale)
            else:
                l, h = Fraction(r, scale), Fraction(r + 1, scale)
            if c > 0:
                lo += c * l
                hi += c * h
            else:
                lo += c * h
                hi += c * l
        return lo, hi

    def sign(self) -> int:
        if self._sign is None:
            if not self.terms:
                self._sign = 0
            elif self.is_rational():
                self._sign = (self.terms[1] > 0) - (self.terms[1] < 0)
            else:
                bits = 32
                while True:
                    lo, hi = self.bounds(bits)
                    if lo > 0:
                        self._sign = 1
                        break
                    if hi < 0:
                        self._sign = -1
                        break
                    bits *= 2
        return self._sign

    def __float__(self):
        return float(sum(c * math.sqrt(s) for s, c in self.terms.items()))

    def floor(self) -> int:
        k = math.floor(float(self))
        while self < k:
            k -= 1
        while self >= k + 1:
            k += 1
        return k

    def ceil(self) -> int:
        return -((-self).floor())

    # comparisons

    def _cmp(self, other) -> int:
        return (self - other).sign()

    def __eq__(self, other):
        try:
            return self._cmp(other) == 0
        except TypeError:
            return NotImplemented

    def __hash__(self):
        return hash(tuple(sorted(self.terms.items())))

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for s in sorted(self.terms):
            c = self.terms[s]
            parts.append(str(c) if s == 1 else f"{c}*sqrt({s})")
        return " + ".join(parts)


class SurdRoot:
    """The real number ``base + sqrt(radicand)`` with surd ``base`` and ``radicand >= 0``."""

    __slots__ = ("base", "radicand")

    def __init__(self, base, radicand=0):
        self.base = Surd.coerce(base)
        self.radicand = Surd.coerce(radicand)
        if self.radicand.sign() < 0:
            raise ValueError("negative radicand")

    @staticmethod
    def coerce(x) -> "SurdRoot":
        return x if isinstance(x, SurdRoot) else SurdRoot(x)

    def compare(self, x) -> int:
        """Sign of ``x - self`` for a surd ``x``."""
        d = Surd.coerce(x) - self.base
        if self.radicand.sign() == 0:
            return d.sign()
        if d.sign() <= 0:
            return -1
        return (d * d - self.radicand).sign()

    def __mul__(self, k):
        k = Fraction(k)
        if k < 0:
            raise ValueError("only nonnegative rational scaling is supported")
        return SurdRoot(self.base * k, self.radicand * (k * k))

    __rmul__ = __mul__

    def __add__(self, k):
        return SurdRoot(self.base + Surd.coerce(k), self.radicand)

    __radd__ = __add__

    def __float__(self):
        return float(self.base) + math.sqrt(max(float(self.radicand), 0.0))

    def floor(self) -> int:
        k = math.floor(float(self))
        while self.compare(k) > 0:
            k -= 1
        while self.compare(k + 1) <= 0:
            k += 1
        return k

    def ceil(self) -> int:
        k = self.floor()
        return k if self.compare(k) == 0 else k + 1

    def __repr__(self):
        if self.radicand.sign() == 0:
            return repr(self.base)
        return f"({self.base}) + sqrt({self.radicand})"
