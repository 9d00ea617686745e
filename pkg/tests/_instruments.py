"""Counting instrumentation for the arithmetic/memory budget tests."""

from __future__ import annotations


class OpCounter:
    def __init__(self):
        self.mul = 0
        self.add = 0
        self.cmp = 0
        self.div = 0

    @property
    def flops(self) -> int:
        return self.mul + self.add

    def reset(self):
        self.mul = self.add = self.cmp = self.div = 0


class CountingFloat:
    """Float wrapper that counts multiplications, additions, comparisons.

    Flows through any arithmetic written with python operators, which is
    how the projection and exit-face code is written.
    """

    __slots__ = ("value", "counter")

    def __init__(self, value, counter: OpCounter):
        self.value = float(value)
        self.counter = counter

    def _wrap(self, value):
        return CountingFloat(value, self.counter)

    @staticmethod
    def _val(other):
        return other.value if isinstance(other, CountingFloat) else float(other)

    def __mul__(self, other):
        self.counter.mul += 1
        return self._wrap(self.value * self._val(other))

    __rmul__ = __mul__

    def __add__(self, other):
        self.counter.add += 1
        return self._wrap(self.value + self._val(other))

    __radd__ = __add__

    def __sub__(self, other):
        self.counter.add += 1
        return self._wrap(self.value - self._val(other))

    def __rsub__(self, other):
        self.counter.add += 1
        return self._wrap(self._val(other) - self.value)

    def __truediv__(self, other):
        self.counter.div += 1
        return self._wrap(self.value / self._val(other))

    def __neg__(self):
        return self._wrap(-self.value)

    def __lt__(self, other):
        self.counter.cmp += 1
        return self.value < self._val(other)

    def __le__(self, other):
        self.counter.cmp += 1
        return self.value <= self._val(other)

    def __gt__(self, other):
        self.counter.cmp += 1
        return self.value > self._val(other)

    def __ge__(self, other):
        self.counter.cmp += 1
        return self.value >= self._val(other)

    def __float__(self):
        return self.value

    def __repr__(self):
        return f"CountingFloat({self.value})"


class CountingArray:
    """Indexable wrapper counting item reads (the one-fetch property)."""

    def __init__(self, data):
        self.data = data
        self.reads = 0

    def __getitem__(self, key):
        self.reads += 1
        return self.data[key]

    def __len__(self):
        return len(self.data)
