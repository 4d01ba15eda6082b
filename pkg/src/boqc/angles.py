"""Exact arithmetic over the finite angle set used by the protocols.

All protocol angles live in Omega = {pi*k / 2**(b-1) : 0 <= k < 2**b} for a
precision ``b`` fixed once per run.  Angles are stored as the integer index
``k`` and never as radians, so angle equality, uniformity counts and the
delta arithmetic of the protocols are exact integer statements.  Conversion
to radians happens only at the quantum-backend boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator


class PrecisionMismatchError(ValueError):
    """Raised when combining angles carrying different precisions."""


@dataclass(frozen=True, order=True)
class DyadicAngle:
    """Angle pi*k / 2**(b-1), represented by the index ``k`` modulo 2**b."""

    k: int
    b: int

    def __post_init__(self) -> None:
        if self.b < 1:
            raise ValueError(f"precision must be >= 1, got b={self.b}")
        object.__setattr__(self, "k", self.k % (1 << self.b))

    @property
    def modulus(self) -> int:
        return 1 << self.b

    @property
    def half_turn(self) -> int:
        """Index of pi at this precision."""
        return 1 << (self.b - 1)

    def _check(self, other: DyadicAngle) -> None:
        if self.b != other.b:
            raise PrecisionMismatchError(
                f"mixed precisions b={self.b} and b={other.b}"
            )

    def __add__(self, other: DyadicAngle) -> DyadicAngle:
        self._check(other)
        return DyadicAngle(self.k + other.k, self.b)

    def __sub__(self, other: DyadicAngle) -> DyadicAngle:
        self._check(other)
        return DyadicAngle(self.k - other.k, self.b)

    def __neg__(self) -> DyadicAngle:
        return DyadicAngle(-self.k, self.b)

    def plus_pi_times(self, bit: int) -> DyadicAngle:
        """Shift by bit*pi; used for outcome-conditioned corrections."""
        return DyadicAngle(self.k + (bit & 1) * self.half_turn, self.b)

    def corrected(self, sx: int, sz: int) -> DyadicAngle:
        """(-1)**sx * theta + sz*pi, the absorbed Pauli correction."""
        k = -self.k if sx & 1 else self.k
        return DyadicAngle(k + (sz & 1) * self.half_turn, self.b)

    @property
    def radians(self) -> float:
        return math.pi * self.k / float(self.half_turn)

    @classmethod
    def zero(cls, b: int) -> DyadicAngle:
        return cls(0, b)

    @classmethod
    def pi(cls, b: int) -> DyadicAngle:
        return cls(1 << (b - 1), b)

    def to_json(self) -> dict:
        return {"k": self.k, "b": self.b}

    @classmethod
    def from_json(cls, obj: dict) -> DyadicAngle:
        return cls(int(obj["k"]), int(obj["b"]))


def add(a: DyadicAngle, c: DyadicAngle) -> DyadicAngle:
    """Sum in Omega; both operands must carry the same precision."""
    return a + c


def correct_angle(theta: DyadicAngle, sx: int, sz: int) -> DyadicAngle:
    """Absorb an X**sx then Z**sz correction into a measurement angle.

    M^theta X = M^(-theta) and M^theta Z = M^(theta+pi), so the absorbed
    angle is (-1)**sx * theta + sz*pi regardless of the order the two
    Paulis were applied in.
    """
    return theta.corrected(sx, sz)


def to_radians(a: DyadicAngle) -> float:
    """Float value pi*k/2**(b-1); only for the quantum backend."""
    return a.radians


def all_angles(b: int) -> Iterator[DyadicAngle]:
    """Iterate Omega in index order."""
    for k in range(1 << b):
        yield DyadicAngle(k, b)


def random_angle(rng, b: int) -> DyadicAngle:
    """Uniform draw from Omega using a numpy Generator."""
    return DyadicAngle(int(rng.integers(0, 1 << b)), b)
