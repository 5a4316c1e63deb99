"""Exact dyadic-rational arithmetic for droplet concentration factors.

A concentration factor (CF) is the sample fraction of a droplet, always a
dyadic rational x/2^n in [0, 1] under the equal-volume mix-split model.
Values are kept as integer numerator plus power-of-two scale so that every
mixing step is exact; nothing in this module touches floating point except
`approx_real`, which converts a requested real target into the nearest
representable CF.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError


@dataclass(frozen=True)
class ConcentrationFactor:
    """Dyadic fraction numerator/2^scale in [0, 1].

    Instances may be held at a fixed working scale (e.g. the gradient
    accuracy n); equality and hashing always compare canonical forms, so
    8/16 == 1/2 regardless of how either side is stored.
    """

    numerator: int
    scale: int

    def __post_init__(self) -> None:
        if self.scale < 0:
            raise DomainError(f"scale must be >= 0, got {self.scale}")
        if not 0 <= self.numerator <= (1 << self.scale):
            raise DomainError(
                f"numerator {self.numerator} out of range for scale {self.scale}"
            )

    def canonical(self) -> "ConcentrationFactor":
        """Reduce by trailing zeros so the numerator is odd (or zero)."""
        num, scale = self.numerator, self.scale
        if num == 0:
            return ConcentrationFactor(0, 0)
        shift = min(trailing_zeros(num), scale)
        return ConcentrationFactor(num >> shift, scale - shift)

    @property
    def value(self) -> Fraction:
        return Fraction(self.numerator, 1 << self.scale)

    def at_scale(self, scale: int) -> "ConcentrationFactor":
        """Rescale losslessly; raises if the value needs more bits."""
        c = self.canonical()
        if c.scale > scale:
            raise DomainError(f"{self} is not representable at scale {scale}")
        return ConcentrationFactor(c.numerator << (scale - c.scale), scale)

    @property
    def is_stock(self) -> bool:
        """True for pure buffer (0) or pure sample (1)."""
        return self.numerator == 0 or self.numerator == (1 << self.scale)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConcentrationFactor):
            return NotImplemented
        a, b = self.canonical(), other.canonical()
        return a.numerator == b.numerator and a.scale == b.scale

    def __hash__(self) -> int:
        c = self.canonical()
        return hash((c.numerator, c.scale))

    def __str__(self) -> str:
        return f"{self.numerator}/{1 << self.scale}"

    @classmethod
    def parse(cls, text: str) -> "ConcentrationFactor":
        """Parse the report form "x/2^n-as-decimal", e.g. "176/256"."""
        try:
            num_text, den_text = text.strip().split("/")
            num, den = int(num_text), int(den_text)
        except ValueError as exc:
            raise DomainError(f"malformed CF string {text!r}") from exc
        if den <= 0 or den & (den - 1):
            raise DomainError(f"CF denominator must be a power of two: {text!r}")
        return cls(num, den.bit_length() - 1)

    @classmethod
    def from_fraction(cls, frac: Fraction) -> "ConcentrationFactor":
        den = frac.denominator
        if den & (den - 1):
            raise DomainError(f"{frac} is not dyadic")
        return cls(frac.numerator, den.bit_length() - 1)


CF_BUFFER = ConcentrationFactor(0, 0)
CF_SAMPLE = ConcentrationFactor(1, 0)


def make_cf(numerator: int, scale: int) -> ConcentrationFactor:
    """Build a CF in canonical form, validating 0 <= numerator <= 2^scale."""
    return ConcentrationFactor(numerator, scale).canonical()


def approx_real(target, scale: int) -> ConcentrationFactor:
    """Round a real in [0, 1] to the nearest x/2^scale (ties go half up)."""
    if scale < 1:
        raise DomainError(f"scale must be >= 1, got {scale}")
    exact = Fraction(target)
    if not 0 <= exact <= 1:
        raise DomainError(f"target {target} outside [0, 1]")
    numerator = int(exact * (1 << scale) + Fraction(1, 2))  # floor(t*2^n + 1/2)
    return ConcentrationFactor(numerator, scale)


def mix_cf(c1: ConcentrationFactor, c2: ConcentrationFactor) -> ConcentrationFactor:
    """Equal-volume mix: the exact arithmetic mean (C1 + C2) / 2."""
    scale = max(c1.scale, c2.scale)
    total = (c1.numerator << (scale - c1.scale)) + (c2.numerator << (scale - c2.scale))
    if total % 2 == 0:
        return ConcentrationFactor(total // 2, scale)
    return ConcentrationFactor(total, scale + 1)


def bin_repr(x: int, m: int) -> str:
    """m-bit binary representation of x, most significant bit first."""
    if x < 0 or x >= (1 << m):
        raise DomainError(f"{x} does not fit in {m} bits")
    return format(x, f"0{m}b") if m else ""


def zc(bits: str) -> int:
    """Count zero bits strictly between the leftmost and rightmost 1."""
    first = bits.find("1")
    last = bits.rfind("1")
    if first == -1 or first == last:
        return 0
    return bits.count("0", first, last)


def trailing_zeros(x: int) -> int:
    """Number of low-order zero bits; 0 for x = 0 by convention."""
    if x < 0:
        raise DomainError(f"trailing_zeros needs x >= 0, got {x}")
    if x == 0:
        return 0
    return (x & -x).bit_length() - 1


@dataclass(frozen=True)
class GradientSpec:
    """Arithmetic-progression target set: CFs (a + i*d)/2^n for i in 0..count-1."""

    a: int
    d: int
    n: int
    count: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DomainError(f"accuracy n must be >= 1, got {self.n}")
        if self.count < 3:
            raise DomainError(f"gradient needs >= 3 points, got {self.count}")
        if self.d < 1:
            raise DomainError(f"step numerator must be positive, got {self.d}")
        if self.a < 0:
            raise DomainError(f"start numerator must be >= 0, got {self.a}")
        if self.a + (self.count - 1) * self.d > (1 << self.n):
            raise DomainError(
                f"last target ({self.a + (self.count - 1) * self.d})/2^{self.n} exceeds 1"
            )

    def numerator_at(self, index: int) -> int:
        return self.a + index * self.d

    def cf_at(self, index: int) -> ConcentrationFactor:
        """CF of gradient index; indexes past count-1 address embedded points."""
        num = self.numerator_at(index)
        if not 0 <= num <= (1 << self.n):
            raise DomainError(f"index {index} has no valid CF in this gradient")
        return ConcentrationFactor(num, self.n)

    def targets(self) -> list[ConcentrationFactor]:
        return [self.cf_at(i) for i in range(self.count)]
