"""Single-CF dilution: bit-scanning chains and the stack-refill engine.

A target x/2^m (x odd) is reached by m mix-split steps: the first mixes raw
sample with buffer, each later step mixes the running droplet with sample or
buffer according to the next-higher bit of x.  Run once, the chain yields two
target droplets and leaves one spare at every intermediate concentration;
the engine keeps those spares on a stack and serves larger demands by popping
the spare closest to the target and replaying only the tail of the chain,
which regenerates the shallower spares as it goes.  A full stack expansion
yields 2^m targets in 2^m - 1 mixes from a single pass worth of stock.
"""

from __future__ import annotations

from dataclasses import dataclass

from .concentration import CF_BUFFER, CF_SAMPLE, ConcentrationFactor
from .errors import DomainError
from .ldt import BUFFER, SAMPLE, Discard, DispenseStock, Mix, Output, PlanOp


@dataclass(frozen=True)
class BsChain:
    """Mix sequence for one target CF.

    `steps` holds the stock choice for mixes 2..m; mix 1 is always sample
    with buffer.  `levels[t-1]` is the running CF after mix t, so
    levels[0] == 1/2 and levels[-1] == target.
    """

    target: ConcentrationFactor
    length: int
    steps: tuple[str, ...]
    levels: tuple[ConcentrationFactor, ...]

    def replay_value(self) -> ConcentrationFactor:
        """Fold the mixing recurrence; must land exactly on the target."""
        if not self.length:
            return self.target
        current = CF_SAMPLE.value / 2 + CF_BUFFER.value / 2
        for stock in self.steps:
            current = (current + (1 if stock == SAMPLE else 0)) / 2
        return ConcentrationFactor.from_fraction(current)


def bs_sequence(target: ConcentrationFactor) -> BsChain:
    """Right-to-left bit scan of the reduced target numerator.

    Stock targets (CF 0 or 1) need no mixing and get an empty chain.
    """
    reduced = target.canonical()
    if reduced.is_stock:
        return BsChain(reduced, 0, (), ())
    x, m = reduced.numerator, reduced.scale
    steps = tuple(
        SAMPLE if (x >> bit) & 1 else BUFFER for bit in range(1, m)
    )
    levels = tuple(
        ConcentrationFactor(x & ((1 << t) - 1), t) for t in range(1, m + 1)
    )
    return BsChain(reduced, m, steps, levels)


@dataclass(frozen=True)
class EnginePlan:
    """Schedule mass-producing one CF; targets always arrive in pairs."""

    target: ConcentrationFactor
    demand: int
    ops: tuple[PlanOp, ...]
    produced: int
    leftover_spares: int
    mix_count: int
    peak_stack: int


def engine_plan(
    target: ConcentrationFactor, demand: int, accuracy: int
) -> EnginePlan:
    """Produce at least `demand` droplets of the target CF.

    Spares are refilled LIFO (pop the stored droplet nearest the target
    level); when the stack runs dry before demand is met a fresh chain is
    started from stock.  Whatever is left on the stack at the end is
    discarded.  `accuracy` is the working bit depth; the reduced chain
    length never exceeds it.
    """
    if demand < 1:
        raise DomainError(f"demand must be >= 1, got {demand}")
    chain = bs_sequence(target)
    if chain.length > accuracy:
        raise DomainError(
            f"target {target} needs {chain.length} bits, accuracy is {accuracy}"
        )
    ops: list[PlanOp] = []

    if chain.length == 0:  # raw stock: dispense directly, no mixing
        kind = SAMPLE if chain.target.numerator else BUFFER
        for _ in range(demand):
            ops.append(DispenseStock(kind, chain.target, source="engine"))
            ops.append(Output(chain.target, None))
        return EnginePlan(chain.target, demand, tuple(ops), demand, 0, 0, 0)

    m = chain.length
    stack: list[int] = []
    produced = mixes = peak = 0

    def stock_cf(kind: str) -> ConcentrationFactor:
        return CF_SAMPLE if kind == SAMPLE else CF_BUFFER

    def run_tail(level: int) -> None:
        """Mix from `level` (0 = fresh from stock) up to the target pair."""
        nonlocal produced, mixes, peak
        if level == 0:
            ops.append(DispenseStock(SAMPLE, CF_SAMPLE, source="engine"))
            ops.append(DispenseStock(BUFFER, CF_BUFFER, source="engine"))
            ops.append(Mix(CF_BUFFER, CF_SAMPLE, chain.levels[0]))
            mixes += 1
            level = 1
            if level < m:
                stack.append(level)
        while level < m:
            level += 1
            kind = chain.steps[level - 2]
            ops.append(DispenseStock(kind, stock_cf(kind), source="engine"))
            ops.append(Mix(chain.levels[level - 2], stock_cf(kind), chain.levels[level - 1]))
            mixes += 1
            if level < m:
                stack.append(level)
        peak = max(peak, len(stack))
        produced += 2
        ops.append(Output(chain.target, None))
        ops.append(Output(chain.target, None))

    while produced < demand:
        run_tail(stack.pop() if stack else 0)

    leftover = len(stack)
    for level in reversed(stack):
        ops.append(Discard(chain.levels[level - 1]))

    return EnginePlan(chain.target, demand, tuple(ops), produced, leftover, mixes, peak)
