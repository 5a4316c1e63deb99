"""Replay of mix-split plans against a droplet-inventory model.

The executor walks a plan's op list and tracks every droplet.  Dispensed
droplets wait in a staging slot for the next mix; a mix's two fresh output
droplets stay at the mixer until the following mix starts, at which point any
that were not consumed move to storage cells.  Output and Discard take
droplets straight off the mixer when possible, so a droplet that is shipped
immediately after its mix never occupies storage.  `peak_storage` is the
largest number of droplets parked in storage cells after any op, which is the
quantity the storage-electrode bound speaks about.

Droplets of equal CF are physically interchangeable, so the inventory is a
multiset keyed by canonical CF; reservation bookkeeping lives in the planner.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .concentration import ConcentrationFactor, mix_cf
from .errors import ExecutionError
from .ldt import Discard, DispenseBoundary, DispenseStock, Mix, Output, PlanOp

_UNLIMITED = None


@dataclass
class Supplies:
    """External droplet sources; None means unlimited."""

    sample: Optional[int] = _UNLIMITED
    buffer: Optional[int] = _UNLIMITED
    boundary_left: Optional[int] = _UNLIMITED
    boundary_right: Optional[int] = _UNLIMITED

    def take(self, name: str) -> None:
        remaining = getattr(self, name)
        if remaining is None:
            return
        if remaining <= 0:
            raise ExecutionError(f"supply {name} exhausted")
        setattr(self, name, remaining - 1)


@dataclass
class Metrics:
    mix_count: int = 0
    waste_count: int = 0
    peak_storage: int = 0
    boundary_used: Counter = field(default_factory=Counter)
    stock_used: Counter = field(default_factory=Counter)
    outputs: Counter = field(default_factory=Counter)
    dispensed: int = 0
    leftover: int = 0

    @property
    def output_count(self) -> int:
        return sum(self.outputs.values())

    def outputs_list(self) -> list[tuple[str, int]]:
        return sorted((str(cf), count) for cf, count in self.outputs.items())

    def to_dict(self) -> dict:
        return {
            "mix_count": self.mix_count,
            "waste_count": self.waste_count,
            "peak_storage": self.peak_storage,
            "boundary_used": {
                "left": self.boundary_used["left"],
                "right": self.boundary_used["right"],
            },
            "stock_used": {
                "sample": self.stock_used["sample"],
                "buffer": self.stock_used["buffer"],
            },
            "outputs": [[cf, count] for cf, count in self.outputs_list()],
            "dispensed": self.dispensed,
            "output_count": self.output_count,
            "leftover": self.leftover,
        }


@dataclass
class TraceRow:
    step: int
    op: str
    in_a: str = ""
    in_b: str = ""
    out: str = ""
    stored_after: int = 0
    waste_after: int = 0


@dataclass
class ExecutionResult:
    metrics: Metrics
    trace: list[TraceRow]


TRACE_COLUMNS = ("step", "op", "inA", "inB", "out", "stored_after", "waste_after")


def trace_to_csv(trace: Iterable[TraceRow]) -> str:
    lines = [",".join(TRACE_COLUMNS)]
    for row in trace:
        lines.append(
            f"{row.step},{row.op},{row.in_a},{row.in_b},{row.out},"
            f"{row.stored_after},{row.waste_after}"
        )
    return "\n".join(lines) + "\n"


class _Inventory:
    """Staged (just dispensed), fresh (at the mixer) and stored droplets."""

    def __init__(self) -> None:
        self.staged: Counter = Counter()
        self.fresh: Counter = Counter()
        self.stored: Counter = Counter()

    def take(self, cf: ConcentrationFactor, step: int, op: PlanOp) -> None:
        for pool in (self.staged, self.fresh, self.stored):
            if pool[cf] > 0:
                pool[cf] -= 1
                return
        raise ExecutionError(f"step {step}: no droplet of {cf} available for {op}")

    def park_fresh(self) -> None:
        self.stored.update(self.fresh)
        self.fresh.clear()

    @property
    def total(self) -> int:
        return (
            sum(self.staged.values())
            + sum(self.fresh.values())
            + sum(self.stored.values())
        )


def _ops_of(plan) -> Sequence[PlanOp]:
    return plan if isinstance(plan, (list, tuple)) else plan.ops


def execute(plan, supplies: Optional[Supplies] = None) -> ExecutionResult:
    """Replay a plan (or raw op sequence), enforcing droplet feasibility.

    Raises ExecutionError when an op needs a droplet or supply that is not
    available.  Droplet conservation is asserted after every op:
    dispensed == shipped + wasted + still-on-chip.
    """
    supplies = Supplies(**vars(supplies)) if supplies else Supplies()
    inv = _Inventory()
    metrics = Metrics()
    trace: list[TraceRow] = []

    for step, op in enumerate(_ops_of(plan)):
        row = TraceRow(step=step, op=type(op).__name__)
        if isinstance(op, DispenseBoundary):
            supplies.take(f"boundary_{op.side}")
            metrics.boundary_used[op.side] += 1
            metrics.dispensed += 1
            inv.staged[op.cf] += 1
            row.out = str(op.cf)
        elif isinstance(op, DispenseStock):
            supplies.take(op.kind)
            metrics.stock_used[op.kind] += 1
            metrics.dispensed += 1
            inv.staged[op.cf] += 1
            row.out = str(op.cf)
        elif isinstance(op, Mix):
            if op.out != mix_cf(op.in_a, op.in_b):
                raise ExecutionError(
                    f"step {step}: mix output {op.out} is not the mean of "
                    f"{op.in_a} and {op.in_b}"
                )
            inv.take(op.in_a, step, op)
            inv.take(op.in_b, step, op)
            inv.park_fresh()
            inv.fresh[op.out] = 2
            metrics.mix_count += 1
            row.in_a, row.in_b, row.out = str(op.in_a), str(op.in_b), str(op.out)
        elif isinstance(op, Output):
            inv.take(op.cf, step, op)
            metrics.outputs[op.cf] += 1
            row.in_a = str(op.cf)
        elif isinstance(op, Discard):
            inv.take(op.cf, step, op)
            metrics.waste_count += 1
            row.in_a = str(op.cf)
        else:
            raise ExecutionError(f"step {step}: unknown op {op!r}")

        stored_now = sum(inv.stored.values())
        metrics.peak_storage = max(metrics.peak_storage, stored_now)
        assert metrics.dispensed == (
            metrics.output_count + metrics.waste_count + inv.total
        ), f"droplet conservation broken after step {step}"
        row.stored_after = stored_now
        row.waste_after = metrics.waste_count
        trace.append(row)

    metrics.leftover = inv.total
    return ExecutionResult(metrics=metrics, trace=trace)


@dataclass
class ValidationResult:
    ok: bool
    step: Optional[int] = None
    reason: Optional[str] = None


def validate(plan) -> ValidationResult:
    """Dry-run with unlimited supplies; report the first infeasible op."""
    try:
        result = execute(plan)
    except ExecutionError as exc:
        text = str(exc)
        step = None
        if text.startswith("step "):
            step = int(text.split(":", 1)[0].split()[1])
        return ValidationResult(ok=False, step=step, reason=text)
    if result.metrics.leftover:
        return ValidationResult(
            ok=False,
            step=None,
            reason=f"{result.metrics.leftover} droplets left on chip at plan end",
        )
    return ValidationResult(ok=True)
