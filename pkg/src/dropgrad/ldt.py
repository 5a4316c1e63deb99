"""Linear dilution tree planning.

Builds the binary-search-tree over gradient indices whose every node is the
median of its range endpoints, and turns it into an executable mix-split
schedule.  For gradients of size 2^g + 1 the schedule is zero-waste: interior
droplets are produced on demand while walking the tree in post-order, spent
interior droplets are regenerated from their children's reserved copies, and
the closed-form predictors below give the exact mix, waste, droplet and
boundary counts the executor must reproduce.

Sizes that are not 2^g + 1 are planned by embedding the targets as the left
prefix of the next larger full gradient and generating only the demanded part
of that tree; leftover droplets of embedded-only concentrations become the
plan's waste.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .concentration import ConcentrationFactor, GradientSpec, bin_repr, zc
from .errors import DomainError, InfeasibleEmbeddingError

LEFT = "left"
RIGHT = "right"
SAMPLE = "sample"
BUFFER = "buffer"


# --- plan operations ---------------------------------------------------------


@dataclass(frozen=True)
class DispenseBoundary:
    """Draw one droplet of a boundary CF from its external reservoir."""

    side: str  # "left" | "right"
    cf: ConcentrationFactor


@dataclass(frozen=True)
class DispenseStock:
    """Draw one droplet of raw stock: sample (CF 1) or buffer (CF 0)."""

    kind: str  # "sample" | "buffer"
    cf: ConcentrationFactor
    source: str = "stock"  # "engine" when it feeds a dilution engine


@dataclass(frozen=True)
class Mix:
    """(1:1) mix-split: consumes one droplet of each input CF, produces two
    droplets of their mean."""

    in_a: ConcentrationFactor
    in_b: ConcentrationFactor
    out: ConcentrationFactor


@dataclass(frozen=True)
class Output:
    """Ship one droplet of a target CF to the chip output."""

    cf: ConcentrationFactor
    target_index: int


@dataclass(frozen=True)
class Discard:
    """Send one droplet to waste."""

    cf: ConcentrationFactor


PlanOp = Union[DispenseBoundary, DispenseStock, Mix, Output, Discard]


@dataclass(frozen=True)
class MixPlan:
    """Ordered, replayable gradient schedule."""

    ops: tuple[PlanOp, ...]
    gradient: GradientSpec
    order_g: int  # order of the tree actually walked (embedding order if embedded)
    embedded: bool

    @property
    def right_boundary_index(self) -> int:
        return (1 << self.order_g) if self.embedded else self.gradient.count - 1

    @property
    def boundary_left_cf(self) -> ConcentrationFactor:
        return self.gradient.cf_at(0)

    @property
    def boundary_right_cf(self) -> ConcentrationFactor:
        return self.gradient.cf_at(self.right_boundary_index)

    def mix_count(self) -> int:
        return sum(1 for op in self.ops if isinstance(op, Mix))


# --- tree construction -------------------------------------------------------


@dataclass
class LdtNode:
    """Node of the linear dilution tree.

    `lo_index`/`hi_index` are the gradient indices of the range endpoints
    whose median this node is; mixing one droplet of each endpoint CF
    produces two droplets of this node's CF.
    """

    index: int
    lo_index: int
    hi_index: int
    depth: int
    left: Optional["LdtNode"] = None
    right: Optional["LdtNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None and self.right is None


def _is_power_of_two(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


def build_ldt(
    indices: list[int], lo: Optional[int] = None, hi: Optional[int] = None
) -> LdtNode:
    """Build the complete median BST over a contiguous run of gradient indices.

    The list length must be 2^g - 1.  `lo`/`hi` are the boundary indices the
    run sits between (default: one step either side of the run).
    """
    size = len(indices)
    if not _is_power_of_two(size + 1):
        raise DomainError(
            f"LDT needs 2^g - 1 indices, got {size}; embed the gradient first"
        )
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise DomainError("indices must be strictly increasing")
    if lo is None:
        lo = indices[0] - 1
    if hi is None:
        hi = indices[-1] + 1

    def build(seq: list[int], lo_i: int, hi_i: int, depth: int) -> LdtNode:
        mid = len(seq) // 2
        median = seq[mid]
        if (lo_i + hi_i) % 2 or (lo_i + hi_i) // 2 != median:
            raise DomainError(
                f"index {median} is not the median of endpoints ({lo_i}, {hi_i})"
            )
        node = LdtNode(median, lo_i, hi_i, depth)
        if mid:
            node.left = build(seq[:mid], lo_i, median, depth + 1)
            node.right = build(seq[mid + 1 :], median, hi_i, depth + 1)
        return node

    return build(list(indices), lo, hi, 0)


def postorder_indices(root: LdtNode) -> list[int]:
    """Indices in post-order (left subtree, right subtree, node)."""
    out: list[int] = []

    def walk(node: Optional[LdtNode]) -> None:
        if node is None:
            return
        walk(node.left)
        walk(node.right)
        out.append(node.index)

    walk(root)
    return out


# --- closed-form predictors --------------------------------------------------


def full_gradient_order(size: int) -> Optional[int]:
    """g such that size = 2^g + 1, or None."""
    if size >= 3 and _is_power_of_two(size - 1):
        return (size - 1).bit_length() - 1
    return None


def embedding_order(size: int) -> int:
    """Order h of the full gradient a non-power size embeds into (h = g + 1
    where 2^g + 1 < size < 2^(g+1) + 1)."""
    if size < 3:
        raise DomainError(f"gradient needs >= 3 points, got {size}")
    if full_gradient_order(size) is not None:
        raise DomainError(f"size {size} is already of the form 2^g + 1")
    return (size - 2).bit_length()


def predicted_mixes(g: int) -> int:
    """Mix-split count of the zero-waste schedule: 2^(g-2)(g+3) - 1."""
    if g < 1:
        raise DomainError(f"gradient order must be >= 1, got {g}")
    return ((g + 3) << g) // 4 - 1


def predicted_waste(size: int) -> int:
    """Waste droplets for a gradient of the given size (0 for full sizes)."""
    if size < 3:
        raise DomainError(f"gradient needs >= 3 points, got {size}")
    if full_gradient_order(size) is not None:
        return 0
    g = embedding_order(size) - 1
    return zc(bin_repr(size - 1, g + 2))


def copies_at_depth(g: int, depth: int) -> int:
    """Droplets generated per node at a tree depth: 2^(g-1-depth) + 2, leaves 2."""
    if not 0 <= depth <= g - 1:
        raise DomainError(f"depth {depth} outside 0..{g - 1}")
    if depth == g - 1:
        return 2
    return (1 << (g - 1 - depth)) + 2


def boundary_demand(g: int) -> int:
    """Droplets consumed from each boundary reservoir by the full schedule."""
    if g < 1:
        raise DomainError(f"gradient order must be >= 1, got {g}")
    return 1 << (g - 1)


# --- scheduling --------------------------------------------------------------


@dataclass
class _Planner:
    """Emits the demand-driven schedule for one (possibly pruned) tree walk.

    Droplet bookkeeping mirrors the storage model: `pools` holds unreserved
    spares any later step may consume, `reserved` holds the one droplet each
    child sets aside for its parent's regeneration mix.  A node is produced
    by mixing one droplet of each of its range endpoints, always yielding a
    pair: one droplet goes to the requesting step, the other is pooled,
    reserved, or shipped.
    """

    cf_of: Callable[[int], ConcentrationFactor]
    root: LdtNode
    lo_boundary: int
    hi_boundary: int
    needed_max: int  # largest interior index that is a requested target
    full: bool

    ops: list[PlanOp] = field(default_factory=list)
    pools: Counter = field(default_factory=Counter)
    reserved: set = field(default_factory=set)

    def __post_init__(self) -> None:
        self._nodes: dict[int, LdtNode] = {}
        self._parents: dict[int, Optional[int]] = {self.root.index: None}
        self._deliver: dict[int, bool] = {}
        self._index(self.root)

    def _index(self, node: LdtNode) -> bool:
        self._nodes[node.index] = node
        if node.is_leaf:
            ok = node.index <= self.needed_max
        else:
            self._parents[node.left.index] = node.index
            self._parents[node.right.index] = node.index
            ok = self._index(node.left) & self._index(node.right)
        self._deliver[node.index] = ok
        return ok

    def _regens(self, node: LdtNode) -> bool:
        if node.is_leaf:
            return False
        return self._deliver[node.left.index] and self._deliver[node.right.index]

    def _in_walk(self, node: Optional[LdtNode]) -> bool:
        # subtree indices run lo_index+1 .. hi_index-1
        return node is not None and node.lo_index < self.needed_max

    def run(self) -> list[PlanOp]:
        self._visit(self.root)
        if self.full:
            assert not self.pools and not self.reserved, "full plan left droplets over"
        else:
            self._flush_leftovers()
        return self.ops

    def _visit(self, node: LdtNode) -> None:
        if node.is_leaf:
            self._produce(node, to_output=True)
            return
        for child in (node.left, node.right):
            if self._in_walk(child):
                self._visit(child)
        if self._regens(node):
            self._regenerate(node)
        elif node.index <= self.needed_max:
            self._ensure(node.index)
            self.ops.append(Output(self.cf_of(node.index), node.index))

    def _ensure(self, index: int) -> None:
        """Obtain one droplet of an interior CF: pooled spare if available,
        otherwise a fresh production mix (whose twin joins the pool)."""
        if self.pools[index]:
            self.pools[index] -= 1
            return
        self._produce(self._nodes[index], to_output=False)

    def _produce(self, node: LdtNode, to_output: bool) -> None:
        lo, hi = node.lo_index, node.hi_index
        for endpoint in (hi, lo):  # deeper dependency chains sit on the hi side
            if self.lo_boundary < endpoint < self.hi_boundary:
                self._ensure(endpoint)
        for endpoint in (lo, hi):
            if endpoint == self.lo_boundary:
                self.ops.append(DispenseBoundary(LEFT, self.cf_of(endpoint)))
            elif endpoint == self.hi_boundary:
                self.ops.append(DispenseBoundary(RIGHT, self.cf_of(endpoint)))
        self.ops.append(Mix(self.cf_of(lo), self.cf_of(hi), self.cf_of(node.index)))
        if to_output:
            self.ops.append(Output(self.cf_of(node.index), node.index))
            if self.full and node is self.root:  # single-node tree: ship the pair
                self.ops.append(Output(self.cf_of(node.index), node.index))
                return
            self._park_twin(node)
        else:
            self.pools[node.index] += 1

    def _regenerate(self, node: LdtNode) -> None:
        """Replenish an interior CF by mixing its children's reserved droplets."""
        for child in (node.left, node.right):
            key = (node.index, child.index)
            assert key in self.reserved, f"regeneration droplet missing for {key}"
            self.reserved.discard(key)
        self.ops.append(
            Mix(
                self.cf_of(node.left.index),
                self.cf_of(node.right.index),
                self.cf_of(node.index),
            )
        )
        self.ops.append(Output(self.cf_of(node.index), node.index))
        if self.full and node is self.root:
            self.ops.append(Output(self.cf_of(node.index), node.index))
        else:
            self._park_twin(node)

    def _park_twin(self, node: LdtNode) -> None:
        parent = self._parents[node.index]
        if parent is not None and self._regens(self._nodes[parent]):
            self.reserved.add((parent, node.index))
        else:
            self.pools[node.index] += 1

    def _flush_leftovers(self) -> None:
        """Ship leftover droplets of requested CFs, discard embedded-only ones."""
        assert not self.reserved, "pruned plan left reserved droplets over"
        for index in sorted(self.pools):
            for _ in range(self.pools[index]):
                if index <= self.needed_max:
                    self.ops.append(Output(self.cf_of(index), index))
                else:
                    self.ops.append(Discard(self.cf_of(index)))
        self.pools.clear()


def plan_full(spec: GradientSpec) -> MixPlan:
    """Zero-waste schedule for a gradient of size 2^g + 1.

    Boundary droplets (first and last targets) are consumed from external
    reservoirs; every interior target is shipped once and the median twice.
    """
    g = full_gradient_order(spec.count)
    if g is None:
        raise DomainError(
            f"size {spec.count} is not 2^g + 1; use plan_arbitrary instead"
        )
    last = spec.count - 1
    root = build_ldt(list(range(1, last)), lo=0, hi=last)
    planner = _Planner(
        cf_of=spec.cf_at,
        root=root,
        lo_boundary=0,
        hi_boundary=last,
        needed_max=last - 1,
        full=True,
    )
    return MixPlan(tuple(planner.run()), spec, order_g=g, embedded=False)


def plan_arbitrary(spec: GradientSpec) -> MixPlan:
    """Schedule for any gradient size >= 3.

    Full sizes delegate to `plan_full`.  Other sizes are planned as the left
    prefix of the next larger full gradient: the embedded right boundary is
    (a + 2^h*d)/2^n, only tree nodes transitively demanded by the requested
    targets are generated, and spare droplets of embedded-only CFs end up
    discarded.
    """
    if full_gradient_order(spec.count) is not None:
        return plan_full(spec)
    h = embedding_order(spec.count)
    corner = 1 << h
    if spec.numerator_at(corner) > (1 << spec.n):
        raise InfeasibleEmbeddingError(
            f"embedded right boundary ({spec.numerator_at(corner)})/2^{spec.n} "
            f"exceeds 1 for size {spec.count}"
        )
    root = build_ldt(list(range(1, corner)), lo=0, hi=corner)
    planner = _Planner(
        cf_of=spec.cf_at,
        root=root,
        lo_boundary=0,
        hi_boundary=corner,
        needed_max=spec.count - 1,
        full=False,
    )
    return MixPlan(tuple(planner.run()), spec, order_g=h, embedded=True)


def output_order(plan: MixPlan) -> list[int]:
    """Target indices in the order their droplets reach the output."""
    return [op.target_index for op in plan.ops if isinstance(op, Output)]
