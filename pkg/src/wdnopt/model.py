"""Domain model for multi-period water distribution network design.

A network is an undirected graph of junctions and reservoirs joined by
pipes of known length.  A design (``Solution``) assigns one catalog type
(diameter, roughness, unit cost) to every pipe.  Junction demand varies
over a planning horizon of discrete periods through load patterns.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field


class InstanceError(ValueError):
    """The instance data violates a model invariant."""


class ContractViolation(ValueError):
    """An operation was invoked outside its stated contract."""


JUNCTION = "junction"
RESERVOIR = "reservoir"


@dataclass(frozen=True)
class PipeType:
    """One catalog entry. ``index`` is its 1-based position in the catalog."""

    index: int
    diameter_mm: float
    roughness: float
    unit_cost: float

    def __post_init__(self) -> None:
        if self.diameter_mm <= 0 or self.roughness <= 0 or self.unit_cost <= 0:
            raise InstanceError(
                f"pipe type {self.index}: diameter, roughness and cost must be positive"
            )

    @property
    def diameter_m(self) -> float:
        return self.diameter_mm / 1000.0


@dataclass(frozen=True)
class PipeTypeCatalog:
    """Ordered pipe types, nondecreasing in both diameter and unit cost.

    Duplicate rows are permitted and kept verbatim.
    """

    types: tuple[PipeType, ...]

    def __post_init__(self) -> None:
        if not self.types:
            raise InstanceError("catalog must contain at least one pipe type")
        object.__setattr__(self, "types", tuple(self.types))
        for i, t in enumerate(self.types, start=1):
            if t.index != i:
                raise InstanceError(
                    f"catalog indices must be contiguous from 1; got {t.index} at position {i}"
                )
        for prev, cur in zip(self.types, self.types[1:]):
            if cur.diameter_mm < prev.diameter_mm:
                raise InstanceError(
                    f"catalog diameters must be nondecreasing; "
                    f"type {cur.index} ({cur.diameter_mm} mm) follows {prev.diameter_mm} mm"
                )
            if cur.unit_cost < prev.unit_cost:
                raise InstanceError(
                    f"catalog unit costs must be nondecreasing; "
                    f"type {cur.index} ({cur.unit_cost}) follows {prev.unit_cost}"
                )

    def __len__(self) -> int:
        return len(self.types)

    def get(self, type_index: int) -> PipeType:
        """Return the type with 1-based ``type_index``."""
        if not 1 <= type_index <= len(self.types):
            raise ContractViolation(
                f"type index {type_index} outside catalog range 1..{len(self.types)}"
            )
        return self.types[type_index - 1]


@dataclass(frozen=True)
class DemandCategory:
    """One (base load, pattern) pair attached to a junction."""

    base_load: float  # m^3/s
    pattern_id: str | None = None

    def __post_init__(self) -> None:
        if self.base_load < 0:
            raise InstanceError(f"base load must be nonnegative, got {self.base_load}")


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    elevation: float
    fixed_head: float | None = None
    demands: tuple[DemandCategory, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in (JUNCTION, RESERVOIR):
            raise InstanceError(f"node {self.id}: unknown kind {self.kind!r}")
        if self.kind == RESERVOIR:
            if self.fixed_head is None:
                raise InstanceError(f"reservoir {self.id} needs a fixed head")
            if self.demands:
                raise InstanceError(f"reservoir {self.id} cannot carry demand categories")
        else:
            if self.fixed_head is not None:
                raise InstanceError(f"junction {self.id} cannot have a fixed head")
        object.__setattr__(self, "demands", tuple(self.demands))

    @property
    def is_reservoir(self) -> bool:
        return self.kind == RESERVOIR


def junction(node_id: str, elevation: float = 0.0,
             demands: tuple[DemandCategory, ...] = ()) -> Node:
    return Node(id=node_id, kind=JUNCTION, elevation=elevation, demands=tuple(demands))


def reservoir(node_id: str, head: float) -> Node:
    return Node(id=node_id, kind=RESERVOIR, elevation=head, fixed_head=head)


@dataclass(frozen=True)
class Pipe:
    id: str
    node1: str
    node2: str
    length_m: float

    def __post_init__(self) -> None:
        if self.length_m <= 0:
            raise InstanceError(f"pipe {self.id}: length must be positive")
        if self.node1 == self.node2:
            raise InstanceError(f"pipe {self.id}: endpoints must be distinct")

    def other_end(self, node_id: str) -> str:
        if node_id == self.node1:
            return self.node2
        if node_id == self.node2:
            return self.node1
        raise ContractViolation(f"node {node_id} is not an endpoint of pipe {self.id}")


@dataclass(frozen=True)
class DemandModel:
    """Load patterns plus the number of periods in the horizon.

    A pattern shorter than the horizon wraps cyclically; a longer one is
    truncated (indices past the horizon are never read).
    """

    patterns: dict[str, tuple[float, ...]] = field(default_factory=dict)
    period_count: int = 24

    def __post_init__(self) -> None:
        if self.period_count < 1:
            raise InstanceError("period count must be at least 1")
        clean = {}
        for pid, mults in self.patterns.items():
            mults = tuple(float(m) for m in mults)
            if not mults:
                raise InstanceError(f"pattern {pid} is empty")
            if any(m < 0 for m in mults):
                raise InstanceError(f"pattern {pid} has a negative multiplier")
            clean[pid] = mults
        object.__setattr__(self, "patterns", clean)

    def multiplier(self, pattern_id: str | None, period: int) -> float:
        if pattern_id is None:
            return 1.0
        try:
            pattern = self.patterns[pattern_id]
        except KeyError:
            raise InstanceError(f"unknown demand pattern {pattern_id!r}") from None
        return pattern[(period - 1) % len(pattern)]


@dataclass(frozen=True)
class Network:
    """Immutable network: validated on construction, shareable thereafter."""

    nodes: tuple[Node, ...]
    pipes: tuple[Pipe, ...]
    demand_model: DemandModel = field(default_factory=DemandModel)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "pipes", tuple(self.pipes))

        by_id: dict[str, Node] = {}
        for node in self.nodes:
            if node.id in by_id:
                raise InstanceError(f"duplicate node id {node.id!r}")
            by_id[node.id] = node

        pipe_by_id: dict[str, Pipe] = {}
        for pipe in self.pipes:
            if pipe.id in pipe_by_id:
                raise InstanceError(f"duplicate pipe id {pipe.id!r}")
            for end in (pipe.node1, pipe.node2):
                if end not in by_id:
                    raise InstanceError(f"pipe {pipe.id} references unknown node {end!r}")
            pipe_by_id[pipe.id] = pipe

        if not any(n.is_reservoir for n in self.nodes):
            raise InstanceError("network needs at least one reservoir")

        for node in self.nodes:
            for cat in node.demands:
                if cat.pattern_id is not None and cat.pattern_id not in self.demand_model.patterns:
                    raise InstanceError(
                        f"node {node.id} references unknown pattern {cat.pattern_id!r}"
                    )

        adjacency: dict[str, list[tuple[str, str]]] = {n.id: [] for n in self.nodes}
        for pipe in sorted(self.pipes, key=lambda p: p.id):
            adjacency[pipe.node1].append((pipe.id, pipe.node2))
            adjacency[pipe.node2].append((pipe.id, pipe.node1))

        object.__setattr__(self, "_node_by_id", by_id)
        object.__setattr__(self, "_pipe_by_id", pipe_by_id)
        object.__setattr__(self, "_adjacency", adjacency)
        object.__setattr__(
            self, "_sorted_pipes", tuple(sorted(self.pipes, key=lambda p: p.id))
        )

        if self.nodes and connected_component_count(self) != 1:
            raise InstanceError("network graph must be connected")

    def node(self, node_id: str) -> Node:
        try:
            return self._node_by_id[node_id]
        except KeyError:
            raise ContractViolation(f"unknown node {node_id!r}") from None

    def pipe(self, pipe_id: str) -> Pipe:
        try:
            return self._pipe_by_id[pipe_id]
        except KeyError:
            raise ContractViolation(f"unknown pipe {pipe_id!r}") from None

    @property
    def sorted_pipes(self) -> tuple[Pipe, ...]:
        """Pipes in ascending id order; the canonical iteration order."""
        return self._sorted_pipes

    def junctions(self) -> tuple[Node, ...]:
        return tuple(n for n in sorted(self.nodes, key=lambda n: n.id) if not n.is_reservoir)

    def reservoirs(self) -> tuple[Node, ...]:
        return tuple(n for n in sorted(self.nodes, key=lambda n: n.id) if n.is_reservoir)

    def neighbors(self, node_id: str) -> list[tuple[str, str]]:
        """(pipe id, other node id) pairs incident to a node, in pipe-id order."""
        return self._adjacency[node_id]


@dataclass
class Solution:
    """Assignment of a 1-based catalog type index to every pipe id."""

    assignment: dict[str, int]

    def copy(self) -> "Solution":
        return Solution(dict(self.assignment))

    def type_of(self, pipe_id: str) -> int:
        try:
            return self.assignment[pipe_id]
        except KeyError:
            raise ContractViolation(f"solution has no type for pipe {pipe_id!r}") from None

    def with_type(self, pipe_id: str, type_index: int) -> "Solution":
        new = dict(self.assignment)
        new[pipe_id] = type_index
        return Solution(new)


def uniform_solution(net: Network, type_index: int) -> Solution:
    return Solution({p.id: type_index for p in net.sorted_pipes})


def solution_cost(solution: Solution, net: Network, catalog: PipeTypeCatalog) -> float:
    """Total cost: sum over pipes of unit cost of the assigned type times length."""
    total = 0.0
    for pipe in net.sorted_pipes:
        t = solution.type_of(pipe.id)
        total += catalog.get(t).unit_cost * pipe.length_m
    return total


def demand_at(node: Node, period: int, dm: DemandModel) -> float:
    """Demand of a node in one period, in m^3/s. Reservoirs draw nothing."""
    if not 1 <= period <= dm.period_count:
        raise ContractViolation(
            f"period {period} outside horizon 1..{dm.period_count}"
        )
    if node.is_reservoir:
        return 0.0
    return sum(cat.base_load * dm.multiplier(cat.pattern_id, period) for cat in node.demands)


def base_demand(node: Node, dm: DemandModel) -> float:
    """Smallest demand of a junction over the whole horizon."""
    if node.is_reservoir:
        raise ContractViolation(f"base demand is only defined for junctions, not {node.id}")
    return min(demand_at(node, tau, dm) for tau in range(1, dm.period_count + 1))


def connected_component_count(net: Network) -> int:
    seen: set[str] = set()
    count = 0
    for node in net.nodes:
        if node.id in seen:
            continue
        count += 1
        queue = deque([node.id])
        seen.add(node.id)
        while queue:
            current = queue.popleft()
            for _, other in net.neighbors(current):
                if other not in seen:
                    seen.add(other)
                    queue.append(other)
    return count


def meshedness(net: Network) -> float:
    """Independent loops relative to the planar maximum, |E|-|V|+c over 2|V|-5."""
    n = len(net.nodes)
    if 2 * n - 5 <= 0:
        raise InstanceError(f"meshedness undefined for {n} nodes (needs at least 3)")
    loops = len(net.pipes) - n + connected_component_count(net)
    return loops / (2 * n - 5)
