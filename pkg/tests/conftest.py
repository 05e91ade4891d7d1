"""Shared fixture networks and catalogs."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wdnopt.model import (
    DemandCategory,
    DemandModel,
    Network,
    Pipe,
    PipeType,
    PipeTypeCatalog,
    junction,
    reservoir,
)

# 24-hour demand shape with a morning and an evening peak.
DIURNAL = (
    0.55, 0.45, 0.40, 0.40, 0.45, 0.60, 0.90, 1.30,
    1.20, 1.00, 0.95, 0.90, 0.85, 0.90, 0.95, 1.00,
    1.10, 1.25, 1.35, 1.20, 1.00, 0.85, 0.70, 0.60,
)

CATALOG16_ROWS = (
    (1, 20, 130, 9), (2, 30, 130, 20), (3, 40, 130, 25), (4, 50, 130, 30),
    (5, 60, 130, 35), (6, 80, 130, 48), (7, 100, 130, 50), (8, 150, 130, 61),
    (9, 200, 130, 116), (10, 250, 130, 150), (11, 300, 130, 201),
    (12, 400, 130, 290), (13, 400, 130, 290), (14, 500, 130, 351),
    (15, 600, 130, 528), (16, 1000, 130, 628),
)


def make_catalog(rows) -> PipeTypeCatalog:
    return PipeTypeCatalog(tuple(PipeType(*row) for row in rows))


@pytest.fixture(scope="session")
def catalog16() -> PipeTypeCatalog:
    return make_catalog(CATALOG16_ROWS)


@pytest.fixture(scope="session")
def catalog3() -> PipeTypeCatalog:
    return make_catalog([(1, 80, 130, 48), (2, 150, 130, 61), (3, 300, 130, 201)])


def chain_network(head: float, pipes: list[tuple[float]], demands: list[float],
                  pattern: tuple[float, ...] | None = DIURNAL,
                  elevations: list[float] | None = None) -> Network:
    """Reservoir R feeding junctions J1..Jn in a row.

    ``pipes[i]`` is the length of pipe Pi joining node i to node i+1 and
    ``demands[i]`` the base load (m^3/s) at junction i+1.
    """
    n = len(pipes)
    assert len(demands) == n
    elevations = elevations or [0.0] * n
    patterns = {"base": pattern} if pattern else {}
    dm = DemandModel(patterns=patterns, period_count=24 if pattern else 24)
    pattern_id = "base" if pattern else None
    nodes = [reservoir("R", head)]
    edges = []
    previous = "R"
    for i in range(n):
        name = f"J{i + 1}"
        cats = (DemandCategory(demands[i], pattern_id),) if demands[i] else ()
        nodes.append(junction(name, elevations[i], cats))
        edges.append(Pipe(f"P{i + 1}", previous, name, pipes[i]))
        previous = name
    return Network(nodes=tuple(nodes), pipes=tuple(edges), demand_model=dm)


def star_network(head: float, feed_length: float,
                 leaves: list[tuple[float, float]],
                 pattern: tuple[float, ...] | None = DIURNAL) -> Network:
    """Reservoir R - C, then C - L1..Lk. ``leaves[i]`` is (length, demand)."""
    patterns = {"base": pattern} if pattern else {}
    dm = DemandModel(patterns=patterns, period_count=24)
    pattern_id = "base" if pattern else None
    nodes = [reservoir("R", head), junction("C", 0.0)]
    edges = [Pipe("P0", "R", "C", feed_length)]
    for i, (length, demand) in enumerate(leaves, start=1):
        cats = (DemandCategory(demand, pattern_id),) if demand else ()
        nodes.append(junction(f"L{i}", 0.0, cats))
        edges.append(Pipe(f"P{i}", "C", f"L{i}", length))
    return Network(nodes=tuple(nodes), pipes=tuple(edges), demand_model=dm)


def looped_network(head: float = 60.0, pattern: tuple[float, ...] = DIURNAL,
                   scale: float = 1.0) -> Network:
    """One loop R-A-B-R plus a spur B-C; 4 pipes, cycle dimension 1."""
    dm = DemandModel(patterns={"base": pattern}, period_count=24)
    cat = lambda q: (DemandCategory(q * scale, "base"),)
    nodes = (
        reservoir("R", head),
        junction("A", 0.0, cat(0.004)),
        junction("B", 0.0, cat(0.005)),
        junction("C", 0.0, cat(0.003)),
    )
    edges = (
        Pipe("P1", "R", "A", 400.0),
        Pipe("P2", "A", "B", 300.0),
        Pipe("P3", "B", "R", 500.0),
        Pipe("P4", "B", "C", 250.0),
    )
    return Network(nodes=nodes, pipes=edges, demand_model=dm)


def theta_network(head: float = 60.0, pattern: tuple[float, ...] = DIURNAL,
                  scale: float = 1.0) -> Network:
    """Two independent loops over nodes R, A, B, C; 5 pipes."""
    dm = DemandModel(patterns={"base": pattern}, period_count=24)
    cat = lambda q: (DemandCategory(q * scale, "base"),)
    nodes = (
        reservoir("R", head),
        junction("A", 0.0, cat(0.004)),
        junction("B", 0.0, cat(0.006)),
        junction("C", 0.0, cat(0.003)),
    )
    edges = (
        Pipe("P1", "R", "A", 350.0),
        Pipe("P2", "A", "B", 300.0),
        Pipe("P3", "R", "C", 400.0),
        Pipe("P4", "C", "B", 300.0),
        Pipe("P5", "A", "C", 250.0),
    )
    return Network(nodes=nodes, pipes=edges, demand_model=dm)
