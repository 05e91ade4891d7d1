"""Steady-state hydraulic solver and feasibility validation.

Each period is an independent steady state. Unknowns are the junction
heads; reservoir heads are fixed. The solver runs a Newton scheme on the
nodal equations: head losses follow the Hazen-Williams relation, the
linearized junction system is a symmetric positive definite weighted
Laplacian, and flows are corrected from the freshly solved heads

    q  <-  q - (headloss(q) - (h_a - h_b)) / gradient(q)

which drives the network toward simultaneous mass balance (exact once
the linear system is solved) and per-pipe energy consistency.

The Hazen-Williams constants are fixed program constants, not knobs:
small changes in them change results, so runs stay comparable only if
everybody uses the same values.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ContractViolation,
    InstanceError,
    Network,
    PipeTypeCatalog,
    PipeType,
    Solution,
    demand_at,
)

HW_COEFF = 10.6744
HW_FLOW_EXP = 1.852
HW_DIAM_EXP = 4.871
VELOCITY_COEFF = 1.27

DEFAULT_GRADIENT_FLOOR = 1e-7

# Junction counts up to this size use a dense solve; larger systems go sparse.
_DENSE_LIMIT = 400


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls for the per-period solve.

    ``flow_tolerance`` is the relative total flow change that ends the
    iteration; ``flow_floor`` (m^3/s) keeps that test meaningful when the
    network carries essentially no water at all. ``head_tolerance``
    additionally requires every pipe's Hazen-Williams loss to match its
    endpoint head difference, so the reported state satisfies both
    conservation laws to tight accuracy.
    """

    flow_tolerance: float = 1e-3
    max_iterations: int = 200
    init_velocity: float = 0.3048
    gradient_floor: float = DEFAULT_GRADIENT_FLOOR
    head_tolerance: float = 1e-8
    flow_floor: float = 1e-12

    def __post_init__(self) -> None:
        for name in ("flow_tolerance", "max_iterations", "init_velocity",
                     "gradient_floor", "head_tolerance", "flow_floor"):
            if getattr(self, name) <= 0:
                raise InstanceError(f"solver config field {name} must be positive")


@dataclass(frozen=True)
class PeriodState:
    """Solved heads, signed flows and velocities for one period.

    Flows are signed relative to each pipe's reference orientation
    (node1 -> node2 as listed in the instance).
    """

    head: dict[str, float]
    flow: dict[str, float]
    velocity: dict[str, float]
    converged: bool
    iterations_used: int


@dataclass(frozen=True)
class HydraulicState:
    per_period: tuple[PeriodState, ...]


@dataclass(frozen=True)
class Violation:
    period: int
    element: str
    kind: str  # "pressure" | "velocity" | "non-convergence"


@dataclass(frozen=True)
class Verdict:
    feasible: bool
    violation: Violation | None
    periods_simulated: int

    def __bool__(self) -> bool:
        return self.feasible


class SimulationCounter:
    """Counts per-period solver invocations; safe to share across threads."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._value = 0

    def add(self, n: int = 1) -> None:
        with self._lock:
            self._value += n

    @property
    def value(self) -> int:
        return self._value


def headloss(q: float, length_m: float, t: PipeType) -> float:
    """Hazen-Williams head loss (m) for signed flow q (m^3/s); odd in q."""
    if q == 0.0:
        return 0.0
    d = t.diameter_m
    k = HW_COEFF * length_m / (t.roughness ** HW_FLOW_EXP * d ** HW_DIAM_EXP)
    return math.copysign(k * abs(q) ** HW_FLOW_EXP, q)


def headloss_gradient(q: float, length_m: float, t: PipeType,
                      floor: float = DEFAULT_GRADIENT_FLOOR) -> float:
    """d(headloss)/dq, even in q and floored away from zero."""
    d = t.diameter_m
    k = HW_COEFF * length_m / (t.roughness ** HW_FLOW_EXP * d ** HW_DIAM_EXP)
    return max(HW_FLOW_EXP * k * abs(q) ** (HW_FLOW_EXP - 1.0), floor)


def velocity(q: float, t: PipeType) -> float:
    """Flow speed (m/s) through a pipe of the given type."""
    return VELOCITY_COEFF * abs(q) / (t.diameter_m ** 2)


class HydraulicSolver:
    """Per-network solver with topology and demands precomputed once.

    Construction cost is paid a single time; solving a period for a new
    design only rebuilds the per-pipe loss coefficients.
    """

    def __init__(self, net: Network, catalog: PipeTypeCatalog,
                 cfg: SolverConfig | None = None) -> None:
        self.net = net
        self.catalog = catalog
        self.cfg = cfg or SolverConfig()

        junctions = net.junctions()
        self._junction_ids = [n.id for n in junctions]
        jix = {nid: i for i, nid in enumerate(self._junction_ids)}
        self._elev = np.array([n.elevation for n in junctions], dtype=float)
        res_head = {n.id: float(n.fixed_head) for n in net.reservoirs()}
        self._res_head = res_head

        pipes = net.sorted_pipes
        self._pipe_ids = [p.id for p in pipes]
        self._length = np.array([p.length_m for p in pipes], dtype=float)
        np_count = len(pipes)

        a_j = np.array([jix.get(p.node1, -1) for p in pipes], dtype=int)
        b_j = np.array([jix.get(p.node2, -1) for p in pipes], dtype=int)
        a_fix = np.array([res_head.get(p.node1, 0.0) for p in pipes], dtype=float)
        b_fix = np.array([res_head.get(p.node2, 0.0) for p in pipes], dtype=float)
        self._a_j, self._b_j = a_j, b_j
        self._a_fix, self._b_fix = a_fix, b_fix
        self._a_is_j = a_j >= 0
        self._b_is_j = b_j >= 0

        # Laplacian sparsity pattern: one (row, col, sign, pipe) tuple per entry.
        rows, cols, signs, ent_pipe = [], [], [], []
        for k in range(np_count):
            ja, jb = a_j[k], b_j[k]
            if ja >= 0:
                rows.append(ja); cols.append(ja); signs.append(1.0); ent_pipe.append(k)
            if jb >= 0:
                rows.append(jb); cols.append(jb); signs.append(1.0); ent_pipe.append(k)
            if ja >= 0 and jb >= 0:
                rows.append(ja); cols.append(jb); signs.append(-1.0); ent_pipe.append(k)
                rows.append(jb); cols.append(ja); signs.append(-1.0); ent_pipe.append(k)
        self._lap_rows = np.array(rows, dtype=int)
        self._lap_cols = np.array(cols, dtype=int)
        self._lap_signs = np.array(signs, dtype=float)
        self._lap_pipe = np.array(ent_pipe, dtype=int)

        # Fixed-head contributions: pipes with exactly one reservoir end push
        # conductance * head onto their junction end's right-hand side.
        res_j, res_p, res_h = [], [], []
        for k in range(np_count):
            if a_j[k] < 0 and b_j[k] >= 0:
                res_j.append(b_j[k]); res_p.append(k); res_h.append(a_fix[k])
            elif b_j[k] < 0 and a_j[k] >= 0:
                res_j.append(a_j[k]); res_p.append(k); res_h.append(b_fix[k])
        self._res_j = np.array(res_j, dtype=int)
        self._res_p = np.array(res_p, dtype=int)
        self._res_h = np.array(res_h, dtype=float)

        dm = net.demand_model
        self._period_count = dm.period_count
        self._demand = np.array(
            [[demand_at(n, tau, dm) for tau in range(1, dm.period_count + 1)]
             for n in junctions],
            dtype=float,
        ).reshape(len(junctions), dm.period_count)

        self._type_diam_m = np.array([t.diameter_m for t in catalog.types], dtype=float)
        self._type_rough = np.array([t.roughness for t in catalog.types], dtype=float)

        nj = len(junctions)
        self._dense = nj <= _DENSE_LIMIT
        if self._dense:
            self._A = np.zeros((nj, nj), dtype=float)

    @property
    def period_count(self) -> int:
        return self._period_count

    def loss_coefficients(self, solution: Solution) -> tuple[np.ndarray, np.ndarray]:
        """Per-pipe (Hazen-Williams coefficient, diameter m) for a design."""
        t_idx = np.array([solution.type_of(pid) for pid in self._pipe_ids], dtype=int)
        if t_idx.size and (t_idx.min() < 1 or t_idx.max() > len(self.catalog)):
            raise ContractViolation("solution carries a type index outside the catalog")
        d = self._type_diam_m[t_idx - 1]
        r = self._type_rough[t_idx - 1]
        k = HW_COEFF * self._length / (r ** HW_FLOW_EXP * d ** HW_DIAM_EXP)
        return k, d

    def _solve_arrays(self, k_coef: np.ndarray, diam_m: np.ndarray, tau: int):
        """Newton iteration for one period; returns (heads, flows, converged, iters)."""
        cfg = self.cfg
        nj = len(self._junction_ids)
        demand = self._demand[:, tau - 1]
        q = cfg.init_velocity * (math.pi / 4.0) * diam_m * diam_m
        h = np.zeros(nj, dtype=float)
        converged = False
        iterations = 0

        for iterations in range(1, cfg.max_iterations + 1):
            absq = np.abs(q)
            dh_loss = k_coef * absq ** HW_FLOW_EXP * np.sign(q)
            grad = np.maximum(HW_FLOW_EXP * k_coef * absq ** (HW_FLOW_EXP - 1.0),
                              cfg.gradient_floor)
            cond = 1.0 / grad
            w = q - dh_loss * cond

            rhs = -demand.copy()
            np.add.at(rhs, self._a_j[self._a_is_j], -w[self._a_is_j])
            np.add.at(rhs, self._b_j[self._b_is_j], w[self._b_is_j])
            if self._res_j.size:
                np.add.at(rhs, self._res_j, cond[self._res_p] * self._res_h)

            vals = self._lap_signs * cond[self._lap_pipe]
            try:
                if nj == 0:
                    h_new = h
                elif self._dense:
                    A = self._A
                    A.fill(0.0)
                    np.add.at(A, (self._lap_rows, self._lap_cols), vals)
                    h_new = np.linalg.solve(A, rhs)
                else:
                    from scipy.sparse import coo_matrix
                    from scipy.sparse.linalg import spsolve

                    A = coo_matrix((vals, (self._lap_rows, self._lap_cols)),
                                   shape=(nj, nj)).tocsr()
                    h_new = spsolve(A, rhs)
            except np.linalg.LinAlgError:
                raise InstanceError(
                    "junction system is singular; some junction is cut off "
                    "from every reservoir"
                ) from None

            if not np.all(np.isfinite(h_new)):
                break
            h = h_new

            head_a = self._a_fix.copy()
            head_a[self._a_is_j] = h[self._a_j[self._a_is_j]]
            head_b = self._b_fix.copy()
            head_b[self._b_is_j] = h[self._b_j[self._b_is_j]]
            dh = head_a - head_b
            q_new = q - (dh_loss - dh) * cond

            if not np.all(np.isfinite(q_new)):
                break
            flow_change = float(np.sum(np.abs(q_new - q)))
            flow_total = float(np.sum(np.abs(q_new)))
            q = q_new

            if flow_change < cfg.flow_tolerance * flow_total + cfg.flow_floor:
                energy_gap = float(np.max(np.abs(
                    k_coef * np.abs(q) ** HW_FLOW_EXP * np.sign(q) - dh
                ))) if len(q) else 0.0
                if energy_gap <= cfg.head_tolerance:
                    converged = True
                    break

        return h, q, converged, iterations

    def simulate_period(self, solution: Solution, tau: int) -> PeriodState:
        if not 1 <= tau <= self._period_count:
            raise ContractViolation(
                f"period {tau} outside horizon 1..{self._period_count}"
            )
        k_coef, diam_m = self.loss_coefficients(solution)
        h, q, converged, iterations = self._solve_arrays(k_coef, diam_m, tau)

        head = {nid: float(h[i]) for i, nid in enumerate(self._junction_ids)}
        head.update(self._res_head)
        flow = {pid: float(q[i]) for i, pid in enumerate(self._pipe_ids)}
        vel = {
            pid: float(VELOCITY_COEFF * abs(q[i]) / diam_m[i] ** 2)
            for i, pid in enumerate(self._pipe_ids)
        }
        return PeriodState(head=head, flow=flow, velocity=vel,
                           converged=converged, iterations_used=iterations)

    def validate(self, solution: Solution, h_min: float, v_max: float,
                 counter: SimulationCounter | None = None) -> Verdict:
        """Check a design over every period, stopping at the first violation.

        Per period: the solve must converge, every junction must keep at
        least ``h_min`` of pressure head, and no pipe may exceed ``v_max``.
        """
        k_coef, diam_m = self.loss_coefficients(solution)
        for tau in range(1, self._period_count + 1):
            h, q, converged, _ = self._solve_arrays(k_coef, diam_m, tau)
            if counter is not None:
                counter.add(1)
            if not converged:
                return Verdict(False, Violation(tau, "", "non-convergence"), tau)
            pressure = h - self._elev
            bad = np.flatnonzero(pressure < h_min)
            if bad.size:
                return Verdict(
                    False, Violation(tau, self._junction_ids[bad[0]], "pressure"), tau
                )
            vel = VELOCITY_COEFF * np.abs(q) / (diam_m * diam_m)
            bad = np.flatnonzero(vel > v_max)
            if bad.size:
                return Verdict(
                    False, Violation(tau, self._pipe_ids[bad[0]], "velocity"), tau
                )
        return Verdict(True, None, self._period_count)


def simulate_period(net: Network, catalog: PipeTypeCatalog, solution: Solution,
                    tau: int, cfg: SolverConfig | None = None) -> PeriodState:
    return HydraulicSolver(net, catalog, cfg).simulate_period(solution, tau)


def simulate_horizon(net: Network, catalog: PipeTypeCatalog, solution: Solution,
                     cfg: SolverConfig | None = None) -> HydraulicState:
    solver = HydraulicSolver(net, catalog, cfg)
    return HydraulicState(per_period=tuple(
        solver.simulate_period(solution, tau)
        for tau in range(1, solver.period_count + 1)
    ))


def validate(net: Network, catalog: PipeTypeCatalog, solution: Solution,
             cfg: SolverConfig | None = None, h_min: float = 20.0,
             v_max: float = 2.0,
             counter: SimulationCounter | None = None) -> Verdict:
    return HydraulicSolver(net, catalog, cfg).validate(solution, h_min, v_max, counter)


def loop_headloss_residual(net: Network, catalog: PipeTypeCatalog,
                           solution: Solution, state: PeriodState,
                           cycle: list[tuple[str, int]]) -> float:
    """Sum of oriented Hazen-Williams losses around a closed walk (m).

    Diagnostic only: a converged state keeps this near zero. The walk is
    given as (pipe id, direction) pairs, direction +1 for node1 -> node2.
    """
    if not cycle:
        raise ContractViolation("cycle must contain at least one pipe")
    first_pipe = net.pipe(cycle[0][0])
    position = first_pipe.node1 if cycle[0][1] == 1 else first_pipe.node2
    start = position
    total = 0.0
    for pipe_id, direction in cycle:
        pipe = net.pipe(pipe_id)
        tail = pipe.node1 if direction == 1 else pipe.node2
        head_node = pipe.node2 if direction == 1 else pipe.node1
        if tail != position:
            raise ContractViolation(
                f"cycle breaks at pipe {pipe_id}: expected to continue from "
                f"{position}, pipe starts at {tail}"
            )
        t = catalog.get(solution.type_of(pipe_id))
        total += direction * headloss(state.flow[pipe_id], pipe.length_m, t)
        position = head_node
    if position != start:
        raise ContractViolation("walk is open: it does not return to its start node")
    return total
