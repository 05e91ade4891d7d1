"""Instance, catalog, solution and result file handling.

Instances use an EPANET-style INP subset: ``[SECTION]`` headers,
whitespace-delimited records, ``;`` comments. The pipe rows' diameter and
roughness columns are parsed but ignored, because the type assignment is
the decision variable and roughness comes from the catalog.

Results are newline-delimited JSON records with a stable field order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .model import (
    DemandCategory,
    DemandModel,
    InstanceError,
    Network,
    Node,
    Pipe,
    PipeType,
    PipeTypeCatalog,
    Solution,
    junction,
    reservoir,
)

RECOGNIZED_SECTIONS = {
    "TITLE", "JUNCTIONS", "RESERVOIRS", "PIPES", "PATTERNS", "DEMANDS",
    "TIMES", "OPTIONS", "COORDINATES", "END",
}

# Present-but-nonempty sections for elements we cannot model correctly.
UNSUPPORTED_SECTIONS = {"PUMPS", "VALVES", "TANKS"}

UNIT_FACTORS = {"LPS": 1e-3, "CMS": 1.0}

DEFAULT_PERIOD_COUNT = 24


class InpParseError(ValueError):
    """A located syntax or consistency error in an input file."""

    def __init__(self, message: str, line_no: int | None = None) -> None:
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


def _clean_lines(text: str):
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if line:
            yield line_no, line


def _float_field(token: str, what: str, line_no: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise InpParseError(f"cannot read {what} from {token!r}", line_no) from None


def parse_instance(text: str) -> Network:
    """Build a Network (demand model included) from INP text.

    Junction and extra-demand base loads are converted to m^3/s using the
    OPTIONS Units setting (LPS assumed when absent). The horizon length is
    the longest pattern, or 24 when no patterns are given.
    """
    junction_rows: dict[str, tuple[int, float, float | None, str | None]] = {}
    reservoir_rows: dict[str, tuple[int, float]] = {}
    pipe_rows: dict[str, tuple[int, str, str, float]] = {}
    patterns: dict[str, list[float]] = {}
    extra_demands: list[tuple[int, str, float, str | None]] = []
    unit_factor: float | None = None

    section = None
    for line_no, line in _clean_lines(text):
        if line.startswith("["):
            name = line.strip("[] \t").upper()
            if name in UNSUPPORTED_SECTIONS:
                section = ("unsupported", name)
            elif name == "END":
                break
            else:
                # unrecognized sections (coordinates, tags, report, ...) are skipped
                section = name if name in RECOGNIZED_SECTIONS else None
            continue

        if isinstance(section, tuple):
            raise InpParseError(
                f"section [{section[1]}] is not supported in gravity-fed networks",
                line_no,
            )
        if section is None or section in ("TITLE", "TIMES", "COORDINATES"):
            continue

        fields = line.split()
        if section == "JUNCTIONS":
            if len(fields) < 2:
                raise InpParseError("junction rows need at least id and elevation", line_no)
            node_id = fields[0]
            if node_id in junction_rows or node_id in reservoir_rows:
                raise InpParseError(f"duplicate node id {node_id!r}", line_no)
            elevation = _float_field(fields[1], "elevation", line_no)
            base = _float_field(fields[2], "base demand", line_no) if len(fields) > 2 else None
            if base is not None and base < 0:
                raise InpParseError("demand base loads must be nonnegative", line_no)
            pattern = fields[3] if len(fields) > 3 else None
            junction_rows[node_id] = (line_no, elevation, base, pattern)
        elif section == "RESERVOIRS":
            if len(fields) < 2:
                raise InpParseError("reservoir rows need id and head", line_no)
            node_id = fields[0]
            if node_id in junction_rows or node_id in reservoir_rows:
                raise InpParseError(f"duplicate node id {node_id!r}", line_no)
            head = _float_field(fields[1], "head", line_no)
            reservoir_rows[node_id] = (line_no, head)
        elif section == "PIPES":
            if len(fields) < 4:
                raise InpParseError(
                    "pipe rows need id, two nodes and a length", line_no
                )
            pipe_id = fields[0]
            if pipe_id in pipe_rows:
                raise InpParseError(f"duplicate pipe id {pipe_id!r}", line_no)
            length = _float_field(fields[3], "length", line_no)
            if length <= 0:
                raise InpParseError(f"pipe {pipe_id} has nonpositive length {length}", line_no)
            pipe_rows[pipe_id] = (line_no, fields[1], fields[2], length)
        elif section == "PATTERNS":
            if len(fields) < 2:
                raise InpParseError("pattern rows need an id and at least one value", line_no)
            values = [_float_field(tok, "pattern multiplier", line_no) for tok in fields[1:]]
            if any(v < 0 for v in values):
                raise InpParseError(
                    f"pattern {fields[0]} has a negative multiplier", line_no
                )
            patterns.setdefault(fields[0], []).extend(values)
        elif section == "DEMANDS":
            if len(fields) < 2:
                raise InpParseError("demand rows need a junction and a base load", line_no)
            base = _float_field(fields[1], "base demand", line_no)
            if base < 0:
                raise InpParseError("demand base loads must be nonnegative", line_no)
            pattern = fields[2] if len(fields) > 2 else None
            extra_demands.append((line_no, fields[0], base, pattern))
        elif section == "OPTIONS":
            if len(fields) >= 2 and fields[0].upper() == "UNITS":
                keyword = fields[1].upper()
                if keyword not in UNIT_FACTORS:
                    raise InpParseError(
                        f"unknown units keyword {keyword!r} (expected LPS or CMS)", line_no
                    )
                unit_factor = UNIT_FACTORS[keyword]

    factor = unit_factor if unit_factor is not None else UNIT_FACTORS["LPS"]
    period_count = max((len(v) for v in patterns.values()), default=DEFAULT_PERIOD_COUNT)
    try:
        demand_model = DemandModel(
            patterns={pid: tuple(vals) for pid, vals in patterns.items()},
            period_count=period_count,
        )
    except InstanceError as exc:
        raise InpParseError(str(exc)) from None

    known_patterns = set(patterns)
    categories: dict[str, list[DemandCategory]] = {nid: [] for nid in junction_rows}
    for node_id, (line_no, _elev, base, pattern) in junction_rows.items():
        if pattern is not None and pattern not in known_patterns:
            raise InpParseError(f"junction {node_id} references unknown pattern {pattern!r}",
                                line_no)
        if base is not None:
            categories[node_id].append(DemandCategory(base * factor, pattern))
    for line_no, node_id, base, pattern in extra_demands:
        if node_id not in junction_rows:
            raise InpParseError(f"demand row references unknown junction {node_id!r}", line_no)
        if pattern is not None and pattern not in known_patterns:
            raise InpParseError(f"demand row references unknown pattern {pattern!r}", line_no)
        categories[node_id].append(DemandCategory(base * factor, pattern))

    nodes: list[Node] = []
    for node_id, (line_no, elevation, _base, _pattern) in junction_rows.items():
        try:
            nodes.append(junction(node_id, elevation, tuple(categories[node_id])))
        except InstanceError as exc:
            raise InpParseError(str(exc), line_no) from None
    for node_id, (line_no, head) in reservoir_rows.items():
        nodes.append(reservoir(node_id, head))

    pipes: list[Pipe] = []
    node_ids = junction_rows.keys() | reservoir_rows.keys()
    for pipe_id, (line_no, n1, n2, length) in pipe_rows.items():
        for end in (n1, n2):
            if end not in node_ids:
                raise InpParseError(
                    f"pipe {pipe_id} references unknown node {end!r}", line_no
                )
        try:
            pipes.append(Pipe(pipe_id, n1, n2, length))
        except InstanceError as exc:
            raise InpParseError(str(exc), line_no) from None

    try:
        return Network(nodes=tuple(nodes), pipes=tuple(pipes), demand_model=demand_model)
    except InstanceError as exc:
        raise InpParseError(str(exc)) from None


def parse_type_catalog(text: str) -> PipeTypeCatalog:
    """Read a catalog from CSV rows ``index,diameter_mm,roughness,unit_cost``.

    A header row is optional; sortedness is enforced by the catalog itself.
    """
    types: list[PipeType] = []
    for line_no, line in _clean_lines(text):
        if line.startswith("#"):
            continue
        fields = [f.strip() for f in line.replace("\t", ",").split(",") if f.strip()]
        if len(fields) == 1:
            fields = line.split()
        if not types and any(not _looks_numeric(f) for f in fields):
            continue  # header row
        if len(fields) != 4:
            raise InpParseError(
                f"catalog rows need 4 fields (index, diameter_mm, roughness, unit_cost); "
                f"got {len(fields)}", line_no
            )
        try:
            entry = PipeType(
                index=int(float(fields[0])),
                diameter_mm=float(fields[1]),
                roughness=float(fields[2]),
                unit_cost=float(fields[3]),
            )
        except (ValueError, InstanceError) as exc:
            raise InpParseError(f"bad catalog row: {exc}", line_no) from None
        types.append(entry)
    try:
        return PipeTypeCatalog(tuple(types))
    except InstanceError as exc:
        raise InpParseError(str(exc)) from None


def _looks_numeric(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


RUN_RECORD_FIELDS = (
    "instance_id", "seed", "time_limit_s", "variant", "best_cost",
    "time_to_best_s", "iterations", "simulator_calls", "tested_solutions",
    "feasible_fraction",
)


@dataclass(frozen=True)
class RunRecord:
    """One optimizer run, flattened for appending to a results file."""

    instance_id: str
    seed: int
    time_limit_s: float
    variant: str
    best_cost: float
    time_to_best_s: float
    iterations: int
    simulator_calls: int
    tested_solutions: int
    feasible_fraction: float
    error: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.feasible_fraction <= 1.0:
            raise InstanceError("feasible_fraction must lie in [0, 1]")
        for name in ("iterations", "simulator_calls", "tested_solutions"):
            if getattr(self, name) < 0:
                raise InstanceError(f"{name} must be nonnegative")


def write_run_record(rec: RunRecord, sink) -> None:
    """Append one compact JSON line with fields in a fixed, diff-friendly order."""
    payload = {name: getattr(rec, name) for name in RUN_RECORD_FIELDS}
    if rec.error is not None:
        payload["error"] = rec.error
    sink.write(json.dumps(payload, separators=(",", ":")) + "\n")


def read_run_records(text: str) -> list[RunRecord]:
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InpParseError(f"bad record JSON: {exc}", line_no) from None
        try:
            records.append(RunRecord(**payload))
        except TypeError as exc:
            raise InpParseError(f"bad record fields: {exc}", line_no) from None
    return records


def write_solution(solution: Solution, sink) -> None:
    """Write ``pipe_id,type_index`` lines, sorted by pipe id."""
    sink.write("pipe_id,type_index\n")
    for pipe_id in sorted(solution.assignment):
        sink.write(f"{pipe_id},{solution.assignment[pipe_id]}\n")


def parse_solution(text: str) -> Solution:
    assignment: dict[str, int] = {}
    for line_no, line in _clean_lines(text):
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 2:
            raise InpParseError("solution rows are pipe_id,type_index", line_no)
        if fields[1].lower() == "type_index":
            continue  # header
        try:
            assignment[fields[0]] = int(fields[1])
        except ValueError:
            raise InpParseError(f"bad type index {fields[1]!r}", line_no) from None
    return Solution(assignment)
