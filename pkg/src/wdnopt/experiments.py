"""Experiment harness: seeded replication grids and summary statistics.

A plan crosses instances with time limits, seeds and algorithm variants.
Each combination yields one run record; records are emitted in a sorted,
deterministic order regardless of execution order.
"""

from __future__ import annotations

import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .inp import RunRecord, parse_instance, parse_type_catalog
from .model import solution_cost
from .search import SearchParams, run

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class PairingError(ValueError):
    """Variants do not cover the same (instance, time limit) grid."""


@dataclass
class ExperimentPlan:
    instances: list[str]
    catalog: str
    time_limits: list[float]
    seeds: list[int]
    variants: list[str] = field(default_factory=lambda: ["full"])
    h_min: float = 20.0
    v_max: float = 2.0
    alpha: float = 0.05
    f0: int = 4
    nu: int = 3
    max_iterations: int | None = None
    output: str | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        if not self.instances:
            raise ValueError("plan needs at least one instance")
        if not self.time_limits:
            raise ValueError("plan needs at least one time limit")
        if not self.seeds:
            raise ValueError("plan needs at least one seed")
        if not self.variants:
            raise ValueError("plan needs at least one variant")

    @classmethod
    def from_toml(cls, path: str | Path) -> "ExperimentPlan":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        seeds = data.get("seeds", 1)
        if isinstance(seeds, int):
            seeds = list(range(seeds))
        known = {
            "instances", "catalog", "time_limits", "seeds", "variants",
            "h_min", "v_max", "alpha", "f0", "nu", "max_iterations",
            "output", "jobs",
        }
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown plan keys: {sorted(extra)}")
        missing = {"instances", "catalog", "time_limits"} - set(data)
        if missing:
            raise ValueError(f"plan is missing required keys: {sorted(missing)}")
        data["seeds"] = seeds
        return cls(**data)


def _task_list(plan: ExperimentPlan) -> list[tuple[str, float, int, str]]:
    tasks = [
        (instance, float(limit), int(seed), variant)
        for instance in plan.instances
        for limit in plan.time_limits
        for seed in plan.seeds
        for variant in plan.variants
    ]
    tasks.sort()
    return tasks


def _run_one(args) -> RunRecord:
    instance_path, limit, seed, variant, catalog_path, plan_fields = args
    instance_id = Path(instance_path).stem
    try:
        net = parse_instance(Path(instance_path).read_text())
        catalog = parse_type_catalog(Path(catalog_path).read_text())
    except (OSError, ValueError) as exc:
        return RunRecord(
            instance_id=instance_id, seed=seed, time_limit_s=limit, variant=variant,
            best_cost=float("nan"), time_to_best_s=0.0, iterations=0,
            simulator_calls=0, tested_solutions=0, feasible_fraction=0.0,
            error=str(exc),
        )
    params = SearchParams(
        alpha=plan_fields["alpha"], f0=plan_fields["f0"], nu=plan_fields["nu"],
        time_limit_s=limit, seed=seed, variant=variant,
        h_min=plan_fields["h_min"], v_max=plan_fields["v_max"],
        max_iterations=plan_fields["max_iterations"],
    )
    try:
        best, stats = run(net, catalog, params)
    except ValueError as exc:
        return RunRecord(
            instance_id=instance_id, seed=seed, time_limit_s=limit, variant=variant,
            best_cost=float("nan"), time_to_best_s=0.0, iterations=0,
            simulator_calls=0, tested_solutions=0, feasible_fraction=0.0,
            error=str(exc),
        )
    return RunRecord(
        instance_id=instance_id, seed=seed, time_limit_s=limit, variant=variant,
        best_cost=solution_cost(best, net, catalog),
        time_to_best_s=stats.time_to_best_s,
        iterations=stats.iterations,
        simulator_calls=stats.simulator_calls,
        tested_solutions=stats.tested_solutions,
        feasible_fraction=stats.feasible_fraction,
    )


def run_experiment(plan: ExperimentPlan) -> list[RunRecord]:
    """Execute every (instance, limit, seed, variant) combination.

    Unreadable or infeasible instances produce error records; other runs
    continue. Output order is sorted, independent of worker scheduling.
    """
    plan_fields = {
        "alpha": plan.alpha, "f0": plan.f0, "nu": plan.nu,
        "h_min": plan.h_min, "v_max": plan.v_max,
        "max_iterations": plan.max_iterations,
    }
    tasks = [
        (instance, limit, seed, variant, plan.catalog, plan_fields)
        for instance, limit, seed, variant in _task_list(plan)
    ]
    if plan.jobs > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            records = list(pool.map(_run_one, tasks))
    else:
        records = [_run_one(task) for task in tasks]
    records.sort(key=lambda r: (r.instance_id, r.time_limit_s, r.seed, r.variant))
    return records


def gain_percent(z_a: float, z_b: float) -> float:
    """Cost improvement of method A over method B on one instance."""
    return 100.0 * (z_b - z_a) / z_b


def deviation_percent(z_run: float, z_best: float) -> float:
    return 100.0 * (z_run - z_best) / z_best


def summarize(records: list[RunRecord]) -> dict:
    """Aggregate records into per-cell costs, pairwise gains and deviations.

    Cells are (instance, time limit) pairs. Gains between two variants are
    computed per cell on the best and the mean cost, then averaged per time
    limit; they require both variants to cover the same cells. Deviations
    compare each run against the cheapest cost any variant achieved in its
    cell.
    """
    usable = [r for r in records if r.error is None]
    cells: dict[tuple[str, float], dict[str, list[float]]] = {}
    for rec in usable:
        cell = cells.setdefault((rec.instance_id, rec.time_limit_s), {})
        cell.setdefault(rec.variant, []).append(rec.best_cost)

    table: dict[tuple[str, float], dict[str, dict[str, float]]] = {}
    for key, per_variant in cells.items():
        table[key] = {
            variant: {
                "best": min(costs),
                "avg": statistics.fmean(costs),
                "runs": len(costs),
            }
            for variant, costs in per_variant.items()
        }

    variants = sorted({r.variant for r in usable})
    summary: dict = {"cells": table, "variants": variants, "notes": []}

    best_known = {key: min(min(costs) for costs in per_variant.values())
                  for key, per_variant in cells.items()}
    deviations: dict[str, dict[float, float]] = {}
    for variant in variants:
        per_limit: dict[float, list[float]] = {}
        for rec in usable:
            if rec.variant != variant:
                continue
            z_best = best_known[(rec.instance_id, rec.time_limit_s)]
            per_limit.setdefault(rec.time_limit_s, []).append(
                deviation_percent(rec.best_cost, z_best)
            )
        deviations[variant] = {
            limit: statistics.fmean(vals) for limit, vals in sorted(per_limit.items())
        }
    summary["deviations"] = deviations

    if len(variants) < 2:
        summary["gains"] = {}
        summary["notes"].append("gains omitted: records cover a single variant")
        return summary

    gains: dict[tuple[str, str], dict[float, dict[str, float]]] = {}
    for a in variants:
        for b in variants:
            if a == b:
                continue
            keys_a = {key for key, pv in cells.items() if a in pv}
            keys_b = {key for key, pv in cells.items() if b in pv}
            if keys_a != keys_b:
                raise PairingError(
                    f"variants {a!r} and {b!r} cover different (instance, limit) "
                    f"cells; cannot pair them for gains"
                )
            per_limit: dict[float, dict[str, list[float]]] = {}
            for key in keys_a:
                _, limit = key
                bucket = per_limit.setdefault(limit, {"best": [], "avg": []})
                bucket["best"].append(
                    gain_percent(table[key][a]["best"], table[key][b]["best"])
                )
                bucket["avg"].append(
                    gain_percent(table[key][a]["avg"], table[key][b]["avg"])
                )
            gains[(a, b)] = {
                limit: {
                    "best": statistics.fmean(vals["best"]),
                    "avg": statistics.fmean(vals["avg"]),
                }
                for limit, vals in sorted(per_limit.items())
            }
    summary["gains"] = gains
    return summary


def render_summary(summary: dict) -> str:
    """Human-readable rendering of a summary dict."""
    lines: list[str] = []
    lines.append("costs per (instance, time limit):")
    for (instance, limit), per_variant in sorted(summary["cells"].items()):
        for variant, agg in sorted(per_variant.items()):
            lines.append(
                f"  {instance} @ {limit:g}s {variant}: "
                f"best={agg['best']:.6g} avg={agg['avg']:.6g} runs={agg['runs']}"
            )
    if summary["gains"]:
        lines.append("mean gain % (A over B) per time limit:")
        for (a, b), per_limit in sorted(summary["gains"].items()):
            for limit, vals in per_limit.items():
                lines.append(
                    f"  {a} over {b} @ {limit:g}s: "
                    f"best={vals['best']:+.3f}% avg={vals['avg']:+.3f}%"
                )
    lines.append("mean deviation % from best known per time limit:")
    for variant, per_limit in sorted(summary["deviations"].items()):
        for limit, val in per_limit.items():
            lines.append(f"  {variant} @ {limit:g}s: {val:.3f}%")
    for note in summary["notes"]:
        lines.append(f"note: {note}")
    return "\n".join(lines)
