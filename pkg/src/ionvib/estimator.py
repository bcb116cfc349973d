"""Experimental wall-clock accounting for schedule grids.

Each population point at grid time index g costs R repeated runs; every run
pays the fixed overhead (cooling + state preparation + measurement) plus the
operation time of the schedule truncated at that grid point.  Totals therefore
use the same per-step duration accounting as the schedule itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidModelError
from .model import build_toy_model
from .pulses import HardwareParams, PulseSchedule, build_schedule
from .units import US_PER_S


@dataclass(frozen=True)
class ExperimentPlan:
    """Toy-model parameter grid plus measurement counts."""

    lambdas: tuple = (1.0, 5.0, 10.0, 20.0, 30.0)
    mode_counts: tuple = (2,)
    runs_per_point: int = 100
    time_points: int = 40
    tau_fs: float = 400.0
    trotter_steps: int = 600
    hardware: HardwareParams = field(default_factory=HardwareParams)

    def __post_init__(self):
        if not self.lambdas or not self.mode_counts:
            raise InvalidModelError("experiment grid is empty")
        if self.trotter_steps % self.time_points:
            raise InvalidModelError("trotter steps must be a multiple of the time points")


@dataclass(frozen=True)
class CostRow:
    lambda_over_delta: float
    n_modes: int
    runs_per_point: int
    total_s: float
    overhead_s: float
    operation_s: float
    longest_run_operation_ms: float


def schedule_cost(
    schedule: PulseSchedule, runs_per_point: int, time_points: int
) -> tuple:
    """(total_s, overhead_s, operation_s, longest-run operation ms) for one schedule."""
    steps = schedule.steps
    stride = steps // time_points
    overhead_us = schedule.hardware.overhead_per_run_us() * runs_per_point * time_points
    operation_us = 0.0
    for g in range(1, time_points + 1):
        operation_us += runs_per_point * schedule.operation_time_us(g * stride)
    total_us = overhead_us + operation_us
    longest_ms = schedule.operation_time_us(steps) / 1e3
    return total_us / US_PER_S, overhead_us / US_PER_S, operation_us / US_PER_S, longest_ms


def experimental_time(plan: ExperimentPlan) -> list:
    """Cost table over the (lambda, N) grid; schedules are compiled per point."""
    rows = []
    for n in plan.mode_counts:
        for lam in plan.lambdas:
            spec = build_toy_model(n, lam)
            schedule = build_schedule(spec, plan.tau_fs, plan.trotter_steps, plan.hardware)
            total_s, overhead_s, operation_s, longest_ms = schedule_cost(
                schedule, plan.runs_per_point, plan.time_points
            )
            rows.append(
                CostRow(lam, n, plan.runs_per_point, total_s, overhead_s, operation_s, longest_ms)
            )
    return rows


def overhead_baseline_s(plan: ExperimentPlan) -> float:
    """Cooling + preparation + measurement only (the no-evolution floor)."""
    return (
        plan.hardware.overhead_per_run_us()
        * plan.runs_per_point
        * plan.time_points
        / US_PER_S
    )


def rows_to_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("lambda_over_delta,N,R,total_s,overhead_s,operation_s\n")
        for r in rows:
            fh.write(
                f"{r.lambda_over_delta!r},{r.n_modes},{r.runs_per_point},"
                f"{r.total_s!r},{r.overhead_s!r},{r.operation_s!r}\n"
            )


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    residuals: tuple
    max_residual_fraction: float


def scaling_fit(rows, n_modes: int | None = None) -> ScalingFit:
    """Least-squares fit of the operation-time component against sqrt(lambda ratio).

    Needs at least three lambda values at one mode count; the residual is
    reported as a fraction of the fitted quantity's range.
    """
    if n_modes is None:
        counts = {r.n_modes for r in rows}
        if len(counts) != 1:
            raise InvalidModelError("specify n_modes when the table mixes mode counts")
        n_modes = counts.pop()
    pts = [(r.lambda_over_delta, r.operation_s) for r in rows if r.n_modes == n_modes]
    if len(pts) < 3:
        raise InvalidModelError("need at least three lambda values for a scaling fit")
    x = np.sqrt([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.ptp(x) == 0:
        raise InvalidModelError("degenerate grid: all lambda values equal")
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    span = float(np.ptp(y)) or 1.0
    return ScalingFit(
        slope=float(slope),
        intercept=float(intercept),
        residuals=tuple(float(v) for v in res),
        max_residual_fraction=float(np.max(np.abs(res)) / span),
    )
