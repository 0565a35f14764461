"""Two-stage optimization: balanced initial placement, then protection."""
from __future__ import annotations

from typing import Callable

from .model import InitialPlacement, Mode, ModelInstance, build_model
from .network import PathSet
from .reliability import PiecewiseLinear
from .service import Scenario
from .solver import INFEASIBLE, Solution, brute_force_solve, solve

SolveFn = Callable[[ModelInstance], Solution]


class StageOneInfeasible(RuntimeError):
    def __init__(self, message: str, violated: list[str]):
        super().__init__(message)
        self.violated = violated


def default_solve_fn(time_limit: float = 600.0, gap: float = 1e-6, backend=None) -> SolveFn:
    return lambda model: solve(model, backend=backend, time_limit=time_limit, gap=gap)


def oracle_solve_fn(scenario: Scenario, paths: PathSet, penalties=None) -> SolveFn:
    """Solve function backed by :func:`brute_force_solve` (small instances only)."""

    def run(model: ModelInstance) -> Solution:
        sol = brute_force_solve(
            scenario,
            paths,
            model.mode,
            model.meta.get("initial"),
            penalties,
            alpha=model.meta.get("alpha"),
        )
        return sol

    return run


def _capacity_diagnosis(scenario, paths, penalties, alpha) -> list[str]:
    """Capacity rows broken by the best placement that ignores capacities."""
    from .evaluator import verify_solution

    model = build_model(scenario, paths, Mode.INITIAL, penalties=penalties, alpha=alpha)
    relaxed = build_model(scenario, paths, Mode.INITIAL, penalties=penalties, alpha=alpha)
    relaxed.rows = [r for r in relaxed.rows if r.family not in ("server_capacity", "link_capacity")]
    sol = solve(relaxed, time_limit=60.0)
    if not sol.has_values:
        return []
    return [v.label for v in verify_solution(sol, model) if v.family in ("server_capacity", "link_capacity")]


def two_stage_optimize(
    scenario: Scenario,
    paths: PathSet,
    solve_fn: SolveFn | None = None,
    mode: Mode | str = Mode.REPLICATION_ONLY,
    penalties: tuple[PiecewiseLinear, PiecewiseLinear] | None = None,
    stage1_alpha: float = 0.0,
) -> tuple[InitialPlacement, Solution]:
    """Place every chain once for pure load balancing, then re-optimize.

    Stage 1 allows a single path and no replicas; its placements become the
    fixed reference for stage 2 (``mode``). With ``mode="initial"`` the
    stage-1 solution is returned as is.
    """
    mode = Mode(mode)
    solve_fn = solve_fn or default_solve_fn()
    first = build_model(scenario, paths, Mode.INITIAL, penalties=penalties, alpha=stage1_alpha)
    sol1 = solve_fn(first)
    if sol1.status == INFEASIBLE or not sol1.has_values:
        violated = _capacity_diagnosis(scenario, paths, penalties, stage1_alpha) if sol1.status == INFEASIBLE else []
        raise StageOneInfeasible(
            f"initial placement {sol1.status.lower()}" + (f"; violated: {', '.join(violated)}" if violated else ""),
            violated,
        )
    initial = InitialPlacement.from_placements(sol1.placements)
    if mode is Mode.INITIAL:
        return initial, sol1
    second = build_model(scenario, paths, mode, initial, penalties)
    second.meta["initial"] = initial
    return initial, solve_fn(second)
