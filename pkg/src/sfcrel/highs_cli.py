"""File-exchange adapter for :class:`sfcrel.solver.CommandBackend` built on highspy.

Usage: ``python -m sfcrel.highs_cli MODEL.lp SOLUTION.json``. Needs the
optional ``highspy`` package.
"""
from __future__ import annotations

import json
import os
import sys


def solve_lp_file(lp_path: str, time_limit: float | None = None, gap: float | None = None) -> dict:
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))
    if gap is not None:
        h.setOptionValue("mip_rel_gap", float(gap))
    if h.readModel(lp_path) != highspy.HighsStatus.kOk:
        raise RuntimeError(f"highs could not read {lp_path}")
    h.run()
    status = h.getModelStatus()
    MS = highspy.HighsModelStatus
    lp = h.getLp()
    values = list(h.getSolution().col_value)
    has_values = len(values) == lp.num_col_ and h.getInfo().primal_solution_status == 2
    if status == MS.kOptimal:
        name = "Optimal"
    elif status == MS.kInfeasible:
        name = "Infeasible"
    elif status == MS.kTimeLimit:
        name = "TimedOut" if not has_values else "Feasible"
    else:
        name = "Feasible" if has_values else "Infeasible"
    doc = {"status": name, "objective": None, "vars": {}}
    if has_values and name != "Infeasible":
        doc["objective"] = h.getInfo().objective_function_value
        doc["vars"] = {n: v for n, v in zip(lp.col_names_, values)}
    return doc


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: python -m sfcrel.highs_cli MODEL.lp SOLUTION.json", file=sys.stderr)
        return 2
    limit = os.environ.get("SFCREL_TIME_LIMIT")
    gap = os.environ.get("SFCREL_MIP_GAP")
    doc = solve_lp_file(argv[0], float(limit) if limit else None, float(gap) if gap else None)
    with open(argv[1], "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    return 0


if __name__ == "__main__":
    sys.exit(main())
