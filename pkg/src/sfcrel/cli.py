"""Command line driver: scenario generation, solving, sweeps and reports.

Exit codes: 0 success, 2 configuration error, 3 infeasible instance,
4 at least one solve hit its time budget.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path as FsPath

from .evaluator import (
    DivisorRule,
    compute_utilization,
    count_operations,
    evaluate_reliability,
    simulate_server_failure,
)
from .model import InitialPlacement, Mode, ModelError, build_model, export_lp
from .network import NetworkTopology, TopologyError, bundled_topology, compute_path_set, load_topology
from .pipeline import StageOneInfeasible, default_solve_fn
from .reliability import DECREASING, INCREASING, build_penalty
from .service import CostParams, GeneratorConfig, Scenario, generate_scenario, load_scenario
from .solver import INFEASIBLE, TIMED_OUT, BackendUnavailable, Solution, get_backend

log = logging.getLogger("sfcrel")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_TIMEOUT = 0, 2, 3, 4

MODE_NAMES = {"no-protection": Mode.INITIAL, "rep": Mode.REPLICATION_ONLY, "rep-migr": Mode.REPLICATION_MIGRATION}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    topology: str = "janos-us"
    scenario: str | None = None
    generator: dict = field(default_factory=dict)
    beta: float = 0.1
    e_migration: float = 1.0
    e_replication: float = 0.1
    f_max: int = 5
    modes: list = field(default_factory=lambda: ["no-protection", "rep", "rep-migr"])
    alphas: list = field(default_factory=lambda: [1.0, 0.9, 0.5, 0.1])
    ntn: bool = False
    k_paths: int | None = None
    stage1_alpha: float = 0.0
    backend: str = "highs"
    time_limit: float = 600.0
    gap: float = 1e-6
    output: str = "results"
    seed: int = 0
    workers: int = 1
    failure_rule: str = "survivor"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for a in self.alphas:
            if not 0.0 <= float(a) <= 1.0:
                raise ConfigError(f"alpha {a} outside [0, 1]")
        for m in self.modes:
            if m not in MODE_NAMES:
                raise ConfigError(f"unknown mode {m!r}; choose from {', '.join(MODE_NAMES)}")
        if self.f_max < 0:
            raise ConfigError("f_max must be >= 0")
        if self.ntn and self.f_max == 0:
            raise ConfigError("N-to-N reservation needs f_max >= 1")
        if self.k_paths is not None and self.k_paths < 1:
            raise ConfigError("k_paths must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.failure_rule not in ("survivor", "fmax"):
            raise ConfigError("failure_rule must be 'survivor' or 'fmax'")

    @property
    def paths_per_chain(self) -> int:
        return self.k_paths if self.k_paths is not None else self.f_max + 1

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def resolve_topology(ref: str) -> NetworkTopology:
    p = FsPath(ref)
    if p.suffix == ".json" or p.exists():
        return load_topology(p)
    return bundled_topology(ref)


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    if cfg.scenario:
        sc = load_scenario(cfg.scenario)
        return sc.with_params(
            beta=cfg.beta, e_migration=cfg.e_migration, e_replication=cfg.e_replication, f_max=cfg.f_max, ntn_enabled=cfg.ntn
        )
    topo = resolve_topology(cfg.topology)
    params = CostParams(
        alpha=float(cfg.alphas[0]) if cfg.alphas else 0.5,
        beta=cfg.beta,
        e_migration=cfg.e_migration,
        e_replication=cfg.e_replication,
        f_max=cfg.f_max,
        ntn_enabled=cfg.ntn,
    )
    return generate_scenario(topo, params, GeneratorConfig.from_dict(cfg.generator), cfg.seed)


# -- reports -------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".12g")
    return "" if v is None else str(v)


def cell_rows(scenario: Scenario, paths, alpha: float, mode: str, sol: Solution, initial: InitialPlacement,
              baseline: Solution, rule: DivisorRule) -> dict[str, list[list]]:
    """Report rows of one (alpha, mode) cell, keyed by CSV file stem."""
    topo = scenario.topology
    rows: dict[str, list[list]] = {k: [] for k in ("reliability", "servers", "links", "counts", "failure")}
    if not sol.has_values:
        return rows
    base_rel = evaluate_reliability(baseline, scenario).per_chain
    rel = evaluate_reliability(sol, scenario)
    for s, chain in enumerate(scenario.chains):
        rows["reliability"].append([alpha, mode, chain.id, base_rel[s], rel.per_chain[s], rel.k_chain.get(s)])
    util = compute_utilization(sol, scenario, paths)
    for x, u in util.servers.items():
        rows["servers"].append([alpha, mode, topo.servers[x].id, u.load, u.overhead, u.reservation, u.total])
    for li, u in util.links.items():
        rows["links"].append([alpha, mode, topo.links[li].id, u])
    counts = count_operations(sol, initial)
    rows["counts"].append([alpha, mode, counts.replicas, counts.migrations])
    for x in range(len(topo.servers)):
        rep = simulate_server_failure(sol, scenario, x, rule)
        rows["failure"].append([alpha, mode, topo.servers[x].id, rep.chains_failed, rep.max_post_utilization, rep.reservation_ok])
    return rows


HEADERS = {
    "reliability": ["alpha", "mode", "chain_id", "r_no_protection", "r_solution", "k_chain"],
    "servers": ["alpha", "mode", "server_id", "load", "overhead", "reservation", "total"],
    "links": ["alpha", "mode", "link_id", "utilization"],
    "counts": ["alpha", "mode", "replicas", "migrations"],
    "failure": ["alpha", "mode", "server_id", "chains_failed", "max_post_utilization", "reservation_ok"],
}


def write_reports(out_dir: FsPath, rows: dict[str, list[list]]) -> list[FsPath]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, header in HEADERS.items():
        key = (lambda r: (float(r[0]), r[1])) if stem == "counts" else (lambda r: (float(r[0]), r[1], str(r[2])))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in sorted(rows.get(stem, []), key=key):
            w.writerow([_fmt(v) for v in r])
        path = out_dir / f"{stem}.csv"
        path.write_text(buf.getvalue(), encoding="utf-8")
        written.append(path)
    return written


# -- experiment ------------------------------------------------------------

def _solve_cell(args):
    scenario, paths, mode, alpha, initial, cfg = args
    backend = get_backend(cfg.backend)
    fn = default_solve_fn(cfg.time_limit, cfg.gap, backend)
    sc = scenario.with_params(alpha=float(alpha), ntn_enabled=cfg.ntn)
    model = build_model(sc, paths, MODE_NAMES[mode], initial)
    return fn(model)


def run_experiment(cfg: ExperimentConfig) -> tuple[int, list[FsPath]]:
    """Stage-1 placement once, then every (alpha, mode) cell; writes CSV + manifest."""
    code, files, _ = _run(cfg)
    return code, files


def _run(cfg: ExperimentConfig):
    scenario = build_scenario(cfg)
    paths = compute_path_set(scenario.topology, [(c.src, c.dst) for c in scenario.chains], cfg.paths_per_chain)
    backend = get_backend(cfg.backend)
    fn = default_solve_fn(cfg.time_limit, cfg.gap, backend)
    out_dir = FsPath(cfg.output)
    manifest = {"seed": cfg.seed, "config_hash": cfg.digest(), "config": asdict(cfg), "cells": []}
    stage1 = fn(build_model(scenario, paths, Mode.INITIAL, alpha=cfg.stage1_alpha))
    manifest["stage1"] = {"status": stage1.status, "objective": stage1.objective, "solve_time": stage1.solve_time}
    if not stage1.has_values:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
        return (EXIT_INFEASIBLE if stage1.status == INFEASIBLE else EXIT_TIMEOUT), [], None
    initial = InitialPlacement.from_placements(stage1.placements)

    cells = [(float(a), m) for a in cfg.alphas for m in cfg.modes]
    todo = [(scenario, paths, m, a, initial, cfg) for a, m in cells if MODE_NAMES[m] is not Mode.INITIAL]
    if cfg.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            solved = list(pool.map(_solve_cell, todo))
    else:
        solved = [_solve_cell(t) for t in todo]
    results = {}
    it = iter(solved)
    for a, m in cells:
        results[(a, m)] = stage1 if MODE_NAMES[m] is Mode.INITIAL else next(it)

    rule = DivisorRule(cfg.failure_rule)
    rows: dict[str, list[list]] = {k: [] for k in HEADERS}
    code = EXIT_OK
    for (a, m), sol in results.items():
        sc = scenario.with_params(alpha=a, ntn_enabled=cfg.ntn)
        for k, v in cell_rows(sc, paths, a, m, sol, initial, stage1, rule).items():
            rows[k].extend(v)
        entry = {"alpha": a, "mode": m, "status": sol.status, "objective": sol.objective, "solve_time": sol.solve_time}
        manifest["cells"].append(entry)
        if sol.status == TIMED_OUT:
            code = EXIT_TIMEOUT
        elif sol.status == INFEASIBLE and code == EXIT_OK:
            code = EXIT_INFEASIBLE
    written = write_reports(out_dir, rows)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return code, written + [out_dir / "manifest.json"], (scenario, initial, results)


# -- argument handling -----------------------------------------------------

def _load_config(args) -> ExperimentConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(FsPath(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    overrides = {
        "topology": args.topology,
        "scenario": getattr(args, "scenario", None),
        "seed": args.seed,
        "f_max": args.f_max,
        "beta": args.beta,
        "ntn": True if args.ntn else None,
        "k_paths": args.k,
        "backend": args.backend,
        "time_limit": args.time_limit,
        "gap": args.gap,
        "output": getattr(args, "out", None),
        "workers": getattr(args, "workers", None),
    }
    if getattr(args, "alpha", None) is not None:
        alphas = args.alpha if isinstance(args.alpha, list) else [args.alpha]
        overrides["alphas"] = [float(a) for a in alphas]
    if getattr(args, "mode", None):
        overrides["modes"] = args.mode if isinstance(args.mode, list) else [args.mode]
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; flags override it")
    p.add_argument("--topology", help="bundled topology name or JSON path")
    p.add_argument("--seed", type=int)
    p.add_argument("--f-max", dest="f_max", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--ntn", action="store_true", help="enable N-to-N reservation")
    p.add_argument("--k", type=int, help="candidate paths per chain (default f_max + 1)")
    p.add_argument("--backend", choices=["highs", "command"])
    p.add_argument("--time-limit", dest="time_limit", type=float)
    p.add_argument("--gap", type=float)


def _cmd_generate(args) -> int:
    cfg = _load_config(args)
    sc = build_scenario(cfg)
    text = sc.dumps()
    if args.output:
        FsPath(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    code, files = run_experiment(cfg)
    for f in files:
        print(f)
    return code


def _cmd_solve(args) -> int:
    cfg = _load_config(args)
    if len(cfg.alphas) != 1 or len(cfg.modes) != 1:
        raise ConfigError("solve takes exactly one --alpha and one --mode")
    code, files, state = _run(cfg)
    if state is not None:
        scenario, initial, results = state
        alpha, mode = float(cfg.alphas[0]), cfg.modes[0]
        sol = results[(alpha, mode)]
        doc = sol.to_document()
        doc.update(mode=sol.mode, alpha=alpha, k_paths=cfg.paths_per_chain, initial=initial.to_list())
        out = FsPath(cfg.output)
        (out / "solution.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
        (out / "scenario.json").write_text(scenario.with_params(alpha=alpha).dumps(), encoding="utf-8")
        files += [out / "solution.json", out / "scenario.json"]
    for f in files:
        print(f)
    return code


def _read_solution(path):
    doc = json.loads(FsPath(path).read_text(encoding="utf-8"))
    sol = Solution.from_document(doc)
    initial = InitialPlacement.from_list(doc.get("initial", []))
    return doc, sol, initial


def _cmd_evaluate(args) -> int:
    scenario = load_scenario(args.scenario)
    doc, sol, initial = _read_solution(args.solution)
    k = args.k or doc.get("k_paths") or scenario.params.f_max + 1
    paths = compute_path_set(scenario.topology, [(c.src, c.dst) for c in scenario.chains], k)
    alpha = float(doc.get("alpha", scenario.params.alpha))
    mode = {v.value: n for n, v in MODE_NAMES.items()}[sol.mode]
    if not initial.assignment:
        initial = InitialPlacement.from_placements(sol.placements)
    baseline = Solution("Optimal", placements={(x, v, s) for (s, v), x in initial.assignment.items()})
    rows = cell_rows(scenario, paths, alpha, mode, sol, initial, baseline, DivisorRule(args.rule))
    for f in write_reports(FsPath(args.out), rows):
        print(f)
    return EXIT_OK


def _cmd_failure(args) -> int:
    scenario = load_scenario(args.scenario)
    _, sol, _ = _read_solution(args.solution)
    try:
        server = int(args.server)
    except ValueError:
        server = args.server
    try:
        rep = simulate_server_failure(sol, scenario, server, DivisorRule(args.rule), args.redirect)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    topo = scenario.topology
    print(json.dumps({
        "server_id": topo.servers[rep.server].id,
        "rule": rep.rule.value,
        "chains_failed": rep.chains_failed,
        "failed_chains": [scenario.chains[s].id for s in rep.failed_chains],
        "max_post_utilization": rep.max_post_utilization,
        "reservation_ok": rep.reservation_ok,
    }, indent=1))
    return EXIT_OK


def _cmd_export_lp(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.ntn:
        scenario = scenario.with_params(ntn_enabled=True)
    k = args.k or scenario.params.f_max + 1
    paths = compute_path_set(scenario.topology, [(c.src, c.dst) for c in scenario.chains], k)
    mode = MODE_NAMES[args.mode]
    initial = None
    if mode is not Mode.INITIAL:
        if not args.initial:
            raise ConfigError("--initial is required for rep / rep-migr")
        _, _, initial = _read_solution(args.initial)
    alpha = args.alpha if args.alpha is not None else None
    model = build_model(scenario, paths, mode, initial, alpha=alpha)
    text = export_lp(model)
    if args.output:
        FsPath(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.audit:
        FsPath(args.audit).write_text(json.dumps(model.audit(), indent=1) + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_show_penalty(args) -> int:
    orientation = DECREASING if args.orientation == "decreasing" else INCREASING
    bps = [float(b) for b in args.breakpoints.split(",")] if args.breakpoints else None
    pwl = build_penalty(args.gamma, bps, orientation) if bps else build_penalty(args.gamma, orientation=orientation)
    print(f"orientation={pwl.orientation} gamma={args.gamma}")
    print("piece,slope,intercept")
    for i, (a, b) in enumerate(pwl.pieces):
        print(f"{i},{a!r},{b!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfcrel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a random scenario")
    _common(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_generate)

    for name, func, help_ in (("solve", _cmd_solve, "solve one (alpha, mode) cell"),
                              ("sweep", _cmd_sweep, "run an alpha x mode sweep")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--scenario", help="scenario JSON instead of generating one")
        p.add_argument("--alpha", type=float, nargs="+" if name == "sweep" else None)
        p.add_argument("--mode", nargs="+" if name == "sweep" else None, choices=list(MODE_NAMES))
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="write reports for a solution file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--rule", choices=["survivor", "fmax"], default="survivor")
    p.add_argument("--out", default="reports")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("simulate-failure", help="fail one server of a solved scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--server", required=True, help="server id or index")
    p.add_argument("--rule", choices=["survivor", "fmax"], default="survivor")
    p.add_argument("--redirect", choices=["split", "single"], default="split")
    p.set_defaults(func=_cmd_failure)

    p = sub.add_parser("export-lp", help="write the ILP in LP format")
    p.add_argument("--scenario", required=True)
    p.add_argument("--mode", choices=list(MODE_NAMES), default="no-protection")
    p.add_argument("--initial", help="solution JSON carrying the initial placement")
    p.add_argument("--alpha", type=float)
    p.add_argument("--ntn", action="store_true")
    p.add_argument("--k", type=int)
    p.add_argument("-o", "--output")
    p.add_argument("--audit", help="also write the per-family row counts as JSON")
    p.set_defaults(func=_cmd_export_lp)

    p = sub.add_parser("show-penalty", help="print piecewise-linear penalty coefficients")
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("--breakpoints", help="comma separated, spanning 0..1")
    p.add_argument("--orientation", choices=["increasing", "decreasing"], default="increasing")
    p.set_defaults(func=_cmd_show_penalty)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TopologyError, ModelError, BackendUnavailable, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageOneInfeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
