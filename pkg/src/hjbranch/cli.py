"""Command-line frontend: scenario files, subcommands, artifact output.

Scenario files are JSON with a strict schema (unknown keys rejected,
all defaults echoed back into the run log). Subcommands:

    eigen | solve | branch | tstar | suite | diagram  <scenario> --out DIR

Exit codes: 0 success, 1 assertion failure (suite check failed),
2 schema/configuration error, 3 inadmissible discretization (CFL),
4 solver/regime/runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import branches as br
from .artifacts import (
    svg_diagram,
    write_branch,
    write_csv,
    write_grid_function,
    write_json,
    write_jsonl,
)
from .checks import default_suite, emit_traceability, run_suite
from .eigen import principal_eigen
from .errors import (
    AdmissibilityError,
    ConfigurationError,
    HJBError,
    PropertyFailureError,
)
from .grids import Grid, GridFunction, build_grid
from .howard import solve, solve_with_starts
from .operators import ControlFamily, DiscreteOperator

EXIT_OK = 0
EXIT_ASSERT = 1
EXIT_SCHEMA = 2
EXIT_ADMISSIBILITY = 3
EXIT_RUNTIME = 4


class Scenario:
    """Validated scenario with all defaults materialized."""

    def __init__(self, data: dict):
        self.data = data

    @property
    def name(self) -> str:
        return self.data["name"]

    def grid(self) -> Grid:
        g = self.data["grid"]
        return build_grid(g["dim"], [tuple(e) for e in g["extents"]]
                          if g["dim"] == 2 else tuple(g["extents"][0]), tuple(g["n"]))

    def family(self) -> ControlFamily:
        return _family_from_dict(self.data["family"])

    def lam(self):
        lam = self.data["lam"]
        if isinstance(lam, dict):
            return lam["mode"], lam["offset"]
        return float(lam), 0.0

    def h_fun(self, grid: Grid) -> GridFunction:
        return _sample_h(self.data["h_fun"], grid)

    def branch_config(self, strict: bool = True) -> br.BranchConfig:
        grid = self.grid()
        b = self.data["branch"]
        lam, offset = self.lam()
        levels = b["resonance_levels"]
        return br.BranchConfig(
            self.family(), grid, lam, tuple(b["t_range"]), b["n_samples"],
            h_fun=self.h_fun(grid), lam_offset=offset,
            resonance_seq=tuple(2.0 ** (-k) for k in range(1, levels + 1)),
            seed=self.data["seeds"][0], strict=strict)


def _err(path: str, message: str) -> ConfigurationError:
    return ConfigurationError(f"{path}: {message}")


def _require_keys(obj: dict, path: str, required: tuple, optional: tuple) -> None:
    for key in obj:
        if key not in required and key not in optional:
            raise _err(f"{path}.{key}", "unknown key")
    for key in required:
        if key not in obj:
            raise _err(f"{path}.{key}", "missing required key")


def _expect(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise _err(path, message)


def _family_from_dict(fd: dict) -> ControlFamily:
    kind = fd["kind"]
    dim = fd.get("dim", 1)
    if kind == "linear":
        return ControlFamily.linear(fd.get("diffusion", 1.0), fd.get("drift"),
                                    fd.get("zeroth", 0.0), dim=dim)
    if kind == "fucik":
        return ControlFamily.fucik(fd["b_plus"], fd.get("b_minus", 0.0), dim=dim)
    if kind == "pucci_plus":
        return ControlFamily.pucci_plus(fd["lam_ell"], fd["Lam_ell"], dim=dim)
    if kind == "pucci_minus":
        return ControlFamily.pucci_minus(fd["lam_ell"], fd["Lam_ell"], dim=dim)
    if kind == "finite_sup":
        ctrls = [(c["diffusion"], c["drift"], c["zeroth"]) for c in fd["controls"]]
        return ControlFamily.finite_sup(ctrls)
    raise _err("family.kind", f"unknown kind {kind!r}")


def _validate_family(fd, path: str) -> dict:
    _expect(isinstance(fd, dict), path, "must be an object")
    _expect("kind" in fd, f"{path}.kind", "missing required key")
    kind = fd["kind"]
    if kind == "linear":
        _require_keys(fd, path, ("kind",), ("diffusion", "drift", "zeroth", "dim"))
    elif kind == "fucik":
        _require_keys(fd, path, ("kind", "b_plus"), ("b_minus", "dim"))
    elif kind in ("pucci_plus", "pucci_minus"):
        _require_keys(fd, path, ("kind", "lam_ell", "Lam_ell"), ("dim",))
    elif kind == "finite_sup":
        _require_keys(fd, path, ("kind", "controls"), ("dim",))
        _expect(isinstance(fd["controls"], list) and fd["controls"],
                f"{path}.controls", "must be a nonempty list")
        for i, c in enumerate(fd["controls"]):
            _require_keys(c, f"{path}.controls[{i}]",
                          ("diffusion", "drift", "zeroth"), ())
    else:
        raise _err(f"{path}.kind", f"unknown kind {kind!r}")
    return fd


def _sample_h(hd: dict, grid: Grid) -> GridFunction:
    kind = hd["kind"]
    if kind == "zero":
        return grid.zeros()
    coords = grid.coords()
    xh = np.ones(grid.num_nodes)
    hats = []
    for ax in range(grid.dim):
        a, b = grid.extents[ax]
        hats.append((coords[:, ax] - a) / (b - a))
    if kind == "poly":
        _expect(grid.dim == 1, "h_fun.kind", "poly forcing is 1D only")
        vals = np.zeros(grid.num_nodes)
        for k, c in enumerate(hd["coeffs"]):
            vals += float(c) * hats[0] ** k
        return GridFunction(grid, vals)
    if kind == "sine":
        vals = np.zeros(grid.num_nodes)
        for m, a_m in enumerate(hd["amplitudes"], start=1):
            mode = np.ones(grid.num_nodes)
            for hat in hats:
                mode = mode * np.sin(m * np.pi * hat)
            vals += float(a_m) * mode
        return GridFunction(grid, vals)
    raise _err("h_fun.kind", f"unknown kind {kind!r}")


def validate_scenario(raw: dict) -> dict:
    """Validate against the schema and materialize every default."""
    _expect(isinstance(raw, dict), "$", "scenario must be a JSON object")
    _require_keys(raw, "$", ("grid", "family"),
                  ("name", "lam", "h_fun", "branch", "seeds", "solve_t",
                   "dump_points"))
    out: dict = {}
    out["name"] = raw.get("name", "scenario")
    _expect(isinstance(out["name"], str), "name", "must be a string")

    gd = raw["grid"]
    _require_keys(gd, "grid", ("dim", "extents", "n"), ())
    _expect(gd["dim"] in (1, 2), "grid.dim", "must be 1 or 2")
    _expect(isinstance(gd["extents"], list) and len(gd["extents"]) == gd["dim"],
            "grid.extents", "must list one [a, b] pair per axis")
    for i, e in enumerate(gd["extents"]):
        _expect(isinstance(e, list) and len(e) == 2, f"grid.extents[{i}]",
                "must be [a, b]")
        _expect(float(e[1]) > float(e[0]), f"grid.extents[{i}]", "must be increasing")
    _expect(isinstance(gd["n"], list) and len(gd["n"]) == gd["dim"], "grid.n",
            "must list one count per axis")
    for i, n in enumerate(gd["n"]):
        _expect(isinstance(n, int) and n >= 3, f"grid.n[{i}]",
                "needs at least 3 interior nodes")
    out["grid"] = {"dim": gd["dim"],
                   "extents": [[float(a), float(b)] for a, b in gd["extents"]],
                   "n": [int(n) for n in gd["n"]]}

    out["family"] = _validate_family(raw["family"], "family")

    lam = raw.get("lam", 0.0)
    if isinstance(lam, dict):
        _require_keys(lam, "lam", ("mode",), ("offset",))
        _expect(lam["mode"] in (br.AT_LAM_PLUS, br.AT_LAM_MINUS), "lam.mode",
                "must be 'at_lam_plus' or 'at_lam_minus'")
        out["lam"] = {"mode": lam["mode"], "offset": float(lam.get("offset", 0.0))}
    else:
        _expect(isinstance(lam, (int, float)), "lam", "must be a number or object")
        out["lam"] = float(lam)

    hd = raw.get("h_fun", {"kind": "zero"})
    _expect(isinstance(hd, dict) and "kind" in hd, "h_fun", "must carry a kind")
    if hd["kind"] == "zero":
        _require_keys(hd, "h_fun", ("kind",), ())
    elif hd["kind"] == "poly":
        _require_keys(hd, "h_fun", ("kind", "coeffs"), ())
    elif hd["kind"] == "sine":
        _require_keys(hd, "h_fun", ("kind", "amplitudes"), ())
    else:
        raise _err("h_fun.kind", f"unknown kind {hd['kind']!r}")
    out["h_fun"] = hd

    bd = raw.get("branch", {})
    _require_keys(bd, "branch", (), ("t_range", "n_samples", "resonance_levels"))
    t_range = bd.get("t_range", [-5.0, 5.0])
    _expect(isinstance(t_range, list) and len(t_range) == 2
            and float(t_range[0]) < float(t_range[1]),
            "branch.t_range", "must be an increasing pair")
    n_samples = bd.get("n_samples", 21)
    _expect(isinstance(n_samples, int) and n_samples >= 2, "branch.n_samples",
            "must be an integer >= 2")
    levels = bd.get("resonance_levels", 20)
    _expect(isinstance(levels, int) and 3 <= levels <= 40, "branch.resonance_levels",
            "must be an integer in [3, 40]")
    out["branch"] = {"t_range": [float(t_range[0]), float(t_range[1])],
                     "n_samples": n_samples, "resonance_levels": levels}

    seeds = raw.get("seeds", [0])
    _expect(isinstance(seeds, list) and seeds
            and all(isinstance(s, int) for s in seeds), "seeds",
            "must be a nonempty list of integers")
    out["seeds"] = seeds
    out["solve_t"] = float(raw.get("solve_t", 0.0))
    dump = raw.get("dump_points", False)
    _expect(isinstance(dump, bool), "dump_points", "must be a boolean")
    out["dump_points"] = dump

    # construction-level validation: grid/family invariants and admissibility
    scenario = Scenario(out)
    grid = scenario.grid()
    family = scenario.family()
    scenario.h_fun(grid)
    DiscreteOperator(family, grid, 0.0)  # raises AdmissibilityError on CFL failure
    return out


def parse_scenario(path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"scenario file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON in {path}: {exc}")
    return Scenario(validate_scenario(raw))


def emit_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario.data, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_eigen(sc: Scenario, out: Path, jobs: int) -> int:
    grid = sc.grid()
    fam = sc.family()
    plus = principal_eigen(fam, grid, "+")
    minus = principal_eigen(fam, grid, "-")
    write_grid_function(out / "eigen_plus.csv", plus.phi)
    write_grid_function(out / "eigen_minus.csv", minus.phi)
    # second-order Richardson extrapolation from a half-resolution grid, so
    # a reader can judge how close the discrete eigenvalue sits to its limit
    richardson = {}
    if all(n >= 7 and n % 2 == 1 for n in grid.n):
        coarse = build_grid(grid.dim,
                            grid.extents if grid.dim == 2 else grid.extents[0],
                            tuple((n - 1) // 2 for n in grid.n))
        for tag, pair in (("plus", plus), ("minus", minus)):
            lam_c = principal_eigen(fam, coarse, "+" if tag == "plus" else "-").lam
            richardson[tag] = (4.0 * pair.lam - lam_c) / 3.0
    write_json(out / "summary.json", {
        "grid": grid.to_dict(), "plus": plus.as_dict(), "minus": minus.as_dict(),
        "spectral_gap": minus.lam - plus.lam,
        "lam_richardson": richardson})
    return EXIT_OK


def _cmd_solve(sc: Scenario, out: Path, jobs: int) -> int:
    cfg = sc.branch_config()
    ctx = br.prepare(cfg)
    op = ctx.operator()
    t = sc.data["solve_t"]
    f = ctx.rhs(t)
    u, rep = solve(op, f)
    if not rep.converged:
        u2, rep2, _ = solve_with_starts(op, f, ctx.ladder(1.0 + abs(t)))
        if u2 is not None:
            u, rep = u2, rep2
    write_grid_function(out / "solution.csv", u)
    write_jsonl(out / "trace.jsonl", [rep.as_dict()])
    write_json(out / "summary.json", {
        "t": t, "lam": ctx.lam, "status": rep.status, "iters": rep.iters,
        "final_residual": rep.final_residual, "sup_norm": float(np.abs(u.values).max()),
        "min": u.min(), "max": u.max()})
    if not rep.converged:
        return EXIT_RUNTIME
    return EXIT_OK


def _regime(ctx: br.BranchContext) -> str:
    lam = ctx.lam
    tol = 1e-9 * (1.0 + abs(ctx.eig_minus.lam))
    if abs(lam - ctx.eig_plus.lam) <= tol:
        return "resonance_plus"
    if abs(lam - ctx.eig_minus.lam) <= tol:
        return "resonance_minus"
    if lam < ctx.eig_plus.lam:
        return "subcritical"
    if lam < ctx.eig_minus.lam:
        return "fold"
    return "negative"


def _cmd_branch(sc: Scenario, out: Path, jobs: int) -> int:
    cfg = sc.branch_config()
    ctx = br.prepare(cfg)
    regime = _regime(ctx)
    summary: dict = {"regime": regime, "lam": ctx.lam,
                     "grid": cfg.grid.to_dict(),
                     "lam_plus": ctx.eig_plus.lam, "lam_minus": ctx.eig_minus.lam}
    phi = ctx.eig_plus.phi
    traces = []
    if regime == "subcritical":
        branch = br.sweep_subcritical(cfg, ctx)
        write_branch(out / "branch.csv", branch, phi)
        traces = [p.solve.as_dict() for p in branch.points]
        summary["diagnostics"] = branch.diagnostics
    elif regime in ("resonance_plus", "resonance_minus"):
        sign = "+" if regime == "resonance_plus" else "-"
        crit = br.locate_tstar_resonance(cfg, sign, ctx)
        halfw = 0.5 * (crit.bracket[1] - crit.bracket[0])
        branch = br.trace_resonant_branch(cfg, sign, crit.t_star, ctx,
                                          bracket_halfwidth=halfw)
        write_branch(out / "branch.csv", branch, phi)
        traces = [p.solve.as_dict() for p in branch.points]
        diag = {k: v for k, v in branch.diagnostics.items()
                if k not in ("u_star",)}
        diag["uniqueness_probes"] = {str(k): v for k, v in
                                     diag.get("uniqueness_probes", {}).items()}
        summary["t_star"] = crit.t_star
        summary["bracket"] = list(crit.bracket)
        summary["diagnostics"] = diag
        write_json(out / "tstar.json", _critical_payload(crit))
    elif regime == "fold":
        minimal, second, crit = br.trace_fold(cfg, ctx)
        write_branch(out / "branch_minimal.csv", minimal, phi)
        write_branch(out / "branch_second.csv", second, phi)
        traces = [p.solve.as_dict() for p in minimal.points]
        summary["t_star"] = crit.t_star
        summary["bracket"] = list(crit.bracket)
        summary["diagnostics"] = {"minimal": minimal.diagnostics,
                                  "fold": crit.diagnostics}
        write_json(out / "tstar.json", _critical_payload(crit))
    else:
        branch = br.sweep_negative_regime(cfg, ctx)
        write_branch(out / "branch.csv", branch, phi)
        traces = [p.solve.as_dict() for p in branch.points]
        summary["diagnostics"] = branch.diagnostics
    if sc.data["dump_points"]:
        points = minimal.points if regime == "fold" else branch.points
        for i, p in enumerate(points):
            write_grid_function(out / f"point_{i:04d}.csv", p.u)
    write_jsonl(out / "trace.jsonl", traces)
    write_json(out / "summary.json", summary)
    return EXIT_OK


def _critical_payload(crit: br.CriticalReport) -> dict:
    return {"t_star": crit.t_star, "bracket": list(crit.bracket), "kind": crit.kind,
            "blowup_evidence": [list(e) for e in crit.blowup_evidence],
            "diagnostics": crit.diagnostics}


def _cmd_tstar(sc: Scenario, out: Path, jobs: int) -> int:
    cfg = sc.branch_config()
    ctx = br.prepare(cfg)
    lam_mode = sc.data["lam"]
    if isinstance(lam_mode, dict) and lam_mode["mode"] == br.AT_LAM_MINUS:
        sign = "-"
    else:
        sign = "+"
    crit = br.locate_tstar_resonance(cfg, sign, ctx)
    write_json(out / "tstar.json", _critical_payload(crit))
    write_csv(out / "evidence.csv", ["eps", "t", "sup_norm", "eigdir_cosine"],
              crit.blowup_evidence)
    return EXIT_OK


def _cmd_suite(sc: Scenario, out: Path, jobs: int) -> int:
    specs = default_suite(sc.grid(), seed=sc.data["seeds"][0])
    results = run_suite(specs, jobs=jobs)
    write_json(out / "results.json", {"results": [r.as_dict() for r in results]})
    (out / "report.md").write_text(emit_traceability(results), encoding="utf-8")
    if any(r.status == "Fail" for r in results):
        return EXIT_ASSERT
    return EXIT_OK


def _read_branch_csv(path: Path) -> list[tuple[float, float]]:
    rows = path.read_text(encoding="utf-8").strip().split("\n")
    header = rows[0].split(",")
    it, id_ = header.index("t"), header.index("d")
    return [(float(r.split(",")[it]), float(r.split(",")[id_])) for r in rows[1:]]


def _cmd_diagram(sc: Scenario, out: Path, jobs: int) -> int:
    curves = []
    for name, label in (("branch.csv", "branch"),
                        ("branch_minimal.csv", "minimal"),
                        ("branch_second.csv", "second")):
        p = out / name
        if p.exists():
            curves.append((label, _read_branch_csv(p)))
    if not curves:
        raise ConfigurationError(
            f"no branch CSV found in {out}; run the branch command first")
    markers = []
    tstar_path = out / "tstar.json"
    if tstar_path.exists():
        crit = json.loads(tstar_path.read_text(encoding="utf-8"))
        markers.append((f"t* ({crit['kind']})", float(crit["t_star"])))
    svg_diagram(out / "bifurcation.svg", curves, markers,
                title=f"solution set: {sc.name}")
    return EXIT_OK


_COMMANDS = {
    "eigen": _cmd_eigen,
    "solve": _cmd_solve,
    "branch": _cmd_branch,
    "tstar": _cmd_tstar,
    "suite": _cmd_suite,
    "diagram": _cmd_diagram,
}


def run_command(cmd: str, scenario: Scenario, out_dir, jobs: int = 1,
                seed: int | None = None) -> int:
    """Dispatch a subcommand and write run.json; returns the exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if seed is not None:
        scenario.data["seeds"] = [seed] + scenario.data["seeds"][1:]
    started = time.time()
    code = _COMMANDS[cmd](scenario, out, jobs)
    write_json(out / "run.json", {
        "command": cmd,
        "scenario": scenario.data,
        "seeds": scenario.data["seeds"],
        "versions": {"hjbranch": __version__, "numpy": np.__version__,
                     "python": sys.version.split()[0]},
        "wall_time_s": time.time() - started,
        "exit_code": code,
    })
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hjbranch",
        description="Eigenvalues and solution branches of sup-type elliptic "
                    "Dirichlet problems on uniform grids.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("scenario", help="path to a scenario JSON file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker count for independent checks (default 1)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scenario's first seed")
    args = parser.parse_args(argv)
    try:
        scenario = parse_scenario(args.scenario)
        return run_command(args.command, scenario, args.out, args.jobs, args.seed)
    except AdmissibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except PropertyFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except HJBError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
