"""Policy (Howard) iteration for the discrete Dirichlet problem F_h[u] = f.

Each policy step freezes the argmax control, solves the resulting linear
system exactly by a direct factorization, and re-optimizes. The linear
step is applied in update form,

    u_{k+1} = u_k + L_k^{-1} (f - F_h[u_k]),

which is algebraically the classical policy step (L_k u_k = F_h[u_k])
but performs iterative refinement for near-singular linearizations, so
spectral-parameter values close to an eigenvalue still reach tight
residuals.

A damped fallback keeps the accepted residual history nonincreasing
after the first step; if no damping factor achieves descent the run
stops with ``max_iters`` rather than reporting a non-monotone
"converged" trace. Divergence (iterate norm above a blow-up threshold)
is a first-class outcome consumed by the resonance detectors, not an
exception.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import UsageError
from .grids import GridFunction, sup_norm

CONVERGED = "Converged"
DIVERGED = "Diverged"
MAX_ITERS = "MaxIters"
SINGULAR = "SingularLinearization"


@dataclass
class SolveParams:
    """Termination controls for one solve.

    tol=None resolves to max(1e-10 * sup|f|, 1e-13) at call time.
    """

    tol: float | None = None
    max_policy_iters: int = 200
    blowup_norm: float = 1e8
    max_damping_halvings: int = 25
    conditioning_guard: float = 8.0

    def __post_init__(self):
        if self.tol is not None and self.tol <= 0:
            raise UsageError("tol must be positive")
        if self.max_policy_iters < 1:
            raise UsageError("max_policy_iters must be >= 1")
        if self.blowup_norm <= 1:
            raise UsageError("blowup_norm must exceed 1")

    def resolve_tol(self, f_norm: float) -> float:
        if self.tol is not None:
            return self.tol
        return max(1e-10 * f_norm, 1e-13)

    def guard_tol(self, base_tol: float, matrix_scale: float, u_norm: float) -> float:
        """Residual target adjusted for what double precision can certify.

        Evaluating F_h[u] rounds at the level eps * |stencil| * |u|, so no
        algorithm can verify residuals below that; the guard keeps
        near-eigenvalue solves from spinning against an unreachable target.
        Disabled when conditioning_guard <= 0.
        """
        if self.conditioning_guard <= 0:
            return base_tol
        eps = np.finfo(float).eps
        return max(base_tol, self.conditioning_guard * eps * matrix_scale * max(1.0, u_norm))


@dataclass
class SolveReport:
    status: str
    iters: int
    residual_history: list[float] = field(default_factory=list)
    active_control_changes: list[int] = field(default_factory=list)
    tol: float = 0.0
    final_residual: float = float("nan")
    damping_events: int = 0

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def as_dict(self) -> dict:
        return {
            "status": self.status,
            "iters": self.iters,
            "residual_history": list(self.residual_history),
            "active_control_changes": list(self.active_control_changes),
            "tol": self.tol,
            "final_residual": self.final_residual,
            "damping_events": self.damping_events,
        }


def solve(op, f: GridFunction, params: SolveParams | None = None,
          u0: GridFunction | None = None) -> tuple[GridFunction, SolveReport]:
    """Solve F_h[u] = f by policy iteration with damped fallback.

    Returns the last iterate together with a report; the caller decides
    what a non-``Converged`` status means in its regime. A ``Converged``
    result always satisfies a fresh-residual check against the resolved
    tolerance.
    """
    if f.grid != op.grid:
        raise UsageError("right-hand side lives on a different grid")
    params = params or SolveParams()
    incl = getattr(op, "_incl", None)
    f_flat = f.values if incl is None else np.where(incl, f.values, 0.0)
    tol = params.resolve_tol(float(np.abs(f_flat).max()))

    if u0 is None:
        u = np.zeros(op.grid.num_nodes)
    else:
        if u0.grid != op.grid:
            raise UsageError("initial guess lives on a different grid")
        u = u0.values.copy() if incl is None else np.where(incl, u0.values, 0.0)

    history: list[float] = []
    active_changes: list[int] = []
    prev_active = None
    status = MAX_ITERS
    iters = 0
    damping_events = 0
    mat_scale = op.matrix_scale()
    eff_tol = tol
    resid_vec = op.apply_flat(u) - f_flat
    resid = float(np.abs(resid_vec).max())

    for k in range(1, params.max_policy_iters + 1):
        iters = k
        lin = op.linearize(u)
        try:
            delta = lin.solve(-resid_vec)
        except (scipy.linalg.LinAlgError, RuntimeError):
            status = SINGULAR
            break
        cand = u + delta
        cand_resid_vec = op.apply_flat(cand) - f_flat
        cand_resid = float(np.abs(cand_resid_vec).max())
        if not np.isfinite(cand_resid):
            status = SINGULAR
            break
        if history and cand_resid > history[-1]:
            # damped fallback: first halving that restores descent
            accepted = False
            theta = 1.0
            for _ in range(params.max_damping_halvings):
                theta *= 0.5
                trial = u + theta * delta
                trial_vec = op.apply_flat(trial) - f_flat
                trial_resid = float(np.abs(trial_vec).max())
                if trial_resid <= history[-1]:
                    cand, cand_resid_vec, cand_resid = trial, trial_vec, trial_resid
                    accepted = True
                    damping_events += 1
                    break
            if not accepted:
                status = MAX_ITERS
                break
        u, resid_vec, resid = cand, cand_resid_vec, cand_resid
        history.append(resid)
        if prev_active is None:
            active_changes.append(int(lin.active.size))
        else:
            active_changes.append(int(np.count_nonzero(lin.active != prev_active)))
        prev_active = lin.active
        u_norm = float(np.abs(u).max())
        if u_norm > params.blowup_norm:
            status = DIVERGED
            break
        eff_tol = params.guard_tol(tol, mat_scale, u_norm)
        if resid <= eff_tol:
            status = CONVERGED
            break

    out = GridFunction(op.grid, u, check_finite=False) if np.all(np.isfinite(u)) \
        else GridFunction(op.grid, np.where(np.isfinite(u), u, 0.0), check_finite=False)
    # fresh verification, independent of the inner solves
    final_resid = float(np.abs(op.apply_flat(out.values) - f_flat).max())
    if status == CONVERGED and final_resid > eff_tol:
        status = MAX_ITERS
    report = SolveReport(status, iters, history, active_changes, eff_tol, final_resid,
                         damping_events)
    return out, report


def solve_with_starts(op, f: GridFunction, starts, params: SolveParams | None = None):
    """Try a ladder of initial guesses; return (u, report, index) of the first
    converged start, or (None, last_report, -1) if none converged."""
    last = None
    for idx, u0 in enumerate(starts):
        u, rep = solve(op, f, params=params, u0=u0)
        if rep.converged:
            return u, rep, idx
        last = rep
    return None, last, -1


def basin_census(op, f: GridFunction, starts, params: SolveParams | None = None,
                 distinct_gap: float | None = None):
    """Solve from every start and cluster the converged results.

    Returns a list of (representative u, multiplicity, start indices),
    where two solutions are identified when their sup distance is below
    ``distinct_gap`` (default 10x the resolved tolerance).
    """
    params = params or SolveParams()
    gap = distinct_gap
    if gap is None:
        gap = 10.0 * params.resolve_tol(sup_norm(f))
    clusters: list[list] = []
    for idx, u0 in enumerate(starts):
        u, rep = solve(op, f, params=params, u0=u0)
        if not rep.converged:
            continue
        placed = False
        for entry in clusters:
            if sup_norm(u - entry[0]) <= gap:
                entry[1] += 1
                entry[2].append(idx)
                placed = True
                break
        if not placed:
            clusters.append([u, 1, [idx]])
    return [(u, count, tuple(idxs)) for u, count, idxs in clusters]


@dataclass
class ComparisonReport:
    premise_gap: float
    worst_violation: float
    slack: float

    @property
    def premise_holds(self) -> bool:
        return self.premise_gap <= self.slack

    @property
    def holds(self) -> bool:
        return (not self.premise_holds) or self.worst_violation <= self.slack


def check_comparison(op, u: GridFunction, v: GridFunction,
                     slack_scale: float = 1e-10) -> ComparisonReport:
    """Discrete comparison: F_h[u] <= F_h[v] pointwise should force u >= v.

    Report-only; the caller certifies the positive-eigenvalue regime.
    """
    Fu = op.apply_flat(u.values)
    Fv = op.apply_flat(v.values)
    scale = 1.0 + max(np.abs(Fu).max(), np.abs(Fv).max(), sup_norm(u), sup_norm(v))
    slack = slack_scale * scale
    premise_gap = float((Fu - Fv).max())
    worst = float(np.maximum(v.values - u.values, 0.0).max())
    return ComparisonReport(premise_gap, worst, slack)


@dataclass
class AbpReport:
    side: str
    sup_part: float
    forcing_norm: float
    ratio: float

    def as_dict(self) -> dict:
        return {"side": self.side, "sup_part": self.sup_part,
                "forcing_norm": self.forcing_norm, "ratio": self.ratio}


def check_abp(op, u: GridFunction, f: GridFunction, side: str) -> AbpReport:
    """One-sided bound bookkeeping: ratio of sup of the adverse part of u
    to the discrete L^N norm of the favorable part of f.

    side '-' pairs sup u^- with ||f^+||; side '+' pairs sup u^+ with
    ||f^-||. The 0/0 case reports ratio 0 by convention.
    """
    if side not in ("+", "-"):
        raise UsageError("side must be '+' or '-'")
    grid = op.grid
    if side == "-":
        sup_part = float(np.maximum(-u.values, 0.0).max())
        fav = np.maximum(f.values, 0.0)
    else:
        sup_part = float(np.maximum(u.values, 0.0).max())
        fav = np.maximum(-f.values, 0.0)
    w = grid.quad_weight()
    N = grid.dim
    forcing = float((w * np.sum(fav**N)) ** (1.0 / N))
    ratio = 0.0 if forcing == 0.0 and sup_part == 0.0 else (
        float("inf") if forcing == 0.0 else sup_part / forcing)
    return AbpReport(side, sup_part, forcing, ratio)
