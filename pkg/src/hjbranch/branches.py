"""Tracing the solution set of F_h[u] + lam*u = t*phi_1^+ + h over t.

The solution set is explored in the regime the spectral position of lam
dictates:

* strictly below lam_1^+: a single decreasing convex curve, swept
  directly with warm starts (``sweep_subcritical``);
* at lam_1^+ or lam_1^-: the critical parameter t* is bracketed by
  approaching the eigenvalue through a ladder of gaps eps_k and
  classifying solves as blown-up or bounded
  (``locate_tstar_resonance``), and the branch structure near t* is
  sampled (``trace_resonant_branch``);
* between the eigenvalues: a minimal branch is produced by monotone
  iteration from a certified subsolution and the second branch by
  predictor-corrector continuation in the distance coordinate d, which
  turns the fold (``trace_fold``);
* slightly above lam_1^-: solutions exist for every t and the sweep
  checks the sign/growth asymptotics (``sweep_negative_regime``).

Blow-up classification is scale-aware: at gap eps the resonant response
grows like 1/eps while bounded solutions stay O(1), so the threshold
1/(10*sqrt(eps)) separates the two regardless of problem scale, and the
classification boundary converges to t* at rate sqrt(eps); the final
estimate extrapolates the boundary sequence (Richardson on the last
three levels).

In the non-uniqueness regimes the inner solver returns whichever
solution its basin reaches; all multi-solution statements here steer
basins explicitly through start ladders, and every emitted branch point
re-verifies its residual with a fresh operator application.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .eigen import EigenParams, principal_eigen
from .errors import (
    BracketError,
    ConfigurationError,
    FoldTraceError,
    OrderingViolationError,
    RegimeError,
    UnstableDetectionError,
)
from .grids import Grid, GridFunction, eigen_bump, signed_distance, sup_norm
from .howard import (
    CONVERGED,
    DIVERGED,
    SolveParams,
    SolveReport,
    basin_census,
    solve,
    solve_with_starts,
)
from .operators import ControlFamily, DiscreteOperator

AT_LAM_PLUS = "at_lam_plus"
AT_LAM_MINUS = "at_lam_minus"

DEFAULT_RESONANCE_SEQ = tuple(2.0 ** (-k) for k in range(1, 21))


@dataclass
class BranchConfig:
    """Problem statement for one exploration run."""

    family: ControlFamily
    grid: Grid
    lam: float | str
    t_range: tuple[float, float]
    n_samples: int = 21
    h_fun: GridFunction | None = None
    lam_offset: float = 0.0
    resonance_seq: tuple[float, ...] = DEFAULT_RESONANCE_SEQ
    seed: int = 0
    strict: bool = True

    def __post_init__(self):
        if not self.t_range[0] < self.t_range[1]:
            raise ConfigurationError("t_range must be increasing")
        if self.n_samples < 2:
            raise ConfigurationError("need at least two samples")
        if isinstance(self.lam, str) and self.lam not in (AT_LAM_PLUS, AT_LAM_MINUS):
            raise ConfigurationError(f"unknown symbolic lambda {self.lam!r}")
        if any(e <= 0 for e in self.resonance_seq) or list(self.resonance_seq) != sorted(
                self.resonance_seq, reverse=True):
            raise ConfigurationError("resonance_seq must be positive and decreasing")


@dataclass
class BranchPoint:
    t: float
    u: GridFunction
    d: float
    regime_tags: frozenset[str]
    solve: SolveReport


@dataclass
class Branch:
    points: list[BranchPoint]
    reference: GridFunction
    lam: float
    diagnostics: dict = field(default_factory=dict)

    def ts(self) -> np.ndarray:
        return np.array([p.t for p in self.points])

    def norms(self) -> np.ndarray:
        return np.array([sup_norm(p.u) for p in self.points])


@dataclass
class CriticalReport:
    t_star: float
    bracket: tuple[float, float]
    kind: str
    blowup_evidence: list[tuple] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.bracket
        if not (lo < self.t_star < hi):
            raise ConfigurationError("bracket must strictly contain t_star")


class BranchContext:
    """Resolved spectral data shared by the exploration modes."""

    def __init__(self, cfg: BranchConfig, eigen_params: EigenParams | None = None):
        self.cfg = cfg
        self.grid = cfg.grid
        self.family = cfg.family
        self.eig_plus = principal_eigen(cfg.family, cfg.grid, "+", params=eigen_params)
        self.eig_minus = principal_eigen(cfg.family, cfg.grid, "-", params=eigen_params)
        self.h = cfg.h_fun if cfg.h_fun is not None else cfg.grid.zeros()
        if self.h.grid != cfg.grid:
            raise ConfigurationError("h_fun lives on a different grid")
        hn = sup_norm(self.h)
        if hn > 0:
            unit = self.h * (1.0 / hn)
            dist = min(sup_norm(unit - self.eig_plus.phi), sup_norm(unit + self.eig_plus.phi))
            if dist < 1e-6:
                raise ConfigurationError(
                    "h_fun is (numerically) a multiple of the positive eigenfunction")
        scale = 1.0 + abs(self.eig_minus.lam)
        if cfg.family.is_convex and self.eig_plus.lam > self.eig_minus.lam + 1e-8 * scale:
            raise RegimeError(
                "eigenvalue ordering lam_1^+ <= lam_1^- violated "
                f"({self.eig_plus.lam} > {self.eig_minus.lam}); broken stencil?")
        self.lam = self._resolve_lambda()

    @property
    def is_degenerate(self) -> bool:
        """Both eigenvalues (numerically) coincide: every member operator
        shares its principal pair, and resonance modes are refused."""
        return self.spectral_gap <= 1e-6

    def _resolve_lambda(self) -> float:
        lam = self.cfg.lam
        if lam == AT_LAM_PLUS:
            return self.eig_plus.lam + self.cfg.lam_offset
        if lam == AT_LAM_MINUS:
            return self.eig_minus.lam + self.cfg.lam_offset
        return float(lam) + self.cfg.lam_offset

    @property
    def spectral_gap(self) -> float:
        return self.eig_minus.lam - self.eig_plus.lam

    def rhs(self, t: float) -> GridFunction:
        return self.eig_plus.phi * t + self.h

    def operator(self, lam: float | None = None) -> DiscreteOperator:
        return DiscreteOperator(self.family, self.grid, self.lam if lam is None else lam)

    def ladder(self, scale: float, n: int = 8) -> list[GridFunction]:
        """Deterministic basin-steering starts at a given magnitude scale."""
        phi = self.eig_plus.phi
        mixed = mixed_mode(self.grid)
        s = max(scale, 1.0)
        starts = [self.grid.zeros()]
        for mag in (0.5 * s, 5.0 * s, 50.0 * s):
            starts.append(phi * mag)
            starts.append(phi * (-mag))
        starts.append(mixed * (0.5 * s))
        return starts[:n] if n <= len(starts) else starts


def prepare(cfg: BranchConfig) -> BranchContext:
    return BranchContext(cfg)


def mixed_mode(grid: Grid) -> GridFunction:
    """Sign-changing second-mode profile along the first axis."""
    coords = grid.coords()
    a, b = grid.extents[0]
    vals = np.sin(2.0 * np.pi * (coords[:, 0] - a) / (b - a))
    if grid.dim == 2:
        a2, b2 = grid.extents[1]
        vals = vals * np.sin(np.pi * (coords[:, 1] - a2) / (b2 - a2))
    m = np.abs(vals).max()
    return GridFunction(grid, vals / m if m > 0 else vals, check_finite=False)


def _tags(u: GridFunction) -> frozenset[str]:
    if u.max() < 0.0:
        return frozenset(("Negative",))
    if u.min() > 0.0:
        return frozenset(("Positive",))
    return frozenset(("SignChanging",))


def direction_cosine(u: GridFunction, phi: GridFunction) -> float:
    a = u.values
    b = phi.values
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def interior_max(u: GridFunction) -> float:
    """Max of u over the middle third of the domain per axis."""
    U = u.reshaped()
    sl = []
    for n in u.grid.n:
        lo = n // 3
        hi = max(lo + 1, (2 * n) // 3)
        sl.append(slice(lo, hi))
    return float(U[tuple(sl)].max())


def diagram_coordinate(u: GridFunction, ref: GridFunction) -> float:
    """Signed sup-distance for the bifurcation diagram.

    Uses the strict signed distance along ordered branches; if the
    difference changes sign (possible off the ordered regimes) the sign
    of the dominant deviation is used instead.
    """
    try:
        return signed_distance(u, ref)
    except OrderingViolationError:
        diff = u.values - ref.values
        k = int(np.argmax(np.abs(diff)))
        return math.copysign(float(np.abs(diff).max()), diff[k])


def _verify_point(op: DiscreteOperator, f: GridFunction, u: GridFunction,
                  rep: SolveReport) -> None:
    resid = float(np.abs(op.apply_flat(u.values) - f.values).max())
    if resid > rep.tol:
        raise RegimeError(f"emitted point fails fresh residual check: {resid} > {rep.tol}")


def _chord_convexity_violation(points: list[BranchPoint]) -> float:
    """Worst pointwise violation of u(t_mid) <= chord interpolation."""
    worst = 0.0
    for i in range(1, len(points) - 1):
        p0, p1, p2 = points[i - 1], points[i], points[i + 1]
        w = (p2.t - p1.t) / (p2.t - p0.t)
        chord = p0.u.values * w + p2.u.values * (1.0 - w)
        worst = max(worst, float((p1.u.values - chord).max()))
    return worst


# ---------------------------------------------------------------------------
# 1. strictly subcritical sweep
# ---------------------------------------------------------------------------


def sweep_subcritical(cfg: BranchConfig, ctx: BranchContext | None = None) -> Branch:
    """Sweep the unique decreasing convex solution curve for lam < lam_1^+."""
    ctx = ctx or prepare(cfg)
    if not ctx.eig_plus.lam - ctx.lam > 0:
        raise RegimeError(
            f"subcritical sweep needs lam < lam_1^+ = {ctx.eig_plus.lam}, got {ctx.lam}")
    op = ctx.operator()
    ts = np.linspace(cfg.t_range[0], cfg.t_range[1], cfg.n_samples)
    points: list[BranchPoint] = []
    u_prev: GridFunction | None = None
    for t in ts:
        f = ctx.rhs(float(t))
        u, rep = solve(op, f, u0=u_prev)
        if not rep.converged:
            u, rep, _ = solve_with_starts(op, f, ctx.ladder(abs(t) + 1.0))
            if u is None:
                raise RegimeError(f"solve failed at t={t} in subcritical regime: {rep.status}")
        _verify_point(op, f, u, rep)
        points.append(BranchPoint(float(t), u, 0.0, _tags(u), rep))
        u_prev = u

    ref = points[len(points) // 2].u
    for p in points:
        p.d = diagram_coordinate(p.u, ref)

    scale = 1.0 + max(sup_norm(p.u) for p in points)
    strict_gap = min(
        float((points[i].u.values - points[i + 1].u.values).min())
        for i in range(len(points) - 1)
    )
    lipschitz = max(
        sup_norm(points[i].u - points[i + 1].u) / (points[i + 1].t - points[i].t)
        for i in range(len(points) - 1)
    )
    convexity = _chord_convexity_violation(points)
    ds = [p.d for p in points]
    d_monotone = all(ds[i] > ds[i + 1] for i in range(len(ds) - 1))
    diagnostics = {
        "strict_decrease_gap": strict_gap,
        "lipschitz": lipschitz,
        "convexity_violation": convexity,
        "convexity_slack": 1e-9 * scale,
        "d_monotone": d_monotone,
    }
    if cfg.strict:
        if strict_gap <= 0:
            raise RegimeError(f"branch not strictly decreasing (gap {strict_gap})")
        if convexity > 1e-9 * scale:
            raise RegimeError(f"midpoint convexity violated by {convexity}")
        if not d_monotone:
            raise RegimeError("signed distance not strictly monotone along the branch")
    return Branch(points, ref, ctx.lam, diagnostics)


# ---------------------------------------------------------------------------
# 2. critical-parameter detection at resonance
# ---------------------------------------------------------------------------


def _richardson(boundaries: list[float], width: float) -> float:
    if len(boundaries) < 3:
        return boundaries[-1]
    m2, m1, m0 = boundaries[-3], boundaries[-2], boundaries[-1]
    d0 = m1 - m2
    d1 = m0 - m1
    if abs(d0) <= 5.0 * width or abs(d1) >= abs(d0):
        return m0
    r = d1 / d0
    if not 0.05 < r < 0.95:
        return m0
    return m0 + d1 * r / (1.0 - r)


def locate_tstar_resonance(cfg: BranchConfig, sign: str,
                           ctx: BranchContext | None = None) -> CriticalReport:
    """Bracket the critical t* at lam = lam_1^(sign) via the eps ladder.

    At each gap eps_k the problem is solved off resonance and bisection
    separates blown-up from bounded responses; the boundary sequence is
    extrapolated over the ladder.
    """
    ctx = ctx or prepare(cfg)
    if ctx.is_degenerate:
        raise RegimeError(
            "family is spectrally degenerate (lam_1^+ ~= lam_1^-); resonance "
            "modes are refused for such families")
    if sign not in ("+", "-"):
        raise ConfigurationError("sign must be '+' or '-'")
    lam_star = ctx.eig_plus.lam if sign == "+" else ctx.eig_minus.lam
    phi_dir = ctx.eig_plus.phi if sign == "+" else ctx.eig_minus.phi
    t_lo0, t_hi0 = cfg.t_range

    boundaries: list[float] = []
    widths: list[float] = []
    evidence: list[tuple] = []
    level_tables: list[dict] = []

    for eps in cfg.resonance_seq:
        lam_k = lam_star - eps if sign == "+" else lam_star + eps
        op_k = ctx.operator(lam_k)
        tau = min(1e7, 1.0 / (10.0 * math.sqrt(eps)))
        params = SolveParams(blowup_norm=max(1e8, 1e4 * tau))
        solutions: list[tuple[float, GridFunction]] = []

        def classify(t: float) -> tuple[bool, float, float, bool]:
            f = ctx.rhs(t)
            starts: list[GridFunction | None] = []
            if solutions:
                nearest = min(solutions, key=lambda st: abs(st[0] - t))
                starts.append(nearest[1])
            starts.append(None)
            if sign == "-":
                starts.append(phi_dir * (0.5 * tau))
                starts.append(phi_dir * (2.0 * tau))
            best = None
            for s in starts:
                u, rep = solve(op_k, f, params=params,
                               u0=s if isinstance(s, GridFunction) else None)
                if rep.converged:
                    best = (u, rep, False)
                    break
                if rep.status == DIVERGED and best is None:
                    best = (u, rep, True)
            if best is None:
                # no convergence, no clear blow-up: resonant side, flagged
                return True, float("nan"), float("nan"), True
            u, rep, diverged = best
            norm = sup_norm(u)
            cosine = direction_cosine(u, phi_dir)
            if rep.converged:
                solutions.append((t, u))
            blow = norm >= tau and cosine >= 0.99
            if diverged:
                blow = blow or cosine >= 0.99
            return blow, norm, cosine, diverged

        lo, hi = t_lo0, t_hi0
        if len(boundaries) >= 2:
            span = max(10.0 * abs(boundaries[-1] - boundaries[-2]), 1e-3)
            lo_c = max(t_lo0, boundaries[-1] - span)
            hi_c = min(t_hi0, boundaries[-1] + span)
            blow_lo = classify(lo_c)[0]
            blow_hi = classify(hi_c)[0]
            if blow_lo and not blow_hi:
                lo, hi = lo_c, hi_c
        blow_lo, norm_lo, cos_lo, _ = classify(lo)
        blow_hi, norm_hi, cos_hi, _ = classify(hi)
        if not blow_lo or blow_hi:
            raise BracketError(
                f"t_range does not straddle the critical value at eps={eps}: "
                f"low {'blow' if blow_lo else 'bounded'}, high "
                f"{'blow' if blow_hi else 'bounded'}")
        last_blow = (lo, norm_lo, cos_lo)
        width_target = max(1e-10, 1e-6 * math.sqrt(eps))
        for _ in range(60):
            if hi - lo <= width_target:
                break
            mid = 0.5 * (lo + hi)
            blow, norm, cosine, _ = classify(mid)
            if blow:
                lo = mid
                last_blow = (mid, norm, cosine)
            else:
                hi = mid
        boundaries.append(0.5 * (lo + hi))
        widths.append(hi - lo)
        evidence.append((eps, last_blow[0], last_blow[1], last_blow[2]))
        level_tables.append({"eps": eps, "boundary": boundaries[-1],
                             "width": widths[-1], "tau": tau})

    # the boundary approaches t* from the blow-up side; the asymptotic tail
    # must be monotone within bracket tolerance
    tail = min(len(boundaries), 5)
    for i in range(len(boundaries) - tail, len(boundaries) - 1):
        if i < 0:
            continue
        slack = widths[i] + widths[i + 1] + 1e-12
        if boundaries[i + 1] < boundaries[i] - slack:
            raise UnstableDetectionError(
                "classification boundary non-monotone over the gap ladder",
                evidence=level_tables)

    t_hat = _richardson(boundaries, widths[-1])
    halfw = max(3.0 * widths[-1], abs(t_hat - boundaries[-1]),
                0.75 * abs(boundaries[-1] - boundaries[-2]) if len(boundaries) > 1 else 0.0,
                1e-9)
    kind = "ResonancePlus" if sign == "+" else "ResonanceMinus"
    return CriticalReport(
        t_star=t_hat,
        bracket=(t_hat - halfw, t_hat + halfw),
        kind=kind,
        blowup_evidence=evidence,
        diagnostics={"boundaries": boundaries, "widths": widths,
                     "levels": level_tables, "lam_star": lam_star},
    )


# ---------------------------------------------------------------------------
# 3. branch structure at resonance
# ---------------------------------------------------------------------------


def _uniqueness_probe(op: DiscreteOperator, f: GridFunction, ctx: BranchContext,
                      scale: float, tol_gap: float) -> dict:
    """Solve from distant starts; all converged solutions must agree."""
    starts = [ctx.eig_plus.phi * (-0.01 * scale), ctx.eig_plus.phi * (-20.0 * scale),
              mixed_mode(ctx.grid) * scale, ctx.grid.zeros()]
    sols = []
    for s in starts:
        u, rep = solve(op, f, u0=s)
        if rep.converged:
            sols.append(u)
    if len(sols) < 2:
        return {"converged_starts": len(sols), "agree": len(sols) == 1, "max_gap": 0.0}
    gap = max(sup_norm(a - b) for a in sols for b in sols)
    return {"converged_starts": len(sols), "agree": gap <= tol_gap, "max_gap": gap}


def uniqueness_probe_at(cfg: BranchConfig, t: float, lam: float | None = None,
                        ctx: BranchContext | None = None) -> dict:
    """Public distant-start agreement probe at one parameter value."""
    ctx = ctx or prepare(cfg)
    op = ctx.operator(ctx.lam if lam is None else lam)
    f = ctx.rhs(t)
    params = SolveParams()
    tol_gap = 10.0 * params.guard_tol(params.resolve_tol(sup_norm(f)),
                                      op.matrix_scale(), 1.0 + abs(t))
    return _uniqueness_probe(op, f, ctx, 1.0 + abs(t) + sup_norm(ctx.h), tol_gap)


def trace_resonant_branch(cfg: BranchConfig, sign: str, t_star: float,
                          ctx: BranchContext | None = None,
                          bracket_halfwidth: float = 1e-4) -> Branch:
    """Sample the solution curve at exact resonance above t*.

    sign '+': warm sweep down to t* with uniqueness probes, then the
    bounded/unbounded dichotomy is classified; in the bounded case the
    limit u* is returned with a ray check (u* + s*phi_1^+ solves the t*
    equation within a tolerance tied to the t* bracket width).

    sign '-': the bounded sector t > t* is swept; near t* the large-norm
    negative sector is probed with eigen-direction ladders (negativity of
    large solutions, interior decay, and a ray check as evidence).
    """
    ctx = ctx or prepare(cfg)
    if ctx.is_degenerate:
        raise RegimeError("resonance tracing refused for spectrally degenerate families")
    lam = ctx.eig_plus.lam if sign == "+" else ctx.eig_minus.lam
    op = ctx.operator(lam)
    phi_plus = ctx.eig_plus.phi
    phi_minus = ctx.eig_minus.phi
    t_max = cfg.t_range[1]
    if t_max <= t_star + 1.0:
        raise ConfigurationError("t_range must extend at least 1.0 above t_star")

    margins = [m for m in (2.0 ** (-j) for j in range(0, 11)) if t_star + m < t_max]
    outer = np.linspace(t_max, t_star + 1.0, max(cfg.n_samples, 5))
    ts_desc = sorted(set(list(outer) + [t_star + m for m in margins]), reverse=True)

    points: list[BranchPoint] = []
    probes: dict[float, dict] = {}
    u_prev = None
    scale0 = 1.0 + abs(t_max) + sup_norm(ctx.h)
    for t in ts_desc:
        f = ctx.rhs(float(t))
        u, rep = solve(op, f, u0=u_prev)
        if not rep.converged:
            u, rep, _ = solve_with_starts(op, f, ctx.ladder(scale0))
            if u is None:
                if sign == "-":
                    # bounded sector may be unreachable this close to t*
                    continue
                raise RegimeError(f"resonant sweep failed at t={t}: {rep.status}")
        _verify_point(op, f, u, rep)
        points.append(BranchPoint(float(t), u, 0.0, _tags(u), rep))
        u_prev = u
        if sign == "+" and t >= t_star + 0.05 and len(probes) < 6:
            probes[float(t)] = _uniqueness_probe(op, f, ctx, scale0, 10.0 * rep.tol)

    points.sort(key=lambda p: p.t)
    ref_t = 1.0 + t_star
    ref = min(points, key=lambda p: abs(p.t - ref_t)).u
    for p in points:
        p.d = diagram_coordinate(p.u, ref)

    diagnostics: dict = {"uniqueness_probes": probes, "t_star": t_star}

    near = [p for p in points if p.t <= t_star + margins[0] + 1e-12]
    norms_near = [(p.t - t_star, sup_norm(p.u)) for p in near]
    diagnostics["near_norms"] = norms_near

    if sign == "+":
        small = [p for p in points if p.t - t_star <= 2.0 * margins[-1]]
        big = [p for p in points if p.t - t_star >= 0.4]
        if small:
            u_star = small[0].u
            m_last = small[0].t - t_star
            lip = 0.0
            if len(points) > 1:
                q = points[1]
                lip = sup_norm(points[0].u - q.u) / max(q.t - points[0].t, 1e-300)
            ray_tol = 2.0 * (bracket_halfwidth + m_last * max(lip, 1.0)) + 1e-8
            ray = {}
            for s in (1.0, 2.0, 5.0):
                cand = u_star + phi_plus * s
                resid = float(np.abs(op.apply_flat(cand.values) - ctx.rhs(t_star).values).max())
                ray[s] = resid
            bounded = sup_norm(u_star) <= 10.0 * (1.0 + max(sup_norm(p.u) for p in big)) \
                if big else True
            if bounded and all(r <= ray_tol for r in ray.values()):
                diagnostics["alternative"] = "ii"
                diagnostics["u_star_norm"] = sup_norm(u_star)
                diagnostics["u_star"] = u_star
            elif not bounded and direction_cosine(u_star, phi_plus) >= 0.99 \
                    and u_star.min() > 0:
                diagnostics["alternative"] = "i"
            else:
                diagnostics["alternative"] = "open"
            diagnostics["ray_residuals"] = ray
            diagnostics["ray_tol"] = ray_tol
            # the dichotomy is only settled for the asymmetric-weight kind
            # with homogeneous h; elsewhere the label is evidence, not a
            # certificate
            diagnostics["alternative_certified"] = (
                ctx.family.kind == "fucik" and sup_norm(ctx.h) == 0.0
                and diagnostics["alternative"] == "ii")
    else:
        # unbounded negative sector: eigen-direction ladder at the smallest
        # bounded margin; large solutions must be negative with interior decay
        anchor = points[0].u if points else ctx.grid.zeros()
        ladder_stats = []
        ray = {}
        lip = 0.0
        if len(points) > 1:
            lip = sup_norm(points[0].u - points[1].u) / max(points[1].t - points[0].t, 1e-300)
        ray_tol = 2.0 * (bracket_halfwidth + (points[0].t - t_star) * max(lip, 1.0)) + 1e-8 \
            if points else 1e-4
        for s in (1.0, 2.0, 5.0, 50.0):
            cand = anchor + phi_minus * s
            resid = float(np.abs(op.apply_flat(cand.values) - ctx.rhs(t_star).values).max())
            ray[s] = resid
            ladder_stats.append({
                "s": s,
                "norm": sup_norm(cand),
                "negative": cand.max() < 0,
                "interior_max": interior_max(cand),
            })
        diagnostics["ray_residuals"] = ray
        diagnostics["ray_tol"] = ray_tol
        diagnostics["negative_sector"] = ladder_stats
        # non-existence probe below / existence above the critical value
        census_below = basin_census(op, ctx.rhs(t_star - 0.5), ctx.ladder(scale0))
        census_above = basin_census(op, ctx.rhs(t_star + 0.5),
                                    ctx.ladder(scale0) + ([points[0].u] if points else []))
        diagnostics["nonexistence_below"] = len(census_below) == 0
        diagnostics["existence_above"] = len(census_above) >= 1

    # ordering and convexity along the swept (unique/minimal) part
    ordered = points if sign == "+" else [p for p in points if p.t >= t_star + 0.05]
    gaps = [float((ordered[i].u.values - ordered[i + 1].u.values).min())
            for i in range(len(ordered) - 1)]
    diagnostics["strict_decrease_gap"] = min(gaps) if gaps else float("nan")
    diagnostics["convexity_violation"] = _chord_convexity_violation(ordered)
    scale = 1.0 + max((sup_norm(p.u) for p in ordered), default=0.0)
    diagnostics["convexity_slack"] = 1e-9 * scale
    if cfg.strict and sign == "+":
        if gaps and min(gaps) <= 0:
            raise RegimeError("resonant branch lost strict ordering")
        if diagnostics["convexity_violation"] > diagnostics["convexity_slack"]:
            raise RegimeError("resonant branch lost midpoint convexity")
        bad = [t for t, pr in probes.items() if not pr["agree"]]
        if bad:
            raise RegimeError(f"uniqueness probe failed at t={bad}")
    return Branch(points, ref, lam, diagnostics)


# ---------------------------------------------------------------------------
# 4. fold regime: minimal branch + continuation
# ---------------------------------------------------------------------------


def _negative_subsolution(ctx: BranchContext, op: DiscreteOperator, t: float,
                          params: SolveParams) -> GridFunction:
    """Negative solution of (F+lam)[v] = max(t,1)*phi + h^+, scaled to a
    certified discrete subsolution below the solution set."""
    rhs = ctx.eig_plus.phi * max(t, 1.0) + GridFunction(
        ctx.grid, np.maximum(ctx.h.values, 0.0), check_finite=False)
    starts = [eigen_bump(ctx.grid) * (-s) for s in (1.0, 10.0, 100.0)]
    v, rep, _ = solve_with_starts(op, rhs, starts, params=params)
    if v is None or v.max() > 1e-12 * (1.0 + sup_norm(v)):
        raise FoldTraceError(f"could not construct the negative barrier at t={t}")
    f = ctx.rhs(t)
    k = 2.0
    for _ in range(40):
        u0 = v * k
        slack = 1e-10 * (1.0 + sup_norm(u0))
        if float((op.apply_flat(u0.values) - f.values).min()) >= -slack:
            return u0
        k *= 2.0
    raise FoldTraceError("subsolution scaling did not certify")


def _monotone_minimal(ctx: BranchContext, op: DiscreteOperator, t: float,
                      u0: GridFunction, params: SolveParams,
                      max_fp: int = 1000) -> GridFunction | None:
    """Increasing fixed-point iteration from a subsolution.

    Returns the minimal solution above u0, or None if the iterates blow
    up (no solution at this t)."""
    s0 = ctx.family.max_zeroth + max(ctx.lam, 0.0) + 1.0
    op_proper = ctx.operator(ctx.lam - s0)
    f = ctx.rhs(t)
    u = u0
    tol_fp = params.resolve_tol(sup_norm(f))
    for _ in range(max_fp):
        rhs = f - u * s0
        w, rep = solve(op_proper, rhs, params=params, u0=u)
        if rep.status == DIVERGED or (rep.converged and sup_norm(w) > params.blowup_norm):
            return None
        if not rep.converged:
            raise FoldTraceError(f"proper inner solve failed at t={t}: {rep.status}")
        drop = float((w.values - u.values).min())
        if drop < -1e-8 * (1.0 + sup_norm(u)):
            raise FoldTraceError(
                f"monotone iteration decreased by {drop} at t={t}; "
                "subsolution not certified or properness shift broken")
        step = sup_norm(w - u)
        u = w
        resid = float(np.abs(op.apply_flat(u.values) - f.values).max())
        if step <= 10.0 * tol_fp and resid <= params.guard_tol(
                tol_fp, op.matrix_scale(), sup_norm(u)):
            return u
    return None


def trace_fold(cfg: BranchConfig, ctx: BranchContext | None = None
               ) -> tuple[Branch, Branch, CriticalReport]:
    """Minimal branch, second branch and the fold for lam between the
    eigenvalues."""
    ctx = ctx or prepare(cfg)
    if not (ctx.eig_plus.lam < ctx.lam < ctx.eig_minus.lam):
        raise RegimeError(
            f"fold regime needs lam_1^+ < lam < lam_1^-; got {ctx.eig_plus.lam} "
            f"/ {ctx.lam} / {ctx.eig_minus.lam}")
    op = ctx.operator()
    params = SolveParams()
    t_min, t_max = cfg.t_range

    # minimal branch downward until existence fails
    ts_desc = np.linspace(t_max, t_min, cfg.n_samples)
    minimal_points: list[BranchPoint] = []
    fail_bracket = None
    for t in ts_desc:
        u0 = _negative_subsolution(ctx, op, float(t), params)
        u = _monotone_minimal(ctx, op, float(t), u0, params)
        if u is None:
            prev_t = minimal_points[-1].t if minimal_points else float(t)
            fail_bracket = (float(t), prev_t)
            break
        resid = float(np.abs(op.apply_flat(u.values) - ctx.rhs(float(t)).values).max())
        rep = SolveReport(CONVERGED, 0, [resid], [], params.guard_tol(
            params.resolve_tol(sup_norm(ctx.rhs(float(t)))), op.matrix_scale(), sup_norm(u)),
            resid)
        minimal_points.append(BranchPoint(float(t), u, 0.0, _tags(u), rep))
    minimal_points.sort(key=lambda p: p.t)

    if not minimal_points:
        raise FoldTraceError("no minimal solutions found anywhere in t_range")

    # second branch by continuation from the top
    t_top = minimal_points[-1].t
    f_top = ctx.rhs(t_top)
    gap_tol = max(1e-4, 10.0 * params.resolve_tol(sup_norm(f_top)))
    census = basin_census(op, f_top, ctx.ladder(1.0 + abs(t_top)), params=params,
                          distinct_gap=gap_tol)
    u_min_top = minimal_points[-1].u
    others = [c for c in census if sup_norm(c[0] - u_min_top) > gap_tol]
    if not others:
        raise FoldTraceError("no second solution found at the top of the range")
    u2 = max(others, key=lambda c: sup_norm(c[0] - u_min_top))[0]

    # reference strictly below both branches makes the d coordinate a
    # decreasing parameter along the folded path
    ref_tilde = u_min_top - eigen_bump(ctx.grid) * (0.05 * (1.0 + sup_norm(u_min_top)))
    second_points, fold_t, fold_step, fold_idx = _continue_in_d(
        ctx, op, u2, t_top, ref_tilde, params=params, n_samples=cfg.n_samples)

    t_star = fold_t
    halfw = max(fold_step, 1e-8)
    consistent = True
    if fail_bracket is not None:
        spacing = (t_max - t_min) / (cfg.n_samples - 1)
        consistent = fail_bracket[0] - spacing <= t_star <= fail_bracket[1] + spacing
        if not consistent:
            # continuation and existence scan disagree; widen to cover both
            halfw = max(halfw, abs(t_star - 0.5 * (fail_bracket[0] + fail_bracket[1]))
                        + 0.5 * (fail_bracket[1] - fail_bracket[0]))
    report = CriticalReport(
        t_star=t_star,
        bracket=(t_star - halfw, t_star + halfw),
        kind="Fold",
        diagnostics={
            "minimal_fail_bracket": fail_bracket,
            "continuation_fold": fold_t,
            "fold_step": fold_step,
            "consistent_with_existence_scan": consistent,
        },
    )

    ref = minimal_points[len(minimal_points) // 2].u
    for p in minimal_points:
        p.d = diagram_coordinate(p.u, ref)
    for p in second_points:
        p.d = diagram_coordinate(p.u, ref)

    minimal = Branch(minimal_points, ref, ctx.lam, {
        "convexity_violation": _chord_convexity_violation(minimal_points),
        "strict_decrease_gap": min(
            (float((minimal_points[i].u.values - minimal_points[i + 1].u.values).min())
             for i in range(len(minimal_points) - 1)), default=float("nan")),
    })
    # points kept in continuation (path) order so the folded polyline renders
    second = Branch(second_points, ref, ctx.lam, {"fold_index": fold_idx})

    # distinctness above the fold, on the pre-fold segment of the path
    margin = 0.1 * (t_max - t_star)
    gaps = []
    for p in second_points[: fold_idx + 1]:
        if p.t < t_star + margin:
            continue
        q = min(minimal_points, key=lambda m: abs(m.t - p.t))
        if abs(q.t - p.t) < 0.5 * (t_max - t_min) / cfg.n_samples:
            gaps.append(sup_norm(p.u - q.u))
    minimal.diagnostics["branch_gap_min"] = min(gaps) if gaps else float("nan")
    fold_point = second_points[fold_idx]
    q_near = min(minimal_points, key=lambda m: abs(m.t - fold_point.t))
    minimal.diagnostics["merge_gap"] = sup_norm(fold_point.u - q_near.u)
    if cfg.strict and gaps and min(gaps) <= gap_tol:
        raise FoldTraceError("branches not distinct above the fold")
    return minimal, second, report


def _continue_in_d(ctx: BranchContext, op: DiscreteOperator, u_start: GridFunction,
                   t_start: float, ref_tilde: GridFunction, params: SolveParams,
                   n_samples: int, max_steps: int = 600):
    """Continuation of (u, t) parameterized by the distance coordinate
    d(u) = ||u - ref||, which is strictly decreasing along the ordered
    folded path; the fold is where t reverses direction.

    Tangent-based arclength cannot turn the fold when the two legs are
    nearly antiparallel in (u, t) (sup-type problems produce genuine
    corners); pinning d instead keeps every corrector system square and
    well-posed on both legs. Returns (points, fold_t, step_at_fold,
    fold_index).
    """
    grid = ctx.grid
    N = grid.num_nodes
    phi = ctx.eig_plus.phi.values
    ref = ref_tilde.values

    def residual(u_flat, t):
        return op.apply_flat(u_flat) - (t * phi + ctx.h.values)

    def merit(u_flat, t, c):
        return float(np.abs(residual(u_flat, t)).max()) + abs(c) * op.matrix_scale()

    def correct(u0, t0, d_target):
        """Semismooth Newton on [F_h residual; (u - ref)[argmax] - d_target]."""
        u, t = u0.copy(), t0
        for _ in range(20):
            diff = u - ref
            jstar = int(np.argmax(diff))
            r = residual(u, t)
            c = diff[jstar] - d_target
            scale = 1.0 + np.abs(u).max()
            if np.abs(r).max() <= params.guard_tol(1e-10 * scale, op.matrix_scale(),
                                                   np.abs(u).max()) \
                    and abs(c) <= 1e-11 * scale:
                return u, t, True
            L = op.linearize(u).matrix
            e = np.zeros(N)
            e[jstar] = 1.0
            top = scipy.sparse.hstack([L, scipy.sparse.csc_matrix(-phi[:, None])])
            bot = scipy.sparse.hstack([scipy.sparse.csc_matrix(e[None, :]),
                                       scipy.sparse.csc_matrix([[0.0]])])
            J = scipy.sparse.vstack([top, bot]).tocsc()
            try:
                delta = scipy.sparse.linalg.splu(J).solve(-np.concatenate([r, [c]]))
            except RuntimeError:
                return u, t, False
            if not np.all(np.isfinite(delta)):
                return u, t, False
            base = merit(u, t, c)
            theta = 1.0
            accepted = False
            for _ in range(8):
                u_try = u + theta * delta[:N]
                t_try = t + theta * delta[N]
                c_try = (u_try - ref)[int(np.argmax(u_try - ref))] - d_target
                if merit(u_try, t_try, c_try) < base * (1.0 - 1e-4) or base == 0.0:
                    u, t = u_try, t_try
                    accepted = True
                    break
                theta *= 0.5
            if not accepted:
                return u, t, False
        return u, t, False

    def emit(u_flat, tv):
        gf = GridFunction(grid, u_flat, check_finite=False)
        resid = float(np.abs(residual(u_flat, tv)).max())
        tol = params.guard_tol(1e-10 * (1.0 + np.abs(u_flat).max()),
                               op.matrix_scale(), np.abs(u_flat).max())
        rep0 = SolveReport(CONVERGED, 0, [resid], [], tol, resid)
        return BranchPoint(tv, gf, 0.0, _tags(gf), rep0)

    u = u_start.values.copy()
    t = t_start
    d_cur = float((u - ref).max())
    d_floor = 1e-3 * d_cur
    dstep = d_cur / (3.0 * max(n_samples, 4))
    dstep0 = dstep
    out_points = [emit(u, t)]
    fold_t = t
    fold_idx = 0
    step_at_fold = dstep
    fold_seen = False
    u_prev, t_prev, d_prev = u, t, d_cur

    for _ in range(max_steps):
        if d_cur - d_floor <= 1e-14:
            break
        trial = min(dstep, d_cur - d_floor)
        ok = False
        while trial >= 1e-8 * max(d_cur, 1.0):
            d_target = d_cur - trial
            # secant predictor in d
            if d_prev != d_cur:
                w = trial / (d_cur - d_prev)
                u_pred = u + (u - u_prev) * w
                t_pred = t + (t - t_prev) * w
            else:
                u_pred, t_pred = u, t
            u_new, t_new, ok = correct(u_pred, t_pred, d_target)
            if ok:
                break
            trial *= 0.5
        if not ok:
            raise FoldTraceError(
                "continuation step failed below minimal step size",
                partial=out_points)
        u_prev, t_prev, d_prev = u, t, d_cur
        u, t, d_cur = u_new, t_new, d_target
        out_points.append(emit(u, t))
        if t < fold_t:
            fold_t = t
            fold_idx = len(out_points) - 1
            step_at_fold = max(abs(t - t_prev), 1e-9)
        elif t > fold_t:
            fold_seen = True
        dstep = min(trial * 1.3, 3.0 * dstep0)
        if fold_seen and t > fold_t + 0.3 * (t_start - fold_t):
            break
        if t > t_start + 1e-9:
            break

    # refine the fold: ternary search on the piecewise-smooth map d -> t(d)
    if fold_seen and 0 < fold_idx < len(out_points) - 1:
        ds = [float((p.u.values - ref).max()) for p in out_points]
        d_hi, d_lo = ds[fold_idx - 1], ds[fold_idx + 1]
        anchor = (out_points[fold_idx].u.values.copy(), out_points[fold_idx].t,
                  ds[fold_idx])
        evals = [anchor]

        def t_of(d_target):
            near = min(evals, key=lambda e: abs(e[2] - d_target))
            u_new, t_new, ok = correct(near[0], near[1], d_target)
            if not ok:
                return None
            evals.append((u_new, t_new, d_target))
            return t_new

        a, b = d_lo, d_hi
        refine_failed = False
        for _ in range(60):
            if b - a <= 1e-12 * max(1.0, d_hi):
                break
            m1 = a + (b - a) / 3.0
            m2 = b - (b - a) / 3.0
            t1, t2 = t_of(m1), t_of(m2)
            if t1 is None or t2 is None:
                refine_failed = True
                break
            if t1 <= t2:
                b = m2
            else:
                a = m1
        if not refine_failed and evals:
            best = min(evals, key=lambda e: e[1])
            if best[1] <= fold_t:
                fold_t = best[1]
                near = sorted(evals, key=lambda e: abs(e[2] - best[2]))[:5]
                spread = max(e[1] for e in near) - fold_t
                step_at_fold = max(spread, 1e-10)
                out_points.insert(fold_idx + 1, emit(best[0], best[1]))
                fold_idx = fold_idx + 1
    return out_points, fold_t, step_at_fold, fold_idx


# ---------------------------------------------------------------------------
# 5. slightly-negative second eigenvalue: global existence sweep
# ---------------------------------------------------------------------------


def sweep_negative_regime(cfg: BranchConfig, ctx: BranchContext | None = None,
                          window_fraction: float = 0.05) -> Branch:
    """Sweep lam in (lam_1^-, lam_1^- + eps): solutions exist for every t;
    checks negativity for very negative t, growth of sup u for large t and
    the antimaximum property."""
    ctx = ctx or prepare(cfg)
    lam = ctx.lam
    window = window_fraction * max(abs(ctx.eig_minus.lam), 1.0)
    if not (ctx.eig_minus.lam < lam <= ctx.eig_minus.lam + window):
        raise RegimeError(
            f"negative-regime sweep needs lam in (lam_1^-, lam_1^- + {window:.3g}]; "
            f"lam_1^- = {ctx.eig_minus.lam}, got {lam}")
    op = ctx.operator()
    gap = lam - ctx.eig_minus.lam
    ts = np.linspace(cfg.t_range[0], cfg.t_range[1], cfg.n_samples)
    points: list[BranchPoint] = []
    u_prev = None
    for t in ts:
        f = ctx.rhs(float(t))
        starts: list[GridFunction | None] = [u_prev, None]
        scale = (1.0 + abs(float(t))) / max(gap, 1e-3)
        starts += [ctx.eig_plus.phi * (-scale), ctx.eig_plus.phi * scale,
                   ctx.eig_plus.phi * (-0.1 * scale), mixed_mode(ctx.grid) * (0.1 * scale)]
        u = None
        for s in starts:
            if s is None:
                cand, rep = solve(op, f)
            else:
                cand, rep = solve(op, f, u0=s)
            if rep.converged:
                u = cand
                break
        if u is None:
            raise RegimeError(
                f"existence failed at t={t} inside the negative regime: {rep.status}")
        _verify_point(op, f, u, rep)
        points.append(BranchPoint(float(t), u, 0.0, _tags(u), rep))
        u_prev = u

    ref = points[len(points) // 2].u
    for p in points:
        p.d = diagram_coordinate(p.u, ref)

    # negativity threshold scan from below
    t_minus_probe = None
    for p in points:
        if "Negative" in p.regime_tags:
            t_minus_probe = p.t
        else:
            break

    # growth probes
    sup_top = points[-1].u.max()
    mid_idx = min(range(len(points)), key=lambda i: abs(points[i].t - points[-1].t / 2.0))
    sup_mid = points[mid_idx].u.max()

    # antimaximum: forcing -k*phi^+ must produce strictly negative solutions
    antimax = {}
    for k in (0.5, 1.0, 2.0):
        f = ctx.eig_plus.phi * (-k)
        u, rep, _ = solve_with_starts(op, f, [ctx.grid.zeros(),
                                              ctx.eig_plus.phi * (-k / max(gap, 1e-3)),
                                              ctx.eig_plus.phi * (-1.0)])
        antimax[k] = {"converged": u is not None,
                      "max": u.max() if u is not None else float("nan")}
    diagnostics = {
        "t_minus_probe": t_minus_probe,
        "sup_top": sup_top,
        "sup_mid": sup_mid,
        "interior_max": {p.t: interior_max(p.u) for p in points},
        "antimaximum": antimax,
        "gap": gap,
    }
    if cfg.strict:
        h_scale = 1.0 + sup_norm(ctx.h)
        if cfg.t_range[0] <= -5.0 * h_scale and (
                t_minus_probe is None or points[0].u.max() >= 0):
            raise RegimeError("very negative t did not produce a negative solution")
        if cfg.t_range[1] >= 10.0 * h_scale and not (sup_top > sup_mid > 0):
            raise RegimeError("sup u growth probe failed for large t")
        bad = [k for k, st in antimax.items()
               if not st["converged"] or not st["max"] < 0]
        if bad:
            raise RegimeError(f"antimaximum check failed for k={bad}")
    return Branch(points, ref, lam, diagnostics)


# ---------------------------------------------------------------------------
# 6. uniqueness probe when both eigenvalues are slightly negative
# ---------------------------------------------------------------------------


def make_teo6_family(grid: Grid, base: ControlFamily | None = None
                     ) -> tuple[ControlFamily, float]:
    """Tune an asymmetric family so both principal eigenvalues fall in
    (-d0, 0), with d0 half the half-domain eigenvalue gap.

    For zeroth-order shifts the subdomain gap does not depend on the
    shift itself, so the gap is computed once from the base family.
    """
    from .eigen import subdomain_gap
    from .grids import half_domain_mask

    base = base or ControlFamily.laplacian(dim=grid.dim)
    lam_full, lam_sub = subdomain_gap(base, grid, half_domain_mask(grid))
    alpha = lam_sub - lam_full
    d0 = alpha / 2.0
    fam = ControlFamily.fucik(lam_full + d0 / 2.0, lam_full + d0 / 4.0, dim=grid.dim)
    return fam, d0


def uniqueness_probe_teo6(family: ControlFamily, grid: Grid, n_starts: int = 8,
                          n_rhs: int = 10, seed: int = 0, d0: float | None = None,
                          eigen_params: EigenParams | None = None) -> dict:
    """Battery of right-hand sides x start basins; every converged basin per
    f must agree when both eigenvalues sit in (-d0, 0)."""
    ep = principal_eigen(family, grid, "+", params=eigen_params)
    em = principal_eigen(family, grid, "-", params=eigen_params)
    if d0 is None:
        _, d0 = make_teo6_family(grid)
    if not (-d0 <= ep.lam <= em.lam < 0):
        raise RegimeError(
            f"probe needs -d0 <= lam_1^+ <= lam_1^- < 0; got ({ep.lam}, {em.lam}), d0={d0}")
    op = DiscreteOperator(family, grid, 0.0)
    rng = np.random.default_rng(seed)
    phi = ep.phi
    mixed = mixed_mode(grid)

    def starts(scale: float) -> list[GridFunction]:
        base = [grid.zeros(), phi * scale, phi * (-scale), phi * (10 * scale),
                phi * (-10 * scale), mixed * scale]
        while len(base) < n_starts:
            base.append(GridFunction(grid, rng.standard_normal(grid.num_nodes) * scale,
                                     check_finite=False))
        return base[:n_starts]

    cases = []
    coords = grid.coords()
    a0, b0 = grid.extents[0]
    xhat = (coords[:, 0] - a0) / (b0 - a0)
    for j in range(n_rhs):
        t = float(rng.uniform(-3.0, 3.0))
        amps = rng.standard_normal(4)
        hv = sum(amps[m] * np.sin((m + 2) * np.pi * xhat) for m in range(4))
        cases.append(("seeded", phi * t + GridFunction(grid, hv, check_finite=False)))
    cases.append(("phi_plus_h", phi * 1.0 + GridFunction(
        grid, 0.5 * np.sin(2 * np.pi * xhat), check_finite=False)))
    cases.append(("zero", grid.zeros()))
    cases.append(("large_positive_const", grid.ones() * 50.0))
    cases.append(("large_negative_const", grid.ones() * (-50.0)))

    params = SolveParams()
    results = []
    all_unique = True
    for label, f in cases:
        scale = 1.0 + sup_norm(f) / max(abs(ep.lam), 1.0)
        tol_gap = 10.0 * params.resolve_tol(sup_norm(f))
        census = basin_census(op, f, starts(scale), params=params, distinct_gap=tol_gap)
        entry = {
            "label": label,
            "n_solutions": len(census),
            "converged_starts": sum(c[1] for c in census),
            "sup": sup_norm(census[0][0]) if census else float("nan"),
            "max": census[0][0].max() if census else float("nan"),
            "min": census[0][0].min() if census else float("nan"),
        }
        if len(census) != 1 or entry["converged_starts"] < 2:
            all_unique = False
        results.append(entry)
    return {"d0": d0, "lam_plus": ep.lam, "lam_minus": em.lam,
            "cases": results, "all_unique": all_unique}
