import numpy as np
import pytest

from conftest import discrete_lam1
from hjbranch.errors import ConfigurationError, RegimeError
from hjbranch.grids import GridFunction, sup_norm
from hjbranch.branches import (
    AT_LAM_MINUS,
    AT_LAM_PLUS,
    BranchConfig,
    diagram_coordinate,
    interior_max,
    locate_tstar_resonance,
    make_teo6_family,
    prepare,
    sweep_negative_regime,
    sweep_subcritical,
    trace_fold,
    trace_resonant_branch,
    uniqueness_probe_at,
    uniqueness_probe_teo6,
)
from hjbranch.operators import ControlFamily


@pytest.fixture(scope="module")
def fucik5_cfg(grid199):
    return BranchConfig(ControlFamily.fucik(5.0), grid199, 0.0, (-5.0, 5.0), 21)


def test_config_validation(grid199):
    fam = ControlFamily.fucik(5.0)
    with pytest.raises(ConfigurationError):
        BranchConfig(fam, grid199, 0.0, (1.0, -1.0))
    with pytest.raises(ConfigurationError):
        BranchConfig(fam, grid199, 0.0, (0.0, 1.0), n_samples=1)
    with pytest.raises(ConfigurationError):
        BranchConfig(fam, grid199, "at_lam_middle", (0.0, 1.0))


def test_h_fun_multiple_of_eigenfunction_rejected(grid199, sine):
    cfg = BranchConfig(ControlFamily.fucik(5.0), grid199, 0.0, (-1.0, 1.0),
                       h_fun=sine * 2.0)
    with pytest.raises(ConfigurationError):
        prepare(cfg)


def test_sweep_subcritical_laplacian_superposition(grid199, laplacian, sine, lam_h199):
    cfg = BranchConfig(laplacian, grid199, 0.0, (-1.0, 1.0), 3)
    branch = sweep_subcritical(cfg)
    for p in branch.points:
        expected = sine * (-p.t / lam_h199)
        assert sup_norm(p.u - expected) <= 1e-10
    mid = branch.points[1]
    assert mid.t == 0.0 and sup_norm(mid.u) <= 1e-12


def test_sweep_subcritical_properties(fucik5_cfg):
    branch = sweep_subcritical(fucik5_cfg)
    d = branch.diagnostics
    assert d["strict_decrease_gap"] > 0
    assert d["convexity_violation"] <= d["convexity_slack"]
    assert d["d_monotone"]
    assert np.isfinite(d["lipschitz"])
    assert branch.points[0].u.min() > 0  # t = -5
    assert branch.points[-1].u.max() < 0  # t = +5
    assert "Positive" in branch.points[0].regime_tags
    assert "Negative" in branch.points[-1].regime_tags


def test_sweep_subcritical_repeated_parameter(grid199):
    cfg = BranchConfig(ControlFamily.fucik(5.0), grid199, 0.0,
                       (1.0, 1.0 + 1e-12), 2)
    branch = sweep_subcritical(cfg)
    assert abs(branch.points[0].d - branch.points[1].d) <= 1e-9


def test_sweep_subcritical_wrong_regime(grid199):
    cfg = BranchConfig(ControlFamily.fucik(15.0), grid199, 0.0, (-1.0, 1.0))
    with pytest.raises(RegimeError):
        sweep_subcritical(cfg)  # lam_1^+ < 0 here


def test_locate_tstar_plus_homogeneous(grid199, lam_h199):
    fam = ControlFamily.fucik(lam_h199)
    cfg = BranchConfig(fam, grid199, AT_LAM_PLUS, (-3.0, 3.0), 11)
    crit = locate_tstar_resonance(cfg, "+")
    assert crit.kind == "ResonancePlus"
    lo, hi = crit.bracket
    assert lo < 0.0 < hi
    assert hi - lo <= 1e-3
    for eps, t, norm, cos in crit.blowup_evidence:
        assert cos >= 0.99


def test_locate_tstar_refuses_degenerate_family(grid199, laplacian):
    cfg = BranchConfig(laplacian, grid199, AT_LAM_PLUS, (-3.0, 3.0))
    with pytest.raises(RegimeError):
        locate_tstar_resonance(cfg, "+")


def test_trace_resonant_plus(grid199, lam_h199):
    fam = ControlFamily.fucik(lam_h199)
    cfg = BranchConfig(fam, grid199, AT_LAM_PLUS, (-3.0, 12.0), 11)
    ctx = prepare(cfg)
    branch = trace_resonant_branch(cfg, "+", 0.0, ctx, bracket_halfwidth=1e-4)
    d = branch.diagnostics
    assert d["alternative"] == "ii"
    assert d["alternative_certified"]
    assert d["u_star_norm"] <= 1e-3
    assert all(v <= d["ray_tol"] for v in d["ray_residuals"].values())
    assert all(p["agree"] for p in d["uniqueness_probes"].values())
    top = max(branch.points, key=lambda p: p.t)
    assert top.u.max() < 0


def test_uniqueness_probe_at(grid199, lam_h199):
    fam = ControlFamily.fucik(lam_h199)
    cfg = BranchConfig(fam, grid199, AT_LAM_PLUS, (-3.0, 12.0), 11)
    ctx = prepare(cfg)
    for t in (0.5, 1.0, 5.0):
        probe = uniqueness_probe_at(cfg, t, ctx=ctx)
        assert probe["converged_starts"] >= 2
        assert probe["agree"]


def test_trace_fold_two_branches(grid199, lam_h199, sine):
    cfg = BranchConfig(ControlFamily.fucik(15.0), grid199, 0.0, (-1.0, 3.0), 17)
    minimal, second, crit = trace_fold(cfg)
    assert crit.kind == "Fold"
    assert crit.bracket[0] < 0.0 < crit.bracket[1] or abs(crit.t_star) < 1e-6
    # minimal branch at its top sample matches the negative closed form
    top = minimal.points[-1]
    assert sup_norm(top.u - sine * (-top.t / lam_h199)) <= 1e-8
    assert minimal.diagnostics["branch_gap_min"] > 1e-4
    assert minimal.diagnostics["merge_gap"] <= 1e-6
    assert minimal.diagnostics["strict_decrease_gap"] > 0


def test_trace_fold_wrong_regime(grid199):
    cfg = BranchConfig(ControlFamily.fucik(5.0), grid199, 0.0, (-1.0, 3.0))
    with pytest.raises(RegimeError):
        trace_fold(cfg)


def test_locate_tstar_minus(grid199, lam_h199):
    fam = ControlFamily.fucik(lam_h199 + 4.0)
    x = grid199.coords()[:, 0]
    cfg = BranchConfig(fam, grid199, AT_LAM_MINUS, (-3.0, 3.0), 11,
                       h_fun=GridFunction(grid199, x * (1 - x)))
    crit = locate_tstar_resonance(cfg, "-")
    assert crit.kind == "ResonanceMinus"
    # the all-negative sector is linear here, so t* is the orthogonality value
    phi = np.sin(np.pi * x)
    t0 = -float(np.dot(x * (1 - x), phi) / np.dot(phi, phi))
    assert crit.bracket[0] < t0 < crit.bracket[1]


def test_sweep_negative_regime(grid199, lam_h199):
    fam = ControlFamily.fucik(lam_h199 + 4.0)
    x = grid199.coords()[:, 0]
    cfg = BranchConfig(fam, grid199, AT_LAM_MINUS, (-100.0, 100.0), 21,
                       h_fun=GridFunction(grid199, x * (1 - x)), lam_offset=0.1)
    branch = sweep_negative_regime(cfg)
    d = branch.diagnostics
    assert len(branch.points) == 21
    assert d["sup_top"] > d["sup_mid"] > 0
    assert all(st["max"] < 0 for st in d["antimaximum"].values())
    assert branch.points[0].u.max() < 0  # t = -100


def test_sweep_negative_regime_homogeneous_through_zero(grid199, lam_h199):
    # with h = 0 the sweep passes through the trivial solution at t = 0
    fam = ControlFamily.fucik(lam_h199 + 4.0)
    cfg = BranchConfig(fam, grid199, AT_LAM_MINUS, (-2.0, 2.0), 5,
                       lam_offset=0.1, strict=False)
    branch = sweep_negative_regime(cfg)
    mid = min(branch.points, key=lambda p: abs(p.t))
    assert mid.t == 0.0
    assert sup_norm(mid.u) <= 1e-8


def test_sweep_negative_regime_wrong_lambda(grid199, lam_h199):
    fam = ControlFamily.fucik(lam_h199 + 4.0)
    cfg = BranchConfig(fam, grid199, 0.0, (-10.0, 10.0), 5)
    with pytest.raises(RegimeError):
        sweep_negative_regime(cfg)


def test_make_teo6_family(grid199, lam_h199):
    fam, d0 = make_teo6_family(grid199)
    assert d0 == pytest.approx((discrete_lam1(99, 0.5) - lam_h199) / 2, rel=1e-6)
    bp, bm = fam.fucik_weights
    assert bp == pytest.approx(lam_h199 + d0 / 2, rel=1e-9)
    assert bm == pytest.approx(lam_h199 + d0 / 4, rel=1e-9)


def test_uniqueness_probe_teo6(grid199):
    fam, d0 = make_teo6_family(grid199)
    rep = uniqueness_probe_teo6(fam, grid199, n_starts=8, n_rhs=4, seed=5, d0=d0)
    assert -d0 <= rep["lam_plus"] <= rep["lam_minus"] < 0
    assert rep["all_unique"]
    zero_case = [c for c in rep["cases"] if c["label"] == "zero"][0]
    assert zero_case["sup"] == 0.0
    pos = [c for c in rep["cases"] if c["label"] == "large_positive_const"][0]
    assert pos["min"] > 0  # large positive forcing produces the positive solution
    neg = [c for c in rep["cases"] if c["label"] == "large_negative_const"][0]
    assert neg["max"] < 0


def test_uniqueness_probe_teo6_regime_guard(grid199):
    with pytest.raises(RegimeError):
        uniqueness_probe_teo6(ControlFamily.fucik(5.0), grid199, d0=1.0)


def test_2d_subcritical_sweep():
    from hjbranch.grids import build_grid
    g2 = build_grid(2, ((0.0, 1.0), (0.0, 1.0)), (24, 24))
    cfg = BranchConfig(ControlFamily.fucik(5.0, dim=2), g2, 0.0, (-3.0, 3.0), 7)
    branch = sweep_subcritical(cfg)
    assert branch.diagnostics["strict_decrease_gap"] > 0
    assert branch.diagnostics["convexity_violation"] <= \
        branch.diagnostics["convexity_slack"]


def test_2d_fold():
    from hjbranch.grids import build_grid
    g2 = build_grid(2, ((0.0, 1.0), (0.0, 1.0)), (24, 24))
    # weight above the 2D principal eigenvalue puts lam_1^+ < 0 < lam_1^-
    cfg = BranchConfig(ControlFamily.fucik(25.0, dim=2), g2, 0.0, (-1.0, 3.0), 9)
    minimal, second, crit = trace_fold(cfg)
    assert abs(crit.t_star) <= 1e-6  # homogeneous h folds at the origin
    assert minimal.diagnostics["branch_gap_min"] > 1e-4
    assert minimal.diagnostics["merge_gap"] <= 1e-6


def test_2d_resonance_minus_matches_orthogonality():
    from hjbranch.grids import build_grid
    from hjbranch.eigen import principal_eigen
    g2 = build_grid(2, ((0.0, 1.0), (0.0, 1.0)), (24, 24))
    em = principal_eigen(ControlFamily.fucik(5.0, dim=2), g2, "-")
    fam = ControlFamily.fucik(em.lam + 4.0, dim=2)
    c = g2.coords()
    hf = GridFunction(g2, c[:, 0] * (1 - c[:, 0]) * c[:, 1] * (1 - c[:, 1]))
    cfg = BranchConfig(fam, g2, AT_LAM_MINUS, (-2.0, 2.0), 9, h_fun=hf)
    ctx = prepare(cfg)
    crit = locate_tstar_resonance(cfg, "-", ctx)
    phi = ctx.eig_plus.phi
    t0 = -float(np.dot(hf.values, phi.values) / np.dot(phi.values, phi.values))
    assert crit.bracket[0] < t0 < crit.bracket[1]


def test_resonance_on_genuinely_nonlinear_family(grid199):
    # two-control sup family (distinct diffusions, drift, zeroth terms)
    # shifted so its positive eigenvalue is at the spectral parameter
    base = ControlFamily.finite_sup([((1.0,), (0.0,), 0.0),
                                     ((1.4,), (0.3,), 0.6)])
    x = grid199.coords()[:, 0]
    hf = GridFunction(grid199, 0.4 * np.sin(2 * np.pi * x) + 0.2)
    cfg = BranchConfig(base, grid199, AT_LAM_PLUS, (-5.0, 8.0), 9, h_fun=hf)
    ctx = prepare(cfg)
    crit = locate_tstar_resonance(cfg, "+", ctx)
    assert crit.bracket[1] - crit.bracket[0] <= 1e-2
    halfw = 0.5 * (crit.bracket[1] - crit.bracket[0])
    branch = trace_resonant_branch(cfg, "+", crit.t_star, ctx,
                                   bracket_halfwidth=halfw)
    d = branch.diagnostics
    assert d["alternative"] in ("i", "ii", "open")
    assert not d["alternative_certified"]  # only the settled case certifies
    assert all(p["agree"] for p in d["uniqueness_probes"].values())


def test_diagram_coordinate_fallback(grid199):
    vals = np.zeros(grid199.num_nodes)
    vals[0], vals[3] = 2.0, -1.0
    u = GridFunction(grid199, vals)
    assert diagram_coordinate(u, grid199.zeros()) == 2.0


def test_interior_max_middle_third(grid199):
    x = grid199.coords()[:, 0]
    u = GridFunction(grid199, np.where((x > 0.4) & (x < 0.45), -1.0, -5.0))
    assert interior_max(u) == -1.0
