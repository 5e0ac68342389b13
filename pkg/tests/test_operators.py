import numpy as np
import pytest

from conftest import discrete_lam1
from hjbranch.errors import AdmissibilityError, ConfigurationError
from hjbranch.grids import GridFunction, build_grid, sup_norm
from hjbranch.operators import (
    ControlCoeffs,
    ControlFamily,
    DiscreteOperator,
    MirroredOperator,
    check_h0_h3,
    gradient_magnitude_flat,
    pucci_envelope_flat,
)

FAMILIES = {
    "linear": ControlFamily.laplacian(dim=1),
    "fucik": ControlFamily.fucik(5.0),
    "pucci_plus": ControlFamily.pucci_plus(1.0, 2.0),
    "pucci_minus": ControlFamily.pucci_minus(1.0, 2.0),
    "finite_sup": ControlFamily.finite_sup([
        ((1.0,), (0.0,), -1.0),
        ((1.5,), (0.5,), 0.5),
        ((2.0,), (-0.5,), -0.25),
    ]),
}


def test_apply_laplacian_matches_discrete_eigenvalue(grid199, laplacian, sine, lam_h199):
    op = DiscreteOperator(laplacian, grid199, 0.0)
    out = op.apply(sine)
    # the three-point stencil reproduces the closed-form eigenvalue exactly
    assert sup_norm(out - sine * (-lam_h199)) <= 1e-10
    # and approximates -pi^2 u at second order
    h = grid199.h[0]
    assert sup_norm(out - sine * (-np.pi**2)) <= np.pi**4 * h**2 / 12 * sup_norm(sine) * 1.01


def test_apply_zero_is_zero(grid199):
    for fam in FAMILIES.values():
        op = DiscreteOperator(fam, grid199, 3.7)
        assert sup_norm(op.apply(grid199.zeros())) == 0.0


def test_pucci_plus_on_concave_function(grid199, sine):
    # sampled sine has strictly negative second differences
    op = DiscreteOperator(ControlFamily.pucci_plus(1.0, 2.0), grid199, 0.0)
    lap = DiscreteOperator(ControlFamily.laplacian(dim=1), grid199, 0.0)
    assert sup_norm(op.apply(sine) - lap.apply(sine)) <= 1e-12


def test_linearize_linear_family_single_control(grid199, laplacian):
    op = DiscreteOperator(laplacian, grid199, 0.0)
    rng = np.random.default_rng(1)
    u = GridFunction(grid199, rng.standard_normal(grid199.num_nodes))
    lin = op.linearize(u)
    assert np.all(lin.active == 0)


def test_linearize_fucik_positive_branch(grid199, sine, lam_h199):
    fam = ControlFamily.fucik(7.0)
    op = DiscreteOperator(fam, grid199, 0.0)
    lin = op.linearize(sine)
    assert np.all(lin.active == 0)  # b_plus branch everywhere since u > 0
    # stencil = Laplacian + b*I on the diagonal
    h = grid199.h[0]
    assert lin.diag == pytest.approx([-2.0 / h**2 + 7.0] * grid199.num_nodes)


def test_linearize_pucci_sign_split(grid199):
    x = grid199.coords()[:, 0]
    u = GridFunction(grid199, np.sin(2 * np.pi * x))  # convex and concave halves
    op = DiscreteOperator(ControlFamily.pucci_plus(1.0, 2.0), grid199, 0.0)
    lin = op.linearize(u)
    d2 = op._second_diffs(u.values)[0]
    assert np.array_equal(lin.active == 1, d2 >= 0)


def test_linearize_matches_apply(grid199):
    rng = np.random.default_rng(3)
    for fam in FAMILIES.values():
        op = DiscreteOperator(fam, grid199, 0.35)
        u = rng.standard_normal(grid199.num_nodes)
        lin = op.linearize(u)
        assert np.abs(lin.matvec(u) - op.apply_flat(u)).max() <= 1e-9


def test_monotone_stencil_offdiagonals(grid199):
    rng = np.random.default_rng(4)
    for fam in FAMILIES.values():
        op = DiscreteOperator(fam, grid199, 0.0)
        u = rng.standard_normal(grid199.num_nodes)
        assert op.linearize(u).offdiag_min() >= 0.0


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_check_h0_h3(grid199, name):
    report = check_h0_h3(DiscreteOperator(FAMILIES[name], grid199, 0.0),
                         trials=100, seed=11)
    assert report.passed
    assert max(report.homogeneity, report.additivity,
               report.midpoint, report.sandwich) <= 1e-10


def test_homogeneity_exact_on_positive_eigenfunction(grid199, sine):
    op = DiscreteOperator(ControlFamily.fucik(5.0), grid199, 0.0)
    out1 = op.apply_flat(2.0 * sine.values)
    out2 = 2.0 * op.apply_flat(sine.values)
    assert np.abs(out1 - out2).max() <= 1e-12 * (1 + np.abs(out2).max())


def test_pucci_plus_dominates_members(grid199):
    rng = np.random.default_rng(5)
    fam = FAMILIES["finite_sup"]
    env = fam.envelope
    op = DiscreteOperator(fam, grid199, 0.0)
    for _ in range(20):
        u = rng.standard_normal(grid199.num_nodes)
        bound = pucci_envelope_flat(op, u, "+") \
            + env.gamma * gradient_magnitude_flat(grid199, u) + env.delta * np.abs(u)
        assert (op.apply_flat(u) - bound).max() <= 1e-10 * (1 + np.abs(bound).max())


def test_mirror_of_pucci_plus_is_pucci_minus(grid199):
    rng = np.random.default_rng(6)
    plus = DiscreteOperator(ControlFamily.pucci_plus(1.0, 2.0), grid199, 0.0)
    minus = DiscreteOperator(ControlFamily.pucci_minus(1.0, 2.0), grid199, 0.0)
    mir = MirroredOperator(plus)
    u = rng.standard_normal(grid199.num_nodes)
    assert np.abs(mir.apply_flat(u) - minus.apply_flat(u)).max() <= 1e-10


def test_2d_mixed_diffusion_rejected():
    with pytest.raises(ConfigurationError):
        ControlCoeffs.make([[1.0, 0.3], [0.3, 1.0]], [0.0, 0.0], 0.0)


def test_2d_apply_diagonal_family():
    g = build_grid(2, ((0.0, 1.0), (0.0, 1.0)), (31, 31))
    lam2 = 2.0 * discrete_lam1(31)
    coords = g.coords()
    u = GridFunction(g, np.sin(np.pi * coords[:, 0]) * np.sin(np.pi * coords[:, 1]))
    op = DiscreteOperator(ControlFamily.laplacian(dim=2), g, 0.0)
    assert sup_norm(op.apply(u) - u * (-lam2)) <= 1e-9


def test_cfl_admissibility_enforced(grid199):
    # drift too strong for the spacing: gamma/(2 h) exceeds lam/h^2
    fam = ControlFamily.finite_sup([((1.0,), (5000.0,), 0.0)])
    with pytest.raises(AdmissibilityError):
        DiscreteOperator(fam, grid199, 0.0)


def test_fucik_requires_ordered_weights():
    with pytest.raises(ConfigurationError):
        ControlFamily.fucik(1.0, 2.0)


def test_envelope_must_dominate_controls():
    from hjbranch.operators import Envelope
    ctrl = ControlCoeffs.make((3.0,), (0.0,), 0.0)
    with pytest.raises(ConfigurationError):
        ControlFamily("linear", (ctrl,), Envelope(1.0, 2.0, 0.0, 0.0), 1)


def test_argmax_tie_breaks_to_lowest_index(grid199):
    # at u = 0 every control ties; the first control must win everywhere
    op = DiscreteOperator(ControlFamily.fucik(5.0), grid199, 0.0)
    assert np.all(op.linearize(grid199.zeros()).active == 0)


def test_apply_grid_mismatch(grid199):
    from hjbranch.errors import UsageError
    other = build_grid(1, (0.0, 1.0), 99)
    op = DiscreteOperator(ControlFamily.laplacian(dim=1), grid199, 0.0)
    with pytest.raises(UsageError):
        op.apply(other.zeros())
