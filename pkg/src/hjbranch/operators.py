"""Monotone finite-difference discretization of sup-type elliptic operators.

The operator family is F[u] = sup_a { tr(A_a D2u) + b_a . Du + c_a u }
over a finite control list, together with three closed-form kinds:

* ``pucci_plus`` / ``pucci_minus``: axis-wise extremal operators
  sum_i ( Lam (D2_ii u)^+ - lam (D2_ii u)^- ) and its mirror. In 1D this
  is exactly the extremal operator over [lam, Lam]; in 2D it is the
  axis-aligned restriction a five-point stencil can represent.
* ``fucik``: Laplacian plus weights on the positive/negative parts,
  represented internally as a two-control sup family with
  c in {b_plus, b_minus}, which requires b_plus >= b_minus.

Second derivatives use central differences, drift uses upwind
differences, so every control's stencil has nonnegative off-diagonal
weights and the scheme is monotone. A CFL-type admissibility bound is
still enforced at construction so that inadmissible configurations fail
loudly instead of losing comparison.

``pucci_minus`` is an inf-type (concave) operator; it is provided as
the envelope/mirror tool. Algebraic checks run in the orientation that
matches the kind (sub- vs super-additivity).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import (
    AdmissibilityError,
    ConfigurationError,
    PropertyFailureError,
    UsageError,
)
from .grids import Grid, GridFunction, SubdomainMask

CONVEX_KINDS = ("linear", "finite_sup", "fucik", "pucci_plus")
ALL_KINDS = CONVEX_KINDS + ("pucci_minus",)


@dataclass(frozen=True)
class Envelope:
    """Uniform bounds shared by every control: ellipticity interval
    [lam_ell, Lam_ell], drift bound gamma, zeroth-order bound delta."""

    lam_ell: float
    Lam_ell: float
    gamma: float
    delta: float

    def __post_init__(self):
        if not (0 < self.lam_ell <= self.Lam_ell):
            raise ConfigurationError("need 0 < lam_ell <= Lam_ell")
        if self.gamma < 0 or self.delta < 0:
            raise ConfigurationError("gamma and delta must be nonnegative")


@dataclass(frozen=True)
class ControlCoeffs:
    """One linear operator tr(A D2u) + b.Du + c u with constant coefficients."""

    diffusion: tuple[tuple[float, ...], ...]
    drift: tuple[float, ...]
    zeroth: float

    @classmethod
    def make(cls, diffusion, drift, zeroth) -> "ControlCoeffs":
        A = np.atleast_2d(np.asarray(diffusion, dtype=float))
        b = np.atleast_1d(np.asarray(drift, dtype=float))
        if A.shape[0] != A.shape[1] or A.shape[0] != b.size:
            raise ConfigurationError("diffusion/drift dimension mismatch")
        if not np.allclose(A, A.T):
            raise ConfigurationError("diffusion matrix must be symmetric")
        if A.shape[0] == 2 and abs(A[0, 1]) > 0:
            raise ConfigurationError(
                "2D diffusion must be diagonal: the five-point monotone "
                "stencil cannot represent mixed second derivatives"
            )
        if np.any(np.diag(A) <= 0):
            raise ConfigurationError("diffusion must be positive definite")
        return cls(
            tuple(tuple(row) for row in A.tolist()),
            tuple(b.tolist()),
            float(zeroth),
        )

    @property
    def dim(self) -> int:
        return len(self.drift)

    def diag_diffusion(self) -> np.ndarray:
        return np.array([self.diffusion[k][k] for k in range(self.dim)])


@dataclass(frozen=True)
class ControlFamily:
    """A sup-type (or closed-form extremal) operator family."""

    kind: str
    controls: tuple[ControlCoeffs, ...]
    envelope: Envelope
    dim: int
    fucik_weights: tuple[float, float] | None = None
    pucci_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ConfigurationError(f"unknown family kind {self.kind!r}")
        if self.kind in ("linear", "finite_sup", "fucik"):
            if not self.controls:
                raise ConfigurationError("control list must be nonempty")
            for c in self.controls:
                if c.dim != self.dim:
                    raise ConfigurationError("control dimension mismatch")
                diag = c.diag_diffusion()
                if diag.min() < self.envelope.lam_ell - 1e-12 or diag.max() > self.envelope.Lam_ell + 1e-12:
                    raise ConfigurationError("control diffusion escapes the envelope")
                if np.linalg.norm(c.drift) > self.envelope.gamma + 1e-12:
                    raise ConfigurationError("control drift escapes the envelope")
                if abs(c.zeroth) > self.envelope.delta + 1e-12:
                    raise ConfigurationError("control zeroth coefficient escapes the envelope")

    # -- constructors -------------------------------------------------

    @classmethod
    def linear(cls, diffusion=1.0, drift=None, zeroth=0.0, dim=1, envelope=None) -> "ControlFamily":
        if drift is None:
            drift = np.zeros(dim)
        if np.isscalar(diffusion):
            diffusion = np.eye(dim) * float(diffusion)
        ctrl = ControlCoeffs.make(diffusion, drift, zeroth)
        env = envelope or cls._tight_envelope([ctrl])
        return cls("linear", (ctrl,), env, ctrl.dim)

    @classmethod
    def laplacian(cls, dim=1) -> "ControlFamily":
        return cls.linear(diffusion=1.0, dim=dim)

    @classmethod
    def finite_sup(cls, controls, envelope=None) -> "ControlFamily":
        ctrls = tuple(
            c if isinstance(c, ControlCoeffs) else ControlCoeffs.make(*c) for c in controls
        )
        env = envelope or cls._tight_envelope(ctrls)
        return cls("finite_sup", ctrls, env, ctrls[0].dim)

    @classmethod
    def fucik(cls, b_plus: float, b_minus: float = 0.0, dim: int = 1) -> "ControlFamily":
        """Laplacian + b_plus*u^+ + b_minus*u^- with u^- = min(u, 0).

        Equals sup over the two linear operators with c = b_plus and
        c = b_minus, hence convex iff b_plus >= b_minus.
        """
        if b_plus < b_minus:
            raise ConfigurationError("fucik requires b_plus >= b_minus (sup form)")
        eye = np.eye(dim)
        zero = np.zeros(dim)
        ctrls = (
            ControlCoeffs.make(eye, zero, float(b_plus)),
            ControlCoeffs.make(eye, zero, float(b_minus)),
        )
        env = cls._tight_envelope(ctrls)
        return cls("fucik", ctrls, env, dim, fucik_weights=(float(b_plus), float(b_minus)))

    @classmethod
    def pucci_plus(cls, lam_ell: float, Lam_ell: float, dim: int = 1) -> "ControlFamily":
        env = Envelope(float(lam_ell), float(Lam_ell), 0.0, 0.0)
        return cls("pucci_plus", (), env, dim, pucci_bounds=(float(lam_ell), float(Lam_ell)))

    @classmethod
    def pucci_minus(cls, lam_ell: float, Lam_ell: float, dim: int = 1) -> "ControlFamily":
        env = Envelope(float(lam_ell), float(Lam_ell), 0.0, 0.0)
        return cls("pucci_minus", (), env, dim, pucci_bounds=(float(lam_ell), float(Lam_ell)))

    @staticmethod
    def _tight_envelope(ctrls) -> Envelope:
        diags = np.concatenate([c.diag_diffusion() for c in ctrls])
        gamma = max(float(np.linalg.norm(c.drift)) for c in ctrls)
        delta = max(abs(c.zeroth) for c in ctrls)
        return Envelope(float(diags.min()), float(diags.max()), gamma, delta)

    # -- properties ----------------------------------------------------

    @property
    def is_convex(self) -> bool:
        return self.kind != "pucci_minus"

    @property
    def max_zeroth(self) -> float:
        if self.kind in ("pucci_plus", "pucci_minus"):
            return 0.0
        return max(c.zeroth for c in self.controls)

    def mirrored_kind(self) -> str:
        return {"pucci_plus": "pucci_minus", "pucci_minus": "pucci_plus"}.get(self.kind, self.kind)

    def describe(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim, "envelope": vars(self.envelope).copy()}
        if self.kind in ("linear", "finite_sup", "fucik"):
            out["controls"] = [
                {"diffusion": list(map(list, c.diffusion)), "drift": list(c.drift), "zeroth": c.zeroth}
                for c in self.controls
            ]
        if self.fucik_weights is not None:
            out["fucik_weights"] = list(self.fucik_weights)
        if self.pucci_bounds is not None:
            out["pucci_bounds"] = list(self.pucci_bounds)
        return out


# ---------------------------------------------------------------------------
# stencil machinery
# ---------------------------------------------------------------------------


def _neighbor_views(grid: Grid, flat: np.ndarray):
    """Zero-padded neighbour values per axis: list of (plus, minus) flat arrays."""
    U = flat.reshape(grid.shape)
    out = []
    if grid.dim == 1:
        plus = np.empty_like(U)
        minus = np.empty_like(U)
        plus[:-1] = U[1:]
        plus[-1] = 0.0
        minus[1:] = U[:-1]
        minus[0] = 0.0
        out.append((plus.ravel(), minus.ravel()))
    else:
        for ax in range(2):
            plus = np.zeros_like(U)
            minus = np.zeros_like(U)
            if ax == 0:
                plus[:-1, :] = U[1:, :]
                minus[1:, :] = U[:-1, :]
            else:
                plus[:, :-1] = U[:, 1:]
                minus[:, 1:] = U[:, :-1]
            out.append((plus.ravel(), minus.ravel()))
    return out


def _connection_masks(grid: Grid, included: np.ndarray | None):
    """Per axis: boolean flat arrays marking nodes with a living + neighbour."""
    masks = []
    if grid.dim == 1:
        n = grid.n[0]
        conn = np.ones(n, dtype=bool)
        conn[-1] = False
    else:
        nx, ny = grid.n
        idx = np.arange(nx * ny)
        conn_x = (idx // ny) < nx - 1
        conn_y = (idx % ny) < ny - 1
    if grid.dim == 1:
        axis_conns = [conn]
    else:
        axis_conns = [conn_x, conn_y]
    strides = _axis_strides(grid)
    for ax, conn in enumerate(axis_conns):
        conn = conn.copy()
        if included is not None:
            s = strides[ax]
            ok = np.zeros_like(conn)
            ok[conn] = included[np.nonzero(conn)[0]] & included[np.nonzero(conn)[0] + s]
            conn = ok
        masks.append(conn)
    return masks


def _axis_strides(grid: Grid) -> list[int]:
    if grid.dim == 1:
        return [1]
    return [grid.n[1], 1]


class Linearization:
    """Frozen-control linear map L with L u = apply(op, u) at the base point.

    Provides a direct solve: banded in 1D, sparse LU in 2D. Excluded
    (masked) nodes carry identity rows.
    """

    def __init__(self, grid: Grid, included: np.ndarray | None, diag: np.ndarray,
                 axis_links: list[tuple[np.ndarray, np.ndarray]], active: np.ndarray):
        self.grid = grid
        self.included = included
        self.active = active
        self.diag = diag
        self.axis_links = axis_links  # per axis (up_coef, low_coef), ungated
        self._conn = _connection_masks(grid, included)
        self._matrix = None
        self._banded = None
        self._lu = None

    @property
    def matrix(self) -> scipy.sparse.csr_matrix:
        if self._matrix is None:
            n = self.grid.num_nodes
            strides = _axis_strides(self.grid)
            diags = [self.diag]
            offsets = [0]
            for ax, (up, low) in enumerate(self.axis_links):
                s = strides[ax]
                conn = self._conn[ax]
                up_g = np.where(conn, up, 0.0)
                low_g = np.where(conn, low, 0.0)
                # offset +s: entry (k, k+s) = up_g[k]; diags wants length n-s
                diags.append(up_g[: n - s])
                offsets.append(s)
                # offset -s: entry (k+s, k) = low_g[k+s] gated by conn[k]
                low_row = low[s:]
                diags.append(np.where(conn[: n - s], low_row, 0.0))
                offsets.append(-s)
            self._matrix = scipy.sparse.diags(diags, offsets, format="csr")
        return self._matrix

    def matvec(self, flat: np.ndarray) -> np.ndarray:
        return self.matrix.dot(flat)

    def offdiag_min(self) -> float:
        """Smallest off-diagonal stencil weight (monotonicity check)."""
        worst = np.inf
        for ax, (up, low) in enumerate(self.axis_links):
            conn = self._conn[ax]
            if conn.any():
                worst = min(worst, float(up[conn].min()))
                s = _axis_strides(self.grid)[ax]
                worst = min(worst, float(low[s:][conn[: self.grid.num_nodes - s]].min()))
        return 0.0 if worst is np.inf else worst

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self.included is not None:
            rhs = np.where(self.included, rhs, 0.0)
        if self.grid.dim == 1:
            if self._banded is None:
                n = self.grid.num_nodes
                up, low = self.axis_links[0]
                conn = self._conn[0]
                ab = np.zeros((3, n))
                ab[1] = self.diag
                up_g = np.where(conn, up, 0.0)
                low_g = np.zeros(n)
                low_g[1:] = np.where(conn[:-1], low[1:], 0.0)
                ab[0, 1:] = up_g[:-1]
                ab[2, :-1] = low_g[1:]
                self._banded = ab
            sol = scipy.linalg.solve_banded((1, 1), self._banded, rhs)
        else:
            if self._lu is None:
                self._lu = scipy.sparse.linalg.splu(self.matrix.tocsc())
            sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise scipy.linalg.LinAlgError("non-finite solution from direct solve")
        return sol


@dataclass(frozen=True)
class DiscreteOperator:
    """F_h + shift, the discretized family plus a spectral shift lambda*u."""

    family: ControlFamily
    grid: Grid
    shift: float = 0.0
    mask: SubdomainMask | None = None
    _incl: np.ndarray | None = field(init=False, default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.family.dim != self.grid.dim:
            raise ConfigurationError("family and grid dimension mismatch")
        env = self.family.envelope
        h = np.array(self.grid.h)
        # CFL-type admissibility: diffusion must dominate the drift at this h.
        if min(env.lam_ell / h**2) < env.gamma / (2.0 * h.min()) - 1e-15:
            raise AdmissibilityError(
                f"stencil not monotone: min(lam/h^2)={min(env.lam_ell / h**2):.3g} "
                f"< gamma/(2 min h)={env.gamma / (2 * h.min()):.3g}"
            )
        if self.mask is not None and self.mask.grid != self.grid:
            raise ConfigurationError("mask grid mismatch")
        object.__setattr__(self, "_incl", None if self.mask is None else self.mask.included)

    # -- evaluation ----------------------------------------------------

    def _masked(self, flat: np.ndarray) -> np.ndarray:
        if self._incl is None:
            return flat
        return np.where(self._incl, flat, 0.0)

    def _second_diffs(self, flat: np.ndarray) -> list[np.ndarray]:
        views = _neighbor_views(self.grid, flat)
        return [
            (plus - 2.0 * flat + minus) / self.grid.h[ax] ** 2
            for ax, (plus, minus) in enumerate(views)
        ]

    def _control_values(self, flat: np.ndarray) -> np.ndarray:
        """(n_controls, N) array of L_a u over the control list."""
        views = _neighbor_views(self.grid, flat)
        h = self.grid.h
        vals = np.empty((len(self.family.controls), flat.size))
        for j, ctrl in enumerate(self.family.controls):
            acc = ctrl.zeroth * flat
            diag = ctrl.diag_diffusion()
            for ax, (plus, minus) in enumerate(views):
                acc = acc + diag[ax] * (plus - 2.0 * flat + minus) / h[ax] ** 2
                b = ctrl.drift[ax]
                if b > 0:
                    acc = acc + b * (plus - flat) / h[ax]
                elif b < 0:
                    acc = acc + b * (flat - minus) / h[ax]
            vals[j] = acc
        return vals

    def apply_flat(self, flat: np.ndarray) -> np.ndarray:
        flat = self._masked(np.asarray(flat, dtype=float))
        kind = self.family.kind
        if kind in ("linear", "finite_sup", "fucik"):
            vals = self._control_values(flat)
            out = vals.max(axis=0) + self.shift * flat
        else:
            lam, Lam = self.family.pucci_bounds
            acc = np.zeros_like(flat)
            for d2 in self._second_diffs(flat):
                pos = np.maximum(d2, 0.0)
                neg = np.maximum(-d2, 0.0)
                if kind == "pucci_plus":
                    acc += Lam * pos - lam * neg
                else:
                    acc += lam * pos - Lam * neg
            out = acc + self.shift * flat
        if self._incl is not None:
            out = np.where(self._incl, out, 0.0)
        return out

    def apply(self, u: GridFunction) -> GridFunction:
        if u.grid != self.grid:
            raise UsageError("grid mismatch between operator and argument")
        return GridFunction(self.grid, self.apply_flat(u.values), check_finite=False)

    def linearize(self, u: GridFunction | np.ndarray) -> Linearization:
        """Linear stencil of the argmax control at each node.

        Ties select the lowest control index; the extremal kinds select
        the upper-coefficient branch of (D2u)^+ when the second
        difference is exactly zero.
        """
        flat = self._masked(u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float))
        N = flat.size
        h = self.grid.h
        kind = self.family.kind
        if kind in ("linear", "finite_sup", "fucik"):
            vals = self._control_values(flat)
            active = np.argmax(vals, axis=0)
            diff_sel = np.empty((self.grid.dim, N))
            drift_sel = np.empty((self.grid.dim, N))
            zero_sel = np.empty(N)
            diffs = np.array([c.diag_diffusion() for c in self.family.controls])
            drifts = np.array([list(c.drift) for c in self.family.controls])
            zeros_ = np.array([c.zeroth for c in self.family.controls])
            for ax in range(self.grid.dim):
                diff_sel[ax] = diffs[active, ax]
                drift_sel[ax] = drifts[active, ax]
            zero_sel = zeros_[active]
        else:
            lam, Lam = self.family.pucci_bounds
            d2s = self._second_diffs(flat)
            diff_sel = np.empty((self.grid.dim, N))
            drift_sel = np.zeros((self.grid.dim, N))
            zero_sel = np.zeros(N)
            active = np.zeros(N, dtype=int)
            for ax, d2 in enumerate(d2s):
                upper = d2 >= 0.0
                if kind == "pucci_plus":
                    diff_sel[ax] = np.where(upper, Lam, lam)
                else:
                    diff_sel[ax] = np.where(upper, lam, Lam)
                active = active | (upper.astype(int) << ax)
        diag = np.full(N, self.shift)
        diag += zero_sel
        axis_links = []
        for ax in range(self.grid.dim):
            w = diff_sel[ax]
            b = drift_sel[ax]
            bp = np.maximum(b, 0.0)
            bm = np.minimum(b, 0.0)
            up = w / h[ax] ** 2 + bp / h[ax]
            low = w / h[ax] ** 2 - bm / h[ax]
            diag += -2.0 * w / h[ax] ** 2 - (bp - bm) / h[ax]
            axis_links.append((up, low))
        if self._incl is not None:
            diag = np.where(self._incl, diag, 1.0)
        return Linearization(self.grid, self._incl, diag, axis_links, active)

    def with_shift(self, shift: float) -> "DiscreteOperator":
        return DiscreteOperator(self.family, self.grid, shift, self.mask)

    def matrix_scale(self) -> float:
        """Rough inf-norm of any linearization, for conditioning-aware tolerances."""
        env = self.family.envelope
        h = np.array(self.grid.h)
        return float(np.sum(4.0 * env.Lam_ell / h**2 + 2.0 * env.gamma / h) + env.delta + abs(self.shift))


class MirroredOperator:
    """G + shift with G[u] = -F[-u]; shares grid, mask and solve machinery.

    The mirrored operator of a sup family is the corresponding inf
    family; its positive principal eigenpair coincides with the negative
    one of the original operator. Used as an independent test oracle.
    """

    def __init__(self, inner: DiscreteOperator):
        self.inner = inner
        self.family = inner.family
        self.grid = inner.grid
        self.mask = inner.mask
        self.shift = inner.shift
        self._incl = inner._incl

    def apply_flat(self, flat: np.ndarray) -> np.ndarray:
        # -(F + s)(-u) = -F(-u) + s*u: the shift mirrors onto itself.
        return -self.inner.apply_flat(-np.asarray(flat, dtype=float))

    def apply(self, u: GridFunction) -> GridFunction:
        return GridFunction(self.grid, self.apply_flat(u.values), check_finite=False)

    def linearize(self, u: GridFunction | np.ndarray) -> Linearization:
        flat = u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)
        return self.inner.linearize(-flat)

    def with_shift(self, shift: float) -> "MirroredOperator":
        return MirroredOperator(self.inner.with_shift(shift))

    def matrix_scale(self) -> float:
        return self.inner.matrix_scale()


# ---------------------------------------------------------------------------
# envelope evaluations and algebraic property checks
# ---------------------------------------------------------------------------


def pucci_envelope_flat(op: DiscreteOperator, flat: np.ndarray, side: str) -> np.ndarray:
    """Extremal envelope M+/- of the family's (lam, Lam) bounds, same stencil."""
    env = op.family.envelope
    kind = "pucci_plus" if side == "+" else "pucci_minus"
    fam = ControlFamily(kind, (), Envelope(env.lam_ell, env.Lam_ell, 0.0, 0.0),
                        op.grid.dim, pucci_bounds=(env.lam_ell, env.Lam_ell))
    return DiscreteOperator(fam, op.grid, 0.0, op.mask).apply_flat(flat)


def gradient_magnitude_flat(grid: Grid, flat: np.ndarray) -> np.ndarray:
    """Discrete |Du|: per axis the larger of |forward|, |backward| difference,
    combined in the Euclidean norm. Chosen so that the Lipschitz sandwich
    holds exactly for upwinded stencils."""
    views = _neighbor_views(grid, flat)
    acc = np.zeros_like(flat)
    for ax, (plus, minus) in enumerate(views):
        fwd = np.abs(plus - flat) / grid.h[ax]
        bwd = np.abs(flat - minus) / grid.h[ax]
        acc += np.maximum(fwd, bwd) ** 2
    return np.sqrt(acc)


@dataclass
class PropertyReport:
    """Max scaled violations of the exact stencil algebra over random trials."""

    kind: str
    trials: int
    homogeneity: float
    additivity: float
    midpoint: float
    sandwich: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return max(self.homogeneity, self.additivity, self.midpoint, self.sandwich) <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "trials": self.trials,
            "homogeneity": self.homogeneity,
            "additivity": self.additivity,
            "midpoint": self.midpoint,
            "sandwich": self.sandwich,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def check_h0_h3(op: DiscreteOperator, trials: int = 100, seed: int = 0,
                tolerance: float = 1e-10) -> PropertyReport:
    """Verify positive 1-homogeneity, the difference bound, the midpoint
    inequality and the extremal-envelope sandwich on seeded random pairs.

    Convex kinds are checked as sup-forms; the inf-type ``pucci_minus``
    is checked with the mirrored (super-additive) orientation.
    """
    if trials < 1:
        raise UsageError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    N = op.grid.num_nodes
    env = op.family.envelope
    convex = op.family.is_convex
    worst = dict(h=0.0, a=0.0, m=0.0, s=0.0)
    for _ in range(trials):
        u = rng.standard_normal(N)
        v = rng.standard_normal(N)
        t = abs(rng.standard_normal()) + 0.1
        k = rng.uniform(0.0, 1.0)
        Fu = op.apply_flat(u)
        Fv = op.apply_flat(v)
        scale = 1.0 + max(np.abs(Fu).max(), np.abs(Fv).max())
        # H0
        viol = np.abs(op.apply_flat(t * u) - t * Fu).max() / (1.0 + t * np.abs(Fu).max())
        worst["h"] = max(worst["h"], viol)
        # difference bound / additivity
        Fd = op.apply_flat(u - v)
        gap = (Fu - Fv) - Fd
        viol = (gap if convex else -gap).max() / scale
        worst["a"] = max(worst["a"], max(viol, 0.0))
        # midpoint (convexity or concavity per kind)
        Fm = op.apply_flat(k * u + (1.0 - k) * v)
        gap = Fm - (k * Fu + (1.0 - k) * Fv)
        viol = (gap if convex else -gap).max() / scale
        worst["m"] = max(worst["m"], max(viol, 0.0))
        # envelope sandwich (holds for every uniformly elliptic kind)
        d = u - v
        upper = pucci_envelope_flat(op, d, "+") + env.gamma * gradient_magnitude_flat(op.grid, d) \
            + env.delta * np.abs(d) + op.shift * d
        lower = pucci_envelope_flat(op, d, "-") - env.gamma * gradient_magnitude_flat(op.grid, d) \
            - env.delta * np.abs(d) + op.shift * d
        viol = max(((Fu - Fv) - upper).max(), (lower - (Fu - Fv)).max()) / scale
        worst["s"] = max(worst["s"], max(viol, 0.0))
    report = PropertyReport(op.family.kind, trials, worst["h"], worst["a"],
                            worst["m"], worst["s"], tolerance)
    if not report.passed:
        raise PropertyFailureError(
            f"stencil algebra violated beyond {tolerance:g}: {report.as_dict()}", report
        )
    return report
