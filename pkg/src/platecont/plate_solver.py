"""Finite difference solver for the anisotropic plate equation.

The weak form integral of (stiffness : hessian(u)) . hessian(test) is
discretized as D^T W D on a uniform grid: second derivatives along the
axes use the classical three point stencils at nodes, while the mixed
derivative uses the compact four point stencil at cell centers.  For a
tensor without shear-normal coupling this reproduces the classical
13-point discrete bilaplacian in the isotropic case, and the assembled
matrix is symmetric positive semi-definite by construction for every
strongly convex tensor.  Tensors with shear-normal coupling split the
mixed-derivative weight between a node term (wide cross stencil) and
the cell term through a Schur complement so each local quadratic form
stays PSD.

Boundary conditions fix the two outermost node layers of the domain
mask: value on both for the clamped problem, value plus a one sided
normal increment for a prescribed Dirichlet pair, exact samples for
manufactured solutions.  Disks are mask approximated; certificates only
ever integrate over interior balls where the staircase error is absent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.ndimage import binary_erosion

from .elasticity import ElasticityTensorSpec, evaluate_tensor
from .fields import Disk, Grid, Rect, ScalarField, integrate


@dataclass
class PlateProblem:
    """Plate problem description.

    domain: ("disk", R) or ("rect", a, b) for the rectangle
    (-a/2, a/2) x (-b/2, b/2).
    bc: ("clamped",), ("manufactured", u_exact) with a callable sampled
    on the fixed layers, or ("dirichlet_pair", g1, g2) with callables of
    the boundary point giving the value and the outward normal
    derivative.
    rhs: None or a triple (f, F, Fmat) of callables (any may be None):
    scalar source, vector field and matrix field of the divergence-form
    right hand side.
    winkler: optional nonnegative reaction coefficient k(x).
    epsilon: declared size of the right hand side in the normalized
    sense; checked against the measured norms when given.
    """

    spec: ElasticityTensorSpec
    domain: tuple
    bc: tuple = ("clamped",)
    rhs: tuple | None = None
    winkler: object = None
    epsilon: float | None = None
    thickness_factor: float = 1.0

    def radius(self) -> float:
        if self.domain[0] == "disk":
            return float(self.domain[1])
        return 0.5 * float(max(self.domain[1], self.domain[2]))

    def region(self):
        if self.domain[0] == "disk":
            return Disk(0.0, 0.0, float(self.domain[1]))
        _, a, b = self.domain
        return Rect(-a / 2, a / 2, -b / 2, b / 2)

    def make_grid(self, n: int) -> Grid:
        if self.domain[0] == "disk":
            return Grid.square(n, float(self.domain[1]))
        _, a, b = self.domain
        return Grid.square(n, max(a, b) / 2)


@dataclass
class SolveReport:
    """Solution field plus solver diagnostics."""

    field: ScalarField
    residual: float
    energy: float
    h2_norm: float
    h: float
    iterations: int = 0
    meta: dict = field(default_factory=dict)


def _erode(mask: np.ndarray, layers: int) -> np.ndarray:
    if layers == 0:
        return mask
    return binary_erosion(mask, structure=np.ones((3, 3), bool), iterations=layers)


def _sparse_stencil(grid: Grid, rows_mask, offsets, coeffs):
    """Sparse operator with one row per node, stencil rows where masked."""
    nx, ny = grid.nx, grid.ny
    ii, jj = np.nonzero(rows_mask)
    rows = ii * ny + jj
    data, r_idx, c_idx = [], [], []
    for (di, dj), c in zip(offsets, coeffs):
        r_idx.append(rows)
        c_idx.append((ii + di) * ny + (jj + dj))
        data.append(np.full(len(rows), c))
    n = nx * ny
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(r_idx), np.concatenate(c_idx))),
        shape=(n, n),
    )


def _hessian_operators(grid: Grid, energy_mask):
    h2 = grid.h**2
    dxx = _sparse_stencil(grid, energy_mask, [(-1, 0), (0, 0), (1, 0)], [1 / h2, -2 / h2, 1 / h2])
    dyy = _sparse_stencil(grid, energy_mask, [(0, -1), (0, 0), (0, 1)], [1 / h2, -2 / h2, 1 / h2])
    dxy_wide = _sparse_stencil(
        grid,
        energy_mask,
        [(1, 1), (1, -1), (-1, 1), (-1, -1)],
        [0.25 / h2, -0.25 / h2, -0.25 / h2, 0.25 / h2],
    )
    gx = _sparse_stencil(grid, energy_mask, [(-1, 0), (1, 0)], [-0.5 / grid.h, 0.5 / grid.h])
    gy = _sparse_stencil(grid, energy_mask, [(0, -1), (0, 1)], [-0.5 / grid.h, 0.5 / grid.h])
    return dxx, dyy, dxy_wide, gx, gy


def _cell_cross_operator(grid: Grid, cell_mask):
    """Compact mixed derivative at cell centers (one row per cell)."""
    nx, ny = grid.nx, grid.ny
    h2 = grid.h**2
    ii, jj = np.nonzero(cell_mask)
    rows = ii * (ny - 1) + jj
    n_cells = (nx - 1) * (ny - 1)
    data, r_idx, c_idx = [], [], []
    for (di, dj), c in [((0, 0), 1 / h2), ((1, 1), 1 / h2), ((1, 0), -1 / h2), ((0, 1), -1 / h2)]:
        r_idx.append(rows)
        c_idx.append((ii + di) * ny + (jj + dj))
        data.append(np.full(len(rows), c))
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(r_idx), np.concatenate(c_idx))),
        shape=(n_cells, nx * ny),
    )


def _node_forms(spec: ElasticityTensorSpec, pts, thickness_factor):
    """PSD split of the Voigt form: 3x3 node matrix and the cell weight.

    The (3,3) node entry keeps only the part of the mixed-derivative
    weight needed to absorb the shear-normal couplings (a Schur
    complement); the remainder rides on the compact cell stencil.
    """
    c6 = evaluate_tensor(spec, pts) * thickness_factor
    A0, B0, C0, D0, E0 = (c6[..., k] for k in range(5))
    F0 = c6[..., 5]
    s2 = np.sqrt(2.0)
    det = A0 * F0 - B0**2
    if np.any(det <= 0):
        raise ValueError("tensor block [[A0,B0],[B0,F0]] must be positive definite")
    z1, z2 = s2 * C0, s2 * D0
    quad = (F0 * z1**2 - 2 * B0 * z1 * z2 + A0 * z2**2) / det
    schur = 2 * E0 - quad
    if np.any(schur <= 0):
        raise ValueError("tensor fails strong convexity: mixed-term Schur complement <= 0")
    N = np.empty(pts.shape[:-1] + (3, 3))
    N[..., 0, 0] = A0
    N[..., 0, 1] = N[..., 1, 0] = B0
    N[..., 1, 1] = F0
    N[..., 0, 2] = N[..., 2, 0] = z1
    N[..., 1, 2] = N[..., 2, 1] = z2
    N[..., 2, 2] = quad
    return N, schur


@dataclass
class AssembledSystem:
    K: sp.csr_matrix
    rhs: np.ndarray
    mask: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    grid: Grid
    operators: dict


def assemble(problem: PlateProblem, grid: Grid) -> AssembledSystem:
    """Assemble the symmetric system and boundary data on a grid."""
    if problem.domain[0] == "rect":
        mask = np.ones(grid.shape, bool)
    else:
        mask = problem.region().mask(grid)
    energy_mask = _erode(mask, 1)
    free = _erode(mask, 2)
    fixed = mask & ~free
    if not free.any():
        raise ValueError("domain too small: no free nodes after fixing two layers")

    pts = grid.points()
    N, _ = _node_forms(problem.spec, pts, problem.thickness_factor)

    dxx, dyy, dxy_wide, gx, gy = _hessian_operators(grid, energy_mask)
    ops = [dxx, dyy, np.sqrt(2.0) * dxy_wide]
    h2 = grid.h**2
    wnode = np.where(energy_mask, h2, 0.0).ravel()
    K = None
    for a in range(3):
        for b in range(a, 3):
            coeff = wnode * N[..., a, b].ravel()
            if not np.any(coeff):
                continue
            term = ops[a].T @ sp.diags(coeff) @ ops[b]
            if b != a:
                term = term + term.T
            K = term if K is None else K + term

    cell_mask = mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]
    cell_x = 0.5 * (grid.xs[:-1] + grid.xs[1:])
    cell_y = 0.5 * (grid.ys[:-1] + grid.ys[1:])
    CX, CY = np.meshgrid(cell_x, cell_y, indexing="ij")
    cpts = np.stack([CX, CY], axis=-1)
    _, schur_c = _node_forms(problem.spec, cpts, problem.thickness_factor)
    dxy_cell = _cell_cross_operator(grid, cell_mask)
    wcell = np.where(cell_mask, h2, 0.0).ravel()
    K = K + dxy_cell.T @ sp.diags(wcell * 2.0 * schur_c.ravel()) @ dxy_cell

    if problem.winkler is not None:
        kvals = np.asarray(problem.winkler(pts), dtype=float)
        if np.any(kvals < 0):
            raise ValueError("winkler coefficient must be nonnegative")
        K = K + sp.diags(np.where(mask, h2 * kvals, 0.0).ravel())

    rhs = np.zeros(grid.node_count())
    if problem.rhs is not None:
        f_fun, F_fun, Fmat_fun = problem.rhs
        if f_fun is not None:
            rhs += np.where(free, h2 * np.asarray(f_fun(pts), float), 0.0).ravel()
        if F_fun is not None:
            Fv = np.asarray(F_fun(pts), float)
            rhs -= gx.T @ (wnode * Fv[..., 0].ravel()) + gy.T @ (wnode * Fv[..., 1].ravel())
        if Fmat_fun is not None:
            Fm = np.asarray(Fmat_fun(pts), float)
            rhs += dxx.T @ (wnode * Fm[..., 0, 0].ravel())
            rhs += dyy.T @ (wnode * Fm[..., 1, 1].ravel())
            rhs += dxy_wide.T @ (wnode * 2.0 * Fm[..., 0, 1].ravel())

    fixed_values = _boundary_values(problem, grid, fixed)

    return AssembledSystem(
        K=K.tocsr(),
        rhs=rhs,
        mask=mask,
        free=free,
        fixed=fixed,
        fixed_values=fixed_values,
        grid=grid,
        operators={
            "dxx": dxx,
            "dyy": dyy,
            "dxy_wide": dxy_wide,
            "dxy_cell": dxy_cell,
            "energy_mask": energy_mask,
            "cell_mask": cell_mask,
        },
    )


def _boundary_values(problem: PlateProblem, grid: Grid, fixed) -> np.ndarray:
    kind = problem.bc[0]
    vals = np.zeros(grid.shape)
    if kind == "clamped":
        return vals
    pts = grid.points()
    if kind == "manufactured":
        u_exact = problem.bc[1]
        vals[fixed] = np.asarray(u_exact(pts[fixed]), float)
        return vals
    if kind == "dirichlet_pair":
        g1, g2 = problem.bc[1], problem.bc[2]
        p = pts[fixed]
        if problem.domain[0] == "disk":
            R = float(problem.domain[1])
            r = np.maximum(np.hypot(p[:, 0], p[:, 1]), 1e-12)
            bp = p * (R / r)[:, None]
            dist = r - R  # negative inside the disk
        else:
            _, a, b = problem.domain
            dx = np.minimum(p[:, 0] + a / 2, a / 2 - p[:, 0])
            dy = np.minimum(p[:, 1] + b / 2, b / 2 - p[:, 1])
            to_x_edge = dx <= dy
            bx = np.where(p[:, 0] < 0, -a / 2, a / 2)
            by = np.where(p[:, 1] < 0, -b / 2, b / 2)
            bp = np.where(
                to_x_edge[:, None],
                np.stack([bx, p[:, 1]], axis=-1),
                np.stack([p[:, 0], by], axis=-1),
            )
            dist = -np.minimum(dx, dy)
        vals[fixed] = np.asarray(g1(bp), float) + dist * np.asarray(g2(bp), float)
        return vals
    raise ValueError(f"unknown boundary condition kind {kind!r}")


def solve(problem: PlateProblem, grid: Grid, tol: float = 1e-10, method: str = "direct") -> SolveReport:
    """Assemble and solve; returns the solution field and diagnostics."""
    sysm = assemble(problem, grid)
    free_idx = np.flatnonzero(sysm.free.ravel())
    fixed_idx = np.flatnonzero(sysm.fixed.ravel())
    u = np.zeros(grid.node_count())
    u[fixed_idx] = sysm.fixed_values.ravel()[fixed_idx]

    K = sysm.K
    b = sysm.rhs[free_idx] - K[free_idx][:, fixed_idx] @ u[fixed_idx]
    A = K[free_idx][:, free_idx].tocsc()
    iterations = 0
    if method == "direct":
        u_free = spla.spsolve(A, b)
    elif method == "cg":
        d = A.diagonal().copy()
        d[d <= 0] = 1.0
        Mpre = spla.LinearOperator(A.shape, matvec=lambda v: v / d)
        counter = {"n": 0}
        u_free, info = spla.cg(
            A, b, rtol=tol, maxiter=20000, M=Mpre,
            callback=lambda _: counter.__setitem__("n", counter["n"] + 1),
        )
        iterations = counter["n"]
        if info != 0:
            raise RuntimeError(f"conjugate gradient failed (info={info}, iters={iterations})")
    else:
        raise ValueError(f"unknown method {method!r}")
    u[free_idx] = u_free

    res_vec = A @ u_free - b
    scale = np.linalg.norm(b)
    residual = float(np.linalg.norm(res_vec) / (scale if scale > 0 else 1.0))
    energy = float(u @ (K @ u))
    ugrid = u.reshape(grid.shape)
    fld = ScalarField(grid, np.where(sysm.mask, ugrid, 0.0), domain_mask=sysm.mask)
    h2_norm = _normalized_h2(fld, problem.radius())
    return SolveReport(
        field=fld,
        residual=residual,
        energy=energy,
        h2_norm=h2_norm,
        h=grid.h,
        iterations=iterations,
        meta={"thickness_factor": problem.thickness_factor, "free_nodes": len(free_idx)},
    )


def _normalized_h2(fld: ScalarField, rho0: float) -> float:
    stack = fld.derivative_stack(2)
    total = 0.0
    for k in range(3):
        vals = stack.norm_sq(k)
        vals = np.where(np.isnan(vals), 0.0, vals)
        total += rho0 ** (2 * k) * float(np.sum(vals) * fld.grid.h**2)
    return float(np.sqrt(total) / rho0)


def rhs_norm_bound(problem: PlateProblem, grid: Grid) -> float:
    """Measured rhs size: ||f|| + ||F||/rho0 + ||Fmat||/rho0^2, normalized.

    L2 norms divide by rho0 so every term is dimensionally an
    L-infinity quantity; the declared epsilon should dominate rho0^4
    times the result.
    """
    if problem.rhs is None:
        return 0.0
    rho0 = problem.spec.rho0
    pts = grid.points()
    region = problem.region()
    f_fun, F_fun, Fmat_fun = problem.rhs
    total = 0.0
    if f_fun is not None:
        total += np.sqrt(integrate(np.asarray(f_fun(pts), float) ** 2, grid, region)) / rho0
    if F_fun is not None:
        Fv = np.asarray(F_fun(pts), float)
        total += np.sqrt(integrate(np.sum(Fv**2, axis=-1), grid, region)) / rho0**2
    if Fmat_fun is not None:
        Fm = np.asarray(Fmat_fun(pts), float)
        total += np.sqrt(integrate(np.sum(Fm**2, axis=(-2, -1)), grid, region)) / rho0**3
    return float(total)


def solve_clamped_inhomogeneous(
    rhs: tuple,
    spec: ElasticityTensorSpec,
    R: float,
    epsilon: float,
    n: int = 129,
) -> tuple[SolveReport, float]:
    """Clamped disk problem with inhomogeneous right hand side.

    Returns the solve report and the ratio of the normalized H2 norm of
    the solution to epsilon.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    problem = PlateProblem(spec=spec, domain=("disk", R), bc=("clamped",), rhs=rhs, epsilon=epsilon)
    grid = problem.make_grid(n)
    report = solve(problem, grid)
    measured = rhs_norm_bound(problem, grid)
    report.meta["rhs_norm_measured"] = measured
    report.meta["epsilon_declared"] = epsilon
    if epsilon > 0:
        report.meta["epsilon_consistent"] = bool(measured * spec.rho0**4 <= epsilon * (1 + 1e-9))
        ratio = report.h2_norm / epsilon
    else:
        ratio = 0.0 if report.h2_norm == 0 else float("inf")
    return report, ratio
