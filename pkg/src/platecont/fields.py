"""Uniform grids, high order differences, quadrature and test bumps.

Everything downstream works on node-centered uniform Cartesian grids.
Curved integration domains (disks, weighted balls and annuli) are
realized as cell masks whose boundary cells get area fractions from a
4x4 subsample, which keeps the cut-cell error below the scheme error
of the integrands.  Derivatives use fourth order five-point stencils,
shifted near edges; higher orders are compositions of the first
derivative operator, so every polynomial of degree at most four is
differentiated exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Node-centered uniform grid with equal spacing in both directions."""

    x0: float
    y0: float
    h: float
    nx: int
    ny: int

    @classmethod
    def square(cls, n: int, halfwidth: float, center=(0.0, 0.0)) -> "Grid":
        h = 2.0 * halfwidth / (n - 1)
        return cls(center[0] - halfwidth, center[1] - halfwidth, h, n, n)

    @classmethod
    def rectangle(cls, box, n_across: int) -> "Grid":
        """Grid over box=(x0, x1, y0, y1), n_across nodes along x."""
        x0, x1, y0, y1 = box
        h = (x1 - x0) / (n_across - 1)
        ny = int(round((y1 - y0) / h)) + 1
        return cls(x0, y0, h, n_across, ny)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def xs(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y0 + self.h * np.arange(self.ny)

    @property
    def box(self):
        return (self.x0, self.xs[-1], self.y0, self.ys[-1])

    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def node_count(self) -> int:
        return self.nx * self.ny


# ---------------------------------------------------------------------------
# regions


class Region:
    def indicator(self, pts) -> np.ndarray:
        raise NotImplementedError

    def mask(self, grid: Grid) -> np.ndarray:
        return self.indicator(grid.points())


@dataclass(frozen=True)
class WholeBox(Region):
    def indicator(self, pts):
        pts = np.asarray(pts)
        return np.ones(pts.shape[:-1], dtype=bool)


@dataclass(frozen=True)
class Rect(Region):
    x0: float
    x1: float
    y0: float
    y1: float

    def indicator(self, pts):
        pts = np.asarray(pts)
        x, y = pts[..., 0], pts[..., 1]
        return (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)


@dataclass(frozen=True)
class Disk(Region):
    cx: float
    cy: float
    r: float

    def indicator(self, pts):
        pts = np.asarray(pts)
        return (pts[..., 0] - self.cx) ** 2 + (pts[..., 1] - self.cy) ** 2 <= self.r**2


@dataclass(frozen=True)
class Annulus(Region):
    cx: float
    cy: float
    r_in: float
    r_out: float

    def indicator(self, pts):
        pts = np.asarray(pts)
        rsq = (pts[..., 0] - self.cx) ** 2 + (pts[..., 1] - self.cy) ** 2
        return (rsq >= self.r_in**2) & (rsq <= self.r_out**2)


class SigmaBall(Region):
    """Sublevel set sigma(x) < r of a quadratic weight."""

    def __init__(self, weight, r: float):
        self.weight = weight
        self.r = float(r)

    def indicator(self, pts):
        return self.weight.sigma(np.asarray(pts, dtype=float)) < self.r


class SigmaAnnulus(Region):
    def __init__(self, weight, r_in: float, r_out: float):
        if not 0 < r_in < r_out:
            raise ValueError("need 0 < r_in < r_out")
        self.weight = weight
        self.r_in = float(r_in)
        self.r_out = float(r_out)

    def indicator(self, pts):
        s = self.weight.sigma(np.asarray(pts, dtype=float))
        return (s >= self.r_in) & (s <= self.r_out)


def region_fractions(grid: Grid, region: Region | None) -> np.ndarray:
    """Per-cell area fractions of the region, 4x4 subsampled at the cut."""
    if region is None or isinstance(region, WholeBox):
        return np.ones(grid.shape)
    h = grid.h
    cx = np.concatenate([grid.xs - 0.5 * h, [grid.xs[-1] + 0.5 * h]])
    cy = np.concatenate([grid.ys - 0.5 * h, [grid.ys[-1] + 0.5 * h]])
    CX, CY = np.meshgrid(cx, cy, indexing="ij")
    corners = region.indicator(np.stack([CX, CY], axis=-1))
    n_in = (
        corners[:-1, :-1].astype(int)
        + corners[1:, :-1]
        + corners[:-1, 1:]
        + corners[1:, 1:]
    )
    frac = np.where(n_in == 4, 1.0, 0.0)
    cut = (n_in > 0) & (n_in < 4)
    if np.any(cut):
        ii, jj = np.nonzero(cut)
        offs = (np.arange(4) + 0.5) / 4.0 - 0.5
        ox, oy = np.meshgrid(offs * h, offs * h, indexing="ij")
        sub = np.stack(
            [
                grid.xs[ii][:, None, None] + ox[None],
                grid.ys[jj][:, None, None] + oy[None],
            ],
            axis=-1,
        )
        frac[ii, jj] = region.indicator(sub).mean(axis=(1, 2))
    return frac


def integrate(values, grid: Grid, region: Region | None = None, fractions=None) -> float:
    """Midpoint-rule integral of nodal values over a region.

    Each node owns an h x h cell; partial cells along curved boundaries
    contribute their subsampled area fraction.  Raises on empty
    regions.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError("values shape does not match grid")
    if fractions is None:
        fractions = region_fractions(grid, region)
    total_area = float(fractions.sum())
    if total_area == 0.0:
        raise ValueError("integration region is empty on this grid")
    inside = fractions > 0
    if np.any(np.isnan(values[inside])):
        raise ValueError("integration region touches nodes without valid data")
    return float(np.sum(np.where(inside, values, 0.0) * fractions) * grid.h**2)


# ---------------------------------------------------------------------------
# derivatives

_D1_EDGE4 = np.array(
    [
        [-25.0, 48.0, -36.0, 16.0, -3.0],
        [-3.0, -10.0, 18.0, -6.0, 1.0],
    ]
) / 12.0


def _d1_line4(v: np.ndarray, h: float) -> np.ndarray:
    """Fourth order first derivative of one or more stacked lines (last axis)."""
    n = v.shape[-1]
    if n < 5:
        raise ValueError("mask too thin for stencil (need at least 5 nodes)")
    out = np.empty_like(v)
    out[..., 2:-2] = (
        v[..., :-4] - 8.0 * v[..., 1:-3] + 8.0 * v[..., 3:-1] - v[..., 4:]
    ) / (12.0 * h)
    head = v[..., :5]
    tail = v[..., -5:]
    out[..., 0] = head @ _D1_EDGE4[0] / h
    out[..., 1] = head @ _D1_EDGE4[1] / h
    out[..., -2] = -(tail[..., ::-1] @ _D1_EDGE4[1]) / h
    out[..., -1] = -(tail[..., ::-1] @ _D1_EDGE4[0]) / h
    return out


def _d1_line2(v: np.ndarray, h: float) -> np.ndarray:
    n = v.shape[-1]
    if n < 3:
        raise ValueError("mask too thin for stencil (need at least 3 nodes)")
    out = np.empty_like(v)
    out[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2.0 * h)
    out[..., 0] = (-3.0 * v[..., 0] + 4.0 * v[..., 1] - v[..., 2]) / (2.0 * h)
    out[..., -1] = (3.0 * v[..., -1] - 4.0 * v[..., -2] + v[..., -3]) / (2.0 * h)
    return out


def _d2_line2(v: np.ndarray, h: float) -> np.ndarray:
    n = v.shape[-1]
    if n < 4:
        raise ValueError("mask too thin for stencil (need at least 4 nodes)")
    out = np.empty_like(v)
    out[..., 1:-1] = (v[..., 2:] - 2.0 * v[..., 1:-1] + v[..., :-2]) / h**2
    out[..., 0] = (2.0 * v[..., 0] - 5.0 * v[..., 1] + 4.0 * v[..., 2] - v[..., 3]) / h**2
    out[..., -1] = (2.0 * v[..., -1] - 5.0 * v[..., -2] + 4.0 * v[..., -3] - v[..., -4]) / h**2
    return out


def _mask_runs(line_mask: np.ndarray):
    idx = np.flatnonzero(line_mask)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [idx.size - 1]])
    return [(idx[s], idx[e] + 1) for s, e in zip(starts, ends)]


def _diff_axis(vals, h, axis, order=4, degree=1, mask=None):
    """Differentiate along one axis, optionally split on mask runs.

    Masked runs shorter than the stencil yield NaN (integration and
    certificates refuse regions that touch them); a mask with no usable
    run at all is an error.
    """
    line = {4: _d1_line4, 2: _d1_line2}[order] if degree == 1 else _d2_line2
    need = {4: 5, 2: 3}[order] if degree == 1 else 4
    v = np.moveaxis(vals, axis, -1)
    if mask is None:
        out = line(v, h)
        return np.moveaxis(out, -1, axis)
    m = np.moveaxis(mask, axis, -1)
    out = np.full_like(v, np.nan)
    any_run = False
    for i in range(v.shape[0]):
        for a, b in _mask_runs(m[i]):
            if b - a < need:
                continue
            out[i, a:b] = line(v[i, a:b], h)
            any_run = True
    if not any_run:
        raise ValueError("mask too thin for stencil")
    return np.moveaxis(out, -1, axis)


class DerivativeStack:
    """All partial derivatives of a field up to a given total order."""

    def __init__(self, grid: Grid, partials: dict, max_order: int, mask=None):
        self.grid = grid
        self.partials = partials
        self.max_order = max_order
        self.mask = mask

    def __getitem__(self, key):
        return self.partials[key]

    def gradient(self) -> np.ndarray:
        return np.stack([self[(1, 0)], self[(0, 1)]], axis=-1)

    def hessian(self) -> np.ndarray:
        return np.stack(
            [
                np.stack([self[(2, 0)], self[(1, 1)]], axis=-1),
                np.stack([self[(1, 1)], self[(0, 2)]], axis=-1),
            ],
            axis=-2,
        )

    def norm_sq(self, k: int) -> np.ndarray:
        """|grad^k u|^2 with tensor multiplicities (Frobenius convention)."""
        if k > self.max_order:
            raise ValueError(f"stack only holds orders up to {self.max_order}")
        out = np.zeros(self.grid.shape)
        for a in range(k + 1):
            out += math.comb(k, a) * self[(a, k - a)] ** 2
        return out


class ScalarField:
    """Nodal values on a grid, with optional domain mask.

    When a mask is present, derivative stencils shift to stay inside
    each masked run and nodes outside the mask hold NaN derivatives.
    """

    def __init__(self, grid: Grid, values, domain_mask=None):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError("values shape does not match grid shape")
        self.grid = grid
        self.values = values
        self.domain_mask = domain_mask

    @classmethod
    def from_function(cls, grid: Grid, func, domain_mask=None) -> "ScalarField":
        return cls(grid, func(grid.points()), domain_mask)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.domain_mask)

    def __add__(self, other):
        vals = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values + vals, self.domain_mask)

    def __sub__(self, other):
        vals = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values - vals, self.domain_mask)

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * c, self.domain_mask)

    __rmul__ = __mul__

    def derivative_stack(self, k: int, order: int = 4) -> DerivativeStack:
        return derivatives(self, k, order=order)

    def integrate(self, region: Region | None = None) -> float:
        return integrate(self.values, self.grid, region)


def derivatives(u: ScalarField, k: int, order: int = 4) -> DerivativeStack:
    """Stack of partial derivatives of u up to total order k (k <= 4).

    Fourth order stencils by default; ``order=2`` switches to compact
    second order stencils (used where the surrounding scheme is itself
    second order).  Derivatives are compositions of the one dimensional
    first derivative operator except the pure second derivative at
    order 2, which uses the classical three point stencil.
    """
    if k > 4 or k < 0:
        raise ValueError("derivative order must be between 0 and 4")
    grid, mask = u.grid, u.domain_mask
    vals = u.values if mask is None else np.where(mask, u.values, 0.0)
    partials = {(0, 0): vals}
    for total in range(1, k + 1):
        for a in range(total, -1, -1):
            b = total - a
            if order == 2 and (a, b) in ((2, 0), (0, 2)):
                partials[(a, b)] = _diff_axis(
                    partials[(0, 0)], grid.h, 0 if a else 1, order=2, degree=2, mask=mask
                )
                continue
            if a > 0:
                src, axis = partials[(a - 1, b)], 0
            else:
                src, axis = partials[(a, b - 1)], 1
            # NaNs from short masked runs must not leak into later passes
            eff = mask if mask is None else (mask & np.isfinite(src))
            partials[(a, b)] = _diff_axis(src, grid.h, axis, order=order, mask=eff)
    return DerivativeStack(grid, partials, k, mask)


# ---------------------------------------------------------------------------
# test functions


def smoothstep_coeffs(p: int) -> np.ndarray:
    """Coefficients (ascending) of the degree 2p+1 unit smoothstep.

    The polynomial rises from 0 to 1 on [0, 1] with p vanishing
    derivatives at both ends.
    """
    coeffs = np.zeros(2 * p + 2)
    for j in range(p + 1):
        coeffs[p + j + 1] = math.comb(p, j) * (-1.0) ** j / (p + j + 1)
    coeffs /= coeffs.sum()
    return coeffs


def _smoothstep(t: np.ndarray, p: int) -> np.ndarray:
    c = smoothstep_coeffs(p)
    t = np.clip(t, 0.0, 1.0)
    return np.polynomial.polynomial.polyval(t, c)


class BumpProfile:
    """C^p radial profile: rise, plateau, fall, identically 0 outside."""

    def __init__(self, r_in: float, r_out: float, smoothness: int = 4, plateau: float = 0.3):
        if not 0 < r_in < r_out:
            raise ValueError("need 0 < r_in < r_out")
        if not 0 <= plateau < 1:
            raise ValueError("plateau fraction must be in [0, 1)")
        self.r_in = r_in
        self.r_out = r_out
        self.p = smoothness
        width = r_out - r_in
        edge = 0.5 * (1.0 - plateau) * width
        self.rise = (r_in, r_in + edge)
        self.fall = (r_out - edge, r_out)

    def __call__(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        a, b = self.rise
        c, d = self.fall
        mid = (s >= b) & (s <= c)
        out[mid] = 1.0
        up = (s > a) & (s < b)
        out[up] = _smoothstep((s[up] - a) / (b - a), self.p)
        dn = (s > c) & (s < d)
        out[dn] = _smoothstep((d - s[dn]) / (d - c), self.p)
        return out


def test_function(
    grid: Grid,
    r_in: float,
    r_out: float,
    m: int = 0,
    smoothness: int = 4,
    weight=None,
    plateau: float = 0.3,
) -> ScalarField:
    """Compactly supported bump on a (weighted) annulus times cos(m theta).

    The radial coordinate is sigma from ``weight`` when given, else the
    Euclidean norm.  The profile vanishes with ``smoothness``
    derivatives at both radii and is identically zero outside, and its
    k-th derivative scales like (r_out - r_in)^-k.  Raises when the
    annulus does not fit inside the grid box.
    """
    pts = grid.points()
    x0, x1, y0, y1 = grid.box
    if weight is None:
        s = np.hypot(pts[..., 0], pts[..., 1])
        req_x = req_y = r_out
    else:
        s = weight.sigma(pts)
        ginv = np.linalg.inv(weight.Gamma)
        req_x = r_out * np.sqrt(ginv[0, 0])
        req_y = r_out * np.sqrt(ginv[1, 1])
    if req_x > min(abs(x0), abs(x1)) * (1 + 1e-12) or req_y > min(abs(y0), abs(y1)) * (
        1 + 1e-12
    ):
        raise ValueError("annulus outside the grid box")
    profile = BumpProfile(r_in, r_out, smoothness, plateau)
    vals = profile(s)
    if m != 0:
        theta = np.arctan2(pts[..., 1], pts[..., 0])
        vals = vals * np.cos(m * theta)
    field = ScalarField(grid, vals)
    field.support_region = (
        SigmaAnnulus(weight, r_in, r_out) if weight is not None else Annulus(0, 0, r_in, r_out)
    )
    field.profile = profile
    field.angular_mode = m
    return field


def grid_for_sigma_ball(weight, r: float, n_across: int, pad: float = 1.02) -> Grid:
    """Rectangular grid covering the sigma-ball of radius r with padding.

    The ball is an ellipse; matching the box to its per-axis extents
    instead of a bounding square buys resolution for anisotropic
    weights.  ``n_across`` is the node count along the shorter axis.
    """
    ginv = np.linalg.inv(weight.Gamma)
    hx = pad * r * float(np.sqrt(ginv[0, 0]))
    hy = pad * r * float(np.sqrt(ginv[1, 1]))
    if hx <= hy:
        h = 2.0 * hx / (n_across - 1)
        ny = 2 * int(np.ceil(hy / h)) + 1
        return Grid(-hx, -0.5 * (ny - 1) * h, h, n_across, ny)
    h = 2.0 * hy / (n_across - 1)
    nx = 2 * int(np.ceil(hx / h)) + 1
    return Grid(-0.5 * (nx - 1) * h, -hy, h, nx, n_across)


# ---------------------------------------------------------------------------
# field I/O


def save_field_csv(field: ScalarField, path) -> None:
    pts = field.grid.points().reshape(-1, 2)
    vals = field.values.reshape(-1)
    with open(path, "w") as fh:
        fh.write("x1,x2,value\n")
        for (x, y), v in zip(pts, vals):
            fh.write(f"{x:.17g},{y:.17g},{v:.17g}\n")


def save_field_binary(field: ScalarField, path_prefix, mask_id: str = "none") -> None:
    field.values.astype("<f8").tofile(str(path_prefix) + ".bin")
    sidecar = {
        "spacing": field.grid.h,
        "box": list(field.grid.box),
        "shape": list(field.grid.shape),
        "mask_id": mask_id,
        "dtype": "<f8",
        "order": "C",
    }
    with open(str(path_prefix) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_field_binary(path_prefix) -> ScalarField:
    with open(str(path_prefix) + ".json") as fh:
        sidecar = json.load(fh)
    nx, ny = sidecar["shape"]
    vals = np.fromfile(str(path_prefix) + ".bin", dtype=sidecar["dtype"]).reshape(nx, ny)
    x0, _, y0, _ = sidecar["box"]
    grid = Grid(x0, y0, sidecar["spacing"], nx, ny)
    return ScalarField(grid, vals)
