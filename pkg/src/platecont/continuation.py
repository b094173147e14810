"""Propagation of smallness along chains of overlapping balls.

A solution that is small on one disk is small on a whole connected
subregion: iterate the L2 three-sphere certificate along a chain of
centers whose small balls overlap the previous middle ball.  The
composed exponent is the product of the per-step exponents, which
decays like alpha^(c / r^2) as the working radius shrinks because the
number of chain steps grows like area / r^2.

The chain geometry is deterministic: a square lattice anchored at the
start disk covers the target region, a breadth-first tree connects it,
and the chain is the tree walk (each edge traversed down and up), so
consecutive centers are exactly one lattice step apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import Disk, Rect, ScalarField, integrate
from .inequalities import AdmissibilityError, CertificateConstants, three_sphere_v3


@dataclass
class ChainPlan:
    """Ordered centers plus the uniform per-step radii."""

    centers: list
    r_small: float
    rho: float
    rho1: float
    region: object
    margin: float
    start: tuple  # (x0, y0, r0) of the seed disk

    @property
    def steps(self) -> int:
        return len(self.centers)

    def to_json(self) -> dict:
        return {
            "centers": [list(map(float, c)) for c in self.centers],
            "r_small": self.r_small,
            "rho": self.rho,
            "rho1": self.rho1,
            "margin": self.margin,
            "start": list(self.start),
            "steps": self.steps,
        }

    def save_polyline_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x1,x2\n")
            for c in self.centers:
                fh.write(f"{c[0]:.17g},{c[1]:.17g}\n")


def _rect_of(region) -> tuple:
    if isinstance(region, Rect):
        return (region.x0, region.x1, region.y0, region.y1)
    raise TypeError("chain planning currently supports rectangular regions")


def _dist_to_boundary(p, omega_rect) -> float:
    x0, x1, y0, y1 = omega_rect
    return min(p[0] - x0, x1 - p[0], p[1] - y0, y1 - p[1])


def plan_chain(
    omega: Rect,
    G: Rect,
    start_center,
    r0: float,
    r: float,
    rho1_cap_factor: float = 4.0,
    rho_fraction: float = 0.9,
    s_pract: float = 0.5,
) -> ChainPlan:
    """Plan a chain of centers covering G starting at the seed disk.

    Preconditions: G is contained in omega with clearance at least r,
    and the half seed disk B_{r0/2}(start) lies inside G.  The uniform
    per-step radii are rho1 = min(rho1_cap_factor * r, clearance - r,
    0.95 * s_pract * clearance), rho = rho_fraction * rho1 / 2
    (strictly admissible for the L2 certificate with the practical
    constants) and r_small = rho / 2.  Consecutive centers are one
    lattice step rho - r_small apart, so every small ball is contained
    in the previous middle ball.
    """
    ob = _rect_of(omega)
    gb = _rect_of(G)
    start_center = (float(start_center[0]), float(start_center[1]))
    clearance = min(
        gb[0] - ob[0], ob[1] - gb[1], gb[2] - ob[2], ob[3] - gb[3]
    )
    if clearance < r:
        raise ValueError(f"dist(G, boundary of Omega) = {clearance:.4g} < r = {r:.4g}")
    half_seed = Disk(start_center[0], start_center[1], r0 / 2)
    corners = np.array(
        [[gb[0], gb[2]], [gb[0], gb[3]], [gb[1], gb[2]], [gb[1], gb[3]]]
    )
    if not (
        gb[0] <= start_center[0] - r0 / 2
        and start_center[0] + r0 / 2 <= gb[1]
        and gb[2] <= start_center[1] - r0 / 2
        and start_center[1] + r0 / 2 <= gb[3]
    ):
        raise ValueError("half seed disk must lie inside G")
    del half_seed, corners
    if r > r0 / 2:
        raise ValueError("need r <= r0 / 2")

    rho1 = min(rho1_cap_factor * r, clearance - r, 0.95 * s_pract * clearance)
    if rho1 <= 0:
        raise ValueError("no admissible outer radius: clearance too small")
    rho = rho_fraction * rho1 / 2.0
    r_small = rho / 2.0
    step = rho - r_small

    # lattice anchored at the start center, restricted to G
    def lattice_range(lo, hi, anchor):
        kmin = math.ceil((lo - anchor) / step - 1e-12)
        kmax = math.floor((hi - anchor) / step + 1e-12)
        return [anchor + k * step for k in range(kmin, kmax + 1)]

    xs = lattice_range(gb[0], gb[1], start_center[0])
    ys = lattice_range(gb[2], gb[3], start_center[1])
    nodes = {}
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            nodes[(i, j)] = (x, y)
    start_key = min(
        nodes, key=lambda k: (nodes[k][0] - start_center[0]) ** 2 + (nodes[k][1] - start_center[1]) ** 2
    )
    d0 = math.hypot(
        nodes[start_key][0] - start_center[0], nodes[start_key][1] - start_center[1]
    )
    if d0 > 1e-9 * max(1.0, step):
        raise ArithmeticError("lattice must contain the start center")

    # breadth-first tree over 4-neighbors, then a down-and-up tree walk
    parent = {start_key: None}
    order = [start_key]
    queue = [start_key]
    while queue:
        cur = queue.pop(0)
        i, j = cur
        for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (i + d[0], j + d[1])
            if nxt in nodes and nxt not in parent:
                parent[nxt] = cur
                order.append(nxt)
                queue.append(nxt)
    if len(parent) < len(nodes):
        raise ValueError("G is disconnected from the start disk at this step size")

    children = {k: [] for k in nodes}
    for k, p in parent.items():
        if p is not None:
            children[p].append(k)

    chain = []

    def walk(k):
        chain.append(nodes[k])
        for c in children[k]:
            walk(c)
            chain.append(nodes[k])

    walk(start_key)

    return ChainPlan(
        centers=chain,
        r_small=r_small,
        rho=rho,
        rho1=rho1,
        region=G,
        margin=clearance,
        start=(start_center[0], start_center[1], r0),
    )


@dataclass
class PropagationReport:
    """Per-step certificates and the composed smallness exponent.

    The composed exponent is the product of per-step exponents and
    underflows for long chains, so ``log_delta_emp`` (the sum of logs)
    is the authoritative value; ``delta_emp`` is its exponential.
    """

    step_thetas: list
    step_middle_norms: list
    step_small_norms: list
    step_C_emps: list
    log_delta_emp: float
    eta_measured: float
    eta_declared: float | None
    E0_measured: float
    E0_declared: float | None
    g_norm: float
    C_emp_final: float
    N: int
    failure_index: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def delta_emp(self) -> float:
        return math.exp(self.log_delta_emp)

    def bound_holds(self) -> bool:
        eta = self.eta_measured
        E0 = self.E0_measured
        if eta <= 0 or E0 <= 0 or not self.step_thetas:
            return self.g_norm == 0.0
        d = self.delta_emp
        log_rhs = math.log(self.C_emp_final) + d * math.log(eta) + (1.0 - d) * math.log(E0)
        return math.log(self.g_norm) <= log_rhs + 1e-9 if self.g_norm > 0 else True

    def to_json(self) -> dict:
        return {
            "step_thetas": list(self.step_thetas),
            "step_middle_norms": list(self.step_middle_norms),
            "step_small_norms": list(self.step_small_norms),
            "step_C_emps": list(self.step_C_emps),
            "delta_emp": self.delta_emp,
            "log_delta_emp": self.log_delta_emp,
            "eta_measured": self.eta_measured,
            "eta_declared": self.eta_declared,
            "E0_measured": self.E0_measured,
            "E0_declared": self.E0_declared,
            "g_norm": self.g_norm,
            "C_emp_final": self.C_emp_final,
            "N": self.N,
            "failure_index": self.failure_index,
            "meta": self.meta,
        }


def propagate(
    u: ScalarField,
    plan: ChainPlan,
    omega: Rect,
    constants: CertificateConstants,
    eta: float | None = None,
    E0: float | None = None,
) -> PropagationReport:
    """Iterate the L2 certificate along the chain and compose exponents.

    The smallness on the seed disk and the global bound are measured
    from the field itself; declared values, when given, are recorded
    alongside.  Any inadmissible step truncates the report at its
    index.
    """
    grid = u.grid
    ob = _rect_of(omega)
    x0, y0, r0 = plan.start
    eta_meas = math.sqrt(integrate(u.values**2, grid, Disk(x0, y0, r0)))
    E0_meas = math.sqrt(integrate(u.values**2, grid, omega))
    g_norm = math.sqrt(integrate(u.values**2, grid, plan.region))

    thetas, mids, smalls, cemps = [], [], [], []
    failure = None
    for idx, c in enumerate(plan.centers):
        R_loc = _dist_to_boundary(c, ob)
        try:
            cert = three_sphere_v3(
                u, plan.r_small, plan.rho, plan.rho1, R_loc, constants, center=c
            )
        except AdmissibilityError:
            failure = idx
            break
        if not cert.admissible:
            failure = idx
            break
        thetas.append(cert.theta)
        mids.append(math.sqrt(max(cert.lhs, 0.0)))
        smalls.append(math.sqrt(max(cert.A, 0.0)))
        cemps.append(cert.C_emp)

    log_delta = float(np.sum(np.log(thetas))) if thetas else float("nan")
    if eta_meas > 0 and E0_meas > 0 and thetas and g_norm > 0:
        d = math.exp(log_delta)
        c_final = math.exp(
            math.log(g_norm) - d * math.log(eta_meas) - (1.0 - d) * math.log(E0_meas)
        )
    else:
        c_final = 0.0 if g_norm == 0 else float("nan")
    return PropagationReport(
        step_thetas=thetas,
        step_middle_norms=mids,
        step_small_norms=smalls,
        step_C_emps=cemps,
        log_delta_emp=log_delta,
        eta_measured=eta_meas,
        eta_declared=eta,
        E0_measured=E0_meas,
        E0_declared=E0,
        g_norm=g_norm,
        C_emp_final=c_final,
        N=len(thetas),
        failure_index=failure,
        meta={
            "radii": {"r_small": plan.r_small, "rho": plan.rho, "rho1": plan.rho1},
            "constants": constants.label,
        },
    )


def boundary_seed_disk(psi, rho0: float, M0: float, n_samples: int = 1000):
    """Seed disk below a boundary graph, from the closed-form geometry.

    r0 = rho0 / (2 (sqrt(1 + M0^2) + 1)) and the center sits at
    (0, r0 - rho0/2).  The disk is verified to lie inside the
    sub-graph half rectangle {|x1| < rho0/(2 M0), |x2| < rho0/2,
    x2 < psi(x1)} by sampling the graph; a violation raises, since it
    means psi exceeds its regularity budget.
    """
    if rho0 <= 0 or M0 <= 0:
        raise ValueError("rho0 and M0 must be positive")
    r0 = rho0 / (2.0 * (math.sqrt(1.0 + M0**2) + 1.0))
    x0 = (0.0, r0 - rho0 / 2.0)
    if r0 > rho0 / (2.0 * M0) + 1e-12:
        raise ArithmeticError("seed disk wider than the half rectangle")
    xs = np.linspace(-r0, r0, n_samples)
    top = x0[1] + np.sqrt(np.maximum(r0**2 - xs**2, 0.0))
    graph = np.asarray(psi(xs), dtype=float)
    viol = top - graph
    worst = float(viol.max())
    if worst > 1e-10 * rho0:
        k = int(np.argmax(viol))
        raise ValueError(
            f"seed disk pokes above the boundary graph at x1={xs[k]:.4g} "
            f"(excess {worst:.3e}); graph violates its regularity bounds"
        )
    return x0, r0
