"""Weighted a-priori estimates and measured inequality certificates.

Two kinds of output live here.  The Carleman runs integrate both sides
of the weighted estimates

    tau * I(sigma^beta |grad u|^2) + tau^3 * I(sigma^(-beta-2) u^2)
        <= C * I(sigma^(2 beta + 2) (lap u)^2)

(second order form; the fourth order form stacks four derivative terms
against the composed operator) for a sweep of tau values and report the
measured ratios.  The three-sphere certificates measure the norms of a
solution on three concentric balls and report the empirical constant

    C_emp = (middle norm) / (small norm)^theta (large norm)^(1-theta)

with the exponent theta computed exactly from the radii and the weight
exponent.  Multiplicative constants proved to exist but never pinned
down are not claimed: the exponential factor's argument is reported
separately and C_emp is always the raw measured quotient.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .carleman_frame import Metric, QuadraticWeight, omega0_closed
from .fields import Disk, Grid, ScalarField, integrate, region_fractions


class AdmissibilityError(ValueError):
    """A precondition of the requested estimate is violated."""


# ---------------------------------------------------------------------------
# Carleman runs


@dataclass
class CarlemanReport:
    taus: list
    lhs: list
    rhs: list
    ratios: list
    test_id: str
    Gamma: np.ndarray
    beta: float
    h: float
    degenerate: bool = False
    terms: dict = field(default_factory=dict)

    def max_ratio(self) -> float:
        return max(self.ratios)

    def to_json(self) -> dict:
        return {
            "taus": list(self.taus),
            "lhs": list(self.lhs),
            "rhs": list(self.rhs),
            "ratios": list(self.ratios),
            "test_id": self.test_id,
            "Gamma": self.Gamma.tolist(),
            "beta": self.beta,
            "h": self.h,
            "degenerate": self.degenerate,
        }

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "lhs", "rhs", "ratio"])
            for row in zip(self.taus, self.lhs, self.rhs, self.ratios):
                writer.writerow([f"{v:.17g}" for v in row])


def _support_and_sigma(weight: QuadraticWeight, u: ScalarField):
    pts = u.grid.points()
    sigma = weight.sigma(pts)
    support = np.abs(u.values) > 0.0
    if support.any():
        smin = float(sigma[support].min())
        if smin < weight.sigma_min:
            raise AdmissibilityError("support of the test field touches the punctured core")
    return pts, sigma, support


def _weight_factor(sigma, support, beta, tau):
    """exp(2 tau sigma^-beta) renormalized so the support maximum is 1."""
    expo = np.zeros_like(sigma)
    expo[support] = 2.0 * tau * sigma[support] ** (-beta)
    shift = expo[support].max() if support.any() else 0.0
    out = np.zeros_like(sigma)
    out[support] = np.exp(expo[support] - shift)
    return out


def _metric_apply(metric: Metric, pts, stack):
    """(|grad_g u|^2, lap_g u) fields from a derivative stack."""
    G = metric.mat(pts)
    dG = metric.grad(pts)
    gx, gy = stack[(1, 0)], stack[(0, 1)]
    grad_sq = (
        G[..., 0, 0] * gx**2 + 2.0 * G[..., 0, 1] * gx * gy + G[..., 1, 1] * gy**2
    )
    lap = (
        G[..., 0, 0] * stack[(2, 0)]
        + 2.0 * G[..., 0, 1] * stack[(1, 1)]
        + G[..., 1, 1] * stack[(0, 2)]
        + (dG[..., 0, 0, 0] + dG[..., 1, 1, 0]) * gx
        + (dG[..., 0, 0, 1] + dG[..., 1, 1, 1]) * gy
    )
    return grad_sq, lap


def _nondivergence_apply(metric: Metric, pts, stack):
    """L u = g^{ij} d_ij u (non-divergence form)."""
    G = metric.mat(pts)
    return (
        G[..., 0, 0] * stack[(2, 0)]
        + 2.0 * G[..., 0, 1] * stack[(1, 1)]
        + G[..., 1, 1] * stack[(0, 2)]
    )


def carleman_second_order(
    metric: Metric,
    weight: QuadraticWeight,
    u: ScalarField,
    taus,
    test_id: str = "",
) -> CarlemanReport:
    """Measured two-sided data of the second order weighted estimate.

    Requires beta > omega0 for the pair (Gamma, metric at 0) and a test
    field supported in an annulus away from the origin.  LHS and RHS
    are renormalized by a common factor per tau, which leaves the
    ratios untouched and keeps the exponentials inside double range.
    """
    g0_lower = np.linalg.inv(metric.mat(np.zeros(2)))
    om = omega0_closed(weight.Gamma, g0_lower)
    if weight.beta <= om.closed_form:
        raise AdmissibilityError(
            f"weight exponent beta={weight.beta} must exceed omega0={om.closed_form:.6g} "
            "for the second order weighted estimate"
        )
    pts, sigma, support = _support_and_sigma(weight, u)
    grid = u.grid
    if not support.any():
        return CarlemanReport(
            list(taus), [0.0] * len(taus), [0.0] * len(taus), [float("nan")] * len(taus),
            test_id, weight.Gamma, weight.beta, grid.h, degenerate=True,
        )
    stack = u.derivative_stack(2)
    grad_sq, lap = _metric_apply(metric, pts, stack)
    beta = weight.beta
    s_pow = np.zeros_like(sigma)
    s_pow[support] = sigma[support] ** beta
    s_neg = np.zeros_like(sigma)
    s_neg[support] = sigma[support] ** (-beta - 2.0)
    s_rhs = np.zeros_like(sigma)
    s_rhs[support] = sigma[support] ** (2.0 * beta + 2.0)

    taus = list(taus)
    lhs_list, rhs_list, ratio_list = [], [], []
    for tau in taus:
        W = _weight_factor(sigma, support, beta, tau)
        lhs = tau * integrate(s_pow * W * grad_sq, grid) + tau**3 * integrate(
            s_neg * W * u.values**2, grid
        )
        rhs = integrate(s_rhs * W * lap**2, grid)
        lhs_list.append(lhs)
        rhs_list.append(rhs)
        ratio_list.append(lhs / rhs if rhs > 0 else float("nan"))
    return CarlemanReport(
        taus, lhs_list, rhs_list, ratio_list, test_id, weight.Gamma, weight.beta, grid.h
    )


def carleman_fourth_order(
    metric1: Metric,
    metric2: Metric,
    weight: QuadraticWeight,
    u: ScalarField,
    taus,
    test_id: str = "",
) -> CarlemanReport:
    """Measured two-sided data of the fourth order weighted estimate.

    The left side stacks tau^(6-2k) I(sigma^(-beta-2+k(2 beta+2)) |grad^k u|^2)
    for k = 0..3 against I(sigma^(5 beta+6) |L2 L1 u|^2).  Requires beta
    above the eigenvalue-ratio bound of the two coefficient matrices at
    the origin.
    """
    G1 = metric1.mat(np.zeros(2))
    G2 = metric2.mat(np.zeros(2))
    nu = np.linalg.eigvalsh(G1)
    mu = np.linalg.eigvalsh(G2)
    bound = math.sqrt((mu[-1] * nu[-1]) / (mu[0] * nu[0])) - 1.0
    if weight.beta <= bound:
        raise AdmissibilityError(
            f"weight exponent beta={weight.beta} must exceed the eigenvalue-ratio "
            f"bound {bound:.6g} for the fourth order weighted estimate"
        )
    pts, sigma, support = _support_and_sigma(weight, u)
    grid = u.grid
    if not support.any():
        return CarlemanReport(
            list(taus), [0.0] * len(taus), [0.0] * len(taus), [float("nan")] * len(taus),
            test_id, weight.Gamma, weight.beta, grid.h, degenerate=True,
        )
    stack = u.derivative_stack(3)
    l1u = _nondivergence_apply(metric1, pts, stack)
    l2l1u = _nondivergence_apply(metric2, pts, ScalarField(grid, l1u).derivative_stack(2))

    beta = weight.beta
    norms = [stack.norm_sq(k) for k in range(4)]
    powers_lhs = [-beta - 2.0 + k * (2.0 * beta + 2.0) for k in range(4)]
    s_lhs = []
    for p in powers_lhs:
        arr = np.zeros_like(sigma)
        arr[support] = sigma[support] ** p
        s_lhs.append(arr)
    s_rhs = np.zeros_like(sigma)
    s_rhs[support] = sigma[support] ** (5.0 * beta + 6.0)

    taus = list(taus)
    lhs_list, rhs_list, ratio_list = [], [], []
    for tau in taus:
        W = _weight_factor(sigma, support, beta, tau)
        lhs = sum(
            tau ** (6 - 2 * k) * integrate(s_lhs[k] * W * norms[k], grid) for k in range(4)
        )
        rhs = integrate(s_rhs * W * l2l1u**2, grid)
        lhs_list.append(lhs)
        rhs_list.append(rhs)
        ratio_list.append(lhs / rhs if rhs > 0 else float("nan"))
    return CarlemanReport(
        taus, lhs_list, rhs_list, ratio_list, test_id, weight.Gamma, weight.beta, grid.h
    )


# ---------------------------------------------------------------------------
# three-sphere certificates


@dataclass(frozen=True)
class CertificateConstants:
    """Constants entering the three-sphere exponent and admissibility.

    ``gamma2`` plays the role of the factor-ellipticity constant in the
    exponent formula; the worst-case value from the explicit chain is
    astronomically small, so a practical surrogate (default 1, the
    isotropic value) is used for measurements and both admissibility
    verdicts are recorded.  ``s_pract`` bounds rho1 relative to the
    solved radius R.
    """

    beta: float
    gamma2: float = 1.0
    s_pract: float = 0.5
    label: str = "practical"

    def theta1(self, r: float, rho: float, rho1: float) -> float:
        b, g = self.beta, self.gamma2
        num = (rho / g) ** (-b) - (g * rho1 / 2.0) ** (-b)
        den = (g * r / 2.0) ** (-b) - (g * rho1 / 2.0) ** (-b)
        return num / den

    def exp_argument(self, rho: float, rho1: float, R: float) -> float:
        b, g = self.beta, self.gamma2
        return ((rho / g) ** (-b) - (g * rho1 / 2.0) ** (-b)) * R**b


@dataclass
class ThreeSphereCertificate:
    version: str
    r: float
    rho: float
    rho1: float
    R: float
    theta1: float
    theta: float
    A: float
    B: float
    lhs: float
    C_emp: float
    exp_argument: float
    admissible: bool
    flags: list = field(default_factory=list)
    degenerate: bool = False
    constants_label: str = "practical"

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "radii": {"r": self.r, "rho": self.rho, "rho1": self.rho1, "R": self.R},
            "theta1": self.theta1,
            "theta": self.theta,
            "A": self.A,
            "B": self.B,
            "lhs": self.lhs,
            "C_emp": self.C_emp,
            "exp_argument": self.exp_argument,
            "admissible": self.admissible,
            "flags": list(self.flags),
            "degenerate": self.degenerate,
            "constants": self.constants_label,
        }


def _ball_norm_sums(u: ScalarField, radius: float, orders, weights=None, stack=None,
                    center=(0.0, 0.0)):
    """sum_k w_k Integral_{B_radius} |grad^k u|^2 with containment checks."""
    grid = u.grid
    kmax = max(orders)
    if stack is None:
        stack = u.derivative_stack(kmax)
    region = Disk(center[0], center[1], radius)
    frac = region_fractions(grid, region)
    total = 0.0
    for k in orders:
        vals = stack.norm_sq(k)
        bad = np.isnan(vals) & (frac > 0)
        if bad.any():
            raise AdmissibilityError(
                f"ball of radius {radius} leaves the region where derivatives exist"
            )
        w = 1.0 if weights is None else weights[k]
        total += w * float(np.nansum(vals * frac) * grid.h**2)
    return total, stack


def _admissibility(consts: CertificateConstants, r, rho, rho1, R, extra=()):
    flags = list(extra)
    if not (0 < r < rho):
        flags.append("need 0 < r < rho")
    if not rho < rho1 * consts.gamma2**2 / 2.0:
        flags.append("rho >= rho1 * gamma2^2 / 2")
    if not rho1 < consts.s_pract * R:
        flags.append("rho1 >= s_pract * R")
    return flags


def three_sphere_v1(
    u: ScalarField, r: float, rho: float, rho1: float, R: float,
    constants: CertificateConstants, center=(0.0, 0.0),
) -> ThreeSphereCertificate:
    """Certificate on the stacked derivative sums of orders 0..3.

    A and B are sum_k t^{2k} I_{B_t} |grad^k u|^2 at t = r and rho1, the
    measured middle quantity is the same sum at rho.
    """
    th1 = constants.theta1(r, rho, rho1)
    flags = _admissibility(constants, r, rho, rho1, R)
    stack = None
    sums = {}
    for t in (r, rho, rho1):
        w = {k: t ** (2 * k) for k in range(4)}
        sums[t], stack = _ball_norm_sums(u, t, range(4), w, stack, center)
    A, lhs, B = sums[r], sums[rho], sums[rho1]
    degenerate = A == 0.0 or B == 0.0
    cemp = float("nan") if degenerate else lhs / (A**th1 * B ** (1.0 - th1))
    return ThreeSphereCertificate(
        version="v1", r=r, rho=rho, rho1=rho1, R=R,
        theta1=th1, theta=th1, A=A, B=B, lhs=lhs, C_emp=cemp,
        exp_argument=constants.exp_argument(rho, rho1, R),
        admissible=not flags, flags=flags, degenerate=degenerate,
        constants_label=constants.label,
    )


def three_sphere_v2(
    u: ScalarField, r: float, rho: float, rho1: float, R: float,
    constants: CertificateConstants, center=(0.0, 0.0),
) -> ThreeSphereCertificate:
    """Hessian-only certificate, invariant under adding affine functions.

    A = r^4 I_{B_2r} |grad^2 u|^2 and B = (rho1^6 / r^2) I_{B_2rho1},
    so the doubled outer ball must also fit in the solved domain.
    """
    extra = []
    if 2 * rho1 >= R:
        extra.append("2*rho1 must fit inside the solved radius R")
    th1 = constants.theta1(r, rho, rho1)
    flags = _admissibility(constants, r, rho, rho1, R, extra)
    stack = None
    a_int, stack = _ball_norm_sums(u, 2 * r, [2], None, stack, center)
    lhs_int, stack = _ball_norm_sums(u, rho, [2], None, stack, center)
    b_int, stack = _ball_norm_sums(u, 2 * rho1, [2], None, stack, center)
    A = r**4 * a_int
    lhs = rho**4 * lhs_int
    B = rho1**6 / r**2 * b_int
    degenerate = A == 0.0 or B == 0.0
    cemp = float("nan") if degenerate else lhs / (A**th1 * B ** (1.0 - th1))
    return ThreeSphereCertificate(
        version="v2", r=r, rho=rho, rho1=rho1, R=R,
        theta1=th1, theta=th1, A=A, B=B, lhs=lhs, C_emp=cemp,
        exp_argument=constants.exp_argument(rho, rho1, R),
        admissible=not flags, flags=flags, degenerate=degenerate,
        constants_label=constants.label,
    )


def three_sphere_v3(
    u: ScalarField, r: float, rho: float, rho1: float, R: float,
    constants: CertificateConstants, center=(0.0, 0.0),
) -> ThreeSphereCertificate:
    """Pure L2 certificate; the exponent drops to theta1 / 4."""
    th1 = constants.theta1(r, rho, rho1)
    flags = _admissibility(constants, r, rho, rho1, R)
    theta = th1 / 4.0
    grid = u.grid
    cx, cy = center
    A = integrate(u.values**2, grid, Disk(cx, cy, r))
    lhs = integrate(u.values**2, grid, Disk(cx, cy, rho))
    w = {k: rho1 ** (2 * k) for k in range(5)}
    B, _ = _ball_norm_sums(u, rho1, range(5), w, center=center)
    degenerate = A == 0.0 or B == 0.0
    cemp = float("nan") if degenerate else lhs / (A**theta * B ** (1.0 - theta))
    return ThreeSphereCertificate(
        version="v3", r=r, rho=rho, rho1=rho1, R=R,
        theta1=th1, theta=theta, A=A, B=B, lhs=lhs, C_emp=cemp,
        exp_argument=constants.exp_argument(rho, rho1, R),
        admissible=not flags, flags=flags, degenerate=degenerate,
        constants_label=constants.label,
    )


def three_sphere_complete(
    u: ScalarField,
    u0: ScalarField,
    epsilon: float,
    radii: tuple,
    R: float,
    constants: CertificateConstants,
) -> ThreeSphereCertificate:
    """Certificate for the inhomogeneous equation via the split u - u0.

    ``u0`` is the clamped solution carrying the right hand side, so
    u - u0 solves the homogeneous equation and gets the plain L2
    certificate; the reported constant then bounds u itself with the
    epsilon-augmented norms.
    """
    if u0 is None:
        raise ValueError("u0 (clamped inhomogeneous solution) is required")
    r, rho, rho1 = radii
    diff = ScalarField(u.grid, u.values - u0.values, u.domain_mask)
    base = three_sphere_v3(diff, r, rho, rho1, R, constants)
    grid = u.grid
    lhs = math.sqrt(integrate(u.values**2, grid, Disk(0, 0, rho)))
    a_norm = math.sqrt(integrate(u.values**2, grid, Disk(0, 0, r)))
    w = {k: rho1 ** (2 * k) for k in range(5)}
    b_sq, _ = _ball_norm_sums(u, rho1, range(5), w)
    b_norm = math.sqrt(b_sq)
    theta = base.theta
    denom = (a_norm + epsilon) ** theta * (b_norm + epsilon) ** (1.0 - theta)
    cemp = lhs / denom if denom > 0 else float("nan")
    return ThreeSphereCertificate(
        version="complete", r=r, rho=rho, rho1=rho1, R=R,
        theta1=base.theta1, theta=theta,
        A=(a_norm + epsilon) ** 2, B=(b_norm + epsilon) ** 2, lhs=lhs**2,
        C_emp=cemp,
        exp_argument=base.exp_argument,
        admissible=base.admissible, flags=base.flags,
        degenerate=denom == 0.0,
        constants_label=constants.label,
    )


# ---------------------------------------------------------------------------
# supporting inequalities


def poincare_check(u: ScalarField, r: float, R: float) -> float:
    """Measured constant of the mean-corrected second order bound.

    Subtracts the B_r means of the value and gradient, then returns
    (I |u_r|^2 + R^2 I |grad u_r|^2) / (R^4 (R/r)^2 I |grad^2 u|^2)
    with all integrals over B_R.  Affine fields are degenerate (0/0)
    and reported as nan.
    """
    if not 0 < r <= R:
        raise ValueError("need 0 < r <= R")
    grid = u.grid
    stack = u.derivative_stack(2)
    small = Disk(0, 0, r)
    frac_small = region_fractions(grid, small)
    area = float(frac_small.sum()) * grid.h**2
    mean_u = float(np.sum(u.values * frac_small) * grid.h**2) / area
    gx, gy = stack[(1, 0)], stack[(0, 1)]
    mean_gx = float(np.sum(gx * frac_small) * grid.h**2) / area
    mean_gy = float(np.sum(gy * frac_small) * grid.h**2) / area

    pts = grid.points()
    tilde = u.values - mean_u - mean_gx * pts[..., 0] - mean_gy * pts[..., 1]
    grad_sq = (gx - mean_gx) ** 2 + (gy - mean_gy) ** 2
    big = Disk(0, 0, R)
    num = integrate(tilde**2, grid, big) + R**2 * integrate(grad_sq, grid, big)
    hess = integrate(stack.norm_sq(2), grid, big)
    u_scale = integrate(u.values**2, grid, big)
    if hess <= 1e-20 * max(u_scale / R**4, 1.0):
        return float("nan")  # affine field, both sides vanish
    return num / (R**4 * (R / r) ** 2 * hess)


def caccioppoli_check(u: ScalarField, t: float) -> float:
    """Measured constant of the interior third-derivative bound.

    Returns I_{B_{t/2}} |grad^3 u|^2 / I_{B_t} sum_k (t^{k-3} |grad^k u|)^2
    for a solution field u; nan when the denominator vanishes.
    """
    grid = u.grid
    stack = u.derivative_stack(3)
    num = integrate(stack.norm_sq(3), grid, Disk(0, 0, t / 2))
    den = 0.0
    for k in range(3):
        den += t ** (2 * k - 6) * integrate(stack.norm_sq(k), grid, Disk(0, 0, t))
    return num / den if den > 0 else float("nan")


def interpolation_check(u: ScalarField, r: float) -> float:
    """Measured constant of ||u||_H3 <= C ||u||_L2^(1/4) ||u||_H4^(3/4).

    Norms are normalized with the ball radius as the dimensional
    parameter, so the ratio is scale and amplitude invariant.
    """
    grid = u.grid
    stack = u.derivative_stack(4)
    sums = []
    for k in range(5):
        sums.append(integrate(stack.norm_sq(k), grid, Disk(0, 0, r)))
    if sums[0] == 0.0:
        raise ValueError("interpolation check needs a nonzero field")
    norm = lambda m: math.sqrt(sum(r ** (2 * k) * sums[k] for k in range(m + 1))) / r
    return norm(3) / (norm(0) ** 0.25 * norm(4) ** 0.75)
