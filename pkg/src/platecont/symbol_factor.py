"""Quartic root solving and factorization into two second order forms.

The elliptic quartic symbol has two conjugate pairs of complex roots
``alpha_k + i beta_k`` in the slope variable t = xi1/xi2.  Each pair
yields a 2x2 SPD coefficient matrix

    g_k = sqrt(a0) * [[1, -alpha_k], [-alpha_k, alpha_k^2 + beta_k^2]]

and the symbol factors as p = p2 * p1 with p_k(xi) = g_k^{ij} xi_i xi_j.
Roots are computed with companion-matrix eigenvalues plus one Newton
polish.  On a grid, branch labels are propagated by nearest-neighbor
continuation from a seed node so the factor fields stay smooth; sorting
alone can swap branches between adjacent nodes and destroy regularity.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import check_spd
from .elasticity import (
    ElasticityTensorSpec,
    EllipticityError,
    QuarticCoefficients,
    classify_dichotomy,
    evaluate_tensor,
)


class FactorizationError(ValueError):
    """The reconstructed symbol disagrees with the input coefficients."""


class RootBoundError(ValueError):
    """A root left the admissible box guaranteed by ellipticity."""


@dataclass(frozen=True)
class RootPair:
    """Upper half-plane roots of the quartic slope polynomial."""

    alpha1: float
    beta1: float
    alpha2: float
    beta2: float
    condition_number: float = 1.0

    def as_complex(self):
        return complex(self.alpha1, self.beta1), complex(self.alpha2, self.beta2)


@dataclass(frozen=True)
class MetricPair:
    """The two SPD coefficient matrices of the factorization."""

    g1: np.ndarray
    g2: np.ndarray
    a0: float

    def matrices(self):
        return self.g1, self.g2


def _quartic_array(q):
    if isinstance(q, QuarticCoefficients):
        return q.as_array()
    a = np.asarray(q, dtype=float)
    if a.shape != (5,):
        raise ValueError("expected five quartic coefficients")
    return a


def _polish(coeffs, z, steps=1):
    """Newton steps on the quartic for one complex root."""
    for _ in range(steps):
        p = ((coeffs[0] * z + coeffs[1]) * z + coeffs[2]) * z * z + coeffs[3] * z + coeffs[4]
        dp = ((4 * coeffs[0] * z + 3 * coeffs[1]) * z + 2 * coeffs[2]) * z + coeffs[3]
        if dp == 0:
            break
        z = z - p / dp
    return z


def _root_condition(coeffs, z):
    """Relative condition number of one root of the quartic."""
    dp = ((4 * coeffs[0] * z + 3 * coeffs[1]) * z + 2 * coeffs[2]) * z + coeffs[3]
    num = sum(abs(c) * abs(z) ** (4 - i) for i, c in enumerate(coeffs))
    den = abs(z) * abs(dp)
    return num / den if den > 0 else np.inf


def _pair_from_roots(roots, a, imag_tol) -> RootPair:
    if np.any(np.abs(roots.imag) <= imag_tol * (1.0 + np.abs(roots.real))):
        raise EllipticityError("real root: ellipticity violated")
    upper = roots[roots.imag > 0]
    if len(upper) != 2:
        raise EllipticityError("expected exactly two upper half-plane roots")
    # lexicographic by (alpha, beta), with a tolerance so rounding noise in
    # alpha cannot flip the order of a symmetric pair
    scale = 1.0 + np.abs(upper.real).max()
    if abs(upper[0].real - upper[1].real) <= 1e-9 * scale:
        if upper[0].imag > upper[1].imag:
            upper = upper[::-1]
    elif upper[0].real > upper[1].real:
        upper = upper[::-1]
    cond = max(_root_condition(a, z) for z in roots)
    return RootPair(
        alpha1=float(upper[0].real),
        beta1=float(upper[0].imag),
        alpha2=float(upper[1].real),
        beta2=float(upper[1].imag),
        condition_number=float(cond),
    )


def solve_quartic(q, imag_tol=1e-10, recon_rtol=1e-9) -> RootPair:
    """Roots of a0 t^4 + a1 t^3 + a2 t^2 + a3 t + a4 as conjugate pairs.

    Eigenvalues of the companion matrix, optionally one Newton polish
    per root, grouped into the two upper half-plane representatives
    ordered lexicographically by (alpha, beta).  The polish helps
    simple roots but breaks the exact conjugate pairing near double
    roots (evaluation noise dominates there), so the variant with the
    smaller reconstruction error wins.  Raises EllipticityError when a
    root is (numerically) real and FactorizationError when the monic
    polynomial rebuilt from the pairs misses the input.
    """
    a = _quartic_array(q)
    if a[0] <= 0:
        raise EllipticityError("leading coefficient a0 must be positive")
    raw = np.roots(a)  # companion-matrix eigenvalues
    polished = np.array([_polish(a, z) for z in raw])
    best = None
    best_err = np.inf
    first_error = None
    for roots in (polished, raw):
        try:
            pair = _pair_from_roots(roots, a, imag_tol)
        except EllipticityError as exc:
            first_error = first_error or exc
            continue
        err = np.max(np.abs(reconstruct_quartic(pair, a[0]) - a)) / np.max(np.abs(a))
        if err < best_err:
            best, best_err = pair, err
    if best is None:
        raise first_error
    if best_err > recon_rtol:
        raise FactorizationError(
            f"ill-conditioned quartic: reconstruction error {best_err:.3e}"
        )
    return best


def reconstruct_quartic(pair: RootPair, a0: float) -> np.ndarray:
    """Coefficients of a0 * (t^2 - 2 a1 t + |z1|^2)(t^2 - 2 a2 t + |z2|^2)."""
    p1 = np.array([1.0, -2 * pair.alpha1, pair.alpha1**2 + pair.beta1**2])
    p2 = np.array([1.0, -2 * pair.alpha2, pair.alpha2**2 + pair.beta2**2])
    return a0 * np.convolve(p1, p2)


def symmetric_functions(t1, t2, w1, w2) -> np.ndarray:
    """The four symmetric functions tying roots to coefficient ratios.

    With w_k = beta_k^2:  a1 = -2 a0 P1, a2 = a0 P2, a3 = -2 a0 P3,
    a4 = a0 P4.
    """
    return np.array(
        [
            t1 + t2,
            t1**2 + t2**2 + 4 * t1 * t2 + w1 + w2,
            t1 * (t2**2 + w2) + t2 * (t1**2 + w1),
            (t1**2 + w1) * (t2**2 + w2),
        ]
    )


def root_jacobian(t1, t2, w1, w2) -> float:
    """|J| of the symmetric-function map at (t1, t2, w1, w2)."""
    return abs((t1 - t2) ** 4 + 2 * (w1 + w2) * (t1 - t2) ** 2 + (w1 - w2) ** 2)


def metrics_from_roots(pair: RootPair, a0: float) -> MetricPair:
    """Build the two SPD factor matrices from a root pair."""
    if a0 <= 0:
        raise EllipticityError("a0 must be positive")
    if pair.beta1 <= 0 or pair.beta2 <= 0:
        raise EllipticityError("root imaginary parts must be positive")
    s = math.sqrt(a0)

    def one(alpha, beta):
        return np.array(
            [[s, -alpha * s], [-alpha * s, s * (alpha**2 + beta**2)]]
        )

    return MetricPair(one(pair.alpha1, pair.beta1), one(pair.alpha2, pair.beta2), a0)


def expand_product(pair: MetricPair) -> np.ndarray:
    """Quartic coefficients of (g2 xi.xi)(g1 xi.xi)."""
    A1, B1, C1 = pair.g1[0, 0], pair.g1[0, 1], pair.g1[1, 1]
    A2, B2, C2 = pair.g2[0, 0], pair.g2[0, 1], pair.g2[1, 1]
    return np.array(
        [
            A2 * A1,
            2 * A2 * B1 + 2 * B2 * A1,
            A2 * C1 + 4 * B2 * B1 + C2 * A1,
            2 * B2 * C1 + 2 * C2 * B1,
            C2 * C1,
        ]
    )


def verify_factorization(pair: MetricPair, q, rtol: float = 1e-9) -> float:
    """Max relative coefficient error of the expanded product vs q.

    Raises FactorizationError (naming the worst coefficient) when the
    deviation exceeds rtol.
    """
    a = _quartic_array(q)
    recon = expand_product(pair)
    scale = np.max(np.abs(a))
    err = np.abs(recon - a) / scale
    worst = int(np.argmax(err))
    dev = float(err[worst])
    if dev > rtol:
        raise FactorizationError(
            f"factorization failure at coefficient a{worst}: relative error {dev:.3e}"
        )
    return dev


@dataclass(frozen=True)
class ExplicitConstants:
    """Explicit constants of the factorization and weight admissibility.

    gamma1 = min(gamma, 1/(16 M), 1) bounds the normalized symbol;
    gamma2 = 5^-6 gamma1^15 bounds the factor-matrix eigenvalues;
    epsilon0 = gamma1^3 / sqrt(50) is the guaranteed lower bound on the
    root imaginary parts; beta_worstcase = 1/gamma2^2 - 1 is the weight
    exponent this chain certifies.  beta_practical comes instead from
    the measured eigenvalue ratio of the two factors at the origin with
    a safety margin, since the worst-case value is astronomically large.
    """

    gamma1: float
    gamma2: float
    beta_worstcase: float
    beta_practical: float
    epsilon0: float
    beta_bound: float = 0.0  # raw eigenvalue-ratio bound before margin

    def to_json(self) -> dict:
        return {
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "beta_worstcase": self.beta_worstcase,
            "beta_practical": self.beta_practical,
            "epsilon0": self.epsilon0,
            "beta_bound": self.beta_bound,
        }


def explicit_constants(
    gamma: float,
    M: float,
    g1_origin=None,
    g2_origin=None,
    margin: float = 0.10,
    beta_floor: float = 0.10,
) -> ExplicitConstants:
    """Worst-case constant chain plus a usable weight exponent.

    When the factor matrices at the origin are given, the practical
    exponent is (1 + margin) times the bound
    sqrt(mu_max nu_max / (mu_min nu_min)) - 1 computed from their
    eigenvalues, floored at ``beta_floor`` (the bound is 0 for the
    isotropic symbol and a zero exponent gives a degenerate weight).
    """
    if gamma <= 0 or M <= 0:
        raise ValueError("gamma and M must be positive")
    gamma1 = min(gamma, 1.0 / (16.0 * M), 1.0)
    gamma2 = 5.0**-6 * gamma1**15
    beta_worst = 1.0 / gamma2**2 - 1.0
    eps0 = gamma1**3 / math.sqrt(50.0)
    bound = 0.0
    if g1_origin is not None and g2_origin is not None:
        nu = np.linalg.eigvalsh(check_spd(g1_origin, "g1(0)"))
        mu = np.linalg.eigvalsh(check_spd(g2_origin, "g2(0)"))
        bound = math.sqrt((mu[-1] * nu[-1]) / (mu[0] * nu[0])) - 1.0
    beta_pract = max((1.0 + margin) * bound, beta_floor)
    return ExplicitConstants(
        gamma1=gamma1,
        gamma2=gamma2,
        beta_worstcase=beta_worst,
        beta_practical=beta_pract,
        epsilon0=eps0,
        beta_bound=bound,
    )


@dataclass
class FactorField:
    """Factor matrices on a grid with continuous branch assignment.

    Arrays are indexed [i, j] over grid nodes.  ``g1`` and ``g2`` have
    shape (nx, ny, 2, 2); ``alpha``/``beta`` hold the per-branch roots.
    ``lipschitz`` and ``hessian`` are max-norm finite difference
    estimates of the first and second derivatives of the six matrix
    entries.  ``swap_flags`` lists nodes where the two branch pairings
    were numerically indistinguishable.
    """

    xs: np.ndarray
    ys: np.ndarray
    a0: np.ndarray
    alpha: np.ndarray  # (nx, ny, 2)
    beta: np.ndarray  # (nx, ny, 2)
    g1: np.ndarray
    g2: np.ndarray
    seed: tuple
    dichotomy: str
    lipschitz: float = 0.0
    hessian: float = 0.0
    swap_flags: list = field(default_factory=list)

    @property
    def shape(self):
        return self.a0.shape

    def metric_pair(self, i: int, j: int) -> MetricPair:
        return MetricPair(self.g1[i, j], self.g2[i, j], float(self.a0[i, j]))

    def save(self, path_prefix: str) -> None:
        """Write <prefix>.json header and <prefix>.csv with 6 entries/node."""
        header = {
            "nx": len(self.xs),
            "ny": len(self.ys),
            "x": [float(self.xs[0]), float(self.xs[-1])],
            "y": [float(self.ys[0]), float(self.ys[-1])],
            "seed": list(self.seed),
            "dichotomy": self.dichotomy,
            "lipschitz": self.lipschitz,
            "hessian": self.hessian,
            "swap_flags": [list(t) for t in self.swap_flags],
            "columns": ["i", "j", "g1_11", "g1_12", "g1_22", "g2_11", "g2_12", "g2_22"],
        }
        with open(str(path_prefix) + ".json", "w") as fh:
            json.dump(header, fh, indent=2, sort_keys=True)
        with open(str(path_prefix) + ".csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header["columns"])
            for i in range(len(self.xs)):
                for j in range(len(self.ys)):
                    writer.writerow(
                        [i, j]
                        + [f"{v:.17g}" for v in (
                            self.g1[i, j, 0, 0], self.g1[i, j, 0, 1], self.g1[i, j, 1, 1],
                            self.g2[i, j, 0, 0], self.g2[i, j, 0, 1], self.g2[i, j, 1, 1],
                        )]
                    )


def _pairing_cost(prev, cand):
    """Displacement of keeping vs swapping the branch labels."""
    keep = abs(cand[0] - prev[0]) + abs(cand[1] - prev[1])
    swap = abs(cand[1] - prev[0]) + abs(cand[0] - prev[1])
    return keep, swap


def factor_field(
    spec: ElasticityTensorSpec,
    xs,
    ys,
    seed: tuple | None = None,
    classify_step: float | None = None,
    ambiguity_tol: float = 1e-12,
) -> FactorField:
    """Solve the quartic at every node and assign branches continuously.

    The region spanned by the node coordinates must satisfy the
    dichotomy condition: the classification runs first and a "Violated"
    verdict is refused (near-zero discriminants on a positive region
    would blow up the conditioning, and switching formulas mid-field is
    worse than failing).  For the identically-zero verdict the closed
    forms alpha = -a1/(4 a0), beta^2 = a2/(2 a0) - 3 a1^2/(16 a0^2)
    replace the eigenvalue path.  Branches spread from the seed node by
    breadth-first continuation, choosing at each neighbor the pairing
    closest to the already-labeled side.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    nx, ny = len(xs), len(ys)
    if nx < 2 or ny < 2:
        raise ValueError("factor_field needs at least a 2x2 grid")
    region = ("rect", xs[0], xs[-1], ys[0], ys[-1])
    if classify_step is None:
        classify_step = max(xs[1] - xs[0], ys[1] - ys[0])
    report = classify_dichotomy(spec, region, classify_step)
    if report.verdict == "Violated":
        raise EllipticityError(
            "dichotomy violated on the grid region; factorization refused"
        )

    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    c6 = evaluate_tensor(spec, pts)
    a = np.stack(
        [
            c6[..., 0],
            4 * c6[..., 2],
            2 * c6[..., 1] + 4 * c6[..., 4],
            4 * c6[..., 3],
            c6[..., 5],
        ],
        axis=-1,
    )
    alpha = np.empty((nx, ny, 2))
    beta = np.empty((nx, ny, 2))
    gam1 = min(spec.gamma, 1.0 / (16.0 * spec.M), 1.0)
    eps0 = gam1**3 / math.sqrt(50.0)
    box = 1.0 / (gam1 * eps0)

    if report.verdict == "Zero":
        a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
        al = -a1 / (4 * a0)
        b2 = a2 / (2 * a0) - 3 * a1**2 / (16 * a0**2)
        if np.any(b2 <= 0):
            raise EllipticityError("closed-form beta^2 non-positive on Zero field")
        be = np.sqrt(b2)
        alpha[...] = al[..., None]
        beta[...] = be[..., None]
        swap_flags: list = []
    else:
        upper = np.empty((nx, ny, 2), dtype=complex)
        for i in range(nx):
            for j in range(ny):
                pair = solve_quartic(a[i, j])
                upper[i, j, 0] = complex(pair.alpha1, pair.beta1)
                upper[i, j, 1] = complex(pair.alpha2, pair.beta2)
        if seed is None:
            seed = (nx // 2, ny // 2)
        swap_flags = []
        assigned = np.zeros((nx, ny), dtype=bool)
        order = np.empty((nx, ny, 2), dtype=complex)
        order[seed] = upper[seed]
        assigned[seed] = True
        queue = [seed]
        while queue:
            i, j = queue.pop(0)
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < nx and 0 <= jj < ny and not assigned[ii, jj]:
                    keep, swap = _pairing_cost(order[i, j], upper[ii, jj])
                    if abs(keep - swap) <= ambiguity_tol:
                        swap_flags.append((ii, jj))
                    order[ii, jj] = upper[ii, jj] if keep <= swap else upper[ii, jj, ::-1]
                    assigned[ii, jj] = True
                    queue.append((ii, jj))
        alpha = order.real
        beta = order.imag

    if np.any(beta <= eps0):
        raise RootBoundError(
            f"root imaginary part fell below the guaranteed bound {eps0:.3e}"
        )
    if np.any(np.abs(alpha) > box) or np.any(beta > box):
        raise RootBoundError(f"root left the admissible box of half width {box:.3e}")

    a0 = a[..., 0]
    s = np.sqrt(a0)
    g = np.empty((nx, ny, 2, 2, 2))  # last axis: branch
    g[..., 0, 0, :] = s[..., None]
    g[..., 0, 1, :] = -alpha * s[..., None]
    g[..., 1, 0, :] = g[..., 0, 1, :]
    g[..., 1, 1, :] = s[..., None] * (alpha**2 + beta**2)
    g1 = g[..., 0]
    g2 = g[..., 1]

    hx = xs[1] - xs[0]
    hy = ys[1] - ys[0]
    entries = np.stack(
        [g1[..., 0, 0], g1[..., 0, 1], g1[..., 1, 1], g2[..., 0, 0], g2[..., 0, 1], g2[..., 1, 1]]
    )
    lip = 0.0
    hess = 0.0
    for e in entries:
        dx = np.diff(e, axis=0) / hx
        dy = np.diff(e, axis=1) / hy
        lip = max(lip, np.abs(dx).max(), np.abs(dy).max())
        if e.shape[0] > 2:
            hess = max(hess, np.abs(np.diff(e, 2, axis=0) / hx**2).max())
        if e.shape[1] > 2:
            hess = max(hess, np.abs(np.diff(e, 2, axis=1) / hy**2).max())

    return FactorField(
        xs=xs,
        ys=ys,
        a0=a0,
        alpha=alpha,
        beta=beta,
        g1=g1,
        g2=g2,
        seed=tuple(seed) if seed is not None else (nx // 2, ny // 2),
        dichotomy=report.verdict,
        lipschitz=float(lip),
        hessian=float(hess),
        swap_flags=swap_flags,
    )
