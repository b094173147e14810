"""Plate stiffness tensors, quartic symbols and the dichotomy discriminant.

A 2D fourth order stiffness tensor with the usual minor and major
symmetries carries six independent entries, written here as
``A0, B0, C0, D0, E0, F0``.  They induce the quartic symbol

    p(x; xi) = a0*xi1^4 + a1*xi1^3*xi2 + a2*xi1^2*xi2^2 + a3*xi1*xi2^3 + a4*xi2^4

with ``a0 = A0, a1 = 4*C0, a2 = 2*B0 + 4*E0, a3 = 4*D0, a4 = F0``.  The
module evaluates tensors (constant, orthotropic from engineering
constants, or bivariate polynomial fields), computes the absolute
discriminant of the quartic by two independent routes (a 7x7 resultant
determinant, and a closed form in the complex roots) and classifies a
region as everywhere-positive, identically-zero or mixed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly


class ConvexityError(ValueError):
    """The tensor fails the strong convexity test."""


class EllipticityError(ValueError):
    """The quartic symbol is not elliptic (a0 <= 0 or a real root)."""


class DomainError(ValueError):
    """Evaluation point outside the configured spatial domain."""


KINDS = ("constant", "orthotropic_engineering", "coefficient_field")
COEFF_NAMES = ("A0", "B0", "C0", "D0", "E0", "F0")


@dataclass(frozen=True)
class ElasticityTensorSpec:
    """Stiffness field description plus its a-priori bounds.

    ``kind`` selects the payload layout:

    - ``constant``: payload maps ``A0..F0`` to numbers.
    - ``orthotropic_engineering``: payload maps ``E1, E2, G12, nu12`` to
      numbers; the two shear-normal couplings vanish by symmetry.
    - ``coefficient_field``: payload maps ``A0..F0`` to 2D coefficient
      tables ``c[i][j]`` of bivariate polynomials ``sum c_ij x1^i x2^j``
      of degree at most 4, plus an optional ``halfwidth`` for the square
      domain (default 1).

    ``gamma`` is the strong convexity constant, ``M`` the C^{1,1} norm
    bound and ``rho0`` the length scale used to normalize norms.
    """

    kind: str
    payload: dict
    gamma: float
    M: float
    rho0: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown tensor kind {self.kind!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")

    @property
    def halfwidth(self) -> float:
        if self.kind == "coefficient_field":
            return float(self.payload.get("halfwidth", 1.0))
        return np.inf

    def to_json(self) -> dict:
        payload = self.payload
        if self.kind == "coefficient_field":
            payload = {
                k: (np.asarray(v).tolist() if k in COEFF_NAMES else v)
                for k, v in payload.items()
            }
        return {
            "kind": self.kind,
            "payload": payload,
            "gamma": self.gamma,
            "M": self.M,
            "rho0": self.rho0,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ElasticityTensorSpec":
        return cls(
            kind=data["kind"],
            payload=data["payload"],
            gamma=float(data["gamma"]),
            M=float(data["M"]),
            rho0=float(data.get("rho0", 1.0)),
        )

    @classmethod
    def load(cls, path) -> "ElasticityTensorSpec":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)


def isotropic_spec(lam: float, mu: float, gamma: float | None = None, M: float | None = None):
    """Constant isotropic tensor from the Lame moduli."""
    coeffs = {
        "A0": lam + 2 * mu,
        "B0": lam,
        "C0": 0.0,
        "D0": 0.0,
        "E0": mu,
        "F0": lam + 2 * mu,
    }
    if gamma is None:
        gamma = min(2 * mu, 2 * mu + 2 * lam)
    if M is None:
        M = sum(abs(v) for v in coeffs.values()) * 4
    return ElasticityTensorSpec("constant", coeffs, gamma=gamma, M=M)


def orthotropic_spec(E1, E2, G12, nu12, gamma=None, M=None):
    """Constant orthotropic tensor from plane-stress engineering constants."""
    c6 = _orthotropic_coeffs(E1, E2, G12, nu12)
    payload = {"E1": E1, "E2": E2, "G12": G12, "nu12": nu12}
    if gamma is None:
        gamma = 0.9 * check_convexity(c6, 0.0)[0]
        if gamma <= 0:
            raise ConvexityError("orthotropic constants give a non-convex tensor")
    if M is None:
        M = sum(abs(v) for v in c6) * 4
    return ElasticityTensorSpec("orthotropic_engineering", payload, gamma=gamma, M=M)


def _orthotropic_coeffs(E1, E2, G12, nu12):
    if min(E1, E2, G12) <= 0:
        raise ValueError("E1, E2, G12 must be positive")
    nu21 = nu12 * E2 / E1
    det = 1.0 - nu12 * nu21
    if det <= 0:
        raise ConvexityError(
            "not strongly convex: 1 - nu12*nu21 <= 0 drives the smallest "
            "Voigt eigenvalue nonpositive"
        )
    return np.array([E1 / det, nu12 * E2 / det, 0.0, 0.0, G12, E2 / det])


def evaluate_tensor(spec: ElasticityTensorSpec, x) -> np.ndarray:
    """Evaluate the six stiffness coefficients ``A0..F0`` at point(s) x.

    ``x`` has shape (..., 2); the result has shape (..., 6).  For the
    orthotropic kind the couplings C0 and D0 are identically zero.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("points must have trailing dimension 2")
    base = x.shape[:-1]
    if spec.kind == "constant":
        vals = np.array([float(spec.payload[k]) for k in COEFF_NAMES])
        return np.broadcast_to(vals, base + (6,)).copy()
    if spec.kind == "orthotropic_engineering":
        p = spec.payload
        vals = _orthotropic_coeffs(p["E1"], p["E2"], p["G12"], p["nu12"])
        return np.broadcast_to(vals, base + (6,)).copy()
    # coefficient_field
    hw = spec.halfwidth
    if np.any(np.abs(x) > hw * (1 + 1e-12)):
        raise DomainError(f"point outside the configured square of halfwidth {hw}")
    out = np.empty(base + (6,))
    for j, name in enumerate(COEFF_NAMES):
        table = np.asarray(spec.payload[name], dtype=float)
        out[..., j] = npoly.polyval2d(x[..., 0], x[..., 1], table)
    return out


@dataclass(frozen=True)
class QuarticCoefficients:
    """Coefficients of the quartic symbol at one point."""

    a0: float
    a1: float
    a2: float
    a3: float
    a4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a0, self.a1, self.a2, self.a3, self.a4])

    def __iter__(self):
        return iter(self.as_array())

    def symbol(self, xi1, xi2):
        """Evaluate p(xi) = sum a_{4-h} xi1^h xi2^{4-h}."""
        return (
            self.a0 * xi1**4
            + self.a1 * xi1**3 * xi2
            + self.a2 * xi1**2 * xi2**2
            + self.a3 * xi1 * xi2**3
            + self.a4 * xi2**4
        )


def quartic_coefficients(coeffs6) -> QuarticCoefficients:
    """Map the six tensor entries to the five symbol coefficients."""
    A0, B0, C0, D0, E0, F0 = np.asarray(coeffs6, dtype=float)
    return QuarticCoefficients(A0, 4 * C0, 2 * B0 + 4 * E0, 4 * D0, F0)


def _as_quartic_array(q) -> np.ndarray:
    if isinstance(q, QuarticCoefficients):
        return q.as_array()
    a = np.asarray(q, dtype=float)
    if a.shape[-1] != 5:
        raise ValueError("quartic coefficients need trailing dimension 5")
    return a


def sylvester_matrix(q) -> np.ndarray:
    """7x7 resultant matrix of the quartic and its derivative.

    Accepts a single coefficient vector or a batch (..., 5) and returns
    (..., 7, 7).
    """
    a = _as_quartic_array(q)
    base = a.shape[:-1]
    a0, a1, a2, a3, a4 = (a[..., i] for i in range(5))
    z = np.zeros(base)
    rows = [
        [a0, a1, a2, a3, a4, z, z],
        [z, a0, a1, a2, a3, a4, z],
        [z, z, a0, a1, a2, a3, a4],
        [4 * a0, 3 * a1, 2 * a2, a3, z, z, z],
        [z, 4 * a0, 3 * a1, 2 * a2, a3, z, z],
        [z, z, 4 * a0, 3 * a1, 2 * a2, a3, z],
        [z, z, z, 4 * a0, 3 * a1, 2 * a2, a3],
    ]
    S = np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)
    return S


def discriminant_det(q) -> float | np.ndarray:
    """Absolute discriminant |det S| / a0 of the quartic symbol.

    Accepts a batch (..., 5); a0 must be positive everywhere.
    """
    a = _as_quartic_array(q)
    a0 = a[..., 0]
    if np.any(a0 <= 0):
        raise EllipticityError("a0 must be positive for the discriminant")
    det = np.linalg.det(sylvester_matrix(a))
    out = np.abs(det) / a0
    return float(out) if out.ndim == 0 else out


def discriminant_roots(roots, a0: float) -> float:
    """Discriminant from the two upper-half roots alpha_k + i beta_k.

    ``roots`` is any object exposing alpha1, beta1, alpha2, beta2
    (for instance a RootPair).  Requires beta1, beta2 > 0.
    """
    al1, be1 = float(roots.alpha1), float(roots.beta1)
    al2, be2 = float(roots.alpha2), float(roots.beta2)
    if be1 <= 0 or be2 <= 0:
        raise EllipticityError("root imaginary parts must be positive")
    da = (al1 - al2) ** 2
    return (
        16.0
        * a0**6
        * be1**2
        * be2**2
        * (da + (be1 + be2) ** 2) ** 2
        * (da + (be1 - be2) ** 2) ** 2
    )


def voigt_matrix(coeffs6) -> np.ndarray:
    """Quadratic form of the tensor on symmetric matrices.

    Basis (A11, A22, sqrt(2)*A12), chosen so the Euclidean norm of the
    basis vector equals the Frobenius norm of the symmetric matrix.
    Batched input (..., 6) gives (..., 3, 3).
    """
    c = np.asarray(coeffs6, dtype=float)
    A0, B0, C0, D0, E0, F0 = (c[..., i] for i in range(6))
    s2 = np.sqrt(2.0)
    rows = [
        [A0, B0, s2 * C0],
        [B0, F0, s2 * D0],
        [s2 * C0, s2 * D0, 2 * E0],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def check_convexity(coeffs6, gamma: float):
    """Smallest eigenvalue of the Voigt form and the gamma verdict.

    Returns ``(min_eigenvalue, ok)`` where ok means min >= gamma.
    """
    evals = np.linalg.eigvalsh(voigt_matrix(coeffs6))
    mn = float(evals[..., 0].min())
    return mn, bool(mn >= gamma)


@dataclass
class OrthotropicReport:
    """Sign classification of the orthotropic discriminant factor."""

    k: float
    m: float
    factor: float
    sign: int  # +1 positive discriminant, 0 identically zero
    min_voigt_eigenvalue: float


def orthotropic_discriminant(E1, E2, G12, nu12, zero_tol=1e-12) -> OrthotropicReport:
    """Classify the discriminant of an orthotropic tensor.

    Uses the stiffness ratios k = E1/E2 and m = E1/(2 G12) - nu12.  The
    discriminant is 16 a0 a4 (a2^2 - 4 a0 a4)^2, so its vanishing is
    decided by the reported factor alone.  Raises ConvexityError when
    the underlying tensor is not strongly convex, naming the violating
    Voigt eigenvalue.
    """
    c6 = _orthotropic_coeffs(E1, E2, G12, nu12)
    mn, ok = check_convexity(c6, 0.0)
    if not ok or mn <= 0:
        raise ConvexityError(
            f"orthotropic tensor not strongly convex: min Voigt eigenvalue {mn:.6e}"
        )
    k = E1 / E2
    m = E1 / (2.0 * G12) - nu12
    bracket = (nu12 / k + (1.0 - nu12**2 / k) / (m + nu12)) ** 2 - 1.0 / k
    factor = 4.0 * E1**2 * bracket
    sign = 0 if abs(factor) <= zero_tol * 4.0 * E1**2 else 1
    return OrthotropicReport(k=k, m=m, factor=factor, sign=sign, min_voigt_eigenvalue=mn)


@dataclass
class DichotomyReport:
    """Outcome of sampling the discriminant over a region."""

    verdict: str  # "Positive" | "Zero" | "Violated"
    delta1: float | None
    max_discriminant: float
    tolerance: float
    sample_count: int
    violation_points: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "delta1": self.delta1,
            "max_discriminant": self.max_discriminant,
            "tolerance": self.tolerance,
            "sample_count": self.sample_count,
            "violation_points": [list(map(float, p)) for p in self.violation_points],
        }


def _region_points(region, step: float) -> np.ndarray:
    """Uniform lattice of sample points inside a rect or disk region."""
    if step <= 0:
        raise ValueError("sample step must be positive")
    kind = region[0]
    if kind == "rect":
        _, x0, x1, y0, y1 = region
        xs = np.arange(x0, x1 + 0.5 * step, step)
        ys = np.arange(y0, y1 + 0.5 * step, step)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    elif kind == "disk":
        _, cx, cy, r = region
        xs = np.arange(cx - r, cx + r + 0.5 * step, step)
        ys = np.arange(cy - r, cy + r + 0.5 * step, step)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        keep = (X - cx) ** 2 + (Y - cy) ** 2 <= r**2
        pts = np.stack([X[keep], Y[keep]], axis=-1)
    else:
        raise ValueError(f"unknown region kind {kind!r}")
    if pts.size == 0:
        raise ValueError("region contains no sample points at this step")
    return pts


def classify_dichotomy(
    spec: ElasticityTensorSpec,
    region,
    sample_step: float,
    tol: float | None = None,
) -> DichotomyReport:
    """Sample the discriminant over a region and classify its sign.

    ``region`` is ("rect", x0, x1, y0, y1) or ("disk", cx, cy, r).  When
    ``tol`` is None a band of 1e-9 times the largest sampled value (plus
    a machine-scale guard) separates "zero" from "positive": an exact
    floating-point zero never occurs for a generic determinant.
    """
    pts = _region_points(region, sample_step)
    c6 = evaluate_tensor(spec, pts)
    a = np.stack(
        [c6[:, 0], 4 * c6[:, 2], 2 * c6[:, 1] + 4 * c6[:, 4], 4 * c6[:, 3], c6[:, 5]],
        axis=-1,
    )
    disc = discriminant_det(a)
    disc = np.atleast_1d(disc)
    dmax = float(disc.max())
    if tol is None:
        scale = np.max(np.abs(a), axis=-1) ** 6
        tol = float(1e-9 * dmax + 1e-12 * scale.max() + 1e-300)
    positive = disc > tol
    if np.all(positive):
        return DichotomyReport(
            verdict="Positive",
            delta1=float(disc.min()),
            max_discriminant=dmax,
            tolerance=tol,
            sample_count=len(pts),
        )
    if not np.any(positive):
        return DichotomyReport(
            verdict="Zero",
            delta1=None,
            max_discriminant=dmax,
            tolerance=tol,
            sample_count=len(pts),
        )
    bad = pts[~positive] if positive.sum() >= (~positive).sum() else pts[positive]
    # report the minority side as the offending samples
    return DichotomyReport(
        verdict="Violated",
        delta1=None,
        max_discriminant=dmax,
        tolerance=tol,
        sample_count=len(pts),
        violation_points=[tuple(p) for p in bad[:256]],
    )
