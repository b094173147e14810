"""Quadratic weights, frame normalization and conjugated operators.

The weighted estimates in this package all use the weight
``w(x) = exp(-sigma(x)^-beta)`` where ``sigma(x) = sqrt(Gamma x . x)``
for an SPD matrix Gamma.  The admissible exponents beta are governed by
the number

    omega0 = rho_max / rho_min - 1,      Q = sqrt(g0) Gamma^-1 sqrt(g0),

where g0 is the Riemannian metric at the origin (the inverse of the
operator coefficient matrix) and rho_min/rho_max are the extreme
eigenvalues of Q.  ``omega0_closed`` evaluates that formula and
``omega0_bruteforce`` maximizes the underlying two-point function over
unit orthogonal pairs, so both routes can be cross-checked.

``normalize_pair`` builds the linear change of frame that maps the
first factor's coefficient matrix at the origin to the identity and
diagonalizes the second, which is the geometry in which the fourth
order weighted estimate is stated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import check_spd, spd_sqrt


@dataclass(frozen=True)
class FrameNormalization:
    """Linear frame Psi = R2 H R1 adapted to a pair of SPD matrices."""

    R1: np.ndarray
    H: np.ndarray
    R2: np.ndarray
    Psi: np.ndarray
    mu: np.ndarray  # eigenvalues of the transformed second matrix, ascending

    def to_json(self) -> dict:
        return {
            "R1": self.R1.tolist(),
            "H": self.H.tolist(),
            "R2": self.R2.tolist(),
            "Psi": self.Psi.tolist(),
            "mu": self.mu.tolist(),
        }


def _rotation_diagonalizing(a: np.ndarray):
    """Proper rotation R with R a R^T diagonal (ascending) for symmetric a."""
    evals, vecs = np.linalg.eigh(a)
    if np.linalg.det(vecs) < 0:
        vecs[:, 0] = -vecs[:, 0]
    return vecs.T, evals


def normalize_pair(g1_inv0, g2_inv0) -> FrameNormalization:
    """Frame in which g1^-1(0) becomes the identity and g2^-1(0) diagonal.

    Inputs are the operator coefficient matrices at the origin.  R1
    diagonalizes the first, H rescales its eigenvalues to one, R2
    diagonalizes the conjugated second matrix; mu lists the resulting
    diagonal entries in ascending order.
    """
    g1 = check_spd(g1_inv0, "g1_inv0")
    g2 = check_spd(g2_inv0, "g2_inv0")
    R1, nu = _rotation_diagonalizing(g1)
    H = np.diag(1.0 / np.sqrt(nu))
    conj = H @ R1 @ g2 @ R1.T @ H.T
    R2, mu = _rotation_diagonalizing(0.5 * (conj + conj.T))
    Psi = R2 @ H @ R1
    frame = FrameNormalization(R1=R1, H=H, R2=R2, Psi=Psi, mu=mu)
    eye = Psi @ g1 @ Psi.T
    diag = Psi @ g2 @ Psi.T
    if np.max(np.abs(eye - np.eye(len(eye)))) > 1e-10 * max(1.0, np.abs(g1).max()):
        raise ArithmeticError("frame normalization failed to whiten g1_inv0")
    off = diag - np.diag(np.diag(diag))
    if np.max(np.abs(off)) > 1e-10 * max(1.0, np.abs(diag).max()):
        raise ArithmeticError("frame normalization failed to diagonalize g2_inv0")
    return frame


class QuadraticWeight:
    """sigma(x) = sqrt(Gamma x . x) and w(x) = exp(-sigma^-beta).

    Evaluations are refused inside the punctured core sigma < sigma_min
    (default 0.05): the weighted integrands carry sigma^(-beta-2) and
    are only ever used on test functions supported away from the
    origin.
    """

    def __init__(self, Gamma, beta: float, sigma_min: float = 0.05):
        self.Gamma = check_spd(Gamma, "Gamma")
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.beta = float(beta)
        self.sigma_min = float(sigma_min)
        evals = np.linalg.eigvalsh(self.Gamma)
        self.m_star = float(evals[0])
        self.m_star_upper = float(evals[-1])
        # lam with lam^2 |x|^2 <= sigma^2 <= lam^-2 |x|^2
        self.lam = float(min(np.sqrt(self.m_star), 1.0 / np.sqrt(self.m_star_upper), 1.0))

    @classmethod
    def from_mu(cls, mu, beta: float, sigma_min: float = 0.05) -> "QuadraticWeight":
        """Weight matrix diag(1/sqrt(mu_i)) adapted to a normalized pair."""
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0):
            raise ValueError("mu entries must be positive")
        return cls(np.diag(1.0 / np.sqrt(mu)), beta, sigma_min)

    def sigma(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.einsum("...i,ij,...j->...", x, self.Gamma, x))

    def grad_sigma(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = self.sigma(x)
        return np.einsum("ij,...j->...i", self.Gamma, x) / s[..., None]

    def hess_sigma(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = self.sigma(x)
        gx = np.einsum("ij,...j->...i", self.Gamma, x)
        outer = gx[..., :, None] * gx[..., None, :]
        return self.Gamma / s[..., None, None] - outer / s[..., None, None] ** 3

    def neg_exponent(self, x) -> np.ndarray:
        """sigma^-beta, the magnitude in the exponent of w."""
        return self.sigma(x) ** (-self.beta)

    def w(self, x) -> np.ndarray:
        s = self.sigma(x)
        if np.any(s <= 0):
            raise ValueError("weight evaluated at the origin")
        return np.exp(-(s ** (-self.beta)))

    def check_core(self, x) -> None:
        s = self.sigma(x)
        if np.any(s < self.sigma_min):
            raise ValueError(
                f"evaluation inside the punctured core sigma < {self.sigma_min}"
            )

    def to_json(self) -> dict:
        return {
            "Gamma": self.Gamma.tolist(),
            "beta": self.beta,
            "sigma_min": self.sigma_min,
            "m_star": self.m_star,
            "m_star_upper": self.m_star_upper,
            "lam": self.lam,
        }


@dataclass
class Omega0Report:
    """Closed form and swept values of the weight-exponent threshold."""

    closed_form: float
    brute_force: float | None
    maximizer: tuple | None
    Q: np.ndarray
    rho_min: float
    rho_max: float

    def to_json(self) -> dict:
        out = {
            "closed_form": self.closed_form,
            "brute_force": self.brute_force,
            "Q": self.Q.tolist(),
            "rho_min": self.rho_min,
            "rho_max": self.rho_max,
        }
        if self.maximizer is not None:
            out["maximizer"] = [v.tolist() for v in self.maximizer]
        return out


def omega0_closed(Gamma, g0) -> Omega0Report:
    """omega0 from the eigenvalue ratio of Q = sqrt(g0) Gamma^-1 sqrt(g0).

    ``g0`` is the Riemannian metric at the origin, i.e. the inverse of
    the operator coefficient matrix there.
    """
    Gamma = check_spd(Gamma, "Gamma")
    g0 = check_spd(g0, "g0")
    root = spd_sqrt(g0)
    Q = root @ np.linalg.inv(Gamma) @ root
    Q = 0.5 * (Q + Q.T)
    evals = np.linalg.eigvalsh(Q)
    rho_min, rho_max = float(evals[0]), float(evals[-1])
    return Omega0Report(
        closed_form=rho_max / rho_min - 1.0,
        brute_force=None,
        maximizer=None,
        Q=Q,
        rho_min=rho_min,
        rho_max=rho_max,
    )


def _pair_objective(Q, Qinv, y, eta):
    return float(y @ Q @ y * (y @ Qinv @ y + eta @ Qinv @ eta) - 2.0)


def omega0_bruteforce(Gamma, g0, angular_step: float = 2 * np.pi / 4096) -> Omega0Report:
    """Maximize the pair function over unit orthogonal (y, eta).

    In 2D eta is determined by y up to sign, so a single angle sweep
    with golden-section refinement suffices.  For n = 3 or 4 a coarse
    product sampling is used instead.  The result never exceeds the
    closed form beyond refinement tolerance.
    """
    if angular_step <= 0:
        raise ValueError("angular step must be positive")
    report = omega0_closed(Gamma, g0)
    Q = report.Q
    n = Q.shape[0]
    Qinv = np.linalg.inv(Q)
    if n == 2:
        thetas = np.arange(0.0, np.pi, angular_step)
        c, s = np.cos(thetas), np.sin(thetas)
        ys = np.stack([c, s], axis=-1)
        etas = np.stack([-s, c], axis=-1)
        qy = np.einsum("ki,ij,kj->k", ys, Q, ys)
        qiy = np.einsum("ki,ij,kj->k", ys, Qinv, ys)
        qie = np.einsum("ki,ij,kj->k", etas, Qinv, etas)
        vals = qy * (qiy + qie) - 2.0
        k = int(np.argmax(vals))

        def h_of(theta):
            y = np.array([np.cos(theta), np.sin(theta)])
            e = np.array([-np.sin(theta), np.cos(theta)])
            return _pair_objective(Q, Qinv, y, e)

        lo, hi = thetas[k] - angular_step, thetas[k] + angular_step
        phi = (np.sqrt(5.0) - 1.0) / 2.0
        a_, b_ = lo, hi
        c_ = b_ - phi * (b_ - a_)
        d_ = a_ + phi * (b_ - a_)
        fc, fd = h_of(c_), h_of(d_)
        while (b_ - a_) > 1e-10:
            if fc >= fd:
                b_, d_, fd = d_, c_, fc
                c_ = b_ - phi * (b_ - a_)
                fc = h_of(c_)
            else:
                a_, c_, fc = c_, d_, fd
                d_ = a_ + phi * (b_ - a_)
                fd = h_of(d_)
        best_theta = 0.5 * (a_ + b_)
        best = h_of(best_theta)
        y = np.array([np.cos(best_theta), np.sin(best_theta)])
        eta = np.array([-np.sin(best_theta), np.cos(best_theta)])
    elif n in (3, 4):
        rng = np.random.default_rng(0)
        best = -np.inf
        y = eta = None
        for _ in range(20000):
            v = rng.normal(size=n)
            v /= np.linalg.norm(v)
            u = rng.normal(size=n)
            u -= (u @ v) * v
            u /= np.linalg.norm(u)
            val = _pair_objective(Q, Qinv, v, u)
            if val > best:
                best, y, eta = val, v, u
    else:
        raise ValueError("brute-force sweep implemented for n <= 4 only")
    report.brute_force = float(best)
    report.maximizer = (y, eta)
    return report


def kantorovich_check(A, X) -> float:
    """Slack of the product bound (A X, X)(A^-1 X, X) <= c(A) |X|^4.

    c(A) = ((r + 1/r)/2)^2 with r = sqrt of the eigenvalue ratio.  The
    returned slack is nonnegative up to rounding for every SPD A and
    nonzero X.
    """
    A = check_spd(A, "A")
    X = np.asarray(X, dtype=float)
    if not np.any(X):
        raise ValueError("X must be nonzero")
    evals = np.linalg.eigvalsh(A)
    amin, amax = evals[0], evals[-1]
    bound = 0.25 * (np.sqrt(amax / amin) + np.sqrt(amin / amax)) ** 2
    lhs = float(X @ A @ X) * float(X @ np.linalg.solve(A, X))
    return bound * float(X @ X) ** 2 - lhs


class Metric:
    """Coefficient field x -> g^{ij}(x) of a second order operator."""

    def mat(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        """d/dx_k of the coefficient matrix, shape (..., 2, 2, 2), index [k, i, j]."""
        raise NotImplementedError

    def metric_lower(self, x) -> np.ndarray:
        return np.linalg.inv(self.mat(x))


class ConstantMetric(Metric):
    def __init__(self, matrix):
        self.matrix = check_spd(matrix, "metric matrix")

    def mat(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.matrix, x.shape[:-1] + (2, 2)).copy()

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (2, 2, 2))


class FunctionMetric(Metric):
    """Metric from a callable x -> 2x2 matrix, gradients by differences.

    ``func`` must accept points of shape (..., 2) and return
    (..., 2, 2).  Central fourth order differences with step fd_step
    supply the derivative field unless an analytic ``grad`` callable is
    given.
    """

    def __init__(self, func, grad=None, fd_step: float = 1e-4):
        self.func = func
        self._grad = grad
        self.fd_step = fd_step

    def mat(self, x):
        return self.func(np.asarray(x, dtype=float))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self._grad is not None:
            return self._grad(x)
        h = self.fd_step
        out = np.empty(x.shape[:-1] + (2, 2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = 1.0
            out[..., k, :, :] = (
                8 * (self.func(x + h * e) - self.func(x - h * e))
                - (self.func(x + 2 * h * e) - self.func(x - 2 * h * e))
            ) / (12 * h)
        return out


@dataclass
class WeightQuantities:
    """Pointwise data derived from a weight and a metric.

    All arrays are batched over the leading point dimensions.  ``S``
    and ``M`` are the symmetric matrices entering the commutator
    bounds; ``M`` annihilates the weight gradient.
    """

    sigma: np.ndarray
    w: np.ndarray
    grad_sigma_norm: np.ndarray
    F_sigma: np.ndarray
    F_w: np.ndarray
    B: np.ndarray
    S: np.ndarray
    M: np.ndarray
    Y: np.ndarray
    G: np.ndarray

    def as_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "w": self.w,
            "grad_sigma_norm": self.grad_sigma_norm,
            "F_sigma": self.F_sigma,
            "F_w": self.F_w,
            "B": self.B,
            "S": self.S,
            "M": self.M,
            "Y": self.Y,
        }


def _sigma_core(weight: QuadraticWeight, metric: Metric, x):
    """Shared pieces: sigma, gradients, laplacian and F for sigma itself."""
    x = np.asarray(x, dtype=float)
    s = weight.sigma(x)
    if np.any(s <= 0):
        raise ValueError("evaluation at the origin")
    gs = weight.grad_sigma(x)
    hs = weight.hess_sigma(x)
    G = metric.mat(x)
    dG = metric.grad(x)
    grad_norm_sq = np.einsum("...i,...ij,...j->...", gs, G, gs)
    lap = np.einsum("...kkj,...j->...", dG, gs) + np.einsum("...ij,...ij->...", G, hs)
    F_sigma = (s * lap - grad_norm_sq) / grad_norm_sq
    return x, s, gs, G, dG, grad_norm_sq, F_sigma


def _b_field(weight: QuadraticWeight, metric: Metric, x):
    """B = w grad_g w / |grad_g w|^2 expressed through sigma."""
    x, s, gs, G, _, grad_norm_sq, _ = _sigma_core(weight, metric, x)
    beta = weight.beta
    # w / phi'(sigma) = sigma^(beta+1) / beta
    scale = s ** (beta + 1.0) / beta
    return scale[..., None] * np.einsum("...ij,...j->...i", G, gs) / grad_norm_sq[..., None]


def weight_quantities(
    weight: QuadraticWeight,
    metric: Metric,
    x,
    fd_step: float | None = None,
    enforce_core: bool = True,
) -> WeightQuantities:
    """Evaluate sigma, w and the derived matrices at point(s) x.

    The quantities for the composed weight w = exp(-sigma^-beta) are
    obtained from the sigma quantities through the composition rules
    with Phi(s) = s^beta / beta.  Derivatives of the vector field B are
    fourth order central differences of its closed form; everything
    else is analytic in sigma and the metric's own derivative data.
    """
    if enforce_core:
        weight.check_core(x)
    x, s, gs, G, dG, grad_norm_sq, F_sigma = _sigma_core(weight, metric, x)
    beta = weight.beta
    Phi = s**beta / beta
    dPhi = s ** (beta - 1.0)
    F_w = Phi * F_sigma - dPhi * s

    grad_g_sigma = np.einsum("...ij,...j->...i", G, gs)
    Y = grad_g_sigma / np.sqrt(grad_norm_sq)[..., None]
    B = _b_field(weight, metric, x)

    if fd_step is None:
        fd_step = 1e-3 * float(np.min(s))
    h = fd_step
    dB = np.empty(x.shape[:-1] + (2, 2))  # [k, j] = d_k B^j
    for k in range(2):
        e = np.zeros(2)
        e[k] = 1.0
        dB[..., k, :] = (
            8 * (_b_field(weight, metric, x + h * e) - _b_field(weight, metric, x - h * e))
            - (_b_field(weight, metric, x + 2 * h * e) - _b_field(weight, metric, x - 2 * h * e))
        ) / (12 * h)
    divB = dB[..., 0, 0] + dB[..., 1, 1]

    # S^{ij} = 1/2 [ (div B - F_w) G^{ij} - d_k B^j G^{ki} - d_k B^i G^{kj} + B^k d_k G^{ij} ]
    term1 = (divB - F_w)[..., None, None] * G
    term2 = np.einsum("...kj,...ki->...ij", dB, G)
    term3 = np.einsum("...ki,...kj->...ij", dB, G)
    term4 = np.einsum("...k,...kij->...ij", B, dG)
    S = 0.5 * (term1 - term2 - term3 + term4)
    g_lower = np.linalg.inv(G)
    M = S @ g_lower

    w = np.exp(-(s ** (-beta)))
    return WeightQuantities(
        sigma=s,
        w=w,
        grad_sigma_norm=np.sqrt(grad_norm_sq),
        F_sigma=F_sigma,
        F_w=F_w,
        B=B,
        S=S,
        M=M,
        Y=Y,
        G=G,
    )


def f_w_direct(weight: QuadraticWeight, metric: Metric, x) -> np.ndarray:
    """F for the composed weight from its own derivatives (no composition rule)."""
    x, s, gs, G, dG, grad_norm_sq, _ = _sigma_core(weight, metric, x)
    beta = weight.beta
    w = np.exp(-(s ** (-beta)))
    dphi = beta * s ** (-beta - 1.0) * w
    ddphi = w * (beta**2 * s ** (-2 * beta - 2.0) - beta * (beta + 1.0) * s ** (-beta - 2.0))
    hs = weight.hess_sigma(x)
    lap_sigma = np.einsum("...kkj,...j->...", dG, gs) + np.einsum("...ij,...ij->...", G, hs)
    lap_w = ddphi * grad_norm_sq + dphi * lap_sigma
    grad_w_sq = dphi**2 * grad_norm_sq
    return (w * lap_w - grad_w_sq) / grad_w_sq


@dataclass
class ConjugateSplit:
    """Direct and closed-form pieces of the conjugated operator."""

    direct: np.ndarray
    symmetric: np.ndarray
    antisymmetric: np.ndarray
    mismatch: float  # L2 norm of direct - (symmetric + antisymmetric)


def conjugate_split(metric: Metric, weight: QuadraticWeight, f, tau: float) -> ConjugateSplit:
    """Split w^-tau P(w^tau f) into symmetric and antisymmetric parts.

    ``f`` is a ScalarField compactly supported away from the origin.
    The direct route applies the discrete divergence-form operator to
    w^tau f and divides by w^tau; the closed forms are

        P_s f = lap_g f + tau^2 (|grad_g w|^2 / w^2) f
        P_a f = 2 tau (|grad_g w|^2 / w^2) A_w(f),
        A_w(f) = (w / |grad_g w|) dY f + (F_w / 2) f.

    Both are evaluated with second order stencils; their sum matches
    the direct route to discretization order.  tau = 0 is rejected
    because the antisymmetric normalization divides by tau.
    """
    from .fields import ScalarField  # local import to avoid a cycle

    if tau == 0:
        raise ValueError("tau must be nonzero for the antisymmetric split")
    if not isinstance(f, ScalarField):
        raise TypeError("f must be a ScalarField")
    grid = f.grid
    pts = grid.points()
    support = np.abs(f.values) > 0
    if not support.any():
        z = np.zeros_like(f.values)
        return ConjugateSplit(z, z.copy(), z.copy(), 0.0)
    s = weight.sigma(pts)
    smin_support = float(s[support].min())
    if smin_support < weight.sigma_min:
        raise ValueError("support of f reaches into the punctured core")

    halo = support.copy()
    for _ in range(3):
        halo[1:, :] |= halo[:-1, :]
        halo[:-1, :] |= halo[1:, :]
        halo[:, 1:] |= halo[:, :-1]
        halo[:, :-1] |= halo[:, 1:]
    if np.any(s[halo] <= 0):
        raise ValueError("support of f reaches the origin")

    beta = weight.beta
    shift = smin_support ** (-beta)  # renormalize w to avoid under/overflow
    s_safe = np.where(halo, s, 1.0)
    safe = np.where(halo, shift - s_safe ** (-beta), 0.0)

    wtau = np.exp(tau * safe) * halo
    G = metric.mat(pts)
    dG = metric.grad(pts)

    def P_apply(vals):
        fld = ScalarField(grid, vals)
        stack = fld.derivative_stack(2, order=2)
        lap = (
            G[..., 0, 0] * stack[(2, 0)]
            + 2 * G[..., 0, 1] * stack[(1, 1)]
            + G[..., 1, 1] * stack[(0, 2)]
        )
        drift = (
            (dG[..., 0, 0, 0] + dG[..., 1, 1, 0]) * stack[(1, 0)]
            + (dG[..., 0, 0, 1] + dG[..., 1, 1, 1]) * stack[(0, 1)]
        )
        return lap + drift

    direct = np.where(halo, np.exp(-tau * safe), 0.0) * P_apply(wtau * f.values)

    qty = weight_quantities(weight, metric, pts[halo], enforce_core=False)
    grad_sigma_norm = np.zeros(grid.shape)
    grad_sigma_norm[halo] = qty.grad_sigma_norm
    F_w = np.zeros(grid.shape)
    F_w[halo] = qty.F_w
    Y = np.zeros(grid.shape + (2,))
    Y[halo] = qty.Y
    # |grad_g w|^2 / w^2 = (phi'/phi)^2 |grad_g sigma|^2
    ratio = np.where(halo, (beta * s_safe ** (-beta - 1.0) * grad_sigma_norm) ** 2, 0.0)

    stack = f.derivative_stack(2, order=2)
    lap_f = (
        G[..., 0, 0] * stack[(2, 0)]
        + 2 * G[..., 0, 1] * stack[(1, 1)]
        + G[..., 1, 1] * stack[(0, 2)]
        + (dG[..., 0, 0, 0] + dG[..., 1, 1, 0]) * stack[(1, 0)]
        + (dG[..., 0, 0, 1] + dG[..., 1, 1, 1]) * stack[(0, 1)]
    )
    symmetric = lap_f + tau**2 * ratio * f.values

    grad_f = np.stack([stack[(1, 0)], stack[(0, 1)]], axis=-1)
    dY = np.einsum("...i,...i->...", grad_f, Y)
    # w / |grad_g w| = sigma^(beta+1) / (beta |grad_g sigma|)
    w_over = np.where(halo, s_safe ** (beta + 1.0), 0.0) / np.where(
        grad_sigma_norm > 0, beta * grad_sigma_norm, 1.0
    )
    A_w = w_over * dY + 0.5 * F_w * f.values
    antisymmetric = 2.0 * tau * ratio * A_w

    mism = direct - symmetric - antisymmetric
    mismatch = float(np.sqrt(np.sum(mism[halo] ** 2) * grid.h**2))
    return ConjugateSplit(direct, symmetric, antisymmetric, mismatch)
