import numpy as np
import pytest

from platecont import elasticity as el


def random_convex_coeffs(rng, gamma, scale=5.0):
    """Random six-coefficient tensor with Voigt form >= gamma, entries bounded.

    Draws a random symmetric 3x3 matrix, shifts its spectrum above
    gamma, rescales into the requested entry range and reads the six
    coefficients back off the Voigt convention.
    """
    margin = 1e-9
    A = rng.normal(size=(3, 3))
    V = 0.5 * (A + A.T)
    evals = np.linalg.eigvalsh(V)
    V = V + (gamma * (1 + margin) + abs(evals[0])) * np.eye(3)
    top = np.abs(V).max()
    if top > scale:
        # rescale but keep the floor at gamma
        V = V * (scale / top)
        evals = np.linalg.eigvalsh(V)
        if evals[0] < gamma * (1 + margin):
            V = V + (gamma * (1 + margin) - evals[0]) * np.eye(3)
    s2 = np.sqrt(2.0)
    return np.array(
        [V[0, 0], V[0, 1], V[0, 2] / s2, V[1, 2] / s2, V[2, 2] / 2.0, V[1, 1]]
    )


def random_quartic(rng, gamma):
    return el.quartic_coefficients(random_convex_coeffs(rng, gamma))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
