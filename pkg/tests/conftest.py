"""Shared fixtures: random feasible parameter vectors, canonical inputs,
and quadrature oracles used across the suite."""

import numpy as np
import pytest

from popdiff.density import RhoParams
from popdiff.grid import GridSpec


def random_rho(rng: np.random.Generator) -> RhoParams:
    """A generic feasible parameter vector with healthy mass in the box.

    Means sit in the middle of the box and the spreads are a moderate
    fraction of the box widths, so densities at box edges are small but
    not negligible (support gradients stay well conditioned).
    """
    a1 = rng.uniform(0.05, 0.4)
    w1 = rng.uniform(0.6, 1.4)
    a2 = rng.uniform(0.0, 0.4)
    w2 = rng.uniform(0.6, 1.4)
    mu1 = a1 + w1 * rng.uniform(0.35, 0.65)
    mu2 = a2 + w2 * rng.uniform(0.35, 0.65)
    l11 = w1 * rng.uniform(0.15, 0.3)
    l22 = w2 * rng.uniform(0.15, 0.3)
    l21 = rng.uniform(-0.3, 0.3) * l22
    return RhoParams(a1, a1 + w1, a2, a2 + w2, mu1, mu2, l11, l21, l22)


def interior_points(rho: RhoParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Points strictly inside the support box, 5% margin per side."""
    box = rho.box
    m1 = 0.05 * (box.b1 - box.a1)
    m2 = 0.05 * (box.b2 - box.a2)
    q1 = rng.uniform(box.a1 + m1, box.b1 - m1, count)
    q2 = rng.uniform(box.a2 + m2, box.b2 - m2, count)
    return np.column_stack([q1, q2])


def truncated_moments(rho: RhoParams, order: int = 48):
    """Quadrature oracle: mean and covariance of the truncated law."""
    from popdiff.density import phi_values

    x, w = np.polynomial.legendre.leggauss(order)
    h1 = 0.5 * (rho.b1 - rho.a1)
    h2 = 0.5 * (rho.b2 - rho.a2)
    x1 = 0.5 * (rho.a1 + rho.b1) + h1 * x
    x2 = 0.5 * (rho.a2 + rho.b2) + h2 * x
    w1 = h1 * w
    w2 = h2 * w
    phi = phi_values(x1[:, None], x2[None, :], rho)
    mass = w1 @ phi @ w2
    mean1 = (w1 * x1) @ phi @ w2 / mass
    mean2 = w1 @ phi @ (w2 * x2) / mass
    e11 = (w1 * x1**2) @ phi @ w2 / mass
    e22 = w1 @ phi @ (w2 * x2**2) / mass
    e12 = (w1 * x1) @ phi @ (w2 * x2) / mass
    mean = np.array([mean1, mean2])
    cov = np.array(
        [[e11 - mean1**2, e12 - mean1 * mean2],
         [e12 - mean1 * mean2, e22 - mean2**2]]
    )
    return mean, cov


@pytest.fixture
def rho_smooth() -> RhoParams:
    """Canonical moderate-spread parameter vector used by many tests."""
    return RhoParams(
        a1=0.2, b1=1.4, a2=0.3, b2=2.0,
        mu1=0.7, mu2=1.1, l11=0.18, l21=0.05, l22=0.25,
    )


@pytest.fixture
def spec_small() -> GridSpec:
    return GridSpec(n=4, m1=2, m2=2, tau=1 / 12)


def pulse_input(steps: int, tau: float, onset_h: float = 0.5,
                width_h: float = 2.0, height: float = 1.0) -> np.ndarray:
    """Canonical single box pulse on the uniform input grid."""
    t = np.arange(steps) * tau
    u = np.zeros(steps)
    u[(t >= onset_h) & (t < onset_h + width_h)] = height
    return u


def smooth_pulse_input(steps: int, tau: float, center_h: float = 2.0,
                       halfwidth_h: float = 1.5, height: float = 1.0) -> np.ndarray:
    """Raised-cosine bump; smooth in time for refinement studies."""
    t = np.arange(steps) * tau
    z = np.clip((t - center_h) / halfwidth_h, -1.0, 1.0)
    return height * 0.5 * (1 + np.cos(np.pi * z)) * (np.abs(z) < 1.0)
