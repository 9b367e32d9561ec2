"""Forward simulation: the population system and the single-q oracle.

The single-q (deterministic) solver is the ground-truth reference the
population layer is checked against: the population output equals the
density-weighted expectation of single-q outputs, so a Monte Carlo mean
over parameter draws must converge to the population trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import AssembledOperators, assemble
from .density import QPoint, RhoParams, sample_array
from .errors import SimulationDivergenceError
from .grid import GridSpec, eta_mass_matrix, eta_stiffness_matrix
from .parallel import thread_map
from .sampled import SampledSystem, build_sampled


@dataclass
class Episode:
    """One drinking episode on the uniform tau-grid.

    ``u`` holds the zero-order-hold input at j = 0..mu-1 and ``y_obs``
    the observations at j = 0..mu; the state always starts at zero.
    """

    id: str
    tau: float
    u: np.ndarray
    y_obs: np.ndarray
    x0_zero: bool = True

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.y_obs = np.asarray(self.y_obs, dtype=float)
        if not self.tau > 0:
            raise ValueError(f"episode {self.id}: tau must be positive")
        if self.y_obs.shape != (self.u.shape[0] + 1,):
            raise ValueError(
                f"episode {self.id}: need len(y_obs) == len(u) + 1, got "
                f"{self.y_obs.shape[0]} and {self.u.shape[0]}"
            )
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.y_obs))):
            raise ValueError(f"episode {self.id}: non-finite samples")
        if np.any(self.u < 0):
            raise ValueError(f"episode {self.id}: negative input values")
        if not self.x0_zero:
            raise ValueError("nonzero initial states are not modeled")

    @property
    def steps(self) -> int:
        return self.u.shape[0]


def simulate(sys: SampledSystem, u: np.ndarray, return_states: bool = False):
    """Run the affine recursion from x0 = 0; output at j = 0..len(u).

    With ``return_states`` the full state trajectory comes back too (the
    adjoint pass consumes it).
    """
    u = np.asarray(u, dtype=float)
    mu = u.shape[0]
    b = sys.block_size
    bhat = sys.Bhat.reshape(sys.ncells, b)
    x = np.zeros((sys.ncells, b))
    y = np.empty(mu + 1)
    states = np.zeros((mu + 1, sys.dim)) if return_states else None
    chat = sys.Chat
    for j in range(mu):
        y[j] = chat @ x.reshape(-1)
        if return_states:
            states[j] = x.reshape(-1)
        x = np.einsum("cij,cj->ci", sys.A_blocks, x) + bhat * u[j]
    y[mu] = chat @ x.reshape(-1)
    if return_states:
        states[mu] = x.reshape(-1)
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
        raise SimulationDivergenceError("state recursion produced non-finite values")
    return (y, states) if return_states else y


def deterministic_operators(q, n: int) -> AssembledOperators:
    """Single-q operators on the hat basis alone (no parameter cells)."""
    q1, q2 = (q.q1, q.q2) if isinstance(q, QPoint) else (float(q[0]), float(q[1]))
    if not q1 > 0:
        raise ValueError(f"diffusivity q1 must be positive, got {q1}")
    e00 = np.zeros((n + 1, n + 1))
    e00[0, 0] = 1.0
    bvec = np.zeros(n + 1)
    bvec[n] = q2
    cvec = np.zeros(n + 1)
    cvec[0] = 1.0
    return AssembledOperators.from_dense(
        M=eta_mass_matrix(n),
        K=e00 + q1 * eta_stiffness_matrix(n),
        Bvec=bvec,
        Cvec=cvec,
    )


def deterministic_system(q, n: int, tau: float) -> SampledSystem:
    return build_sampled(deterministic_operators(q, n), tau)


def simulate_deterministic(q, n: int, tau: float, u: np.ndarray) -> np.ndarray:
    """Output of the single-q model for one input sequence."""
    return simulate(deterministic_system(q, n, tau), u)


def population_system(
    rho: RhoParams, spec: GridSpec, quad_order: int = 8, norm_quad_order: int = 24
) -> SampledSystem:
    ops = assemble(spec, rho, quad_order, norm_quad_order)
    return build_sampled(ops, spec.tau)


def population_vs_montecarlo(
    rho: RhoParams,
    spec: GridSpec,
    u: np.ndarray,
    nsamples: int,
    seed: int,
    quad_order: int = 8,
):
    """Population output against the Monte Carlo mean of single-q runs.

    Returns (population output, MC-mean output, sup-norm discrepancy).
    """
    pop = simulate(population_system(rho, spec, quad_order=quad_order), u)
    qs = sample_array(rho, nsamples, seed)
    mc = montecarlo_mean_output(qs, spec.n, spec.tau, u)
    return pop, mc, float(np.abs(pop - mc).max())


def montecarlo_mean_output(qs: np.ndarray, n: int, tau: float, u: np.ndarray) -> np.ndarray:
    """Mean single-q output over an array of parameter draws."""
    runs = thread_map(lambda q: simulate_deterministic(q, n, tau, u), qs)
    return np.mean(runs, axis=0)
