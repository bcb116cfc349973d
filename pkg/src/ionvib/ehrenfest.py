"""Mean-field mixed quantum-classical dynamics with trajectory averaging.

Each trajectory carries quantum electronic amplitudes c and classical
dimensionless mode coordinates (q_k, p_k) with the convention
a_k + a_k^dag <-> sqrt(2) q_k.  Equations of motion (all rates in rad/fs):

    i dc/dt   = H_el(q, t) c,   H_el(q)_ij = delta_ij + sum_k kappa_ijk sqrt(2) q_k
    dq_k/dt   = nu_k p_k
    dp_k/dt   = -nu_k q_k - sqrt(2) sum_ij Re(c_i^* kappa_ijk c_j)

Initial (q, p) are Wigner samples of the ground or thermal oscillator state:
independent Gaussians with variance nbar + 1/2 per coordinate.

Randomness comes from numpy's PCG64 generator; the stream for trajectory r is
seeded with SeedSequence([seed, r]), so ensembles are reproducible across
platforms and independent of scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConvergenceError, InvalidModelError
from .model import LvcmSpec
from .trace import PopulationTrace


@dataclass
class TrajectoryState:
    """One trajectory's quantum amplitudes and classical mode coordinates."""

    c: np.ndarray
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=complex)
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)


@dataclass(frozen=True)
class EnsembleConfig:
    """Trajectory count, initial sampling scheme, and the master seed."""

    trajectories: int = 100
    sampling: str = "wigner_ground"
    nbar: float = 0.0
    seed: int = 0
    initial_state: int = 0
    tol: float = 1e-10

    def __post_init__(self):
        if self.trajectories < 1:
            raise InvalidModelError("need at least one trajectory")
        if self.sampling not in ("wigner_ground", "wigner_thermal"):
            raise InvalidModelError(f"unknown sampling scheme {self.sampling!r}")


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_initial(config: EnsembleConfig, spec: LvcmSpec, rng: np.random.Generator) -> TrajectoryState:
    """Draw one Wigner-sampled initial condition."""
    var = 0.5 if config.sampling == "wigner_ground" else config.nbar + 0.5
    n = spec.mode_count
    q = rng.normal(0.0, np.sqrt(var), size=n)
    p = rng.normal(0.0, np.sqrt(var), size=n)
    c = np.zeros(spec.state_count, dtype=complex)
    c[config.initial_state] = 1.0
    return TrajectoryState(c=c, q=q, p=p)


def _electronic_hamiltonian(spec: LvcmSpec, q: np.ndarray, t_fs: float) -> np.ndarray:
    h = spec.electronic_matrix(t_fs)
    if spec.mode_count:
        h = h + np.tensordot(spec.kappa, np.sqrt(2.0) * q, axes=([2], [0]))
    return h


def mean_field_energy(spec: LvcmSpec, state: TrajectoryState, t_fs: float = 0.0) -> float:
    """Conserved mean-field energy (rad/fs) for time-independent models."""
    h = _electronic_hamiltonian(spec, state.q, t_fs)
    e_el = float(np.real(np.vdot(state.c, h @ state.c)))
    e_cl = float(0.5 * np.sum(spec.nu * (state.q**2 + state.p**2)))
    return e_el + e_cl


def evolve_trajectory(spec: LvcmSpec, state: TrajectoryState, times_fs, tol: float = 1e-10):
    """Integrate one trajectory; returns |c_i(t)|^2 with shape (T, M)."""
    times = np.asarray(times_fs, dtype=float)
    m, n = spec.state_count, spec.mode_count
    y0 = np.concatenate([state.c, state.q.astype(complex), state.p.astype(complex)])
    kappa = spec.kappa

    def rhs(t, y):
        c = y[:m]
        q = y[m : m + n].real
        p = y[m + n :].real
        h = _electronic_hamiltonian(spec, q, t)
        dc = -1j * (h @ c)
        dq = spec.nu * p
        force = np.sqrt(2.0) * np.real(np.einsum("i,ijk,j->k", c.conj(), kappa, c)) if n else np.zeros(0)
        dp = -spec.nu * q - force
        return np.concatenate([dc, dq.astype(complex), dp.astype(complex)])

    sol = solve_ivp(
        rhs,
        (times[0], times[-1]),
        y0,
        t_eval=times,
        method="DOP853",
        rtol=tol,
        atol=tol,
    )
    if not sol.success:
        raise ConvergenceError(f"trajectory integration failed: {sol.message}")
    c_t = sol.y[:m, :]
    return np.abs(c_t.T) ** 2


def ensemble_average(spec: LvcmSpec, config: EnsembleConfig, times_fs) -> PopulationTrace:
    """Mean populations over the ensemble, with per-point standard errors."""
    times = np.asarray(times_fs, dtype=float)
    runs = np.empty((config.trajectories, len(times), spec.state_count))
    for r in range(config.trajectories):
        rng = trajectory_rng(config.seed, r)
        state = sample_initial(config, spec, rng)
        runs[r] = evolve_trajectory(spec, state, times, config.tol)
    mean = runs.mean(axis=0)
    if config.trajectories > 1:
        stderr = runs.std(axis=0, ddof=1) / np.sqrt(config.trajectories)
    else:
        stderr = np.zeros_like(mean)
    return PopulationTrace(
        times_fs=times,
        populations=mean,
        stderr=stderr,
        metadata={
            "method": "ehrenfest",
            "trajectories": config.trajectories,
            "sampling": config.sampling,
            "nbar": config.nbar,
            "seed": config.seed,
            "rng": "numpy PCG64, SeedSequence([seed, trajectory])",
        },
    )
