"""Driver systems and fixed-step integration.

Three systems feed the sensor experiments: a surface-reaction limit cycle
(system X), a periodically forced variant with quasiperiodic long-run
dynamics (system Y), and the chaotic Lorenz attractor (system Z).
Trajectories come from classical fixed-step RK4 so runs are
bit-reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


class NonFiniteState(RuntimeError):
    """Integration produced a non-finite state (step size too large)."""


class InsufficientData(ValueError):
    """Trajectory too short for the requested burn-in / stride / count."""


@dataclass(frozen=True)
class TakoudisParams:
    """Dimensionless rate constants of the surface-reaction oscillator."""

    gamma1: float
    gamma2: float
    alpha1: float
    alpha2: float

    def __post_init__(self):
        vals = (self.gamma1, self.gamma2, self.alpha1, self.alpha2)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError("rate constants must be finite and nonnegative")


@dataclass(frozen=True)
class ForcingParams:
    """Rate constants for the periodically forced oscillator.

    The gas-phase pressure of the second reactant is modulated as
    A0 + A*cos(omega*t); A0 > A >= 0 keeps the effective rate positive.
    """

    alpha1: float
    gamma1: float
    gamma2: float
    A0: float
    A: float
    omega: float

    def __post_init__(self):
        if not (self.A0 > self.A >= 0):
            raise ValueError("forcing requires A0 > A >= 0")
        if min(self.alpha1, self.gamma1, self.gamma2) < 0:
            raise ValueError("rate constants must be nonnegative")


@dataclass(frozen=True)
class LorenzParams:
    sigma: float
    beta: float
    rho: float

    def __post_init__(self):
        if min(self.sigma, self.beta, self.rho) <= 0:
            raise ValueError("Lorenz parameters must be strictly positive")


# Parameter sets used throughout the experiments: X sits on a limit cycle,
# Y is quasiperiodic under the forcing, Z is the chaotic Lorenz attractor.
X_PARAMS = TakoudisParams(gamma1=0.001, gamma2=0.002, alpha1=0.016, alpha2=0.0278)
Y_PARAMS = ForcingParams(
    alpha1=0.019, gamma1=0.001, gamma2=0.002, A0=0.028, A=0.002097, omega=0.01722
)
Z_PARAMS = LorenzParams(sigma=10.0, beta=8.0 / 3.0, rho=28.0)


@dataclass(frozen=True)
class Trajectory:
    """Uniformly spaced state sequence of one system.

    ``dt`` records the integrator step; after subsampling the times keep a
    constant spacing that is a multiple of ``dt``.
    """

    times: np.ndarray
    states: np.ndarray
    dt: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        if times.ndim != 1 or states.ndim != 2 or len(times) != len(states):
            raise ValueError("times and states must align one row per sample")
        if len(times) >= 2:
            gaps = np.diff(times)
            if gaps.min() <= 0:
                raise ValueError("times must be strictly increasing")
            if not np.allclose(gaps, gaps[0], rtol=1e-9, atol=1e-12 * abs(gaps[0])):
                raise ValueError("times must be uniformly spaced")
        if not np.isfinite(states).all():
            raise NonFiniteState("trajectory contains non-finite states")

    def __len__(self):
        return len(self.times)

    @property
    def spacing(self) -> float:
        if len(self.times) < 2:
            return self.dt
        return float(self.times[1] - self.times[0])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


def takoudis_rhs(state, p: TakoudisParams) -> np.ndarray:
    """Time derivative of the fractional surface coverages (theta_A, theta_B)."""
    a, b = float(state[0]), float(state[1])
    vac = 1.0 - a - b
    rxn = a * b * vac * vac
    return np.array(
        [p.alpha1 * vac - p.gamma1 * a - rxn, p.alpha2 * vac - p.gamma2 * b - rxn]
    )


def forced_takoudis_rhs(state, t: float, p: ForcingParams) -> np.ndarray:
    """Same vector field with the second adsorption rate modulated in time."""
    a, b = float(state[0]), float(state[1])
    alpha2 = p.A0 + p.A * math.cos(p.omega * t)
    vac = 1.0 - a - b
    rxn = a * b * vac * vac
    return np.array(
        [p.alpha1 * vac - p.gamma1 * a - rxn, alpha2 * vac - p.gamma2 * b - rxn]
    )


def lorenz_rhs(state, p: LorenzParams) -> np.ndarray:
    x, y, z = float(state[0]), float(state[1]), float(state[2])
    return np.array([p.sigma * (y - x), x * (p.rho - z) - y, x * y - p.beta * z])


def integrate(rhs, x0, t_end: float, dt: float, t0: float = 0.0) -> Trajectory:
    """Integrate ``rhs(t, state)`` with classical fixed-step RK4.

    The step is snapped to the nearest value that divides ``t_end`` into an
    integer number of steps, so the trajectory always lands exactly on
    ``t_end``. Deterministic for fixed inputs. Raises
    :class:`NonFiniteState` as soon as any component stops being finite,
    which usually means the step size is too large for the vector field.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    y = np.asarray(x0, dtype=float)
    n_steps = max(1, int(round(t_end / dt)))
    dt = t_end / n_steps
    states = np.empty((n_steps + 1, y.size))
    states[0] = y
    half = 0.5 * dt
    sixth = dt / 6.0
    for i in range(n_steps):
        t = t0 + i * dt
        k1 = rhs(t, y)
        k2 = rhs(t + half, y + half * k1)
        k3 = rhs(t + half, y + half * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        if not math.isfinite(float(y.sum())):
            raise NonFiniteState(f"state became non-finite at t={t + dt:.6g}")
        states[i + 1] = y
    times = t0 + dt * np.arange(n_steps + 1)
    return Trajectory(times=times, states=states, dt=dt)


def sample(traj: Trajectory, burn_in: float, stride: int, n: int) -> Trajectory:
    """Drop the transient, subsample every ``stride`` steps, keep ``n`` samples."""
    if stride < 1:
        raise ValueError("stride must be a positive integer")
    if n < 1:
        raise ValueError("n must be a positive integer")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    start = int(round(burn_in / traj.spacing))
    idx = start + stride * np.arange(n)
    if idx[-1] >= len(traj):
        raise InsufficientData(
            f"need sample index {idx[-1]} but trajectory has {len(traj)} points"
        )
    return Trajectory(times=traj.times[idx], states=traj.states[idx], dt=traj.dt)


def find_period(traj: Trajectory, var: int = 0) -> float:
    """Estimate the oscillation period by recurrence of mid-level upward crossings.

    Locates times where component ``var`` crosses the midpoint of its range
    going up (linearly interpolated between steps) and returns the median
    gap between consecutive crossings.
    """
    v = traj.states[:, var]
    level = 0.5 * (v.min() + v.max())
    below = v[:-1] < level
    above = v[1:] >= level
    hits = np.nonzero(below & above)[0]
    if len(hits) < 3:
        raise InsufficientData("fewer than three upward crossings; no period found")
    frac = (level - v[hits]) / (v[hits + 1] - v[hits])
    crossing_times = traj.times[hits] + frac * traj.spacing
    gaps = np.diff(crossing_times)
    return float(np.median(gaps))


def simulate_x(
    t_end: float, dt: float = 0.1, x0=(0.3, 0.3), params: TakoudisParams = X_PARAMS
) -> Trajectory:
    return integrate(lambda t, s: takoudis_rhs(s, params), x0, t_end, dt)


def simulate_y(
    t_end: float, dt: float = 0.1, x0=(0.3, 0.3), params: ForcingParams = Y_PARAMS
) -> Trajectory:
    return integrate(lambda t, s: forced_takoudis_rhs(s, t, params), x0, t_end, dt)


def simulate_z(
    t_end: float, dt: float = 0.005, x0=(1.0, 1.0, 1.0), params: LorenzParams = Z_PARAMS
) -> Trajectory:
    return integrate(lambda t, s: lorenz_rhs(s, params), x0, t_end, dt)


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write ``t,s0,s1[,s2]`` rows at full double precision."""
    dim = traj.states.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"s{i}" for i in range(dim)])
        for t, row in zip(traj.times, traj.states):
            writer.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in row])


def trajectory_from_csv(path, dt: float | None = None) -> Trajectory:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    times = data[:, 0]
    spacing = times[1] - times[0] if len(times) > 1 else 1.0
    return Trajectory(times=times, states=data[:, 1:], dt=dt if dt else float(spacing))
