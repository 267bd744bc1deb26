"""Continuous-time lateral/heading error dynamics of the single-track vehicle model.

Ground-truth plant used for synthetic data generation and for closed-loop
model-mismatch studies.  State ordering: [e_d, e_d_dot, e_phi, e_phi_dot]
(lateral error, its rate, heading error, its rate); control input is the
front steering angle in radians.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

# small-angle regime boundary for the front steering angle (5 degrees)
SMALL_ANGLE_RAD = np.deg2rad(5.0)


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of the single-track (bicycle) lateral model."""

    mass_kg: float
    inertia_z_kgm2: float
    dist_front_m: float
    dist_rear_m: float
    stiff_front_N_per_rad: float
    stiff_rear_N_per_rad: float
    speed_long_m_per_s: float

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"VehicleParams.{name} must be finite and > 0, got {value!r}")


#: parameters used throughout the reference simulation study
DEFAULT_PARAMS = VehicleParams(
    mass_kg=1573.0,
    inertia_z_kgm2=2873.0,
    dist_front_m=1.10,
    dist_rear_m=1.58,
    stiff_front_N_per_rad=80000.0,
    stiff_rear_N_per_rad=80000.0,
    speed_long_m_per_s=30.0,
)


@dataclass(frozen=True)
class StateVector:
    """Lateral/heading tracking error state [e_d, e_d_dot, e_phi, e_phi_dot]."""

    e_d: float
    e_d_dot: float
    e_phi: float
    e_phi_dot: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e_d, self.e_d_dot, self.e_phi, self.e_phi_dot], dtype=float)

    @staticmethod
    def from_array(x) -> "StateVector":
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (4,):
            raise ValueError(f"state vector must have 4 components, got shape {x.shape}")
        return StateVector(*x)


def state_array(state) -> np.ndarray:
    """Accept a StateVector or any 4-sequence and return a validated float array."""
    x = state.as_array() if isinstance(state, StateVector) else np.asarray(state, dtype=float)
    x = x.reshape(-1)
    if x.shape != (4,):
        raise ValueError(f"state vector must have 4 components, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state vector has non-finite components")
    return x


@dataclass(frozen=True)
class ContinuousModel:
    """State-space matrices chi_dot = H chi + G u (+ W phi_des_rate)."""

    mat_H: np.ndarray
    mat_G: np.ndarray
    mat_W: np.ndarray  # feedforward column for the desired yaw rate


def continuous_matrices(params: VehicleParams) -> ContinuousModel:
    """Evaluate the closed-form state-space matrices for the given parameters.

    Rows 1 and 3 of H are exact unit-shift rows and entries 1 and 3 of G are
    exact zeros; these structural entries are never subject to tolerance.
    """
    m = params.mass_kg
    iz = params.inertia_z_kgm2
    lf = params.dist_front_m
    lr = params.dist_rear_m
    cf = params.stiff_front_N_per_rad
    cr = params.stiff_rear_N_per_rad
    vx = params.speed_long_m_per_s

    c_sum = cf + cr
    c_diff = lf * cf - lr * cr
    c_sq = lf * lf * cf + lr * lr * cr

    H = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, -c_sum / (m * vx), c_sum / m, -c_diff / (m * vx)],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, -c_diff / (iz * vx), c_diff / iz, -c_sq / (iz * vx)],
        ]
    )
    G = np.array([0.0, cf / m, 0.0, lf * cf / iz])
    # desired-yaw-rate feedforward column, zero in the straight-road scenario
    W = np.array([0.0, -vx - c_diff / (m * vx), 0.0, -c_sq / (iz * vx)])
    return ContinuousModel(mat_H=H, mat_G=G, mat_W=W)


def step_continuous(
    model: ContinuousModel,
    state,
    input_rad: float,
    dt_s: float,
    phi_des_rate: float = 0.0,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """Advance chi_dot = H chi + G u by one fixed step of the classical RK4 scheme.

    The input (and optional desired yaw rate) are held constant over the step.
    Optional additive `noise` models the bounded process disturbance and is
    applied once at the end of the step.
    """
    x = state_array(state)
    if not np.isfinite(input_rad):
        raise ValueError("steering input must be finite")
    if not np.isfinite(dt_s) or dt_s <= 0.0:
        raise ValueError(f"dt_s must be > 0, got {dt_s!r}")
    if abs(input_rad) > SMALL_ANGLE_RAD:
        warnings.warn(
            f"steering input {input_rad:.4f} rad exceeds the small-angle regime "
            f"({SMALL_ANGLE_RAD:.4f} rad); linear tire model accuracy degrades",
            RuntimeWarning,
            stacklevel=2,
        )

    H, G, W = model.mat_H, model.mat_G, model.mat_W
    forcing = G * input_rad + W * phi_des_rate

    def f(y):
        return H @ y + forcing

    k1 = f(x)
    k2 = f(x + 0.5 * dt_s * k1)
    k3 = f(x + 0.5 * dt_s * k2)
    k4 = f(x + dt_s * k3)
    out = x + (dt_s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if noise is not None:
        out = out + np.asarray(noise, dtype=float)
    return out


def generate_trajectory(
    model: ContinuousModel,
    initial,
    inputs,
    dt_s: float,
    phi_des_rate: float = 0.0,
    noise_bound: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Simulate the plant under an input sequence.

    Returns an array of shape (len(inputs) + 1, 4); row k is the state before
    inputs[k] is applied, the last row is the final state.  With
    ``noise_bound > 0`` a uniformly distributed bounded disturbance is added
    per step using `rng` (seeded by the caller).
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1)
    if inputs.size == 0:
        raise ValueError("inputs must be non-empty")
    if noise_bound > 0.0 and rng is None:
        rng = np.random.default_rng(0)
    x = state_array(initial)
    out = np.empty((inputs.size + 1, 4))
    out[0] = x
    for k, u in enumerate(inputs):
        w = rng.uniform(-noise_bound, noise_bound, 4) if noise_bound > 0.0 else None
        x = step_continuous(model, x, float(u), dt_s, phi_des_rate=phi_des_rate, noise=w)
        out[k + 1] = x
    return out


def discretize_rk4(model: ContinuousModel, dt_s: float) -> tuple[np.ndarray, np.ndarray]:
    """One-step transition matrices (A, B) implied by the RK4 integrator.

    Because the plant is linear and the input is held over the step, a single
    RK4 step is exactly chi+ = A chi + B u with the truncated exponential
    A = I + hH + ... + h^4 H^4/24 and the matching input column.
    """
    H, G = model.mat_H, model.mat_G
    h = dt_s
    I = np.eye(4)
    H2 = H @ H
    H3 = H2 @ H
    H4 = H3 @ H
    A = I + h * H + (h**2 / 2.0) * H2 + (h**3 / 6.0) * H3 + (h**4 / 24.0) * H4
    Bcol = (h * I + (h**2 / 2.0) * H + (h**3 / 6.0) * H2 + (h**4 / 24.0) * H3) @ G
    return A, Bcol.reshape(4, 1)
