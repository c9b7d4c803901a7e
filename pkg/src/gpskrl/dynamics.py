"""Single-track ("bicycle") vehicle dynamics, error states and nominal Jacobians.

State layout used throughout the package (index constants below):

    x = [v_x, v_y, phi, omega, X, Y]

with longitudinal/lateral body velocities (m/s), yaw angle (rad), yaw rate
(rad/s) and global position (m). Controls are u = [a_x, delta_f]
(longitudinal acceleration, front steering angle).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_STATES = 6
N_CONTROLS = 2

VX, VY, PHI, OMEGA, PX, PY = range(6)
AX, DELTA = range(2)

# The lateral-force terms divide by v_x; below this speed the model is
# singular, so callers must clamp first.
V_MIN = 0.1

CONTROL_LOW = np.array([-1.0, -np.pi / 6])
CONTROL_HIGH = np.array([1.0, np.pi / 6])

# Absolute bounds of the error-state sampling region used for training data.
ERROR_BOUNDS = np.array([6.0, 6.0, np.pi / 3, 6.0, 3.0, 3.0])


class SingularSpeedError(ValueError):
    """Raised when the longitudinal speed is below the model's valid floor."""


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of the single-track model.

    m: mass (kg); I_z: yaw inertia (kg m^2); l_f/l_r: CoG-to-axle
    distances (m); C_af/C_ar: front/rear cornering stiffness (N/rad).
    """

    m: float = 2257.0
    I_z: float = 3524.9
    l_f: float = 1.33
    l_r: float = 1.81
    C_af: float = 60790.0
    C_ar: float = 50400.0

    def __post_init__(self):
        for name in ("m", "I_z", "l_f", "l_r", "C_af", "C_ar"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


def exact_params() -> VehicleParams:
    """Parameters of the simulated real vehicle."""
    return VehicleParams()


def heavy_nominal_params() -> VehicleParams:
    """Deliberately mismatched nominal model (mass and inertia far too large)."""
    return VehicleParams(m=20000.0, I_z=20000.0)


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = np.mod(-np.asarray(a) + np.pi, 2 * np.pi)
    return np.pi - w


def _check_speed(v_x: float):
    if v_x < V_MIN:
        raise SingularSpeedError(f"v_x={v_x} below floor {V_MIN}")


def continuous_dynamics(state: np.ndarray, control: np.ndarray,
                        params: VehicleParams) -> np.ndarray:
    """Time derivative of the single-track model at (state, control)."""
    v_x, v_y, phi, omega = state[VX], state[VY], state[PHI], state[OMEGA]
    a_x, delta = control[AX], control[DELTA]
    _check_speed(v_x)
    p = params

    front_slip = (v_y + p.l_f * omega) / v_x
    rear_term = (p.l_r * omega - v_y) / v_x

    dv_x = v_y * omega + a_x
    dv_y = (2 * p.C_af * (delta / p.m - front_slip / p.m)
            + 2 * p.C_ar * rear_term / p.m
            - v_x * omega)
    dphi = omega
    domega = (2 / p.I_z) * (p.l_f * p.C_af * (delta - front_slip)
                            - p.l_r * p.C_ar * rear_term)
    dX = v_x * np.cos(phi) - v_y * np.sin(phi)
    dY = v_x * np.sin(phi) + v_y * np.cos(phi)
    return np.array([dv_x, dv_y, dphi, domega, dX, dY])


def nominal_jacobians(state: np.ndarray, control: np.ndarray,
                      params: VehicleParams, dt: float):
    """Euler-discretized Jacobians (A, B) of the nominal model.

    A = I + dt * df/dx, B = dt * df/du, both evaluated analytically.
    """
    v_x, v_y, phi, omega = state[VX], state[VY], state[PHI], state[OMEGA]
    _check_speed(v_x)
    if dt < 0:
        raise ValueError("dt must be non-negative")
    p = params

    Jx = np.zeros((N_STATES, N_STATES))
    Ju = np.zeros((N_STATES, N_CONTROLS))

    # dv_x = v_y*omega + a_x
    Jx[VX, VY] = omega
    Jx[VX, OMEGA] = v_y
    Ju[VX, AX] = 1.0

    # dv_y
    Jx[VY, VX] = (2 * p.C_af * (v_y + p.l_f * omega)
                  - 2 * p.C_ar * (p.l_r * omega - v_y)) / (p.m * v_x ** 2) - omega
    Jx[VY, VY] = -2 * (p.C_af + p.C_ar) / (p.m * v_x)
    Jx[VY, OMEGA] = (-2 * p.C_af * p.l_f + 2 * p.C_ar * p.l_r) / (p.m * v_x) - v_x
    Ju[VY, DELTA] = 2 * p.C_af / p.m

    # dphi = omega
    Jx[PHI, OMEGA] = 1.0

    # domega
    Jx[OMEGA, VX] = (2 / p.I_z) * (p.l_f * p.C_af * (v_y + p.l_f * omega)
                                   + p.l_r * p.C_ar * (p.l_r * omega - v_y)) / v_x ** 2
    Jx[OMEGA, VY] = (2 / p.I_z) * (-p.l_f * p.C_af + p.l_r * p.C_ar) / v_x
    Jx[OMEGA, OMEGA] = -(2 / p.I_z) * (p.l_f ** 2 * p.C_af + p.l_r ** 2 * p.C_ar) / v_x
    Ju[OMEGA, DELTA] = 2 * p.l_f * p.C_af / p.I_z

    # dX, dY
    s, c = np.sin(phi), np.cos(phi)
    Jx[PX, VX] = c
    Jx[PX, VY] = -s
    Jx[PX, PHI] = -v_x * s - v_y * c
    Jx[PY, VX] = s
    Jx[PY, VY] = c
    Jx[PY, PHI] = v_x * c - v_y * s

    return np.eye(N_STATES) + dt * Jx, dt * Ju


def discrete_step_nominal(state: np.ndarray, control: np.ndarray,
                          params: VehicleParams, dt: float) -> np.ndarray:
    """One explicit-Euler step; v_x clamped to the speed floor afterwards."""
    nxt = state + dt * continuous_dynamics(state, control, params)
    if nxt[VX] < V_MIN:
        nxt = nxt.copy()
        nxt[VX] = V_MIN
    return nxt


def error_state(state: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Componentwise state minus reference, heading error wrapped to (-pi, pi]."""
    e = np.asarray(state, dtype=float)[:N_STATES] - np.asarray(reference, dtype=float)[:N_STATES]
    e[PHI] = wrap_angle(e[PHI])
    return e


def clamp_control(control: np.ndarray) -> np.ndarray:
    return np.clip(control, CONTROL_LOW, CONTROL_HIGH)
