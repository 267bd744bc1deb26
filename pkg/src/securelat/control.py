"""Fractional-order sliding-mode secure control laws.

The sliding surface combines a Riccati-based projection row F = B'P, an
auxiliary error accumulator and a truncated Grunwald-Letnikov fractional
derivative of that accumulator.  The composite law adds a switching term
sized by the attack bound; the resulting invariant band of the surface is
the secure domain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .plant import state_array

log = logging.getLogger(__name__)


def _check_spd(M: np.ndarray, name: str, tol: float = 1e-10) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.max(np.abs(M - M.T)) > tol * max(1.0, np.max(np.abs(M))):
        raise ValueError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(M)) <= 0.0:
        raise ValueError(f"{name} must be positive definite")
    return M


def riccati_solve(A, B, Q, R, tol: float = 1e-12, max_iter: int = 200000) -> np.ndarray:
    """Fixed-point solution of P = A'PA - A'PB (R + B'PB)^-1 B'PA + Q.

    Iterates from P0 = Q until the Frobenius increment drops below `tol`.
    Convergence is linear at the squared closed-loop spectral radius, so slow
    plants take a few thousand cheap iterations.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    Q = _check_spd(Q, "Q")
    R = _check_spd(R, "R")
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        gain_core = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = A.T @ P @ A - (A.T @ P @ B) @ gain_core + Q
        P_next = 0.5 * (P_next + P_next.T)
        if np.linalg.norm(P_next - P, "fro") < tol:
            return P_next
        P = P_next
    raise RuntimeError(f"Riccati iteration did not converge within {max_iter} iterations")


def riccati_residual(P, A, B, Q, R) -> float:
    """Frobenius norm of the fixed-point defect of a candidate P."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    BtP = B.T @ P
    rhs = A.T @ P @ A - (A.T @ P @ B) @ np.linalg.solve(R + BtP @ B, BtP @ A) + Q
    return float(np.linalg.norm(P - rhs, "fro"))


def lqr_gain(A, B, P, R) -> np.ndarray:
    """Feedback row K = -(R + B'PB)^-1 B'PA associated with a Riccati solution."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    return -np.linalg.solve(np.atleast_2d(R) + B.T @ P @ B, B.T @ P @ A)


def gl_weights(gamma: float, count: int) -> np.ndarray:
    """Signed binomial weights w_0 = 1, w_j = w_{j-1} (1 - (gamma+1)/j)."""
    return _gl_weights_cached(float(gamma), int(count)).copy()


@lru_cache(maxsize=None)
def _gl_weights_cached(gamma: float, count: int) -> np.ndarray:
    w = np.ones(count)
    for j in range(1, count):
        w[j] = w[j - 1] * (1.0 - (gamma + 1.0) / j)
    w.setflags(write=False)
    return w


def gl_truncation_tail(gamma: float, memory_len: int) -> float:
    """Magnitude of the neglected weight tail; equals |sum of kept weights|."""
    return abs(float(np.sum(gl_weights(gamma, memory_len + 1))))


def gl_derivative(history, gamma: float, sample_period_s: float, memory_len: int = 500) -> float:
    """Truncated Grunwald-Letnikov fractional derivative of a scalar history.

    `history` lists samples oldest first, most recent last; only the last
    memory_len + 1 samples contribute.  gamma = 1 reduces exactly to the
    first backward difference.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    h = np.asarray(history, dtype=float).reshape(-1)
    if h.size == 0:
        raise ValueError("history must be non-empty")
    n = min(h.size, memory_len + 1)
    w = _gl_weights_cached(float(gamma), n)
    return float(sample_period_s ** (-gamma) * np.dot(w, h[::-1][:n]))


@dataclass(frozen=True)
class SlidingConfig:
    """Surface row, fractional parameters and switching gains."""

    surface_row_F: np.ndarray
    riccati_P: np.ndarray
    weight_Q: np.ndarray
    weight_R: np.ndarray
    frac_order_gamma: float = 0.5
    frac_weight_lambda: float = 0.2
    switch_kappa: float = 0.15
    switch_rho: float = 0.2
    attack_bound_Qatt: float = 0.15
    memory_len_L: int = 500
    sample_period_s: float = 0.01
    surface_fb: float = 0.0  # F @ B, cached at construction
    boundary_phi: float = 0.0  # 0 keeps the discontinuous sign law

    def __post_init__(self):
        _check_spd(self.riccati_P, "riccati_P")
        if not 0.0 < self.frac_order_gamma <= 1.0:
            raise ValueError("fractional order must be in (0, 1]")
        if self.frac_weight_lambda < 0.0:
            raise ValueError("fractional weight must be >= 0")
        if not 0.0 < self.switch_kappa < 1.0:
            raise ValueError("switch_kappa must be in (0, 1)")
        if not 0.0 < self.switch_rho < 1.0:
            raise ValueError("switch_rho must be in (0, 1)")
        if self.memory_len_L < 1:
            raise ValueError("memory length must be >= 1")
        tail = gl_truncation_tail(self.frac_order_gamma, self.memory_len_L)
        log.info(
            "GL memory truncated at %d steps; neglected weight tail %.3e",
            self.memory_len_L,
            tail,
        )

    def sgn(self, S: float) -> float:
        """Sign of the surface; smoothed to S/(|S|+phi) when a boundary layer is set."""
        if self.boundary_phi > 0.0:
            return S / (abs(S) + self.boundary_phi)
        return float(np.sign(S))


def make_sliding_config(
    mat_A,
    mat_B,
    weight_Q=None,
    weight_R=None,
    riccati_tol: float = 1e-12,
    **kwargs,
) -> SlidingConfig:
    """Solve the Riccati equation for the given model and assemble the config."""
    A = np.asarray(mat_A, dtype=float)
    B = np.asarray(mat_B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n = A.shape[0]
    Q = np.diag([10.0, 1.0, 10.0, 1.0]) if weight_Q is None and n == 4 else weight_Q
    if Q is None:
        Q = np.eye(n)
    R = np.eye(B.shape[1]) if weight_R is None else np.atleast_2d(np.asarray(weight_R, dtype=float))
    P = riccati_solve(A, B, Q, R, tol=riccati_tol)
    F = (B.T @ P)[0]
    return SlidingConfig(
        surface_row_F=F,
        riccati_P=P,
        weight_Q=np.asarray(Q, dtype=float),
        weight_R=R,
        surface_fb=float(F @ B[:, 0]),
        **kwargs,
    )


@dataclass
class SlidingState:
    """Surface history, the error accumulator and its fractional memory.

    S(0) is pinned to zero and the accumulator starts at zero; the surface
    value for later steps follows from the update in `sliding_surface_step`.
    """

    memory_len_L: int = 500
    surface_S: list = field(default_factory=lambda: [0.0])
    eps_current: float = 0.0
    eps_history: list = field(default_factory=lambda: [0.0])
    prev_state: np.ndarray | None = None
    step_index: int = 0

    def push_eps(self, value: float) -> None:
        self.eps_history.append(value)
        if len(self.eps_history) > self.memory_len_L + 1:
            del self.eps_history[0]


def sliding_surface_step(cfg: SlidingConfig, state, sl: SlidingState, mat_A, mat_B, gain_K) -> float:
    """Advance the accumulator and evaluate the surface at the current state.

    First call (step 0) records the pinned S(0) = 0 and the state; subsequent
    calls update eps with the previous state per
    eps(k) = eps(k-1) + F chi(k-1) - F (A + B K) chi(k-1)
    and return S(k) = F chi(k) + eps(k) + lambda * D^gamma eps(k).
    """
    x = state_array(state)
    F = cfg.surface_row_F
    if sl.step_index == 0:
        sl.prev_state = x.copy()
        sl.step_index = 1
        return 0.0
    A = np.asarray(mat_A, dtype=float)
    B = np.asarray(mat_B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    K = np.atleast_2d(np.asarray(gain_K, dtype=float))
    closed = A + B @ K
    prev = sl.prev_state
    sl.eps_current += float(F @ prev) - float(F @ (closed @ prev))
    sl.push_eps(sl.eps_current)
    glv = gl_derivative(
        sl.eps_history,
        cfg.frac_order_gamma,
        sample_period_s=cfg.sample_period_s,
        memory_len=cfg.memory_len_L,
    )
    S = float(F @ x) + sl.eps_current + cfg.frac_weight_lambda * glv
    sl.surface_S.append(S)
    sl.prev_state = x.copy()
    sl.step_index += 1
    return S


def equivalent_control(gain_K, last_sent, S: float, kappa: float, sgn=np.sign) -> float:
    """Nominal law -kappa sgn(S) + K chi(k_s); sgn(0) = 0."""
    K = np.atleast_2d(np.asarray(gain_K, dtype=float))
    x = state_array(last_sent)
    return float(-kappa * sgn(S) + K @ x)


def switching_control(cfg: SlidingConfig, S: float) -> float:
    """Attack-rejection law -kappa sgn(S) - (FB)^-1 (rho + Qatt |FB|) sgn(S)."""
    fb = cfg.surface_fb
    if fb == 0.0:
        raise ZeroDivisionError("surface-input pairing F B is zero; switching law undefined")
    sg = cfg.sgn(S)
    return float(-cfg.switch_kappa * sg - (cfg.switch_rho + cfg.attack_bound_Qatt * abs(fb)) * sg / fb)


def composite_control(cfg: SlidingConfig, synth_Y, synth_E, last_sent, S: float) -> float:
    """Secure law Y E^-1 chi(k_s) - kappa sgn(S) - (FB)^-1 (rho + Qatt |FB|) sgn(S)."""
    E = np.atleast_2d(np.asarray(synth_E, dtype=float))
    Y = np.atleast_2d(np.asarray(synth_Y, dtype=float))
    K = np.linalg.solve(E.T, Y.T).T  # Y E^-1; raises LinAlgError for singular E
    x = state_array(last_sent)
    fb = cfg.surface_fb
    if fb == 0.0:
        raise ZeroDivisionError("surface-input pairing F B is zero")
    sg = cfg.sgn(S)
    return float(
        K @ x - cfg.switch_kappa * sg - (cfg.switch_rho + cfg.attack_bound_Qatt * abs(fb)) * sg / fb
    )


@dataclass(frozen=True)
class SecureDomain:
    """Invariant surface band |S| <= xi maintained by the composite law."""

    level_xi: float


def secure_domain(cfg: SlidingConfig) -> SecureDomain:
    """Band level xi = (rho + 2 Qatt |FB|) / (1 - kappa)."""
    if cfg.switch_kappa >= 1.0:
        raise ValueError("kappa must be < 1 for a finite secure domain")
    xi = (cfg.switch_rho + 2.0 * cfg.attack_bound_Qatt * abs(cfg.surface_fb)) / (1.0 - cfg.switch_kappa)
    return SecureDomain(level_xi=xi)


@dataclass(frozen=True)
class SmcLyapunovReport:
    delta_v: np.ndarray
    fraction_decreasing: float
    n_outside_band: int


def lyapunov_smc_diagnostic(surface_series, band: float = 0.0) -> SmcLyapunovReport:
    """Per-step difference of V = S^2/2 via S(k) (S(k+1) - S(k)).

    `fraction_decreasing` counts the steps with Delta V < 0 among those with
    |S| above `band` (pass the secure-domain level scaled as needed).
    """
    S = np.asarray(surface_series, dtype=float).reshape(-1)
    if S.size < 2:
        return SmcLyapunovReport(delta_v=np.zeros(0), fraction_decreasing=1.0, n_outside_band=0)
    dv = S[:-1] * (S[1:] - S[:-1])
    outside = np.abs(S[:-1]) > band
    n_out = int(np.sum(outside))
    frac = float(np.sum(dv[outside] < 0.0) / n_out) if n_out else 1.0
    return SmcLyapunovReport(delta_v=dv, fraction_decreasing=frac, n_outside_band=n_out)
