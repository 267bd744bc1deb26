"""Extended state observer over the input-disturbance-augmented model.

The state is augmented with the (slowly varying) actuator attack; a
Luenberger gain placed inside a prescribed spectral radius yields joint
estimation of the state and the attack, used for real-time compensation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import place_poles

#: attack-bound range under the slow-variation assumption
ATTACK_BOUND_RANGE = (0.05, 0.2)


@dataclass(frozen=True)
class AttackModel:
    """Actuator attack signal description (additive on the control input)."""

    kind: str = "none"  # none | sinusoid | constant | custom
    amplitude: float = 0.0
    freq_hz: float = 0.0
    start_time_s: float = 0.0
    bound_Qatt: float = 0.15
    custom_values: np.ndarray | None = None
    assume_slow_bounded: bool = True

    def __post_init__(self):
        if self.kind not in ("none", "sinusoid", "constant", "custom"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        lo, hi = ATTACK_BOUND_RANGE
        if self.assume_slow_bounded:
            if not lo <= self.bound_Qatt <= hi:
                raise ValueError(
                    f"attack bound {self.bound_Qatt} outside [{lo}, {hi}] "
                    "while the slow-bounded assumption is enforced"
                )
            if self.kind == "sinusoid" and abs(self.amplitude) > self.bound_Qatt:
                raise ValueError("sinusoid amplitude exceeds the declared attack bound")
        elif not lo <= self.bound_Qatt <= hi:
            warnings.warn(
                f"attack bound {self.bound_Qatt} outside the nominal range [{lo}, {hi}]; "
                "compensation guarantees degrade",
                RuntimeWarning,
                stacklevel=2,
            )


def augment(mat_A: np.ndarray, mat_B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Augmented matrices [[A, B], [0, I]] and [[B], [0]] for the attack state."""
    A = np.asarray(mat_A, dtype=float)
    B = np.asarray(mat_B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n = A.shape[0]
    p = B.shape[1]
    A_aug = np.block([[A, B], [np.zeros((p, n)), np.eye(p)]])
    B_aug = np.vstack([B, np.zeros((p, p))])
    return A_aug, B_aug


def observability_matrix(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def design_gain(A_aug: np.ndarray, C_aug: np.ndarray, target_radius: float) -> np.ndarray:
    """Observer gain placing the error-dynamics spectrum inside target_radius.

    Poles are placed at radii uniformly spaced in (0, target_radius] on the
    dual (controller) form of the pair.  The pair must be observable.
    """
    A_aug = np.asarray(A_aug, dtype=float)
    C_aug = np.atleast_2d(np.asarray(C_aug, dtype=float))
    if not 0.0 < target_radius < 1.0:
        raise ValueError(f"target_radius must be in (0, 1), got {target_radius}")
    n = A_aug.shape[0]
    obs = observability_matrix(A_aug, C_aug)
    if np.linalg.matrix_rank(obs) < n:
        raise ValueError("pair (A_aug, C_aug) is not observable")

    poles = target_radius * np.arange(1, n + 1) / n
    if n == 1:
        # scalar closed form: a - L c = pole
        L = (A_aug[0, 0] - poles[0]) / C_aug[0, 0]
        return np.array([[L]])
    placed = place_poles(A_aug.T, C_aug.T, poles)
    L = placed.gain_matrix.T
    radius = max(abs(np.linalg.eigvals(A_aug - L @ C_aug)))
    if radius > target_radius + 1e-9:
        raise RuntimeError(f"pole placement missed the target radius: {radius} > {target_radius}")
    return L


@dataclass
class EsoState:
    """Observer state: estimates, gain and the (full-state) output map."""

    est_state: np.ndarray
    est_attack: np.ndarray
    gain_L: np.ndarray
    out_map_C: np.ndarray

    @property
    def zeta_hat(self) -> np.ndarray:
        return np.concatenate([self.est_state, self.est_attack])


def make_eso(
    mat_A: np.ndarray,
    mat_B: np.ndarray,
    target_radius: float = 0.7,
    x0: np.ndarray | None = None,
) -> EsoState:
    """Build an observer for the given model with full state measurement."""
    A_aug, _ = augment(mat_A, mat_B)
    n = np.asarray(mat_A).shape[0]
    p = A_aug.shape[0] - n
    C = np.eye(n)
    C_aug = np.hstack([C, np.zeros((n, p))])
    L = design_gain(A_aug, C_aug, target_radius)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    return EsoState(est_state=x0.copy(), est_attack=np.zeros(p), gain_L=L, out_map_C=C)


def eso_step(eso: EsoState, measurement, applied_input, mat_A, mat_B) -> EsoState:
    """One observer update; mutates and returns `eso`.

    zeta+(k+1) = A_aug zeta^ + B_aug u + L (y - C_aug zeta^); the attack
    estimate is the trailing block of the augmented estimate.
    """
    A_aug, B_aug = augment(mat_A, mat_B)
    n = eso.est_state.size
    p = eso.est_attack.size
    C_aug = np.hstack([eso.out_map_C, np.zeros((eso.out_map_C.shape[0], p))])
    y = np.asarray(measurement, dtype=float).reshape(-1)
    u = np.atleast_1d(np.asarray(applied_input, dtype=float))
    zeta = eso.zeta_hat
    zeta_next = A_aug @ zeta + (B_aug @ u).reshape(-1) + eso.gain_L @ (y - C_aug @ zeta)
    eso.est_state = zeta_next[:n]
    eso.est_attack = zeta_next[n:]
    return eso


def compensate(control_nominal, est_attack):
    """Subtract the attack estimate from the nominal control command."""
    u = np.atleast_1d(np.asarray(control_nominal, dtype=float))
    a = np.atleast_1d(np.asarray(est_attack, dtype=float))
    out = u - a
    return float(out[0]) if out.size == 1 else out


@dataclass
class AttackDetector:
    """Thresholded-estimate detector: flags |alpha_hat| > level for `hold` steps.

    Declared reporting plumbing; the detection rule itself is a toolkit
    convention (threshold 0.3 Q_att held for 5 consecutive steps).
    """

    bound_Qatt: float
    threshold_frac: float = 0.3
    hold_steps: int = 5
    _streak: int = field(default=0, repr=False)

    def update(self, est_attack: float) -> bool:
        if abs(float(est_attack)) > self.threshold_frac * self.bound_Qatt:
            self._streak += 1
        else:
            self._streak = 0
        return self._streak >= self.hold_steps
