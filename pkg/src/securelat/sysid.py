"""Snapshot-matrix construction and SVD-based identification of (A, B).

The identification solves X' ~= [A B] [X; Xi] in the least-squares sense via
a truncated singular value decomposition of the stacked data matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .plant import StateVector, state_array

#: retained-energy threshold used by automatic truncation-order selection
AUTO_ENERGY_THRESHOLD = 0.9999


@dataclass(frozen=True)
class DatasetMatrices:
    """Snapshot matrices X (n x m-1), X' (time-shifted) and inputs Xi (p x m-1)."""

    snap_X: np.ndarray
    snap_Xp: np.ndarray
    input_Xi: np.ndarray
    sample_period_s: float

    def __post_init__(self):
        X, Xp, Xi = self.snap_X, self.snap_Xp, self.input_Xi
        if X.shape != Xp.shape:
            raise ValueError(f"X and X' shapes differ: {X.shape} vs {Xp.shape}")
        if X.ndim != 2 or Xi.ndim != 2 or Xi.shape[1] != X.shape[1]:
            raise ValueError("X, X' and Xi must be 2-D with matching column counts")
        if X.shape[1] < 1:
            raise ValueError("need at least one snapshot pair (m >= 2)")
        for name, M in (("snap_X", X), ("snap_Xp", Xp), ("input_Xi", Xi)):
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def n_states(self) -> int:
        return self.snap_X.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.input_Xi.shape[0]

    @property
    def n_samples(self) -> int:
        """Number m of raw samples behind the m-1 snapshot columns."""
        return self.snap_X.shape[1] + 1


@dataclass(frozen=True)
class IdentifiedModel:
    """Discrete-time model chi(k+1) = A chi(k) + B u(k) with sampling period ell."""

    mat_A: np.ndarray
    mat_B: np.ndarray
    sample_period_s: float
    trunc_order: int
    residual_fro: float
    persistency_ok: bool = True
    singular_values: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        n = self.mat_A.shape[0]
        if self.mat_A.shape != (n, n) or self.mat_B.shape[0] != n:
            raise ValueError("A must be square and B row-conformable with A")
        p = self.mat_B.shape[1]
        if not (1 <= self.trunc_order <= n + p):
            raise ValueError(f"trunc_order must be in [1, {n + p}], got {self.trunc_order}")
        if self.residual_fro < 0.0:
            raise ValueError("residual_fro must be >= 0")


def build_matrices(states, inputs, sample_period_s: float) -> DatasetMatrices:
    """Lay out m state samples and their inputs as snapshot/input matrices.

    X collects samples 1..m-1 (columns), X' the shifted samples 2..m, and Xi
    the first m-1 inputs.
    """
    if len(states) < 2:
        raise ValueError(f"need at least 2 state samples, got {len(states)}")
    if isinstance(states, np.ndarray) and states.ndim == 2:
        S = states.astype(float)
        if S.shape[1] == 4:
            S = S.T  # rows are samples
        elif S.shape[0] != 4:
            raise ValueError(f"state array must be (m, 4) or (4, m), got {S.shape}")
    else:
        S = np.column_stack([state_array(s) for s in states])
    m = S.shape[1]
    U = np.atleast_2d(np.asarray(inputs, dtype=float))
    if U.shape[0] != 1 and U.shape[1] == 1:
        U = U.T
    if U.shape[1] < m - 1:
        raise ValueError(f"need at least m-1 = {m - 1} inputs, got {U.shape[1]}")
    return DatasetMatrices(
        snap_X=S[:, : m - 1].copy(),
        snap_Xp=S[:, 1:m].copy(),
        input_Xi=U[:, : m - 1].copy(),
        sample_period_s=float(sample_period_s),
    )


@dataclass(frozen=True)
class PersistencyResult:
    ok: bool
    length_ok: bool
    hankel_rank: int
    required_rank: int

    def __bool__(self) -> bool:
        return self.ok


def _hankel(signal: np.ndarray, depth: int) -> np.ndarray:
    """Block Hankel matrix of an input signal (p x T) with the given depth."""
    p, T = signal.shape
    cols = T - depth + 1
    if cols < 1:
        return np.zeros((p * depth, 0))
    H = np.empty((p * depth, cols))
    for i in range(depth):
        H[i * p : (i + 1) * p, :] = signal[:, i : i + cols]
    return H


def persistency_check(data: DatasetMatrices, order_ns: int, window_ls: int) -> PersistencyResult:
    """Test the excitation-richness condition on the recorded input.

    Passes iff the sample count satisfies m >= (n_s + 1)(l_s + 1) - 1 and the
    input Hankel matrix of depth l_s + 1 has full row rank (singular values
    above the standard numerical-rank tolerance).
    """
    m = data.n_samples
    length_ok = m >= (order_ns + 1) * (window_ls + 1) - 1
    H = _hankel(data.input_Xi, window_ls + 1)
    required = H.shape[0]
    if H.shape[1] == 0:
        rank = 0
    else:
        s = np.linalg.svd(H, compute_uv=False)
        tol = max(H.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        rank = int(np.sum(s > tol))
    return PersistencyResult(
        ok=bool(length_ok and rank == required),
        length_ok=bool(length_ok),
        hankel_rank=rank,
        required_rank=required,
    )


def select_truncation(singular_values, threshold: float = AUTO_ENERGY_THRESHOLD) -> int:
    """Smallest r whose retained energy fraction sum(s_i^2, i<=r)/sum(s^2) >= threshold."""
    s = np.asarray(singular_values, dtype=float).reshape(-1)
    if s.size == 0:
        raise ValueError("singular value sequence is empty")
    if np.any(s < 0.0):
        raise ValueError("singular values must be non-negative")
    if np.any(np.diff(s) > 0.0):
        raise ValueError("singular values must be in descending order")
    total = float(np.sum(s**2))
    if total == 0.0:
        raise ValueError("all-zero singular value spectrum")
    energy = np.cumsum(s**2) / total
    return int(np.searchsorted(energy, threshold - 1e-15) + 1)


def dmd_identify(data: DatasetMatrices, trunc_order="auto") -> IdentifiedModel:
    """Identify (A, B) from snapshot data by truncated-SVD least squares.

    Stacks Theta = [X; Xi], computes its SVD, keeps the r dominant singular
    values and forms the operator X' V_r S_r^-1 U_r^H, whose first n columns
    are A and remaining p columns are B.  A failed excitation-richness check
    downgrades to a warning; the least-squares solution is still returned
    with ``persistency_ok=False``.
    """
    n, p = data.n_states, data.n_inputs
    theta = np.vstack([data.snap_X, data.input_Xi])
    pe = persistency_check(data, order_ns=n, window_ls=n)
    if not pe.ok:
        warnings.warn(
            "input sequence is not persistently exciting "
            f"(Hankel rank {pe.hankel_rank}/{pe.required_rank}); "
            "falling back to the plain least-squares fit",
            RuntimeWarning,
            stacklevel=2,
        )

    U, s, Vh = np.linalg.svd(theta, full_matrices=False)
    tol = max(theta.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    num_rank = int(np.sum(s > tol))
    if num_rank == 0:
        raise ValueError("data matrix Theta is identically zero")

    r = select_truncation(s) if trunc_order == "auto" else int(trunc_order)
    if not (1 <= r <= n + p):
        raise ValueError(f"truncation order {r} outside [1, {n + p}]")
    if r > num_rank:
        raise ValueError(f"Theta has numerical rank {num_rank}, below requested order {r}")

    Ur = U[:, :r]
    gamma = data.snap_Xp @ Vh[:r].T @ np.diag(1.0 / s[:r]) @ Ur.conj().T
    residual = float(np.linalg.norm(data.snap_Xp - gamma @ theta, "fro"))
    return IdentifiedModel(
        mat_A=gamma[:, :n],
        mat_B=gamma[:, n:],
        sample_period_s=data.sample_period_s,
        trunc_order=r,
        residual_fro=residual,
        persistency_ok=bool(pe.ok),
        singular_values=s.copy(),
    )


def load_dataset_csv(path) -> DatasetMatrices:
    """Read a dataset CSV (header t,e_d,e_d_dot,e_phi,e_phi_dot,u) into matrices.

    Malformed rows are reported with their line number.
    """
    expected = ["t", "e_d", "e_d_dot", "e_phi", "e_phi_dot", "u"]
    times, states, inputs = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if [c.strip() for c in header.split(",")] != expected:
            raise ValueError(f"{path}: line 1: expected header {','.join(expected)!r}, got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise ValueError(f"{path}: line {lineno}: expected 6 fields, got {len(parts)}")
            try:
                vals = [float(v) for v in parts]
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            times.append(vals[0])
            states.append(vals[1:5])
            inputs.append(vals[5])
    if len(states) < 2:
        raise ValueError(f"{path}: need at least 2 data rows, got {len(states)}")
    ell = times[1] - times[0] if len(times) >= 2 else 0.01
    return build_matrices(np.asarray(states), np.asarray(inputs), ell)
