"""Delay-LMI assembly, negative-definiteness certification and gain synthesis.

Feasibility is decided without an external SDP solver: the assembled blocks
are affine in every decision matrix, so the maximum eigenvalue is a convex
function of the stacked decision coordinates and cyclic coordinate descent
with exact 1-D line searches converges to the global optimum.  Certificates
are always re-checked by explicit eigendecomposition before being returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFINITENESS_TOL = 1e-9


@dataclass(frozen=True)
class LmiBlocks:
    """Assembled blocks of the stability inequality and the row used in them."""

    block_Psi11: np.ndarray
    block_Psi12: np.ndarray
    block_Psi22: np.ndarray
    row_F: np.ndarray
    decision_vars: dict

    def full(self) -> np.ndarray:
        top = np.hstack([self.block_Psi11, self.block_Psi12])
        bot = np.hstack([self.block_Psi12.T, self.block_Psi22])
        M = np.vstack([top, bot])
        return 0.5 * (M + M.T)


def _as_col(B: np.ndarray) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    return B.reshape(-1, 1) if B.ndim == 1 else B


def assemble_theorem3(A, B, K, mu, Upsilon, delta_bar, P_star, R_star, T_star, kappa_term=0.0) -> LmiBlocks:
    """Analysis-form blocks for a fixed feedback gain.

    The sign-term entry of the row F is state dependent and therefore not a
    constant matrix; only the constant part [A-I, BK, 0, BK] is assembled and
    `kappa_term` is recorded for the trajectory-level slack accounting done
    by `lkf_evaluate` callers.
    """
    A = np.asarray(A, dtype=float)
    B = _as_col(B)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    n = A.shape[0]
    for name, M in (("Upsilon", Upsilon), ("P_star", P_star), ("R_star", R_star), ("T_star", T_star)):
        M = np.asarray(M)
        if M.shape != (n, n):
            raise ValueError(f"{name} must be {n}x{n}, got {M.shape}")
    Ups, Ps, Rs, Ts = (np.asarray(M, dtype=float) for M in (Upsilon, P_star, R_star, T_star))
    Z = np.zeros((n, n))
    I = np.eye(n)
    BK = B @ K

    psi11 = np.block(
        [
            [Ps @ (A - I) + (A - I).T @ Ps + Rs - Ts, 2.0 * Ps @ BK + Ts, Z, 2.0 * Ps @ BK],
            [(2.0 * Ps @ BK + Ts).T, -2.0 * Ts + mu * Ups, Ts, Z],
            [Z, Ts.T, -Ts - Rs, Z],
            [(2.0 * Ps @ BK).T, Z, Z, -Ups],
        ]
    )
    row_F = np.hstack([A - I, BK, Z, BK])
    psi12 = np.hstack([row_F.T @ Ps, delta_bar * row_F.T @ Ts])
    psi22 = np.block([[-Ps, Z], [Z, -Ts]])
    return LmiBlocks(
        block_Psi11=psi11,
        block_Psi12=psi12,
        block_Psi22=psi22,
        row_F=row_F,
        decision_vars={"P_star": Ps, "R_star": Rs, "T_star": Ts, "Upsilon": Ups, "kappa_term": kappa_term},
    )


def assemble_theorem4(A, B, mu, delta_bar, E, Q_hat, R_hat, Ups_hat, Y) -> LmiBlocks:
    """Synthesis-form blocks, affine in (E, Q_hat, R_hat, Ups_hat, Y).

    The transformed row is [AE - E, BY, 0, BY]; the trailing block mirrors
    the congruence of the analysis row under K = Y E^-1.
    """
    A = np.asarray(A, dtype=float)
    B = _as_col(B)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = A.shape[0]
    E, Qh, Rh, Uh = (np.asarray(M, dtype=float) for M in (E, Q_hat, R_hat, Ups_hat))
    for name, M in (("E", E), ("Q_hat", Qh), ("R_hat", Rh), ("Ups_hat", Uh)):
        if M.shape != (n, n):
            raise ValueError(f"{name} must be {n}x{n}, got {M.shape}")
    Z = np.zeros((n, n))
    I = np.eye(n)
    BY = B @ Y

    psi11 = np.block(
        [
            [(A - I) @ E + E @ (A - I).T + Qh - Rh, 2.0 * BY + Rh, Z, 2.0 * BY],
            [(2.0 * BY + Rh).T, -2.0 * Rh + mu * Uh, Rh, Z],
            [Z, Rh.T, -Rh - Qh, Z],
            [(2.0 * BY).T, Z, Z, -Uh],
        ]
    )
    row_F = np.hstack([A @ E - E, BY, Z, BY])
    psi12 = np.hstack([row_F.T, delta_bar * row_F.T])
    psi22 = np.block([[-E, Z], [Z, Rh - 2.0 * E]])
    return LmiBlocks(
        block_Psi11=psi11,
        block_Psi12=psi12,
        block_Psi22=psi22,
        row_F=row_F,
        decision_vars={"E": E, "Q_hat": Qh, "R_hat": Rh, "Ups_hat": Uh, "Y": Y},
    )


def check_negative_definite(M: np.ndarray, tol: float = DEFINITENESS_TOL, method: str = "eig") -> bool:
    """True iff the symmetric matrix M is negative definite at relative tol."""
    M = np.asarray(M, dtype=float)
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > tol * scale:
        raise ValueError("matrix must be symmetric")
    if method == "eig":
        return bool(np.max(np.linalg.eigvalsh(M)) < -tol * scale)
    if method == "chol":
        try:
            np.linalg.cholesky(-(M + tol * scale * np.eye(M.shape[0])))
            return True
        except np.linalg.LinAlgError:
            return False
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# feasibility search


def _sym_coords(n: int) -> list:
    return [(i, j) for i in range(n) for j in range(i, n)]


class _VarPack:
    """Stacks symmetric decision matrices plus an optional gain row into a vector."""

    def __init__(self, n: int, sym_names, row_names=()):
        self.n = n
        self.sym_names = list(sym_names)
        self.row_names = list(row_names)
        self.coords = _sym_coords(n)
        self.size = len(self.sym_names) * len(self.coords) + len(self.row_names) * n

    def unpack(self, z: np.ndarray) -> dict:
        out = {}
        pos = 0
        for name in self.sym_names:
            M = np.zeros((self.n, self.n))
            for (i, j) in self.coords:
                M[i, j] = M[j, i] = z[pos]
                pos += 1
            out[name] = M
        for name in self.row_names:
            out[name] = z[pos : pos + self.n].reshape(1, self.n)
            pos += self.n
        return out

    def pack(self, mats: dict) -> np.ndarray:
        z = np.zeros(self.size)
        pos = 0
        for name in self.sym_names:
            M = mats[name]
            for (i, j) in self.coords:
                z[pos] = M[i, j]
                pos += 1
        for name in self.row_names:
            z[pos : pos + self.n] = np.asarray(mats[name]).reshape(-1)
            pos += self.n
        return z


class _AffineBlocks:
    """Affine map z -> list of symmetric blocks, with bases probed numerically.

    The assembled inequality and the SPD-floor constraints on the decision
    matrices are all affine in the stacked coordinates, so joint feasibility
    is equivalent to a negative maximum eigenvalue across the stacked blocks
    and the search is a convex spectral minimisation.
    """

    def __init__(self, block_fn, nz: int):
        zero = np.zeros(nz)
        self.const = [np.asarray(M, dtype=float) for M in block_fn(zero)]
        self.bases = []
        for b, M0 in enumerate(self.const):
            self.bases.append(np.zeros((nz, M0.shape[0], M0.shape[1])))
        for j in range(nz):
            e = np.zeros(nz)
            e[j] = 1.0
            probed = block_fn(e)
            for b, M in enumerate(probed):
                self.bases[b][j] = np.asarray(M, dtype=float) - self.const[b]

    def assemble(self, z: np.ndarray) -> list:
        return [C + np.tensordot(z, B, axes=1) for C, B in zip(self.const, self.bases)]

    def lambda_max(self, z: np.ndarray) -> float:
        return max(float(np.max(np.linalg.eigvalsh(M))) for M in self.assemble(z))

    def smoothed(self, z: np.ndarray, temp: float):
        """Softmax-smoothed maximum eigenvalue and its analytic gradient."""
        eigs_all = []
        decomps = []
        for M in self.assemble(z):
            w, V = np.linalg.eigh(0.5 * (M + M.T))
            eigs_all.append(w)
            decomps.append(V)
        flat = np.concatenate(eigs_all)
        top = float(np.max(flat))
        soft = np.exp((flat - top) / temp)
        denom = float(np.sum(soft))
        f = top + temp * np.log(denom)
        grad = np.zeros(z.size)
        pos = 0
        for b, (w, V) in enumerate(zip(eigs_all, decomps)):
            wb = soft[pos : pos + w.size] / denom
            pos += w.size
            G = (V * wb) @ V.T
            grad += np.tensordot(self.bases[b], G, axes=([1, 2], [0, 1]))
        return f, grad


def _search_convex_lmi(blocks: _AffineBlocks, inits, budget: int, target: float, bound: float = 50.0):
    """Minimise the stacked maximum eigenvalue by smoothed spectral descent.

    Runs a temperature continuation of the softmax surrogate with analytic
    gradients from each starting point; stops once the true maximum
    eigenvalue drops below `target` or the evaluation budget is exhausted.
    Returns (best_value, best_z, evaluations).
    """
    from scipy.optimize import minimize

    evals = 0
    best_val, best_z = np.inf, None
    temps = (0.3, 0.03, 0.003, 3e-4, 3e-5)
    for z0 in inits:
        z = np.clip(np.asarray(z0, dtype=float), -bound, bound)
        val = blocks.lambda_max(z)
        evals += 1
        if val < best_val:
            best_val, best_z = val, z.copy()
        if best_val < target:
            break
        for temp in temps:
            if evals >= budget:
                break
            remaining = budget - evals
            maxfun = min(max(remaining // 2, 20), 2000)

            def fg(zz):
                nonlocal evals
                evals += 1
                return blocks.smoothed(zz, temp)

            res = minimize(
                fg,
                z,
                jac=True,
                method="L-BFGS-B",
                bounds=[(-bound, bound)] * z.size,
                options={"maxfun": maxfun, "ftol": 1e-14, "gtol": 1e-12},
            )
            z = res.x
            val = blocks.lambda_max(z)
            evals += 1
            if val < best_val:
                best_val, best_z = val, z.copy()
            if best_val < target:
                break
        if best_val < target:
            break
    return best_val, best_z, evals


@dataclass(frozen=True)
class SynthesisResult:
    feasible: bool
    gain_K: np.ndarray | None
    certificate: dict
    max_eigenvalue: float
    evaluations: int
    search_trace_len: int = 0


_SPD_FLOOR = 1e-4


def search_feasible_theorem4(A, B, mu, delta_bar, budget: int = 60000, seed: int = 0) -> SynthesisResult:
    """Search (E, Q*, R*, Ups*, Y) making the synthesis blocks negative definite.

    On success the gain K = Y E^-1 is returned together with the certifying
    matrices, which are re-verified with `check_negative_definite` before
    being reported.  Exhausting the budget yields an infeasibility report
    carrying the best achieved maximum eigenvalue.
    """
    A = np.asarray(A, dtype=float)
    B = _as_col(B)
    n = A.shape[0]
    if budget <= 0:
        raise ValueError("budget must be > 0")
    pack = _VarPack(n, ["E", "Q_hat", "R_hat", "Ups_hat"], ["Y"])
    I = np.eye(n)
    floor_I = _SPD_FLOOR * I

    def block_fn(z):
        m = pack.unpack(z)
        psi = assemble_theorem4(A, B, mu, delta_bar, m["E"], m["Q_hat"], m["R_hat"], m["Ups_hat"], m["Y"]).full()
        return [psi, floor_I - m["E"], floor_I - m["Q_hat"], floor_I - m["R_hat"], floor_I - m["Ups_hat"]]

    blocks = _AffineBlocks(block_fn, pack.size)
    inits = []
    for ke, kq, kr, ku, ky in (
        (1.0, 0.05, 0.5, 0.1, -0.1),
        (1.0, 0.2, 1.0, 0.5, -0.05),
        (0.5, 0.02, 0.2, 0.05, -0.2),
    ):
        inits.append(pack.pack({"E": ke * I, "Q_hat": kq * I, "R_hat": kr * I, "Ups_hat": ku * I, "Y": ky * np.ones((1, n))}))
    rng = np.random.default_rng(seed)
    for _ in range(2):
        W = rng.standard_normal((n, n)) * 0.2
        inits.append(
            pack.pack(
                {
                    "E": I + 0.1 * (W + W.T),
                    "Q_hat": 0.1 * I,
                    "R_hat": 0.5 * I,
                    "Ups_hat": 0.2 * I,
                    "Y": rng.standard_normal((1, n)) * 0.1,
                }
            )
        )

    best_val, best_z, evals = _search_convex_lmi(blocks, inits, budget, target=-1e-7)
    mats = pack.unpack(best_z)
    psi = assemble_theorem4(A, B, mu, delta_bar, mats["E"], mats["Q_hat"], mats["R_hat"], mats["Ups_hat"], mats["Y"]).full()
    lam_max = float(np.max(np.linalg.eigvalsh(psi)))
    spd_ok = all(np.min(np.linalg.eigvalsh(mats[nm])) > 0.0 for nm in pack.sym_names)
    feasible = spd_ok and check_negative_definite(psi)
    K = None
    if feasible:
        K = mats["Y"] @ np.linalg.inv(mats["E"])
    return SynthesisResult(
        feasible=feasible,
        gain_K=K,
        certificate=mats,
        max_eigenvalue=lam_max,
        evaluations=evals,
    )


def search_feasible_theorem3(A, B, K, mu, delta_bar, budget: int = 60000, seed: int = 0) -> SynthesisResult:
    """Search (P*, R*, T*, Upsilon) certifying the analysis blocks for a fixed K."""
    A = np.asarray(A, dtype=float)
    B = _as_col(B)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    n = A.shape[0]
    if budget <= 0:
        raise ValueError("budget must be > 0")
    pack = _VarPack(n, ["P_star", "R_star", "T_star", "Upsilon"])
    I = np.eye(n)
    floor_I = _SPD_FLOOR * I

    def block_fn(z):
        m = pack.unpack(z)
        psi = assemble_theorem3(A, B, K, mu, m["Upsilon"], delta_bar, m["P_star"], m["R_star"], m["T_star"]).full()
        return [psi, floor_I - m["P_star"], floor_I - m["R_star"], floor_I - m["T_star"], floor_I - m["Upsilon"]]

    blocks = _AffineBlocks(block_fn, pack.size)
    inits = [
        pack.pack({"P_star": I, "R_star": 0.05 * I, "T_star": 0.5 * I, "Upsilon": 0.1 * I}),
        pack.pack({"P_star": 0.5 * I, "R_star": 0.02 * I, "T_star": 0.2 * I, "Upsilon": 0.05 * I}),
    ]
    rng = np.random.default_rng(seed)
    for _ in range(2):
        W = rng.standard_normal((n, n)) * 0.2
        inits.append(pack.pack({"P_star": I + 0.1 * (W + W.T), "R_star": 0.05 * I, "T_star": 0.3 * I, "Upsilon": 0.1 * I}))

    best_val, best_z, evals = _search_convex_lmi(blocks, inits, budget, target=-1e-7)
    mats = pack.unpack(best_z)
    psi = assemble_theorem3(A, B, K, mu, mats["Upsilon"], delta_bar, mats["P_star"], mats["R_star"], mats["T_star"]).full()
    lam_max = float(np.max(np.linalg.eigvalsh(psi)))
    spd_ok = all(np.min(np.linalg.eigvalsh(mats[nm])) > 0.0 for nm in pack.sym_names)
    feasible = spd_ok and check_negative_definite(psi)
    return SynthesisResult(
        feasible=feasible,
        gain_K=K if feasible else None,
        certificate=mats,
        max_eigenvalue=lam_max,
        evaluations=evals,
    )


# ---------------------------------------------------------------------------
# Lyapunov-Krasovskii evaluation


@dataclass(frozen=True)
class LkfComponents:
    v1: float
    v2: float
    v3: float
    delta_v: float
    col_theta: np.ndarray


def lkf_evaluate(trace, P_star, R_star, T_star, delta_bar: int) -> list:
    """Evaluate the delay functional along a trace and flag non-decreasing steps.

    V1 = chi' P* chi, V2 sums the R*-weighted window of delayed states and V3
    the T*-weighted double sum of state increments; Delta V is the one-step
    difference.  `trace` must expose ``states``, ``delay_steps`` and
    ``delay_error``; entries are produced for k in [delta_bar, N-1].
    """
    chi = np.asarray(trace.states, dtype=float)
    N = chi.shape[0] - 1
    db = int(delta_bar)
    if N <= db:
        raise ValueError(f"trace too short: need more than {db} steps, got {N}")
    Ps, Rs, Ts = (np.asarray(M, dtype=float) for M in (P_star, R_star, T_star))
    zeta = np.diff(chi, axis=0)  # zeta(j) = chi(j+1) - chi(j)

    def v_at(k: int) -> tuple:
        v1 = float(chi[k] @ Ps @ chi[k])
        v2 = float(sum(chi[j] @ Rs @ chi[j] for j in range(k - db, k)))
        v3 = 0.0
        for s in range(-db + 1, 1):
            for j in range(k + s + 1, k):
                if 0 <= j < zeta.shape[0]:
                    v3 += float(zeta[j] @ Ts @ zeta[j])
        return v1, v2, db * v3

    out = []
    prev_total = None
    prev_parts = None
    for k in range(db, N):
        if prev_total is None:
            prev_parts = v_at(k)
            prev_total = sum(prev_parts)
        nxt_parts = v_at(k + 1)
        nxt_total = sum(nxt_parts)
        delta = int(trace.delay_steps[k])
        theta = np.concatenate(
            [chi[k], chi[max(k - delta, 0)], chi[max(k - db, 0)], np.asarray(trace.delay_error[k], dtype=float)]
        )
        out.append(
            LkfComponents(
                v1=prev_parts[0], v2=prev_parts[1], v3=prev_parts[2], delta_v=nxt_total - prev_total, col_theta=theta
            )
        )
        prev_parts, prev_total = nxt_parts, nxt_total
    return out
