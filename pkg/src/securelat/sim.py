"""Closed-loop scenario runner for the three attack cases and the metric suite.

Case 1 runs the secure composite controller with no attack, case 2 applies
the attack against the nominal (equivalent) controller only, and case 3 runs
the full pipeline: event-triggered transmission, attack estimation and
compensation, and the fractional-order sliding controller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import control as ctl
from . import observer as obs
from . import trigger as trg

#: reference discrete-time lateral model identified at 100 Hz
S5_A = np.array(
    [
        [0.999, 0.01, 0.0, 0.0],
        [-0.05, 0.99, 0.05, 0.0],
        [0.0, 0.0, 0.999, 0.01],
        [-0.01, 0.0, -0.08, 0.995],
    ]
)
S5_B = np.array([[0.0], [0.1], [0.0], [0.05]])

#: feedback row quoted by the reference study; see `default_config` for why the
#: Riccati-companion gain is used as the scenario default instead
S5_K_REPORTED = np.array([[-0.5, -0.6, -0.5, -0.4]])

SETTLING_BAND_M = 0.02
BLOWUP_NORM = 1e6


class SimulationBlowUp(RuntimeError):
    """Raised when the state norm diverges; carries the partial trace."""

    def __init__(self, message: str, trace: "RunTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass
class ScenarioConfig:
    """Full parameterisation of one closed-loop run."""

    case_id: str = "case1"  # case1 | case2 | case3
    duration_s: float = 20.0
    dt_s: float = 0.01
    initial_state: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.0, 0.5, 0.0]))
    mat_A: np.ndarray = field(default_factory=lambda: S5_A.copy())
    mat_B: np.ndarray = field(default_factory=lambda: S5_B.copy())
    gain_K: np.ndarray | None = None  # None: Riccati-companion gain of the surface
    trigger_cfg: trg.TriggerConfig | None = None
    sliding_cfg: ctl.SlidingConfig | None = None
    attack: obs.AttackModel | None = None
    delay: trg.DelayModel | None = None
    eso_target_radius: float = 0.7
    noise_bound: float = 0.0
    seed: int = 0
    oracle_compensation: bool = False  # case3 only: cancel with the true attack

    def resolved(self) -> "ScenarioConfig":
        """Fill derived defaults and apply the per-case wiring rules."""
        cfg = replace(self)
        if cfg.case_id not in ("case1", "case2", "case3"):
            raise ValueError(f"unknown case_id {cfg.case_id!r}")
        cfg.mat_A = np.asarray(cfg.mat_A, dtype=float)
        cfg.mat_B = np.asarray(cfg.mat_B, dtype=float).reshape(4, 1)
        if cfg.sliding_cfg is None:
            cfg.sliding_cfg = ctl.make_sliding_config(
                cfg.mat_A, cfg.mat_B, sample_period_s=cfg.dt_s, boundary_phi=0.2
            )
        if cfg.gain_K is None:
            cfg.gain_K = ctl.lqr_gain(cfg.mat_A, cfg.mat_B, cfg.sliding_cfg.riccati_P, cfg.sliding_cfg.weight_R)
        cfg.gain_K = np.atleast_2d(np.asarray(cfg.gain_K, dtype=float))
        if cfg.trigger_cfg is None:
            cfg.trigger_cfg = trg.TriggerConfig(weight_Upsilon=np.eye(4), sensitivity_mu=0.2)
        if cfg.delay is None:
            cfg.delay = trg.DelayModel(max_delay_steps=10, randomize=False, seed=cfg.seed)
        if cfg.attack is None:
            if cfg.case_id == "case1":
                cfg.attack = obs.AttackModel(kind="none")
            else:
                cfg.attack = obs.AttackModel(kind="sinusoid", amplitude=0.15, freq_hz=0.5, start_time_s=10.0, bound_Qatt=0.15)
        if cfg.case_id == "case1" and cfg.attack.kind != "none":
            raise ValueError("case1 is the attack-free baseline; attack kind must be 'none'")
        return cfg


def attack_signal(attack: obs.AttackModel, t_s: float, step: int | None = None) -> float:
    """Attack value at time t; the reference signal is a sinusoid gated at onset."""
    if attack.kind == "none" or t_s < attack.start_time_s:
        return 0.0
    if attack.kind == "sinusoid":
        return attack.amplitude * math.sin(2.0 * math.pi * attack.freq_hz * t_s)
    if attack.kind == "constant":
        return attack.amplitude
    if attack.kind == "custom":
        vals = attack.custom_values
        if vals is None or step is None or step >= len(vals):
            return 0.0
        return float(vals[step])
    raise ValueError(f"unknown attack kind {attack.kind!r}")


@dataclass
class RunTrace:
    """Per-step record of one scenario run plus event bookkeeping."""

    case_id: str
    dt_s: float
    t: np.ndarray
    states: np.ndarray
    control: np.ndarray
    attack: np.ndarray
    attack_est: np.ndarray
    surface: np.ndarray
    triggered: np.ndarray
    delay_steps: np.ndarray
    trigger_error: np.ndarray
    delay_error: np.ndarray
    v_lkf: np.ndarray
    event_steps: np.ndarray
    event_delays: np.ndarray
    xi: float
    gain_K: np.ndarray
    mu: float
    attack_start_s: float
    attack_bound: float = 0.15

    @property
    def n_steps(self) -> int:
        return self.t.size

    @property
    def n_events(self) -> int:
        return self.event_steps.size


def _delay_bookkeeping(states, event_steps, event_delays, max_delay_steps, n_total):
    """Post-hoc artificial-delay classification over every transmission interval."""
    delay_steps = np.zeros(n_total, dtype=int)
    delay_error = np.zeros((n_total, states.shape[1]))
    ev = list(event_steps) + [n_total]  # virtual terminator event, zero delay
    dl = list(event_delays) + [0]
    for i in range(len(ev) - 1):
        ks, ksn = ev[i], ev[i + 1]
        dks, dksn = int(dl[i]), int(dl[i + 1])
        lo = ks + dks
        hi = min(ksn + dksn - 1, n_total - 1)
        for k in range(lo, hi + 1):
            cls = trg.artificial_delay((ks, ksn), (dks, dksn), k, max_delay_steps)
            delay_steps[k] = cls.delay_steps
            if cls.error_offset is not None:
                delay_error[k] = states[ks] - states[ks + cls.error_offset]
    return delay_steps, delay_error


def _lkf_column(states, delta_bar, P_star):
    """Diagnostic functional along the run, evaluated with the documented
    default tuple (P* = surface Riccati solution, R* = T* = I)."""
    n_total = states.shape[0]
    v = np.zeros(n_total)
    q = np.einsum("ij,jk,ik->i", states, P_star, states)
    r = np.einsum("ij,ij->i", states, states)  # R* = I
    zeta = np.diff(states, axis=0)
    z = np.einsum("ij,ij->i", zeta, zeta)  # T* = I
    db = int(delta_bar)
    for k in range(n_total):
        v2 = float(np.sum(r[max(k - db, 0) : k]))
        v3 = 0.0
        for j in range(max(k - db + 2, 0), k):
            if j < z.size:
                v3 += (j - k + db - 1) * z[j]
        v[k] = q[k] + v2 + db * v3
    return v


def run_scenario(cfg: ScenarioConfig) -> RunTrace:
    """Execute one closed-loop scenario; deterministic for a fixed config."""
    cfg = cfg.resolved()
    rng = np.random.default_rng(cfg.seed)
    A, B = cfg.mat_A, cfg.mat_B
    Bcol = B[:, 0]
    K = cfg.gain_K
    scfg = cfg.sliding_cfg
    tcfg = cfg.trigger_cfg
    n_steps = int(round(cfg.duration_s / cfg.dt_s)) + 1
    use_eso = cfg.case_id == "case3"
    use_composite = cfg.case_id in ("case1", "case3")

    chi = np.asarray(cfg.initial_state, dtype=float).copy()
    tstate = trg.TriggerState(last_sent_state=chi.copy(), last_sent_step=0)
    sstate = ctl.SlidingState(memory_len_L=scfg.memory_len_L)
    eso = obs.make_eso(A, B, target_radius=cfg.eso_target_radius, x0=chi) if use_eso else None

    # per-event raw transmission delays; index aligned with the event log
    raw_delays = [0]
    delay_rng = np.random.default_rng(cfg.delay.seed)
    pending = []  # (delivery_step, state) of not-yet-delivered transmissions
    held = chi.copy()  # last delivered sample, drives the controller

    t = np.arange(n_steps) * cfg.dt_s
    states = np.zeros((n_steps, 4))
    u_log = np.zeros(n_steps)
    a_log = np.zeros(n_steps)
    ah_log = np.zeros(n_steps)
    s_log = np.zeros(n_steps)
    trig_log = np.zeros(n_steps, dtype=bool)
    e17_log = np.zeros((n_steps, 4))
    trig_log[0] = True

    def partial_trace(upto):
        dsteps, derr = _delay_bookkeeping(
            states[:upto], tstate.event_steps, raw_delays, cfg.delay.max_delay_steps, upto
        )
        return RunTrace(
            case_id=cfg.case_id,
            dt_s=cfg.dt_s,
            t=t[:upto],
            states=states[:upto],
            control=u_log[:upto],
            attack=a_log[:upto],
            attack_est=ah_log[:upto],
            surface=s_log[:upto],
            triggered=trig_log[:upto],
            delay_steps=dsteps,
            trigger_error=e17_log[:upto],
            delay_error=derr,
            v_lkf=_lkf_column(states[:upto], cfg.delay.max_delay_steps, scfg.riccati_P),
            event_steps=np.asarray(tstate.event_steps, dtype=int),
            event_delays=np.asarray(raw_delays, dtype=int),
            xi=ctl.secure_domain(scfg).level_xi,
            gain_K=K,
            mu=tcfg.sensitivity_mu,
            attack_start_s=cfg.attack.start_time_s if cfg.attack.kind != "none" else math.nan,
            attack_bound=cfg.attack.bound_Qatt,
        )

    for k in range(n_steps):
        tk = t[k]
        if not np.all(np.isfinite(chi)) or np.linalg.norm(chi) > BLOWUP_NORM:
            states[k] = chi
            raise SimulationBlowUp(f"state norm exceeded {BLOWUP_NORM:g} at t={tk:.3f}s", partial_trace(k + 1))
        states[k] = chi

        # event decision against the last transmitted sample
        if k > 0 and trg.should_trigger(chi, tcfg, tstate):
            tstate.record_event(k, chi)
            trig_log[k] = True
            d = int(delay_rng.integers(0, cfg.delay.max_delay_steps + 1)) if cfg.delay.randomize else 0
            raw_delays.append(d)
            pending.append((k + d, chi.copy()))
        # deliveries due at this step (in transmission order)
        while pending and pending[0][0] <= k:
            held = pending.pop(0)[1]
        e17_log[k] = chi - tstate.last_sent_state

        # sliding surface at the current state
        S = ctl.sliding_surface_step(scfg, chi, sstate, A, B, K)
        s_log[k] = S

        alpha = attack_signal(cfg.attack, tk, step=k)
        a_log[k] = alpha

        if use_eso:
            alpha_hat = float(eso.est_attack[0])
        else:
            alpha_hat = 0.0

        if use_composite:
            u_nom = ctl.composite_control(scfg, K, np.eye(4), held, S)
        else:
            u_nom = ctl.equivalent_control(K, held, S, scfg.switch_kappa, sgn=scfg.sgn)
        if use_eso and cfg.oracle_compensation:
            # exact cancellation: the plant sees precisely the nominal command
            ah_log[k] = alpha
            u_cmd = u_nom - alpha
            u_eff = u_nom
        elif use_eso:
            u_cmd = obs.compensate(u_nom, alpha_hat)
            ah_log[k] = alpha_hat
            u_eff = u_cmd + alpha
        else:
            u_cmd = u_nom
            ah_log[k] = 0.0
            u_eff = u_cmd + alpha
        u_log[k] = u_cmd

        if use_eso:
            obs.eso_step(eso, chi, u_cmd, A, B)

        if k + 1 < n_steps:
            noise = rng.uniform(-cfg.noise_bound, cfg.noise_bound, 4) if cfg.noise_bound > 0.0 else 0.0
            chi = A @ chi + Bcol * u_eff + noise

    return partial_trace(n_steps)


# ---------------------------------------------------------------------------
# metrics


@dataclass
class MetricsReport:
    lateral_rmse_m: float = 0.0
    heading_rmse_rad: float = 0.0
    max_lateral_m: float = 0.0
    max_heading_rad: float = 0.0
    settling_time_s: float = 0.0
    transmission_ratio_pct: float = 0.0
    avg_transmission_interval_s: float = 0.0
    mean_release_interval_s: float = 0.0
    bandwidth_utilization_pct: float = 0.0
    detection_time_s: float | None = None
    fp_rate_pct: float | None = None
    fn_rate_pct: float | None = None
    estimation_accuracy: float | None = None
    estimation_rmse: float | None = None
    compensation_effectiveness_pct: float | None = None
    residual_effect_pct: float | None = None
    observer_convergence_s: float | None = None
    max_estimation_error: float | None = None
    eig_max_magnitude: float = 0.0
    sliding_convergence_rate: float = 0.0
    sliding_max_deviation: float = 0.0
    stability_margin: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def _settling_time(e_d: np.ndarray, dt: float, band: float = SETTLING_BAND_M) -> float:
    outside = np.abs(e_d) > band
    if not np.any(outside):
        return 0.0
    last = int(np.where(outside)[0][-1])
    return min((last + 1) * dt, (e_d.size - 1) * dt)


def _detection_metrics(trace: RunTrace, detector: obs.AttackDetector):
    """Detector sweep over the estimate; rates split at the attack onset."""
    flags = np.zeros(trace.n_steps, dtype=bool)
    for k in range(trace.n_steps):
        flags[k] = detector.update(trace.attack_est[k])
    onset = trace.attack_start_s
    if math.isnan(onset):
        return None, None, None
    pre = trace.t < onset
    post = ~pre
    fp = 100.0 * float(np.sum(flags[pre])) / max(int(np.sum(pre)), 1)
    fn = 100.0 * float(np.sum(~flags[post])) / max(int(np.sum(post)), 1)
    hit = np.where(flags & post)[0]
    det_time = float(trace.t[hit[0]] - onset) if hit.size else None
    return det_time, fp, fn


def _observer_convergence(trace: RunTrace, tol: float, hold_steps: int = 25) -> float | None:
    onset = trace.attack_start_s
    err = np.abs(trace.attack - trace.attack_est)
    start = int(np.searchsorted(trace.t, onset))
    ok = err[start:] < tol
    run = 0
    for i, good in enumerate(ok):
        run = run + 1 if good else 0
        if run >= hold_steps:
            return float(trace.t[start + i - hold_steps + 1] - onset)
    return None


def _sliding_rate(trace: RunTrace) -> float:
    """Mean relative per-step shrinkage of |S| during the reaching phase."""
    S = np.abs(trace.surface)
    reaching = np.where(S[:-1] > trace.xi)[0]
    if reaching.size == 0:
        return 0.0
    rel = (S[reaching] - S[reaching + 1]) / S[reaching]
    return float(max(np.mean(rel), 0.0))


def compute_metrics(trace: RunTrace, baseline: RunTrace | None = None, mat_A=None, mat_B=None) -> MetricsReport:
    """Summarise one run; pass the unmitigated run as `baseline` to fill the
    compensation metrics (attack-window lateral RMSE ratio)."""
    A = S5_A if mat_A is None else np.asarray(mat_A, dtype=float)
    B = S5_B if mat_B is None else np.asarray(mat_B, dtype=float).reshape(4, 1)
    rep = MetricsReport()
    dt = trace.dt_s
    e_d = trace.states[:, 0]
    e_phi = trace.states[:, 2]
    rep.lateral_rmse_m = float(np.sqrt(np.mean(e_d**2)))
    rep.heading_rmse_rad = float(np.sqrt(np.mean(e_phi**2)))
    rep.max_lateral_m = float(np.max(np.abs(e_d)))
    rep.max_heading_rad = float(np.max(np.abs(e_phi)))
    rep.settling_time_s = _settling_time(e_d, dt)

    n = trace.n_steps
    rep.transmission_ratio_pct = 100.0 * trace.n_events / n
    rep.bandwidth_utilization_pct = rep.transmission_ratio_pct
    rep.avg_transmission_interval_s = (n - 1) * dt / max(trace.n_events, 1)
    if trace.n_events >= 2:
        rep.mean_release_interval_s = float(np.mean(np.diff(trace.event_steps))) * dt
    else:
        rep.mean_release_interval_s = (n - 1) * dt

    closed = A + B @ trace.gain_K
    rep.eig_max_magnitude = spectral_radius(closed)
    rep.stability_margin = 1.0 - rep.eig_max_magnitude
    after = trace.t >= 2.0
    rep.sliding_max_deviation = float(np.max(np.abs(trace.surface[after]))) if np.any(after) else 0.0
    rep.sliding_convergence_rate = _sliding_rate(trace)

    onset = trace.attack_start_s
    if not math.isnan(onset):
        window = trace.t >= onset
        alpha = trace.attack[window]
        alpha_hat = trace.attack_est[window]
        denom = float(np.linalg.norm(alpha))
        if denom > 0.0 and np.any(np.abs(alpha_hat) > 0.0):
            rep.estimation_accuracy = 1.0 - float(np.linalg.norm(alpha - alpha_hat)) / denom
            rep.estimation_rmse = float(np.sqrt(np.mean((alpha - alpha_hat) ** 2)))
            rep.max_estimation_error = float(np.max(np.abs(alpha - alpha_hat)))
            qatt = trace.attack_bound
            det, fp, fn = _detection_metrics(trace, obs.AttackDetector(bound_Qatt=qatt))
            rep.detection_time_s, rep.fp_rate_pct, rep.fn_rate_pct = det, fp, fn
            rep.observer_convergence_s = _observer_convergence(trace, tol=0.1 * qatt)
        if baseline is not None:
            bwin = baseline.t >= onset
            rmse_base = float(np.sqrt(np.mean(baseline.states[bwin, 0] ** 2)))
            rmse_this = float(np.sqrt(np.mean(trace.states[window, 0] ** 2)))
            if rmse_base > 0.0:
                rep.compensation_effectiveness_pct = 100.0 * (1.0 - rmse_this / rmse_base)
                rep.residual_effect_pct = 100.0 - rep.compensation_effectiveness_pct
    return rep


def default_config(case_id: str, seed: int = 0, **overrides) -> ScenarioConfig:
    """Reference-study defaults for the given case.

    The scenario feedback gain defaults to the Riccati-companion row of the
    sliding surface (the gain the surface design already implies); the
    reported literature row `S5_K_REPORTED` is accepted via `gain_K` but its
    closed loop is too slow to reproduce the published convergence behaviour.
    """
    cfg = ScenarioConfig(case_id=case_id, seed=seed)
    for key, val in overrides.items():
        if not hasattr(cfg, key):
            raise ValueError(f"unknown scenario option {key!r}")
        setattr(cfg, key, val)
    return cfg
