"""Event-triggered transmission law and artificial-delay bookkeeping.

A state is retransmitted once the weighted deviation from the last
transmitted state crosses a relative threshold mu.  Between transmissions
the holding interval of each transmitted sample is mapped onto a bounded
delayed-state representation (regimes Case A / B with windows L1..L3) so a
delayed-system analysis applies to the event-triggered loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .plant import state_array


@dataclass(frozen=True)
class TriggerConfig:
    """Weighting matrix and sensitivity of the transmission law."""

    weight_Upsilon: np.ndarray
    sensitivity_mu: float

    def __post_init__(self):
        U = np.asarray(self.weight_Upsilon, dtype=float)
        if U.ndim != 2 or U.shape[0] != U.shape[1]:
            raise ValueError("weight matrix must be square")
        if np.max(np.abs(U - U.T)) > 1e-12:
            raise ValueError("weight matrix must be symmetric within 1e-12")
        if np.min(np.linalg.eigvalsh(U)) <= 0.0:
            raise ValueError("weight matrix must be positive definite")
        if not 0.0 <= self.sensitivity_mu <= 1.0:
            raise ValueError(f"sensitivity mu must be in [0, 1], got {self.sensitivity_mu}")
        object.__setattr__(self, "weight_Upsilon", U)


@dataclass
class TriggerState:
    """Last transmitted sample plus the event log (step, inter-event interval)."""

    last_sent_state: np.ndarray
    last_sent_step: int = 0
    event_log: list = field(default_factory=list)

    def __post_init__(self):
        self.last_sent_state = state_array(self.last_sent_state)
        if not self.event_log:
            # step 0 always transmits
            self.event_log = [(0, 0)]

    def record_event(self, step: int, state) -> None:
        interval = step - self.last_sent_step
        self.last_sent_state = state_array(state)
        self.last_sent_step = step
        self.event_log.append((step, interval))

    @property
    def event_steps(self) -> list:
        return [step for step, _ in self.event_log]


def quad_form(x: np.ndarray, U: np.ndarray) -> float:
    return float(x @ U @ x)


def should_trigger(current, cfg: TriggerConfig, st: TriggerState) -> bool:
    """True iff the deviation quadratic form reaches mu times the held-state form."""
    x = state_array(current)
    err = x - st.last_sent_state
    U = cfg.weight_Upsilon
    return quad_form(err, U) >= cfg.sensitivity_mu * quad_form(st.last_sent_state, U)


def inter_event_error(current, st: TriggerState) -> np.ndarray:
    """Deviation e(k) = chi(k) - chi(k_s) from the last transmitted sample."""
    return state_array(current) - st.last_sent_state


@dataclass(frozen=True)
class DelayModel:
    """Bound and per-event values of the raw transmission delay (in steps)."""

    max_delay_steps: int
    randomize: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.max_delay_steps < 0:
            raise ValueError("max_delay_steps must be >= 0")

    def draw(self, n_events: int) -> np.ndarray:
        """Per-event delays; the first transmission initialises the loop at delay 0."""
        if not self.randomize or self.max_delay_steps == 0:
            return np.zeros(n_events, dtype=int)
        rng = np.random.default_rng(self.seed)
        d = rng.integers(0, self.max_delay_steps + 1, size=n_events)
        d[0] = 0
        return d


@dataclass(frozen=True)
class DelayClassification:
    """Artificial delay delta(k), its regime, and the matching error-branch rule.

    ``error_offset`` is None where the representation error vanishes;
    otherwise e(k) = chi(k_s) - chi(k_s + error_offset).
    """

    delay_steps: int
    regime: str  # "A" | "B-L1" | "B-L2" | "B-L3"
    error_offset: int | None


def artificial_delay(
    event_steps: tuple,
    delays: tuple,
    k: int,
    max_delay_steps: int,
) -> DelayClassification:
    """Classify step k inside one transmission interval and return delta(k).

    ``event_steps`` holds the consecutive triggering instants (k_s, k_{s+1}),
    ``delays`` the matching raw delays; both raw delays must not exceed
    ``max_delay_steps``.  Returned delays always satisfy
    0 <= delta_{k_s} <= delta(k) <= max_delay_steps + 1.
    """
    ks, ksn = int(event_steps[0]), int(event_steps[1])
    dks, dksn = int(delays[0]), int(delays[1])
    db = int(max_delay_steps)
    if not (0 <= dks <= db and 0 <= dksn <= db):
        raise ValueError(f"per-event delays {delays} exceed the bound {db}")
    lo, hi = ks + dks, ksn + dksn - 1
    if not lo <= k <= hi:
        raise ValueError(f"step {k} outside the interval [{lo}, {hi}]")

    if ks + db + 1 >= hi:
        # Case A: the whole interval fits inside the delay budget
        return DelayClassification(delay_steps=k - ks, regime="A", error_offset=None)

    # Case B: d is the unique offset with ks + d + db < hi <= ks + d + db + 1
    d = hi - ks - db - 1
    if k <= ks + db + 1:
        return DelayClassification(delay_steps=k - ks, regime="B-L1", error_offset=None)
    if k >= ks + db + d:
        return DelayClassification(delay_steps=k - ks - d, regime="B-L3", error_offset=d)
    # window index l places k at the left end of [ks + db + l, ks + db + l + 1]
    l = k - ks - db
    return DelayClassification(delay_steps=db, regime="B-L2", error_offset=l)


@dataclass(frozen=True)
class Theorem1Report:
    """Per-step audit of the delayed-state error bound along a simulated run."""

    n_steps_checked: int
    violation_steps: np.ndarray
    ratio_series: np.ndarray  # e'Ue / (mu * chi_d'U chi_d), nan where undefined
    trigger_violation_steps: np.ndarray  # steps breaking the raw inter-event bound

    @property
    def n_violations(self) -> int:
        return int(self.violation_steps.size)


def theorem1_diagnostic(trace, cfg: TriggerConfig) -> Theorem1Report:
    """Audit the delayed error bound e'Ue <= mu chi(k-delta)'U chi(k-delta).

    ``trace`` must expose per-step arrays ``states``, ``delay_steps`` and the
    delay-representation error ``delay_error`` (zero in regimes A/L1), plus
    the raw inter-event error ``trigger_error`` checked against the held
    state.  Violations are collected, never raised.
    """
    U = cfg.weight_Upsilon
    mu = cfg.sensitivity_mu
    chi = trace.states
    n = chi.shape[0]
    ratios = np.full(n, np.nan)
    bad = []
    bad_trig = []
    for k in range(n):
        delta = int(trace.delay_steps[k])
        idx = max(k - delta, 0)
        chid = chi[idx]
        e = trace.delay_error[k]
        lhs = quad_form(e, U)
        rhs = mu * quad_form(chid, U)
        if rhs > 0.0:
            ratios[k] = lhs / rhs
        if lhs > rhs + 1e-12 * max(1.0, rhs):
            bad.append(k)
        # raw trigger-error soundness against the held sample
        e16 = trace.trigger_error[k]
        held = chi[k] - e16
        if quad_form(e16, U) > mu * quad_form(held, U) + 1e-12:
            bad_trig.append(k)
    return Theorem1Report(
        n_steps_checked=n,
        violation_steps=np.asarray(bad, dtype=int),
        ratio_series=ratios,
        trigger_violation_steps=np.asarray(bad_trig, dtype=int),
    )
