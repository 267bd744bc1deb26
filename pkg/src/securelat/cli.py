"""Command-line front end: dataset generation, identification, scenario runs
and certificate verification, driven by an INI-style config with the
reference-study defaults baked in.

Exit codes: 0 success (an infeasible certificate is still a valid report),
1 runtime abort (e.g. simulation blow-up), 2 configuration errors.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, control as ctl, observer as obs, plant, sim, svg, synthesis, sysid, trigger as trg

TRACE_HEADER = "t,e_d,e_d_dot,e_phi,e_phi_dot,u,alpha_att,alpha_hat,S,triggered,delay_steps,V_lkf"
DATASET_HEADER = "t,e_d,e_d_dot,e_phi,e_phi_dot,u"


class ConfigError(Exception):
    pass


def fmt(x) -> str:
    """Decimal text with 12 significant digits."""
    return f"{float(x):.12g}"


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(fmt(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_ready(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


DEFAULT_CONFIG = {
    "plant": {
        "mass_kg": "1573.0",
        "inertia_z_kgm2": "2873.0",
        "dist_front_m": "1.10",
        "dist_rear_m": "1.58",
        "stiff_front_N_per_rad": "80000.0",
        "stiff_rear_N_per_rad": "80000.0",
        "speed_long_m_per_s": "30.0",
    },
    "trigger": {
        "mu": "0.2",
        "upsilon": "identity",
        "max_delay_s": "0.1",
        "random_delays": "false",
    },
    "observer": {
        "target_radius": "0.7",
    },
    "control": {
        "gamma": "0.5",
        "lambda2": "0.2",
        "kappa": "0.15",
        "rho": "0.2",
        "q_att": "0.15",
        "memory_len": "500",
        "boundary_phi": "0.2",
        "q_diag": "10,1,10,1",
        "r": "1.0",
        "gain": "riccati",  # riccati | reported | comma-separated row
    },
    "attack": {
        "kind": "sinusoid",
        "amplitude": "0.15",
        "freq_hz": "0.5",
        "start_time_s": "10.0",
    },
    "sim": {
        "duration_s": "20.0",
        "dt_s": "0.01",
        "initial_state": "0.5,0,0.5,0",
        "model": "s5",  # s5 | path to model.json
        "noise_bound": "0.0",
        "samples": "5000",
        "excitation_amplitude": "0.05",
        "dataset_path": "",
        "delta_bar_steps": "",
        "synthesis_budget": "60000",
    },
}


def load_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.read_dict(DEFAULT_CONFIG)
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            read = cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        if not read:
            raise ConfigError(f"config file unreadable: {path}")
        known = set(DEFAULT_CONFIG)
        for section in cp.sections():
            if section not in known:
                raise ConfigError(f"unknown config section [{section}]")
    return cp


def _floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.replace(";", ",").split(",") if v.strip() != ""])


def _plant_params(cp) -> plant.VehicleParams:
    sec = cp["plant"]
    try:
        return plant.VehicleParams(
            mass_kg=sec.getfloat("mass_kg"),
            inertia_z_kgm2=sec.getfloat("inertia_z_kgm2"),
            dist_front_m=sec.getfloat("dist_front_m"),
            dist_rear_m=sec.getfloat("dist_rear_m"),
            stiff_front_N_per_rad=sec.getfloat("stiff_front_N_per_rad"),
            stiff_rear_N_per_rad=sec.getfloat("stiff_rear_N_per_rad"),
            speed_long_m_per_s=sec.getfloat("speed_long_m_per_s"),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [plant] parameters: {exc}") from None


def _model_matrices(cp):
    spec_ = cp["sim"].get("model", "s5").strip()
    if spec_ == "s5":
        return sim.S5_A.copy(), sim.S5_B.copy()
    if not os.path.exists(spec_):
        raise ConfigError(f"model file not found: {spec_}")
    with open(spec_, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    A = np.asarray(data["A"], dtype=float)
    B = np.asarray(data["B"], dtype=float).reshape(-1, 1)
    return A, B


def _scenario_config(cp, case_id: str, seed: int) -> sim.ScenarioConfig:
    try:
        A, B = _model_matrices(cp)
        csec = cp["control"]
        q_diag = _floats(csec.get("q_diag"))
        scfg = ctl.make_sliding_config(
            A,
            B,
            weight_Q=np.diag(q_diag),
            weight_R=np.array([[csec.getfloat("r")]]),
            frac_order_gamma=csec.getfloat("gamma"),
            frac_weight_lambda=csec.getfloat("lambda2"),
            switch_kappa=csec.getfloat("kappa"),
            switch_rho=csec.getfloat("rho"),
            attack_bound_Qatt=csec.getfloat("q_att"),
            memory_len_L=csec.getint("memory_len"),
            sample_period_s=cp["sim"].getfloat("dt_s"),
            boundary_phi=csec.getfloat("boundary_phi"),
        )
        gain_txt = csec.get("gain", "riccati").strip()
        if gain_txt == "riccati":
            gain = None
        elif gain_txt == "reported":
            gain = sim.S5_K_REPORTED.copy()
        else:
            gain = _floats(gain_txt).reshape(1, -1)
        tsec = cp["trigger"]
        ups_txt = tsec.get("upsilon", "identity").strip()
        ups = np.eye(4) if ups_txt == "identity" else np.diag(_floats(ups_txt))
        dt = cp["sim"].getfloat("dt_s")
        max_delay = int(round(tsec.getfloat("max_delay_s") / dt))
        asec = cp["attack"]
        attack = (
            obs.AttackModel(kind="none")
            if case_id == "case1"
            else obs.AttackModel(
                kind=asec.get("kind"),
                amplitude=asec.getfloat("amplitude"),
                freq_hz=asec.getfloat("freq_hz"),
                start_time_s=asec.getfloat("start_time_s"),
                bound_Qatt=csec.getfloat("q_att"),
            )
        )
        return sim.ScenarioConfig(
            case_id=case_id,
            duration_s=cp["sim"].getfloat("duration_s"),
            dt_s=dt,
            initial_state=_floats(cp["sim"].get("initial_state")),
            mat_A=A,
            mat_B=B,
            gain_K=gain,
            trigger_cfg=trg.TriggerConfig(weight_Upsilon=ups, sensitivity_mu=tsec.getfloat("mu")),
            sliding_cfg=scfg,
            attack=attack,
            delay=trg.DelayModel(
                max_delay_steps=max_delay,
                randomize=tsec.getboolean("random_delays"),
                seed=seed,
            ),
            eso_target_radius=cp["observer"].getfloat("target_radius"),
            noise_bound=cp["sim"].getfloat("noise_bound"),
            seed=seed,
        )
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def write_trace_csv(path: str, trace: sim.RunTrace) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRACE_HEADER + "\n")
        for k in range(trace.n_steps):
            row = [
                fmt(trace.t[k]),
                fmt(trace.states[k, 0]),
                fmt(trace.states[k, 1]),
                fmt(trace.states[k, 2]),
                fmt(trace.states[k, 3]),
                fmt(trace.control[k]),
                fmt(trace.attack[k]),
                fmt(trace.attack_est[k]),
                fmt(trace.surface[k]),
                "1" if trace.triggered[k] else "0",
                str(int(trace.delay_steps[k])),
                fmt(trace.v_lkf[k]),
            ]
            fh.write(",".join(row) + "\n")


def _emit_plots(out_dir: str, case_id: str, trace: sim.RunTrace, emitted: list) -> None:
    plot_dir = os.path.join(out_dir, case_id)
    os.makedirs(plot_dir, exist_ok=True)
    t = trace.t
    docs = {
        "states.svg": svg.render_lines(
            t,
            [trace.states[:, i] for i in range(4)],
            ["e_d", "e_d_dot", "e_phi", "e_phi_dot"],
            f"{case_id}: state trajectories",
        ),
        "control.svg": svg.render_lines(
            t,
            [trace.control, trace.attack],
            ["u", "alpha_att"],
            f"{case_id}: control input and attack signal",
        ),
        "sliding.svg": svg.render_lines(t, [trace.surface], ["S"], f"{case_id}: sliding surface"),
    }
    ev = trace.event_steps
    if ev.size >= 2:
        docs["release_intervals.svg"] = svg.render_lines(
            ev[1:] * trace.dt_s,
            [np.diff(ev) * trace.dt_s],
            ["release interval (s)"],
            f"{case_id}: release intervals",
            stem=True,
        )
    for name, doc in docs.items():
        path = os.path.join(plot_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(doc)
        emitted.append(path)


def cmd_gen_data(cp, out_dir: str, seed: int, emitted: list) -> dict:
    params = _plant_params(cp)
    model = plant.continuous_matrices(params)
    dt = cp["sim"].getfloat("dt_s")
    n = cp["sim"].getint("samples")
    amp = cp["sim"].getfloat("excitation_amplitude")
    rng = np.random.default_rng(seed)
    inputs = rng.uniform(-amp, amp, n - 1)
    states = plant.generate_trajectory(model, np.zeros(4), inputs, dt)[:n]
    path = os.path.join(out_dir, "dataset.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(DATASET_HEADER + "\n")
        for k in range(n):
            u = inputs[k] if k < n - 1 else 0.0
            fh.write(
                ",".join([fmt(k * dt)] + [fmt(v) for v in states[k]] + [fmt(u)]) + "\n"
            )
    emitted.append(path)
    data = sysid.build_matrices(states, inputs, dt)
    pe = sysid.persistency_check(data, order_ns=4, window_ls=4)
    return {"dataset_rows": n, "persistency_ok": bool(pe.ok), "hankel_rank": pe.hankel_rank}


def cmd_identify(cp, out_dir: str, trunc, emitted: list) -> dict:
    ds_path = cp["sim"].get("dataset_path", "").strip() or os.path.join(out_dir, "dataset.csv")
    if not os.path.exists(ds_path):
        raise ConfigError(f"dataset not found: {ds_path}")
    data = sysid.load_dataset_csv(ds_path)
    trunc_arg = "auto" if trunc == "auto" else int(trunc)
    import warnings as _warnings

    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always")
        model = sysid.dmd_identify(data, trunc_order=trunc_arg)
    path = os.path.join(out_dir, "model.json")
    write_json(
        path,
        {
            "A": model.mat_A,
            "B": model.mat_B,
            "sample_period_s": model.sample_period_s,
            "trunc_order": model.trunc_order,
            "residual_fro": model.residual_fro,
            "persistency_ok": model.persistency_ok,
        },
    )
    emitted.append(path)
    return {
        "model": path,
        "trunc_order": model.trunc_order,
        "residual_fro": float(fmt(model.residual_fro)),
        "persistency_ok": model.persistency_ok,
        "warnings": [str(w.message) for w in caught],
    }


def _run_one_scenario(cp, case_id: str, seed: int, out_dir: str, emit: set) -> tuple:
    cfg = _scenario_config(cp, case_id, seed)
    trace = sim.run_scenario(cfg)
    emitted = []
    if "csv" in emit:
        path = os.path.join(out_dir, f"trace_{case_id}.csv")
        write_trace_csv(path, trace)
        emitted.append(path)
    if "svg" in emit:
        _emit_plots(out_dir, case_id, trace, emitted)
    return trace, emitted


def cmd_simulate(cp, out_dir: str, scenario: str, seed: int, emit: set, emitted: list) -> dict:
    cases = ["case1", "case2", "case3"] if scenario == "all" else [scenario]
    for c in cases:
        if c not in ("case1", "case2", "case3"):
            raise ConfigError(f"unknown scenario {c!r}")
    traces = {}
    results = {}
    with ThreadPoolExecutor(max_workers=min(len(cases), 3)) as pool:
        futs = {c: pool.submit(_run_one_scenario, cp, c, seed, out_dir, emit) for c in cases}
        for c in cases:
            traces[c], files = futs[c].result()
            emitted.extend(files)
    A, B = _model_matrices(cp)
    for c in cases:
        baseline = traces.get("case2") if c == "case3" else None
        rep = sim.compute_metrics(traces[c], baseline=baseline, mat_A=A, mat_B=B)
        results[c] = rep.as_dict()
        if "json" in emit:
            path = os.path.join(out_dir, f"metrics_{c}.json")
            write_json(path, rep.as_dict())
            emitted.append(path)
    if scenario == "all" and "json" in emit:
        path = os.path.join(out_dir, "comparison.json")
        write_json(path, {c: results[c] for c in cases})
        emitted.append(path)
    return {"cases": cases, "events": {c: int(traces[c].n_events) for c in cases}}


def cmd_verify(cp, out_dir: str, seed: int, emitted: list) -> dict:
    A, B = _model_matrices(cp)
    csec = cp["control"]
    scfg = ctl.make_sliding_config(
        A,
        B,
        weight_Q=np.diag(_floats(csec.get("q_diag"))),
        weight_R=np.array([[csec.getfloat("r")]]),
        switch_kappa=csec.getfloat("kappa"),
        switch_rho=csec.getfloat("rho"),
        attack_bound_Qatt=csec.getfloat("q_att"),
    )
    dt = cp["sim"].getfloat("dt_s")
    db_txt = cp["sim"].get("delta_bar_steps", "").strip()
    delta_bar = int(db_txt) if db_txt else int(round(cp["trigger"].getfloat("max_delay_s") / dt))
    mu = cp["trigger"].getfloat("mu")
    budget = cp["sim"].getint("synthesis_budget")
    if not np.any(B):
        result = synthesis.SynthesisResult(
            feasible=False, gain_K=None, certificate={}, max_eigenvalue=float("inf"), evaluations=0
        )
    else:
        result = synthesis.search_feasible_theorem4(A, B, mu, delta_bar, budget=budget, seed=seed)
    gain = result.gain_K if result.feasible else ctl.lqr_gain(A, B, scfg.riccati_P, scfg.weight_R)
    report = {
        "feasible": bool(result.feasible),
        "max_eigenvalue": result.max_eigenvalue,
        "evaluations": result.evaluations,
        "delta_bar_steps": delta_bar,
        "mu": mu,
        "gain_K": gain,
        "gain_source": "theorem4" if result.feasible else "riccati_fallback",
        "xi": ctl.secure_domain(scfg).level_xi,
        "spectral_radius_closed_loop": sim.spectral_radius(A + B.reshape(4, 1) @ np.atleast_2d(gain)),
        "certificate": {k: v for k, v in result.certificate.items()},
    }
    path = os.path.join(out_dir, "certificate.json")
    write_json(path, report)
    emitted.append(path)
    return {"feasible": report["feasible"], "max_eigenvalue": float(fmt(result.max_eigenvalue))}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="securelat", description=__doc__)
    parser.add_argument("command", choices=["gen-data", "identify", "simulate", "verify"])
    parser.add_argument("--config", default=None, help="INI config; defaults reproduce the reference study")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="seed (fallback: SECURELAT_SEED, then 0)")
    parser.add_argument("--scenario", default="all", help="case1|case2|case3|all")
    parser.add_argument("--trunc", default="auto", help="truncation order or 'auto'")
    parser.add_argument("--emit", default="csv,json,svg", help="comma list of outputs to write")
    args = parser.parse_args(argv)

    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("SECURELAT_SEED", "0"))
    emit = {e.strip() for e in args.emit.split(",") if e.strip()}

    try:
        cp = load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    manifest = {
        "tool_version": __version__,
        "command": args.command,
        "config_path": args.config,
        "output_dir": args.out,
        "seed": seed,
        "emitted_files": [],
    }
    emitted = manifest["emitted_files"]
    try:
        if args.command == "gen-data":
            manifest["result"] = cmd_gen_data(cp, args.out, seed, emitted)
        elif args.command == "identify":
            if args.trunc != "auto":
                try:
                    int(args.trunc)
                except ValueError:
                    raise ConfigError(f"--trunc must be an integer or 'auto', got {args.trunc!r}") from None
            manifest["result"] = cmd_identify(cp, args.out, args.trunc, emitted)
        elif args.command == "simulate":
            manifest["result"] = cmd_simulate(cp, args.out, args.scenario, seed, emit, emitted)
        else:
            manifest["result"] = cmd_verify(cp, args.out, seed, emitted)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except sim.SimulationBlowUp as exc:
        path = os.path.join(args.out, "trace_aborted.csv")
        write_trace_csv(path, exc.trace)
        emitted.append(path)
        manifest["error"] = str(exc)
        write_json(os.path.join(args.out, "run_manifest.json"), manifest)
        print(f"runtime abort: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        manifest["error"] = str(exc)
        write_json(os.path.join(args.out, "run_manifest.json"), manifest)
        print(f"runtime abort: {exc}", file=sys.stderr)
        return 1

    write_json(os.path.join(args.out, "run_manifest.json"), manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
