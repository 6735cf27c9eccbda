"""Command-line entry point.

Each subcommand reads a flat JSON config, applies ``--set key=value``
overrides, runs, writes ``<command>.csv`` and/or ``<command>.json`` to
``--out`` and prints the JSON summary to stdout.

Exit codes:

== =====================================================
0  success
2  bad configuration (unreadable file, unknown key, type)
3  parameters outside the model's domain, or infeasible
4  integration failure (singularity, divergence, horizon)
5  an oracle comparison failed
== =====================================================
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .blue import blue_threshold, evolve_tmsts, tmsts_steady_state
from .core import (
    DivergenceError,
    DomainError,
    HorizonError,
    InfeasibleError,
    PumpProfile,
    Sideband,
    SingularityError,
    SystemParams,
    TmstsState,
    UnstableRegimeError,
)
from .integrate import IntegratorConfig
from .red import bts_steady_state, effective_temperature, evolve_bts
from .scheme import (
    N_CAP,
    U_CAP,
    SchemeConfig,
    cooled_initial_state,
    entanglement_window,
    find_g_opt,
    g_bound,
    g_bound_shifted,
    run_scheme,
    sweep_cooling_heatmap,
)

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_INTEGRATION, EXIT_ORACLE = 0, 2, 3, 4, 5

_COMMON = {
    "zeta": 0.8,
    "n_m_b": 40.0,
    "n_c_b": 0.0,
    "rel_tol": 1e-9,
    "abs_tol": 1e-12,
    "h_max": 0.1,
}

DEFAULTS = {
    "cool": {**_COMMON, "g_r": 3.5, "detuning": 0.0, "t_max": 10.0, "n_points": 201, "beta_c": 0.0,
             "beta_m": 0.0, "omega_m": 2 * math.pi * 10e6},
    "entangle": {**_COMMON, "zeta": 0.99, "n_m_b": 75.0, "g_b": 5.0, "start": "cooled", "g_r": None,
                 "t_max": 5.0, "n_points": 201},
    "scheme": {**_COMMON, "zeta": 0.99, "n_m_b": 75.0, "g_b": 5.0, "g_r": None, "target": 0.8,
               "horizon": 20.0, "relax_time": 0.0, "pump_off": None, "n_points": 201},
    "sweep": {"zeta_grid": [0.0, 0.9, 0.99, 0.999, 0.9999, 0.99999], "g_r_grid": [0.0, 0.1, 1.0, 10.0, 100.0],
              "n_m_b": 8e3, "n_c_b": 0.0, "omega_m": 2 * math.pi * 10e6},
    "optimize": {"zeta": 0.99, "n_m_b": 75.0, "n_c_b": 0.0, "targets": [0.2, 0.5, 0.8], "horizon": 20.0,
                 "g_cap": 1e3},
    "oracle-check": {**_COMMON, "sideband": "red", "g": 2.0, "detuning": 0.0, "t_max": 10.0, "n_points": 51,
                     "cooled": False, "fock": False, "dims": None, "moment_tol": 1e-6, "fock_tol": 1e-3},
}


class ConfigError(Exception):
    pass


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(command, path=None, overrides=(), strict=False):
    """Merge defaults, the JSON file at ``path`` and ``key=value`` overrides.

    Unknown keys are rejected in strict mode and reported on stderr otherwise.
    """
    cfg = dict(DEFAULTS[command])
    supplied = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        supplied.update(data)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        supplied[key.strip()] = _parse_value(value.strip())
    unknown = sorted(set(supplied) - set(cfg))
    if unknown:
        if strict:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
        print(f"warning: ignoring unknown keys {', '.join(unknown)}", file=sys.stderr)
    for key in set(supplied) & set(cfg):
        cfg[key] = supplied[key]
    return cfg


def _num(cfg, key, allow_none=False):
    v = cfg[key]
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {v!r}")
    return float(v)


def _integrator(cfg):
    h_max = _num(cfg, "h_max")
    return IntegratorConfig(rel_tol=_num(cfg, "rel_tol"), abs_tol=_num(cfg, "abs_tol"), h_max=h_max,
                            h_init=min(1e-3, h_max))


def _grid(cfg, t_max):
    n = int(cfg["n_points"])
    if n < 2:
        raise ConfigError("n_points must be at least 2")
    return np.linspace(0.0, t_max, n)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["%.17g" % v for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def cmd_cool(cfg, out, figure=False):
    zeta, ncb, nmb = _num(cfg, "zeta"), _num(cfg, "n_c_b"), _num(cfg, "n_m_b")
    g, det, t_max = _num(cfg, "g_r"), _num(cfg, "detuning"), _num(cfg, "t_max")
    times = _grid(cfg, t_max)
    pump = PumpProfile.constant(Sideband.RED, g, detuning=det)
    traj = evolve_bts(zeta, ncb, nmb, pump, t_max, cfg=_integrator(cfg), t_eval=times,
                      beta_c=_num(cfg, "beta_c"), beta_m=_num(cfg, "beta_m"))
    obs = traj.observables
    rows = [(t, y[2], y[3], y[0], y[1], obs["n_c"][i], obs["n_m"][i], obs["delta12sq"][i])
            for i, (t, y) in enumerate(zip(traj.times, traj.states))]
    write_csv(out / "cool.csv", ["t_tilde", "theta", "phi_B", "n_c_th", "n_m_th", "n_c", "n_m", "delta12sq"], rows)
    final = traj.states[-1]
    summary = {"final": {"n_c_th": final[0], "n_m_th": final[1], "theta": final[2], "phi_B": final[3]},
               "moment_bridges": traj.flags["moment_bridges"]}
    if det == 0.0:
        try:
            theta, n_c, n_m = bts_steady_state(g, zeta, ncb, nmb)
            summary["steady_state"] = {
                "theta": theta,
                "n_c_th": n_c,
                "n_m_th": n_m,
                "max_abs_deviation": float(np.max(np.abs(final[:3] - np.array([n_c, n_m, theta])))),
                "T_eff_K": effective_temperature(n_m, _num(cfg, "omega_m")),
            }
        except DomainError as exc:
            summary["steady_state"] = {"error": str(exc)}
    if figure:
        from .plotting import plot_cooling

        summary["figure"] = str(plot_cooling(traj, out / "cool.png"))
    return summary, EXIT_OK


def cmd_entangle(cfg, out, figure=False):
    zeta, ncb, nmb = _num(cfg, "zeta"), _num(cfg, "n_c_b"), _num(cfg, "n_m_b")
    g, t_max = _num(cfg, "g_b"), _num(cfg, "t_max")
    if cfg["start"] == "cooled":
        init = cooled_initial_state(zeta, nmb, ncb, _num(cfg, "g_r", allow_none=True))
    elif cfg["start"] == "equilibrium":
        init = TmstsState(ncb, nmb)
    else:
        raise ConfigError("start must be 'cooled' or 'equilibrium'")
    times = _grid(cfg, t_max)
    traj, _ = evolve_tmsts(zeta, ncb, nmb, PumpProfile.constant(Sideband.BLUE, g), t_max, initial=init,
                           cfg=_integrator(cfg), t_eval=times, u_cap=U_CAP, n_cap=N_CAP)
    obs = traj.observables
    rows = [(t, y[2], y[0], y[1], obs["delta12sq"][i]) for i, (t, y) in enumerate(zip(traj.times, traj.states))]
    write_csv(out / "entangle.csv", ["t_tilde", "u", "n_c_th", "n_m_th", "delta12sq"], rows)
    i_min = int(np.argmin(obs["delta12sq"]))
    summary = {"initial": {"n_c_th": init.n_c_th, "n_m_th": init.n_m_th},
               "min_delta12sq": obs["delta12sq"][i_min], "t_at_min": traj.times[i_min],
               "above_threshold": g >= blue_threshold(zeta),
               "runaway_stopped": bool(traj.flags["runaway"]), "t_end": traj.flags["t_end"]}
    try:
        enter, exit_, tau = entanglement_window(traj)
        summary["window"] = {"t_enter": enter, "t_exit": exit_, "tau": tau}
    except HorizonError as exc:
        summary["window"] = {"open": True, "detail": str(exc)}
    try:
        u, n_bar, dn, d2 = tmsts_steady_state(g, zeta, 0.5 * (ncb + nmb), nmb - ncb)
        summary["steady_state"] = {"u": u, "n_bar_th": n_bar, "delta_n_th": dn, "delta12sq": d2}
    except UnstableRegimeError:
        summary["steady_state"] = None
    if figure:
        from .plotting import plot_variance

        summary["figure"] = str(plot_variance(traj, out / "entangle.png"))
    return summary, EXIT_OK


def cmd_scheme(cfg, out, figure=False):
    sc = SchemeConfig(
        zeta=_num(cfg, "zeta"), n_m_b=_num(cfg, "n_m_b"), g_b=_num(cfg, "g_b"), n_c_b=_num(cfg, "n_c_b"),
        g_r=_num(cfg, "g_r", allow_none=True), target=_num(cfg, "target"), horizon=_num(cfg, "horizon"),
        relax_time=_num(cfg, "relax_time"), pump_off=_num(cfg, "pump_off", allow_none=True),
    )
    traj, res = run_scheme(sc, _integrator(cfg))
    times = np.linspace(0.0, traj.times[-1], int(cfg["n_points"]))
    rows = [(t, traj.observable_at("u", t), *traj.dense(t)[:2], traj.observable_at("delta12sq", t)) for t in times]
    write_csv(out / "scheme.csv", ["t_tilde", "u", "n_c_th", "n_m_th", "delta12sq"], rows)
    summary = {
        "delta12_min": res.delta12_min, "t_at_min": res.t_at_min,
        "tau_entangled": res.tau_entangled, "tau_below_target": res.tau_below_target,
        "t_enter": res.t_enter, "t_exit": res.t_exit,
        "t_enter_target": res.t_enter_target, "t_exit_target": res.t_exit_target,
        "above_threshold": res.above_threshold, "runaway_stopped": res.runaway_stopped, "t_end": res.t_end,
        "initial": {"n_c_th": res.initial.n_c_th, "n_m_th": res.initial.n_m_th},
    }
    if figure:
        from .plotting import plot_variance

        summary["figure"] = str(plot_variance(traj, out / "scheme.png", sc.target))
    return summary, EXIT_OK


def cmd_sweep(cfg, out, figure=False):
    zetas = [float(z) for z in cfg["zeta_grid"]]
    gs = [float(g) for g in cfg["g_r_grid"]]
    if not zetas or not gs:
        raise ConfigError("zeta_grid and g_r_grid must be non-empty")
    temps = sweep_cooling_heatmap(zetas, gs, _num(cfg, "n_m_b"), _num(cfg, "n_c_b"), _num(cfg, "omega_m"))
    write_csv(out / "sweep.csv", ["zeta"] + [f"g_r={g:.17g}" for g in gs],
              [(z, *row) for z, row in zip(zetas, temps)])
    summary = {"shape": list(temps.shape), "min_T_eff_K": np.nanmin(temps), "max_T_eff_K": np.nanmax(temps)}
    if figure:
        from .plotting import plot_heatmap

        summary["figure"] = str(plot_heatmap(zetas, gs, temps, out / "sweep.png"))
    return summary, EXIT_OK


def cmd_optimize(cfg, out, figure=False):
    zeta, nmb, ncb = _num(cfg, "zeta"), _num(cfg, "n_m_b"), _num(cfg, "n_c_b")
    results = []
    code = EXIT_OK
    for target in cfg["targets"]:
        target = float(target)
        entry = {"target": target, "g_bound": g_bound(zeta, nmb, target),
                 "g_bound_shifted": g_bound_shifted(zeta, nmb, target)}
        try:
            r = find_g_opt(zeta, nmb, target, _num(cfg, "horizon"), _num(cfg, "g_cap"), ncb)
            entry.update(g_min=r.g_min, g_opt=r.g_opt, tau_max=r.tau_max, multimodal=r.multimodal,
                         scan_g=r.scan_g, scan_tau=r.scan_tau)
        except InfeasibleError as exc:
            entry["error"] = str(exc)
            code = EXIT_DOMAIN
        results.append(entry)
    summary = {"results": results}
    if figure:
        from .plotting import plot_optimum

        ok = [r for r in results if "g_opt" in r]
        if ok:
            summary["figure"] = str(plot_optimum(ok, out / "optimize.png"))
    return summary, code


def cmd_oracle_check(cfg, out, figure=False, strict=False):
    from . import oracle

    zeta, ncb, nmb = _num(cfg, "zeta"), _num(cfg, "n_c_b"), _num(cfg, "n_m_b")
    g, t_max = _num(cfg, "g"), _num(cfg, "t_max")
    times = _grid(cfg, t_max)
    icfg = _integrator(cfg)
    p = SystemParams.from_dimensionless(zeta, ncb, nmb)
    if cfg["sideband"] == "red":
        pump = PumpProfile.constant(Sideband.RED, g, detuning=_num(cfg, "detuning"))
        traj = evolve_bts(zeta, ncb, nmb, pump, t_max, cfg=icfg, t_eval=times)
        semi = oracle.bts_moment_trajectory(traj)
        m0 = oracle.MomentSet(ncb, nmb)
        names = ["N_c", "N_m", "C_re", "C_im", "delta12sq"]
        start = (ncb, nmb)
    elif cfg["sideband"] == "blue":
        pump = PumpProfile.constant(Sideband.BLUE, g)
        init = cooled_initial_state(zeta, nmb, ncb) if cfg["cooled"] else TmstsState(ncb, nmb)
        traj, _ = evolve_tmsts(zeta, ncb, nmb, pump, t_max, initial=init, cfg=icfg, t_eval=times)
        semi = oracle.tmsts_moment_trajectory(traj, init.phi_S)
        m0 = oracle.MomentSet(init.n_c_th, init.n_m_th)
        names = ["N_c", "N_m", "S_re", "S_im", "delta12sq"]
        start = (init.n_c_th, init.n_m_th)
    else:
        raise ConfigError("sideband must be 'red' or 'blue'")
    mom = oracle.evolve_moments(p, pump, m0, t_max, t_eval=times)
    report = {"self_check": oracle.compare_trajectories(mom, mom, 0.0, names).worst}
    rep = oracle.compare_trajectories(semi, mom, _num(cfg, "moment_tol"), names)
    report["moment"] = {"deviations": rep.deviations, "tol": rep.tol, "passed": rep.passed}
    passed = rep.passed
    if cfg["fock"]:
        dims = cfg["dims"]
        if dims is None:
            n = max(oracle.thermal_dim(max(start)), 7)
            dims = [n, n] if cfg["sideband"] == "red" else [2 * n, 2 * n]
        dims = (int(dims[0]), int(dims[1]))
        rho0 = oracle.FockDensity.thermal(start[0], start[1], dims)
        beta_m = -init.phi_S if cfg["sideband"] == "blue" else 0.0
        run = oracle.evolve_fock(p, pump, rho0, t_max, times, beta_m=beta_m)
        frep = oracle.compare_trajectories(semi, run.trajectory, _num(cfg, "fock_tol"), ["N_c", "N_m", "delta12sq"])
        report["fock"] = {"dims": list(dims), "deviations": frep.deviations, "tol": frep.tol,
                          "passed": frep.passed, "trace_drift": run.trace_drift,
                          "max_top_layer": run.max_top_layer, "trusted": run.trusted, "notes": run.notes}
        passed = passed and frep.passed and (run.trusted or not strict)
    report["passed"] = passed
    return report, EXIT_OK if passed else EXIT_ORACLE


COMMANDS = {
    "cool": cmd_cool,
    "entangle": cmd_entangle,
    "scheme": cmd_scheme,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "oracle-check": cmd_oracle_check,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="optomech", description="Pumped lossy optomechanics simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON file of key-value settings")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a setting")
        sp.add_argument("--strict", action="store_true",
                        help="reject unknown keys; untrusted Fock runs count as failures")
        sp.add_argument("--figure", action="store_true", help="also render a PNG figure next to the data")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, args.set, args.strict)
        args.out.mkdir(parents=True, exist_ok=True)
        fn = COMMANDS[args.command]
        if args.command == "oracle-check":
            summary, code = fn(cfg, args.out, args.figure, args.strict)
        else:
            summary, code = fn(cfg, args.out, args.figure)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, InfeasibleError) as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (SingularityError, DivergenceError, HorizonError) as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    text = json.dumps(_jsonable(summary), indent=2, sort_keys=True)
    (args.out / f"{args.command}.json").write_text(text + "\n")
    print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
