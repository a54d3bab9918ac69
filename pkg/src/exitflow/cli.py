"""Experiment runner: config-driven subcommands with reproducible outputs.

Every subcommand writes its CSV outputs plus a JSON run manifest
(config digest, seed, tool version, output list, wall time).  Exit codes:
0 success, 1 config validation failure, 2 numerical failure, 3 failed
agreement check (mc-check).
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .bounds import (QuadratureError, growth_integrals_quadrature,
                     total_bound)
from .config import (ConfigError, build_problem, build_scheduler,
                     config_digest, load_config, probe_indices)
from .csvio import read_matrix_csv, write_csv, write_matrix_csv
from .elliptic import SolverError, solve_on_policy_bellman
from .flow import (POWER_LAW, Scheduler, UnstableFlowError,
                   error_decomposition, integrate_flow)
from .hjb import (ConvergenceError, solve_regularized_hjb,
                  solve_unregularized_hjb)
from .montecarlo import PathCapError, simulate_exit_value
from .policy import uniform_policy

VALIDATION_FAILURE = 1
NUMERICAL_FAILURE = 2
CHECK_FAILURE = 3

_NUMERICAL_ERRORS = (SolverError, ConvergenceError, UnstableFlowError,
                     QuadratureError, PathCapError)


def _out_dir(resolved, args):
    if args.out is not None:
        return args.out
    if "output_dir" in resolved:
        return resolved["output_dir"]
    return os.environ.get("EXITFLOW_OUTDIR", "runs")


def _write_manifest(out_dir, command, resolved, seed, outputs, wall_time):
    manifest = {
        "command": command,
        "config_digest": config_digest(resolved),
        "seed": seed,
        "tool_version": __version__,
        "outputs": sorted(outputs),
        "wall_time_s": wall_time,
        "resolved_config": resolved,
    }
    path = os.path.join(out_dir, f"{command}-manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def _tau_tag(tau):
    return format(float(tau), "g").replace("-", "m").replace(".", "p")


def cmd_solve_hjb(resolved, out_dir):
    if "hjb" not in resolved:
        raise ConfigError("config key 'hjb' is required for solve-hjb")
    problem = build_problem(resolved)
    solver = resolved["solver"]
    outputs = []
    sols = [solve_unregularized_hjb(problem, tol=solver["tol"],
                                    max_iter=solver["max_iter"],
                                    scheme=solver["scheme"])]
    for tau in resolved["hjb"]["taus"]:
        sols.append(solve_regularized_hjb(problem, tau, tol=solver["tol"],
                                          max_iter=solver["max_iter"],
                                          scheme=solver["scheme"]))
    for sol in sols:
        tag = _tau_tag(sol.tau)
        rows = []
        acts = problem.actions.actions
        for i, x in enumerate(problem.grid.interior):
            if sol.argmin_actions is not None:
                top = sol.argmin_actions[i]
            else:
                top = acts[int(np.argmax(sol.optimal_policy.weights[i]))]
            rows.append((x, sol.v_star.v[i + 1], sol.v_star.dv[i], top))
        path = os.path.join(out_dir, f"hjb_tau_{tag}.csv")
        outputs.append(write_csv(path, ["x", "v_star", "dv", "top_action"],
                                 rows))
        hist = os.path.join(out_dir, f"hjb_residuals_tau_{tag}.csv")
        outputs.append(write_csv(hist, ["iteration", "residual"],
                                 list(enumerate(sol.residual_history, 1))))
    return outputs, 0


def _initial_feature(resolved, problem, flow_cfg, solver):
    z0_choice = flow_cfg["z0"]
    shape = (problem.n_interior, problem.actions.n_actions)
    if z0_choice == "zero":
        return np.zeros(shape)
    if z0_choice == "optimal":
        tau0 = float(build_scheduler(flow_cfg).value(0.0))
        sol = solve_regularized_hjb(problem, tau0, tol=solver["tol"],
                                    max_iter=solver["max_iter"],
                                    scheme=solver["scheme"])
        from .hjb import optimal_feature
        return -optimal_feature(problem, sol.v_star) / tau0
    if z0_choice.endswith(".csv"):
        z = read_matrix_csv(z0_choice)
        if z.shape != shape:
            raise ConfigError(f"config key 'flow.z0': restart matrix has "
                              f"shape {z.shape}, expected {shape}")
        return z
    raise ConfigError("config key 'flow.z0': expected 'zero', 'optimal' or "
                      "a .csv restart path")


def cmd_run_flow(resolved, out_dir):
    if "flow" not in resolved:
        raise ConfigError("config key 'flow' is required for run-flow")
    problem = build_problem(resolved)
    flow_cfg = resolved["flow"]
    solver = resolved["solver"]
    sched = build_scheduler(flow_cfg)
    probes = probe_indices(problem.grid, flow_cfg["probes"])
    z0 = _initial_feature(resolved, problem, flow_cfg, solver)
    traj = integrate_flow(problem, z0, sched, flow_cfg["horizon"],
                          flow_cfg["dt"], probes,
                          record_every=flow_cfg["record_every"],
                          scheme=solver["scheme"])
    outputs = []
    labels = [format(x, ".6g") for x in traj.probe_x]
    header = ["s", "tau_s"] + [f"v_reg_{x}" for x in labels] \
        + [f"v_unreg_{x}" for x in labels] + ["kl_mass"]
    rows = []
    for i in range(traj.times.size):
        rows.append([traj.times[i], traj.tau_values[i],
                     *traj.values_at_probe[i], *traj.unregularized_values[i],
                     traj.kl_mass[i]])
    path = os.path.join(out_dir, "flow_trajectory.csv")
    outputs.append(write_csv(path, header, rows))
    outputs.append(write_matrix_csv(os.path.join(out_dir, "flow_z_final.csv"),
                                    traj.z_final,
                                    row_labels=problem.grid.interior,
                                    col_labels=problem.actions.actions))
    # error decomposition at every record (solutions cached by tau, so
    # constant schedulers solve once)
    unreg = solve_unregularized_hjb(problem, tol=solver["tol"],
                                    max_iter=solver["max_iter"],
                                    scheme=solver["scheme"])
    cache = {}
    regs = []
    for tau in traj.tau_values:
        tau = float(tau)
        if tau not in cache:
            cache[tau] = solve_regularized_hjb(problem, tau,
                                               tol=solver["tol"],
                                               max_iter=solver["max_iter"],
                                               scheme=solver["scheme"])
        regs.append(cache[tau])
    decomp = error_decomposition(problem, traj, regs, unreg)
    rows = []
    for i, s in enumerate(decomp.times):
        for j, x in enumerate(traj.probe_x):
            rows.append((s, x, decomp.kl_term[i, j], decomp.optimization[i, j],
                         decomp.bias[i, j], decomp.total[i, j]))
    path = os.path.join(out_dir, "flow_error_decomposition.csv")
    outputs.append(write_csv(path, ["s", "x", "kl_term", "optimization",
                                    "bias", "total"], rows))
    return outputs, 0


def cmd_sweep_bounds(resolved, out_dir):
    if "bounds" not in resolved:
        raise ConfigError("config key 'bounds' is required for sweep-bounds")
    cfg = resolved["bounds"]
    C, alpha = cfg["constant"], cfg["alpha"]
    figure_rows = []
    growth_rows = []
    for S in cfg["s_grid"]:
        for beta in cfg["beta_grid"]:
            sched = Scheduler(kind=POWER_LAW, beta=beta)
            figure_rows.append((beta, S, total_bound(sched, S, C, alpha)))
            gi = growth_integrals_quadrature(sched, S)
            growth_rows.append((beta, S, gi.log_I1, gi.log_I2))
    outputs = []
    path = os.path.join(out_dir, "figure_bounds.csv")
    outputs.append(write_csv(path, ["beta", "S", "bound"], figure_rows))
    path = os.path.join(out_dir, "growth_integrals.csv")
    outputs.append(write_csv(path, ["beta", "s", "log_I1", "log_I2"],
                             growth_rows))
    if "bias_sweep" in cfg:
        from .hamiltonian import bias_sweep_rows
        bs = cfg["bias_sweep"]
        rows = bias_sweep_rows(bs["taus"], bs["p_grid"],
                               alpha=bs["alpha"], beta=bs["beta"])
        path = os.path.join(out_dir, "bias_sweep.csv")
        outputs.append(write_csv(path, ["tau", "p", "soft", "hard", "gap",
                                        "gap_over_tau_log"], rows))
    return outputs, 0


def cmd_mc_check(resolved, out_dir, seed):
    if "mc" not in resolved:
        raise ConfigError("config key 'mc' is required for mc-check")
    problem = build_problem(resolved)
    mc = resolved["mc"]
    solver = resolved["solver"]
    if mc["policy"] == "uniform":
        pol = uniform_policy(problem.n_interior, problem.actions)
    else:
        ref_tau = mc["tau"] if mc["tau"] > 0 else 0.5
        sol = solve_regularized_hjb(problem, ref_tau, tol=solver["tol"],
                                    max_iter=solver["max_iter"],
                                    scheme=solver["scheme"])
        pol = sol.optimal_policy
    pde_tau = mc["pde_tau"] if mc["pde_tau"] is not None else mc["tau"]
    vf = solve_on_policy_bellman(problem, pol, pde_tau,
                                 scheme=solver["scheme"])
    rows = []
    est_rows = []
    ok = True
    for k, x0 in enumerate(mc["x0"]):
        est = simulate_exit_value(problem, pol, x0, mc["tau"], mc["n_paths"],
                                  mc["dt_sim"], seed + k)
        pde = float(np.interp(x0, problem.grid.nodes, vf.v))
        z = (est.mean - pde) / est.stderr if est.stderr > 0 else math.inf
        rows.append((x0, pde, est.mean, est.stderr, z))
        est_rows.append((x0, mc["tau"], est.mean, est.stderr, est.n_paths,
                         est.mean_exit_time, est.seed))
        if abs(est.mean - pde) > 3.0 * est.stderr + mc["bias_allowance"]:
            ok = False
    path = os.path.join(out_dir, "mc_check.csv")
    outputs = [write_csv(path, ["x", "pde_value", "mc_mean", "mc_stderr",
                                "z_score"], rows)]
    path = os.path.join(out_dir, "mc_estimates.csv")
    outputs.append(write_csv(path, ["x0", "tau", "mean", "stderr", "n_paths",
                                    "mean_exit_time", "seed"], est_rows))
    return outputs, 0 if ok else CHECK_FAILURE


def build_parser():
    parser = argparse.ArgumentParser(
        prog="exitflow",
        description="entropy-annealed mirror descent experiments on a 1D "
                    "exit-time control problem")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("solve-hjb", "solve the regularized and hard-min equations"),
            ("run-flow", "integrate the mirror descent flow"),
            ("sweep-bounds", "evaluate bound curves over (beta, S) grids"),
            ("mc-check", "compare the linear solver against simulation"),
            ("reproduce-figure", "sweep-bounds with the default grids")]:
        p = sub.add_parser(name, help=help_text)
        if name != "reproduce-figure":
            p.add_argument("--config", required=True, help="JSON config file")
        else:
            p.add_argument("--config", help="JSON config file (optional)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (else config "
                                     "output_dir or $EXITFLOW_OUTDIR)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        if args.command == "reproduce-figure" and args.config is None:
            resolved = {"seed": 1234, "solver": {"tol": None, "max_iter": 200,
                                                 "scheme": "central"},
                        "bounds": {"beta_grid": [round(0.05 * k, 10)
                                                 for k in range(1, 20)],
                                   "s_grid": [10.0, 100.0, 1000.0, 10000.0],
                                   "constant": 1.0, "alpha": 1.0}}
        else:
            resolved = load_config(args.config)
        seed = args.seed if args.seed is not None else resolved["seed"]
        resolved["seed"] = seed
        out_dir = _out_dir(resolved, args)
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "solve-hjb":
            outputs, code = cmd_solve_hjb(resolved, out_dir)
        elif args.command == "run-flow":
            outputs, code = cmd_run_flow(resolved, out_dir)
        elif args.command in ("sweep-bounds", "reproduce-figure"):
            if "bounds" not in resolved:
                resolved["bounds"] = {
                    "beta_grid": [round(0.05 * k, 10) for k in range(1, 20)],
                    "s_grid": [10.0, 100.0, 1000.0, 10000.0],
                    "constant": 1.0, "alpha": 1.0}
            outputs, code = cmd_sweep_bounds(resolved, out_dir)
        else:
            outputs, code = cmd_mc_check(resolved, out_dir, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return VALIDATION_FAILURE
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_FAILURE
    wall = time.perf_counter() - t0
    manifest = _write_manifest(out_dir, args.command, resolved, seed,
                               [os.path.relpath(p, out_dir) for p in outputs],
                               wall)
    print(f"wrote {len(outputs)} output file(s) and {manifest}")
    return code


if __name__ == "__main__":
    sys.exit(main())
