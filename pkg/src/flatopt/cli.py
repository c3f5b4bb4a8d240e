"""Command-line front end: config parsing, run orchestration, CSV and
SVG emission, and post-hoc report verdicts on emitted logs.

Config grammar: plain text, one `key = value` per line, full-line `#`
comments, values in Python literal syntax (numbers, lists, quoted
strings; bare words are taken as strings, `true`/`false` as booleans).
Keys are dotted: scenario.name plus scenario-specific parameters under
`scenario.`, run settings under `run.` (t_final, sample_dt, abs_tol,
rel_tol, max_step, min_step, verify_plant), controller gains under
`target.coeffs`, barrier settings under `barrier.` (c0, alpha_c, s0,
alpha_s, eps_s), `output.dir`, `output.plot`, and `seed`.  Unknown
keys are rejected.
"""

from __future__ import annotations

import argparse
import ast
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from types import SimpleNamespace
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError, FlatoptError, InsufficientSamples, UnknownScenario
from .flat_systems import (
    initial_jet_from_state,
    input_from_jet,
    output_from_state,
    plant_rhs,
    state_from_jet,
)
from .numerics import integrate_ode
from .opt_dynamics import BarrierSchedule, barrier_objective
from .problem import validate_problem
from .simulator import RunConfig, Scenario, TrajectoryLog, fit_decay_rate, run_closed_loop
from .scenarios import build_scenario
from .target_dynamics import decay_rate

__all__ = [
    "parse_config",
    "serialize_config",
    "load_config",
    "materialize_config",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "run_cli",
    "main",
]

_KNOWN_KEYS = {
    "run.t_final",
    "run.sample_dt",
    "run.abs_tol",
    "run.rel_tol",
    "run.max_step",
    "run.min_step",
    "run.verify_plant",
    "target.coeffs",
    "barrier.c0",
    "barrier.alpha_c",
    "barrier.s0",
    "barrier.alpha_s",
    "barrier.eps_s",
    "output.dir",
    "output.plot",
    "seed",
}


def _parse_value(text: str):
    if text.lower() == "true":
        return True
    if text.lower() == "false":
        return False
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config(text: str) -> dict:
    """Parse config text into a flat {dotted key: value} dict."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{line}'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in cfg:
            raise ConfigError(f"duplicate key '{key}'")
        cfg[key] = _parse_value(value)
    return cfg


def serialize_config(cfg: dict) -> str:
    """Inverse of parse_config up to key order and formatting."""
    return "".join(f"{key} = {cfg[key]!r}\n" for key in sorted(cfg))


def load_config(path) -> dict:
    return parse_config(Path(path).read_text())


def _positive_number(cfg: dict, key: str) -> float:
    value = cfg[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number")
    if not value > 0.0:
        raise ConfigError(f"{key} must be positive")
    return float(value)


def materialize_config(cfg: dict) -> Tuple[Scenario, RunConfig, dict]:
    """Turn a parsed config into (scenario, run config, output meta).

    Raises ConfigError naming the offending key on any problem.
    """
    cfg = dict(cfg)
    name = cfg.pop("scenario.name", None)
    if name is None:
        raise ConfigError("missing required key 'scenario.name'")
    if not isinstance(name, str):
        raise ConfigError("scenario.name must be a string")
    params = {
        key.split(".", 1)[1]: cfg.pop(key)
        for key in [k for k in cfg if k.startswith("scenario.")]
    }
    unknown = sorted(k for k in cfg if k not in _KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}'")

    try:
        scenario = build_scenario(name, params)
    except (UnknownScenario, ValueError, FlatoptError) as exc:
        raise ConfigError(str(exc)) from None

    run_kwargs = {}
    if "run.t_final" in cfg:
        run_kwargs["t_final"] = _positive_number(cfg, "run.t_final")
    if "run.sample_dt" in cfg:
        run_kwargs["sample_dt"] = _positive_number(cfg, "run.sample_dt")
    if "run.verify_plant" in cfg:
        if not isinstance(cfg["run.verify_plant"], bool):
            raise ConfigError("run.verify_plant must be true or false")
        run_kwargs["verify_plant"] = cfg["run.verify_plant"]

    integ_kwargs = {}
    for field in ("abs_tol", "rel_tol", "max_step", "min_step"):
        key = f"run.{field}"
        if key in cfg:
            integ_kwargs[field] = _positive_number(cfg, key)

    defaults = scenario.defaults
    spec = defaults.target
    if "target.coeffs" in cfg:
        raw = cfg["target.coeffs"]
        if not isinstance(raw, (list, tuple)) or not raw:
            raise ConfigError("target.coeffs must be a nonempty list of numbers")
        try:
            spec = replace(spec, coeffs=tuple(float(x) for x in raw))
            decay_rate(spec)
        except (TypeError, ValueError, FlatoptError) as exc:
            raise ConfigError(f"target.coeffs: {exc}") from None

    barrier = defaults.barrier
    barrier_kwargs = {
        field: _positive_number(cfg, f"barrier.{field}")
        for field in ("c0", "alpha_c", "alpha_s", "eps_s")
        if f"barrier.{field}" in cfg
    }
    if "barrier.s0" in cfg:
        value = cfg["barrier.s0"]
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
            raise ConfigError("barrier.s0 must be a number >= 0")
        barrier_kwargs["s0"] = float(value)
    if barrier_kwargs:
        try:
            barrier = replace(barrier if barrier is not None else BarrierSchedule(), **barrier_kwargs)
        except ValueError as exc:
            raise ConfigError(f"barrier settings: {exc}") from None

    try:
        run_cfg = replace(
            defaults,
            target=spec,
            barrier=barrier,
            integrator=replace(defaults.integrator, **integ_kwargs),
            **run_kwargs,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    seed = cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    meta = {
        "out": cfg.get("output.dir"),
        "plot": cfg.get("output.plot", False),
        "seed": seed,
    }
    if not isinstance(meta["plot"], bool):
        raise ConfigError("output.plot must be true or false")
    if meta["out"] is not None and not isinstance(meta["out"], str):
        raise ConfigError("output.dir must be a string")
    return scenario, run_cfg, meta


# --- trajectory serialization ------------------------------------------


def csv_header(log: TrajectoryLog) -> List[str]:
    m = log.y.shape[1]
    cols = ["t"]
    cols += [f"y_{i + 1}" for i in range(m)]
    cols += [f"ystar_{i + 1}" for i in range(m)]
    cols += ["err"]
    if log.u is not None:
        cols += [f"u_{i + 1}" for i in range(log.u.shape[1])]
    if log.f_vals is not None:
        p = log.f_vals.shape[1]
        cols += [f"f_{i + 1}" for i in range(p)]
        cols += [f"lam_{i + 1}" for i in range(p)]
        cols += ["c", "s"]
    return cols


def write_trajectory_csv(log: TrajectoryLog, path) -> None:
    """Write the run log as CSV with 12 significant digits and LF
    newlines; columns follow csv_header."""
    blocks = [log.t[:, None], log.y, log.ystar, log.err[:, None]]
    if log.u is not None:
        blocks.append(log.u)
    if log.f_vals is not None:
        blocks += [log.f_vals, log.lam, log.c[:, None], log.s[:, None]]
    data = np.hstack(blocks)
    with open(path, "w", newline="\n") as fh:
        np.savetxt(
            fh,
            data,
            fmt="%.11e",
            delimiter=",",
            newline="\n",
            header=",".join(csv_header(log)),
            comments="",
        )


def read_trajectory_csv(path) -> SimpleNamespace:
    """Parse an emitted CSV back into named column arrays (columns
    attribute holds the header order)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: {len(header)} header fields but {data.shape[1]} columns")
    by_name = {name: data[:, j] for j, name in enumerate(header)}

    def gather(prefix):
        names = [n for n in header if n.startswith(prefix)]
        return np.column_stack([by_name[n] for n in names]) if names else None

    return SimpleNamespace(
        columns=header,
        t=by_name["t"],
        y=gather("y_"),
        ystar=gather("ystar_"),
        err=by_name["err"],
        u=gather("u_"),
        f_vals=gather("f_"),
        lam=gather("lam_"),
        c=by_name.get("c"),
        s=by_name.get("s"),
    )


# --- plots ---------------------------------------------------------------


def _write_plots(log: TrajectoryLog, scenario: Scenario, out: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    m = log.y.shape[1]
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    for j in range(0, m, 2):
        label = f"robot {j // 2 + 1}" if m > 2 else "robot"
        ax.plot(log.y[:, j], log.y[:, j + 1], label=label)
        ax.plot(log.y[0, j], log.y[0, j + 1], "o", color="black", ms=4)
    if scenario.target_fn is not None:
        targets = np.array([scenario.target_fn(t) for t in log.t])
        for j in range(0, m, 2):
            ax.plot(targets[:, j], targets[:, j + 1], "--", alpha=0.7,
                    label=f"target {j // 2 + 1}" if m > 2 else "target")
    for ob in scenario.obstacles:
        ax.add_patch(plt.Circle(ob.center, ob.radius, color="gray", alpha=0.6))
        ax.add_patch(
            plt.Circle(ob.center, ob.radius + scenario.robot_radius, fill=False,
                       linestyle=":", color="gray")
        )
    ax.set_xlabel("y_1")
    ax.set_ylabel("y_2")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    fig.savefig(out / "trajectory.svg")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    positive = log.err > 0
    ax.semilogy(log.t[positive], log.err[positive])
    ax.set_xlabel("t")
    ax.set_ylabel("distance to optimum")
    fig.savefig(out / "error.svg")
    plt.close(fig)

    if log.f_vals is not None:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for i in range(log.f_vals.shape[1]):
            ax.plot(log.t, log.f_vals[:, i], label=f"f_{i + 1}")
        ax.plot(log.t, log.s, "--", color="black", label="slack s(t)")
        ax.axhline(0.0, color="gray", lw=0.8)
        ax.set_xlabel("t")
        ax.set_ylabel("constraint value")
        ax.legend(loc="best", fontsize=8)
        fig.savefig(out / "constraints.svg")
        plt.close(fig)


# --- subcommands ---------------------------------------------------------


def _summary_lines(log: TrajectoryLog, scenario: Scenario, runtime: float) -> List[str]:
    lines = [
        f"scenario = {scenario.name}",
        f"mode = {scenario.mode}",
        f"alpha = {log.alpha:.6g}",
        f"samples = {log.t.size}",
        f"final_err = {log.err[-1]:.6g}",
    ]
    try:
        fit = fit_decay_rate(log)
        lines.append(f"fitted_rate = {fit.rate:.6g}")
        verdict = "PASS" if fit.rate >= log.alpha - 0.05 else "FAIL"
        lines.append(f"rate_verdict = {verdict} (rate >= alpha - 0.05)")
    except InsufficientSamples:
        lines.append("fitted_rate = nan")
        lines.append("rate_verdict = SKIP (too few usable samples)")
    if log.f_vals is not None:
        lines.append(f"max_constraint_value = {float(log.f_vals.max()):.6g}")
    if log.plant_max_dev is not None:
        lines.append(f"plant_max_deviation = {log.plant_max_dev:.6g}")
    lines.append(f"runtime_s = {runtime:.3f}")
    return lines


def _simulate_one(config_path: str, out_dir: str, plot: bool) -> Tuple[int, str]:
    try:
        cfg = load_config(config_path)
        scenario, run_cfg, meta = materialize_config(cfg)
    except OSError as exc:
        return 1, f"{config_path}: {exc}"
    except ConfigError as exc:
        return 1, f"{config_path}: {exc}"
    out = Path(out_dir if out_dir is not None else (meta["out"] or f"{Path(config_path).stem}_out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
        started = time.perf_counter()
        log = run_closed_loop(scenario, run_cfg)
        runtime = time.perf_counter() - started
        write_trajectory_csv(log, out / "trajectory.csv")
        (out / "summary.txt").write_text(
            "\n".join(_summary_lines(log, scenario, runtime)) + "\n"
        )
        if plot or meta["plot"]:
            _write_plots(log, scenario, out)
    except FlatoptError as exc:
        return 2, f"{config_path}: simulation failed ({type(exc).__name__}): {exc}"
    except OSError as exc:
        return 2, f"{config_path}: output failed: {exc}"
    return 0, f"{config_path}: wrote {out / 'trajectory.csv'}"


def _flatness_roundtrip(model, pose, speed, cfg: RunConfig) -> Tuple[float, float]:
    """Drive the plant with inputs from an analytic arc jet and measure
    the final output deviation; returns (deviation, allowance)."""
    t1 = 5.0
    if model.name == "integrator":
        y0 = np.asarray(pose, dtype=float)
        w = np.full(y0.shape, 0.3)

        def jet_at(t):
            return (y0 + w * t, w)

    else:
        x0 = np.asarray(pose, dtype=float)
        radius, s = 1.0, max(speed, 0.5)
        omega = s / radius
        center = x0[:2] + radius * np.array([-math.sin(x0[2]), math.cos(x0[2])])

        def jet_at(t):
            ang = omega * t + x0[2]
            pos = center + radius * np.array([math.sin(ang), -math.cos(ang)])
            vel = s * np.array([math.cos(ang), math.sin(ang)])
            acc = s * omega * np.array([-math.sin(ang), math.cos(ang)])
            return (pos, vel, acc)

    x_init = state_from_jet(model, jet_at(0.0))
    x_final = integrate_ode(
        lambda t, x: plant_rhs(model, x, input_from_jet(model, jet_at(t), t)),
        x_init,
        (0.0, t1),
        cfg.integrator,
    )
    y_ref = jet_at(t1)[0]
    deviation = float(np.linalg.norm(output_from_state(model, x_final) - y_ref))
    allowance = 10.0 * (
        cfg.integrator.abs_tol
        + cfg.integrator.rel_tol * (1.0 + float(np.linalg.norm(y_ref)))
    )
    return deviation, allowance


def _cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
        scenario, run_cfg, meta = materialize_config(cfg)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    rng = np.random.default_rng(meta["seed"])
    ok = True
    y0 = scenario.initial_jet.values[0]
    points = [
        (y0 + 0.05 * rng.standard_normal(y0.size), float(rng.uniform(0.0, run_cfg.t_final)))
        for _ in range(8)
    ]

    def check(label, obj, pts, h):
        nonlocal ok
        try:
            report = validate_problem(obj, pts, tol=1e-4, h=h)
            worst = max(report.values()) if report else 0.0
            print(f"callback check ({label}): PASS (max rel err {worst:.3g})")
        except FlatoptError as exc:
            ok = False
            print(f"callback check ({label}): FAIL ({exc})")

    check("objective", scenario.objective, points, 1e-6)
    if scenario.mode == "inequality":
        ineq = (
            scenario.inequality_fn(y0)
            if scenario.inequality_fn is not None
            else scenario.inequality
        )
        sched = run_cfg.barrier if run_cfg.barrier is not None else BarrierSchedule()
        surrogate = barrier_objective(scenario.objective, ineq, sched)
        near = [(y0 + 0.01 * rng.standard_normal(y0.size), float(rng.uniform(0.0, 1.0)))
                for _ in range(8)]
        check("barrier surrogate", surrogate, near, 1e-7)

    off = 0
    for idx, model in enumerate(scenario.models, start=1):
        if model.name == "wmr":
            vel = scenario.initial_jet.values[1][off:off + 2]
            pose = np.concatenate(
                [y0[off:off + 2], [math.atan2(vel[1], vel[0])]]
            )
            speed = float(np.linalg.norm(vel))
        else:
            pose = y0[off:off + model.output_dim]
            speed = 0.5
        try:
            deviation, allowance = _flatness_roundtrip(model, pose, speed, run_cfg)
            if deviation <= allowance:
                print(
                    f"flatness round-trip ({model.name} #{idx}): PASS "
                    f"(deviation {deviation:.3g} <= {allowance:.3g})"
                )
            else:
                ok = False
                print(
                    f"flatness round-trip ({model.name} #{idx}): FAIL "
                    f"(deviation {deviation:.3g} > {allowance:.3g})"
                )
        except FlatoptError as exc:
            ok = False
            print(f"flatness round-trip ({model.name} #{idx}): FAIL ({exc})")
        off += model.output_dim
    return 0 if ok else 2


def _cmd_report(args) -> int:
    try:
        table = read_trajectory_csv(args.log)
    except (OSError, ValueError) as exc:
        print(f"cannot read log: {exc}", file=sys.stderr)
        return 1
    alpha = args.alpha
    if alpha is None and args.config is not None:
        try:
            _, run_cfg, _ = materialize_config(load_config(args.config))
            alpha = decay_rate(run_cfg.target)
        except (OSError, ConfigError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 1
    if alpha is None:
        alpha = 1.0

    print(f"samples = {table.t.size}")
    print(f"final error = {table.err[-1]:.6g}")
    shim = SimpleNamespace(t=table.t, err=table.err)
    try:
        fit = fit_decay_rate(shim)
    except InsufficientSamples as exc:
        print(f"fitted decay rate = nan ({exc})")
        print("rate verdict: SKIP")
        return 0
    print(f"fitted decay rate = {fit.rate:.6g}")
    print(f"alpha = {alpha:.6g}")
    verdict = "PASS" if fit.rate >= alpha - 0.05 else "FAIL"
    print(f"rate verdict: {verdict} (rate >= alpha - 0.05)")

    t_start = table.t[-1] - 0.5 * (table.t[-1] - table.t[0])
    window = (table.t >= t_start) & (table.err > 1e-13)
    envelope = 1.1 * math.exp(fit.log_intercept) * np.exp(-fit.rate * table.t[window])
    bound_ok = bool(np.all(table.err[window] <= envelope))
    print(f"bound verdict: {'PASS' if bound_ok else 'FAIL'} "
          "(err <= 1.1 C e^{-rate t} over the trailing half)")

    if table.f_vals is not None:
        print(f"max constraint value = {float(table.f_vals.max()):.6g}")
    return 0


def _cmd_simulate(args) -> int:
    configs = args.config
    multi = len(configs) > 1

    def out_for(path):
        if args.out is None:
            return None
        return str(Path(args.out) / Path(path).stem) if multi else args.out

    tasks = [(path, out_for(path), args.plot) for path in configs]
    if args.jobs > 1 and multi:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_one, *zip(*tasks)))
    else:
        results = [_simulate_one(*task) for task in tasks]
    code = 0
    for run_code, message in results:
        print(message, file=sys.stderr if run_code else sys.stdout)
        code = max(code, run_code)
    return code


def run_cli(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="flatopt",
        description="Steer differentially flat systems to the minimizers "
        "of time-varying convex programs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run scenarios and write logs")
    p_sim.add_argument("--config", action="append", required=True,
                       help="config file (repeatable)")
    p_sim.add_argument("--out", default=None, help="output directory")
    p_sim.add_argument("--plot", action="store_true", help="write SVG plots")
    p_sim.add_argument("--jobs", type=int, default=1,
                       help="run configs in parallel with this many processes")
    p_sim.set_defaults(func=_cmd_simulate)

    p_val = sub.add_parser("validate", help="check callbacks and flatness only")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)

    p_rep = sub.add_parser("report", help="verdicts on an emitted CSV log")
    p_rep.add_argument("log")
    p_rep.add_argument("--alpha", type=float, default=None,
                       help="guaranteed decay rate to compare against")
    p_rep.add_argument("--config", default=None,
                       help="derive alpha from this config instead")
    p_rep.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
