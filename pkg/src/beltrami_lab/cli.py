"""Command-line entry point: ``beltrami-lab <command> [options]``.

Exit codes: 0 success, 1 failed verification checks, 2 usage or
configuration error, 3 numerical failure, 4 infeasible optimization targets.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import ConfigError, RunConfig, load_config
from .diagnostics import emit_csv, energy, read_column
from .dynamics import (
    BlowupDetected,
    ExactSolution,
    PhysicalParams,
    SimState,
    StabilityBoundViolated,
    fit_decay_rate,
    run,
    stability_dt,
)
from .fields import EmptyShell, Shell, abc_flow, random_double_beltrami, shell_field
from .spectral import GridSpec, SpectralError, SpectralVectorField, curl_hat, inverse_transform
from .variational import (
    InfeasibleTargets,
    NotConverged,
    minimize_fixed_omega,
    minimize_full,
    minimize_woltjer,
)
from . import verify as verify_mod

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4
AUTO_DT_SAFETY = 0.9


class UsageError(Exception):
    pass


def _peak(f: SpectralVectorField) -> float:
    return float(np.max(np.linalg.norm(inverse_transform(f), axis=0)))


def _params(cfg: RunConfig) -> PhysicalParams:
    return PhysicalParams(cfg["physics.nu"], cfg["physics.eta"], cfg["physics.hall"])


def build_initial(cfg: RunConfig) -> tuple[SimState, dict]:
    """Initial state per ``init.kind`` plus derived facts for reporting.

    Raises:
        UsageError: inadmissible shells or an unreadable checkpoint.
    """
    params = _params(cfg)
    kind = cfg["init.kind"]
    info: dict = {}
    try:
        if kind == "checkpoint":
            if not cfg["init.path"]:
                raise UsageError("init.kind = checkpoint needs init.path")
            st = checkpoint.read(cfg["init.path"])
            if st.grid.n != cfg["grid.n"]:
                raise UsageError(f"checkpoint has n={st.grid.n} but grid.n={cfg['grid.n']}")
            return SimState(st.t, st.u, st.B, params), info
        grid = GridSpec(cfg["grid.n"])
        zero = SpectralVectorField.zeros(grid)
        if kind == "double_beltrami":
            db = random_double_beltrami(
                grid,
                Shell(cfg["init.n1"], cfg["init.s1"]),
                Shell(cfg["init.n2"], cfg["init.s2"]),
                seed=cfg["init.seed"],
                amp1=cfg["init.amp1"],
                amp2=cfg["init.amp2"],
            )
            info = {
                "alpha": db.spec.alpha,
                "beta": db.spec.beta,
                "lambda1": db.spec.lambda1,
                "lambda2": db.spec.lambda2,
                "state": db,
            }
            return SimState(0.0, db.u, db.B, params), info
        if kind == "random":
            u, B = verify_mod.smooth_state(grid, cfg["init.seed"], cfg["init.amplitude"])
            return SimState(0.0, u, B, params), info
        if kind == "abc":
            f = abc_flow(cfg["init.A"], cfg["init.B"], cfg["init.C"], cfg["init.lambda"], grid)
        else:
            f = shell_field(cfg["init.shell"], cfg["init.sign"], grid, seed=cfg["init.seed"])
            f = f * (cfg["init.amplitude"] / _peak(f))
        target = cfg["init.field"]
        u = f if target in ("u", "both") else zero
        B = f if target in ("B", "both") else zero
        return SimState(0.0, u, B, params), info
    except (EmptyShell, SpectralError, checkpoint.CheckpointError, OSError) as exc:
        raise UsageError(str(exc)) from None


def apply_perturbation(cfg: RunConfig, state: SimState) -> SimState:
    if not cfg["perturbation.enabled"]:
        return state
    v, b = verify_mod.random_perturbation(state.grid, cfg["perturbation.seed"])
    scale = cfg["perturbation.amplitude"] * math.sqrt(energy(state.u, state.B)[2])
    return SimState(state.t, state.u + v * scale, state.B + b * scale, state.params)


def _out(base: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else base / p


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["init.seed"] = args.seed
        cfg["perturbation.seed"] = args.seed
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# commands


def cmd_init(args) -> int:
    cfg = _load(args)
    state, info = build_initial(cfg)
    base = Path(args.output)
    base.mkdir(parents=True, exist_ok=True)
    path = _out(base, cfg["output.checkpoint_path"])
    checkpoint.write(path, state)
    eu, eb, e = energy(state.u, state.B)
    print(f"wrote {path}")
    print(f"n = {state.grid.n}")
    print(f"energy = {e!r} (u: {eu!r}, B: {eb!r})")
    for key in ("alpha", "beta", "lambda1", "lambda2"):
        if key in info:
            print(f"{key} = {info[key]!r}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    state, info = build_initial(cfg)
    state = apply_perturbation(cfg, state)
    if cfg["time.dt"] == "auto":
        bound = stability_dt(state)
        if not math.isfinite(bound):
            bound = 1e-2
        dt = AUTO_DT_SAFETY * bound
        source = "auto"
    else:
        dt = cfg["time.dt"]
        source = "fixed"
    cfg["time.dt"] = dt
    comments = cfg.echo() + [f"time.dt_source = {source}"]
    alpha = info.get("alpha")
    beta = info.get("beta")
    if alpha is not None:
        comments += [f"derived.alpha = {alpha!r}", f"derived.beta = {beta!r}"]
    exact = None
    db = info.get("state")
    if db is not None and state.params.nu == state.params.eta:
        exact = ExactSolution.double_beltrami(db, state.params)

    base = Path(args.output)
    base.mkdir(parents=True, exist_ok=True)
    csv_path = _out(base, cfg["output.csv_path"])
    ckpt_path = _out(base, cfg["output.checkpoint_path"])
    records = []
    steps = {"n": 0}
    every = cfg["output.checkpoint_every"]

    def on_checkpoint(s: SimState):
        steps["n"] += every
        name = f"{ckpt_path.stem}_{steps['n']:08d}{ckpt_path.suffix}"
        checkpoint.write(ckpt_path.with_name(name), s)

    code = EXIT_OK
    try:
        res = run(
            state,
            cfg["time.t_end"] if cfg["time.t_end"] > state.t else state.t,
            dt,
            cfg["time.record_every"],
            alpha=alpha,
            beta=beta,
            exact=exact,
            checkpoint_every=every,
            on_checkpoint=on_checkpoint,
            on_record=lambda rec, _s: records.append(rec),
        )
        checkpoint.write(ckpt_path, res.state)
    except (BlowupDetected, StabilityBoundViolated) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    csv_path.write_bytes(emit_csv(records, comments))
    print(f"wrote {csv_path} ({len(records)} records, dt={dt!r})")
    return code


def cmd_verify(args) -> int:
    if args.suite not in verify_mod.SUITES:
        print(f"unknown suite {args.suite!r}; choose from {', '.join(verify_mod.SUITES)}", file=sys.stderr)
        return EXIT_USAGE
    overrides = {}
    if args.config is not None:
        cfg = load_config(args.config)
        cfg.validate()
        defaults = RunConfig()
        for key, name in (("grid.n", "n"), ("time.t_end", "t_end"), ("time.dt", "dt")):
            if cfg[key] != defaults[key]:
                overrides[name] = cfg[key]
        if cfg["verify.reference_nu"] is not None:
            overrides["reference_nu"] = cfg["verify.reference_nu"]
    if args.reference_nu is not None:
        overrides["reference_nu"] = args.reference_nu
    checks = verify_mod.run_suite(args.suite, overrides)
    for c in checks:
        print(c.line())
    passed = all(c.passed for c in checks)
    print(f"{args.suite}: {'PASS' if passed else 'FAIL'} ({sum(c.passed for c in checks)}/{len(checks)})")
    return EXIT_OK if passed else EXIT_CHECKS_FAILED


MINIMIZE_COLUMNS = (
    "mode",
    "energy",
    "multiplier_1",
    "multiplier_2",
    "kkt_residual",
    "constraint_residual_1",
    "constraint_residual_2",
    "iterations",
    "converged",
)


def cmd_minimize(args) -> int:
    cfg = _load(args)
    grid = GridSpec(cfg["grid.n"])
    mode = cfg["minimize.mode"]
    h1, h2 = cfg["minimize.h1"], cfg["minimize.h2"]
    seed = cfg["init.seed"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConverged)
        if mode == "woltjer":
            res = minimize_woltjer(h1, grid, seed, max_iter=cfg["minimize.max_iter"])
        elif mode == "fixed_omega":
            u = shell_field(cfg["minimize.omega_shell"], cfg["minimize.omega_sign"], grid, seed=seed)
            u = u * (cfg["minimize.omega_amplitude"] / _peak(u))
            res = minimize_fixed_omega(curl_hat(u), h1, h2, grid, seed, max_iter=cfg["minimize.max_iter"])
        else:
            res = minimize_full(h1, h2, grid, seed, max_iter=cfg["minimize.max_iter"])
    base = Path(args.output)
    base.mkdir(parents=True, exist_ok=True)
    mult = list(res.multipliers) + [float("nan")] * (2 - len(res.multipliers))
    cres = list(res.constraint_residuals) + [float("nan")] * (2 - len(res.constraint_residuals))
    row = [mode, res.energy, *mult, res.kkt_residual, *cres, res.iterations, int(res.converged)]
    text = "\n".join(
        [f"# {line}" for line in cfg.echo()]
        + [",".join(MINIMIZE_COLUMNS), ",".join(v if isinstance(v, str) else repr(v) for v in row)]
    )
    result_path = _out(base, cfg["minimize.result_path"])
    result_path.write_text(text + "\n", encoding="utf-8")
    u = res.u if (mode == "full" and res.u is not None) else SpectralVectorField.zeros(grid)
    state = SimState(0.0, u, res.B, _params(cfg))
    ckpt = _out(base, cfg["output.checkpoint_path"])
    checkpoint.write(ckpt, state, b_only=(mode != "full"))
    print(f"mode = {mode}")
    print(f"energy = {res.energy!r}")
    print(f"multipliers = {', '.join(repr(m) for m in res.multipliers)}")
    print(f"kkt_residual = {res.kkt_residual!r}")
    print(f"constraint_residuals = {', '.join(repr(c) for c in res.constraint_residuals)}")
    print(f"iterations = {res.iterations}")
    print(f"converged = {str(res.converged).lower()}")
    if not res.converged and mode != "full":
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_decay_fit(args) -> int:
    try:
        data = Path(args.csv).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {args.csv}: {exc}") from None
    try:
        t, v = read_column(data, args.column)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    window = tuple(args.window) if args.window else None
    try:
        fit = fit_decay_rate(t, v, window, kind=args.kind)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"slope = {fit.slope!r}")
    print(f"rate = {-fit.slope!r}")
    print(f"R2 = {fit.r2!r}")
    print(f"samples = {fit.samples}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beltrami-lab", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="override init.seed and perturbation.seed")
    common.add_argument("--output", metavar="DIR", default=".", help="directory for relative output paths")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("init", parents=[common], help="write an initial-data checkpoint").set_defaults(func=cmd_init)
    sub.add_parser("simulate", parents=[common], help="integrate and write CSV diagnostics").set_defaults(
        func=cmd_simulate
    )
    p = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p.add_argument("suite", help=", ".join(verify_mod.SUITES))
    p.add_argument("--reference-nu", type=float, help="viscosity used by the closed-form reference")
    p.set_defaults(func=cmd_verify)
    sub.add_parser("minimize", parents=[common], help="constrained energy minimization").set_defaults(
        func=cmd_minimize
    )
    p = sub.add_parser("decay-fit", parents=[common], help="fit a decay rate to a CSV column")
    p.add_argument("csv", help="diagnostics CSV")
    p.add_argument("--column", default="E_u")
    p.add_argument("--window", nargs=2, type=float, metavar=("T0", "T1"))
    p.add_argument("--kind", choices=("exponential", "power"), default="exponential")
    p.set_defaults(func=cmd_decay_fit)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleTargets as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BlowupDetected, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
