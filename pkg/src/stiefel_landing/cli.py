"""Benchmark harness: configure solvers, run instances, emit traces and reports.

Subcommands
-----------
solve
    Generate an instance, warm-start with the first-order method, run the
    chosen variant, and write ``trace.csv`` + ``summary.json`` (plus a
    convergence figure) into the output directory.
order-check
    Compute a converged reference, perturb it along random directions over a
    grid of error magnitudes, take a single second-order step per point, and
    report the fitted one-step convergence slopes (including the naive
    Newton-landing contrast).
compare
    Run several variants on one shared instance and produce side-by-side
    traces plus a merged summary.

Exit codes: 0 converged / completed, 1 config error, 2 iteration budget
exhausted, 3 inner-solver failure.  A flat JSON file can preset any option;
command-line flags override it.  The environment variable
``STIEFEL_LANDING_OUTDIR`` overrides the output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields as dataclass_fields, replace

import numpy as np

from . import __version__
from .driver import (
    SolverConfig,
    Status,
    Variant,
    first_order_landing_solve,
    inner_noise_floor,
    safe_step_size,
    sol_step,
    solve,
)
from .errors import ConfigError, StiefelLandingError
from .fields import apply_riemannian_hessian, riemannian_gradient, with_call_counts
from .geometry import AmbientPoint, TangentVector
from .krylov import TangentOperator, forcing_tolerance, solve_g_symmetric
from .newton_schulz import ns_update
from .problems import (
    haar_stiefel,
    ica_problem,
    instance_digest,
    pca_problem,
    procrustes_problem,
    synth_ica,
    synth_pca,
    synth_procrustes,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MAX_ITER = 2
EXIT_INNER_FAILURE = 3

ENV_OUTDIR = "STIEFEL_LANDING_OUTDIR"

CSV_HEADER = "iter,time_s,f_value,grad_norm,feas,step_size,inner_iters,inner_residual"

PROBLEM_KINDS = ("procrustes", "pca", "ica")

# Desk-scale instance defaults per problem kind, applied when a field was
# neither preset in the config file nor passed as a flag.
KIND_DEFAULTS = {
    "procrustes": {"n": 200, "d": 20, "sigma": 0.02, "warm_target": 1e-2},
    "pca": {"N": 600, "n": 120, "p": 10, "sigma": 0.1, "warm_target": 1e-2},
    "ica": {"N": 6000, "d": 12, "warm_target": 1e-3},
}

DEFAULT_ORDER_GRID = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)


@dataclass
class RunConfig:
    """Flat run description; serializable as a single JSON object."""

    problem: str = "procrustes"
    n: int = None
    d: int = None
    N: int = None
    p: int = None
    sigma: float = None
    seed: int = 1
    variant: str = "sol"
    eps: float = 0.5
    lam: float = 0.5
    tol: float = 1e-12
    mxit: int = 200
    zeta_max: float = 0.1
    theta: float = 1.0
    first_order_step: float = 0.1
    warm_target: float = None
    warm_mxit: int = 50000
    stopping: str = "grad-feas"
    out_dir: str = "runs"
    label: str = ""
    figures: bool = True

    def solver_config(self, **overrides) -> SolverConfig:
        kw = dict(
            variant=Variant(self.variant),
            eps=self.eps,
            lam=self.lam,
            tol=self.tol,
            mxit=self.mxit,
            zeta_max=self.zeta_max,
            theta=self.theta,
            first_order_step=self.first_order_step,
            stopping=self.stopping,
        )
        kw.update(overrides)
        return SolverConfig(**kw)

    def instance_fields(self) -> dict:
        return {
            k: getattr(self, k)
            for k in ("problem", "n", "d", "N", "p", "sigma", "seed")
        }


_CONFIG_KEYS = {f.name for f in dataclass_fields(RunConfig)}
# JSON spelling "lambda" is accepted for the normal-weight field.
_KEY_ALIASES = {"lambda": "lam"}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    out = {}
    for key, value in raw.items():
        name = _KEY_ALIASES.get(key, key)
        if name not in _CONFIG_KEYS:
            raise ConfigError(f"{path}: unknown key {key!r}")
        out[name] = value
    return out


def resolve_config(file_values: dict, flag_values: dict) -> RunConfig:
    """Defaults < config file < explicit flags, then per-problem fallbacks."""
    merged = dict(file_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    try:
        cfg = RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.problem not in PROBLEM_KINDS:
        raise ConfigError(f"problem must be one of {PROBLEM_KINDS}, got {cfg.problem!r}")
    for key, value in KIND_DEFAULTS[cfg.problem].items():
        if getattr(cfg, key) is None:
            setattr(cfg, key, value)
    try:
        Variant(cfg.variant)
    except ValueError:
        raise ConfigError(
            f"variant must be one of {[v.value for v in Variant]}, got {cfg.variant!r}"
        ) from None
    try:
        cfg.solver_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.warm_target is not None and cfg.warm_target <= 0:
        raise ConfigError(f"warm_target must be positive, got {cfg.warm_target}")
    if cfg.warm_mxit < 0:
        raise ConfigError(f"warm_mxit must be nonnegative, got {cfg.warm_mxit}")
    return cfg


def build_instance(cfg: RunConfig):
    """Generate the problem instance; returns (problem, counts, info dict)."""
    try:
        if cfg.problem == "procrustes":
            _require(cfg, "n", "d", "sigma")
            data, _ = synth_procrustes(cfg.n, cfg.d, cfg.sigma, cfg.seed)
            prob = procrustes_problem(data)
            digest = instance_digest(data.A, data.B)
            dims = {"n": cfg.n, "d": cfg.d, "sigma": cfg.sigma}
        elif cfg.problem == "pca":
            _require(cfg, "N", "n", "p", "sigma")
            data = synth_pca(cfg.N, cfg.n, cfg.p, cfg.sigma, cfg.seed)
            prob = pca_problem(data)
            digest = instance_digest(data.A)
            dims = {"N": cfg.N, "n": cfg.n, "p": cfg.p, "sigma": cfg.sigma}
        else:
            _require(cfg, "N", "d")
            data = synth_ica(cfg.N, cfg.d, cfg.seed)
            prob = ica_problem(data)
            digest = instance_digest(data.W)
            dims = {"N": cfg.N, "d": cfg.d}
    except ValueError as exc:
        raise ConfigError(f"{cfg.problem} instance: {exc}") from None
    counted, counts = with_call_counts(prob)
    info = {"kind": cfg.problem, "seed": cfg.seed, "digest": digest, **dims}
    return counted, counts, info


def _require(cfg, *names):
    for name in names:
        if getattr(cfg, name) is None:
            raise ConfigError(f"problem {cfg.problem!r} requires field {name!r}")


def initial_point(cfg: RunConfig, prob) -> AmbientPoint:
    rng = np.random.default_rng([cfg.seed, 7919])
    return AmbientPoint(haar_stiefel(prob.n, prob.p, rng))


def warm_start(cfg: RunConfig, prob, x_init):
    warm_cfg = cfg.solver_config(variant=Variant.FIRST_ORDER, mxit=cfg.warm_mxit)
    return first_order_landing_solve(prob, x_init, warm_cfg, cfg.warm_target)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_trace_csv(path, traces) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for t in traces:
            fh.write(
                ",".join(
                    [
                        str(t.iter),
                        _fmt(t.wall_time_s),
                        _fmt(t.f_value),
                        _fmt(t.grad_norm),
                        _fmt(t.feas),
                        _fmt(t.step_size),
                        str(t.inner_iters),
                        _fmt(t.inner_residual),
                    ]
                )
                + "\n"
            )


def _config_echo(cfg: RunConfig) -> dict:
    echo = {}
    for f in dataclass_fields(RunConfig):
        key = "lambda" if f.name == "lam" else f.name
        echo[key] = getattr(cfg, f.name)
    return echo


def _summarize_run(cfg, result, warm, counts, warm_counts, instance_info) -> dict:
    last = result.traces[-1]
    return {
        "library_version": __version__,
        "variant": cfg.variant,
        "status": result.status.value,
        "iterations": len(result.traces) - 1,
        "final": {
            "f_value": last.f_value,
            "grad_norm": last.grad_norm,
            "feas": last.feas,
            "stopping_metric": last.grad_norm + last.feas,
        },
        "totals": {
            "wall_time_s": last.wall_time_s,
            "value_calls": counts["value"],
            "grad_calls": counts["grad"],
            "hvp_calls": counts["hvp"],
        },
        "fallback_iterations": [t.iter for t in result.traces if t.fallback],
        "warm_start": {
            "status": warm.status.value,
            "iterations": len(warm.traces) - 1,
            "grad_norm": warm.traces[-1].grad_norm,
            "feas": warm.traces[-1].feas,
            "target": cfg.warm_target,
            "value_calls": warm_counts["value"],
            "grad_calls": warm_counts["grad"],
            "hvp_calls": warm_counts["hvp"],
        },
        "instance": instance_info,
        "config": _config_echo(cfg),
    }


def _out_dir(cfg: RunConfig, default_label: str):
    base = os.environ.get(ENV_OUTDIR, cfg.out_dir)
    label = cfg.label or default_label
    path = os.path.join(base, label)
    os.makedirs(path, exist_ok=True)
    return path


def _status_exit(status: Status) -> int:
    return {
        Status.CONVERGED: EXIT_OK,
        Status.MAX_ITER: EXIT_MAX_ITER,
        Status.INNER_FAILURE: EXIT_INNER_FAILURE,
    }[status]


def cmd_solve(cfg: RunConfig) -> int:
    prob, counts, info = build_instance(cfg)
    x_init = initial_point(cfg, prob)
    warm = warm_start(cfg, prob, x_init)
    warm_counts = dict(counts)
    for key in counts:
        counts[key] = 0
    result = solve(prob, warm.X_final, cfg.solver_config())

    out = _out_dir(cfg, f"{cfg.problem}-{cfg.variant}-seed{cfg.seed}")
    write_trace_csv(os.path.join(out, "trace.csv"), result.traces)
    summary = _summarize_run(cfg, result, warm, counts, warm_counts, info)
    summary["exit_code"] = _status_exit(result.status)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    if cfg.figures:
        from .plotting import plot_traces

        plot_traces(
            {cfg.variant: result.traces},
            os.path.join(out, "convergence.png"),
            title=f"{cfg.problem} seed {cfg.seed}",
        )
    last = result.traces[-1]
    print(
        f"{cfg.problem}/{cfg.variant}: {result.status.value} after "
        f"{len(result.traces) - 1} iterations "
        f"(grad {last.grad_norm:.3e}, feas {last.feas:.3e}); output in {out}"
    )
    return summary["exit_code"]


def one_step_error_map(prob, xstar: AmbientPoint, cfg: RunConfig, grid, rng):
    """(e0, e1) pairs for one second-order step and for the naive
    Newton-landing contrast, from perturbations of a converged point."""
    n, p = xstar.n, xstar.p
    solver_cfg = cfg.solver_config()
    if solver_cfg.variant is Variant.FIRST_ORDER:
        solver_cfg = replace(solver_cfg, variant=Variant.SOL)
    pairs = {"sol" if solver_cfg.variant is Variant.SOL else "sol-sym": [], "rn": []}
    main_key = next(iter(pairs))
    for e0 in grid:
        if e0 < 0:
            raise ConfigError(f"error grid entries must be nonnegative, got {e0}")
        if e0 == 0.0:
            point = xstar
        else:
            point = None
            for _ in range(10):
                direction = rng.standard_normal((n, p))
                direction /= np.linalg.norm(direction)
                cand = AmbientPoint(xstar.X + e0 * direction)
                if cand.feas_norm <= cfg.eps:
                    point = cand
                    break
            if point is None:
                raise StiefelLandingError(
                    f"could not draw a safe perturbation of size {e0}"
                )
        stepped, _ = sol_step(prob, point, solver_cfg)
        pairs[main_key].append((e0, float(np.linalg.norm(stepped.X - xstar.X))))

        # Naive contrast: full-Hessian tangent system with the gradient-only
        # right-hand side, plus the same normal update, unit step.
        g = prob.euclid_grad(point.X)
        t1 = riemannian_gradient(prob, point, grad=g)
        b = TangentVector(-t1.V, point)
        op = TangentOperator(
            point, lambda V, pt=point: apply_riemannian_hessian(prob, pt, V, grad=g).V
        )
        tol_g = max(
            forcing_tolerance(b.norm, cfg.zeta_max, cfg.theta),
            inner_noise_floor(point, g),
        ) / np.sqrt(2.0 * (1.0 + cfg.eps))
        t_rn, _ = solve_g_symmetric(op, b, tol_g)
        naive = point.X + t_rn.V + ns_update(point, 1).V
        pairs["rn"].append((e0, float(np.linalg.norm(naive - xstar.X))))
    return pairs


def fit_slope(pairs) -> float:
    pts = [(e0, e1) for e0, e1 in pairs if e0 > 0 and e1 > 0]
    if len(pts) < 2:
        return float("nan")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def cmd_order_check(cfg: RunConfig, grid) -> int:
    prob, _counts, info = build_instance(cfg)
    x_init = initial_point(cfg, prob)
    warm = warm_start(cfg, prob, x_init)
    ref_cfg = cfg.solver_config(tol=min(cfg.tol, 1e-12))
    if ref_cfg.variant is Variant.FIRST_ORDER:
        ref_cfg = replace(ref_cfg, variant=Variant.SOL)
    reference = solve(prob, warm.X_final, ref_cfg)
    if reference.status is not Status.CONVERGED:
        print(
            f"reference solve did not converge (status {reference.status.value})",
            file=sys.stderr,
        )
        return _status_exit(reference.status)

    rng = np.random.default_rng([cfg.seed, 104729])
    pairs = one_step_error_map(prob, reference.X_final, cfg, grid, rng)
    slopes = {name: fit_slope(p) for name, p in pairs.items()}

    out = _out_dir(cfg, f"order-{cfg.problem}-{cfg.variant}-seed{cfg.seed}")
    with open(os.path.join(out, "order_map.csv"), "w") as fh:
        fh.write("method,e0,e1\n")
        for name, pts in pairs.items():
            for e0, e1 in pts:
                fh.write(f"{name},{_fmt(e0)},{_fmt(e1)}\n")
    summary = {
        "library_version": __version__,
        "slopes": slopes,
        "grid": list(grid),
        "reference": {
            "status": reference.status.value,
            "iterations": len(reference.traces) - 1,
            "grad_norm": reference.traces[-1].grad_norm,
            "feas": reference.traces[-1].feas,
        },
        "instance": info,
        "config": _config_echo(cfg),
    }
    with open(os.path.join(out, "order_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    if cfg.figures:
        from .plotting import plot_order_map

        plot_order_map(
            pairs, slopes, os.path.join(out, "order_map.png"), title=f"{cfg.problem} one-step map"
        )
    for name, slope in slopes.items():
        print(f"{name}: fitted one-step slope {slope:.3f}")
    print(f"output in {out}")
    return EXIT_OK


def compare(configs: list[RunConfig]) -> int:
    """Run several solver variants on one shared instance."""
    if not configs:
        raise ConfigError("compare needs at least one configuration")
    head = configs[0]
    for other in configs[1:]:
        if other.instance_fields() != head.instance_fields():
            raise ConfigError(
                "compare requires all configurations to share the same instance "
                f"(got {head.instance_fields()} vs {other.instance_fields()})"
            )

    prob, counts, info = build_instance(head)
    x_init = initial_point(head, prob)
    warm = warm_start(head, prob, x_init)
    warm_counts = dict(counts)

    out = _out_dir(head, f"compare-{head.problem}-seed{head.seed}")
    merged = {
        "library_version": __version__,
        "instance": info,
        "warm_start": {
            "status": warm.status.value,
            "iterations": len(warm.traces) - 1,
            "grad_norm": warm.traces[-1].grad_norm,
            "feas": warm.traces[-1].feas,
            "target": head.warm_target,
            "value_calls": warm_counts["value"],
            "grad_calls": warm_counts["grad"],
            "hvp_calls": warm_counts["hvp"],
        },
        "variants": {},
    }
    all_traces = {}
    for cfg in configs:
        for key in counts:
            counts[key] = 0
        result = solve(prob, warm.X_final, cfg.solver_config())
        name = cfg.variant
        write_trace_csv(os.path.join(out, f"trace_{name}.csv"), result.traces)
        last = result.traces[-1]
        merged["variants"][name] = {
            "status": result.status.value,
            "iterations": len(result.traces) - 1,
            "final": {
                "f_value": last.f_value,
                "grad_norm": last.grad_norm,
                "feas": last.feas,
                "stopping_metric": last.grad_norm + last.feas,
            },
            "totals": {
                "wall_time_s": last.wall_time_s,
                "value_calls": counts["value"],
                "grad_calls": counts["grad"],
                "hvp_calls": counts["hvp"],
            },
            "fallback_iterations": [t.iter for t in result.traces if t.fallback],
            "config": _config_echo(cfg),
        }
        all_traces[name] = result.traces
        print(
            f"{name}: {result.status.value} after {len(result.traces) - 1} iterations "
            f"(grad {last.grad_norm:.3e}, feas {last.feas:.3e})"
        )
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(merged, fh, indent=2)
    if head.figures:
        from .plotting import plot_traces

        plot_traces(
            all_traces,
            os.path.join(out, "compare.png"),
            title=f"{head.problem} seed {head.seed}",
        )
    print(f"output in {out}")
    return EXIT_OK


def _add_common_options(parser):
    parser.add_argument("--config", help="flat JSON file with preset options")
    parser.add_argument("--problem", choices=PROBLEM_KINDS)
    parser.add_argument("--n", type=int, help="samples (procrustes) / features (pca)")
    parser.add_argument("--d", type=int, help="frame dimension (procrustes, ica)")
    parser.add_argument("--N", type=int, help="sample count (pca, ica)")
    parser.add_argument("--p", type=int, help="target components (pca)")
    parser.add_argument("--sigma", type=float, help="noise level of the generator")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--eps", type=float, help="safe-region radius in (0,1)")
    parser.add_argument("--lambda", dest="lam", type=float, help="first-order normal weight")
    parser.add_argument("--tol", type=float, help="stopping tolerance")
    parser.add_argument("--mxit", type=int, help="maximum outer iterations")
    parser.add_argument("--zeta-max", dest="zeta_max", type=float)
    parser.add_argument("--theta", type=float, help="forcing exponent")
    parser.add_argument("--first-order-step", dest="first_order_step", type=float)
    parser.add_argument("--warm-target", dest="warm_target", type=float)
    parser.add_argument("--warm-mxit", dest="warm_mxit", type=int)
    parser.add_argument("--stopping", choices=["grad-feas", "grad-normal"])
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--label", help="output subdirectory name")
    parser.add_argument(
        "--figures",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="render figures next to the CSV output",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stiefel-landing",
        description="Second-order landing benchmark harness for orthogonality-constrained problems",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one solver on one instance")
    _add_common_options(p_solve)
    p_solve.add_argument("--variant", choices=[v.value for v in Variant])

    p_order = sub.add_parser("order-check", help="one-step convergence-order map")
    _add_common_options(p_order)
    p_order.add_argument("--variant", choices=[v.value for v in Variant])
    p_order.add_argument(
        "--error-grid",
        help="comma-separated perturbation sizes (default "
        + ",".join(str(g) for g in DEFAULT_ORDER_GRID)
        + ")",
    )

    p_cmp = sub.add_parser("compare", help="run several variants on a shared instance")
    _add_common_options(p_cmp)
    p_cmp.add_argument(
        "--variants",
        default="sol,sol-sym,first-order",
        help="comma-separated solver variants",
    )
    return parser


def _flag_values(args) -> dict:
    skip = {"command", "config", "variants", "error_grid"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_values = load_config(args.config) if args.config else {}
        if args.command == "solve":
            cfg = resolve_config(file_values, _flag_values(args))
            return cmd_solve(cfg)
        if args.command == "order-check":
            cfg = resolve_config(file_values, _flag_values(args))
            if args.error_grid:
                try:
                    grid = [float(tok) for tok in args.error_grid.split(",") if tok]
                except ValueError as exc:
                    raise ConfigError(f"error-grid: {exc}") from None
            else:
                grid = list(DEFAULT_ORDER_GRID)
            return cmd_order_check(cfg, grid)
        if args.command == "compare":
            base = resolve_config(file_values, _flag_values(args))
            names = [tok.strip() for tok in args.variants.split(",") if tok.strip()]
            if not names:
                raise ConfigError("compare: --variants must list at least one variant")
            for name in names:
                try:
                    Variant(name)
                except ValueError:
                    raise ConfigError(f"unknown variant {name!r}") from None
            return compare([replace(base, variant=name) for name in names])
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StiefelLandingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
